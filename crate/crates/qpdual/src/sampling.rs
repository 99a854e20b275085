//! Seeded random instances for tests, benches and the CLI self-test.

use crate::lattice::{ball, LatticeVector};
use crate::model::Potential;
use num_complex::Complex64;
use rand::Rng;

/// Hermitian potential supported on 0 < |n| <= range with |c0(n)| < exp(-kappa0 |n|).
pub fn random_potential<R: Rng>(
    rng: &mut R,
    nu: usize,
    range: u64,
    epsilon: f64,
    kappa0: f64,
    complex: bool,
) -> Potential {
    let mut p = Potential::new(epsilon, kappa0);
    let sites = ball(nu, range as f64, usize::MAX).expect("small ball");
    for n in sites.iter() {
        if n.is_zero() || p.c0.contains_key(n) {
            continue;
        }
        let amp = rng.gen_range(0.05..0.95) * (-kappa0 * n.norm() as f64).exp();
        let phase = if complex { rng.gen_range(0.0..std::f64::consts::TAU) } else { 0.0 };
        p = p.with_pair(n.clone(), Complex64::from_polar(amp, phase));
    }
    p
}

/// Random point of Z^nu with |n| <= r.
pub fn random_site<R: Rng>(rng: &mut R, nu: usize, r: i64) -> LatticeVector {
    loop {
        let c: Vec<i64> = (0..nu).map(|_| rng.gen_range(-r..=r)).collect();
        let n = LatticeVector(c);
        if n.norm() as i64 <= r {
            return n;
        }
    }
}
