use num_complex::Complex64;
use proptest::prelude::*;
use qpdual::dual_operator::DualOperator;
use qpdual::exec::Exec;
use qpdual::inverse::{gap_table, verify_forward, verify_inverse, InverseConfig};
use qpdual::lattice::{ball, LatticeVector};
use qpdual::model::{validate_potential, Frequency, Potential};
use qpdual::sampling::random_potential;
use qpdual::spectral::{band, SolveOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn v(c: &[i64]) -> LatticeVector {
    LatticeVector(c.to_vec())
}

fn nonzero(r: f64) -> Vec<LatticeVector> {
    ball(2, r, 100).unwrap().iter().filter(|m| !m.is_zero()).cloned().collect()
}

#[test]
fn forward_then_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pot = random_potential(&mut rng, 2, 2, 1e-4, 0.5, true);
    assert!(validate_potential(&pot).is_empty());
    let op = DualOperator::new(Frequency::golden(), pot);
    let table = gap_table(&op, &nonzero(3.0), 5.0, &SolveOptions::default(), Exec::default());
    let fwd = verify_forward(&table, &op.pot);
    assert!(fwd.all_pass() && fwd.in_regime);
    let cfg = InverseConfig { box_radius: 5.0, window: 2, ..Default::default() };
    let inv = verify_inverse(&op, &cfg, &SolveOptions::default(), Exec::default()).unwrap();
    assert!(inv.pass(), "{inv:?}");
}

#[test]
fn sequential_and_parallel_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let op = DualOperator::new(Frequency::golden(), random_potential(&mut rng, 2, 2, 1e-3, 0.5, true));
    let ks: Vec<f64> = (0..17).map(|i| 0.05 + 0.025 * i as f64).collect();
    let o = SolveOptions::default();
    let a = band(&op, &ks, |_| ball(2, 3.0, 1000), 3, &o, Exec::Sequential);
    let b = band(&op, &ks, |_| ball(2, 3.0, 1000), 3, &o, Exec::Parallel);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.energy(), y.energy());
    }
    let ms = nonzero(2.0);
    let ta = gap_table(&op, &ms, 4.0, &o, Exec::Sequential);
    let tb = gap_table(&op, &ms, 4.0, &o, Exec::Parallel);
    for (x, y) in ta.iter().zip(&tb) {
        assert_eq!(x.record, y.record);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gap_even_in_m(a in -2i64..=2, b in -2i64..=2, amp in 0.05f64..0.6, eps in 1e-5f64..1e-3) {
        prop_assume!(a != 0 || b != 0);
        let m = v(&[a, b]);
        let pot = Potential::new(eps, 0.5)
            .with_pair(v(&[0, 1]), Complex64::new(amp, 0.1 * amp))
            .with_pair(v(&[1, 0]), Complex64::new(0.5 * amp, 0.0));
        let op = DualOperator::new(Frequency::golden(), pot);
        let t = gap_table(&op, &[m.clone(), m.neg()], 4.0, &SolveOptions::default(), Exec::Sequential);
        let w0 = t[0].record.as_ref().unwrap().width;
        let w1 = t[1].record.as_ref().unwrap().width;
        prop_assert!((w0 - w1).abs() <= 1e-12);
        prop_assert!(w0 <= 2.0 * eps * (-0.25 * m.norm() as f64).exp());
    }
}
