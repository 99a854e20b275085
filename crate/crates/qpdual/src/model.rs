//! Problem data: frequency vector with a finite-window Diophantine certificate,
//! potential Fourier coefficients, the (R, delta) scale ladder and the epsilon
//! thresholds. Ladder quantities are stored as natural logs.

use crate::error::{QpError, Result};
use crate::lattice::{ball, ball_size, LatticeVector};
use num_complex::Complex64;
use std::collections::BTreeMap;

/// Relative slack applied to the coefficient decay test.
pub const DECAY_RTOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Frequency {
    pub omega: Vec<f64>,
    pub a0: f64,
    pub b0: f64,
}

impl Frequency {
    /// Checks max|omega_j| <= 1, 0 < a0 < 1 and b0 > nu.
    pub fn new(omega: Vec<f64>, a0: f64, b0: f64) -> Result<Self> {
        let nu = omega.len();
        if nu == 0 {
            return Err(QpError::Invalid("omega must be non-empty".into()));
        }
        if omega.iter().any(|w| !w.is_finite() || w.abs() > 1.0) {
            return Err(QpError::Invalid("omega components must satisfy |omega_j| <= 1".into()));
        }
        if !(a0 > 0.0 && a0 < 1.0) {
            return Err(QpError::Invalid(format!("a0 must lie in (0,1), got {a0}")));
        }
        if !(b0 > nu as f64) {
            return Err(QpError::Invalid(format!("b0 must exceed nu = {nu}, got {b0}")));
        }
        Ok(Frequency { omega, a0, b0 })
    }

    /// Golden-mean frequency (1, (sqrt 5 - 1)/2).
    pub fn golden() -> Self {
        Frequency { omega: vec![1.0, (5f64.sqrt() - 1.0) / 2.0], a0: 0.1, b0: 3.0 }
    }

    pub fn nu(&self) -> usize {
        self.omega.len()
    }

    pub fn dot(&self, n: &LatticeVector) -> f64 {
        n.dot(&self.omega)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiophantineCertificate {
    pub margin: f64,
    pub witness: LatticeVector,
    pub window: u64,
    pub valid: bool,
}

/// min over 0 < |n| <= N of |n.omega| |n|^b0, with the first minimizer in canonical order.
pub fn diophantine_margin(f: &Frequency, n_max: u64) -> Result<DiophantineCertificate> {
    if n_max < 1 {
        return Err(QpError::Invalid("window N must be >= 1".into()));
    }
    let size = ball_size(f.nu(), n_max as f64);
    let sites = ball(f.nu(), n_max as f64, size as usize)?;
    let mut best = f64::INFINITY;
    let mut witness = LatticeVector::zero(f.nu());
    for n in sites.iter().filter(|n| !n.is_zero()) {
        let val = f.dot(n).abs() * (n.norm() as f64).powf(f.b0);
        if val < best {
            best = val;
            witness = n.clone();
        }
    }
    Ok(DiophantineCertificate { margin: best, witness, window: n_max, valid: best >= f.a0 })
}

/// Fourier coefficients c(n) = epsilon * c0(n).
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub c0: BTreeMap<LatticeVector, Complex64>,
    pub epsilon: f64,
    pub kappa0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    ZeroMode,
    Hermitian { n: LatticeVector },
    Decay { n: LatticeVector, abs: f64, bound: f64 },
    Parameter(String),
}

impl Potential {
    pub fn new(epsilon: f64, kappa0: f64) -> Self {
        Potential { c0: BTreeMap::new(), epsilon, kappa0 }
    }

    pub fn zero(kappa0: f64) -> Self {
        Potential::new(0.0, kappa0)
    }

    /// Sets c0(n) and c0(-n) = conj c0(n).
    pub fn with_pair(mut self, n: LatticeVector, val: Complex64) -> Self {
        self.c0.insert(n.neg(), val.conj());
        self.c0.insert(n, val);
        self
    }

    /// Single harmonic c0(n0) = c0(-n0) = amp.
    pub fn single_harmonic(n0: LatticeVector, amp: f64, epsilon: f64, kappa0: f64) -> Self {
        Potential::new(epsilon, kappa0).with_pair(n0, Complex64::new(amp, 0.0))
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Potential { c0: self.c0.clone(), epsilon, kappa0: self.kappa0 }
    }

    pub fn nu(&self) -> Option<usize> {
        self.c0.keys().next().map(|n| n.dim())
    }

    /// c(n) = epsilon c0(n); zero off the support and at n = 0.
    pub fn c(&self, n: &LatticeVector) -> Complex64 {
        if n.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        self.c0.get(n).map(|v| v * self.epsilon).unwrap_or_default()
    }

    pub fn c0(&self, n: &LatticeVector) -> Complex64 {
        self.c0.get(n).copied().unwrap_or_default()
    }

    pub fn support(&self) -> impl Iterator<Item = (&LatticeVector, &Complex64)> {
        self.c0.iter()
    }

    /// max |n| over the support.
    pub fn range(&self) -> u64 {
        self.c0.keys().map(|n| n.norm()).max().unwrap_or(0)
    }
}

/// Every violated Hermitian pair or decay constraint, one entry per {n, -n} pair.
pub fn validate_potential(p: &Potential) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(p.kappa0 > 0.0 && p.kappa0 <= 0.5) {
        out.push(Violation::Parameter(format!("kappa0 must lie in (0, 1/2], got {}", p.kappa0)));
    }
    if !(p.epsilon >= 0.0) || !p.epsilon.is_finite() {
        out.push(Violation::Parameter(format!("epsilon must be finite and >= 0, got {}", p.epsilon)));
    }
    for (n, v) in &p.c0 {
        if n.is_zero() {
            if v.norm() != 0.0 {
                out.push(Violation::ZeroMode);
            }
            continue;
        }
        let partner = n.neg();
        // visit each pair once, from its canonical representative
        if partner < *n && p.c0.contains_key(&partner) {
            continue;
        }
        match p.c0.get(&partner) {
            Some(w) if *w == v.conj() => {}
            _ => out.push(Violation::Hermitian { n: n.clone() }),
        }
        let abs = (v * p.epsilon).norm();
        let bound = p.epsilon * (-p.kappa0 * n.norm() as f64).exp();
        let abs_partner = p.c0.get(&partner).map(|w| (w * p.epsilon).norm()).unwrap_or(0.0);
        let worst = abs.max(abs_partner);
        if worst > bound * (1.0 + DECAY_RTOL) {
            out.push(Violation::Decay { n: n.clone(), abs: worst, bound });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Desk,
    Faithful,
}

/// Ladder R^(u), delta^(u) in log space.
///
/// `log_r[u-1] = log R^(u)` for u = 1..=u_max and `log_delta[u] = log delta^(u)`
/// for u = 0..=u_max.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleLadder {
    pub beta1: f64,
    pub log_r: Vec<f64>,
    pub log_delta: Vec<f64>,
    pub regime: Regime,
    pub site_budget: usize,
}

/// Builds the ladder from delta0 directly.
pub fn build_ladder(
    delta0: f64,
    beta1: f64,
    u_max: usize,
    regime: Regime,
    nu: usize,
    site_budget: usize,
) -> Result<ScaleLadder> {
    if !(delta0 > 0.0 && delta0 < 1.0) {
        return Err(QpError::Invalid(format!("delta0 must lie in (0,1), got {delta0}")));
    }
    build_ladder_log(delta0.ln(), beta1, u_max, regime, nu, site_budget)
}

/// Same as [`build_ladder`] with log delta0 supplied (faithful seeds underflow).
pub fn build_ladder_log(
    log_delta0: f64,
    beta1: f64,
    u_max: usize,
    regime: Regime,
    nu: usize,
    site_budget: usize,
) -> Result<ScaleLadder> {
    if !(log_delta0 < 0.0) {
        return Err(QpError::Invalid("log delta0 must be negative".into()));
    }
    if !(beta1 > 0.0) {
        return Err(QpError::Invalid(format!("beta1 must be > 0, got {beta1}")));
    }
    if u_max < 1 {
        return Err(QpError::Invalid("u_max must be >= 1".into()));
    }
    let mut log_r = Vec::with_capacity(u_max);
    let mut log_delta = vec![log_delta0];
    for u in 1..=u_max {
        let lr = -beta1 * log_delta[u - 1];
        log_r.push(lr);
        log_delta.push(-(lr * lr));
    }
    for u in 1..u_max {
        if !(log_r[u] > log_r[u - 1]) {
            return Err(QpError::Invalid(format!(
                "ladder not monotone: log R^({}) = {} <= log R^({}) = {} (needs beta1 log R^(1) > 1)",
                u + 1,
                log_r[u],
                u,
                log_r[u - 1]
            )));
        }
    }
    for u in 1..=u_max {
        if !(log_delta[u] < log_delta[u - 1]) {
            return Err(QpError::Invalid(format!("ladder not monotone at delta^({u})")));
        }
    }
    if log_r.iter().chain(&log_delta).any(|x| !x.is_finite()) {
        return Err(QpError::Regime("ladder overflows f64 log space".into()));
    }
    let ladder = ScaleLadder { beta1, log_r, log_delta, regime, site_budget };
    if regime == Regime::Desk {
        let r1 = ladder.log_r[0].exp();
        let needed = ball_size(nu, r1);
        if needed > site_budget as u128 {
            return Err(QpError::Budget { needed, budget: site_budget });
        }
    }
    Ok(ladder)
}

impl ScaleLadder {
    pub fn u_max(&self) -> usize {
        self.log_r.len()
    }

    /// log R^(u); R^(0) = 0 gives -inf.
    pub fn log_r(&self, u: usize) -> Result<f64> {
        match u {
            0 => Ok(f64::NEG_INFINITY),
            _ if u <= self.u_max() => Ok(self.log_r[u - 1]),
            _ => Err(QpError::Regime(format!("scale {u} beyond ladder top {}", self.u_max()))),
        }
    }

    pub fn log_delta(&self, u: usize) -> Result<f64> {
        self.log_delta
            .get(u)
            .copied()
            .ok_or_else(|| QpError::Regime(format!("delta^({u}) beyond ladder top {}", self.u_max())))
    }

    fn require_desk(&self) -> Result<()> {
        if self.regime == Regime::Faithful {
            return Err(QpError::Regime("faithful ladder refuses materialization".into()));
        }
        Ok(())
    }

    /// R^(u) as a real; refused in the faithful regime.
    pub fn r(&self, u: usize) -> Result<f64> {
        self.require_desk()?;
        Ok(self.log_r(u)?.exp())
    }

    pub fn delta(&self, u: usize) -> Result<f64> {
        self.require_desk()?;
        Ok(self.log_delta(u)?.exp())
    }

    /// Scale s with 12 R^(s-1) < |m| <= 12 R^(s); s = 1 for m = 0.
    pub fn scale_of_norm(&self, norm: u64) -> Result<usize> {
        if norm == 0 {
            return Ok(1);
        }
        let ln = (norm as f64).ln() - 12f64.ln();
        for s in 1..=self.u_max() {
            if ln <= self.log_r[s - 1] {
                return Ok(s);
            }
        }
        Err(QpError::Regime(format!(
            "|m| = {norm} beyond 12 R^({}) of the ladder",
            self.u_max()
        )))
    }

    /// log sigma(m) = log 32 + log delta^(s-1) / 6.
    pub fn log_sigma(&self, m: &LatticeVector) -> Result<f64> {
        let s = self.scale_of_norm(m.norm())?;
        Ok(32f64.ln() + self.log_delta(s - 1)? / 6.0)
    }

    pub fn sigma(&self, m: &LatticeVector) -> Result<f64> {
        Ok(self.log_sigma(m)?.exp())
    }
}

/// sigma(m) = 32 (delta^(s-1))^(1/6) for the bracketing scale s.
pub fn sigma(m: &LatticeVector, ladder: &ScaleLadder) -> Result<f64> {
    ladder.sigma(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonThresholds {
    pub log_eps0: f64,
    /// log eps_s for s = 1..=u_max.
    pub log_eps_s: Vec<f64>,
}

/// log of eps0_bar = min(2^{-24nu-4} k^{4nu}, delta0^{512}, 2^{-10(nu+1)} (4 k log 1/delta0)^{-8nu}).
pub fn log_eps0_bar(nu: usize, kappa0: f64, log_delta0: f64) -> f64 {
    let nu = nu as f64;
    let ln2 = 2f64.ln();
    let a = -(24.0 * nu + 4.0) * ln2 + 4.0 * nu * kappa0.ln();
    let b = 512.0 * log_delta0;
    let c = -10.0 * (nu + 1.0) * ln2 - 8.0 * nu * (4.0 * kappa0 * (-log_delta0)).ln();
    a.min(b).min(c)
}

/// eps0 = eps0_bar^3 and eps_s = eps0 - sum_{1 <= s' <= s} delta^(s').
pub fn epsilon_thresholds(nu: usize, kappa0: f64, ladder: &ScaleLadder) -> Result<EpsilonThresholds> {
    let log_eps0 = 3.0 * log_eps0_bar(nu, kappa0, ladder.log_delta[0]);
    let mut frac = 0.0f64;
    let mut log_eps_s = Vec::with_capacity(ladder.u_max());
    for s in 1..=ladder.u_max() {
        frac += (ladder.log_delta[s] - log_eps0).exp();
        if frac >= 1.0 {
            return Err(QpError::Regime(format!("eps_{s} is nonpositive: delta terms exceed eps0")));
        }
        log_eps_s.push(log_eps0 + (-frac).ln_1p());
    }
    Ok(EpsilonThresholds { log_eps0, log_eps_s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DEFAULT_SITE_BUDGET;
    use proptest::prelude::*;

    fn v(c: &[i64]) -> LatticeVector {
        LatticeVector(c.to_vec())
    }

    #[test]
    fn validation_examples() {
        let p = Potential::single_harmonic(v(&[0, 1]), 1.0, 1.0, 0.5);
        assert_eq!(validate_potential(&p).len(), 1);
        let mut q = Potential::new(1.0, 0.5);
        q.c0.insert(v(&[1, 0]), Complex64::new(0.0, 0.3));
        let r = validate_potential(&q);
        assert!(r.iter().any(|x| matches!(x, Violation::Hermitian { .. })));
        assert!(validate_potential(&Potential::new(1.0, 0.5)).is_empty());
        let ok = Potential::single_harmonic(v(&[0, 1]), (-0.5f64).exp(), 1e-3, 0.5);
        assert!(validate_potential(&ok).is_empty());
    }

    #[test]
    fn diophantine_examples() {
        let f = Frequency::new(vec![1.0, 0.5], 0.1, 3.0).unwrap();
        let c = diophantine_margin(&f, 5).unwrap();
        assert_eq!(c.margin, 0.0);
        assert!(c.witness == v(&[-1, 2]) || c.witness == v(&[1, -2]));
        assert!(!c.valid);

        let g = Frequency { omega: vec![1.0, 0.618], a0: 0.1, b0: 1.0 };
        let c1 = diophantine_margin(&g, 1).unwrap();
        assert_eq!(c1.margin, 0.618);
        assert_eq!(c1.witness.norm(), 1);

        let golden = Frequency { b0: 2.0, ..Frequency::golden() };
        let c50 = diophantine_margin(&golden, 50).unwrap();
        assert!(c50.margin > 0.0);
        let fib = [1i64, 2, 3, 5, 8, 13, 21, 34];
        assert!(fib.contains(&c50.witness.0[1].abs()), "witness {:?}", c50.witness);
        // brute-force oracle over the square window
        let mut best = f64::INFINITY;
        for a in -50i64..=50 {
            for b in -50i64..=50 {
                let n = a.abs() + b.abs();
                if n == 0 || n > 50 {
                    continue;
                }
                let val = (a as f64 + b as f64 * golden.omega[1]).abs() * (n as f64).powi(2);
                best = best.min(val);
            }
        }
        assert!((best - c50.margin).abs() <= 1e-12 * best.max(1.0));
    }

    #[test]
    fn margin_monotone_in_window() {
        let f = Frequency::golden();
        let mut prev = f64::INFINITY;
        for n in 1..20 {
            let m = diophantine_margin(&f, n).unwrap().margin;
            assert!(m <= prev);
            prev = m;
        }
    }

    #[test]
    fn frequency_rejects_small_b0() {
        assert!(Frequency::new(vec![1.0, 0.6], 0.1, 2.0).is_err());
        assert!(Frequency::new(vec![1.0, 0.6], 0.1, 2.5).is_ok());
        assert!(Frequency::new(vec![1.5, 0.6], 0.1, 3.0).is_err());
    }

    #[test]
    fn ladder_examples() {
        let l = build_ladder((-4f64).exp(), 1.0, 1, Regime::Desk, 2, DEFAULT_SITE_BUDGET).unwrap();
        assert!((l.log_r(1).unwrap() - 4.0).abs() < 1e-15);
        assert!((l.log_delta(1).unwrap() + 16.0).abs() < 1e-12);

        let l3 = build_ladder((-7f64).exp(), 0.4, 3, Regime::Desk, 2, DEFAULT_SITE_BUDGET).unwrap();
        assert_eq!(l3.log_r.len(), 3);
        for u in 1..3 {
            assert_eq!(l3.log_r[u], -0.4 * l3.log_delta[u]);
            assert!(l3.log_r[u] > l3.log_r[u - 1]);
        }
        for u in 1..=3 {
            assert_eq!(l3.log_delta[u], -(l3.log_r[u - 1] * l3.log_r[u - 1]));
        }

        // beta1 log R^(1) < 1 shrinks R
        assert!(build_ladder(1e-6, 0.25, 3, Regime::Desk, 2, DEFAULT_SITE_BUDGET).is_err());
        // too large for the desk budget
        assert!(matches!(
            build_ladder(1e-30, 0.5, 1, Regime::Desk, 2, DEFAULT_SITE_BUDGET),
            Err(QpError::Budget { .. })
        ));
    }

    #[test]
    fn faithful_ladder_stays_in_log_space() {
        let kappa0: f64 = 0.5;
        let beta1 = 1.0 / (32.0 * 3.0);
        let log_r1 = 2f64.powi(34) / beta1 * (1.0 / kappa0).ln();
        let l = build_ladder_log(-log_r1 / beta1, beta1, 2, Regime::Faithful, 2, DEFAULT_SITE_BUDGET).unwrap();
        assert!((l.log_r(1).unwrap() - log_r1).abs() <= 1e-9 * log_r1);
        assert!(l.r(1).is_err());
        assert!(l.delta(0).is_err());
        assert!(l.log_sigma(&v(&[0, 0])).is_ok());
    }

    #[test]
    fn sigma_values() {
        let l = build_ladder(1e-6, 0.3, 1, Regime::Desk, 2, DEFAULT_SITE_BUDGET).unwrap();
        assert!((sigma(&v(&[0, 0]), &l).unwrap() - 3.2).abs() < 1e-12);
        assert!((sigma(&v(&[1, 0]), &l).unwrap() - 3.2).abs() < 1e-12);
        let l2 = build_ladder((-7f64).exp(), 0.4, 2, Regime::Desk, 2, DEFAULT_SITE_BUDGET).unwrap();
        let r1 = l2.r(1).unwrap();
        let m = v(&[(12.0 * r1).floor() as i64 + 1, 0]);
        let want = 32.0 * l2.delta(1).unwrap().powf(1.0 / 6.0);
        assert!((sigma(&m, &l2).unwrap() - want).abs() < 1e-12);
        let far = v(&[10_000, 0]);
        assert!(sigma(&far, &l2).is_err());
    }

    #[test]
    fn thresholds() {
        let l = build_ladder((-7f64).exp(), 0.4, 2, Regime::Desk, 2, DEFAULT_SITE_BUDGET).unwrap();
        // desk deltas dwarf eps0
        assert!(epsilon_thresholds(2, 0.5, &l).is_err());
        let lf = build_ladder_log(-2000.0, 1.0, 2, Regime::Faithful, 2, DEFAULT_SITE_BUDGET).unwrap();
        let t = epsilon_thresholds(2, 0.5, &lf).unwrap();
        assert!(t.log_eps_s[1] <= t.log_eps_s[0] && t.log_eps_s[0] <= t.log_eps0);
        let direct = 3.0 * (-(24.0 * 2.0 + 4.0) * 2f64.ln() + 8.0 * 0.5f64.ln())
            .min(512.0 * -2000.0)
            .min(-30.0 * 2f64.ln() - 16.0 * (4.0 * 0.5 * 2000.0f64).ln());
        assert!((t.log_eps0 - direct).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn validity_invariant_under_relabeling(a in 0.0f64..1.0, b in -1.0f64..1.0, i in -3i64..3, j in 1i64..3) {
            let p = Potential::new(1e-2, 0.5).with_pair(v(&[i, j]), Complex64::new(a, b) * 1e-3);
            let flipped = Potential {
                c0: p.c0.iter().map(|(n, c)| (n.neg(), *c)).collect(),
                ..p.clone()
            };
            prop_assert_eq!(validate_potential(&p).len(), validate_potential(&flipped).len());
        }
    }
}
