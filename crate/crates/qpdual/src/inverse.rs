//! Gap/coefficient inequalities in both directions: gap tables with the forward
//! width bound, the coefficient bound recovered from a gap, and the decay
//! improvement ladder.

use crate::dual_operator::{DualOperator, Normalization};
use crate::error::{QpError, Result};
use crate::exec::Exec;
use crate::lattice::LatticeVector;
use crate::model::{validate_potential, Potential};
use crate::schur::ReducedResolvent;
use crate::spectral::{gap_at, k_point, paired_box, GapRecord, SolveOptions};

#[derive(Clone, Debug)]
pub struct GapRow {
    pub m: LatticeVector,
    pub record: std::result::Result<GapRecord, QpError>,
}

/// One gap per m on the paired box B(r) u (m + B(r)).
pub fn gap_table(
    op: &DualOperator,
    m_list: &[LatticeVector],
    box_radius: f64,
    opts: &SolveOptions,
    exec: Exec,
) -> Vec<GapRow> {
    exec.map(m_list, |m| {
        let record = paired_box(m, box_radius, op.matrix_budget).and_then(|s| gap_at(op, m, &s, opts));
        GapRow { m: m.clone(), record }
    })
}

/// 2 eps exp(-kappa0 |m| / 2).
pub fn forward_bound(p: &Potential, m: &LatticeVector) -> f64 {
    2.0 * p.epsilon * (-p.kappa0 * m.norm() as f64 / 2.0).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardRow {
    pub m: LatticeVector,
    pub k_m: f64,
    pub e_minus: f64,
    pub e_plus: f64,
    pub width: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardReport {
    pub rows: Vec<ForwardRow>,
    pub violations: Vec<LatticeVector>,
    /// Rows whose gap computation failed, with the error text.
    pub failures: Vec<(LatticeVector, String)>,
    /// Potential admissible and eps within the desk smallness bound.
    pub in_regime: bool,
}

impl ForwardReport {
    pub fn all_pass(&self) -> bool {
        self.violations.is_empty() && self.failures.is_empty()
    }
}

/// Desk smallness bound on eps for the forward check.
pub const DESK_SMALL_EPS: f64 = 1e-3;

pub fn verify_forward(table: &[GapRow], p: &Potential) -> ForwardReport {
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    let mut failures = Vec::new();
    for row in table {
        match &row.record {
            Ok(g) => {
                let bound = forward_bound(p, &row.m);
                let pass = g.width <= bound;
                if !pass {
                    violations.push(row.m.clone());
                }
                rows.push(ForwardRow {
                    m: row.m.clone(),
                    k_m: g.k_point,
                    e_minus: g.e_minus,
                    e_plus: g.e_plus,
                    width: g.width,
                    bound,
                    margin: bound - g.width,
                    pass,
                });
            }
            Err(e) => failures.push((row.m.clone(), e.to_string())),
        }
    }
    let in_regime = validate_potential(p).is_empty() && p.epsilon <= DESK_SMALL_EPS;
    ForwardReport { rows, violations, failures, in_regime }
}

/// RHS of the coefficient inequality: factor * width + remainder.
pub fn coefficient_bound(gap_width: f64, factor: f64, traj_term: f64) -> f64 {
    factor * gap_width + traj_term
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientCheck {
    pub n0: LatticeVector,
    pub c_true: f64,
    pub width: f64,
    /// f1(E+) - f1(E-) with f1 = E - v(0) - Q(E); bounds |b(E+)| directly.
    pub gap_term: f64,
    /// eps0^-1 exp(kappa0 |n0|) * width.
    pub scaled_term: f64,
    /// sum |h(0,m')| |K(m',n')| |h(n',n0)| over the reduced set, at E+.
    pub remainder: f64,
    pub rhs: f64,
    pub rhs_scaled: f64,
    pub pass: bool,
}

/// Evaluates every term of the coefficient inequality at k_{n0}.
pub fn coefficient_check(
    op: &DualOperator,
    n0: &LatticeVector,
    gap: &GapRecord,
    box_radius: f64,
    eps0: f64,
) -> Result<CoefficientCheck> {
    let norm = Normalization::Raw;
    let s = paired_box(n0, box_radius, op.matrix_budget)?;
    let zero = LatticeVector::zero(n0.dim());
    let k = k_point(op, n0);
    let rr = ReducedResolvent::new(op, &s, &[&zero, n0], k, norm)?;
    let b0 = rr.project(&rr.coupling(op, &zero));
    let v0 = op.diag(&zero, k, norm);
    let f1 = |e: f64| -> Result<f64> {
        rr.check_invertible(e)?;
        Ok(e - v0 - rr.form(&b0, &b0, e, 0).re)
    };
    let gap_term = f1(gap.e_plus)? - f1(gap.e_minus)?;
    rr.check_invertible(gap.e_plus)?;
    let kmat = rr.matrix(gap.e_plus);
    let left: Vec<f64> = rr.sites.iter().map(|m| op.entry(&zero, m, k, norm).norm()).collect();
    let right: Vec<f64> = rr.sites.iter().map(|n| op.entry(n, n0, k, norm).norm()).collect();
    let mut remainder = 0.0;
    for (i, l) in left.iter().enumerate() {
        if *l == 0.0 {
            continue;
        }
        for (j, r) in right.iter().enumerate() {
            if *r != 0.0 {
                remainder += l * kmat[(i, j)].norm() * r;
            }
        }
    }
    let c_true = op.pot.c(n0).norm();
    let scale = (op.pot.kappa0 * n0.norm() as f64).exp() / eps0;
    let rhs = coefficient_bound(1.0, gap_term.max(0.0), remainder);
    let rhs_scaled = coefficient_bound(gap.width, scale, remainder);
    Ok(CoefficientCheck {
        n0: n0.clone(),
        c_true,
        width: gap.width,
        gap_term,
        scaled_term: scale * gap.width,
        remainder,
        rhs,
        rhs_scaled,
        pass: c_true <= rhs * (1.0 + 1e-9) + 1e-15,
    })
}

/// |c(p)| <= eps_hat exp(-kappa_hat |p|).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayBound {
    pub eps_hat: f64,
    pub kappa_hat: f64,
}

/// First support point violating a bound: (p, |c(p)|, bound).
pub type DecayViolation = (LatticeVector, f64, f64);

impl DecayBound {
    pub fn new(eps_hat: f64, kappa_hat: f64) -> Result<Self> {
        if !(eps_hat > 0.0 && kappa_hat > 0.0) {
            return Err(QpError::Invalid("decay bound needs eps_hat, kappa_hat > 0".into()));
        }
        Ok(DecayBound { eps_hat, kappa_hat })
    }

    pub fn at(&self, p: &LatticeVector) -> f64 {
        self.eps_hat * (-self.kappa_hat * p.norm() as f64).exp()
    }

    pub fn check(&self, pot: &Potential) -> Option<DecayViolation> {
        first_violation(pot, |p| self.at(p))
    }
}

fn first_violation<F: Fn(&LatticeVector) -> f64>(pot: &Potential, bound: F) -> Option<DecayViolation> {
    pot.support()
        .filter(|(p, _)| !p.is_zero())
        .map(|(p, _)| (p.clone(), pot.c(p).norm(), bound(p)))
        .find(|(_, a, b)| *a > *b * (1.0 + 1e-12))
}

/// R_t = (5/4) R_{t-1}, rho_{t-1} = 2^-10 t^-2, sigma_t = sum_{l <= t} rho_l.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayLadder {
    pub r1: f64,
}

impl DecayLadder {
    pub fn new(r1: f64) -> Result<Self> {
        if !(r1 > 0.0) {
            return Err(QpError::Invalid("R_1 must be positive".into()));
        }
        Ok(DecayLadder { r1 })
    }

    pub fn r(&self, t: usize) -> f64 {
        self.r1 * 1.25f64.powi(t.saturating_sub(1) as i32)
    }

    /// rho_j for j >= 1.
    pub fn rho(&self, j: usize) -> f64 {
        let t = (j + 1) as f64;
        (1.0 / 1024.0) / (t * t)
    }

    pub fn sigma(&self, t: usize) -> f64 {
        (1..=t).map(|j| self.rho(j)).sum()
    }

    /// Allowed rate at |p|: kappa for |p| <= R_2, else (15/16)(1 - sigma_{3t}) kappa
    /// with R_{t-1} < |p| <= R_t.
    pub fn rate(&self, kappa: f64, norm: u64) -> f64 {
        let x = norm as f64;
        if x <= self.r(2) {
            return kappa;
        }
        let mut t = 3;
        while x > self.r(t) {
            t += 1;
        }
        15.0 / 16.0 * (1.0 - self.sigma(3 * t)) * kappa
    }
}

/// (eps_hat/2, 7 kappa_hat/6), verified in the scaled-window shape.
pub fn improve_decay(current: &DecayBound, pot: &Potential, ladder: &DecayLadder) -> Result<DecayBound> {
    if let Some((p, a, b)) = current.check(pot) {
        return Err(QpError::Invalid(format!("current bound fails at {p}: {a:e} > {b:e}")));
    }
    let next = DecayBound { eps_hat: current.eps_hat / 2.0, kappa_hat: 7.0 * current.kappa_hat / 6.0 };
    let bound = |p: &LatticeVector| next.eps_hat * (-ladder.rate(next.kappa_hat, p.norm()) * p.norm() as f64).exp();
    match first_violation(pot, bound) {
        None => Ok(next),
        Some((p, a, b)) => Err(QpError::Assertion(format!("improved bound fails at {p}: {a:e} > {b:e}"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseConfig {
    pub box_radius: f64,
    pub window: u64,
    pub iterations: usize,
    /// Target rate kappa of the conclusion eps^(1/2) exp(-kappa |m| / 2).
    pub kappa: f64,
    pub eps0: f64,
    pub r1: f64,
}

impl Default for InverseConfig {
    fn default() -> Self {
        InverseConfig { box_radius: 6.0, window: 4, iterations: 5, kappa: 3.0, eps0: 1.0, r1: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseReport {
    /// Every computed gap obeys the forward bound (the hypothesis used here).
    pub hypothesis: bool,
    pub coefficient_checks: Vec<CoefficientCheck>,
    pub coefficient_ok: bool,
    pub iterates: Vec<DecayBound>,
    pub improve_failure: Option<String>,
    /// Stopped because the bound reached eps^(1/2) exp(-kappa |m| / 2) on the window.
    pub target_reached: bool,
    pub final_ok: bool,
    pub caveat: &'static str,
}

impl InverseReport {
    pub fn pass(&self) -> bool {
        self.hypothesis && self.coefficient_ok && self.final_ok
    }
}

pub const INVERSE_CAVEAT: &str =
    "finite window and desk scale only; the infinite-scale conclusion is not certified";

fn target_reached(b: &DecayBound, pot: &Potential, cfg: &InverseConfig) -> bool {
    let sites = crate::lattice::ball(pot.nu().unwrap_or(1), cfg.window as f64, usize::MAX).unwrap_or_default();
    let ok = sites.iter().filter(|m| !m.is_zero()).all(|m| {
        b.at(m) <= pot.epsilon.sqrt() * (-cfg.kappa * m.norm() as f64 / 2.0).exp()
    });
    ok
}

/// Hypothesis, coefficient inequality, improvement iterates and the final pointwise check.
pub fn verify_inverse(op: &DualOperator, cfg: &InverseConfig, opts: &SolveOptions, exec: Exec) -> Result<InverseReport> {
    let pot = &op.pot;
    let nu = op.nu();
    let sites = crate::lattice::ball(nu, cfg.window as f64, usize::MAX)?;
    let ms: Vec<LatticeVector> = sites.iter().filter(|m| !m.is_zero()).cloned().collect();
    let table = gap_table(op, &ms, cfg.box_radius, opts, exec);
    let fwd = verify_forward(&table, pot);
    let hypothesis = fwd.all_pass();
    let mut coefficient_checks = Vec::new();
    if hypothesis {
        for row in &table {
            if let Ok(g) = &row.record {
                coefficient_checks.push(coefficient_check(op, &row.m, g, cfg.box_radius, cfg.eps0)?);
            }
        }
    }
    let coefficient_ok = hypothesis && coefficient_checks.iter().all(|c| c.pass);
    let ladder = DecayLadder::new(cfg.r1)?;
    let mut iterates = Vec::new();
    let mut improve_failure = None;
    let mut reached = false;
    if pot.epsilon > 0.0 && !pot.c0.is_empty() {
        let mut cur = DecayBound::new(pot.epsilon, pot.kappa0)?;
        iterates.push(cur);
        for _ in 0..cfg.iterations {
            if target_reached(&cur, pot, cfg) {
                reached = true;
                break;
            }
            match improve_decay(&cur, pot, &ladder) {
                Ok(n) => {
                    cur = n;
                    iterates.push(cur);
                }
                Err(e) => {
                    improve_failure = Some(e.to_string());
                    break;
                }
            }
        }
        reached = reached || target_reached(&cur, pot, cfg);
    } else {
        reached = true;
    }
    let final_ok = iterates.last().map_or(true, |b| b.check(pot).is_none());
    Ok(InverseReport {
        hypothesis,
        coefficient_checks,
        coefficient_ok,
        iterates,
        improve_failure,
        target_reached: reached,
        final_ok,
        caveat: INVERSE_CAVEAT,
    })
}
