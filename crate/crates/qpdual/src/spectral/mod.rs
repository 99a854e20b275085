//! Eigenvalues and gaps of the dual matrix: the simple fixed-point equation
//! E = v + Q(E), the paired characteristic equation chi(E) = 0, gap edges at
//! the half-lattice points k_n = -n.omega/2, band functions and Feynman
//! derivatives. Every route is cross-checked against a dense eigensolve.

pub mod calculus;
pub mod cf;
pub mod ift;

use crate::dual_operator::{dense_spectrum, DualOperator, Normalization, Spectrum};
use crate::error::{QpError, Result};
use crate::exec::Exec;
use crate::lattice::{ball, LatticeVector, SiteSet};
use crate::schur::{CVec, ReducedResolvent};
use num_complex::Complex64;
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub norm: Normalization,
    /// Relative step tolerance of the scalar iterations.
    pub tol: f64,
    pub max_iter: usize,
    /// Bound on ||(H - E) phi||_inf / ||phi||_inf, relative to max(1, |E|).
    pub residual_tol: f64,
    /// Allowed disagreement with the dense oracle, relative to max(1, |E|).
    pub oracle_tol: f64,
    pub cross_check: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { norm: Normalization::Raw, tol: 1e-15, max_iter: 100, residual_tol: 1e-9, oracle_tol: 1e-9, cross_check: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegimeTag {
    /// Fixed point of E = v + Q converged directly.
    Simple,
    /// Fixed point diverged; dense eigenvector-overlap selection polished by Newton.
    Fallback,
    /// One root of the paired characteristic equation.
    Pair,
    /// k on the half lattice; routed to the gap computation.
    Gap,
}

impl RegimeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeTag::Simple => "simple",
            RegimeTag::Fallback => "fallback",
            RegimeTag::Pair => "pair",
            RegimeTag::Gap => "gap",
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenRecord {
    pub e: f64,
    pub phi: BTreeMap<LatticeVector, Complex64>,
    pub center: LatticeVector,
    pub host: SiteSet,
    pub k: f64,
    pub regime: RegimeTag,
    pub residual: f64,
    pub iterations: usize,
    /// |E - dense oracle| when cross-checked.
    pub oracle_diff: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapRecord {
    pub n0: LatticeVector,
    pub k_point: f64,
    pub e_minus: f64,
    pub e_plus: f64,
    pub width: f64,
    /// max |E(route i) - E(route ii)| over both edges.
    pub reconciliation: f64,
}

/// k_n = -n.omega/2.
pub fn k_point(op: &DualOperator, n: &LatticeVector) -> f64 {
    -op.freq.dot(n) / 2.0
}

/// B(R) together with n0 + B(R).
pub fn paired_box(n0: &LatticeVector, r: f64, budget: usize) -> Result<SiteSet> {
    let b = ball(n0.dim(), r, budget)?;
    let u = b.union(&b.translate(n0));
    if u.len() > budget {
        return Err(QpError::Budget { needed: u.len() as u128, budget });
    }
    Ok(u)
}

/// Index of the dense eigenpair with the largest weight on the given sites,
/// in decreasing order of that weight.
pub fn overlap_order(sp: &Spectrum, idx: &[usize]) -> Vec<usize> {
    let n = sp.values.len();
    let weight = |c: usize| idx.iter().map(|&i| sp.vectors[(i, c)].norm_sqr()).sum::<f64>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)).then(a.cmp(&b)));
    order
}

fn residual(op: &DualOperator, host: &SiteSet, k: f64, e: f64, phi: &BTreeMap<LatticeVector, Complex64>, norm: Normalization) -> Result<f64> {
    let m = op.restrict(host, k, norm)?;
    let v = CVec::from_iterator(m.dim(), m.sites.iter().map(|n| phi.get(n).copied().unwrap_or_default()));
    let r = &m.entries * &v - &v * Complex64::new(e, 0.0);
    let rn = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let pn = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(rn / pn.max(f64::MIN_POSITIVE))
}

/// Solution of E = v(m0) + Q(m0, S; E) with phi = delta_{m0} + K h(., m0).
pub fn eigen_simple(op: &DualOperator, m0: &LatticeVector, s: &SiteSet, k: f64, opts: &SolveOptions) -> Result<EigenRecord> {
    if !s.contains(m0) {
        return Err(QpError::Invalid(format!("center {m0} not in host")));
    }
    let rr = ReducedResolvent::new(op, s, &[m0], k, opts.norm)?;
    let b = rr.project(&rr.coupling(op, m0));
    let v0 = op.diag(m0, k, opts.norm);
    let q = |e: f64| rr.form(&b, &b, e, 0).re;

    let mut e = v0;
    let mut converged = None;
    for it in 1..=opts.max_iter {
        if rr.check_invertible(e).is_err() {
            break;
        }
        let next = v0 + q(e);
        if !next.is_finite() {
            break;
        }
        let step = (next - e).abs();
        e = next;
        if step <= opts.tol * e.abs().max(1.0) {
            converged = Some(it);
            break;
        }
    }

    let dense = if converged.is_none() || opts.cross_check { Some(dense_pick(op, s, k, &[m0], opts.norm)?) } else { None };
    let (e, regime, iterations) = match converged {
        Some(it) => (e, RegimeTag::Simple, it),
        None => {
            // polish the oracle eigenvalue on the scalar equation
            let mut e = dense.as_ref().unwrap()[0];
            let mut it = 0;
            while it < opts.max_iter {
                it += 1;
                rr.check_invertible(e)?;
                let g = e - v0 - q(e);
                let dg = 1.0 - rr.form(&b, &b, e, 1).re;
                let step = g / dg;
                e -= step;
                if step.abs() <= opts.tol * e.abs().max(1.0) {
                    break;
                }
            }
            (e, RegimeTag::Fallback, it)
        }
    };
    if !e.is_finite() {
        return Err(QpError::Convergence(format!("eigen_simple at {m0}, k={k}: no finite fixed point")));
    }
    rr.check_invertible(e)?;
    let x = rr.apply(&rr.coupling(op, m0), e);
    let mut phi: BTreeMap<LatticeVector, Complex64> = rr.sites.iter().cloned().zip(x.iter().copied()).collect();
    phi.insert(m0.clone(), Complex64::new(1.0, 0.0));
    let res = residual(op, s, k, e, &phi, opts.norm)?;
    if res > opts.residual_tol * e.abs().max(1.0) {
        return Err(QpError::Convergence(format!("eigen_simple residual {res:e} at {m0}, k={k}")));
    }
    let oracle_diff = match &dense {
        Some(d) => {
            let diff = (d[0] - e).abs();
            if diff > opts.oracle_tol * e.abs().max(1.0) {
                return Err(QpError::Regime(format!("eigen_simple at {m0}, k={k}: oracle mismatch {diff:e}")));
            }
            Some(diff)
        }
        None => None,
    };
    Ok(EigenRecord { e, phi, center: m0.clone(), host: s.clone(), k, regime, residual: res, iterations, oracle_diff })
}

/// Dense eigenvalues ordered by decreasing weight on `targets`.
fn dense_pick(op: &DualOperator, s: &SiteSet, k: f64, targets: &[&LatticeVector], norm: Normalization) -> Result<Vec<f64>> {
    let m = op.restrict(s, k, norm)?;
    let sp = dense_spectrum(&m)?;
    let idx: Vec<usize> = targets.iter().filter_map(|t| m.idx(t)).collect();
    Ok(overlap_order(&sp, &idx).into_iter().map(|c| sp.values[c]).collect())
}

/// Paired quantities at a fixed E: a1 = v(mp) + Q+, a2 = v(mm) + Q-, G.
struct PairForms<'a> {
    rr: ReducedResolvent,
    bp: CVec,
    bm: CVec,
    vp: f64,
    vm: f64,
    h: Complex64,
    op: &'a DualOperator,
}

impl<'a> PairForms<'a> {
    fn new(op: &'a DualOperator, s: &SiteSet, k: f64, mp: &LatticeVector, mm: &LatticeVector, norm: Normalization) -> Result<Self> {
        let rr = ReducedResolvent::new(op, s, &[mp, mm], k, norm)?;
        let bp = rr.project(&rr.coupling(op, mp));
        let bm = rr.project(&rr.coupling(op, mm));
        Ok(PairForms { vp: op.diag(mp, k, norm), vm: op.diag(mm, k, norm), h: op.entry(mp, mm, k, norm), rr, bp, bm, op })
    }

    fn eval(&self, e: f64) -> (f64, f64, Complex64) {
        let a1 = self.vp + self.rr.form(&self.bp, &self.bp, e, 0).re;
        let a2 = self.vm + self.rr.form(&self.bm, &self.bm, e, 0).re;
        let g = self.h + self.rr.form(&self.bp, &self.bm, e, 0);
        (a1, a2, g)
    }

    fn chi(&self, e: f64) -> f64 {
        let (a1, a2, g) = self.eval(e);
        (e - a1) * (e - a2) - g.norm_sqr()
    }

    fn branch(&self, e: f64, sign: f64) -> f64 {
        let (a1, a2, g) = self.eval(e);
        let h = (a1 - a2) / 2.0;
        (a1 + a2) / 2.0 + sign * (h * h + g.norm_sqr()).sqrt()
    }

    /// Root of chi on the given branch: branch iteration, then a bisection bracket.
    fn root(&self, sign: f64, start: f64, opts: &SolveOptions) -> Result<(f64, usize)> {
        let mut e = start;
        let mut iters = 0;
        let mut ok = false;
        for it in 1..=opts.max_iter {
            iters = it;
            if self.rr.check_invertible(e).is_err() {
                break;
            }
            let next = self.branch(e, sign);
            if !next.is_finite() {
                break;
            }
            let step = (next - e).abs();
            e = next;
            if step <= opts.tol * e.abs().max(1.0) {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(QpError::Convergence(format!("paired branch {sign:+} did not converge")));
        }
        Ok((self.bisect_polish(e), iters))
    }

    /// Refines a near-root of chi by bisection once a sign change is bracketed.
    fn bisect_polish(&self, e: f64) -> f64 {
        let c0 = self.chi(e);
        if c0 == 0.0 {
            return e;
        }
        let scale = e.abs().max(1.0);
        let mut d = 1e-14 * scale;
        while d < 1e-6 * scale {
            let (lo, hi) = (e - d, e + d);
            let (cl, ch) = (self.chi(lo), self.chi(hi));
            let (mut a, mut b, mut ca) = if cl.signum() != c0.signum() { (lo, e, cl) } else if ch.signum() != c0.signum() { (e, hi, c0) } else {
                d *= 4.0;
                continue;
            };
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let cm = self.chi(mid);
                if cm.signum() == ca.signum() {
                    a = mid;
                    ca = cm;
                } else {
                    b = mid;
                }
            }
            return 0.5 * (a + b);
        }
        e
    }

    /// Eigenvector with the (mp, mm) components from the effective 2x2 problem.
    fn vector(&self, e: f64, mp: &LatticeVector, mm: &LatticeVector) -> (LatticeVector, BTreeMap<LatticeVector, Complex64>) {
        let (a1, a2, g) = self.eval(e);
        let c = |x: f64| Complex64::new(x, 0.0);
        let u1 = (g, c(e - a1));
        let u2 = (c(e - a2), g.conj());
        let n1 = u1.0.norm_sqr() + u1.1.norm_sqr();
        let n2 = u2.0.norm_sqr() + u2.1.norm_sqr();
        let (xp, xm) = if n1 == 0.0 && n2 == 0.0 {
            // decoupled and degenerate: pick the site whose diagonal is closer
            if (e - a1).abs() <= (e - a2).abs() { (c(1.0), c(0.0)) } else { (c(0.0), c(1.0)) }
        } else if n1 >= n2 {
            u1
        } else {
            u2
        };
        let (center, scale) = if xp.norm() >= xm.norm() { (mp.clone(), xp) } else { (mm.clone(), xm) };
        let (xp, xm) = (xp / scale, xm / scale);
        let rhs = self.rr.coupling(self.op, mp) * xp + self.rr.coupling(self.op, mm) * xm;
        let rest = self.rr.apply(&rhs, e);
        let mut phi: BTreeMap<LatticeVector, Complex64> = self.rr.sites.iter().cloned().zip(rest.iter().copied()).collect();
        phi.insert(mp.clone(), xp);
        phi.insert(mm.clone(), xm);
        (center, phi)
    }
}

#[derive(Clone, Debug)]
pub struct PairRecord {
    pub plus: EigenRecord,
    pub minus: EigenRecord,
    /// Largest violation of the two sandwich inequalities (<= 0 when they hold).
    pub sandwich_defect: f64,
}

/// The two roots of chi(E) = (E - v+ - Q+)(E - v- - Q-) - |G|^2.
pub fn eigen_pair(
    op: &DualOperator,
    s: &SiteSet,
    k: f64,
    mp: &LatticeVector,
    mm: &LatticeVector,
    opts: &SolveOptions,
) -> Result<PairRecord> {
    if mp == mm || !s.contains(mp) || !s.contains(mm) {
        return Err(QpError::Invalid("pair sites must be distinct members of the host".into()));
    }
    let pf = PairForms::new(op, s, k, mp, mm, opts.norm)?;
    let hi0 = pf.vp.max(pf.vm);
    let lo0 = pf.vp.min(pf.vm);
    let mut oracle: Option<Vec<f64>> = None;
    let mut solve = |sign: f64, start: f64| -> Result<(f64, usize, RegimeTag)> {
        match pf.root(sign, start, opts) {
            Ok((e, it)) => Ok((e, it, RegimeTag::Pair)),
            Err(_) => {
                if oracle.is_none() {
                    let mut top: Vec<f64> = dense_pick(op, s, k, &[mp, mm], opts.norm)?.into_iter().take(2).collect();
                    top.sort_by(f64::total_cmp);
                    oracle = Some(top);
                }
                let o = oracle.as_ref().unwrap();
                let start = if sign > 0.0 { o[o.len() - 1] } else { o[0] };
                Ok((pf.bisect_polish(start), 0, RegimeTag::Fallback))
            }
        }
    };
    let (ep, itp, tp) = solve(1.0, hi0)?;
    let (em, itm, tm) = solve(-1.0, lo0)?;

    let sandwich = |e: f64, plus: bool| {
        let (a1, a2, g) = pf.eval(e);
        let (hi, lo) = (a1.max(a2), a1.min(a2));
        let tol = 1e-12 * e.abs().max(1.0);
        if plus {
            hi.max(lo + g.norm()) - e - tol
        } else {
            e - lo.min(hi - g.norm()) - tol
        }
    };
    let sandwich_defect = sandwich(ep, true).max(sandwich(em, false));

    let make = |e: f64, it: usize, tag: RegimeTag| -> Result<EigenRecord> {
        pf.rr.check_invertible(e)?;
        let (center, phi) = pf.vector(e, mp, mm);
        let res = residual(op, s, k, e, &phi, opts.norm)?;
        if res > opts.residual_tol * e.abs().max(1.0) {
            return Err(QpError::Convergence(format!("eigen_pair residual {res:e} at k={k}")));
        }
        Ok(EigenRecord { e, phi, center, host: s.clone(), k, regime: tag, residual: res, iterations: it, oracle_diff: None })
    };
    let mut plus = make(ep, itp, tp)?;
    let mut minus = make(em, itm, tm)?;
    if opts.cross_check {
        let mut top: Vec<f64> = dense_pick(op, s, k, &[mp, mm], opts.norm)?.into_iter().take(2).collect();
        top.sort_by(f64::total_cmp);
        if top.len() == 2 {
            plus.oracle_diff = Some((top[1] - ep).abs());
            minus.oracle_diff = Some((top[0] - em).abs());
        }
    }
    Ok(PairRecord { plus, minus, sandwich_defect })
}

/// Gap edges at k_{n0}: the characteristic route reconciled with the dense oracle.
pub fn gap_at(op: &DualOperator, n0: &LatticeVector, s: &SiteSet, opts: &SolveOptions) -> Result<GapRecord> {
    if n0.is_zero() {
        return Err(QpError::Invalid("gap_at needs n0 != 0".into()));
    }
    let zero = LatticeVector::zero(n0.dim());
    if !s.contains(&zero) || !s.contains(n0) {
        return Err(QpError::Invalid(format!("paired set must contain 0 and {n0}")));
    }
    let k = k_point(op, n0);
    let pf = PairForms::new(op, s, k, &zero, n0, opts.norm)?;
    let v = pf.vp;
    let (ep, _) = pf.root(1.0, v, opts)?;
    let (em, _) = pf.root(-1.0, v, opts)?;

    let m = op.restrict(s, k, opts.norm)?;
    let sp = dense_spectrum(&m)?;
    let idx = [m.idx(&zero).unwrap(), m.idx(n0).unwrap()];
    let mut top: Vec<f64> = overlap_order(&sp, &idx).into_iter().take(2).map(|c| sp.values[c]).collect();
    top.sort_by(f64::total_cmp);
    let rec = (top[1] - ep).abs().max((top[0] - em).abs());
    if rec > opts.oracle_tol * v.abs().max(1.0) {
        return Err(QpError::Regime(format!("gap_at {n0}: routes disagree by {rec:e}")));
    }
    let (e_minus, e_plus) = (em.min(ep), em.max(ep));
    Ok(GapRecord { n0: n0.clone(), k_point: k, e_minus, e_plus, width: e_plus - e_minus, reconciliation: rec })
}

#[derive(Clone, Debug)]
pub enum BandValue {
    Eigen { e: f64, regime: RegimeTag },
    Gap(GapRecord),
}

#[derive(Clone, Debug)]
pub struct BandPoint {
    pub k: f64,
    pub value: std::result::Result<BandValue, QpError>,
}

impl BandPoint {
    /// E(k); at gap points the lower edge.
    pub fn energy(&self) -> Option<f64> {
        match &self.value {
            Ok(BandValue::Eigen { e, .. }) => Some(*e),
            Ok(BandValue::Gap(g)) => Some(g.e_minus),
            Err(_) => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match &self.value {
            Ok(BandValue::Eigen { regime, .. }) => regime.as_str(),
            Ok(BandValue::Gap(_)) => "gap",
            Err(_) => "error",
        }
    }
}

/// Tolerance for classifying k as a half-lattice point.
pub const HALF_LATTICE_TOL: f64 = 1e-12;

/// E(0, S_k; k) over a grid; half-lattice points are routed to gap_at.
pub fn band<B>(op: &DualOperator, k_grid: &[f64], s_builder: B, resonance_radius: u64, opts: &SolveOptions, exec: Exec) -> Vec<BandPoint>
where
    B: Fn(f64) -> Result<SiteSet> + Sync,
{
    let zero = LatticeVector::zero(op.nu());
    exec.map(k_grid, |&k| {
        let value = (|| {
            let s = s_builder(k)?;
            if let Some(n) = op.near_half_lattice(k, resonance_radius, HALF_LATTICE_TOL) {
                if !n.is_zero() {
                    let s = s.union(&s.translate(&n));
                    return gap_at(op, &n, &s, opts).map(BandValue::Gap);
                }
            }
            let r = eigen_simple(op, &zero, &s, k, opts)?;
            Ok(BandValue::Eigen { e: r.e, regime: r.regime })
        })();
        BandPoint { k, value }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeynmanEntry {
    pub e: f64,
    /// None when the eigenvalue is within the degeneracy threshold of a neighbour.
    pub de: Option<f64>,
}

pub const DEGENERACY_TOL: f64 = 1e-10;

/// d E_j / dk = sum_n |psi_j(n)|^2 dh(n,n)/dk for each simple eigenvalue, scaled by `direction`.
pub fn feynman_derivative(op: &DualOperator, s: &SiteSet, k: f64, direction: f64, norm: Normalization) -> Result<Vec<FeynmanEntry>> {
    let m = op.restrict(s, k, norm)?;
    let sp = dense_spectrum(&m)?;
    let dh: Vec<f64> = m.sites.iter().map(|n| op.diag_dk(n, k, norm)).collect();
    let n = sp.values.len();
    Ok((0..n)
        .map(|j| {
            let e = sp.values[j];
            let gap = [j.checked_sub(1).map(|i| e - sp.values[i]), (j + 1 < n).then(|| sp.values[j + 1] - e)]
                .into_iter()
                .flatten()
                .fold(f64::INFINITY, f64::min);
            let de = (gap > DEGENERACY_TOL * e.abs().max(1.0))
                .then(|| direction * (0..n).map(|i| sp.vectors[(i, j)].norm_sqr() * dh[i]).sum::<f64>());
            FeynmanEntry { e, de }
        })
        .collect())
}

/// Central differences of the ordered dense eigenvalues.
pub fn finite_difference_derivative(op: &DualOperator, s: &SiteSet, k: f64, h: f64, norm: Normalization) -> Result<Vec<f64>> {
    let up = dense_spectrum(&op.restrict(s, k + h, norm)?)?.values;
    let dn = dense_spectrum(&op.restrict(s, k - h, norm)?)?.values;
    Ok(up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

/// Largest |phi(n)| / (C eps^{1/2} sum_{m in centers} exp(-7/8 kappa0 |n - m|)) over n off the centers.
pub fn decay_ratio(phi: &BTreeMap<LatticeVector, Complex64>, centers: &[LatticeVector], epsilon: f64, kappa0: f64, c: f64) -> f64 {
    phi.iter()
        .filter(|(n, _)| !centers.contains(n))
        .map(|(n, z)| {
            let env: f64 = centers.iter().map(|m| (-7.0 / 8.0 * kappa0 * n.dist(m) as f64).exp()).sum();
            z.norm() / (c * epsilon.sqrt() * env)
        })
        .fold(0.0, f64::max)
}
