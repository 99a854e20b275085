//! Lattice trajectories, their weights, the two admissibility classes and
//! exhaustive trajectory sums with a certified tail, compared against the
//! closed-form sum bound.
//!
//! Sums are carried as [`LevelSum`]: a finite sum of terms eps0^a * exp(b).
//! With the admissible eps0 (often far below f64 range) only the log is kept.

use crate::error::{QpError, Result};
use crate::lattice::{dist_point, LatticeVector, SiteSet};
use std::cmp::Ordering;
use std::collections::BTreeMap;

/// Exponent applied to path lengths and distances.
pub const FIFTH: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Trajectory(Vec<LatticeVector>);

impl Trajectory {
    pub fn new(points: Vec<LatticeVector>) -> Result<Self> {
        if points.is_empty() {
            return Err(QpError::Invalid("trajectory needs at least one point".into()));
        }
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(QpError::Invalid("consecutive trajectory points must differ".into()));
        }
        Ok(Trajectory(points))
    }

    pub fn points(&self) -> &[LatticeVector] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> &LatticeVector {
        &self.0[0]
    }

    pub fn last(&self) -> &LatticeVector {
        &self.0[self.0.len() - 1]
    }

    /// ||gamma|| = sum |n_i - n_{i+1}|.
    pub fn path_norm(&self) -> u64 {
        segment_norm(&self.0)
    }
}

fn segment_norm(pts: &[LatticeVector]) -> u64 {
    pts.windows(2).map(|w| w[0].dist(&w[1])).sum()
}

/// g1 followed by g2, merging the junction when g1 ends where g2 starts.
pub fn concat(g1: &Trajectory, g2: &Trajectory) -> Trajectory {
    let mut pts = g1.0.clone();
    let skip = usize::from(g1.last() == g2.first());
    pts.extend(g2.0[skip..].iter().cloned());
    Trajectory(pts)
}

/// D, T, kappa0 on a host set inside an ambient set.
#[derive(Clone, Debug)]
pub struct WeightProfile {
    pub d: BTreeMap<LatticeVector, f64>,
    pub t: f64,
    pub kappa0: f64,
    pub host: SiteSet,
    pub ambient: SiteSet,
}

impl WeightProfile {
    /// 4 T / kappa0.
    pub fn threshold(&self) -> f64 {
        4.0 * self.t / self.kappa0
    }

    pub fn d(&self, n: &LatticeVector) -> f64 {
        self.d.get(n).copied().unwrap_or(1.0)
    }

    /// dist(m, ambient minus host); None stands for +infinity.
    pub fn mu(&self, m: &LatticeVector) -> Option<u64> {
        dist_point(m, &self.ambient.difference(&self.host))
    }

    pub fn d_bar(&self) -> f64 {
        self.host.iter().map(|n| self.d(n)).fold(1.0, f64::max)
    }

    /// D >= 1, host inside ambient, and D(m) <= T mu(m)^{1/5} whenever D(m) >= 4T/kappa0.
    pub fn validate(&self) -> Result<()> {
        if !self.host.is_subset(&self.ambient) {
            return Err(QpError::Invalid("host must lie inside ambient".into()));
        }
        if !(self.t >= 8.0) || !(self.kappa0 > 0.0 && self.kappa0 < 1.0) {
            return Err(QpError::Invalid("profile needs T >= 8 and 0 < kappa0 < 1".into()));
        }
        for n in self.host.iter() {
            let d = self.d(n);
            if !(d >= 1.0) {
                return Err(QpError::Invalid(format!("D({n}) = {d} < 1")));
            }
            if d >= self.threshold() {
                if let Some(mu) = self.mu(n) {
                    if d > self.t * (mu as f64).powf(FIFTH) {
                        return Err(QpError::Invalid(format!("D({n}) = {d} exceeds T mu^(1/5)")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// exp(-kappa0 |m - n|), the extremal admissible pair weight.
pub fn decay_weight(kappa0: f64) -> impl Fn(&LatticeVector, &LatticeVector) -> f64 {
    move |m, n| (-kappa0 * m.dist(n) as f64).exp()
}

/// Logs of the two weights plus ||gamma|| and D-bar.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub log_w: f64,
    pub log_big_w: f64,
    pub norm: u64,
    pub d_bar: f64,
}

impl Weights {
    pub fn w(&self) -> f64 {
        self.log_w.exp()
    }

    pub fn big_w(&self) -> f64 {
        self.log_big_w.exp()
    }
}

pub fn weights<F>(g: &Trajectory, prof: &WeightProfile, w: &F) -> Result<Weights>
where
    F: Fn(&LatticeVector, &LatticeVector) -> f64,
{
    let dsum: f64 = g.0.iter().map(|n| prof.d(n)).sum();
    let mut log_w = dsum;
    for p in g.0.windows(2) {
        let x = w(&p[0], &p[1]);
        let cap = (-prof.kappa0 * p[0].dist(&p[1]) as f64).exp();
        if !(x >= 0.0) || x > cap * (1.0 + 1e-12) {
            return Err(QpError::Invalid(format!("pair weight w({}, {}) = {x} violates the decay bound", p[0], p[1])));
        }
        log_w += x.ln();
    }
    let norm = g.path_norm();
    let d_bar = g.0.iter().map(|n| prof.d(n)).fold(f64::NEG_INFINITY, f64::max);
    Ok(Weights { log_w, log_big_w: -prof.kappa0 * norm as f64 + dsum, norm, d_bar })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Plain,
    /// Adjacent pairs exempt, with the flanking conditions around them.
    R,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Clause {
    Pair { i: usize, j: usize },
    Flank { pair: usize, other: usize },
    OutsideHost { i: usize },
}

fn pair_ok(pts: &[LatticeVector], prof: &WeightProfile, i: usize, j: usize) -> bool {
    let m = prof.d(&pts[i]).min(prof.d(&pts[j]));
    m <= prof.t * (segment_norm(&pts[i..=j]) as f64).powf(FIFTH)
}

/// First violated clause, or Ok for admissible trajectories.
pub fn is_admissible(g: &Trajectory, prof: &WeightProfile, variant: Variant) -> std::result::Result<(), Clause> {
    let pts = &g.0;
    if let Some(i) = pts.iter().position(|n| !prof.host.contains(n)) {
        return Err(Clause::OutsideHost { i });
    }
    check_points(pts, prof, variant)
}

fn check_points(pts: &[LatticeVector], prof: &WeightProfile, variant: Variant) -> std::result::Result<(), Clause> {
    let k = pts.len();
    let thr = prof.threshold();
    for i in 0..k {
        for j in (i + 1)..k {
            if variant == Variant::R && j == i + 1 {
                continue;
            }
            let m = prof.d(&pts[i]).min(prof.d(&pts[j]));
            if m >= thr && !pair_ok(pts, prof, i, j) {
                return Err(Clause::Pair { i, j });
            }
        }
    }
    if variant == Variant::R {
        for i in 0..k.saturating_sub(1) {
            let m = prof.d(&pts[i]).min(prof.d(&pts[i + 1]));
            if m > prof.t * (pts[i].dist(&pts[i + 1]) as f64).powf(FIFTH) {
                for jp in 0..i {
                    if !pair_ok(pts, prof, jp, i) || !pair_ok(pts, prof, jp, i + 1) {
                        return Err(Clause::Flank { pair: i, other: jp });
                    }
                }
                for jpp in (i + 2)..k {
                    if !pair_ok(pts, prof, i, jpp) || !pair_ok(pts, prof, i + 1, jpp) {
                        return Err(Clause::Flank { pair: i, other: jpp });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Indices i with min(D(n_i), D(n_{i+1})) >= T |n_i - n_{i+1}|^{1/5}; defined only for
/// R-admissible trajectories that are not plain-admissible.
pub fn p_set(g: &Trajectory, prof: &WeightProfile) -> Option<Vec<usize>> {
    if is_admissible(g, prof, Variant::R).is_err() || is_admissible(g, prof, Variant::Plain).is_ok() {
        return None;
    }
    let pts = &g.0;
    Some(
        (0..pts.len() - 1)
            .filter(|&i| prof.d(&pts[i]).min(prof.d(&pts[i + 1])) >= prof.t * (pts[i].dist(&pts[i + 1]) as f64).powf(FIFTH))
            .collect(),
    )
}

/// Pointwise estimate W <= exp(-kappa0 ||gamma|| + k M^5), M = 4T/kappa0, claimed when
/// log D-bar <= 5 log M. Returns (log W, log bound) or None when t_D > 5.
pub fn small_t_estimate(g: &Trajectory, prof: &WeightProfile) -> Option<(f64, f64)> {
    let w = weights(g, prof, &decay_weight(prof.kappa0)).ok()?;
    let m = prof.threshold();
    if w.d_bar.ln() > 5.0 * m.ln() {
        return None;
    }
    Some((w.log_big_w, -prof.kappa0 * w.norm as f64 + g.len() as f64 * m.powi(5)))
}

/// Sum of terms eps0^(level/2) exp(b), stored as level -> log of the coefficient sum.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LevelSum {
    pub terms: BTreeMap<u32, f64>,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl LevelSum {
    pub fn zero() -> Self {
        LevelSum::default()
    }

    /// eps0^(half_level/2) exp(log_coef).
    pub fn term(half_level: u32, log_coef: f64) -> Self {
        let mut s = LevelSum::zero();
        s.add_term(half_level, log_coef);
        s
    }

    pub fn add_term(&mut self, half_level: u32, log_coef: f64) {
        if log_coef == f64::NEG_INFINITY {
            return;
        }
        let e = self.terms.entry(half_level).or_insert(f64::NEG_INFINITY);
        *e = log_add(*e, log_coef);
    }

    pub fn add(&self, o: &LevelSum) -> LevelSum {
        let mut out = self.clone();
        for (&l, &c) in &o.terms {
            out.add_term(l, c);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// log of the value for a given log eps0.
    pub fn log_value(&self, log_eps0: f64) -> f64 {
        self.terms
            .iter()
            .fold(f64::NEG_INFINITY, |acc, (&l, &c)| log_add(acc, l as f64 / 2.0 * log_eps0 + c))
    }

    pub fn value(&self, log_eps0: f64) -> f64 {
        self.log_value(log_eps0).exp()
    }

    /// Compares two sums for the given eps0. When eps0 is so small that one
    /// half-level outweighs every coefficient spread, levels are compared
    /// lexicographically (lowest level first); otherwise the logs are compared.
    pub fn compare(&self, o: &LevelSum, log_eps0: f64) -> Ordering {
        let spread = self
            .terms
            .values()
            .chain(o.terms.values())
            .fold(0.0f64, |acc, c| acc.max(c.abs()));
        let separated = -log_eps0 / 2.0 > 2.0 * spread + 64.0;
        if !separated {
            return self.log_value(log_eps0).total_cmp(&o.log_value(log_eps0));
        }
        let mut levels: Vec<u32> = self.terms.keys().chain(o.terms.keys()).copied().collect();
        levels.sort_unstable();
        levels.dedup();
        for l in levels {
            let a = self.terms.get(&l).copied().unwrap_or(f64::NEG_INFINITY);
            let b = o.terms.get(&l).copied().unwrap_or(f64::NEG_INFINITY);
            if a == b || (a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)) {
                continue;
            }
            // a larger coefficient at a lower level dominates everything above it
            return a.total_cmp(&b);
        }
        Ordering::Equal
    }

    pub fn le(&self, o: &LevelSum, log_eps0: f64) -> bool {
        self.compare(o, log_eps0) != Ordering::Greater
    }
}

/// Budget for exhaustive enumeration.
pub const MAX_HOST: usize = 30;
pub const MAX_LEN: usize = 6;

#[derive(Clone, Debug)]
pub struct EnumSums {
    /// sum eps0^{k-1} w(gamma) over admissible gamma of length k <= cap.
    pub partial_w: LevelSum,
    /// Same with W(gamma).
    pub partial_big_w: LevelSum,
    /// Bound for every length above the cap.
    pub tail: LevelSum,
    pub count: u64,
}

impl EnumSums {
    pub fn total(&self) -> LevelSum {
        self.partial_big_w.add(&self.tail)
    }
}

/// log of sum_{k > cap} eps0^{k-1} e^{k D} (8/kappa0)^{(k-1) nu}, as a LevelSum at level cap.
pub fn tail_bound(log_eps0: f64, d_bar: f64, kappa0: f64, nu: usize, cap: usize) -> Result<LevelSum> {
    let log_q_rest = d_bar + nu as f64 * (8.0 / kappa0).ln();
    let log_q = log_eps0 + log_q_rest;
    if !(log_q < 0.0) {
        return Err(QpError::Regime("eps0 too large: trajectory tail series diverges".into()));
    }
    let coef = d_bar + cap as f64 * log_q_rest - (-(log_q.exp())).ln_1p();
    Ok(LevelSum::term(2 * cap as u32, coef))
}

/// Exhaustive admissible-trajectory sums from m to every endpoint in the host.
pub fn sum_enumerate_all<F>(
    m: &LatticeVector,
    prof: &WeightProfile,
    log_eps0: f64,
    variant: Variant,
    len_cap: usize,
    w: &F,
) -> Result<BTreeMap<LatticeVector, EnumSums>>
where
    F: Fn(&LatticeVector, &LatticeVector) -> f64,
{
    if prof.host.len() > MAX_HOST || len_cap > MAX_LEN || len_cap == 0 {
        return Err(QpError::Budget { needed: (prof.host.len() * len_cap) as u128, budget: MAX_HOST * MAX_LEN });
    }
    if !prof.host.contains(m) {
        return Err(QpError::Invalid(format!("start {m} not in host")));
    }
    let nu = m.dim();
    let tail = tail_bound(log_eps0, prof.d_bar(), prof.kappa0, nu, len_cap)?;
    let host = prof.host.to_vec();
    let mut acc: BTreeMap<LatticeVector, (LevelSum, LevelSum, u64)> = BTreeMap::new();
    let mut path = vec![m.clone()];
    let mut err = None;
    dfs(&mut path, &host, prof, variant, len_cap, w, &mut acc, &mut err);
    if let Some(e) = err {
        return Err(e);
    }
    Ok(host
        .iter()
        .map(|n| {
            let (pw, pbw, count) = acc.remove(n).unwrap_or_default();
            (n.clone(), EnumSums { partial_w: pw, partial_big_w: pbw, tail: tail.clone(), count })
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn dfs<F>(
    path: &mut Vec<LatticeVector>,
    host: &[LatticeVector],
    prof: &WeightProfile,
    variant: Variant,
    cap: usize,
    w: &F,
    acc: &mut BTreeMap<LatticeVector, (LevelSum, LevelSum, u64)>,
    err: &mut Option<QpError>,
) where
    F: Fn(&LatticeVector, &LatticeVector) -> f64,
{
    // every clause concerns a pair inside the path, so inadmissible prefixes are pruned
    if check_points(path, prof, variant).is_err() {
        return;
    }
    let g = Trajectory(path.clone());
    match weights(&g, prof, w) {
        Ok(wt) => {
            let level = 2 * (path.len() as u32 - 1);
            let e = acc.entry(path.last().unwrap().clone()).or_default();
            e.0.add_term(level, wt.log_w);
            e.1.add_term(level, wt.log_big_w);
            e.2 += 1;
        }
        Err(e) => {
            *err = Some(e);
            return;
        }
    }
    if path.len() == cap {
        return;
    }
    for n in host {
        if n == path.last().unwrap() {
            continue;
        }
        path.push(n.clone());
        dfs(path, host, prof, variant, cap, w, acc, err);
        path.pop();
        if err.is_some() {
            return;
        }
    }
}

/// Sums from m to n only.
pub fn sum_enumerate<F>(
    m: &LatticeVector,
    n: &LatticeVector,
    prof: &WeightProfile,
    log_eps0: f64,
    variant: Variant,
    len_cap: usize,
    w: &F,
) -> Result<EnumSums>
where
    F: Fn(&LatticeVector, &LatticeVector) -> f64,
{
    let mut all = sum_enumerate_all(m, prof, log_eps0, variant, len_cap, w)?;
    all.remove(n).ok_or_else(|| QpError::Invalid(format!("end {n} not in host")))
}

/// log of the smallness threshold min(2^{-24nu-4} k^{4nu}, exp(-(8T/k)^5), 2^{-10(nu+1)} T^{-8nu}).
pub fn log_eps0_threshold(nu: usize, t: f64, kappa0: f64) -> f64 {
    let nu = nu as f64;
    let ln2 = 2f64.ln();
    let a = -(24.0 * nu + 4.0) * ln2 + 4.0 * nu * kappa0.ln();
    let b = -(8.0 * t / kappa0).powi(5);
    let c = -10.0 * (nu + 1.0) * ln2 - 8.0 * nu * t.ln();
    a.min(b).min(c)
}

/// Right-hand side of the trajectory-sum lemma.
pub fn closed_bound(m: &LatticeVector, n: &LatticeVector, prof: &WeightProfile, log_eps0: f64) -> Result<LevelSum> {
    let nu = m.dim();
    let thr = log_eps0_threshold(nu, prof.t, prof.kappa0);
    if log_eps0 > thr {
        return Err(QpError::Regime(format!("log eps0 = {log_eps0} above smallness threshold {thr}")));
    }
    let mu_term = |x: &LatticeVector| prof.mu(x).map(|mu| 2.0 * prof.t * (mu as f64).powf(FIFTH));
    let d_bar = prof.d_bar();
    if m != n {
        let dist = m.dist(n) as f64;
        let mu_min = match (mu_term(m), mu_term(n)) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (Some(a), None) | (None, Some(a)) => Some(a),
            (None, None) => None,
        };
        let second = LevelSum::term(1, 2f64.ln() - prof.kappa0 * dist / 4.0 + 2.0 * d_bar);
        Ok(match mu_min {
            Some(mt) => {
                let first = LevelSum::term(1, 3f64.ln() - 7.0 / 8.0 * prof.kappa0 * dist + mt);
                if first.le(&second, log_eps0) {
                    first
                } else {
                    second
                }
            }
            None => second,
        })
    } else {
        let second = LevelSum::term(0, 2f64.ln() + 2.0 * d_bar);
        Ok(match mu_term(m) {
            Some(mt) => {
                let mut first = LevelSum::term(0, prof.d(m));
                first.add_term(1, 3f64.ln() + mt);
                if first.le(&second, log_eps0) {
                    first
                } else {
                    second
                }
            }
            None => second,
        })
    }
}

/// sum over all trajectories in `host` from m to n with k points of exp(-alpha ||gamma||).
pub fn gamma_sum(m: &LatticeVector, n: &LatticeVector, host: &SiteSet, k: usize, alpha: f64) -> f64 {
    fn rec(path: &mut Vec<LatticeVector>, target: &LatticeVector, host: &[LatticeVector], k: usize, alpha: f64, norm: u64) -> f64 {
        if path.len() == k {
            return if path.last().unwrap() == target { (-alpha * norm as f64).exp() } else { 0.0 };
        }
        let mut s = 0.0;
        for x in host {
            let last = path.last().unwrap().clone();
            if *x == last {
                continue;
            }
            let d = last.dist(x);
            path.push(x.clone());
            s += rec(path, target, host, k, alpha, norm + d);
            path.pop();
        }
        s
    }
    let pts = host.to_vec();
    rec(&mut vec![m.clone()], n, &pts, k, alpha, 0)
}

/// (8/alpha)^{(k-1) nu}.
pub fn gamma_sum_bound(k: usize, alpha: f64, nu: usize) -> f64 {
    (8.0 / alpha).powf(((k - 1) * nu) as f64)
}
