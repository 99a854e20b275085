//! Multiscale site sets: correct words, proper subtraction systems and their
//! stabilizing iteration, the site classes M^(s')_{k,s-1}, and the plain,
//! reflection-symmetric and paired Lambda-sets built from them.

use crate::dual_operator::lambda_of;
use crate::error::{QpError, Result};
use crate::lattice::{ball, dist, LatticeVector, SiteSet};
use crate::model::{Frequency, ScaleLadder};
use crate::resonance::k_point;
use std::collections::{BTreeMap, HashMap};

// ---------------------------------------------------------------- words

/// No sub-word (a_j..a_k), j < k, with a_j = a_k and every interior letter < a_j.
pub fn is_correct_word(a: &[usize]) -> bool {
    minimal_incorrect_subword(a).is_none()
}

/// Shortest offending sub-word (j, k), if any.
pub fn minimal_incorrect_subword(a: &[usize]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for j in 0..a.len() {
        let mut interior_max = 0usize;
        for k in j + 1..a.len() {
            if a[k] == a[j] && interior_max < a[j] {
                if best.map_or(true, |(bj, bk)| k - j < bk - bj) {
                    best = Some((j, k));
                }
                break;
            }
            interior_max = interior_max.max(a[k]);
            if interior_max >= a[j] {
                break;
            }
        }
    }
    best
}

pub const MAX_WORD_ALPHABET: usize = 4;

/// Longest correct word over {1..s} by exhaustive search, with a witness.
pub fn max_correct_length(s: usize) -> Result<(usize, Vec<usize>)> {
    if s == 0 {
        return Err(QpError::Invalid("alphabet must be non-empty".into()));
    }
    if s > MAX_WORD_ALPHABET {
        return Err(QpError::Budget { needed: s as u128, budget: MAX_WORD_ALPHABET });
    }
    // correct words are prefix-closed, so a DFS over correct prefixes is exhaustive
    fn dfs(word: &mut Vec<usize>, s: usize, best: &mut Vec<usize>) {
        if word.len() > best.len() {
            *best = word.clone();
        }
        for c in 1..=s {
            word.push(c);
            if is_correct_word(word) {
                dfs(word, s, best);
            }
            word.pop();
        }
    }
    let mut best = Vec::new();
    dfs(&mut Vec::new(), s, &mut best);
    Ok((best.len(), best))
}

// ---------------------------------------------------- subtraction systems

/// Sets with a level function and, per set, a decomposition into pieces.
#[derive(Clone, Debug, Default)]
pub struct SubtractionSystem {
    pub sets: Vec<SiteSet>,
    pub levels: Vec<usize>,
    pub pieces: Vec<Vec<SiteSet>>,
}

impl SubtractionSystem {
    /// Each set is its own single piece.
    pub fn new(sets: Vec<SiteSet>, levels: Vec<usize>) -> Result<Self> {
        if sets.len() != levels.len() {
            return Err(QpError::Invalid("one level per set required".into()));
        }
        let pieces = sets.iter().map(|s| vec![s.clone()]).collect();
        Ok(SubtractionSystem { sets, levels, pieces })
    }

    pub fn max_level(&self) -> usize {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    /// R_a: minimal distance between distinct level-a sets (None if fewer than two).
    pub fn separation(&self, a: usize) -> Option<u64> {
        let idx: Vec<usize> = (0..self.sets.len()).filter(|&i| self.levels[i] == a).collect();
        let mut best: Option<u64> = None;
        for (x, &i) in idx.iter().enumerate() {
            for &j in &idx[x + 1..] {
                if self.sets[i] == self.sets[j] {
                    continue;
                }
                let d = dist(&self.sets[i], &self.sets[j]).unwrap_or(u64::MAX);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }

    /// Conditions (i) and (ii) of a proper subtraction system.
    pub fn validate(&self) -> Result<()> {
        if self.sets.iter().any(|s| s.is_empty()) {
            return Err(QpError::Invalid("empty set in system".into()));
        }
        let top = self.max_level();
        let mut r: BTreeMap<usize, Option<u64>> = BTreeMap::new();
        for a in 1..=top + 1 {
            let ra = self.separation(a);
            if ra == Some(0) {
                return Err(QpError::Invalid(format!("level-{a} sets intersect (R_a = 0)")));
            }
            r.insert(a, ra);
        }
        for (i, set) in self.sets.iter().enumerate() {
            let a = self.levels[i] + 1;
            let union: SiteSet = self.pieces[i].iter().flat_map(|p| p.iter().cloned()).collect();
            if &union != set || self.pieces[i].iter().any(|p| !p.is_subset(set)) {
                return Err(QpError::Invalid(format!("pieces of set {i} do not cover it")));
            }
            for p in &self.pieces[i] {
                if let Some(ra) = r[&a] {
                    let d = crate::lattice::diam(p)? as f64;
                    if !(d < ra as f64 / (1u64 << a.min(63)) as f64) {
                        return Err(QpError::Invalid(format!(
                            "piece of set {i} has diameter {d} >= 2^-{a} R_{a} = {}",
                            ra as f64 / (1u64 << a.min(63)) as f64
                        )));
                    }
                }
                for (j, other) in self.sets.iter().enumerate() {
                    if j != i && set.intersects(other) && !p.intersects(other) {
                        return Err(QpError::Invalid(format!(
                            "piece of set {i} misses intersecting set {j}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Iterates L_l = L_{l-1} minus every set not contained in L_{l-1}; returns the
/// fixpoint and the number of steps that changed the set.
pub fn fixpoint_unchecked(start: &SiteSet, sets: &[SiteSet]) -> (SiteSet, usize) {
    let mut cur = start.clone();
    let mut steps = 0;
    loop {
        let mut next = cur.clone();
        for s in sets {
            if s.intersects(&cur) && !s.is_subset(&cur) {
                for n in s.iter() {
                    next.remove(n);
                }
            }
        }
        if next == cur {
            return (cur, steps);
        }
        cur = next;
        steps += 1;
    }
}

/// Validated fixpoint: (final set, l0).
pub fn subtraction_fixpoint(start: &SiteSet, sys: &SubtractionSystem) -> Result<(SiteSet, usize)> {
    sys.validate()?;
    Ok(fixpoint_unchecked(start, &sys.sets))
}

/// Inside-or-disjoint dichotomy.
pub fn inside_or_disjoint(a: &SiteSet, target: &SiteSet) -> bool {
    a.is_subset(target) || !a.intersects(target)
}

// ---------------------------------------------------------- union-find

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        let p = self.0[i];
        if p == i {
            return i;
        }
        let r = self.find(p);
        self.0[i] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

// ---------------------------------------------------------- site classes

/// M^(s')_{k,s-1} for s' = 1..s-1 with their thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteClassification {
    pub k: f64,
    pub s: usize,
    pub classes: BTreeMap<usize, Vec<LatticeVector>>,
    pub thresholds: BTreeMap<usize, f64>,
    pub window_radius: u64,
}

impl SiteClassification {
    pub fn class(&self, sp: usize) -> &[LatticeVector] {
        self.classes.get(&sp).map_or(&[], |v| v.as_slice())
    }

    /// Minimal pairwise distance inside class s' (None for fewer than two sites).
    pub fn min_separation(&self, sp: usize) -> Option<u64> {
        let c = self.class(sp);
        c.iter()
            .enumerate()
            .flat_map(|(i, a)| c[i + 1..].iter().map(move |b| a.dist(b)))
            .min()
    }

    pub fn contains(&self, m: &LatticeVector) -> Option<usize> {
        self.classes.iter().find(|(_, v)| v.contains(m)).map(|(&s, _)| s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlainReport {
    pub set: SiteSet,
    /// Steps of the fixpoint continuation after the one-shot removal.
    pub extra_steps: usize,
    /// B(2R^(s)) inside the set.
    pub sandwich: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymReport {
    pub set: SiteSet,
    pub steps: usize,
    pub sandwich: bool,
    /// Number of equivalence classes in the system.
    pub classes: usize,
    /// Every lower-scale set is inside or disjoint.
    pub dichotomy: bool,
}

/// One lower-scale set Lambda^(r)_k(m) of the classification.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerSet {
    pub level: usize,
    pub m: LatticeVector,
    pub set: SiteSet,
}

/// Builder for Lambda-sets with a per-(k, s) cache of Lambda^(s)_k(0).
pub struct SetBuilder {
    pub freq: Frequency,
    pub ladder: ScaleLadder,
    cache: HashMap<(u64, usize), PlainReport>,
}

impl SetBuilder {
    pub fn new(freq: Frequency, ladder: ScaleLadder) -> Result<Self> {
        if ladder.regime == crate::model::Regime::Faithful {
            return Err(QpError::Regime("faithful ladder refuses set materialization".into()));
        }
        Ok(SetBuilder { freq, ladder, cache: HashMap::new() })
    }

    fn nu(&self) -> usize {
        self.freq.nu()
    }

    fn r(&self, s: usize) -> Result<f64> {
        self.ladder.r(s)
    }

    fn ball(&self, r: f64) -> Result<SiteSet> {
        ball(self.nu(), r, self.ladder.site_budget)
    }

    /// Normalized diagonal (m.omega + k)^2 / lambda(k).
    pub fn v(&self, m: &LatticeVector, k: f64) -> f64 {
        let x = self.freq.dot(m) + k;
        x * x / lambda_of(k)
    }

    pub fn default_window(&self, s: usize) -> Result<u64> {
        Ok((3.0 * self.r(s)? + 3.0 * self.r(s - 1).unwrap_or(0.0)).floor() as u64)
    }

    fn threshold(&self, sp: usize, s: usize) -> Result<f64> {
        let top = s - 1;
        let base = if sp == 1 { self.ladder.delta(0)? / 16.0 } else { 0.75 * self.ladder.delta(sp - 1)? };
        let mut t = base;
        for spp in sp + 1..=top {
            t -= self.ladder.delta(spp - 1)?;
        }
        Ok(t)
    }

    /// M^(s')_{k,s-1}, top class first, each lower class avoiding the Lambda-sets above it.
    pub fn site_classes(&mut self, k: f64, s: usize, window_radius: Option<u64>) -> Result<SiteClassification> {
        if s < 2 {
            return Err(QpError::Invalid("site classes need s >= 2".into()));
        }
        let w = match window_radius {
            Some(w) => w,
            None => self.default_window(s)?,
        };
        let window = self.ball(w as f64)?;
        let v0 = self.v(&LatticeVector::zero(self.nu()), k);
        let mut classes = BTreeMap::new();
        let mut thresholds = BTreeMap::new();
        let mut covered = SiteSet::new();
        for sp in (1..s).rev() {
            let t = self.threshold(sp, s)?;
            thresholds.insert(sp, t);
            let members: Vec<LatticeVector> = window
                .iter()
                .filter(|m| (self.v(m, k) - v0).abs() <= t && !covered.contains(m))
                .cloned()
                .collect();
            if sp > 1 {
                for m in &members {
                    let l = self.lambda_at(k, m, sp)?;
                    covered.extend(&l);
                }
            }
            classes.insert(sp, members);
        }
        Ok(SiteClassification { k, s, classes, thresholds, window_radius: w })
    }

    /// Lambda^(s')_k(m) = m + Lambda^(s')_{k + m.omega}(0).
    pub fn lambda_at(&mut self, k: f64, m: &LatticeVector, sp: usize) -> Result<SiteSet> {
        let kk = k + self.freq.dot(m);
        Ok(self.lambda_plain(kk, sp)?.translate(m))
    }

    /// All Lambda^(r)_k(m'), m' in M^(r)_{k,s-1}.
    pub fn lower_sets(&mut self, k: f64, s: usize, window_radius: Option<u64>) -> Result<Vec<LowerSet>> {
        let cls = self.site_classes(k, s, window_radius)?;
        let mut out = Vec::new();
        for (&r, ms) in &cls.classes {
            for m in ms {
                out.push(LowerSet { level: r, m: m.clone(), set: self.lambda_at(k, m, r)? });
            }
        }
        Ok(out)
    }

    pub fn lambda_plain(&mut self, k: f64, s: usize) -> Result<SiteSet> {
        Ok(self.lambda_plain_report(k, s)?.set)
    }

    /// B(3R^(s)) minus every straddling lower set, then the fixpoint continuation.
    pub fn lambda_plain_report(&mut self, k: f64, s: usize) -> Result<PlainReport> {
        if s == 0 {
            return Err(QpError::Invalid("scale must be >= 1".into()));
        }
        let key = (k.to_bits(), s);
        if let Some(r) = self.cache.get(&key) {
            return Ok(r.clone());
        }
        let rep = if s == 1 {
            PlainReport { set: self.ball(2.0 * self.r(1)?)?, extra_steps: 0, sandwich: true }
        } else {
            let outer = self.ball(3.0 * self.r(s)?)?;
            let lower = self.lower_sets(k, s, None)?;
            let mut set = outer.clone();
            for l in &lower {
                if crate::lattice::straddles(&l.set, &outer) {
                    for n in l.set.iter() {
                        set.remove(n);
                    }
                }
            }
            let sets: Vec<SiteSet> = lower.into_iter().map(|l| l.set).collect();
            let (set, extra_steps) = fixpoint_unchecked(&set, &sets);
            let inner = self.ball(2.0 * self.r(s)?)?;
            PlainReport { sandwich: inner.is_subset(&set), set, extra_steps }
        };
        self.cache.insert(key, rep.clone());
        Ok(rep)
    }

    /// Groups lower sets closed under `t` into classes: same level and either
    /// partner centers or intersecting unions.
    fn symmetric_system<F>(lower: &[LowerSet], t: F) -> Vec<(usize, SiteSet)>
    where
        F: Fn(&LatticeVector) -> LatticeVector,
    {
        let sym: Vec<SiteSet> = lower
            .iter()
            .map(|l| l.set.union(&l.set.iter().map(&t).collect()))
            .collect();
        let mut uf = UnionFind::new(lower.len());
        for i in 0..lower.len() {
            for j in i + 1..lower.len() {
                if lower[i].level == lower[j].level
                    && (t(&lower[i].m) == lower[j].m || sym[i].intersects(&sym[j]))
                {
                    uf.union(i, j);
                }
            }
        }
        let mut groups: BTreeMap<usize, (usize, SiteSet)> = BTreeMap::new();
        for i in 0..lower.len() {
            let root = uf.find(i);
            let e = groups.entry(root).or_insert_with(|| (lower[i].level, SiteSet::new()));
            e.1.extend(&sym[i]);
        }
        groups.into_values().collect()
    }

    fn symmetric_fixpoint(start: SiteSet, lower: &[LowerSet], sys: &[(usize, SiteSet)], inner: SiteSet) -> SymReport {
        let sets: Vec<SiteSet> = sys.iter().map(|(_, s)| s.clone()).collect();
        let (set, steps) = fixpoint_unchecked(&start, &sets);
        let dichotomy = lower.iter().all(|l| inside_or_disjoint(&l.set, &set));
        SymReport { sandwich: inner.is_subset(&set), set, steps, classes: sys.len(), dichotomy }
    }

    /// Reflection-symmetric set for |k| < delta^(s-2).
    pub fn lambda_sym(&mut self, k: f64, s: usize) -> Result<SymReport> {
        if s < 2 {
            return Err(QpError::Invalid("lambda_sym needs s >= 2".into()));
        }
        let lim = self.ladder.delta(s - 2)?;
        if !(k.abs() < lim) {
            return Err(QpError::Regime(format!("|k| = {} not below delta^({}) = {lim}", k.abs(), s - 2)));
        }
        let start = self.ball(3.0 * self.r(s)?)?;
        let lower = self.lower_sets(k, s, None)?;
        let sys = Self::symmetric_system(&lower, |n| n.neg());
        let inner = self.ball(2.0 * self.r(s)?)?;
        Ok(Self::symmetric_fixpoint(start, &lower, &sys, inner))
    }

    /// T-invariant set, T(n) = n0 - n, for k within 2 sigma(n0) of k_{n0}.
    pub fn lambda_pair(&mut self, k: f64, s: usize, n0: &LatticeVector) -> Result<SymReport> {
        if n0.is_zero() {
            return Err(QpError::Invalid("n0 must be non-zero".into()));
        }
        let kn = k_point(&self.freq, n0);
        let lim = 2.0 * self.ladder.sigma(n0)?;
        if !((k - kn).abs() <= lim) {
            return Err(QpError::Regime(format!("|k - k_n0| = {} exceeds 2 sigma(n0) = {lim}", (k - kn).abs())));
        }
        let tr = |n: &LatticeVector| n0.sub(n);
        let b = self.ball(3.0 * self.r(s)?)?;
        let start = b.union(&b.reflect_through(n0));
        let b2 = self.ball(2.0 * self.r(s)?)?;
        let inner = b2.union(&b2.translate(n0));
        if s == 1 {
            return Ok(SymReport { sandwich: inner.is_subset(&start), set: start, steps: 0, classes: 0, dichotomy: true });
        }
        let w = self.default_window(s)? + n0.norm();
        let lower = self.lower_sets(k, s, Some(w))?;
        let sys = Self::symmetric_system(&lower, tr);
        Ok(Self::symmetric_fixpoint(start, &lower, &sys, inner))
    }
}

// ---------------------------------------------------------- pair regime

/// Inner (A) / outer (B) split around k_{n0}; both may hold on the overlap band.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairRegime {
    pub inner: bool,
    pub outer: bool,
    pub offset: f64,
}

pub fn pair_regime(freq: &Frequency, ladder: &ScaleLadder, k: f64, n0: &LatticeVector, s: usize) -> Result<PairRegime> {
    if s < 2 {
        return Err(QpError::Invalid("pair regime needs s >= 2".into()));
    }
    let d = (k - k_point(freq, n0)).abs();
    let ld = ladder.log_delta(s - 1)?;
    let widen = 4.0 * (ld * 15.0 / 16.0).exp();
    let inner = d > 0.0 && d < (0.75 * ld).exp() - widen;
    let outer = (0.875 * ld).exp() + widen < d && d < 2.0 * ladder.sigma(n0)?;
    Ok(PairRegime { inner, outer, offset: d })
}

/// Partner m^- of m^+ (or m^+ of m^-) across the resonance at n0.
pub fn partner(freq: &Frequency, k: f64, n0: &LatticeVector, m: &LatticeVector) -> LatticeVector {
    let same = (k + freq.dot(m)).signum() == freq.dot(n0).signum();
    if same {
        m.sub(n0)
    } else {
        m.add(n0)
    }
}

/// Partner pairs within the window; pairs whose partner leaves it are returned as dropped.
pub fn partner_pairs(
    freq: &Frequency,
    k: f64,
    n0: &LatticeVector,
    sites: &[LatticeVector],
    window_radius: u64,
) -> (Vec<(LatticeVector, LatticeVector)>, Vec<LatticeVector>) {
    let mut pairs = Vec::new();
    let mut dropped = Vec::new();
    for m in sites {
        let p = partner(freq, k, n0, m);
        if p.norm() <= window_radius {
            pairs.push((m.clone(), p));
        } else {
            dropped.push(m.clone());
        }
    }
    (pairs, dropped)
}

#[cfg(test)]
mod tests;
