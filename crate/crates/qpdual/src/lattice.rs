//! Integer lattice primitives: l1 norms, balls, translations, reflections and
//! set relations on finite site sets.

use crate::error::{QpError, Result};
use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

pub const DEFAULT_SITE_BUDGET: usize = 20_000;

/// A point of Z^nu.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LatticeVector(pub Vec<i64>);

impl LatticeVector {
    pub fn new(coords: Vec<i64>) -> Self {
        LatticeVector(coords)
    }

    pub fn zero(nu: usize) -> Self {
        LatticeVector(vec![0; nu])
    }

    pub fn unit(nu: usize, j: usize) -> Self {
        let mut v = vec![0; nu];
        v[j] = 1;
        LatticeVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn norm(&self) -> u64 {
        l1_norm(self)
    }

    pub fn add(&self, o: &LatticeVector) -> LatticeVector {
        LatticeVector(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, o: &LatticeVector) -> LatticeVector {
        LatticeVector(self.0.iter().zip(&o.0).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> LatticeVector {
        LatticeVector(self.0.iter().map(|a| -a).collect())
    }

    pub fn scale(&self, t: i64) -> LatticeVector {
        LatticeVector(self.0.iter().map(|a| a * t).collect())
    }

    /// l1 distance.
    pub fn dist(&self, o: &LatticeVector) -> u64 {
        self.0.iter().zip(&o.0).map(|(a, b)| (a - b).unsigned_abs()).sum()
    }

    /// n . omega, accumulated left to right.
    pub fn dot(&self, omega: &[f64]) -> f64 {
        self.0.iter().zip(omega).fold(0.0, |acc, (&n, &w)| acc + n as f64 * w)
    }
}

impl Ord for LatticeVector {
    fn cmp(&self, other: &Self) -> Ordering {
        self.norm().cmp(&other.norm()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for LatticeVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for LatticeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for LatticeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<Vec<i64>> for LatticeVector {
    fn from(v: Vec<i64>) -> Self {
        LatticeVector(v)
    }
}

impl<const N: usize> From<[i64; N]> for LatticeVector {
    fn from(v: [i64; N]) -> Self {
        LatticeVector(v.to_vec())
    }
}

pub fn l1_norm(n: &LatticeVector) -> u64 {
    n.0.iter().map(|c| c.unsigned_abs()).sum()
}

/// Finite set of sites in canonical order (norm, then lexicographic).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct SiteSet(BTreeSet<LatticeVector>);

impl fmt::Debug for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl FromIterator<LatticeVector> for SiteSet {
    fn from_iter<I: IntoIterator<Item = LatticeVector>>(iter: I) -> Self {
        SiteSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a SiteSet {
    type Item = &'a LatticeVector;
    type IntoIter = std::collections::btree_set::Iter<'a, LatticeVector>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Set transformations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Transform {
    Translate(LatticeVector),
    Reflect,
    /// n -> m - n
    ReflectThrough(LatticeVector),
}

impl Transform {
    pub fn apply(&self, n: &LatticeVector) -> LatticeVector {
        match self {
            Transform::Translate(m) => n.add(m),
            Transform::Reflect => n.neg(),
            Transform::ReflectThrough(m) => m.sub(n),
        }
    }
}

impl SiteSet {
    pub fn new() -> Self {
        SiteSet(BTreeSet::new())
    }

    pub fn singleton(n: LatticeVector) -> Self {
        let mut s = SiteSet::new();
        s.insert(n);
        s
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, n: &LatticeVector) -> bool {
        self.0.contains(n)
    }

    pub fn insert(&mut self, n: LatticeVector) -> bool {
        self.0.insert(n)
    }

    pub fn remove(&mut self, n: &LatticeVector) -> bool {
        self.0.remove(n)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LatticeVector> {
        self.0.iter()
    }

    /// Sites in canonical order.
    pub fn to_vec(&self) -> Vec<LatticeVector> {
        self.0.iter().cloned().collect()
    }

    pub fn transform(&self, t: &Transform) -> SiteSet {
        self.0.iter().map(|n| t.apply(n)).collect()
    }

    pub fn translate(&self, m: &LatticeVector) -> SiteSet {
        self.transform(&Transform::Translate(m.clone()))
    }

    pub fn reflect(&self) -> SiteSet {
        self.transform(&Transform::Reflect)
    }

    pub fn reflect_through(&self, m: &LatticeVector) -> SiteSet {
        self.transform(&Transform::ReflectThrough(m.clone()))
    }

    pub fn union(&self, o: &SiteSet) -> SiteSet {
        SiteSet(self.0.union(&o.0).cloned().collect())
    }

    pub fn intersection(&self, o: &SiteSet) -> SiteSet {
        SiteSet(self.0.intersection(&o.0).cloned().collect())
    }

    pub fn difference(&self, o: &SiteSet) -> SiteSet {
        SiteSet(self.0.difference(&o.0).cloned().collect())
    }

    pub fn is_subset(&self, o: &SiteSet) -> bool {
        self.0.is_subset(&o.0)
    }

    pub fn intersects(&self, o: &SiteSet) -> bool {
        let (small, big) = if self.len() <= o.len() { (self, o) } else { (o, self) };
        small.0.iter().any(|n| big.0.contains(n))
    }

    pub fn extend(&mut self, o: &SiteSet) {
        self.0.extend(o.0.iter().cloned());
    }

    pub fn max_norm(&self) -> u64 {
        self.0.iter().map(l1_norm).max().unwrap_or(0)
    }
}

/// Number of points of Z^nu with l1 norm at most floor(r):
/// sum_k 2^k C(nu,k) C(floor r, k).
pub fn ball_size(nu: usize, r: f64) -> u128 {
    if r < 0.0 {
        return 0;
    }
    let rr = r.floor() as u128;
    let mut total: u128 = 0;
    let mut c_nu: u128 = 1;
    let mut c_r: u128 = 1;
    for k in 0..=nu as u128 {
        if k > rr {
            break;
        }
        if k > 0 {
            c_nu = c_nu * (nu as u128 - k + 1) / k;
            c_r = c_r.saturating_mul(rr - k + 1) / k;
        }
        total = total.saturating_add((1u128 << k).saturating_mul(c_nu).saturating_mul(c_r));
    }
    total
}

/// B(r) = {n : |n| <= r} in the l1 norm, refusing sets larger than `budget`.
pub fn ball(nu: usize, r: f64, budget: usize) -> Result<SiteSet> {
    if !(r >= 0.0) {
        return Err(QpError::Invalid(format!("ball radius must be >= 0, got {r}")));
    }
    let needed = ball_size(nu, r);
    if needed > budget as u128 {
        return Err(QpError::Budget { needed, budget });
    }
    let rr = r.floor() as i64;
    let mut out = SiteSet::new();
    let mut cur = vec![0i64; nu];
    fill_ball(&mut cur, 0, rr, &mut out);
    Ok(out)
}

fn fill_ball(cur: &mut Vec<i64>, j: usize, left: i64, out: &mut SiteSet) {
    if j == cur.len() {
        out.insert(LatticeVector(cur.clone()));
        return;
    }
    for c in -left..=left {
        cur[j] = c;
        fill_ball(cur, j + 1, left - c.abs(), out);
    }
    cur[j] = 0;
}

/// Ball centred at `center`.
pub fn ball_at(center: &LatticeVector, r: f64, budget: usize) -> Result<SiteSet> {
    Ok(ball(center.dim(), r, budget)?.translate(center))
}

/// True iff s1 meets both s2 and its complement.
pub fn straddles(s1: &SiteSet, s2: &SiteSet) -> bool {
    let mut inside = false;
    let mut outside = false;
    for n in s1.iter() {
        if s2.contains(n) {
            inside = true;
        } else {
            outside = true;
        }
        if inside && outside {
            return true;
        }
    }
    false
}

/// Minimal pairwise l1 distance.
pub fn dist(s1: &SiteSet, s2: &SiteSet) -> Result<u64> {
    if s1.is_empty() || s2.is_empty() {
        return Err(QpError::Invalid("dist of an empty set".into()));
    }
    Ok(s1
        .iter()
        .flat_map(|a| s2.iter().map(move |b| a.dist(b)))
        .min()
        .unwrap())
}

/// Maximal pairwise l1 distance.
pub fn diam(s: &SiteSet) -> Result<u64> {
    if s.is_empty() {
        return Err(QpError::Invalid("diam of an empty set".into()));
    }
    Ok(s.iter()
        .flat_map(|a| s.iter().map(move |b| a.dist(b)))
        .max()
        .unwrap())
}

/// Distance from a point to a set (None when the set is empty).
pub fn dist_point(n: &LatticeVector, s: &SiteSet) -> Option<u64> {
    s.iter().map(|m| n.dist(m)).min()
}
