//! Schur-complement block inversion, the multiscale inverse (nonresonant sites
//! eliminated first, then resonant clusters), and the self-energy functions
//! Q, G, F that drive the eigenvalue equations.
//!
//! Resolvent convention: K = (E - H)^{-1}.

use crate::dual_operator::{hermitian_eigen, DualMatrix, DualOperator, Normalization};
use crate::error::{QpError, Result};
use crate::lattice::{LatticeVector, SiteSet};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::collections::{BTreeMap, HashSet};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Pivot blocks with smallest singular value below this fraction of their norm are singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

pub fn norm_inf(a: &CMat) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// max |a - b| / max |b|.
pub fn rel_dev(a: &CMat, b: &CMat) -> f64 {
    max_abs(&(a - b)) / max_abs(b).max(f64::MIN_POSITIVE)
}

fn submatrix(a: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Inverse with the singular-value test; `label` names the block in errors.
pub fn checked_inverse(a: &CMat, label: &str) -> Result<CMat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let sv = a.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smin >= SINGULAR_RTOL * smax) || smax == 0.0 {
        return Err(QpError::Singular { block: label.to_string(), sigma_min: smin });
    }
    a.clone()
        .try_inverse()
        .ok_or_else(|| QpError::Singular { block: label.to_string(), sigma_min: smin })
}

/// H~2 = M22 - M21 M11^{-1} M12 with block 1 given by `idx1`.
pub fn schur_complement(m: &CMat, idx1: &[usize]) -> Result<CMat> {
    let set1: HashSet<usize> = idx1.iter().copied().collect();
    let idx2: Vec<usize> = (0..m.nrows()).filter(|i| !set1.contains(i)).collect();
    let h1 = submatrix(m, idx1, idx1);
    let h1inv = checked_inverse(&h1, "1")?;
    let g21 = submatrix(m, &idx2, idx1);
    let g12 = submatrix(m, idx1, &idx2);
    Ok(submatrix(m, &idx2, &idx2) - &g21 * &h1inv * &g12)
}

/// Assembles M^{-1} from the inverse of the leading block and the inverse of its
/// Schur complement.
fn assemble(m: &CMat, idx1: &[usize], h1inv: &CMat, idx2: &[usize], s_inv: &CMat) -> CMat {
    let n = m.nrows();
    let g12 = submatrix(m, idx1, idx2);
    let g21 = submatrix(m, idx2, idx1);
    let left = h1inv * &g12; // H1^{-1} G12
    let right = &g21 * h1inv; // G21 H1^{-1}
    let b12 = -(&left * s_inv);
    let b21 = -(s_inv * &right);
    let b11 = h1inv + &left * s_inv * &right;
    let mut out = CMat::zeros(n, n);
    for (a, &i) in idx1.iter().enumerate() {
        for (b, &j) in idx1.iter().enumerate() {
            out[(i, j)] = b11[(a, b)];
        }
        for (b, &j) in idx2.iter().enumerate() {
            out[(i, j)] = b12[(a, b)];
        }
    }
    for (a, &i) in idx2.iter().enumerate() {
        for (b, &j) in idx1.iter().enumerate() {
            out[(i, j)] = b21[(a, b)];
        }
        for (b, &j) in idx2.iter().enumerate() {
            out[(i, j)] = s_inv[(a, b)];
        }
    }
    out
}

/// Recursive block inverse: eliminate blocks[0], then invert the Schur complement
/// over the remaining blocks. Blocks are index lists partitioning 0..n.
pub fn block_inverse_matrix(m: &CMat, blocks: &[Vec<usize>]) -> Result<CMat> {
    validate_index_partition(m.nrows(), blocks)?;
    block_inverse_rec(m, blocks, 0, None)
}

fn block_inverse_rec(m: &CMat, blocks: &[Vec<usize>], depth: usize, first_inv: Option<CMat>) -> Result<CMat> {
    let nonempty: Vec<&Vec<usize>> = blocks.iter().filter(|b| !b.is_empty()).collect();
    if nonempty.len() <= 1 {
        return match first_inv {
            Some(inv) => Ok(inv),
            None => checked_inverse(m, &depth.to_string()),
        };
    }
    let idx1 = nonempty[0].clone();
    let set1: HashSet<usize> = idx1.iter().copied().collect();
    let idx2: Vec<usize> = (0..m.nrows()).filter(|i| !set1.contains(i)).collect();
    let h1inv = match first_inv {
        Some(inv) => inv,
        None => checked_inverse(&submatrix(m, &idx1, &idx1), &depth.to_string())?,
    };
    let g21 = submatrix(m, &idx2, &idx1);
    let g12 = submatrix(m, &idx1, &idx2);
    let s = submatrix(m, &idx2, &idx2) - &g21 * &h1inv * &g12;
    // relabel the remaining blocks inside the complement
    let pos: BTreeMap<usize, usize> = idx2.iter().enumerate().map(|(a, &i)| (i, a)).collect();
    let rest: Vec<Vec<usize>> = nonempty[1..]
        .iter()
        .map(|b| b.iter().map(|i| pos[i]).collect())
        .collect();
    let s_inv = block_inverse_rec(&s, &rest, depth + 1, None)?;
    Ok(assemble(m, &idx1, &h1inv, &idx2, &s_inv))
}

fn validate_index_partition(n: usize, blocks: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; n];
    for b in blocks {
        for &i in b {
            if i >= n || seen[i] {
                return Err(QpError::Invalid(format!("partition index {i} out of range or repeated")));
            }
            seen[i] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(QpError::Invalid("partition does not cover the matrix".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockTag {
    Nonresonant,
    Cluster(usize),
}

/// Disjoint site blocks covering a host set.
#[derive(Clone, Debug)]
pub struct BlockPartition {
    pub host: SiteSet,
    pub blocks: Vec<SiteSet>,
    pub tags: Vec<BlockTag>,
}

impl BlockPartition {
    pub fn new(host: SiteSet, blocks: Vec<SiteSet>, tags: Vec<BlockTag>) -> Result<Self> {
        if blocks.len() != tags.len() {
            return Err(QpError::Invalid("one tag per block required".into()));
        }
        let mut union = SiteSet::new();
        for b in &blocks {
            if union.intersects(b) {
                return Err(QpError::Invalid("partition blocks overlap".into()));
            }
            union.extend(b);
        }
        if union != host {
            return Err(QpError::Invalid("partition blocks do not cover the host".into()));
        }
        Ok(BlockPartition { host, blocks, tags })
    }

    /// All sites as nonresonant singletons.
    pub fn singletons(host: &SiteSet) -> Self {
        let blocks: Vec<SiteSet> = host.iter().map(|n| SiteSet::singleton(n.clone())).collect();
        let tags = vec![BlockTag::Nonresonant; blocks.len()];
        BlockPartition { host: host.clone(), blocks, tags }
    }

    fn index_blocks(&self, m: &DualMatrix) -> Result<Vec<Vec<usize>>> {
        self.blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|n| m.idx(n).ok_or_else(|| QpError::Invalid(format!("site {n} not in matrix"))))
                    .collect()
            })
            .collect()
    }
}

/// (E - H)^{-1} on a finite site set.
#[derive(Clone, Debug)]
pub struct ResolventHandle {
    pub e: f64,
    pub matrix: DualMatrix,
    pub inverse: CMat,
    pub condition_estimate: f64,
}

impl ResolventHandle {
    fn build(e: f64, matrix: DualMatrix, inverse: CMat) -> Result<Self> {
        let a = shifted(&matrix, e);
        let condition_estimate = norm_inf(&a) * norm_inf(&inverse);
        let h = ResolventHandle { e, matrix, inverse, condition_estimate };
        let defect = h.defect();
        if defect > 1e-9 * condition_estimate.max(1.0) {
            return Err(QpError::Assertion(format!("resolvent defect {defect:e} too large")));
        }
        Ok(h)
    }

    /// ||(E - H) inverse - I||_inf.
    pub fn defect(&self) -> f64 {
        let a = shifted(&self.matrix, self.e);
        let n = a.nrows();
        norm_inf(&(&a * &self.inverse - CMat::identity(n, n)))
    }

    pub fn get(&self, m: &LatticeVector, n: &LatticeVector) -> Option<Complex64> {
        Some(self.inverse[(self.matrix.idx(m)?, self.matrix.idx(n)?)])
    }
}

/// E - H as a matrix.
pub fn shifted(m: &DualMatrix, e: f64) -> CMat {
    let n = m.dim();
    CMat::identity(n, n) * c(e) - &m.entries
}

/// Dense inverse of E - H (oracle).
pub fn dense_resolvent(m: &DualMatrix, e: f64) -> Result<CMat> {
    checked_inverse(&shifted(m, e), "dense")
}

/// (E - H)^{-1} assembled block by block along `partition`.
pub fn block_inverse(m: &DualMatrix, e: f64, partition: &BlockPartition) -> Result<ResolventHandle> {
    let blocks = partition.index_blocks(m)?;
    let a = shifted(m, e);
    let inv = block_inverse_matrix(&a, &blocks)?;
    ResolventHandle::build(e, m.clone(), inv)
}

/// Neumann series for (D - O)^{-1}, D diagonal; None if it does not contract.
fn neumann_inverse(a: &CMat) -> Option<CMat> {
    let n = a.nrows();
    let dinv: Vec<Complex64> = (0..n).map(|i| a[(i, i)].inv()).collect();
    // T = -D^{-1} O so that A = D (I - T)
    let t = CMat::from_fn(n, n, |i, j| if i == j { c(0.0) } else { -dinv[i] * a[(i, j)] });
    let q = norm_inf(&t);
    if !(q < 0.5) {
        return None;
    }
    let dmat = CMat::from_diagonal(&CVec::from_vec(dinv));
    let mut term = dmat.clone();
    let mut sum = dmat;
    for _ in 0..200 {
        term = &t * &term;
        sum += &term;
        if norm_inf(&term) <= 1e-17 * norm_inf(&sum) {
            return Some(sum);
        }
    }
    None
}

/// Report of how the multiscale inverse was assembled.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiscaleInfo {
    pub nonresonant_sites: usize,
    pub neumann: bool,
    pub clusters: usize,
}

/// Eliminates sites outside `clusters` first (Neumann series when it contracts,
/// LU otherwise), then the clusters one at a time.
pub fn multiscale_inverse(
    op: &DualOperator,
    e: f64,
    s: &SiteSet,
    k: f64,
    clusters: &[SiteSet],
    floor: f64,
    norm: Normalization,
) -> Result<(ResolventHandle, MultiscaleInfo)> {
    let mut covered = SiteSet::new();
    for cl in clusters {
        if !cl.is_subset(s) {
            return Err(QpError::Invalid("cluster not contained in host".into()));
        }
        if covered.intersects(cl) {
            return Err(QpError::Invalid("clusters overlap".into()));
        }
        covered.extend(cl);
    }
    let nonres = s.difference(&covered);
    for n in nonres.iter() {
        let gap = (e - op.diag(n, k, norm)).abs();
        if gap < floor {
            return Err(QpError::Floor { site: n.to_string(), gap, floor });
        }
    }
    let m = op.restrict(s, k, norm)?;
    let a = shifted(&m, e);
    let idx = |set: &SiteSet| -> Vec<usize> { set.iter().map(|n| m.idx(n).unwrap()).collect() };
    let mut blocks = vec![idx(&nonres)];
    for cl in clusters {
        blocks.push(idx(cl));
    }
    let first = submatrix(&a, &blocks[0], &blocks[0]);
    let neumann = if blocks[0].is_empty() { None } else { neumann_inverse(&first) };
    let used_neumann = neumann.is_some();
    let first_inv = match neumann {
        Some(inv) => Some(inv),
        None if blocks[0].is_empty() => None,
        None => Some(checked_inverse(&first, "nonresonant")?),
    };
    let inv = if blocks[0].is_empty() {
        block_inverse_rec(&a, &blocks[1..], 1, None)?
    } else {
        block_inverse_rec(&a, &blocks, 0, first_inv)?
    };
    let info = MultiscaleInfo { nonresonant_sites: nonres.len(), neumann: used_neumann, clusters: clusters.len() };
    Ok((ResolventHandle::build(e, m, inv)?, info))
}

/// Spectral data of H restricted to S minus some excluded sites, reused for every E.
///
/// K(E) = V diag(1/(E - lambda_j)) V^*.
#[derive(Clone, Debug)]
pub struct ReducedResolvent {
    pub sites: Vec<LatticeVector>,
    pub k: f64,
    pub norm: Normalization,
    pub eigvals: Vec<f64>,
    pub eigvecs: CMat,
    scale: f64,
}

impl ReducedResolvent {
    pub fn new(op: &DualOperator, s: &SiteSet, excluded: &[&LatticeVector], k: f64, norm: Normalization) -> Result<Self> {
        let mut rest = s.clone();
        for x in excluded {
            rest.remove(x);
        }
        let sites = rest.to_vec();
        if sites.is_empty() {
            return Ok(ReducedResolvent { sites, k, norm, eigvals: vec![], eigvecs: CMat::zeros(0, 0), scale: 1.0 });
        }
        let m = op.restrict_sites(sites.clone(), k, norm)?;
        let sp = hermitian_eigen(&m.entries)?;
        let scale = m.norm_inf().max(1.0);
        Ok(ReducedResolvent { sites, k, norm, eigvals: sp.values, eigvecs: sp.vectors, scale })
    }

    pub fn check_invertible(&self, e: f64) -> Result<()> {
        let d = self.eigvals.iter().map(|l| (e - l).abs()).fold(f64::INFINITY, f64::min);
        if d < SINGULAR_RTOL * self.scale {
            return Err(QpError::Singular { block: "reduced".into(), sigma_min: d });
        }
        Ok(())
    }

    /// Coupling column b(n') = h(n', m0) over the reduced sites.
    pub fn coupling(&self, op: &DualOperator, m0: &LatticeVector) -> CVec {
        CVec::from_iterator(self.sites.len(), self.sites.iter().map(|n| op.entry(n, m0, self.k, self.norm)))
    }

    /// V^* b.
    pub fn project(&self, b: &CVec) -> CVec {
        self.eigvecs.adjoint() * b
    }

    /// sum_j conj(x_j) y_j / (E - lambda_j)^(p+1) times (-1)^p p!, i.e. the p-th E-derivative of x^* K y.
    pub fn form(&self, x: &CVec, y: &CVec, e: f64, p: u32) -> Complex64 {
        let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
        let fact: f64 = (1..=p).map(|i| i as f64).product();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..self.eigvals.len() {
            acc += x[j].conj() * y[j] / (e - self.eigvals[j]).powi(p as i32 + 1);
        }
        acc * sign * fact
    }

    /// K(E) b.
    pub fn apply(&self, b: &CVec, e: f64) -> CVec {
        let pb = self.project(b);
        let scaled = CVec::from_iterator(pb.len(), pb.iter().zip(&self.eigvals).map(|(z, l)| z / (e - l)));
        &self.eigvecs * scaled
    }

    /// Dense K(E).
    pub fn matrix(&self, e: f64) -> CMat {
        let d = CVec::from_iterator(self.eigvals.len(), self.eigvals.iter().map(|l| c(1.0 / (e - l))));
        &self.eigvecs * CMat::from_diagonal(&d) * self.eigvecs.adjoint()
    }
}

/// Q(m0, S; E) = sum h(m0,m') K(m',n') h(n',m0), K on S minus {m0}. Returns (Q, |Im Q|).
pub fn q_function(op: &DualOperator, m0: &LatticeVector, s: &SiteSet, k: f64, e: f64, norm: Normalization) -> Result<(f64, f64)> {
    let rr = ReducedResolvent::new(op, s, &[m0], k, norm)?;
    rr.check_invertible(e)?;
    let b = rr.project(&rr.coupling(op, m0));
    let q = rr.form(&b, &b, e, 0);
    Ok((q.re, q.im.abs()))
}

/// G(mp, mm, S; E) = h(mp,mm) + sum h(mp,m') K(m',n') h(n',mm), K on S minus {mp, mm}.
pub fn g_function(
    op: &DualOperator,
    mp: &LatticeVector,
    mm: &LatticeVector,
    s: &SiteSet,
    k: f64,
    e: f64,
    norm: Normalization,
) -> Result<Complex64> {
    let rr = ReducedResolvent::new(op, s, &[mp, mm], k, norm)?;
    rr.check_invertible(e)?;
    let bp = rr.project(&rr.coupling(op, mp));
    let bm = rr.project(&rr.coupling(op, mm));
    Ok(op.entry(mp, mm, k, norm) + rr.form(&bp, &bm, e, 0))
}

/// F(n) = sum_m K(n,m) h(m, m0), K on S minus {m0}. With this resolvent sign the
/// eigenvector is phi = delta_{m0} + F.
pub fn f_vector(
    op: &DualOperator,
    m0: &LatticeVector,
    s: &SiteSet,
    k: f64,
    e: f64,
    norm: Normalization,
) -> Result<BTreeMap<LatticeVector, Complex64>> {
    let rr = ReducedResolvent::new(op, s, &[m0], k, norm)?;
    rr.check_invertible(e)?;
    let x = rr.apply(&rr.coupling(op, m0), e);
    Ok(rr.sites.iter().cloned().zip(x.iter().copied()).collect())
}

/// k-derivative of R = (E - H_{S,k})^{-1}: R H' R (order 1) or 2 R H' R H' R + R H'' R (order 2).
pub fn resolvent_derivative(op: &DualOperator, e: f64, s: &SiteSet, k: f64, order: u8, norm: Normalization) -> Result<CMat> {
    let m = op.restrict(s, k, norm)?;
    let r = dense_resolvent(&m, e)?;
    let h1 = op.dk_matrix(&m.sites, k, norm);
    match order {
        1 => Ok(&r * &h1 * &r),
        2 => {
            let n = m.dim();
            let h2 = CMat::identity(n, n) * c(op.diag_dk2(k, norm));
            Ok((&r * &h1 * &r * &h1 * &r) * c(2.0) + &r * h2 * &r)
        }
        _ => Err(QpError::Invalid(format!("derivative order {order} not supported"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ball;
    use crate::model::{Frequency, Potential};
    use crate::sampling::random_potential;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[i64]) -> LatticeVector {
        LatticeVector(x.to_vec())
    }

    fn real(rows: usize, data: &[f64]) -> CMat {
        CMat::from_row_slice(rows, rows, &data.iter().map(|&x| c(x)).collect::<Vec<_>>())
    }

    fn op_eps(seed: u64, eps: f64) -> DualOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DualOperator::new(Frequency::golden(), random_potential(&mut rng, 2, 3, eps, 0.5, true))
    }

    #[test]
    fn schur_examples() {
        let m = real(2, &[2.0, 1.0, 1.0, 2.0]);
        let s = schur_complement(&m, &[0]).unwrap();
        assert!((s[(0, 0)].re - 1.5).abs() < 1e-15);
        let bd = real(3, &[1.0, 0.0, 0.0, 0.0, 2.0, 3.0, 0.0, 3.0, 5.0]);
        let s = schur_complement(&bd, &[0]).unwrap();
        assert_eq!(s, submatrix(&bd, &[1, 2], &[1, 2]));
        let sing = real(2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(schur_complement(&sing, &[0]), Err(QpError::Singular { .. })));
    }

    #[test]
    fn block_inverse_examples() {
        let m = real(2, &[2.0, 1.0, 1.0, 2.0]);
        let inv = block_inverse_matrix(&m, &[vec![0], vec![1]]).unwrap();
        let want = real(2, &[2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0]);
        assert!(rel_dev(&inv, &want) < 1e-15);
        let id = CMat::identity(4, 4);
        assert_eq!(block_inverse_matrix(&id, &[vec![2, 0], vec![1], vec![3]]).unwrap(), id);
        assert!(block_inverse_matrix(&id, &[vec![0, 1]]).is_err());
    }

    #[test]
    fn random_hermitian_block_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = 6;
            let mut a = CMat::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            a = (&a + a.adjoint()) * c(0.5) + CMat::identity(n, n) * c(4.0);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let blocks = vec![idx[..2].to_vec(), idx[2..3].to_vec(), idx[3..].to_vec()];
            let inv = block_inverse_matrix(&a, &blocks).unwrap();
            let dense = checked_inverse(&a, "d").unwrap();
            assert!(rel_dev(&inv, &dense) < 1e-10);
        }
    }

    #[test]
    fn dual_block_inverse_matches_dense() {
        let op = op_eps(1, 0.5);
        let s = ball(2, 2.0, 100).unwrap();
        let m = op.restrict(&s, 0.13, Normalization::Raw).unwrap();
        let e = 1.234;
        let h = block_inverse(&m, e, &BlockPartition::singletons(&s)).unwrap();
        let d = dense_resolvent(&m, e).unwrap();
        assert!(rel_dev(&h.inverse, &d) < 1e-10);
        assert!(h.defect() < 1e-9 * h.condition_estimate);
    }

    #[test]
    fn multiscale_examples() {
        let zero = DualOperator::new(Frequency::golden(), Potential::zero(0.5));
        let s = ball(2, 2.0, 100).unwrap();
        let (h, info) = multiscale_inverse(&zero, 0.77, &s, 0.1, &[], 1e-3, Normalization::Raw).unwrap();
        assert!(info.neumann);
        for (i, n) in h.matrix.sites.iter().enumerate() {
            assert!((h.inverse[(i, i)] - c(1.0 / (0.77 - zero.v(n, 0.1)))).norm() < 1e-14);
        }
        let op = op_eps(2, 0.3);
        let m = op.restrict(&s, 0.1, Normalization::Raw).unwrap();
        let (h, _) = multiscale_inverse(&op, 0.77, &s, 0.1, &[s.clone()], 1e-3, Normalization::Raw).unwrap();
        assert!(rel_dev(&h.inverse, &dense_resolvent(&m, 0.77).unwrap()) < 1e-12);
        // cluster around the near-resonant sites
        let e = op.v(&v(&[0, 0]), 0.1) + 0.05;
        let cl: SiteSet = s.iter().filter(|n| (e - op.v(n, 0.1)).abs() < 2.0).cloned().collect();
        let (h, info) = multiscale_inverse(&op, e, &s, 0.1, &[cl], 2.0, Normalization::Raw).unwrap();
        assert!(info.nonresonant_sites > 0);
        assert!(rel_dev(&h.inverse, &dense_resolvent(&m, e).unwrap()) < 1e-9);
        assert!(matches!(
            multiscale_inverse(&op, e, &s, 0.1, &[], 2.0, Normalization::Raw),
            Err(QpError::Floor { .. })
        ));
    }

    #[test]
    fn q_g_f_examples() {
        let zero = DualOperator::new(Frequency::golden(), Potential::zero(0.5));
        let s = ball(2, 2.0, 100).unwrap();
        let o = v(&[0, 0]);
        assert_eq!(q_function(&zero, &o, &s, 0.1, 0.3, Normalization::Raw).unwrap().0, 0.0);
        assert_eq!(g_function(&zero, &o, &v(&[0, 1]), &s, 0.1, 0.3, Normalization::Raw).unwrap(), c(0.0));
        assert!(f_vector(&zero, &o, &s, 0.1, 0.3, Normalization::Raw).unwrap().values().all(|z| z.norm() == 0.0));

        let n = v(&[0, 1]);
        let eps = 1e-2;
        let op = DualOperator::new(Frequency::golden(), Potential::single_harmonic(n.clone(), 0.6, eps, 0.5));
        let two: SiteSet = [o.clone(), n.clone()].into_iter().collect();
        let (k, e) = (0.2, 2.5);
        let (q, im) = q_function(&op, &o, &two, k, e, Normalization::Raw).unwrap();
        let want = (eps * 0.6f64).powi(2) / (e - op.v(&n, k));
        assert!((q - want).abs() < 1e-15 && im < 1e-18);
        let g = g_function(&op, &o, &n, &two, k, e, Normalization::Raw).unwrap();
        assert!((g - c(eps * 0.6)).norm() < 1e-18);
        let f = f_vector(&op, &o, &two, k, e, Normalization::Raw).unwrap();
        assert!((f[&n] - c(eps * 0.6 / (e - op.v(&n, k)))).norm() < 1e-15);
    }

    #[test]
    fn q_real_g_conjugate() {
        for seed in 0..5 {
            let op = op_eps(seed, 0.05);
            let s = ball(2, 3.0, 100).unwrap();
            let (a, b) = (v(&[0, 0]), v(&[1, -1]));
            let (_, im) = q_function(&op, &a, &s, 0.2, 1.0, Normalization::Raw).unwrap();
            assert!(im <= 1e-12);
            let g1 = g_function(&op, &a, &b, &s, 0.2, 1.0, Normalization::Raw).unwrap();
            let g2 = g_function(&op, &b, &a, &s, 0.2, 1.0, Normalization::Raw).unwrap();
            assert!((g1 - g2.conj()).norm() <= 1e-13);
        }
    }

    #[test]
    fn epsilon_quadratic_leading_order() {
        let s = ball(2, 3.0, 100).unwrap();
        let (a, b) = (v(&[0, 0]), v(&[0, 1]));
        let base = op_eps(3, 1.0);
        let mut ratios = vec![];
        for eps in [1e-3, 1e-4, 1e-5] {
            let op = DualOperator::new(base.freq.clone(), base.pot.with_epsilon(eps));
            let (q, _) = q_function(&op, &a, &s, 0.2, 1.0, Normalization::Raw).unwrap();
            let g = g_function(&op, &a, &b, &s, 0.2, 1.0, Normalization::Raw).unwrap();
            let lin = op.entry(&a, &b, 0.2, Normalization::Raw);
            ratios.push((q / (eps * eps), (g - lin).norm() / (eps * eps)));
        }
        for w in ratios.windows(2) {
            assert!((w[0].0 - w[1].0).abs() <= 0.05 * w[1].0.abs().max(1e-3));
            assert!(w[1].1 <= 2.0 * w[0].1 + 1e-6);
        }
    }

    #[test]
    fn phi_from_f_is_eigenvector() {
        // E solving E = v + Q makes delta + F an eigenvector
        let op = op_eps(7, 0.02);
        let s = ball(2, 3.0, 100).unwrap();
        let (o, k) = (v(&[0, 0]), 0.2);
        let rr = ReducedResolvent::new(&op, &s, &[&o], k, Normalization::Raw).unwrap();
        let b = rr.project(&rr.coupling(&op, &o));
        let mut e = op.v(&o, k);
        for _ in 0..100 {
            e = op.v(&o, k) + rr.form(&b, &b, e, 0).re;
        }
        let f = f_vector(&op, &o, &s, k, e, Normalization::Raw).unwrap();
        let m = op.restrict(&s, k, Normalization::Raw).unwrap();
        let phi = CVec::from_iterator(m.dim(), m.sites.iter().map(|n| if *n == o { c(1.0) } else { f[n] }));
        let r = &m.entries * &phi - &phi * c(e);
        assert!(r.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-11);
    }

    #[test]
    fn resolvent_derivatives() {
        let zero = DualOperator::new(Frequency::golden(), Potential::zero(0.5));
        let s = ball(2, 1.0, 10).unwrap();
        let (e, k) = (0.9, 0.1);
        let d = resolvent_derivative(&zero, e, &s, k, 1, Normalization::Raw).unwrap();
        let m = zero.restrict(&s, k, Normalization::Raw).unwrap();
        for (i, n) in m.sites.iter().enumerate() {
            let want = zero.diag_dk(n, k, Normalization::Raw) / (e - zero.v(n, k)).powi(2);
            assert!((d[(i, i)].re - want).abs() < 1e-12 * want.abs().max(1.0));
        }
        let op = op_eps(4, 0.2);
        let s = ball(2, 2.0, 100).unwrap();
        let h = 1e-5;
        for order in [1u8, 2] {
            let an = resolvent_derivative(&op, e, &s, k, order, Normalization::Raw).unwrap();
            let r = |kk: f64| dense_resolvent(&op.restrict(&s, kk, Normalization::Raw).unwrap(), e).unwrap();
            let d1 = |kk: f64| resolvent_derivative(&op, e, &s, kk, 1, Normalization::Raw).unwrap();
            // order 2 differences the analytic first derivative
            let fd = if order == 1 {
                (r(k + h) - r(k - h)) * c(1.0 / (2.0 * h))
            } else {
                (d1(k + h) - d1(k - h)) * c(1.0 / (2.0 * h))
            };
            assert!(rel_dev(&fd, &an) < 1e-6, "order {order}: {}", rel_dev(&fd, &an));
        }
    }
}
