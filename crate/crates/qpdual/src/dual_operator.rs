//! The dual lattice matrix H_k(m,n): diagonal (2 pi)^2 (n.omega + k)^2, off-diagonal
//! c(n - m). Restrictions to finite site sets, the lambda-normalized variant, the
//! shift/reflection conjugation identities and a dense Hermitian eigensolver.

use crate::error::{QpError, Result};
use crate::lattice::{LatticeVector, SiteSet};
use crate::model::{Frequency, Potential};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::PI;

pub const TWO_PI_SQ: f64 = 4.0 * PI * PI;
pub const DEFAULT_MATRIX_BUDGET: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    /// Divide by (2 pi)^2 lambda with lambda = 256 gamma(k).
    Lambda,
}

/// gamma = 1 for |k| <= 1, else the smallest integer gamma with gamma - 1 <= |k| <= gamma.
pub fn gamma_of(k: f64) -> f64 {
    k.abs().ceil().max(1.0)
}

pub fn lambda_of(k: f64) -> f64 {
    256.0 * gamma_of(k)
}

#[derive(Clone, Debug)]
pub struct DualOperator {
    pub freq: Frequency,
    pub pot: Potential,
    pub matrix_budget: usize,
}

/// Hermitian restriction of H_k to a site set, in canonical site order.
#[derive(Clone, Debug)]
pub struct DualMatrix {
    pub sites: Vec<LatticeVector>,
    pub index: HashMap<LatticeVector, usize>,
    pub k: f64,
    pub normalization: Normalization,
    pub entries: DMatrix<Complex64>,
}

impl DualMatrix {
    pub fn dim(&self) -> usize {
        self.sites.len()
    }

    pub fn idx(&self, n: &LatticeVector) -> Option<usize> {
        self.index.get(n).copied()
    }

    /// max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.entries.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn hermitian_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

impl DualOperator {
    pub fn new(freq: Frequency, pot: Potential) -> Self {
        DualOperator { freq, pot, matrix_budget: DEFAULT_MATRIX_BUDGET }
    }

    pub fn nu(&self) -> usize {
        self.freq.nu()
    }

    /// v(n,k) = (2 pi)^2 (n.omega + k)^2 in raw units.
    pub fn v(&self, n: &LatticeVector, k: f64) -> f64 {
        let x = self.freq.dot(n) + k;
        TWO_PI_SQ * x * x
    }

    /// Diagonal in the requested normalization.
    pub fn diag(&self, n: &LatticeVector, k: f64, norm: Normalization) -> f64 {
        let x = self.freq.dot(n) + k;
        match norm {
            Normalization::Raw => TWO_PI_SQ * x * x,
            Normalization::Lambda => x * x / lambda_of(k),
        }
    }

    /// d/dk of the diagonal (lambda held fixed).
    pub fn diag_dk(&self, n: &LatticeVector, k: f64, norm: Normalization) -> f64 {
        let x = self.freq.dot(n) + k;
        match norm {
            Normalization::Raw => 2.0 * TWO_PI_SQ * x,
            Normalization::Lambda => 2.0 * x / lambda_of(k),
        }
    }

    pub fn diag_dk2(&self, k: f64, norm: Normalization) -> f64 {
        match norm {
            Normalization::Raw => 2.0 * TWO_PI_SQ,
            Normalization::Lambda => 2.0 / lambda_of(k),
        }
    }

    /// h(m,n;k).
    pub fn entry(&self, m: &LatticeVector, n: &LatticeVector, k: f64, norm: Normalization) -> Complex64 {
        if m == n {
            return Complex64::new(self.diag(m, k, norm), 0.0);
        }
        let d = n.sub(m);
        match norm {
            Normalization::Raw => self.pot.c(&d),
            Normalization::Lambda => self.pot.c(&d) / (lambda_of(k) * TWO_PI_SQ),
        }
    }

    pub fn restrict(&self, s: &SiteSet, k: f64, norm: Normalization) -> Result<DualMatrix> {
        self.restrict_sites(s.to_vec(), k, norm)
    }

    /// Restriction with an explicit site order.
    pub fn restrict_sites(&self, sites: Vec<LatticeVector>, k: f64, norm: Normalization) -> Result<DualMatrix> {
        if sites.is_empty() {
            return Err(QpError::Invalid("restriction to an empty site set".into()));
        }
        if sites.len() > self.matrix_budget {
            return Err(QpError::Budget { needed: sites.len() as u128, budget: self.matrix_budget });
        }
        let n = sites.len();
        let mut entries = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            entries[(i, i)] = Complex64::new(self.diag(&sites[i], k, norm), 0.0);
            for j in (i + 1)..n {
                let h = self.entry(&sites[i], &sites[j], k, norm);
                entries[(i, j)] = h;
                entries[(j, i)] = h.conj();
            }
        }
        let index = sites.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(DualMatrix { sites, index, k, normalization: norm, entries })
    }

    /// Diagonal matrix of d/dk H on the given sites.
    pub fn dk_matrix(&self, sites: &[LatticeVector], k: f64, norm: Normalization) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            sites.len(),
            sites.iter().map(|n| Complex64::new(self.diag_dk(n, k, norm), 0.0)),
        ))
    }

    /// max |H_{k + l.omega}(m,n) - H_k(m + l, n + l)| over S x S, raw units.
    pub fn cocycle_check(&self, shift: &LatticeVector, s: &SiteSet, k: f64) -> f64 {
        let k2 = k + self.freq.dot(shift);
        let mut worst = 0.0f64;
        for m in s.iter() {
            for n in s.iter() {
                let a = self.entry(m, n, k2, Normalization::Raw);
                let b = self.entry(&m.add(shift), &n.add(shift), k, Normalization::Raw);
                worst = worst.max((a - b).norm());
            }
        }
        worst
    }

    /// max |H_{S,k}(m,n) - conj H_{-S,-k}(-m,-n)|.
    pub fn reflection_conjugation_check(&self, s: &SiteSet, k: f64) -> f64 {
        let mut worst = 0.0f64;
        for m in s.iter() {
            for n in s.iter() {
                let a = self.entry(m, n, k, Normalization::Raw);
                let b = self.entry(&m.neg(), &n.neg(), -k, Normalization::Raw).conj();
                worst = worst.max((a - b).norm());
            }
        }
        worst
    }

    /// Lattice point m with |k + m.omega/2| <= tol and |m| <= radius, if any.
    pub fn near_half_lattice(&self, k: f64, radius: u64, tol: f64) -> Option<LatticeVector> {
        crate::lattice::ball(self.nu(), radius as f64, usize::MAX)
            .ok()?
            .iter()
            .find(|m| (k + self.freq.dot(m) / 2.0).abs() <= tol)
            .cloned()
    }
}

/// Ascending eigenvalues with orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
    pub max_residual: f64,
}

pub const EIG_RESIDUAL_RTOL: f64 = 1e-10;

/// Full Hermitian eigendecomposition; residuals checked against 1e-10 ||M||.
pub fn dense_spectrum(m: &DualMatrix) -> Result<Spectrum> {
    hermitian_eigen(&m.entries)
}

pub fn hermitian_eigen(a: &DMatrix<Complex64>) -> Result<Spectrum> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(QpError::Invalid("non-finite matrix entry".into()));
    }
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<Complex64>::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    let scale = (0..n)
        .map(|i| a.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut max_residual = 0.0f64;
    for c in 0..n {
        let phi = vectors.column(c);
        let r = a * phi - phi * Complex64::new(values[c], 0.0);
        max_residual = max_residual.max(r.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    if max_residual > EIG_RESIDUAL_RTOL * scale {
        return Err(QpError::Assertion(format!(
            "eigen residual {max_residual:e} exceeds {:e}",
            EIG_RESIDUAL_RTOL * scale
        )));
    }
    Ok(Spectrum { values, vectors, max_residual })
}
