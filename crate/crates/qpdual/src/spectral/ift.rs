//! Quantitative implicit function theorem for analytic F(z, w) on a polydisk,
//! its approximate-root variant and the Harnack-type ratio bound used there.
//! Suprema are estimated on the distinguished boundary and inflated.

use crate::error::{QpError, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Grid points per circle for boundary suprema.
pub const BOUNDARY_SAMPLES: usize = 96;
/// Multiplicative inflation of sampled suprema.
pub const SUP_INFLATION: f64 = 1.02;

fn circle(c: Complex64, r: f64, j: usize, n: usize) -> Complex64 {
    c + Complex64::from_polar(r, 2.0 * PI * j as f64 / n as f64)
}

/// sup |F| over D(z0, pz) x D(w0, pw), sampled on the torus |z - z0| = pz, |w - w0| = pw.
pub fn polydisk_sup<F>(f: &F, z0: Complex64, w0: Complex64, pz: f64, pw: f64) -> f64
where
    F: Fn(Complex64, Complex64) -> Complex64,
{
    let n = BOUNDARY_SAMPLES;
    let mut m = 0.0f64;
    for i in 0..n {
        let z = circle(z0, pz, i, n);
        for j in 0..n {
            m = m.max(f(z, circle(w0, pw, j, n)).norm());
        }
    }
    m * SUP_INFLATION
}

/// dF/dw at (z, w) by the Cauchy integral on a circle of radius h.
pub fn dw<F>(f: &F, z: Complex64, w: Complex64, h: f64) -> Complex64
where
    F: Fn(Complex64, Complex64) -> Complex64,
{
    let n = 32;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let e = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64);
        acc += f(z, w + e * h) / e;
    }
    acc / (n as f64 * h)
}

/// Winding number of g around the circle |w - c| = r.
pub fn winding_number<G: Fn(Complex64) -> Complex64>(g: G, c: Complex64, r: f64, n: usize) -> i64 {
    let mut total = 0.0;
    let mut prev = g(circle(c, r, 0, n));
    for j in 1..=n {
        let cur = g(circle(c, r, j % n, n));
        total += (cur / prev).arg();
        prev = cur;
    }
    (total / (2.0 * PI)).round() as i64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IftCertificate {
    pub z0: Complex64,
    pub w0: Complex64,
    pub tau: f64,
    pub m0: f64,
    /// Guaranteed z-radius tau^2 r0^3 / (16 M0).
    pub r: f64,
    /// Root confinement radius tau r0^2 / (2 M0).
    pub r_prime: f64,
}

/// Radius and confinement radius for F(z0, w0) = 0; the polydisk is D(z0, p0) x D(w0, r0)
/// and the lemma is applied on the equal-radius polydisk of radius min(p0, r0).
pub fn quantitative_ift<F>(f: &F, z0: Complex64, w0: Complex64, r0: f64, p0: f64) -> Result<IftCertificate>
where
    F: Fn(Complex64, Complex64) -> Complex64,
{
    let rho = r0.min(p0);
    if !(rho > 0.0) {
        return Err(QpError::Invalid("polydisk radii must be positive".into()));
    }
    let m0 = polydisk_sup(f, z0, w0, rho, rho);
    if f(z0, w0).norm() > 1e-12 * m0.max(1e-300) {
        return Err(QpError::Invalid("F(z0, w0) != 0; use the approximate variant".into()));
    }
    let tau = dw(f, z0, w0, rho / 2.0).norm();
    if tau <= 1e-14 * m0 / rho {
        return Err(QpError::Regime("dF/dw vanishes at the base point".into()));
    }
    Ok(IftCertificate { z0, w0, tau, m0, r: tau * tau * rho.powi(3) / (16.0 * m0), r_prime: tau * rho * rho / (2.0 * m0) })
}

impl IftCertificate {
    /// The root w(z) with |w - w0| < r', by Newton from w0.
    pub fn root<F>(&self, f: &F, z: Complex64) -> Result<Complex64>
    where
        F: Fn(Complex64, Complex64) -> Complex64,
    {
        if (z - self.z0).norm() >= self.r {
            return Err(QpError::Invalid("z outside the certified disk".into()));
        }
        let h = self.r_prime / 4.0;
        let mut w = self.w0;
        for _ in 0..100 {
            let step = f(z, w) / dw(f, z, w, h);
            w -= step;
            if step.norm() <= 1e-15 * (1.0 + w.norm()) {
                break;
            }
        }
        if (w - self.w0).norm() >= self.r_prime || f(z, w).norm() > 1e-12 * self.m0 {
            return Err(QpError::Convergence(format!("no certified root at z = {z}")));
        }
        Ok(w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproxCertificate {
    pub eps1: f64,
    pub r: f64,
    pub r1: f64,
    pub tau0: f64,
    pub m0: f64,
}

fn log_term(m: f64) -> f64 {
    (1.0 + m.max(100.0).ln()).powi(2)
}

/// Approximate-root variant: needs |F(z0, w0)| <= eps1; certifies a unique root
/// |w - w0| < r1 for |z - z0| < r.
pub fn approximate_ift<F>(f: &F, z0: Complex64, w0: Complex64, p0: f64, r0: f64) -> Result<ApproxCertificate>
where
    F: Fn(Complex64, Complex64) -> Complex64,
{
    let m0 = polydisk_sup(f, z0, w0, p0, r0);
    let tau0 = dw(f, z0, w0, r0 / 2.0).norm();
    if tau0 == 0.0 {
        return Err(QpError::Regime("dF/dw vanishes at the base point".into()));
    }
    let tau1 = tau0.min(1.0);
    let m1 = m0.max(1.0);
    let eps1 = tau1 * tau1 * r0.min(1.0).powi(2) / (1e8 * m1 * m1 * log_term(m0));
    let f0 = f(z0, w0).norm();
    if f0 > eps1 {
        return Err(QpError::Regime(format!("|F(z0, w0)| = {f0:e} exceeds eps1 = {eps1:e}")));
    }
    let r = eps1 * 1f64.min(p0).min(r0).powi(2) / m1;
    let r1 = 400.0 * log_term(m0) * eps1 / tau1;
    Ok(ApproxCertificate { eps1, r, r1, tau0, m0 })
}

/// r2 = r1 / (1 + log max(100, K))^2.
pub fn harnack_radius(r1: f64, k: f64) -> f64 {
    r1 / log_term(k)
}

/// max |f| / min |f| over a sampled disk D(z0, r2); the lemma bounds it by e^4.
pub fn harnack_ratio<G: Fn(Complex64) -> Complex64>(g: G, z0: Complex64, r2: f64) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..=16 {
        let rad = r2 * i as f64 / 16.0 * (1.0 - 1e-9);
        for j in 0..48 {
            let v = g(circle(z0, rad, j, 48)).norm();
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    hi / lo
}

/// Random affine-plus-small-quadratic F with F(z0, w0) = 0.
pub fn random_affine_quadratic<R: rand::Rng>(rng: &mut R) -> (impl Fn(Complex64, Complex64) -> Complex64 + Clone, Complex64, Complex64) {
    let mut c = |lo: f64, hi: f64| Complex64::from_polar(rng.gen_range(lo..hi), rng.gen_range(0.0..2.0 * PI));
    let (alpha, beta) = (c(0.5, 2.0), c(0.0, 1.0));
    let (g1, g2, g3) = (c(0.0, 0.3), c(0.0, 0.3), c(0.0, 0.3));
    let z0 = c(0.0, 1.0);
    let w0 = c(0.0, 1.0);
    let f = move |z: Complex64, w: Complex64| {
        let (dz, dw) = (z - z0, w - w0);
        alpha * dw + beta * dz + g1 * dw * dw + g2 * dz * dz + g3 * dz * dw
    };
    (f, z0, w0)
}
