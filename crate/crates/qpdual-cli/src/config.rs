//! JSON run configuration.

use num_complex::Complex64;
use qpdual::dual_operator::DualOperator;
use qpdual::lattice::LatticeVector;
use qpdual::model::{build_ladder, validate_potential, Frequency, Potential, Regime, ScaleLadder};
use qpdual::{QpError, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficient {
    pub n: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub regime: String,
    pub delta0: f64,
    pub beta1: f64,
    pub u_max: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub oracle: f64,
    pub residual: f64,
    /// Gaps are tabulated for 0 < |m| <= gap_window.
    pub gap_window: u64,
    pub diophantine_window: u64,
    pub site_budget: usize,
    pub inverse_window: u64,
    pub inverse_box_radius: f64,
    pub inverse_iterations: usize,
    /// Target rate of the inverse conclusion; defaults to 4 kappa0 + 1.
    pub inverse_kappa: Option<f64>,
    pub traj_host_radius: f64,
    pub traj_len_cap: usize,
    pub traj_t: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            oracle: 1e-9,
            residual: 1e-9,
            gap_window: 4,
            diophantine_window: 12,
            site_budget: 200_000,
            inverse_window: 2,
            inverse_box_radius: 6.0,
            inverse_iterations: 5,
            inverse_kappa: None,
            traj_host_radius: 2.0,
            traj_len_cap: 4,
            traj_t: 8.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub k: f64,
    pub s: usize,
    pub n0: Option<Vec<i64>>,
    pub search_radius: u64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { k: 0.2, s: 2, n0: None, search_radius: 8 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub nu: usize,
    pub omega: Vec<f64>,
    pub a0: f64,
    pub b0: f64,
    pub kappa0: f64,
    pub epsilon: f64,
    pub coefficients: Vec<Coefficient>,
    pub ladder: LadderConfig,
    pub box_radius: f64,
    pub k_grid: KGrid,
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub geometry: GeometryConfig,
}

/// Validated problem data.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: RunConfig,
    pub op: DualOperator,
    pub ladder: ScaleLadder,
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| QpError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| QpError::Invalid(format!("config parse error: {e}")))
}

pub fn regime_of(name: &str) -> Result<Regime> {
    match name {
        "desk" => Ok(Regime::Desk),
        "faithful" => Ok(Regime::Faithful),
        other => Err(QpError::Invalid(format!("unknown ladder regime {other:?}"))),
    }
}

pub fn lattice(nu: usize, n: &[i64]) -> Result<LatticeVector> {
    if n.len() != nu {
        return Err(QpError::Invalid(format!("site {n:?} does not have nu = {nu} coordinates")));
    }
    Ok(LatticeVector(n.to_vec()))
}

impl RunConfig {
    pub fn potential(&self) -> Result<Potential> {
        let mut p = Potential::new(self.epsilon, self.kappa0);
        for c in &self.coefficients {
            let n = lattice(self.nu, &c.n)?;
            if p.c0.insert(n, Complex64::new(c.re, c.im)).is_some() {
                return Err(QpError::Invalid(format!("duplicate coefficient at {:?}", c.n)));
            }
        }
        Ok(p)
    }

    /// Every check that must pass before a command runs.
    pub fn build(self) -> Result<Model> {
        if self.omega.len() != self.nu {
            return Err(QpError::Invalid(format!("omega has {} entries, nu = {}", self.omega.len(), self.nu)));
        }
        let freq = Frequency::new(self.omega.clone(), self.a0, self.b0)?;
        let pot = self.potential()?;
        let violations = validate_potential(&pot);
        if !violations.is_empty() {
            return Err(QpError::Invalid(format!("potential fails validation: {violations:?}")));
        }
        if !(self.box_radius >= 1.0) {
            return Err(QpError::Invalid("box_radius must be >= 1".into()));
        }
        let g = &self.k_grid;
        if g.points == 0 || !(g.min <= g.max) || !g.min.is_finite() || !g.max.is_finite() {
            return Err(QpError::Invalid("k_grid needs points >= 1 and min <= max".into()));
        }
        if let Some(n0) = &self.geometry.n0 {
            lattice(self.nu, n0)?;
        }
        let l = &self.ladder;
        let ladder = build_ladder(l.delta0, l.beta1, l.u_max, regime_of(&l.regime)?, self.nu, self.tolerances.site_budget)?;
        let op = DualOperator::new(freq, pot);
        Ok(Model { cfg: self, op, ladder })
    }

    pub fn k_values(&self) -> Vec<f64> {
        let g = &self.k_grid;
        if g.points == 1 {
            return vec![g.min];
        }
        (0..g.points).map(|i| g.min + (g.max - g.min) * i as f64 / (g.points - 1) as f64).collect()
    }

    pub fn inverse_kappa(&self) -> f64 {
        self.tolerances.inverse_kappa.unwrap_or(4.0 * self.kappa0 + 1.0)
    }
}
