//! Resonance geometry on the k-axis: resonance points k_m = -m.omega/2, the widened
//! excluded intervals, connected components of the admissible set, reset sets R(k)
//! and the principal sets m^(l)(k).

use crate::error::{QpError, Result};
use crate::lattice::{ball, LatticeVector, SiteSet};
use crate::model::{Frequency, Regime, ScaleLadder};

/// Absolute tolerance for interval membership.
pub const MEMBERSHIP_TOL: f64 = 1e-14;

pub fn k_point(freq: &Frequency, m: &LatticeVector) -> f64 {
    -freq.dot(m) / 2.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceInterval {
    pub m: LatticeVector,
    pub s: usize,
    pub k_minus: f64,
    pub k_plus: f64,
}

impl ResonanceInterval {
    pub fn center(&self) -> f64 {
        (self.k_minus + self.k_plus) / 2.0
    }

    pub fn half_width(&self) -> f64 {
        (self.k_plus - self.k_minus) / 2.0
    }

    /// Open-interval membership.
    pub fn contains(&self, k: f64) -> bool {
        k > self.k_minus && k < self.k_plus
    }
}

/// Frequency, ladder and the desk knobs shared by all geometric queries.
///
/// `width_scale` multiplies every interval half-width (1 is the formula);
/// `m_cap` bounds |m'| in component computations.
#[derive(Clone, Debug)]
pub struct ResonanceGeometry {
    pub freq: Frequency,
    pub ladder: ScaleLadder,
    pub cert_window: u64,
    pub width_scale: f64,
    pub m_cap: Option<u64>,
}

impl ResonanceGeometry {
    pub fn new(freq: Frequency, ladder: ScaleLadder, cert_window: u64) -> Self {
        ResonanceGeometry { freq, ladder, cert_window, width_scale: 1.0, m_cap: None }
    }

    pub fn nu(&self) -> usize {
        self.freq.nu()
    }

    /// 64 * sum over r <= s-1 with (delta^(r))^(1/2) <= sigma(m) of (delta^(r))^(1/2).
    pub fn widening(&self, m: &LatticeVector, s: usize) -> Result<f64> {
        let log_sigma = self.ladder.log_sigma(m)?;
        let mut acc = 0.0;
        for r in 0..s {
            let lh = self.ladder.log_delta(r)? / 2.0;
            if lh <= log_sigma {
                acc += lh.exp();
            }
        }
        Ok(64.0 * acc)
    }

    /// (k^-_{m,s}, k^+_{m,s}).
    pub fn interval(&self, m: &LatticeVector, s: usize) -> Result<ResonanceInterval> {
        if m.is_zero() {
            return Err(QpError::Invalid("resonance interval needs m != 0".into()));
        }
        let sigma = self.ladder.log_sigma(m)?.exp();
        let half = self.width_scale * (sigma + self.widening(m, s)?);
        let km = k_point(&self.freq, m);
        Ok(ResonanceInterval { m: m.clone(), s, k_minus: km - half, k_plus: km + half })
    }

    fn m_range(&self, s: usize) -> Result<u64> {
        let r = (12.0 * self.ladder.log_r(s)?.exp()).floor() as u64;
        Ok(self.m_cap.map_or(r, |c| c.min(r)))
    }

    /// Excluded intervals at level s+1 for 0 < |m'| <= 12 R^(s), merged and sorted.
    pub fn excluded(&self, s: usize) -> Result<Vec<(f64, f64)>> {
        if self.ladder.regime == Regime::Faithful {
            return Err(QpError::Regime("faithful ladder refuses materialization".into()));
        }
        let range = self.m_range(s)?;
        let sites = ball(self.nu(), range as f64, self.ladder.site_budget.max(1))?;
        let mut iv: Vec<(f64, f64)> = Vec::with_capacity(sites.len());
        for m in sites.iter().filter(|m| !m.is_zero()) {
            let i = self.interval(m, s + 1)?;
            iv.push((i.k_minus, i.k_plus));
        }
        Ok(merge_open(iv))
    }

    /// Connected components of the window minus the level-s excluded set.
    pub fn components(&self, s: usize, window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
        let (a, b) = window;
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(QpError::Invalid(format!("bad window ({a}, {b})")));
        }
        let ex = self.excluded(s)?;
        let mut out = Vec::new();
        let mut cur = a;
        for (lo, hi) in ex {
            if hi <= cur {
                continue;
            }
            if lo >= b {
                break;
            }
            if lo >= cur {
                out.push((cur, lo));
            }
            cur = cur.max(hi);
            if cur > b {
                break;
            }
        }
        if cur <= b {
            out.push((cur, b));
        }
        Ok(out)
    }

    /// True iff k avoids every level-s excluded interval.
    pub fn admissible(&self, k: f64, s: usize) -> Result<bool> {
        Ok(self.excluded(s)?.iter().all(|&(lo, hi)| !(k > lo && k < hi)))
    }

    /// Half-width of the interval around k_n for the chosen family.
    pub fn reset_half_width(&self, n: &LatticeVector, family: IntervalFamily) -> Result<f64> {
        match family {
            IntervalFamily::Scale => {
                let s = self.ladder.scale_of_norm(n.norm())?;
                Ok((0.75 * self.ladder.log_delta(s)?).exp())
            }
            IntervalFamily::Diophantine => {
                Ok(self.freq.a0 * (1.0 + n.norm() as f64).powf(-self.freq.b0 - 3.0))
            }
        }
    }

    /// Reset set, ordering, principal sets and regime.
    pub fn reset(&self, k: f64, search_radius: u64, family: IntervalFamily) -> Result<ResonanceProfile> {
        if search_radius > self.cert_window {
            return Err(QpError::Regime(format!(
                "search radius {search_radius} beyond certificate window {}",
                self.cert_window
            )));
        }
        let sites = ball(self.nu(), search_radius as f64, usize::MAX)?;
        let mut reset = Vec::new();
        let mut boundary = Vec::new();
        for n in sites.iter().filter(|n| !n.is_zero()) {
            let h = self.reset_half_width(n, family)?;
            let d = (k - k_point(&self.freq, n)).abs();
            if (d - h).abs() <= MEMBERSHIP_TOL {
                boundary.push(n.clone());
            } else if d < h {
                reset.push(n.clone());
            }
        }
        reset.sort_by(|a, b| a.norm().cmp(&b.norm()).then_with(|| a.cmp(b)));
        let norm_ties = reset.windows(2).any(|w| w[0].norm() == w[1].norm());
        let scales = reset
            .iter()
            .map(|n| self.ladder.scale_of_norm(n.norm()))
            .collect::<Result<Vec<_>>>()?;
        let principal_sets = principal_sets(self.nu(), &reset);
        let regime = match reset.len() {
            0 => ResonanceRegime::Nonresonant(self.ladder.scale_of_norm(search_radius)?),
            1 => ResonanceRegime::SimplePair(reset[0].clone()),
            l => ResonanceRegime::Graded(l - 1),
        };
        Ok(ResonanceProfile {
            k,
            reset,
            scales,
            principal_sets,
            regime,
            boundary,
            norm_ties,
            search_radius,
        })
    }

    /// Minimal pairwise gap between consecutive components against 64 (delta^(s-1))^(1/6).
    pub fn separation_report(&self, s: usize, comps: &[(f64, f64)]) -> Result<(f64, f64)> {
        let need = 64.0 * (self.ladder.log_delta(s.saturating_sub(1))? / 6.0).exp();
        let gap = comps
            .windows(2)
            .map(|w| w[1].0 - w[0].1)
            .fold(f64::INFINITY, f64::min);
        Ok((gap, need))
    }
}

/// Merges open intervals; touching intervals stay separate (the endpoint survives).
fn merge_open(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in iv {
        match out.last_mut() {
            Some(last) if lo < last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntervalFamily {
    /// I_n with half-width (delta^(s))^(3/4), 12R^(s-1) < |n| <= 12R^(s).
    Scale,
    /// J_n with half-width a0 (1+|n|)^(-b0-3).
    Diophantine,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResonanceRegime {
    Nonresonant(usize),
    SimplePair(LatticeVector),
    Graded(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceProfile {
    pub k: f64,
    pub reset: Vec<LatticeVector>,
    pub scales: Vec<usize>,
    pub principal_sets: Vec<SiteSet>,
    pub regime: ResonanceRegime,
    /// Sites whose interval boundary lies within MEMBERSHIP_TOL of k.
    pub boundary: Vec<LatticeVector>,
    /// Two reset entries share a norm (excluded by the Diophantine condition).
    pub norm_ties: bool,
    /// Finite-window caveat: only |n| <= search_radius was scanned.
    pub search_radius: u64,
}

impl ResonanceProfile {
    pub fn is_boundary(&self) -> bool {
        !self.boundary.is_empty()
    }

    pub fn top_principal(&self) -> Option<&SiteSet> {
        self.principal_sets.last()
    }
}

/// m^(0) = {0, n^(0)}, m^(l) = m^(l-1) u T_{n^(l)}(m^(l-1)).
pub fn principal_sets(nu: usize, reset: &[LatticeVector]) -> Vec<SiteSet> {
    let mut out: Vec<SiteSet> = Vec::new();
    for (l, n) in reset.iter().enumerate() {
        let next = if l == 0 {
            [LatticeVector::zero(nu), n.clone()].into_iter().collect()
        } else {
            let prev = &out[l - 1];
            prev.union(&prev.reflect_through(n))
        };
        out.push(next);
    }
    out
}
