//! Elementary convexity estimate: for f with inf f'' = sigma0 > 0 and points
//! v1 < v2 where f' has one sign, (v2 - v1)^2 <= 2 |f(v1) - f(v2)| / sigma0.

/// Slack of the estimate (>= 0 when it holds); None when the derivative signs differ.
pub fn convexity_gap_slack<F, D>(f: F, df: D, v1: f64, v2: f64, sigma0: f64) -> Option<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if df(v1).signum() * df(v2).signum() < 0.0 {
        return None;
    }
    let (a, b) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
    Some(2.0 / sigma0 * (f(a) - f(b)).abs() - (b - a).powi(2))
}

/// Lower bound for sigma0 = inf f'' over [lo, hi] from a sampled second derivative.
pub fn sampled_inf<D2: Fn(f64) -> f64>(d2f: D2, lo: f64, hi: f64, n: usize) -> f64 {
    (0..=n).map(|i| d2f(lo + (hi - lo) * i as f64 / n as f64)).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parabola_is_tight() {
        // f = u^2: sigma0 = 2, |f(v1) - f(v2)| = (v2 - v1)(v2 + v1) >= (v2 - v1)^2 on [0, inf)
        let s = convexity_gap_slack(|u| u * u, |u| 2.0 * u, 0.0, 1.5, 2.0).unwrap();
        assert!(s.abs() < 1e-15);
        assert!(convexity_gap_slack(|u| u * u, |u| 2.0 * u, -1.0, 1.0, 2.0).is_none());
    }

    proptest! {
        #[test]
        fn holds_for_convex_samples(c in 0.1f64..3.0, d in -1.0f64..1.0, e in 0.0f64..0.3, v1 in -2.0f64..2.0, v2 in -2.0f64..2.0) {
            // f = c u^2 + d u + e cosh(u), f'' = 2c + e cosh(u)
            let f = |u: f64| c * u * u + d * u + e * u.cosh();
            let df = |u: f64| 2.0 * c * u + d + e * u.sinh();
            let sigma0 = sampled_inf(|u: f64| 2.0 * c + e * u.cosh(), -2.0, 2.0, 400);
            if let Some(s) = convexity_gap_slack(f, df, v1, v2, sigma0) {
                prop_assert!(s >= -1e-12);
            }
        }
    }
}
