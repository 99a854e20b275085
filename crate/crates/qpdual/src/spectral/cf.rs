//! Continued-fraction functions f = f1 - b^2/f2 and their polynomial
//! bookkeeping: chi = mu f, mu, tau and the sign sequence. Values carry
//! second-order u-jets so convexity can be checked without differencing.

use crate::error::{QpError, Result};
use rand::Rng;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

/// Value with first and second u-derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub du: f64,
    pub duu: f64,
}

impl Jet {
    pub const fn new(v: f64, du: f64, duu: f64) -> Self {
        Jet { v, du, duu }
    }

    pub const fn constant(v: f64) -> Self {
        Jet { v, du: 0.0, duu: 0.0 }
    }

    pub const fn var(u: f64) -> Self {
        Jet { v: u, du: 1.0, duu: 0.0 }
    }

    /// Quotient rule; None when the denominator vanishes.
    pub fn div(self, o: Jet) -> Option<Jet> {
        if o.v == 0.0 {
            return None;
        }
        let q = self.v / o.v;
        let dq = (self.du - q * o.du) / o.v;
        let ddq = (self.duu - 2.0 * dq * o.du - q * o.duu) / o.v;
        Some(Jet::new(q, dq, ddq))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet::new(self.v + o.v, self.du + o.du, self.duu + o.duu)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet::new(self.v - o.v, self.du - o.du, self.duu - o.duu)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet::new(self.v * o.v, self.du * o.v + self.v * o.du, self.duu * o.v + 2.0 * self.du * o.du + self.v * o.duu)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet::new(-self.v, -self.du, -self.duu)
    }
}

/// Scalar function of (x, u) returning its u-jet.
pub type Scalar = Arc<dyn Fn(f64, f64) -> Jet + Send + Sync>;

pub fn constant(c: f64) -> Scalar {
    Arc::new(move |_, _| Jet::constant(c))
}

/// c + p (u - u0) + q x + r (u - u0)^2.
pub fn quadratic(c: f64, p: f64, q: f64, r: f64, u0: f64) -> Scalar {
    Arc::new(move |x, u| {
        let d = u - u0;
        Jet::new(c + p * d + q * x + r * d * d, p + 2.0 * r * d, 2.0 * r)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// f = f1 - b^2 / f2
    First,
    /// f = f2 - b^2 / f1
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Case {
    Plus,
    Minus,
}

impl Case {
    fn sign(self) -> i8 {
        match self {
            Case::Plus => 1,
            Case::Minus => -1,
        }
    }
}

#[derive(Clone)]
pub enum CFNode {
    /// f = u - a, with chi = f, mu = 1, tau = 1, sigma = 1.
    Atom { a: Scalar },
    Node { f1: Box<CFNode>, f2: Box<CFNode>, b2: Scalar, branch: Branch, case: Case },
}

impl std::fmt::Debug for CFNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CFNode::Atom { .. } => write!(f, "Atom"),
            CFNode::Node { f1, f2, branch, case, .. } => write!(f, "Node({f1:?}, {f2:?}, {branch:?}, {case:?})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CFValue {
    /// chi / mu; None where mu vanishes.
    pub f: Option<Jet>,
    pub chi: Jet,
    pub mu: Jet,
    pub tau: Jet,
}

impl CFNode {
    /// Level-one node over u - a1 and u - a2.
    pub fn leaf(a1: Scalar, a2: Scalar, b2: Scalar, branch: Branch, case: Case) -> Self {
        CFNode::Node { f1: Box::new(CFNode::Atom { a: a1 }), f2: Box::new(CFNode::Atom { a: a2 }), b2, branch, case }
    }

    /// Internal node; siblings must share level and sign sequence.
    pub fn internal(f1: CFNode, f2: CFNode, b2: Scalar, branch: Branch, case: Case) -> Result<Self> {
        if f1.level() != f2.level() || f1.level() == 0 {
            return Err(QpError::Invalid("children must be non-atomic nodes of equal level".into()));
        }
        if f1.sigma_hat() != f2.sigma_hat() {
            return Err(QpError::Invalid("sibling sign sequences differ".into()));
        }
        Ok(CFNode::Node { f1: Box::new(f1), f2: Box::new(f2), b2, branch, case })
    }

    pub fn level(&self) -> usize {
        match self {
            CFNode::Atom { .. } => 0,
            CFNode::Node { f1, f2, .. } => 1 + f1.level().max(f2.level()),
        }
    }

    pub fn sigma(&self) -> i8 {
        match self {
            CFNode::Atom { .. } => 1,
            CFNode::Node { f1, case, .. } => case.sign() * f1.sigma(),
        }
    }

    /// (sigma(f), sigma(f_i), ...) down to level one.
    pub fn sigma_hat(&self) -> Vec<i8> {
        match self {
            CFNode::Atom { .. } => vec![],
            CFNode::Node { f1, .. } => {
                let mut s = vec![self.sigma()];
                s.extend(f1.sigma_hat());
                s
            }
        }
    }

    pub fn children(&self) -> Option<(&CFNode, &CFNode)> {
        match self {
            CFNode::Atom { .. } => None,
            CFNode::Node { f1, f2, .. } => Some((f1, f2)),
        }
    }

    pub fn b2(&self, x: f64, u: f64) -> Option<Jet> {
        match self {
            CFNode::Atom { .. } => None,
            CFNode::Node { b2, .. } => Some(b2(x, u)),
        }
    }
}

/// chi in product form (always finite), mu, tau, and f = chi/mu where defined.
pub fn cf_evaluate(node: &CFNode, x: f64, u: f64) -> CFValue {
    match node {
        CFNode::Atom { a } => {
            let f = Jet::var(u) - a(x, u);
            CFValue { f: Some(f), chi: f, mu: Jet::constant(1.0), tau: Jet::constant(1.0) }
        }
        CFNode::Node { f1, f2, b2, branch, .. } => {
            let c1 = cf_evaluate(f1, x, u);
            let c2 = cf_evaluate(f2, x, u);
            let b2 = b2(x, u);
            let mu = match branch {
                Branch::First => c1.mu * c2.chi,
                Branch::Second => c2.mu * c1.chi,
            };
            let chi = c1.chi * c2.chi - c1.mu * c2.mu * b2;
            let tau = (c2.chi - c1.chi) * c1.tau * c2.tau;
            CFValue { f: chi.div(mu), chi, mu, tau }
        }
    }
}

/// d^2 chi / du^2 - (1/2) (min tau(f_i))^4; positive inside the class.
pub fn convexity_margin(node: &CFNode, x: f64, u: f64) -> Option<f64> {
    let (f1, f2) = node.children()?;
    let t = cf_evaluate(f1, x, u).tau.v.abs().min(cf_evaluate(f2, x, u).tau.v.abs());
    Some(cf_evaluate(node, x, u).chi.duu - 0.5 * t.powi(4))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZetaRoots {
    pub minus: Option<f64>,
    pub plus: Option<f64>,
}

const ROOT_SAMPLES: usize = 512;

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let fa0 = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa0 > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Roots of chi(x, .) in the window, by bisection around the convex minimum.
pub fn zeta_roots(node: &CFNode, x: f64, window: (f64, f64)) -> Result<ZetaRoots> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(QpError::Invalid("empty u-window".into()));
    }
    let chi = |u: f64| cf_evaluate(node, x, u).chi;
    let mut changes = 0;
    let mut prev = chi(lo).v;
    for i in 0..=ROOT_SAMPLES {
        let u = lo + (hi - lo) * i as f64 / ROOT_SAMPLES as f64;
        let c = chi(u);
        if !(c.duu > 0.0) {
            return Err(QpError::Regime(format!("chi not strictly convex at u = {u}")));
        }
        if (c.v > 0.0) != (prev > 0.0) {
            changes += 1;
        }
        prev = c.v;
    }
    if changes > 2 {
        return Err(QpError::Regime(format!("{changes} sign changes of chi in the window")));
    }
    let du = |u: f64| chi(u).du;
    let umin = if du(lo) >= 0.0 {
        lo
    } else if du(hi) <= 0.0 {
        hi
    } else {
        bisect(du, lo, hi)
    };
    let cmin = chi(umin).v;
    if cmin > 0.0 {
        return Err(QpError::Regime("chi has no root in the window".into()));
    }
    if cmin == 0.0 {
        return Ok(ZetaRoots { minus: Some(umin), plus: Some(umin) });
    }
    let f = |u: f64| chi(u).v;
    let minus = (f(lo) > 0.0).then(|| bisect(f, lo, umin));
    let plus = (f(hi) > 0.0).then(|| bisect(f, umin, hi));
    if minus.is_none() && plus.is_none() {
        return Err(QpError::Regime("chi negative on the whole window".into()));
    }
    Ok(ZetaRoots { minus, plus })
}

/// (zeta+ - zeta-) - (1/8)(|chi'(zeta-)| + |chi'(zeta+)|); nonnegative when separation holds.
pub fn separation_margin(node: &CFNode, x: f64, r: &ZetaRoots) -> Option<f64> {
    let (m, p) = (r.minus?, r.plus?);
    let dm = cf_evaluate(node, x, m).chi.du.abs();
    let dp = cf_evaluate(node, x, p).chi.du.abs();
    Some((p - m) - (dm + dp) / 8.0)
}

/// a_i = u - f_i and |b| at a point.
fn frozen(node: &CFNode, x: f64, u: f64) -> Option<(f64, f64, f64)> {
    let (f1, f2) = node.children()?;
    let a1 = u - cf_evaluate(f1, x, u).f?.v;
    let a2 = u - cf_evaluate(f2, x, u).f?.v;
    let b = node.b2(x, u)?.v.max(0.0).sqrt();
    Some((a1, a2, b))
}

/// Largest violation of the two sandwich estimates for zeta+ and zeta- (<= 0 when they hold).
pub fn sandwich_defect(node: &CFNode, x: f64, r: &ZetaRoots) -> Option<f64> {
    let (zm, zp) = (r.minus?, r.plus?);
    let (a1p, a2p, bp) = frozen(node, x, zp)?;
    let (_, a2m, bm) = frozen(node, x, zm)?;
    let tol = 1e-13 * zp.abs().max(zm.abs()).max(1e-3);
    let defects = [
        a1p.max(a2p + bp) - zp,
        zp - (a1p + bp),
        (a2m - bm) - zm,
        zm - a2m.min(a1p - bp),
    ];
    Some(defects.iter().fold(f64::NEG_INFINITY, |acc, d| acc.max(*d)) - tol)
}

/// Which branch of the dichotomy holds for u with |(u - a1)(u - a2) - b^2| < (a1 - a2)^2/4.
/// Ok(None) outside that region; an Assertion error if u is in neither case.
pub fn quadratic_dichotomy(a1: f64, a2: f64, b: f64, u: f64) -> Result<Option<Case>> {
    if !(a1 > a2) {
        return Err(QpError::Invalid("dichotomy needs a1 > a2".into()));
    }
    let d = a1 - a2;
    let q = (u - a1) * (u - a2) - b * b;
    if !(q.abs() < d * d / 4.0) {
        return Ok(None);
    }
    let lambda = q / (d * d);
    let gamma = ((1.0 + 4.0 * lambda).sqrt() - 1.0) / 2.0;
    let slack = 1e-12 * (a1.abs() + a2.abs() + b.abs() + d);
    let b = b.abs();
    let any_lo = a2 - gamma.abs() * d - b;
    let any_hi = a1 + gamma.abs() * d + b;
    if u < any_lo - slack || u > any_hi + slack {
        return Err(QpError::Assertion(format!("u = {u} outside the universal bracket")));
    }
    if u >= (a1 - gamma.abs() * d).max(0.5 * (a1 + a2 + 2.0 * b)) - slack {
        return Ok(Some(Case::Plus));
    }
    if u <= (a2 + gamma.abs() * d).min(0.5 * (a1 + a2 - 2.0 * b)) + slack {
        return Ok(Some(Case::Minus));
    }
    Err(QpError::Assertion(format!("u = {u} between the two dichotomy cases")))
}

/// Random level-one node in the class, with its root window.
pub fn random_level1<R: Rng>(rng: &mut R) -> (CFNode, (f64, f64)) {
    let center = rng.gen_range(-0.5..0.5);
    let gap = rng.gen_range(1e-3..1e-2);
    let c1 = center + gap / 2.0;
    let c2 = center - gap / 2.0;
    // slopes stay far below the splitting so that a1 > a2 on the whole window
    let small = |rng: &mut R| rng.gen_range(-gap / 4.0..gap / 4.0);
    let a1 = quadratic(c1, small(rng), small(rng), small(rng), center);
    let a2 = quadratic(c2, small(rng), small(rng), small(rng), center);
    let beta: f64 = rng.gen_range(0.0..1e-2);
    let s = rng.gen_range(-1.0..1.0);
    let b2: Scalar = Arc::new(move |_, u| {
        let d = u - center;
        Jet::new(beta * beta * (1.0 + s * d), beta * beta * s, 0.0)
    });
    let branch = if rng.gen_bool(0.5) { Branch::First } else { Branch::Second };
    (CFNode::leaf(a1, a2, b2, branch, Case::Plus), (center - 0.1, center + 0.1))
}

/// Random level-two node over two '+'-case children, with its root window.
pub fn random_level2<R: Rng>(rng: &mut R) -> (CFNode, (f64, f64)) {
    let mut cs: [f64; 2] = [rng.gen_range(-3e-4..3e-4), rng.gen_range(-3e-4..3e-4)];
    cs.sort_by(|a, b| b.total_cmp(a));
    if cs[0] - cs[1] < 2e-5 {
        cs[0] += 2e-5;
    }
    let child = |rng: &mut R, c: f64| {
        let a1 = quadratic(c, rng.gen_range(-1e-4..1e-4), 0.0, 0.0, 0.0);
        let a2 = constant(-0.03 + rng.gen_range(-1e-3..1e-3));
        let b2 = constant(rng.gen_range(0.0..1e-8));
        CFNode::leaf(a1, a2, b2, Branch::First, Case::Plus)
    };
    let f1 = child(rng, cs[0]);
    let f2 = child(rng, cs[1]);
    let beta: f64 = rng.gen_range(0.0..6e-6);
    let node = CFNode::internal(f1, f2, constant(beta * beta), Branch::First, Case::Plus).expect("siblings match");
    (node, (-1e-3, 1e-3))
}
