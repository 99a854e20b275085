use super::*;
use crate::model::{build_ladder, Regime};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lv(c: &[i64]) -> LatticeVector {
    LatticeVector(c.to_vec())
}

fn builder() -> SetBuilder {
    let ladder = build_ladder((-7f64).exp(), 0.4, 2, Regime::Desk, 2, 200_000).unwrap();
    SetBuilder::new(Frequency::golden(), ladder).unwrap()
}

fn interval(a: i64, b: i64) -> SiteSet {
    (a..=b).map(|x| lv(&[x])).collect()
}

#[test]
fn word_examples() {
    assert!(is_correct_word(&[1]));
    assert!(!is_correct_word(&[1, 1]));
    assert!(is_correct_word(&[1, 2, 1]));
    assert!(!is_correct_word(&[2, 1, 2]));
    let (n, w) = max_correct_length(2).unwrap();
    assert_eq!(n, 3);
    assert_eq!(w.len(), 3);
    assert!(is_correct_word(&w));
}

#[test]
fn word_bound_exhaustive() {
    for s in 1..=4 {
        let (n, w) = max_correct_length(s).unwrap();
        assert_eq!(n, (1 << s) - 1, "s = {s}");
        assert!(is_correct_word(&w));
    }
    assert!(matches!(max_correct_length(5), Err(QpError::Budget { .. })));
}

proptest! {
    #[test]
    fn minimal_incorrect_subword_shape(word in prop::collection::vec(1usize..=4, 2..20)) {
        if let Some((j, k)) = minimal_incorrect_subword(&word) {
            prop_assert_eq!(word[j], word[k]);
            prop_assert!(word[j + 1..k].iter().all(|&x| x < word[j]));
            prop_assert!(k - j <= (1 << word[j]) - 1);
        } else {
            prop_assert!(word.len() <= 15);
        }
    }
}

#[test]
fn fixpoint_trivial_cases() {
    let start = interval(0, 10);
    let empty = SubtractionSystem::new(vec![], vec![]).unwrap();
    assert_eq!(subtraction_fixpoint(&start, &empty).unwrap(), (start.clone(), 0));
    let sys = SubtractionSystem::new(vec![interval(9, 12)], vec![1]).unwrap();
    let (set, l0) = subtraction_fixpoint(&start, &sys).unwrap();
    assert_eq!(set, interval(0, 8));
    assert_eq!(l0, 1);
}

#[test]
fn improper_system_rejected() {
    let sys = SubtractionSystem::new(vec![interval(0, 3), interval(2, 5)], vec![1, 1]).unwrap();
    assert!(subtraction_fixpoint(&interval(0, 10), &sys).is_err());
    // level-1 pieces too wide for the level-2 separation
    let sys = SubtractionSystem::new(
        vec![interval(0, 6), interval(20, 21), interval(30, 31)],
        vec![1, 2, 2],
    )
    .unwrap();
    assert!(sys.validate().is_err());
}

/// Random proper system on Z^1: level-a sets have diameter below 2^-(a+1) R_(a+1).
pub(crate) fn random_proper_system(rng: &mut ChaCha8Rng) -> (SiteSet, SubtractionSystem) {
    // (diameter cap, separation) per level
    let shape = [(1i64, 4i64), (4, 24), (40, 400)];
    let mut sets = Vec::new();
    let mut levels = Vec::new();
    for (a, &(dcap, sep)) in shape.iter().enumerate() {
        let count = rng.gen_range(1..=if a == 2 { 2 } else { 8 });
        let mut placed: Vec<(i64, i64)> = Vec::new();
        for _ in 0..count * 4 {
            if placed.len() == count {
                break;
            }
            let len = rng.gen_range(0..=dcap);
            let lo = rng.gen_range(-80..=80);
            let hi = lo + len;
            if placed.iter().all(|&(x, y)| lo - y > sep || x - hi > sep) {
                placed.push((lo, hi));
            }
        }
        for (lo, hi) in placed {
            sets.push(interval(lo, hi));
            levels.push(a + 1);
        }
    }
    let lo = rng.gen_range(-60..0);
    let hi = rng.gen_range(0..60);
    (interval(lo, hi), SubtractionSystem::new(sets, levels).unwrap())
}

#[test]
fn random_proper_systems_stabilize() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let (start, sys) = random_proper_system(&mut rng);
        sys.validate().unwrap();
        let (fin, l0) = subtraction_fixpoint(&start, &sys).unwrap();
        assert!(l0 < 1 << sys.max_level().max(1), "l0 = {l0}");
        assert!(sys.sets.iter().all(|s| inside_or_disjoint(s, &fin)));
    }
}

#[test]
fn classes_scan_oracle() {
    let mut b = builder();
    let c = b.site_classes(0.35, 2, Some(5)).unwrap();
    assert_eq!(c.class(1), &[lv(&[0, 0])]);
    let k = 0.2;
    let c = b.site_classes(k, 2, None).unwrap();
    // independent scan of |v(m,k) - v(0,k)| <= delta0/16 with lambda = 256
    let t = (-7f64).exp() / 16.0;
    let w = c.window_radius as f64;
    let scan: Vec<LatticeVector> = ball(2, w, 1_000_000)
        .unwrap()
        .iter()
        .filter(|m| {
            let x = m.dot(&b.freq.omega);
            (x * (x + 2.0 * k)).abs() / 256.0 <= t
        })
        .cloned()
        .collect();
    assert_eq!(c.class(1), scan.as_slice());
    assert!(c.class(1).contains(&lv(&[0, 0])));
}

#[test]
fn classes_disjoint_top_contains_zero() {
    let mut b = builder();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let k = rng.gen_range(-0.45..0.45);
        let c = b.site_classes(k, 2, None).unwrap();
        assert!(c.class(1).contains(&lv(&[0, 0])));
        let all: Vec<_> = c.classes.values().flatten().collect();
        let uniq: std::collections::BTreeSet<_> = all.iter().collect();
        assert_eq!(all.len(), uniq.len());
        // desk ladders do not certify 12R^(1) separation; report only
        let _ = c.min_separation(1);
    }
}

#[test]
fn plain_sets() {
    let mut b = builder();
    let r1 = b.ladder.r(1).unwrap();
    let r2 = b.ladder.r(2).unwrap();
    assert_eq!(b.lambda_plain(0.2, 1).unwrap(), ball(2, 2.0 * r1, 100_000).unwrap());
    let rep = b.lambda_plain_report(0.2, 2).unwrap();
    assert!(rep.set.is_subset(&ball(2, 3.0 * r2, 100_000).unwrap()));
    for l in b.lower_sets(0.2, 2, None).unwrap() {
        assert!(inside_or_disjoint(&l.set, &rep.set));
    }
}

#[test]
fn plain_no_straddlers_is_full_ball() {
    let mut b = builder();
    // window radius 0 keeps only the center class, which sits inside B(3R)
    let r2 = b.ladder.r(2).unwrap();
    let cls = b.site_classes(0.3, 2, Some(0)).unwrap();
    assert_eq!(cls.class(1), &[lv(&[0, 0])]);
    let inner = b.lambda_at(0.3, &lv(&[0, 0]), 1).unwrap();
    let outer = ball(2, 3.0 * r2, 100_000).unwrap();
    let (set, l0) = fixpoint_unchecked(&outer, &[inner]);
    assert_eq!((set, l0), (outer, 0));
}

#[test]
fn plain_reflection_law() {
    let mut b = builder();
    for &k in &[0.17, -0.33] {
        let a = b.lambda_plain(k, 2).unwrap();
        let c = b.lambda_plain(-k, 2).unwrap();
        assert_eq!(c, a.reflect());
        let m = lv(&[1, -1]);
        assert_eq!(b.lambda_at(-k, &m.neg(), 2).unwrap(), b.lambda_at(k, &m, 2).unwrap().reflect());
    }
    let c1 = b.site_classes(0.21, 2, None).unwrap();
    let c2 = b.site_classes(-0.21, 2, None).unwrap();
    let neg: Vec<_> = c1.class(1).iter().map(|m| m.neg()).collect::<SiteSet>().to_vec();
    assert_eq!(c2.class(1).iter().cloned().collect::<SiteSet>().to_vec(), neg);
}

#[test]
fn sym_sets() {
    let mut b = builder();
    let r2 = b.ladder.r(2).unwrap();
    let rep = b.lambda_sym(1e-4, 2).unwrap();
    assert_eq!(rep.set.reflect(), rep.set);
    assert!(rep.set.is_subset(&ball(2, 3.0 * r2, 100_000).unwrap()));
    assert!(rep.steps < 4);
    assert!(rep.dichotomy);
    assert!(b.lambda_sym(0.3, 2).is_err());
}

#[test]
fn sym_one_straddling_pair() {
    let start = interval(-10, 10);
    let pair = interval(9, 11).union(&interval(-11, -9));
    let (set, l0) = fixpoint_unchecked(&start, &[pair]);
    assert_eq!(set, interval(-8, 8));
    assert_eq!(set.reflect(), set);
    assert_eq!(l0, 1);
}

#[test]
fn pair_sets() {
    let mut b = builder();
    let n0 = lv(&[0, 1]);
    let k0 = k_point(&b.freq, &n0);
    let r1 = b.ladder.r(1).unwrap();
    let s1 = b.lambda_pair(k0, 1, &n0).unwrap();
    let b3 = ball(2, 3.0 * r1, 100_000).unwrap();
    assert_eq!(s1.set, b3.union(&b3.reflect_through(&n0)));
    let rep = b.lambda_pair(k0 + 1e-5, 2, &n0).unwrap();
    assert_eq!(rep.set.reflect_through(&n0), rep.set);
    assert!(rep.steps < 4);
    assert!(rep.dichotomy);
    assert!(b.lambda_pair(100.0, 2, &n0).is_err());
}

#[test]
fn pair_regime_and_partners() {
    let b = builder();
    let n0 = lv(&[0, 1]);
    let k0 = k_point(&b.freq, &n0);
    let ld = b.ladder.log_delta(1).unwrap();
    let r = pair_regime(&b.freq, &b.ladder, k0 + 1e-5, &n0, 2).unwrap();
    assert!(r.inner && !r.outer);
    let r = pair_regime(&b.freq, &b.ladder, k0 + 0.5, &n0, 2).unwrap();
    assert!(r.outer && !r.inner);
    assert!((0.875 * ld).exp() < (0.75 * ld).exp());
    let sites = vec![lv(&[0, 0]), lv(&[3, 0])];
    let (pairs, dropped) = partner_pairs(&b.freq, k0 + 1e-5, &n0, &sites, 3);
    assert_eq!(pairs.len() + dropped.len(), 2);
    for (m, p) in &pairs {
        assert_eq!(p.sub(m).norm(), n0.norm());
    }
}
