//! Command bodies. Each returns a JSON summary and a pass flag.

use crate::config::{lattice, Model};
use crate::output::{f, set_json, site, site_json, sites_json, write_json, Csv};
use qpdual::exec::Exec;
use qpdual::inverse::{gap_table, verify_forward, verify_inverse, DecayBound, DecayLadder, InverseConfig};
use qpdual::lattice::{ball, LatticeVector, SiteSet};
use qpdual::model::{diophantine_margin, epsilon_thresholds, Potential};
use qpdual::mssets::{max_correct_length, pair_regime, partner_pairs, SetBuilder};
use qpdual::resonance::{IntervalFamily, ResonanceGeometry, ResonanceRegime};
use qpdual::schur::{block_inverse, dense_resolvent, rel_dev, BlockPartition};
use qpdual::spectral::{band, k_point, BandValue, SolveOptions};
use qpdual::trajectories::{closed_bound, decay_weight, gamma_sum, gamma_sum_bound, log_eps0_threshold, sum_enumerate_all, Variant, WeightProfile};
use qpdual::{Complex64, QpError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::Path;

pub struct Outcome {
    pub pass: bool,
    pub summary: Value,
}

fn opts(m: &Model) -> SolveOptions {
    SolveOptions { oracle_tol: m.cfg.tolerances.oracle, residual_tol: m.cfg.tolerances.residual, ..SolveOptions::default() }
}

fn nonzero_ball(nu: usize, r: u64) -> Result<Vec<LatticeVector>> {
    Ok(ball(nu, r as f64, usize::MAX)?.iter().filter(|m| !m.is_zero()).cloned().collect())
}

pub fn validate(m: &Model, out: &Path) -> Result<Outcome> {
    let t = &m.cfg.tolerances;
    let cert = diophantine_margin(&m.op.freq, t.diophantine_window)?;
    let thresholds = match epsilon_thresholds(m.cfg.nu, m.cfg.kappa0, &m.ladder) {
        Ok(e) => json!({"log_eps0": e.log_eps0, "log_eps_s": e.log_eps_s}),
        Err(e) => json!({"error": e.to_string()}),
    };
    let summary = json!({
        "command": "validate",
        "config": "ok",
        "diophantine": {
            "window": cert.window,
            "margin": cert.margin,
            "a0": m.cfg.a0,
            "witness": site_json(&cert.witness),
            "valid": cert.valid,
        },
        "ladder": {"log_r": m.ladder.log_r, "log_delta": m.ladder.log_delta},
        "epsilon_thresholds": thresholds,
    });
    write_json(out, "validate.json", &summary)?;
    if !cert.valid {
        return Err(QpError::Invalid(format!(
            "Diophantine margin {} below a0 = {} at {}",
            cert.margin, m.cfg.a0, cert.witness
        )));
    }
    Ok(Outcome { pass: true, summary })
}

pub fn band_cmd(m: &Model, out: &Path, exec: Exec) -> Result<Outcome> {
    let ks = m.cfg.k_values();
    let r = m.cfg.box_radius;
    let nu = m.cfg.nu;
    let budget = m.op.matrix_budget;
    let pts = band(&m.op, &ks, |_| ball(nu, r, budget), r as u64, &opts(m), exec);
    let mut csv = Csv::new(
        "band of the dual matrix on B(box_radius), raw normalization",
        &[
            ("k", "quasi-momentum"),
            ("E", "eigenvalue continued from site 0; lower edge at gap points"),
            ("E_upper", "upper gap edge at half-lattice points, else empty"),
            ("regime", "simple | fallback | pair | gap | error"),
            ("error", "error message when regime = error"),
        ],
    );
    let mut errors = 0;
    for p in &pts {
        let upper = match &p.value {
            Ok(BandValue::Gap(g)) => f(g.e_plus),
            _ => String::new(),
        };
        let err = match &p.value {
            Err(e) => {
                errors += 1;
                e.to_string().replace(',', ";")
            }
            Ok(_) => String::new(),
        };
        csv.row(&[f(p.k), p.energy().map(f).unwrap_or_default(), upper, p.tag().into(), err]);
    }
    csv.write(out, "band.csv")?;
    Ok(Outcome { pass: true, summary: json!({"command": "band", "points": pts.len(), "errors": errors}) })
}

fn gaps_csv(m: &Model, out: &Path, exec: Exec) -> Result<(Vec<qpdual::inverse::GapRow>, qpdual::inverse::ForwardReport)> {
    let ms = nonzero_ball(m.cfg.nu, m.cfg.tolerances.gap_window)?;
    let table = gap_table(&m.op, &ms, m.cfg.box_radius, &opts(m), exec);
    let rep = verify_forward(&table, &m.op.pot);
    let mut csv = Csv::new(
        "spectral gaps at k_m = -m.omega/2 on B(box_radius) u (m + B(box_radius))",
        &[
            ("m", "lattice vector, coordinates separated by ';'"),
            ("k_m", "resonance point -m.omega/2"),
            ("E_minus", "lower gap edge"),
            ("E_plus", "upper gap edge"),
            ("width", "E_plus - E_minus"),
            ("bound", "2 eps exp(-kappa0 |m| / 2)"),
            ("pass", "width <= bound"),
            ("status", "ok or the error message"),
        ],
    );
    for row in &table {
        match &row.record {
            Ok(g) => {
                let bound = qpdual::inverse::forward_bound(&m.op.pot, &row.m);
                csv.row(&[site(&row.m), f(g.k_point), f(g.e_minus), f(g.e_plus), f(g.width), f(bound), (g.width <= bound).to_string(), "ok".into()]);
            }
            Err(e) => {
                let k = k_point(&m.op, &row.m);
                let bound = qpdual::inverse::forward_bound(&m.op.pot, &row.m);
                csv.row(&[site(&row.m), f(k), String::new(), String::new(), String::new(), f(bound), "false".into(), e.to_string().replace(',', ";")]);
            }
        }
    }
    csv.write(out, "gaps.csv")?;
    Ok((table, rep))
}

pub fn gaps(m: &Model, out: &Path, exec: Exec) -> Result<Outcome> {
    let (table, rep) = gaps_csv(m, out, exec)?;
    Ok(Outcome {
        pass: true,
        summary: json!({
            "command": "gaps",
            "rows": table.len(),
            "violations": rep.violations.len(),
            "failures": rep.failures.len(),
        }),
    })
}

pub fn verify_forward_cmd(m: &Model, out: &Path, exec: Exec) -> Result<Outcome> {
    let (_, rep) = gaps_csv(m, out, exec)?;
    let rows: Vec<Value> = rep
        .rows
        .iter()
        .map(|r| json!({"m": site_json(&r.m), "k_m": r.k_m, "E_minus": r.e_minus, "E_plus": r.e_plus, "width": r.width, "bound": r.bound, "margin": r.margin, "pass": r.pass}))
        .collect();
    let summary = json!({
        "command": "verify-forward",
        "pass": rep.all_pass(),
        "in_regime": rep.in_regime,
        "violations": sites_json(&rep.violations),
        "failures": rep.failures.iter().map(|(m, e)| json!({"m": site_json(m), "error": e})).collect::<Vec<_>>(),
        "rows": rows,
    });
    write_json(out, "forward-report.json", &summary)?;
    Ok(Outcome { pass: rep.all_pass(), summary })
}

pub fn verify_inverse_cmd(m: &Model, out: &Path, exec: Exec) -> Result<Outcome> {
    let t = &m.cfg.tolerances;
    let cfg = InverseConfig {
        box_radius: t.inverse_box_radius,
        window: t.inverse_window,
        iterations: t.inverse_iterations,
        kappa: m.cfg.inverse_kappa(),
        ..InverseConfig::default()
    };
    let rep = verify_inverse(&m.op, &cfg, &opts(m), exec)?;
    let checks: Vec<Value> = rep
        .coefficient_checks
        .iter()
        .map(|c| {
            json!({
                "n0": site_json(&c.n0), "c_abs": c.c_true, "width": c.width, "gap_term": c.gap_term,
                "scaled_term": c.scaled_term, "remainder": c.remainder, "rhs": c.rhs, "rhs_scaled": c.rhs_scaled, "pass": c.pass,
            })
        })
        .collect();
    let summary = json!({
        "command": "verify-inverse",
        "pass": rep.pass(),
        "hypothesis": rep.hypothesis,
        "coefficient_ok": rep.coefficient_ok,
        "coefficient_checks": checks,
        "iterates": rep.iterates.iter().map(|b| json!({"eps_hat": b.eps_hat, "kappa_hat": b.kappa_hat})).collect::<Vec<_>>(),
        "improve_failure": rep.improve_failure,
        "target_kappa": cfg.kappa,
        "target_reached": rep.target_reached,
        "final_ok": rep.final_ok,
        "caveat": rep.caveat,
    });
    write_json(out, "inverse-report.json", &summary)?;
    Ok(Outcome { pass: rep.pass(), summary })
}

fn regime_json(r: &ResonanceRegime) -> Value {
    match r {
        ResonanceRegime::Nonresonant(s) => json!({"nonresonant": s}),
        ResonanceRegime::SimplePair(n) => json!({"simple_pair": site_json(n)}),
        ResonanceRegime::Graded(l) => json!({"graded": l}),
    }
}

fn result_json<T>(r: Result<T>, f: impl FnOnce(T) -> Value) -> Value {
    match r {
        Ok(v) => f(v),
        Err(e) => json!({"error": e.to_string(), "kind": e.kind()}),
    }
}

pub fn geometry(m: &Model, out: &Path) -> Result<Outcome> {
    let g = &m.cfg.geometry;
    let (k, s) = (g.k, g.s);
    let mut b = SetBuilder::new(m.op.freq.clone(), m.ladder.clone())?;
    let classes = b.site_classes(k, s, None)?;
    let class_json: BTreeMap<String, Value> = classes.classes.iter().map(|(sp, v)| (sp.to_string(), sites_json(v))).collect();
    let plain = b.lambda_plain_report(k, s)?;
    let sym = result_json(b.lambda_sym(k, s), |r| {
        json!({"sites": set_json(&r.set), "steps": r.steps, "sandwich": r.sandwich, "classes": r.classes, "dichotomy": r.dichotomy})
    });
    let pair = match &g.n0 {
        None => Value::Null,
        Some(n0) => {
            let n0 = lattice(m.cfg.nu, n0)?;
            let all: Vec<LatticeVector> = classes.classes.values().flatten().cloned().collect();
            let (pairs, dropped) = partner_pairs(&m.op.freq, k, &n0, &all, classes.window_radius);
            json!({
                "n0": site_json(&n0),
                "set": result_json(b.lambda_pair(k, s, &n0), |r| json!({"sites": set_json(&r.set), "steps": r.steps, "dichotomy": r.dichotomy})),
                "regime": result_json(pair_regime(&m.op.freq, &m.ladder, k, &n0, s), |r| json!({"inner": r.inner, "outer": r.outer, "offset": r.offset})),
                "partners": pairs.iter().map(|(a, p)| json!([site_json(a), site_json(p)])).collect::<Vec<_>>(),
                "dropped_partners": sites_json(&dropped),
            })
        }
    };
    let geo = ResonanceGeometry::new(m.op.freq.clone(), m.ladder.clone(), g.search_radius);
    let profile = geo.reset(k, g.search_radius, IntervalFamily::Scale)?;
    let summary = json!({
        "command": "geometry",
        "k": k,
        "s": s,
        "site_classes": {"window_radius": classes.window_radius, "classes": class_json},
        "lambda_plain": {"sites": set_json(&plain.set), "extra_steps": plain.extra_steps, "sandwich": plain.sandwich},
        "lambda_sym": sym,
        "lambda_pair": pair,
        "principal": {
            "reset": sites_json(&profile.reset),
            "scales": profile.scales,
            "principal_sets": profile.principal_sets.iter().map(set_json).collect::<Vec<_>>(),
            "regime": regime_json(&profile.regime),
            "boundary": sites_json(&profile.boundary),
            "norm_ties": profile.norm_ties,
        },
    });
    write_json(out, "geometry.json", &summary)?;
    let brief = json!({"command": "geometry", "k": k, "s": s, "lambda_plain_sites": plain.set.len(), "reset": sites_json(&profile.reset)});
    Ok(Outcome { pass: true, summary: brief })
}

pub fn traj_bound(m: &Model, out: &Path) -> Result<Outcome> {
    let t = &m.cfg.tolerances;
    let nu = m.cfg.nu;
    let host = ball(nu, t.traj_host_radius, usize::MAX)?;
    let ambient = ball(nu, t.traj_host_radius + 2.0, usize::MAX)?;
    let prof = WeightProfile { d: BTreeMap::new(), t: t.traj_t, kappa0: m.cfg.kappa0, host: host.clone(), ambient };
    prof.validate()?;
    let log_eps0 = log_eps0_threshold(nu, prof.t, prof.kappa0);
    let w = decay_weight(prof.kappa0);
    let start = LatticeVector::zero(nu);
    let sums = sum_enumerate_all(&start, &prof, log_eps0, Variant::Plain, t.traj_len_cap, &w)?;
    let mut csv = Csv::new(
        "admissible trajectory sums from 0 against the closed bound (logs at the eps0 threshold)",
        &[
            ("n", "endpoint in the host ball"),
            ("count", "admissible trajectories enumerated"),
            ("log_enumerated", "log of the enumerated sum with W weights"),
            ("log_tail", "log of the bound for longer trajectories"),
            ("log_closed", "log of the closed-form bound"),
            ("pass", "enumerated + tail <= closed"),
        ],
    );
    let mut all = true;
    for (n, s) in &sums {
        let closed = closed_bound(&start, n, &prof, log_eps0)?;
        let total = s.total();
        let pass = total.le(&closed, log_eps0);
        all &= pass;
        csv.row(&[site(n), s.count.to_string(), f(s.partial_big_w.log_value(log_eps0)), f(s.tail.log_value(log_eps0)), f(closed.log_value(log_eps0)), pass.to_string()]);
    }
    csv.write(out, "traj-bound.csv")?;
    let mut gcsv = Csv::new(
        "sums over k-point chains from 0 of exp(-alpha |path| / 8) against (8/alpha)^((k-1) nu)",
        &[("k", "chain length"), ("alpha", "rate"), ("max_sum", "max over endpoints"), ("bound", "closed bound"), ("pass", "max_sum <= bound")],
    );
    for k in [2usize, 3] {
        for alpha in [1.0, 2.0] {
            let max = host.iter().map(|n| gamma_sum(&start, n, &host, k, alpha)).fold(0.0, f64::max);
            let bound = gamma_sum_bound(k, alpha, nu);
            all &= max <= bound;
            gcsv.row(&[k.to_string(), f(alpha), f(max), f(bound), (max <= bound).to_string()]);
        }
    }
    gcsv.write(out, "gamma-bound.csv")?;
    Ok(Outcome { pass: all, summary: json!({"command": "traj-bound", "endpoints": sums.len(), "pass": all}) })
}

fn check(name: &str, pass: bool, detail: Value) -> Value {
    json!({"name": name, "pass": pass, "detail": detail})
}

/// Invariant suite on instances drawn from the configured seed.
pub fn selftest(m: &Model, out: &Path, seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nu = m.cfg.nu;
    let op = &m.op;
    let mut checks = Vec::new();
    let s = ball(nu, 3.0, usize::MAX)?;
    let k = 0.137;
    let shift = LatticeVector::unit(nu, 0);
    let coc = op.cocycle_check(&shift, &s, k);
    checks.push(check("cocycle", coc <= 1e-12, json!(coc)));
    let refl = op.reflection_conjugation_check(&s, k);
    checks.push(check("reflection", refl <= 1e-12, json!(refl)));
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let pot: Potential = qpdual::sampling::random_potential(&mut rng, nu, 2, m.cfg.epsilon.max(1e-3), m.cfg.kappa0, true);
        let rop = qpdual::dual_operator::DualOperator::new(op.freq.clone(), pot);
        let mat = rop.restrict(&s, k, qpdual::dual_operator::Normalization::Raw)?;
        let e = 0.5;
        let dense = dense_resolvent(&mat, e)?;
        let blocks: Vec<SiteSet> = (0..=3).map(|r| s.iter().filter(|n| n.norm() == r).cloned().collect()).collect();
        let tags = vec![qpdual::schur::BlockTag::Nonresonant; blocks.len()];
        let part = BlockPartition::new(s.clone(), blocks, tags)?;
        worst = worst.max(rel_dev(&block_inverse(&mat, e, &part)?.inverse, &dense));
        worst = worst.max(rel_dev(&block_inverse(&mat, e, &BlockPartition::singletons(&s))?.inverse, &dense));
    }
    checks.push(check("block_inverse_vs_dense", worst <= 1e-10, json!(worst)));
    let mut words = true;
    for s in 1..=4 {
        words &= max_correct_length(s)?.0 == (1 << s) - 1;
    }
    checks.push(check("correct_word_bound", words, Value::Null));
    let ladder = DecayLadder::new(2.0)?;
    let sig = (1..=50).all(|t| 15.0 / 16.0 * (1.0 - ladder.sigma(3 * t)) > (15.0f64 / 16.0).powi(2));
    checks.push(check("decay_ladder_sigma", sig, Value::Null));
    let mut synth = Potential::new(1e-4, 0.5);
    for n in ball(nu, 3.0, usize::MAX)?.iter().filter(|n| !n.is_zero()) {
        synth = synth.with_pair(n.clone(), Complex64::new((-8.0 * n.norm() as f64).exp(), 0.0));
    }
    let mut cur = DecayBound::new(1e-4, 0.5)?;
    let mut improved = 0;
    for _ in 0..5 {
        match qpdual::inverse::improve_decay(&cur, &synth, &ladder) {
            Ok(b) => {
                cur = b;
                improved += 1;
            }
            Err(_) => break,
        }
    }
    checks.push(check("improve_decay_five", improved == 5, json!(improved)));
    let e0 = op.pot.epsilon;
    let sym_ok = (|| -> Result<bool> {
        let b = ball(nu, m.cfg.box_radius.min(4.0), op.matrix_budget)?;
        let o = opts(m);
        let a = qpdual::spectral::eigen_simple(op, &LatticeVector::zero(nu), &b, 0.21, &o)?.e;
        let c = qpdual::spectral::eigen_simple(op, &LatticeVector::zero(nu), &b, -0.21, &o)?.e;
        Ok((a - c).abs() <= 1e-11 * a.abs().max(1.0))
    })();
    checks.push(check("band_even_in_k", matches!(sym_ok, Ok(true)), json!({"epsilon": e0, "error": sym_ok.err().map(|e| e.to_string())})));
    let pass = checks.iter().all(|c| c["pass"] == json!(true));
    let summary = json!({"command": "selftest", "seed": seed, "pass": pass, "checks": checks});
    write_json(out, "selftest.json", &summary)?;
    Ok(Outcome { pass, summary })
}
