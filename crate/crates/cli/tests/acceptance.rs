//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Runtime limits are part of each criterion.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use mbic_core::bounds::{
    m_threshold, mc_max_projector_form, mc_nested_form, mc_single_projector_tail, BoundReport, NestedLab,
    ProjectorLab, SamplingRule,
};
use mbic_core::datagen::{generate, DesignKind, ErrorFamily, Scenario};
use mbic_core::experiment::{run_experiment, ExperimentConfig, SummaryRow};
use mbic_core::{
    delta, exhaustive_search, extend_fit, fit_model, score_mbic, score_mbic2, Criterion, Design, FactorState,
    Instance, ModelIndexSet, ScoringContext, SearchBudget, SearchStrategy,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// `(id, name, runtime limit in seconds, check)`
type Check = (&'static str, &'static str, u64, fn() -> Outcome);

fn instance(n: usize, p: usize, p0: usize, beta: f64, error: ErrorFamily, seed: u64) -> Instance {
    generate(&Scenario {
        n,
        p,
        p0,
        beta_magnitude: beta,
        design: DesignKind::IidNormal,
        error,
        seed,
    })
    .expect("valid scenario")
}

// ---------------------------------------------------------------- AC1

/// RSS from `X^T X b = X^T y`, Gauss-Jordan with partial pivoting.
fn normal_equations_rss(x: &Design, y: &[f64], cols: &[usize]) -> f64 {
    let (n, k) = (x.n(), cols.len());
    let w = k + 1;
    let mut a = vec![0.0; k * w];
    for (r, &i) in cols.iter().enumerate() {
        for (c, &j) in cols.iter().enumerate() {
            a[r * w + c] = (0..n).map(|t| x.get(t, i) * x.get(t, j)).sum();
        }
        a[r * w + k] = (0..n).map(|t| x.get(t, i) * y[t]).sum();
    }
    for c in 0..k {
        let piv = (c..k).max_by(|&u, &v| a[u * w + c].abs().total_cmp(&a[v * w + c].abs())).unwrap();
        for t in 0..w {
            a.swap(c * w + t, piv * w + t);
        }
        for r in (0..k).filter(|&r| r != c) {
            let f = a[r * w + c] / a[c * w + c];
            for t in c..w {
                a[r * w + t] -= f * a[c * w + t];
            }
        }
    }
    (0..n)
        .map(|t| {
            let fitted: f64 = cols.iter().enumerate().map(|(r, &j)| x.get(t, j) * a[r * w + k] / a[r * w + r]).sum();
            (y[t] - fitted).powi(2)
        })
        .sum()
}

fn oracle_value(c: Criterion, n: usize, p: usize, rss: f64, size: usize) -> f64 {
    let (nf, pf, k) = (n as f64, p as f64, size as f64);
    let ln_fact: f64 = (2..=size).map(|i| (i as f64).ln()).sum();
    match c {
        Criterion::Bic => nf * rss.ln() + k * nf.ln(),
        Criterion::Mbic => nf * rss.ln() + k * nf.ln() + 2.0 * k * pf.ln(),
        Criterion::Mbic2 => nf * rss.ln() + k * nf.ln() + 2.0 * k * pf.ln() - 2.0 * ln_fact,
    }
}

fn brute_force(x: &Design, y: &[f64], c: Criterion, max_size: usize) -> Vec<usize> {
    let (n, p) = (x.n(), x.p());
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1 << p) {
        let cols: Vec<usize> = (0..p).filter(|j| mask >> j & 1 == 1).collect();
        if cols.len() > max_size {
            continue;
        }
        let v = oracle_value(c, n, p, normal_equations_rss(x, y, &cols), cols.len());
        if best.as_ref().is_none_or(|(bv, bc)| v < *bv || (v == *bv && (cols.len(), &cols) < (bc.len(), bc))) {
            best = Some((v, cols));
        }
    }
    best.unwrap().1
}

fn ac1() -> Outcome {
    let (mut matched, mut total) = (0, 0);
    let budget = SearchBudget::new(4, SearchStrategy::Exhaustive);
    for family in ErrorFamily::ALL {
        for seed in 0..100u64 {
            let inst = instance(30, 8, (seed % 4) as usize, 0.25 + 0.1 * (seed % 6) as f64, family, 7_000 + seed);
            let ctx = ScoringContext::for_response(30, 8, &inst.y).map_err(|e| e.to_string())?;
            for c in Criterion::ALL {
                let got = exhaustive_search(&inst.x, &inst.y, &ctx, c, &budget).map_err(|e| e.to_string())?;
                total += 1;
                if got.model == ModelIndexSet::new(brute_force(&inst.x, &inst.y, c, 4)) {
                    matched += 1;
                }
            }
        }
    }
    let msg = format!("{matched}/{total} exact model matches (100 instances x 3 families x 3 criteria)");
    if matched == total { Ok(msg) } else { Err(msg) }
}

// ---------------------------------------------------------------- AC2

fn ac2() -> Outcome {
    let mut worst = 0.0f64;
    let mut steps = 0;
    for seed in 0..200u64 {
        let inst = instance(100, 50, 5, 0.5, ErrorFamily::ALL[(seed % 3) as usize], 20_000 + seed);
        let mut order: Vec<usize> = (0..50).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut state = FactorState::new(&inst.x, &inst.y).map_err(|e| e.to_string())?;
        let mut model = ModelIndexSet::empty();
        for &j in &order {
            let (fit, next) = extend_fit(state, &inst.x, j).map_err(|e| e.to_string())?;
            state = next;
            model = model.with(j);
            let scratch = fit_model(&inst.x, &inst.y, &model).map_err(|e| e.to_string())?.rss;
            worst = worst.max((fit.rss - scratch).abs() / scratch);
            steps += 1;
        }
    }
    let msg = format!("{steps} steps on 200 paths, worst relative RSS gap {worst:.2e} (limit 1e-8)");
    if worst <= 1e-8 { Ok(msg) } else { Err(msg) }
}

// ---------------------------------------------------------------- AC3

/// Per (error, criterion): rows ordered by n.
fn by_series(rows: &[SummaryRow]) -> Vec<((ErrorFamily, Criterion), Vec<&SummaryRow>)> {
    let mut out: Vec<((ErrorFamily, Criterion), Vec<&SummaryRow>)> = Vec::new();
    for r in rows {
        let key = (r.cell.error, r.criterion);
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => out.push((key, vec![r])),
        }
    }
    for (_, v) in &mut out {
        v.sort_by_key(|r| r.cell.n);
    }
    out
}

fn ac3() -> Outcome {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "n": [100, 200, 400],
            "p_rule": "2n",
            "p0": [3],
            "beta": [1.0],
            "errors": ["standard_normal", "rademacher"],
            "designs": ["iid_normal"],
            "replicates": 200,
            "criteria": ["mbic", "mbic2"],
            "strategy": "forward_backward",
            "max_size": 12,
            "seed": 2024
        }"#,
    )
    .map_err(|e| e.to_string())?;
    let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for ((error, criterion), rows) in by_series(&res.summary) {
        let ps: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.p_correct)).collect();
        for w in rows.windows(2) {
            let slack = 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt();
            ok &= w[1].p_correct >= w[0].p_correct - slack;
        }
        let last = rows.last().unwrap();
        ok &= last.cell.n == 400 && last.p_correct >= 0.80;
        parts.push(format!("{error}/{criterion} [{}]", ps.join(", ")));
    }
    let msg = format!("P(correct) at n=100,200,400: {}", parts.join("; "));
    if ok { Ok(msg) } else { Err(msg) }
}

// ---------------------------------------------------------------- AC4

fn ac4() -> Outcome {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "n": [200],
            "p_rule": "500",
            "p0": [0],
            "beta": [0.0],
            "errors": ["standard_normal", "rademacher", "uniform_sym"],
            "replicates": 500,
            "criteria": ["mbic"],
            "strategy": "forward_backward",
            "seed": 77
        }"#,
    )
    .map_err(|e| e.to_string())?;
    let res = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let rates: Vec<(ErrorFamily, f64)> = res.summary.iter().map(|r| (r.cell.error, 1.0 - r.p_correct)).collect();
    let ok = rates.len() == 3 && rates.iter().all(|&(_, r)| r <= 0.20);
    let msg = format!(
        "P(nonempty) {} (limit 0.20)",
        rates.iter().map(|(e, r)| format!("{e}={r:.3}")).collect::<Vec<_>>().join(", ")
    );
    if ok { Ok(msg) } else { Err(msg) }
}

// ---------------------------------------------------------------- AC5

fn ac5() -> Outcome {
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for family in ErrorFamily::ALL {
        for j in [1usize, 4] {
            let reps = mc_single_projector_tail(60, j, 100_000, family, &[0.5, 1.0, 2.0], 31 + j as u64)
                .map_err(|e| e.to_string())?;
            for r in reps {
                count += 1;
                let limit = (-r.t).exp() + 3.0 * ((-r.t).exp() / r.trials as f64).sqrt();
                ok &= r.empirical_rate <= limit && r.trials == 100_000;
                worst = worst.max(r.empirical_rate - limit);
            }
        }
    }
    let msg = format!("{count} (family, j, t) cells, max(rate - allowance) = {worst:.4}");
    if ok && count == 18 { Ok(msg) } else { Err(msg) }
}

// ---------------------------------------------------------------- AC6

fn check_reports(label: &str, reports: &[BoundReport], ranks: usize, parts: &mut Vec<String>) -> bool {
    let worst = reports.iter().map(|r| r.empirical_rate).fold(0.0, f64::max);
    let reproducible = reports
        .iter()
        .all(|r| m_threshold::<f64>(r.j, r.p).is_ok_and(|m| m == r.m_j) && r.trials == 10_000);
    parts.push(format!("{label} max rate {worst:.4}"));
    reports.len() == ranks && reproducible && worst <= 0.05
}

fn ac6() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for family in ErrorFamily::ALL {
        let projector = mc_max_projector_form(&ProjectorLab {
            n: 200,
            p: 100,
            max_rank: 5,
            trials: 10_000,
            family,
            sampling: SamplingRule::default(),
            seed: 606,
        })
        .map_err(|e| e.to_string())?;
        ok &= check_reports(&format!("projector/{family}"), &projector, 5, &mut parts);
        let nested = mc_nested_form(&NestedLab {
            n: 200,
            p: 100,
            p0: 3,
            k: 3.0,
            trials: 10_000,
            family,
            sampling: SamplingRule::default(),
            seed: 607,
        })
        .map_err(|e| e.to_string())?;
        ok &= check_reports(&format!("nested/{family}"), &nested, 6, &mut parts);
    }
    let msg = format!("{} (limit 0.05 per rank)", parts.join(", "));
    if ok { Ok(msg) } else { Err(msg) }
}

// ---------------------------------------------------------------- AC7

fn random_model(rng: &mut ChaCha8Rng, p: usize, max: usize) -> ModelIndexSet {
    let k = rng.random_range(0..=max);
    ModelIndexSet::new(rand::seq::index::sample(rng, p, k).into_vec())
}

fn union(a: &ModelIndexSet, b: &ModelIndexSet) -> ModelIndexSet {
    b.iter().fold(a.clone(), |acc, &j| if acc.contains(j) { acc } else { acc.with(j) })
}

fn ac7() -> Outcome {
    let err = |e: mbic_core::Error| e.to_string();
    let mut failures: Vec<String> = Vec::new();
    let mut fail = |name: &str, seed: u64| {
        if failures.len() < 5 {
            failures.push(format!("{name}@{seed}"));
        }
    };
    let exhaustive = SearchBudget::new(3, SearchStrategy::Exhaustive);
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(90_000 + seed);
        let family = ErrorFamily::ALL[(seed % 3) as usize];

        // mBIC2 = mBIC - 2 ln|s|!
        let n = rng.random_range(2..5000);
        let p = rng.random_range(1..100_000);
        let size = rng.random_range(0..=p.min(200));
        let rss = 10f64.powf(rng.random_range(-6.0..6.0));
        let ctx = ScoringContext::new(n, p, 1e-300).map_err(err)?;
        let gap = score_mbic(&ctx, rss, size).map_err(err)?.total - score_mbic2(&ctx, rss, size).map_err(err)?.total;
        let want: f64 = 2.0 * (2..=size).map(|i| (i as f64).ln()).sum::<f64>();
        if (gap - want).abs() > 1e-9 * want.max(1.0) {
            fail("identity", seed);
        }

        let inst = instance(40, 20, 1 + (seed % 4) as usize, 0.7, family, 50_000 + seed);
        let yy: f64 = inst.y.iter().map(|v| v * v).sum();

        // RSS(s) >= RSS(t) for s ⊂ t
        let small = random_model(&mut rng, 20, 8);
        let big = union(&small, &random_model(&mut rng, 20, 8));
        let fs = fit_model(&inst.x, &inst.y, &small).map_err(err)?;
        let fb = fit_model(&inst.x, &inst.y, &big).map_err(err)?;
        if fb.rss > fs.rss * (1.0 + 1e-12) {
            fail("nested", seed);
        }

        // ||y||^2 = ||H y||^2 + RSS
        let fitted_sq: f64 = inst.y.iter().zip(&fb.residuals).map(|(y, r)| (y - r).powi(2)).sum();
        if (yy - fitted_sq - fb.rss).abs() > 1e-10 * yy {
            fail("pythagoras", seed);
        }

        // Delta(s0) = 0, and for supersets of s0
        let energy = inst.mu.energy();
        let d0 = delta(&inst.x, &inst.mu, &inst.s0).map_err(err)?;
        let d1 = delta(&inst.x, &inst.mu, &union(&inst.s0, &small)).map_err(err)?;
        if d0 > 1e-9 * energy || d1 > 1e-9 * energy {
            fail("delta", seed);
        }

        // argmin unchanged by y -> c y
        let small_inst = instance(25, 10, (seed % 3) as usize, 0.6, family, 60_000 + seed);
        let criterion = Criterion::ALL[(seed % 3) as usize];
        let ctx = ScoringContext::for_response(25, 10, &small_inst.y).map_err(err)?;
        let base = exhaustive_search(&small_inst.x, &small_inst.y, &ctx, criterion, &exhaustive).map_err(err)?;
        for c in [0.1, 10.0] {
            let y: Vec<f64> = small_inst.y.iter().map(|v| v * c).collect();
            let ctx = ScoringContext::for_response(25, 10, &y).map_err(err)?;
            if exhaustive_search(&small_inst.x, &y, &ctx, criterion, &exhaustive).map_err(err)?.model != base.model {
                fail("rescale", seed);
            }
        }
    }
    if failures.is_empty() {
        Ok("identity, nestedness, Pythagoras, Delta(s0)=0, rescaling: 200/200 seeds each".into())
    } else {
        Err(format!("violations: {}", failures.join(", ")))
    }
}

// ---------------------------------------------------------------- AC8

fn ac8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("experiment.json");
    fs::write(
        &cfg,
        r#"{
            "n": [60, 120],
            "p_rule": "2n",
            "p0": [0, 3],
            "beta": [0.8],
            "errors": ["standard_normal", "uniform_sym"],
            "replicates": 6,
            "criteria": ["bic", "mbic", "mbic2"],
            "strategy": "forward_backward",
            "max_size": 8,
            "seed": 5,
            "identifiability_k": 2
        }"#,
    )
    .map_err(|e| e.to_string())?;
    let mut dirs = Vec::new();
    for threads in ["1", "3", "auto"] {
        let out = dir.path().join(format!("run-{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_mbic"))
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("simulate --threads {threads} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        dirs.push(out);
    }
    let mut bytes = 0;
    for name in ["replicates.csv", "summary.csv", "config.json"] {
        let first = fs::read(dirs[0].join(name)).map_err(|e| e.to_string())?;
        bytes += first.len();
        for d in &dirs[1..] {
            if fs::read(d.join(name)).map_err(|e| e.to_string())? != first {
                return Err(format!("{name} differs between thread counts"));
            }
        }
    }
    Ok(format!("--threads 1/3/auto: 3 output files byte-identical ({bytes} bytes)"))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [Check; 8] = [
        ("AC1", "oracle equivalence", 30, ac1),
        ("AC2", "incremental-fit fidelity", 10, ac2),
        ("AC3", "consistency trend", 600, ac3),
        ("AC4", "null-model control", 300, ac4),
        ("AC5", "single-projector tail bound", 60, ac5),
        ("AC6", "lemma maxima", 300, ac6),
        ("AC7", "algebraic invariants", 600, ac7),
        ("AC8", "thread-count determinism", 600, ac8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with("AC")).collect();
    let mut failed = 0;
    for (id, name, limit, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|a| a == id) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let took = started.elapsed();
        let in_time = took <= Duration::from_secs(limit);
        let (tag, detail) = match (&outcome, in_time) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over the {limit} s limit")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} {id} {name}: {detail} [{:.1} s, limit {limit} s]", took.as_secs_f64());
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
