//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 1, 2, 3, 9 and 10 are correctness properties and fail the test.
//! Criteria 4 to 8 compare learned-margin performance against baselines at
//! desk scale; their outcome is reported but does not fail the test.

mod support;

use std::time::Instant;

use bsm_nmpc::baselines::SolverKind;
use bsm_nmpc::bsm::{ConfidenceMode, MarginPredictor};
use bsm_nmpc::config::{ClockMode, ExperimentConfig};
use bsm_nmpc::dataset::generate_dataset;
use bsm_nmpc::experiment::{median, run_seeds, sweep, train_predictor, tune_learner, RunMetrics, SweepParam};
use bsm_nmpc::plant::ModelKind;
use bsm_nmpc::svr::{train_svr, SvrModel, SvrParams};
use support::{contract, dynamics, qp, toy};

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    gating: bool,
    detail: String,
}

struct Report(Vec<Outcome>);

impl Report {
    fn record(&mut self, id: u32, name: &'static str, gating: bool, pass: bool, detail: String, started: Instant) {
        println!(
            "criterion {id:>2} {} {name}: {detail} ({:.1} s)",
            if pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        self.0.push(Outcome { id, name, pass, gating, detail });
    }
}

fn svr_oracle(report: &mut Report, models: &mut Vec<SvrModel>) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let case = qp::random_case(seed);
        let params = SvrParams {
            tolerance: 1e-10,
            ..SvrParams::new(case.c, case.lambda, case.gamma)
        };
        let model = train_svr(&case.xs, &case.ys, &params).unwrap();
        let reference = qp::solve(&case.xs, &case.ys, case.c, case.lambda, case.gamma);
        for x in qp::probes(&case, 40, seed + 100) {
            worst = worst.max((model.predict(&x) - qp::predict(&reference, &case.xs, case.gamma, &x)).abs());
        }
        models.push(model);
    }
    let pass = worst <= 1e-6 && t.elapsed().as_secs_f64() < 10.0;
    report.record(1, "SMO matches dense QP", true, pass, format!("20 datasets, max deviation {worst:.2e}"), t);
}

fn dual_invariants(report: &mut Report, models: &[SvrModel]) {
    let t = Instant::now();
    let mut worst_box: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    for m in models {
        let over = m.dual_coefs.iter().map(|b| b.abs() / m.c - 1.0).fold(f64::NEG_INFINITY, f64::max);
        worst_box = worst_box.max(over);
        worst_sum = worst_sum.max(m.dual_coefs.iter().sum::<f64>().abs() / m.c);
    }
    let pass = worst_box <= 1e-6 && worst_sum <= 1e-6;
    let detail = format!(
        "{} models, max |coef|/C - 1 = {worst_box:.2e}, max |sum|/C = {worst_sum:.2e}",
        models.len()
    );
    report.record(2, "dual box and balance", true, pass, detail, t);
}

fn narrow_box(report: &mut Report) {
    let t = Instant::now();
    let toy = toy::Toy { space: 1000, optimum: 637 };
    let trials = 10_000;
    let wide = toy.hits(500.0, 500.0, 20, trials, 1);
    let narrow = toy.hits(620.0, 50.0, 20, trials, 2);
    let z = toy::z_greater(narrow, wide, trials);
    let pass = z >= 1.645 && t.elapsed().as_secs_f64() < 30.0;
    let detail = format!("hits {narrow}/{trials} in the narrow box vs {wide}/{trials} in the full space, z = {z:.1}");
    report.record(3, "narrow search box hits more often", true, pass, detail, t);
}

/// Spearman rank correlation with average ranks for ties.
fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for k in i..=j {
                r[idx[k]] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

fn motivation(report: &mut Report) {
    let t = Instant::now();
    let mut cfg = ExperimentConfig::for_model(ModelKind::Uav);
    cfg.dataset.episodes = 10;
    cfg.dataset.episode_cycles = 200;
    let spec = cfg.spec().unwrap();
    let data = generate_dataset(&spec, &cfg.training_noise, &cfg.exhaustive, &cfg.dataset, 11).unwrap();
    let cycles: usize = data.episodes.iter().map(|e| e.cycles).sum();
    let mut pairs: Vec<(f64, f64)> = data
        .records
        .iter()
        .map(|r| (r.error.iter().copied().fold(0.0, f64::max), r.deltas.iter().copied().fold(0.0, f64::max)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let bins = 10;
    let (mut e_max, mut d_max) = (Vec::new(), Vec::new());
    for i in 0..bins {
        let part = &pairs[i * pairs.len() / bins..(i + 1) * pairs.len() / bins];
        e_max.push(part.iter().map(|p| p.0).fold(0.0, f64::max));
        d_max.push(part.iter().map(|p| p.1).fold(0.0, f64::max));
    }
    let rho = spearman(&e_max, &d_max);
    let pass = cycles >= 2000 && rho >= 0.5 && t.elapsed().as_secs_f64() < 600.0;
    let detail = format!(
        "{cycles} cycles, {} records, Spearman {rho:.2} over {bins} bins; bin max margin {:?}",
        pairs.len(),
        d_max.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>()
    );
    report.record(4, "error vs margin rank correlation", false, pass, detail, t);
}

/// The SFJR setting shared by criteria 5 to 8.
fn sfjr_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_model(ModelKind::Sfjr);
    cfg.cycles = 500;
    cfg.reference.cycles = 500;
    cfg.seeds = (1..=10).collect();
    cfg.clock = ClockMode::Virtual { seconds_per_evaluation: 2e-4 };
    cfg.exhaustive.nu = cfg.ga.nu;
    cfg.exhaustive.generations = 10;
    cfg.dataset.episodes = 16;
    cfg.dataset.episode_cycles = 300;
    cfg.dataset_seed = 7;
    cfg.learner.confidence = ConfidenceMode::Calibrated;
    cfg.learner.tune = true;
    cfg
}

fn train_sfjr(cfg: &mut ExperimentConfig) -> MarginPredictor {
    let t = Instant::now();
    let spec = cfg.spec().unwrap();
    let data = generate_dataset(&spec, &cfg.training_noise, &cfg.exhaustive, &cfg.dataset, cfg.dataset_seed).unwrap();
    cfg.learner = tune_learner(&data.records, &cfg.learner).unwrap();
    let p = train_predictor(&data.records, &cfg.learner, cfg.dataset_seed).unwrap();
    println!(
        "trained SFJR predictor on {} records in {:.1} s: C {:.3e} tube {:.3e} width {:.3e}, {} support vectors",
        data.records.len(),
        t.elapsed().as_secs_f64(),
        cfg.learner.svr[0].c,
        cfg.learner.svr[0].lambda,
        cfg.learner.svr[0].gamma,
        p.models[0].n_support()
    );
    p
}

fn medians(runs: &[RunMetrics]) -> (f64, f64, f64) {
    let col = |f: fn(&RunMetrics) -> f64| median(&runs.iter().map(f).collect::<Vec<_>>());
    (col(|m| m.avg_cost), col(|m| m.convergence_rate), col(|m| m.avg_evaluations))
}

fn paired(cfg: &ExperimentConfig, predictor: &MarginPredictor) -> (Vec<RunMetrics>, Vec<RunMetrics>) {
    let mut og = cfg.clone();
    og.solver = SolverKind::Og;
    let mut proposed = cfg.clone();
    proposed.solver = SolverKind::Proposed;
    (run_seeds(&og, None).unwrap(), run_seeds(&proposed, Some(predictor)).unwrap())
}

fn alike_trained(report: &mut Report, cfg: &ExperimentConfig, predictor: &MarginPredictor) -> Vec<RunMetrics> {
    let t = Instant::now();
    let (og, pr) = paired(cfg, predictor);
    let (e_og, c_og, n_og) = medians(&og);
    let (e_pr, c_pr, n_pr) = medians(&pr);
    let a = n_pr <= 0.8 * n_og;
    let b = c_pr >= c_og + 0.10;
    let c = e_pr <= e_og;
    let detail = format!(
        "evaluations {n_pr:.1} vs {n_og:.1} [{}], convergence {c_pr:.3} vs {c_og:.3} [{}], E {e_pr:.4} vs {e_og:.4} [{}]",
        if a { "ok" } else { "miss" },
        if b { "ok" } else { "miss" },
        if c { "ok" } else { "miss" }
    );
    report.record(5, "alike-trained proposed vs OG", false, a && b && c, detail, t);
    pr
}

fn dislike_trained(report: &mut Report, cfg: &ExperimentConfig, predictor: &MarginPredictor) {
    let t = Instant::now();
    let mut cfg = cfg.clone();
    cfg.noise = cfg.training_noise.scaled(2.0);
    let (og, pr) = paired(&cfg, predictor);
    let (e_og, _, _) = medians(&og);
    let (e_pr, _, _) = medians(&pr);
    let worst = og.iter().zip(&pr).map(|(o, p)| p.avg_cost / o.avg_cost).fold(0.0, f64::max);
    let pass = e_pr <= 1.25 * e_og && worst <= 1.5;
    let detail = format!("median E {e_pr:.4} vs {e_og:.4}, worst per-seed ratio {worst:.2}");
    report.record(6, "dislike-trained robustness", false, pass, detail, t);
}

fn population_spread(report: &mut Report, cfg: &ExperimentConfig, runs: &[RunMetrics]) {
    let t = Instant::now();
    let mut counts = vec![0usize; runs[0].population_histogram.counts.len()];
    for r in runs {
        for (c, v) in counts.iter_mut().zip(&r.population_histogram.counts) {
            *c += v;
        }
    }
    let occupied = counts.iter().filter(|c| **c > 0).count();
    let min = runs.iter().map(|r| r.min_population).min().unwrap();
    let max = runs.iter().map(|r| r.max_population).max().unwrap();
    let pass = occupied >= 3 && min == cfg.ga.xi && max <= cfg.ga.nu;
    let detail = format!("{occupied} occupied bins {counts:?}, population {min}..{max}");
    report.record(7, "population histogram", false, pass, detail, t);
}

fn threshold_sweep(report: &mut Report, cfg: &ExperimentConfig, predictor: &MarginPredictor) {
    let t = Instant::now();
    let mut cfg = cfg.clone();
    cfg.solver = SolverKind::Proposed;
    cfg.seeds = (1..=5).collect();
    let base = cfg.ga.epsilon;
    let grid: Vec<f64> = [0.1, 0.25, 0.5, 1.0].iter().map(|f| f * base).collect();
    let points = sweep(SweepParam::Epsilon, &grid, &cfg, Some(predictor)).unwrap();
    let stats: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            let (_, conv, evals) = medians(p.runs.as_ref().unwrap());
            (conv, evals)
        })
        .collect();
    let pass = stats.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 <= w[0].1);
    let detail = stats
        .iter()
        .zip(&grid)
        .map(|((c, n), e)| format!("eps {e:.3}: convergence {c:.3} evaluations {n:.1}"))
        .collect::<Vec<_>>()
        .join("; ");
    report.record(8, "threshold sweep direction", false, pass, detail, t);
}

fn dynamics_suite(report: &mut Report) {
    let t = Instant::now();
    let hover = dynamics::hover_relative_error();
    let drift = dynamics::equilibrium_drift().iter().map(|d| d.1).fold(0.0, f64::max);
    let ratios = dynamics::convergence_ratios();
    let order_ok = ratios.iter().all(|(_, r)| (12.0..=20.0).contains(r));
    let (mean, sd) = dynamics::noise_moment_errors(20_000);
    let pass = hover <= 1e-9 && drift <= 1e-9 && order_ok && mean < 4.5 && sd < 0.03;
    let detail = format!(
        "hover error {hover:.1e}, equilibrium drift {drift:.1e}, order ratios {:?}, noise mean {mean:.2} SE sd {:.2}%",
        ratios.iter().map(|(n, r)| format!("{n} {r:.1}")).collect::<Vec<_>>(),
        sd * 100.0
    );
    report.record(9, "plant dynamics", true, pass, detail, t);
}

fn contract_suite(report: &mut Report) {
    let t = Instant::now();
    let mut failures = Vec::new();
    let mut total = 0;
    for (name, check) in contract::CHECKS {
        for kind in SolverKind::ALL {
            total += 1;
            if let Err(e) = check(kind) {
                failures.push(format!("{kind} {name}: {e}"));
            }
        }
    }
    let detail = format!("{}/{total} checks pass {failures:?}", total - failures.len());
    report.record(10, "solver contract", true, failures.is_empty(), detail, t);
}

#[test]
fn acceptance() {
    let mut report = Report(Vec::new());
    let mut models = Vec::new();
    svr_oracle(&mut report, &mut models);
    narrow_box(&mut report);
    dynamics_suite(&mut report);
    contract_suite(&mut report);

    let mut cfg = sfjr_config();
    let predictor = train_sfjr(&mut cfg);
    models.extend(predictor.models.iter().cloned());
    dual_invariants(&mut report, &models);
    let proposed = alike_trained(&mut report, &cfg, &predictor);
    dislike_trained(&mut report, &cfg, &predictor);
    population_spread(&mut report, &cfg, &proposed);
    threshold_sweep(&mut report, &cfg, &predictor);
    motivation(&mut report);

    report.0.sort_by_key(|o| o.id);
    println!("summary:");
    for o in &report.0 {
        println!(
            "  {:>2} {} {}{}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            if o.gating { "" } else { " (reported only)" }
        );
    }
    let failed: Vec<String> = report
        .0
        .iter()
        .filter(|o| o.gating && !o.pass)
        .map(|o| format!("{} {}: {}", o.id, o.name, o.detail))
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:#?}");
}
