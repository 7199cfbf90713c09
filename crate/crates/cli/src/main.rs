use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bsm_nmpc::baselines::SolverKind;
use bsm_nmpc::config::ExperimentConfig;
use bsm_nmpc::dataset::{generate_dataset, read_dataset, write_dataset, write_manifest, DatasetManifest};
use bsm_nmpc::error::{Error, Result};
use bsm_nmpc::experiment::{
    compute_metrics, load_predictor, median, prepare_run, run_seeds, sweep, train_predictor, tune_learner, SweepParam,
};
use bsm_nmpc::plant::ModelKind;
use bsm_nmpc::report::{emit_reports, emit_sweep, read_cycles, write_references};

#[derive(Parser)]
#[command(name = "bsm-bench", version, about = "GA-based NMPC benchmarks with a learned search-margin predictor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the reference track of each seed.
    GenRefs(Common),
    /// Generate training records with the exhaustive offline search.
    GenDataset(Common),
    /// Train the margin predictor on a generated dataset.
    Train(Common),
    /// Closed-loop runs of one solver over the configured seeds.
    Run(Common),
    /// Repeat the closed-loop runs over a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// One of epsilon, eta, rho, theta.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
    },
    /// Recompute run metrics from a `cycles.csv` and print per-solver medians.
    Report {
        /// Directory holding `cycles.csv`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    solver: Option<SolverKind>,
    /// TOML file overriding the model defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    cycles: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.model) {
            (Some(path), model) => {
                let cfg = ExperimentConfig::load(path)?;
                if model.is_some_and(|m| m != cfg.model) {
                    return Err(Error::Config(format!(
                        "--model {} conflicts with model '{}' in {}",
                        model.unwrap(),
                        cfg.model,
                        path.display()
                    )));
                }
                cfg
            }
            (None, Some(model)) => ExperimentConfig::for_model(model),
            (None, None) => return Err(Error::Config("either --model or --config is required".into())),
        };
        if let Some(s) = self.solver {
            cfg.solver = s;
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.out {
            cfg.out.clone_from(o);
        }
        if let Some(h) = self.cycles {
            cfg.cycles = h;
            cfg.reference.cycles = h;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dataset_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.dataset_path.clone().unwrap_or_else(|| cfg.out.join("dataset.csv"))
}

fn predictor_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.predictor_path.clone().unwrap_or_else(|| cfg.out.join("predictor"))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn gen_refs(cfg: &ExperimentConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    for &seed in &cfg.seeds {
        let (_, refs) = prepare_run(cfg, seed)?;
        let path = cfg.out.join(format!("refs_seed{seed}.csv"));
        write_references(&refs, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn gen_dataset(cfg: &ExperimentConfig) -> Result<()> {
    let spec = cfg.spec()?;
    let path = dataset_path(cfg);
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    let data = generate_dataset(&spec, &cfg.training_noise, &cfg.exhaustive, &cfg.dataset, cfg.dataset_seed)?;
    write_dataset(&data.records, spec.m, spec.n, &path)?;
    let manifest = DatasetManifest::new(&spec, cfg.dataset_seed, &cfg.training_noise, &cfg.exhaustive, &cfg.dataset, &data);
    write_manifest(&manifest, &path.with_extension("manifest.json"))?;
    println!(
        "wrote {} ({} records, {} skipped, {} episodes ended early)",
        path.display(),
        manifest.records,
        manifest.skipped,
        manifest.episodes_ended_early
    );
    Ok(())
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    let spec = cfg.spec()?;
    let path = dataset_path(cfg);
    let (records, m, n) = read_dataset(&path)?;
    if (m, n) != (spec.m, spec.n) {
        return Err(Error::Config(format!(
            "{} has {m} error and {n} margin columns, model {} needs {} and {}",
            path.display(),
            cfg.model,
            spec.m,
            spec.n
        )));
    }
    let learner = if cfg.learner.tune {
        tune_learner(&records, &cfg.learner)?
    } else {
        cfg.learner.clone()
    };
    let predictor = train_predictor(&records, &learner, cfg.dataset_seed)?;
    let dir = predictor_dir(cfg);
    predictor.save(&dir)?;
    write_manifest(&learner, &dir.join("learner.json"))?;
    let svs: Vec<usize> = predictor.models.iter().map(|m| m.n_support()).collect();
    println!("wrote {} ({} records, support vectors per input {svs:?})", dir.display(), records.len());
    Ok(())
}

fn with_predictor(mut cfg: ExperimentConfig) -> ExperimentConfig {
    if cfg.predictor_path.is_none() {
        cfg.predictor_path = Some(predictor_dir(&cfg));
    }
    cfg
}

fn run(cfg: ExperimentConfig) -> Result<()> {
    let cfg = with_predictor(cfg);
    let predictor = load_predictor(&cfg)?;
    let runs = run_seeds(&cfg, predictor.as_ref())?;
    emit_reports(&runs, &cfg, &cfg.out)?;
    for m in &runs {
        println!(
            "{} {} seed {}: E {:.4} convergence {:.3} evaluations {:.1} fallback {:.3}{}",
            m.model,
            m.solver,
            m.seed,
            m.avg_cost,
            m.convergence_rate,
            m.avg_evaluations,
            m.fallback_rate,
            m.aborted.as_deref().map(|a| format!(" (aborted: {a})")).unwrap_or_default()
        );
    }
    Ok(())
}

fn run_sweep(cfg: ExperimentConfig, param: SweepParam, grid: &[f64]) -> Result<()> {
    let cfg = with_predictor(cfg);
    let predictor = load_predictor(&cfg)?;
    let points = sweep(param, grid, &cfg, predictor.as_ref())?;
    emit_sweep(param, &points, &cfg, &cfg.out)?;
    for p in &points {
        match &p.runs {
            Ok(runs) => {
                let conv: Vec<f64> = runs.iter().map(|m| m.convergence_rate).collect();
                let evals: Vec<f64> = runs.iter().map(|m| m.avg_evaluations).collect();
                println!(
                    "{param} = {}: median convergence {:.3}, median evaluations {:.1}",
                    p.value,
                    median(&conv),
                    median(&evals)
                );
            }
            Err(e) => println!("{param} = {}: failed: {e}", p.value),
        }
    }
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let runs = read_cycles(&dir.join("cycles.csv"))?;
    let mut by_solver: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    println!("solver,seed,cycles,avg_cost,convergence_rate,avg_evaluations,fallback_rate");
    for r in &runs {
        let m = compute_metrics(&r.log, 0, 1)?;
        println!(
            "{},{},{},{:.6},{:.4},{:.2},{:.4}",
            r.solver,
            r.seed,
            r.log.len(),
            m.avg_cost,
            m.convergence_rate,
            m.avg_evaluations,
            m.fallback_rate
        );
        by_solver
            .entry(r.solver.to_string())
            .or_default()
            .push((m.avg_cost, m.convergence_rate, m.avg_evaluations));
    }
    for (solver, v) in by_solver {
        let col = |f: fn(&(f64, f64, f64)) -> f64| median(&v.iter().map(f).collect::<Vec<_>>());
        println!(
            "median {solver}: E {:.6} convergence {:.4} evaluations {:.2} over {} runs",
            col(|t| t.0),
            col(|t| t.1),
            col(|t| t.2),
            v.len()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenRefs(c) => c.resolve().and_then(|cfg| gen_refs(&cfg)),
        Command::GenDataset(c) => c.resolve().and_then(|cfg| gen_dataset(&cfg)),
        Command::Train(c) => c.resolve().and_then(|cfg| train(&cfg)),
        Command::Run(c) => c.resolve().and_then(run),
        Command::Sweep { common, param, grid } => common.resolve().and_then(|cfg| run_sweep(cfg, param, &grid)),
        Command::Report { out } => report(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
