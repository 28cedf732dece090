//! `guap`: dataset conversion, victim training, patch generation, evaluation,
//! baselines and sweeps.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use guap_core::attack::guap;
use guap_core::eval::{
    baseline_no_edges, baseline_random_edges, evaluate_patch, regenerate_features_eval, sweep,
    transfer_retrain_check, EvalReport, RandomEdges, SweepAxis,
};
use guap_core::gcn::{accuracy, train, BoundModel};
use guap_core::graph::Graph;
use guap_core::io::{
    convert, load_model, load_patch, save_model, save_patch, write_report, write_sweep_csv, InputFormat,
    SavedModel, SplitSizes,
};
use log::info;
use serde_json::json;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "guap", version, about = "Universal adversarial patches for graph node classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a public dataset distribution to nodes.tsv / edges.tsv / features.txt.
    Convert(ConvertArgs),
    /// Train the victim GCN and save it.
    TrainGcn(RunArgs),
    /// Compute a universal patch against a trained victim.
    GenPatch(GenPatchArgs),
    /// Evaluate a patch: ASR on train and test nodes, and ΔAcc.
    AttackEval(EvalArgs),
    /// Evaluate a patch-free or random-edge baseline.
    Baseline(BaselineArgs),
    /// Run one attack per (value, seed) along one hyperparameter axis.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct ConvertArgs {
    #[arg(long, value_parser = parse_format)]
    format: InputFormat,
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    dst: PathBuf,
    /// Training nodes per class (default 20 for LINQS).
    #[arg(long, conflicts_with = "train_total")]
    train_per_class: Option<usize>,
    /// Training nodes overall (default 121 for GML).
    #[arg(long)]
    train_total: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    /// Seed of the generated split.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// TOML run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset name (`cora`, `citeseer`, `polblogs`, `sbm`, or any converted directory name).
    #[arg(long)]
    dataset: Option<String>,
    /// Directory holding the dataset files; defaults to $GUAP_DATA_DIR/<name>.
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed; falls back to the config, then $GUAP_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sample_rate: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    /// Patch size as a fraction of n.
    #[arg(long, conflicts_with = "patch_nodes")]
    patch_frac: Option<f64>,
    /// Patch size as an absolute node count.
    #[arg(long)]
    patch_nodes: Option<usize>,
    #[arg(long)]
    max_epoch: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Victim model file; defaults to <out>/model.txt.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenPatchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Artifact path; defaults to <out>/patch.txt.
    #[arg(long)]
    patch_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Artifact to evaluate; defaults to <out>/patch.txt.
    #[arg(long)]
    patch: Option<PathBuf>,
    /// Resample the patch features from the stored statistics with this seed.
    #[arg(long, conflicts_with = "retrain_seed")]
    regen_seed: Option<u64>,
    /// Retrain the victim from this seed and evaluate the fixed patch on it.
    #[arg(long)]
    retrain_seed: Option<u64>,
    /// Report path; defaults to <out>/report.txt.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum BaselineKind {
    NoEdges,
    RandomEdges,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    kind: BaselineKind,
    /// Edge probability for random edges.
    #[arg(long, conflicts_with = "calibrate_from")]
    edge_prob: Option<f64>,
    /// Match the expected edge count of this artifact.
    #[arg(long)]
    calibrate_from: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_parser = parse_axis)]
    axis: SweepAxis,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, value_delimiter = ',', conflicts_with = "repeats")]
    seeds: Vec<u64>,
    /// Seeds `seed, seed+1, …`; defaults to the config's repeat count.
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_format(s: &str) -> Result<InputFormat, String> {
    s.parse().map_err(|e: guap_core::GuapError| e.to_string())
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse().map_err(|e: guap_core::GuapError| e.to_string())
}

/// Loaded config with flag overrides applied and the seed resolved.
struct Run {
    cfg: RunConfig,
    seed: u64,
    model_path: PathBuf,
    model_explicit: bool,
}

impl Run {
    fn new(args: &RunArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &args.dataset {
            if *d != cfg.dataset.name {
                cfg.dataset = config::DatasetConfig {
                    name: d.clone(),
                    ..Default::default()
                };
            }
        }
        if let Some(r) = &args.data_root {
            cfg.dataset.root = Some(r.clone());
        }
        if let Some(o) = &args.out {
            cfg.output_dir = o.clone();
        }
        if args.seed.is_some() {
            cfg.seed = args.seed;
        }
        let a = &mut cfg.attack;
        if let Some(v) = args.sample_rate {
            a.sample_rate = v;
        }
        if let Some(v) = args.radius {
            a.radius = v;
        }
        if let Some(v) = args.patch_frac {
            a.patch_fraction = v;
            a.patch_nodes = None;
        }
        if let Some(v) = args.patch_nodes {
            a.patch_nodes = Some(v);
        }
        if let Some(v) = args.max_epoch {
            a.max_epoch = v;
        }
        if let Some(v) = args.workers {
            cfg.workers = v;
        }
        let seed = cfg.resolve_seed()?;
        cfg.validate()?;
        let model_path = args.model.clone().unwrap_or_else(|| cfg.output_dir.join("model.txt"));
        let effective = cfg.output_dir.join("effective-config.toml");
        std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
        std::fs::write(&effective, cfg.to_toml()?).with_context(|| format!("writing {}", effective.display()))?;
        Ok(Self {
            cfg,
            seed,
            model_path,
            model_explicit: args.model.is_some(),
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn graph(&self) -> Result<Graph> {
        let (g, source) = self.cfg.dataset.load()?;
        info!(
            "dataset {}: {} nodes, {} edges, {} classes, {} train / {} test{}",
            self.cfg.dataset.name,
            g.n(),
            g.adjacency().edge_count(),
            g.num_classes(),
            g.train_nodes().len(),
            g.test_nodes().len(),
            match source {
                Some(guap_core::io::FeatureSource::Identity) => ", identity features",
                _ => "",
            }
        );
        Ok(g)
    }

    fn train_model(&self, g: &Graph) -> Result<SavedModel> {
        info!("training victim GCN ({} epochs)", self.cfg.train.epochs);
        let params = train(g, &self.cfg.train)?;
        let pred = BoundModel::new(&params, g.features().view())?.predict(&g.empty_patch(0))?;
        let acc = accuracy(&pred, g.labels(), &g.test_nodes());
        info!("victim test accuracy {:.4}", acc);
        Ok(SavedModel::new(params, &self.cfg.dataset.name, self.cfg.train.clone(), acc))
    }

    /// The victim: the model file when it exists, otherwise trained and saved
    /// unless a model path was given explicitly.
    fn model(&self, g: &Graph) -> Result<SavedModel> {
        if self.model_explicit || self.model_path.exists() {
            return load_model(&self.model_path).with_context(|| format!("loading {}", self.model_path.display()));
        }
        let model = self.train_model(g)?;
        save_model(&model, &self.model_path)?;
        info!("wrote {}", self.model_path.display());
        Ok(model)
    }

    fn echo(&self, command: serde_json::Value) -> Result<serde_json::Value> {
        Ok(json!({ "run": serde_json::to_value(&self.cfg)?, "command": command }))
    }
}

fn write_and_log(report: EvalReport, path: &Path) -> Result<()> {
    write_report(&report, path)?;
    info!(
        "{}: ASR train {} / test {}, ΔAcc {:+.4} -> {}",
        report.kind,
        fmt_rate(report.asr_train),
        fmt_rate(report.asr_test),
        report.delta_acc,
        path.display()
    );
    if report.low_accuracy {
        log::warn!("clean accuracy {:.3} is below 0.5; ASR is not meaningful", report.acc_clean);
    }
    Ok(())
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".into(), |r| format!("{r:.4}"))
}

fn cmd_convert(args: &ConvertArgs) -> Result<()> {
    let default = SplitSizes::default_for(args.format);
    let sizes = match (args.train_per_class, args.train_total, default) {
        (Some(k), None, SplitSizes::PerClass { test, .. } | SplitSizes::Total { test, .. }) => SplitSizes::PerClass {
            train_per_class: k,
            test: args.test.unwrap_or(test),
        },
        (None, Some(t), SplitSizes::PerClass { test, .. } | SplitSizes::Total { test, .. }) => SplitSizes::Total {
            train: t,
            test: args.test.unwrap_or(test),
        },
        (_, _, SplitSizes::PerClass { train_per_class, test }) => SplitSizes::PerClass {
            train_per_class,
            test: args.test.unwrap_or(test),
        },
        (_, _, SplitSizes::Total { train, test }) => SplitSizes::Total {
            train,
            test: args.test.unwrap_or(test),
        },
    };
    let s = convert(args.format, &args.src, &args.dst, sizes, args.split_seed)?;
    info!(
        "wrote {}: {} nodes, {} edges, {} classes, features {}",
        args.dst.display(),
        s.nodes,
        s.edges,
        s.classes,
        s.features.map_or_else(|| "absent".into(), |d| d.to_string())
    );
    Ok(())
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let run = Run::new(args)?;
    let g = run.graph()?;
    let model = run.train_model(&g)?;
    save_model(&model, &run.model_path)?;
    info!("wrote {}", run.model_path.display());
    Ok(())
}

fn cmd_gen_patch(args: &GenPatchArgs) -> Result<()> {
    let run = Run::new(&args.run)?;
    let g = run.graph()?;
    let model = run.model(&g)?;
    let artifact = guap(&g, &model.params, &run.cfg.attack, run.seed)?;
    let path = args.patch_out.clone().unwrap_or_else(|| run.out("patch.txt"));
    save_patch(&artifact, &path)?;
    info!(
        "patch: m = {}, {} edges, best train ASR {:.4} at epoch {} -> {}",
        artifact.m,
        artifact.patch_edge_count(),
        artifact.best_asr,
        artifact.best_epoch,
        path.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let run = Run::new(&args.run)?;
    let g = run.graph()?;
    let patch_path = args.patch.clone().unwrap_or_else(|| run.out("patch.txt"));
    let artifact = load_patch(&patch_path).with_context(|| format!("loading {}", patch_path.display()))?;
    let (report, default_name) = if let Some(s) = args.retrain_seed {
        (transfer_retrain_check(&artifact, &g, &run.cfg.train, s)?, "report-retrained.txt")
    } else {
        let model = run.model(&g)?;
        match args.regen_seed {
            Some(s) => (regenerate_features_eval(&artifact, &g, &model.params, s)?, "report-regen.txt"),
            None => (evaluate_patch(&artifact, &g, &model.params)?, "report.txt"),
        }
    };
    let echo = run.echo(json!({
        "name": "attack-eval",
        "patch": patch_path,
        "regen_seed": args.regen_seed,
        "retrain_seed": args.retrain_seed,
    }))?;
    let path = args.report.clone().unwrap_or_else(|| run.out(default_name));
    write_and_log(report.with_config(echo), &path)
}

fn cmd_baseline(args: &BaselineArgs) -> Result<()> {
    let run = Run::new(&args.run)?;
    let g = run.graph()?;
    let model = run.model(&g)?;
    let m = run.cfg.attack.patch_count(g.n())?;
    let report = match args.kind {
        BaselineKind::NoEdges => {
            if args.edge_prob.is_some() || args.calibrate_from.is_some() {
                bail!("--edge-prob and --calibrate-from only apply to --kind random-edges");
            }
            baseline_no_edges(&g, &model.params, m, run.seed)?
        }
        BaselineKind::RandomEdges => {
            let (edges, m) = match (&args.edge_prob, &args.calibrate_from) {
                (Some(p), _) => (RandomEdges::Probability(*p), m),
                (None, Some(path)) => {
                    let a = load_patch(path).with_context(|| format!("loading {}", path.display()))?;
                    (RandomEdges::ExpectedCount(a.patch_edge_count() as f64), a.m)
                }
                (None, None) => (RandomEdges::Probability(0.5), m),
            };
            baseline_random_edges(&g, &model.params, m, edges, run.seed)?
        }
    };
    let kind = report.kind.clone();
    let echo = run.echo(json!({
        "name": "baseline",
        "kind": kind,
        "edge_prob": args.edge_prob,
        "calibrate_from": args.calibrate_from,
    }))?;
    let path = args.report.clone().unwrap_or_else(|| run.out(&format!("baseline-{kind}.txt")));
    write_and_log(report.with_config(echo), &path)
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let run = Run::new(&args.run)?;
    let g = run.graph()?;
    let model = run.model(&g)?;
    let seeds: Vec<u64> = if args.seeds.is_empty() {
        let repeats = args.repeats.unwrap_or(run.cfg.repeats);
        (0..repeats as u64).map(|k| run.seed + k).collect()
    } else {
        args.seeds.clone()
    };
    info!(
        "sweep over {} = {:?} with {} seeds on {} workers",
        args.axis,
        args.values,
        seeds.len(),
        run.cfg.workers
    );
    let table = sweep(
        &g,
        &model.params,
        &run.cfg.attack,
        args.axis,
        &args.values,
        &seeds,
        run.cfg.workers,
    )?;
    let path = args.csv.clone().unwrap_or_else(|| run.out(&format!("sweep-{}.csv", args.axis)));
    write_sweep_csv(&table, &path)?;
    info!("wrote {} rows -> {}", table.rows.len(), path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let result = match &cli.command {
        Command::Convert(a) => cmd_convert(a),
        Command::TrainGcn(a) => cmd_train(a),
        Command::GenPatch(a) => cmd_gen_patch(a),
        Command::AttackEval(a) => cmd_eval(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
