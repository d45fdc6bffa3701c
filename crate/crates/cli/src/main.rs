use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use vap::bench::{self, Reference, Solver};
use vap::instance::{generate_instance, GeneratorConfig, Instance, VariantFlags};
use vap::policy::{Checkpoint, ModelParams};
use vap::training::{mix_seed, train_to_dir, RunConfig};

const OUTPUT_ENV: &str = "VAP_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "vap", version, about = "Heterogeneous fleet routing with vehicle prompts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded instances as JSON files.
    Generate(GenerateArgs),
    /// Train a policy from a TOML run file.
    Train(TrainArgs),
    /// Evaluate a method on an instance directory against a reference.
    Eval(EvalArgs),
    /// Solve one instance and print the solution JSON.
    Solve(SolveArgs),
    /// Summarize evaluation CSVs per variant and method.
    GapReport(GapReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of instances.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    customers: usize,
    /// Total vehicles across all types.
    #[arg(long)]
    fleet: u32,
    #[arg(long, default_value_t = 3)]
    types: usize,
    /// `c`, or a `+`-joined subset of `o`, `b`, `l`, `tw`.
    #[arg(long, default_value = "c")]
    variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generator settings beyond the flags above, as TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = OUTPUT_ENV)]
    out: PathBuf,
    /// Overwrite existing instance files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = OUTPUT_ENV)]
    out: PathBuf,
    /// Checkpoint to continue from.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Model,
    Greedy,
    Oracle,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReferenceKind {
    Oracle,
    Greedy,
    File,
}

#[derive(Args)]
struct ModelArgs {
    /// Required for `--method model`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Best-of-n sampling; 1 decodes greedily.
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    instances: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Model)]
    method: Method,
    #[arg(long, value_enum, default_value_t = ReferenceKind::Oracle)]
    reference: ReferenceKind,
    /// CSV with `instance_id` and `objective` columns, for `--reference file`.
    #[arg(long)]
    reference_file: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Directory for `eval.csv` and `eval.json`.
    #[arg(long, env = OUTPUT_ENV)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Greedy)]
    method: Method,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct GapReportArgs {
    /// Evaluation CSVs to combine.
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<vap::Error> for Failure {
    fn from(e: vap::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn existing_dir(dir: &Path) -> anyhow::Result<()> {
    if !dir.is_dir() {
        return Err(anyhow!("output directory {} does not exist", dir.display()));
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Outcome {
    let variant = VariantFlags::parse(&a.variant).map_err(|e| Failure::Usage(e.to_string()))?;
    let base = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            vap::instance::GeneratorConfig::from_toml(&text)?
        }
        None => GeneratorConfig::default(),
    };
    let cfg = GeneratorConfig {
        n_customers: a.customers,
        fleet_size: a.fleet,
        n_vehicle_types: a.types,
        variant,
        ..base
    };
    cfg.check().map_err(|e| Failure::Usage(e.to_string()))?;
    existing_dir(&a.out)?;
    let paths: Vec<PathBuf> = (0..a.n).map(|i| a.out.join(format!("inst_{i:05}.json"))).collect();
    if !a.force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(anyhow!("{} already exists; pass --force to overwrite", p.display()).into());
        }
    }
    for (i, p) in paths.iter().enumerate() {
        let inst = generate_instance(&cfg.with_seed(mix_seed(a.seed, i as u64)))?;
        fs::write(p, inst.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    eprintln!("wrote {} instances to {}", a.n, a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Outcome {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let run = RunConfig::from_toml(&text).map_err(|e| Failure::Usage(format!("{}: {e}", a.config.display())))?;
    if let Some(r) = &a.resume {
        if !r.is_file() {
            return Err(anyhow!("checkpoint {} not found", r.display()).into());
        }
    }
    let s = train_to_dir(run, &a.out, a.resume.as_deref())?;
    for m in &s.metrics {
        eprintln!(
            "epoch {:>3}  loss {:>9.4}  val {:.4}  best {:.4}  entropy {:.3}  detached {:.3}",
            m.epoch, m.loss, m.val_cost, m.best_val_cost, m.entropy, m.detach_fraction
        );
    }
    println!(
        "{}",
        serde_json::json!({
            "start_val_cost": s.start_val_cost,
            "best_val_cost": s.best_val_cost,
            "epochs_completed": s.epochs_completed,
            "stopped_early": s.stopped_early,
        })
    );
    Ok(())
}

fn load_params(m: &ModelArgs) -> Result<ModelParams, Failure> {
    let path = m
        .checkpoint
        .as_ref()
        .ok_or_else(|| Failure::Usage("--method model requires --checkpoint".into()))?;
    if !path.is_file() {
        return Err(anyhow!("checkpoint {} not found", path.display()).into());
    }
    Ok(Checkpoint::load(path)?.params)
}

fn solver<'a>(method: Method, params: Option<&'a ModelParams>, m: &ModelArgs) -> Solver<'a> {
    match method {
        Method::Greedy => Solver::Greedy,
        Method::Oracle => Solver::Oracle,
        Method::Model => Solver::Model {
            params: params.expect("parameters loaded for model method"),
            samples: m.samples,
            seed: m.seed,
        },
    }
}

fn eval(a: EvalArgs) -> Outcome {
    if a.reference == ReferenceKind::File && a.reference_file.is_none() {
        return Err(Failure::Usage("--reference file requires --reference-file".into()));
    }
    let params = match a.method {
        Method::Model => Some(load_params(&a.model)?),
        _ => None,
    };
    existing_dir(&a.out)?;
    let instances = bench::load_instance_dir(&a.instances)?;
    if instances.is_empty() {
        return Err(anyhow!("no instance files in {}", a.instances.display()).into());
    }
    let reference = match a.reference {
        ReferenceKind::Oracle => Reference::Solver(Solver::Oracle),
        ReferenceKind::Greedy => Reference::Solver(Solver::Greedy),
        ReferenceKind::File => {
            let p = a.reference_file.as_ref().expect("checked above");
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Reference::Table(bench::read_reference_table(f)?)
        }
    };
    let report = bench::evaluate(&instances, &solver(a.method, params.as_ref(), &a.model), &reference)?;
    let csv_path = a.out.join("eval.csv");
    bench::write_csv(
        &report.rows,
        fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?,
    )?;
    let json = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    fs::write(a.out.join("eval.json"), json).context("writing eval.json")?;
    let g = &report.aggregate;
    println!(
        "{} vs {}: {} instances, mean objective {:.4}, mean gap {:.3}%, mean time {:.4}s",
        report.method, report.reference, g.instances, g.mean_objective, g.mean_gap_pct, g.mean_time_s
    );
    Ok(())
}

fn solve(a: SolveArgs) -> Outcome {
    let params = match a.method {
        Method::Model => Some(load_params(&a.model)?),
        _ => None,
    };
    let inst = Instance::load(&a.instance).with_context(|| format!("loading {}", a.instance.display()))?;
    let sol = solver(a.method, params.as_ref(), &a.model).solve(&inst, 0)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{}", sol.to_json()).context("writing solution")?;
    Ok(())
}

fn gap_report(a: GapReportArgs) -> Outcome {
    let mut rows = Vec::new();
    for p in &a.inputs {
        let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        rows.extend(bench::read_csv(f).with_context(|| format!("reading {}", p.display()))?);
    }
    let summary = bench::gap_report(&rows);
    match &a.out {
        Some(p) => bench::write_gap_csv(
            &summary,
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )?,
        None => bench::write_gap_csv(&summary, io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Solve(a) => solve(a),
        Command::GapReport(a) => gap_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
