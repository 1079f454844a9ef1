//! `mbic`: model selection, consistency experiments and bound checks.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mbic_core::bounds::{
    mc_max_projector_form, mc_nested_form, write_bound_reports_csv, NestedLab, ProjectorLab, SamplingRule,
    DEFAULT_MODELS_PER_RANK,
};
use mbic_core::datagen::{generate, write_instance_csv, DesignKind, ErrorFamily, Scenario};
use mbic_core::dataset::load_csv;
use mbic_core::experiment::{
    run_experiment, write_replicates_csv, write_summary_csv, write_timings_csv, ExperimentConfig,
};
use mbic_core::search::{default_max_size, run_search, DEFAULT_ENUMERATION_CAP};
use mbic_core::{fit_model, score, Criterion, Error, ModelIndexSet, ScoringContext, SearchBudget, SearchStrategy};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Threads {
    Auto,
    Count(usize),
}

impl FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threads::Auto);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected a positive integer or 'auto', got '{s}'")),
            Ok(k) => Ok(Threads::Count(k)),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mbic", version, about = "Sparse regression model selection with mBIC and mBIC2")]
struct Cli {
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads: a positive integer or `auto`.
    #[arg(long, global = true, default_value = "auto")]
    threads: Threads,

    /// Output path (file, or directory for `simulate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select a model on a numeric CSV dataset.
    Select(SelectArgs),
    /// Run a consistency experiment described by a JSON config.
    Simulate(SimulateArgs),
    /// Monte-Carlo check of quadratic-form maxima over projector families.
    Bounds(BoundsArgs),
    /// Render a summary CSV as an SVG chart of P(correct) against n.
    Plot(PlotArgs),
    /// Write one simulated dataset as CSV (`y,x1..xp`).
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Headed CSV file with numeric columns.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long, default_value = "mbic2")]
    criterion: Criterion,
    #[arg(long, default_value = "forward_backward")]
    strategy: SearchStrategy,
    /// Largest model size searched (default: min(p, 20)).
    #[arg(long)]
    max_size: Option<usize>,
    /// Cap on the number of models exhaustive search may enumerate.
    #[arg(long)]
    enumeration_cap: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Also write per-replicate wall times to `timings.csv`.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum BoundsMode {
    Projector,
    Nested,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long, value_enum, default_value = "projector")]
    mode: BoundsMode,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    p: usize,
    /// Largest projector rank (projector mode).
    #[arg(long, default_value_t = 5)]
    max_rank: usize,
    /// True model size (nested mode).
    #[arg(long, default_value_t = 3)]
    p0: usize,
    /// Size multiplier: supersets up to floor(k p0) columns (nested mode).
    #[arg(long, default_value_t = 3.0)]
    k: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value = "standard_normal")]
    family: ErrorFamily,
    /// Index sets per rank before the family is sampled instead of enumerated.
    #[arg(long, default_value_t = DEFAULT_MODELS_PER_RANK)]
    models_per_rank: usize,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Summary CSV written by `simulate`.
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    p0: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value = "standard_normal")]
    error: ErrorFamily,
    #[arg(long, default_value = "iid_normal")]
    design: DesignKind,
}

fn exit_status(err: &Error) -> u8 {
    match err {
        Error::Budget { .. } => 3,
        _ => 2,
    }
}

/// Writes to `path`, or to stdout when no path is given.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> mbic_core::Result<()>) -> mbic_core::Result<()> {
    match path {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_select(args: &SelectArgs, out: Option<&Path>) -> mbic_core::Result<()> {
    let data = load_csv(&args.data, &args.response)?;
    let (n, p) = (data.x.n(), data.x.p());
    let ctx = ScoringContext::for_response(n, p, &data.y)?;
    let mut max_size = args.max_size.unwrap_or_else(|| default_max_size(p, None));
    if args.max_size.is_none() && args.strategy != SearchStrategy::Exhaustive {
        max_size = max_size.min(n);
    }
    let cap = args.enumeration_cap.map_or(DEFAULT_ENUMERATION_CAP, u128::from);
    let budget = SearchBudget::new(max_size, args.strategy).with_cap(cap);
    let sel = run_search(&data.x, &data.y, &ctx, args.criterion, &budget)?;

    // what adding each column alone to the empty model gains and costs
    let empty = score(args.criterion, &ctx, fit_model(&data.x, &data.y, &ModelIndexSet::empty())?.rss, 0)?;
    let mut single = Vec::with_capacity(p);
    for j in 0..p {
        let s = ModelIndexSet::new(vec![j]);
        let one = score(args.criterion, &ctx, fit_model(&data.x, &data.y, &s)?.rss, 1)?;
        single.push(json!({
            "column": data.names[j],
            "fit_improvement": empty.fit_term - one.fit_term,
            "penalty": one.penalty,
        }));
    }

    let names: Vec<&str> = sel.model.iter().map(|&j| data.names[j].as_str()).collect();
    let report = json!({
        "response": data.response,
        "n": n,
        "p": p,
        "criterion": args.criterion,
        "strategy": args.strategy,
        "max_size": max_size,
        "selected": names,
        "selected_indices": sel.model,
        "total": sel.score.total,
        "fit_term": sel.score.fit_term,
        "penalty": sel.score.penalty,
        "rss": sel.rss,
        "visited": sel.visited,
        "single_column": single,
    });

    println!("criterion  {} ({} search, max size {max_size})", args.criterion, args.strategy);
    println!("selected   [{}]", names.join(", "));
    println!("total      {:?}", sel.score.total);
    println!("fit term   {:?}", sel.score.fit_term);
    println!("penalty    {:?}", sel.score.penalty);
    println!("rss        {:?}", sel.rss);
    println!("visited    {}", sel.visited);
    if let Some(path) = out {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs, seed: Option<u64>, out: Option<&Path>) -> mbic_core::Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let res = run_experiment(&cfg)?;
    fs::create_dir_all(&dir)?;
    let write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> mbic_core::Result<()>| -> mbic_core::Result<()> {
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    };
    write("replicates.csv", &|w| write_replicates_csv(&res.outcomes, w))?;
    write("summary.csv", &|w| write_summary_csv(&res.summary, w))?;
    write("config.json", &|w| Ok(w.write_all((cfg.to_json() + "\n").as_bytes())?))?;
    if args.timings {
        write("timings.csv", &|w| write_timings_csv(&res.outcomes, w))?;
    }
    for row in &res.summary {
        println!(
            "cell {} n={} p={} p0={} beta={} {} {}: {} P(correct) = {:.3} ± {:.3}",
            row.cell.index,
            row.cell.n,
            row.cell.p,
            row.cell.p0,
            row.cell.beta,
            row.cell.design,
            row.cell.error,
            row.criterion,
            row.p_correct,
            row.se
        );
    }
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn cmd_bounds(args: &BoundsArgs, seed: u64, out: Option<&Path>) -> mbic_core::Result<()> {
    let sampling = SamplingRule {
        max_models: args.models_per_rank,
    };
    let reports = match args.mode {
        BoundsMode::Projector => mc_max_projector_form(&ProjectorLab {
            n: args.n,
            p: args.p,
            max_rank: args.max_rank,
            trials: args.trials,
            family: args.family,
            sampling,
            seed,
        })?,
        BoundsMode::Nested => mc_nested_form(&NestedLab {
            n: args.n,
            p: args.p,
            p0: args.p0,
            k: args.k,
            trials: args.trials,
            family: args.family,
            sampling,
            seed,
        })?,
    };
    with_output(out, |w| write_bound_reports_csv(&reports, w))
}

fn cmd_plot(args: &PlotArgs, out: Option<&Path>) -> mbic_core::Result<()> {
    let svg = mbic_core::plot::render_svg(&fs::read_to_string(&args.input)?)?;
    with_output(out, |w| Ok(w.write_all(svg.as_bytes())?))
}

fn cmd_generate(args: &GenerateArgs, seed: u64, out: Option<&Path>) -> mbic_core::Result<()> {
    let inst = generate::<f64>(&Scenario {
        n: args.n,
        p: args.p,
        p0: args.p0,
        beta_magnitude: args.beta,
        design: args.design,
        error: args.error,
        seed,
    })?;
    with_output(out, |w| write_instance_csv(&inst, w))
}

fn run(cli: &Cli) -> mbic_core::Result<()> {
    if let Threads::Count(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Input(format!("cannot start {k} worker threads: {e}")))?;
    }
    let out = cli.out.as_deref();
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Select(a) => cmd_select(a, out),
        Command::Simulate(a) => cmd_simulate(a, cli.seed, out),
        Command::Bounds(a) => cmd_bounds(a, seed, out),
        Command::Plot(a) => cmd_plot(a, out),
        Command::Generate(a) => cmd_generate(a, seed, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mbic: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}
