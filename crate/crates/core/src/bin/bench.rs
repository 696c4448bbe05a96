use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use lwm::bench::{
    format_summary, generate_tasks, holdout_scenes, read_csv, read_tasks, summarize, training_scenes, write_csv,
    write_jsonl, write_report, write_tasks, Bench, BenchConfig, Method, TaskConfig,
};
use lwm::camera::Camera;
use lwm::policy::DepthMode;
use lwm::scene::Scene;
use lwm::skeleton::KinematicModel;

#[derive(Parser)]
#[command(name = "bench", about = "Task suites, planner runs and reports for lifted world-model planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a task suite and write it as JSON lines.
    GenerateTasks(GenerateArgs),
    /// Run methods on a task suite and write the results CSV.
    Run(RunArgs),
    /// Aggregate result CSVs into summary tables and charts.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// `train`, `holdout`, or a JSON file holding one scene or a list.
    #[arg(long, default_value = "train")]
    scenes: String,
    #[arg(long, default_value_t = 128)]
    count: usize,
    #[arg(long, default_value_t = 8)]
    horizon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Task id prefix; defaults to the scene set name.
    #[arg(long)]
    suite: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    tasks: PathBuf,
    /// JSON benchmark config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated: initial, unconditioned, conditioned, ll, hl2d, hl3d.
    #[arg(long, alias = "space", value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Iteration counts to report, comma-separated.
    #[arg(long, value_delimiter = ',')]
    iters: Option<Vec<usize>>,
    /// Samples per iteration, comma-separated; one planner run each.
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
    #[arg(long)]
    elites: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// High-level steps per plan.
    #[arg(long)]
    horizon: Option<usize>,
    /// Report each iteration's own best instead of the running best.
    #[arg(long)]
    no_cummin: bool,
    #[arg(long)]
    goal_noise: Option<f64>,
    #[arg(long)]
    ik_iters: Option<usize>,
    #[arg(long)]
    depth_mode: Option<DepthMode>,
    #[arg(long)]
    wm_noise: Option<f64>,
    #[arg(long)]
    eval_samples: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall-clock milliseconds instead of 0.
    #[arg(long)]
    wall_time: bool,
    #[arg(long)]
    out: PathBuf,
    /// Plan records for re-deriving every row, JSON lines.
    #[arg(long)]
    plans: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result CSVs to merge.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_plots: bool,
}

fn load_scenes(which: &str) -> lwm::Result<Vec<Scene>> {
    match which {
        "train" => training_scenes(),
        "holdout" => holdout_scenes(),
        path => {
            let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
            if value.is_array() {
                Ok(serde_json::from_value(value)?)
            } else {
                Ok(vec![serde_json::from_value(value)?])
            }
        }
    }
}

fn generate(args: GenerateArgs) -> lwm::Result<()> {
    let scenes = load_scenes(&args.scenes)?;
    let suite = args.suite.unwrap_or_else(|| {
        Path::new(&args.scenes)
            .file_stem()
            .map_or("tasks".into(), |s| s.to_string_lossy().into_owned())
    });
    let cfg = TaskConfig {
        suite,
        count: args.count,
        horizon: args.horizon,
        seed: args.seed,
        ..TaskConfig::default()
    };
    let tasks = generate_tasks(&scenes, &KinematicModel::default(), &Camera::default(), &cfg)?;
    write_tasks(BufWriter::new(File::create(&args.out)?), &tasks)?;
    eprintln!("wrote {} tasks to {}", tasks.len(), args.out.display());
    Ok(())
}

fn run(args: RunArgs) -> lwm::Result<()> {
    let mut cfg: BenchConfig = match &args.config {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))?,
        None => BenchConfig::default(),
    };
    if let Some(m) = args.methods {
        cfg.methods = m;
    }
    if let Some(v) = args.iters {
        cfg.iterations = v;
    }
    if let Some(v) = args.samples {
        cfg.samples = v;
    }
    if args.elites.is_some() {
        cfg.elites = args.elites;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.horizon.is_some() {
        cfg.plan_steps = args.horizon;
    }
    if args.no_cummin {
        cfg.cem.cumulative_min = false;
    }
    if let Some(v) = args.goal_noise {
        cfg.policy.goal_noise = v;
    }
    if let Some(v) = args.ik_iters {
        cfg.policy.ik_iterations = v;
    }
    if let Some(v) = args.depth_mode {
        cfg.policy.depth_mode = v;
    }
    if let Some(v) = args.wm_noise {
        cfg.wm_noise = v;
    }
    if let Some(v) = args.eval_samples {
        cfg.eval_samples = v;
    }
    cfg.wall_time |= args.wall_time;

    let tasks = read_tasks(BufReader::new(File::open(&args.tasks)?))?;
    let bench = Bench::new(Arc::new(KinematicModel::default()), Camera::default(), cfg)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| lwm::Error::InvalidInput(e.to_string()))?;
    let out = pool.install(|| bench.run(&tasks));

    write_csv(BufWriter::new(File::create(&args.out)?), &out.rows)?;
    if let Some(p) = &args.plans {
        write_jsonl(BufWriter::new(File::create(p)?), &out.plans)?;
    }
    if !out.failures.is_empty() {
        let p = args.out.with_extension("failures.jsonl");
        write_jsonl(BufWriter::new(File::create(&p)?), &out.failures)?;
        eprintln!("{} failures recorded in {}", out.failures.len(), p.display());
    }
    eprint!("{}", format_summary(&summarize(&out.rows)));
    Ok(())
}

fn report(args: ReportArgs) -> lwm::Result<()> {
    let mut rows = Vec::new();
    for p in &args.input {
        rows.extend(read_csv(File::open(p)?)?);
    }
    let written = write_report(&args.out, &rows, !args.no_plots)?;
    print!("{}", format_summary(&summarize(&rows)));
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenerateTasks(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
