//! A small benchmark suite end to end: tasks, runs, CSV and report.
//!
//! ```text
//! cargo run --release -p lwm --example benchmark -- /tmp/bench 16
//! ```
//! The same steps are available as `bench generate-tasks`, `bench run`
//! and `bench report`.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;

use lwm::bench::{
    format_summary, generate_tasks, summarize, training_scenes, write_csv, write_report, write_tasks, Bench,
    BenchConfig, Method, TaskConfig,
};
use lwm::camera::Camera;
use lwm::skeleton::KinematicModel;

fn main() -> lwm::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "bench-out".into()));
    let count = args.next().and_then(|s| s.parse().ok()).unwrap_or(16);
    std::fs::create_dir_all(&out)?;

    let model = Arc::new(KinematicModel::default());
    let cam = Camera::default();
    let tasks = generate_tasks(
        &training_scenes()?,
        &model,
        &cam,
        &TaskConfig {
            count,
            ..TaskConfig::default()
        },
    )?;
    write_tasks(BufWriter::new(File::create(out.join("tasks.jsonl"))?), &tasks)?;

    let cfg = BenchConfig {
        methods: vec![Method::Initial, Method::LowLevel, Method::Lifted2d],
        iterations: vec![1, 3, 6],
        samples: vec![32],
        ..BenchConfig::default()
    };
    let result = Bench::new(model, cam, cfg)?.run(&tasks);
    write_csv(File::create(out.join("results.csv"))?, &result.rows)?;
    let files = write_report(&out.join("report"), &result.rows, true)?;

    let all: Vec<_> = summarize(&result.rows).into_iter().filter(|r| r.subset == "all").collect();
    print!("{}", format_summary(&all));
    println!("{} failures; wrote {} report files under {}", result.failures.len(), files.len(), out.display());
    Ok(())
}
