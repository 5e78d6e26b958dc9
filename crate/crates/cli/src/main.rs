//! `locklab`: command-line front end for the attack pipeline.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use locklab::par;
use locklab::pipeline::{
    cmd_attack, cmd_gen_dataset, cmd_report, cmd_train, AttackReport, ExperimentConfig, Layout, PipelineError,
};
use locklab::selfcheck;

#[derive(Parser)]
#[command(name = "locklab", version, about = "Oracle-less GNN removal attack on logic locking")]
struct Cli {
    /// Worker threads for instance-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed and the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Lock every benchmark and write the labelled dataset.
    GenDataset(Common),
    /// Train one model per held-out design.
    Train(Common),
    /// Attack the held-out instances and write report.json / report.csv.
    Attack(Common),
    /// gen-dataset, train and attack in sequence.
    Run(Common),
    /// Aggregate report.json files into dataset-level averages.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Write the aggregate here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selfcheck,
}

fn load(c: &Common) -> Result<ExperimentConfig, PipelineError> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn gen(cfg: &ExperimentConfig) -> Result<(), PipelineError> {
    let t = Instant::now();
    let out = cmd_gen_dataset(cfg)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    Layout::of(cfg).record_timing(&[("gen_dataset".into(), t.elapsed().as_secs_f64())])?;
    println!(
        "{} instances over {} designs in {}",
        out.census.instances.len(),
        out.census.designs.len(),
        cfg.scheme_dir().display()
    );
    Ok(())
}

fn train(cfg: &ExperimentConfig) -> Result<(), PipelineError> {
    for f in cmd_train(cfg)? {
        println!(
            "fold {:<12} val {:<12} epochs {:>5}  best epoch {:>5}  val score {:.4}",
            f.test_design, f.val_design, f.epochs_run, f.best_epoch, f.best_val_score
        );
    }
    Ok(())
}

fn attack(cfg: &ExperimentConfig) -> Result<(), PipelineError> {
    let r = cmd_attack(cfg)?;
    print_report(&r);
    let s = &r.summary;
    if s.equivalent < s.instances {
        return Err(PipelineError::Verification(format!(
            "{} of {} recovered circuits verified equivalent",
            s.equivalent, s.instances
        )));
    }
    Ok(())
}

fn print_report(r: &AttackReport) {
    println!("{:<12} {:>5} {:>9} {:>9} {:>8}", "design", "inst", "acc pre", "acc post", "removal");
    for d in &r.designs {
        println!(
            "{:<12} {:>5} {:>8.2}% {:>8.2}% {:>7.1}%",
            d.design,
            d.instances.len(),
            100.0 * d.pre.accuracy,
            100.0 * d.post.accuracy,
            100.0 * d.removal_success
        );
        if !d.post.misclassified.is_empty() {
            println!("    misclassified: {}", d.post.misclassified.join(", "));
        }
    }
    let s = &r.summary;
    println!(
        "{:<12} {:>5} {:>8.2}% {:>8.2}% {:>7.1}%",
        "average",
        s.instances,
        100.0 * s.accuracy_pre,
        100.0 * s.accuracy_post,
        100.0 * s.removal_success
    );
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::GenDataset(c) => gen(&load(&c)?),
        Command::Train(c) => train(&load(&c)?),
        Command::Attack(c) => attack(&load(&c)?),
        Command::Run(c) => {
            let cfg = load(&c)?;
            gen(&cfg)?;
            train(&cfg)?;
            attack(&cfg)
        }
        Command::Report { reports, out } => {
            let agg = cmd_report(&reports)?;
            let text = serde_json::to_string_pretty(&agg).map_err(|e| PipelineError::Report(e.to_string()))? + "\n";
            match out {
                Some(p) => std::fs::write(&p, text)
                    .map_err(|e| PipelineError::Io { path: p.display().to_string(), message: e.to_string() }),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Selfcheck => {
            let checks = selfcheck::run_all();
            for c in &checks {
                println!("{} {:<26} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            match checks.iter().filter(|c| !c.passed).count() {
                0 => Ok(()),
                n => Err(PipelineError::Verification(format!("{n} self-checks failed"))),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let jobs = cli.jobs;
    match par::with_jobs(jobs, || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
