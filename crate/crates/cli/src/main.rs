use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dreams_core::bench::{
    ablate, gen_worlds, run_sweep, summarize, AblationAxis, NoiseLevel, SweepConfig, SweepReport,
};
use dreams_core::simulator::Algorithm;
use dreams_core::world::WorldKind;

#[derive(Parser)]
#[command(name = "dreams", version, about = "Replanning benchmarks under noisy sensing")]
struct Cli {
    /// Directory that relative output paths resolve against.
    #[arg(long, global = true, env = "DREAMS_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured worlds as PGM files with JSON sidecars.
    GenWorlds {
        #[command(flatten)]
        grid: GridArgs,
        /// Destination directory.
        #[arg(long, default_value = "worlds")]
        out: PathBuf,
    },
    /// Run the full sweep and write one CSV row per episode.
    Run {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the sweep once per value of the plan or eval-world count.
    Ablate {
        #[command(flatten)]
        grid: GridArgs,
        /// `plans` or `eval-worlds`.
        #[arg(long)]
        axis: AblationAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean suboptimality with 95% intervals per group.
    Summarize {
        file: PathBuf,
        /// Emit CSV instead of an aligned table.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Args)]
struct GridArgs {
    /// JSON sweep config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    kind: Vec<WorldKind>,
    #[arg(long)]
    worlds: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    algorithm: Vec<Algorithm>,
    /// `low`, `med`, `high` or an explicit decay rate.
    #[arg(long, value_delimiter = ',')]
    noise: Vec<NoiseLevel>,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    plans: Option<usize>,
    #[arg(long)]
    eval_worlds: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Write per-episode JSON-lines logs into this directory.
    #[arg(long)]
    episode_logs: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<usize>,
}

impl GridArgs {
    fn config(self, out_dir: &Path, out: Option<PathBuf>) -> Result<SweepConfig> {
        let mut c = match &self.config {
            Some(p) => SweepConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => SweepConfig::default(),
        };
        if !self.kind.is_empty() {
            c.kinds = self.kind;
        }
        if !self.algorithm.is_empty() {
            c.algorithms = self.algorithm;
        }
        if !self.noise.is_empty() {
            c.noise = self.noise;
        }
        if !self.alpha.is_empty() {
            c.alphas = self.alpha;
        }
        c.worlds_per_kind = self.worlds.unwrap_or(c.worlds_per_kind);
        c.seeds = self.seeds.unwrap_or(c.seeds);
        c.n_plans = self.plans.unwrap_or(c.n_plans);
        c.n_eval_worlds = self.eval_worlds.unwrap_or(c.n_eval_worlds);
        c.jobs = self.jobs.or(c.jobs);
        c.max_steps = self.max_steps.or(c.max_steps);
        c.episode_logs = self.episode_logs.or(c.episode_logs).map(|p| out_dir.join(p));
        c.out = out_dir.join(out.unwrap_or(c.out));
        Ok(c.validated()?)
    }
}

fn report(r: &SweepReport) -> ExitCode {
    eprintln!(
        "{} rows ({} resumed) -> {} (timing: {})",
        r.rows,
        r.resumed,
        r.out.display(),
        r.timing.display()
    );
    if r.failures.is_empty() {
        return ExitCode::SUCCESS;
    }
    for f in &r.failures {
        eprintln!("failed: {f}");
    }
    eprintln!("{} of {} cells failed", r.failures.len(), r.rows);
    ExitCode::FAILURE
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

fn print_summary(file: &Path, csv: bool) -> Result<()> {
    let rows = summarize(file)?;
    if rows.is_empty() {
        bail!("{} has no rows", file.display());
    }
    if csv {
        println!("kind,algorithm,eta,alpha,n_plans,n_eval_worlds,episodes,no_plan,mean_suboptimality,ci95,mean_T,mean_C,mean_J,ci95_J,proposer_secs,acceptor_secs");
        for r in &rows {
            println!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.kind,
                r.algorithm,
                r.eta,
                r.alpha,
                r.n_plans,
                r.n_eval_worlds,
                r.episodes,
                r.no_plan,
                r.mean_suboptimality,
                r.ci95,
                r.mean_traversal_time,
                r.mean_collision_cost,
                r.mean_total_cost,
                r.ci95_total_cost,
                r.mean_proposer_secs.map_or(String::new(), |v| v.to_string()),
                r.mean_acceptor_secs.map_or(String::new(), |v| v.to_string()),
            );
        }
        return Ok(());
    }
    println!(
        "{:<7} {:<16} {:>7} {:>5} {:>6} {:>6} {:>4} {:>15} {:>9} {:>9} {:>9} {:>9}",
        "kind", "algorithm", "eta", "alpha", "plans", "eval", "n", "suboptimality", "T", "C", "prop s", "acc s"
    );
    for r in &rows {
        println!(
            "{:<7} {:<16} {:>7} {:>5} {:>6} {:>6} {:>4} {:>7.3} ± {:<5.3} {:>9.2} {:>9.2} {:>9} {:>9}",
            r.kind.to_string(),
            r.algorithm.to_string(),
            r.eta,
            r.alpha,
            r.n_plans,
            r.n_eval_worlds,
            r.episodes,
            r.mean_suboptimality,
            r.ci95,
            r.mean_traversal_time,
            r.mean_collision_cost,
            fmt_opt(r.mean_proposer_secs),
            fmt_opt(r.mean_acceptor_secs),
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let out_dir = cli.out_dir;
    match cli.command {
        Command::GenWorlds { grid, out } => {
            let cfg = grid.config(&out_dir, None)?;
            let dir = out_dir.join(out);
            let paths = gen_worlds(&cfg, &dir)?;
            eprintln!("wrote {} worlds to {}", paths.len(), dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { grid, out } => {
            let cfg = grid.config(&out_dir, out)?;
            eprintln!("running {} episodes", cfg.cell_count());
            Ok(report(&run_sweep(&cfg)?))
        }
        Command::Ablate {
            grid,
            axis,
            values,
            out,
        } => {
            let cfg = grid.config(&out_dir, out)?;
            eprintln!("running {} episodes", cfg.cell_count() * values.len());
            Ok(report(&ablate(axis, &values, &cfg)?))
        }
        Command::Summarize { file, csv } => {
            print_summary(&out_dir.join(file), csv)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
