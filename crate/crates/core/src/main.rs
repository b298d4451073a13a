use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cfsense::forward::{column, write_dump};
use cfsense::harness::output::{manifest, write_json};
use cfsense::harness::{
    emit_results, parse_config, run_pep_analysis, run_sweep, run_trial, setup_trial, with_threads, write_pep_csv,
    write_pep_sequences_csv, Experiment, ExperimentConfig,
};
use cfsense::{Error, Result};

#[derive(Parser)]
#[command(name = "cfsense", version, about = "Cell-free OFDM multistatic localization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and dump its sensing matrix, observation and detections.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Trial id (selects the target, fading and beam draws).
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Index into the sweep points.
        #[arg(long, default_value_t = 0)]
        snr_index: usize,
    },
    /// Run the full Monte Carlo sweep and write sweep.csv, trials.csv, meta.json.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Union-bound analysis only, without running the solvers.
    Pep {
        #[command(flatten)]
        common: Common,
        /// Substitution order; defaults to pep.order from the config, else 1.
        #[arg(long)]
        order: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => parse_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn simulate(common: &Common, trial: usize, snr_index: usize) -> Result<()> {
    let exp = Experiment::new(common.load()?)?;
    let dir = exp.config.output_dir.clone();
    create_dir(&dir)?;
    let start = Instant::now();
    let mut records = Vec::new();
    for &pattern in &exp.patterns {
        let setup = setup_trial(&exp, trial, snr_index, pattern)?;
        let tag = pattern.as_str();
        write_dump(&dir.join(format!("sensing_matrix_{tag}.bin")), setup.sensing.a.as_ref())?;
        write_dump(&dir.join(format!("observation_{tag}.bin")), column(&setup.observation.y).as_ref())?;
        let record = with_threads(common.threads, || run_trial(&exp, trial, snr_index, pattern))??;
        println!(
            "trial {trial} snr {} dB pattern {tag}: {} targets, A is {} x {}",
            record.snr_db,
            record.num_targets,
            setup.sensing.nrows(),
            setup.sensing.ncols()
        );
        for o in &record.solvers {
            match &o.error {
                Some(e) => println!("  {:<4} failed: {e}", o.solver.as_str()),
                None => println!(
                    "  {:<4} detected {:?}  mdr {}  far {}  mse {} m",
                    o.solver.as_str(),
                    o.detection.as_ref().map(|d| d.indices.clone()).unwrap_or_default(),
                    fmt_opt(o.metrics.map(|m| m.mdr)),
                    fmt_opt(o.metrics.map(|m| m.far)),
                    fmt_opt(o.mse_m),
                ),
            }
        }
        if let Some(t) = &record.truth_indices {
            println!("  truth {t:?}");
        }
        records.push(json!({ "record": record, "scenario": setup.scenario, "sweep_point": setup.point }));
    }
    write_json(&json!(records), &dir.join("trial.json"))?;
    write_json(&manifest(&exp, start.elapsed().as_secs_f64(), "simulate"), &dir.join("meta.json"))?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn sweep(common: &Common) -> Result<()> {
    let exp = Experiment::new(common.load()?)?;
    let result = with_threads(common.threads, || run_sweep(&exp))??;
    emit_results(&exp, &result, &exp.config.output_dir)?;
    for r in &result.rows {
        println!(
            "snr {:>8} dB  {:<4} {:<6}  mdr {}  far {}  mse {}  ub {}  ({} trials)",
            r.snr_db,
            r.solver.as_str(),
            r.bf_pattern.as_str(),
            fmt_opt(r.mdr),
            fmt_opt(r.far),
            fmt_opt(r.mse_m),
            fmt_opt(r.union_bound),
            r.trials
        );
    }
    let failed = result
        .records
        .iter()
        .flat_map(|r| &r.solvers)
        .filter(|o| o.error.is_some())
        .count();
    if failed > 0 {
        eprintln!("warning: {failed} solver runs failed; see the error column of trials.csv");
    }
    println!("wrote {} ({:.1} s)", exp.config.output_dir.display(), result.wall_time_s);
    Ok(())
}

fn pep(common: &Common, order: Option<usize>) -> Result<()> {
    let exp = Experiment::new(common.load()?)?;
    let order = order.or(exp.config.pep.order).unwrap_or(1);
    let start = Instant::now();
    let (rows, sequences) = with_threads(common.threads, || run_pep_analysis(&exp, order))??;
    let dir = &exp.config.output_dir;
    create_dir(dir)?;
    write_pep_csv(&rows, &dir.join("pep.csv"))?;
    write_pep_sequences_csv(&sequences, &dir.join("pep_sequences.csv"))?;
    write_json(&manifest(&exp, start.elapsed().as_secs_f64(), "pep"), &dir.join("meta.json"))?;
    for r in &rows {
        println!(
            "snr {:>8} dB  {:<6}  order {}  union bound {:.6e}  ({} sequences, {} trials)",
            r.snr_db,
            r.bf_pattern.as_str(),
            r.order,
            r.union_bound,
            r.num_sequences,
            r.trials
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Simulate {
            common,
            trial,
            snr_index,
        } => simulate(common, *trial, *snr_index),
        Command::Sweep { common } => sweep(common),
        Command::Pep { common, order } => pep(common, *order),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
