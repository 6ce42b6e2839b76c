use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rie::cli::{self, ExperimentConfig};

/// Monte-Carlo experiments for the rotation-invariant estimators.
#[derive(Parser, Debug)]
#[command(name = "rie", version)]
struct Args {
    /// key = value config file; applied on top of --figure when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = std::thread::available_parallelism().map_or(1, |n| n.get()))]
    workers: usize,
    /// Added to every seed.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Named figure preset.
    #[arg(long)]
    figure: Option<String>,
    /// List the figure presets and exit.
    #[arg(long)]
    list_figures: bool,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> rie::Result<()> {
    if args.list_figures {
        for f in cli::FIGURES {
            println!("{f}");
        }
        return Ok(());
    }
    let base = match &args.figure {
        Some(name) => cli::preset(name)?,
        None => ExperimentConfig::default(),
    };
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path, base)?,
        None if args.figure.is_none() => {
            return Err(rie::RieError::Argument("give --config or --figure (see --list-figures)".into()))
        }
        None => base,
    };
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if args.print_config {
        print!("{}", cfg.to_text());
        println!("output_dir = {}", cfg.output_dir.display());
        return Ok(());
    }
    cfg.validate()?;
    if !cfg.estimators.is_empty() {
        let summary = cli::run(&cfg, args.workers, args.seed_offset)?;
        for path in cli::write_outputs(&cfg, args.seed_offset, &summary)? {
            println!("wrote {}", path.display());
        }
        let failed = summary.rows.iter().filter(|r| r.status != "ok").count();
        if failed > 0 {
            eprintln!("{failed} row(s) failed; see the status column");
        }
        for a in &summary.aggregate {
            println!(
                "{:<18} kappa={:<5} alpha={:<6} mse={:.5} ± {:.5}",
                a.estimator, a.kappa, a.alpha, a.mean, a.stderr
            );
        }
    }
    if !cfg.overlap_modes.is_empty() {
        let fig = cli::emit_overlap_figure(&cfg, &cfg.overlap_modes, args.workers, args.seed_offset)?;
        println!("wrote {}", cli::write_overlap(&cfg, args.seed_offset, &fig)?.display());
    }
    Ok(())
}
