use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use subwave::cli::config::check;
use subwave::cli::{parse_config, run_with_threads, ExperimentError, ExperimentKind};
use subwave::geometry::ScenarioConfig;

#[derive(Parser)]
#[command(name = "subwave", version, about = "Band structures of periodic chains of subwavelength resonators")]
struct Cli {
    #[command(subcommand)]
    experiment: Experiment,
}

#[derive(Subcommand)]
enum Experiment {
    /// Off-diagonal decay of the quasi-periodic capacitance matrix.
    Decay(Overrides),
    /// Single defect: full against band-truncated defect eigenvalue.
    Defect(Overrides),
    /// Two defects: spectral gap and relative difference.
    TwoDefect(Overrides),
    /// Dimerized chain with a domain wall: interface band.
    Ssh(Overrides),
    /// Plain band sweep of the configured chain.
    Band(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// TOML scenario file; without it the experiment's default scenario is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    alpha_points: Option<usize>,
    #[arg(long)]
    fourier_terms: Option<usize>,
    #[arg(long)]
    panels: Option<usize>,
    /// Defect separation for two_defect.
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    truncation_width: Option<usize>,
    #[arg(long, env = "SUBWAVE_THREADS")]
    threads: Option<usize>,
}

fn resolve(kind: ExperimentKind, o: &Overrides) -> Result<ScenarioConfig, ExperimentError> {
    let mut cfg = match &o.config {
        Some(path) => parse_config(path)?,
        None => ScenarioConfig::new(kind.default_scenario()),
    };
    if let Some(dir) = &o.out {
        cfg.output_dir = dir.clone();
    }
    if let Some(n) = o.alpha_points {
        cfg.alpha_points = n;
    }
    if let Some(m) = o.fourier_terms {
        cfg.fourier_terms = m;
    }
    if let Some(p) = o.panels {
        cfg.panels_per_disk = p;
    }
    if let Some(l) = o.l {
        cfg.defect_separation = Some(l);
    }
    if let Some(b) = o.truncation_width {
        cfg.band_truncation_width = b;
    }
    check(&cfg)?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (kind, overrides) = match &cli.experiment {
        Experiment::Decay(o) => (ExperimentKind::Decay, o),
        Experiment::Defect(o) => (ExperimentKind::Defect, o),
        Experiment::TwoDefect(o) => (ExperimentKind::TwoDefect, o),
        Experiment::Ssh(o) => (ExperimentKind::Ssh, o),
        Experiment::Band(o) => (ExperimentKind::Band, o),
    };
    let result = resolve(kind, overrides).and_then(|cfg| run_with_threads(kind, &cfg, overrides.threads));
    match result {
        Ok(r) => {
            for (name, value) in &r.metrics {
                println!("{name} = {value:.16e}");
            }
            for path in &r.outputs {
                println!("wrote {}", path.display());
            }
            println!("wall_time = {:.3} s", r.wall_time);
            ExitCode::SUCCESS
        }
        Err(e) => {
            match &e {
                ExperimentError::Config(c) => eprintln!("error [{}]: {c}", c.code()),
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
