use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use super::config::{check, ConfigError};
use crate::capmat::{
    alpha_dft, alpha_grid, fit_decay, hermitian_part, write_decay_csv, write_dft_csv, CapacitanceMatrix,
    CapmatError,
};
use crate::geometry::{build_scenario, GeometryError, ResonatorChain, ScenarioConfig, ScenarioKind};
use crate::spectra::{
    band_from_capacitance, capacitance_sweep, classify_defects, classify_interface, defect_error,
    write_band_csv, BandStructure, DefectReport, SpectraError, Summary, SweepOptions, DEFAULT_IPR_THRESHOLD,
};

/// Offset range of the off-diagonal decay fit.
pub const DECAY_OFFSETS: usize = 5;
/// Largest Fourier index written to `dft.csv`.
pub const DFT_MAX_OFFSET: usize = 6;
/// Distance in disks from the domain wall within which an ssh mode counts as
/// an interface mode.
pub const INTERFACE_WINDOW: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Decay,
    Defect,
    TwoDefect,
    Ssh,
    Band,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Decay => "decay",
            ExperimentKind::Defect => "defect",
            ExperimentKind::TwoDefect => "two_defect",
            ExperimentKind::Ssh => "ssh",
            ExperimentKind::Band => "band",
        }
    }

    /// Scenario used when no config file is given.
    pub fn default_scenario(&self) -> ScenarioKind {
        match self {
            ExperimentKind::Decay | ExperimentKind::Band => ScenarioKind::Uniform,
            ExperimentKind::Defect => ScenarioKind::SingleDefect,
            ExperimentKind::TwoDefect => ScenarioKind::TwoDefect,
            ExperimentKind::Ssh => ScenarioKind::Ssh,
        }
    }

    fn accepts(&self, scenario: ScenarioKind) -> bool {
        match self {
            ExperimentKind::Decay | ExperimentKind::Band => true,
            _ => scenario == self.default_scenario(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("experiment `{experiment}` cannot run scenario `{scenario}`")]
    ScenarioMismatch { experiment: &'static str, scenario: &'static str },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Capmat(#[from] CapmatError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(e) => e.exit_code(),
            ExperimentError::ScenarioMismatch { .. } => 15,
            ExperimentError::Io { .. } => 3,
            ExperimentError::Pool(_) => 4,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub scenario_name: String,
    pub outputs: Vec<PathBuf>,
    pub metrics: BTreeMap<String, f64>,
    pub summary: Summary,
    pub wall_time: f64,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, ExperimentError> {
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), ExperimentError> {
        let path = self.dir.join(name);
        let io = |source| ExperimentError::Io {
            path: path.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        body(&mut w).map_err(io)?;
        w.flush().map_err(io)?;
        log::info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }
}

/// Runs on a dedicated pool of `threads` workers, or the global pool.
pub fn run_with_threads(
    kind: ExperimentKind,
    cfg: &ScenarioConfig,
    threads: Option<usize>,
) -> Result<ExperimentResult, ExperimentError> {
    match threads {
        None => run_experiment(kind, cfg),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| ExperimentError::Pool(e.to_string()))?
            .install(|| run_experiment(kind, cfg)),
    }
}

pub fn run_experiment(kind: ExperimentKind, cfg: &ScenarioConfig) -> Result<ExperimentResult, ExperimentError> {
    check(cfg)?;
    if !kind.accepts(cfg.scenario) {
        return Err(ExperimentError::ScenarioMismatch {
            experiment: kind.name(),
            scenario: cfg.scenario.name(),
        });
    }
    let start = Instant::now();
    let chain = build_scenario(cfg)?;
    let grid = alpha_grid(cfg.alpha_points);
    let mut out = Outputs::new(&cfg.output_dir)?;
    let mut summary = Summary {
        scenario: chain.scenario_name.clone(),
        ..Default::default()
    };
    let mut metrics = BTreeMap::new();
    log::info!(
        "{}: {} disks, {} grid points, M = {}, {} panels per disk",
        kind.name(),
        chain.len(),
        grid.len(),
        cfg.fourier_terms,
        cfg.panels_per_disk
    );
    let matrices = capacitance_sweep(&chain, &grid, cfg.fourier_terms, cfg.panels_per_disk)?;
    let opts = SweepOptions {
        fourier_terms: cfg.fourier_terms,
        panels_per_disk: cfg.panels_per_disk,
        truncation: None,
    };
    let truncated = SweepOptions {
        truncation: Some(cfg.band_truncation_width),
        ..opts
    };

    match kind {
        ExperimentKind::Decay => {
            let mut fits = Vec::with_capacity(matrices.len());
            for c in &matrices {
                fits.push((c.alpha, fit_decay(&hermitian_part(c), DECAY_OFFSETS)?));
            }
            out.write("decay.csv", |w| write_decay_csv(w, &fits))?;
            if matrices.len() >= 4 * DFT_MAX_OFFSET {
                let center = matrices[0].labels[matrices[0].center()];
                let slice = alpha_dft(&matrices, center, center, DFT_MAX_OFFSET)?;
                out.write("dft.csv", |w| write_dft_csv(w, &[slice]))?;
            }
            summary.decay_rho_by_alpha = fits.iter().map(|(a, f)| (*a, f.rho)).collect();
            metrics.insert("max_rho".into(), fits.iter().map(|f| f.1.rho).fold(0.0, f64::max));
            metrics.insert(
                "min_log_linear_r2".into(),
                fits.iter().map(|f| f.1.log_linear_r2).fold(f64::INFINITY, f64::min),
            );
        }
        ExperimentKind::Defect | ExperimentKind::TwoDefect => {
            let (full, trunc) = (
                band_from_capacitance(&chain, &matrices, opts)?,
                band_from_capacitance(&chain, &matrices, truncated)?,
            );
            let (ref_full, ref_trunc) = reference_bands(cfg, &grid, opts, truncated)?;
            let rf = classify_defects(&full, &ref_full, DEFAULT_IPR_THRESHOLD)?;
            let rt = classify_defects(&trunc, &ref_trunc, DEFAULT_IPR_THRESHOLD)?;
            write_bands(&mut out, &full, &rf, &trunc, &rt)?;
            if kind == ExperimentKind::Defect {
                let e = defect_error(&rf, &rt)?;
                summary.defect_error = Some(e);
                metrics.insert("defect_error".into(), e);
            } else {
                summary.max_gap = rf.max_gap;
                summary.max_rd = rf.max_relative_difference;
                summary.truncated_max_gap = rt.max_gap;
                summary.truncated_max_rd = rt.max_relative_difference;
                for (key, v) in [
                    ("max_gap", rf.max_gap),
                    ("max_rd", rf.max_relative_difference),
                    ("truncated_max_gap", rt.max_gap),
                    ("truncated_max_rd", rt.max_relative_difference),
                ] {
                    if let Some(v) = v {
                        metrics.insert(key.into(), v);
                    }
                }
            }
        }
        ExperimentKind::Ssh => {
            let band = band_from_capacitance(&chain, &matrices, opts)?;
            let report = classify_interface(
                &band,
                domain_wall(&chain),
                DEFAULT_IPR_THRESHOLD,
                INTERFACE_WINDOW,
            )?;
            out.write("band.csv", |w| write_band_csv(w, &band, Some(&report)))?;
            summary.interface_overlaps_lowest_band = report.overlaps_lowest_band;
            let lowest = report
                .defect_bands
                .iter()
                .map(|m| m.iter().map(|d| d.eigenvalue).fold(f64::INFINITY, f64::min));
            metrics.insert("interface_min".into(), lowest.clone().fold(f64::INFINITY, f64::min));
            metrics.insert("interface_max".into(), lowest.fold(0.0, f64::max));
        }
        ExperimentKind::Band => {
            let band = band_from_capacitance(&chain, &matrices, opts)?;
            out.write("band.csv", |w| write_band_csv(w, &band, None))?;
            metrics.insert("max_relative_residual".into(), band.max_relative_residual());
        }
    }

    out.write("summary.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        writeln!(w)
    })?;
    let wall_time = start.elapsed().as_secs_f64();
    log::info!("{} finished in {wall_time:.1} s", kind.name());
    Ok(ExperimentResult {
        scenario_name: chain.scenario_name,
        outputs: out.written,
        metrics,
        summary,
        wall_time,
    })
}

fn reference_bands(
    cfg: &ScenarioConfig,
    grid: &[f64],
    opts: SweepOptions,
    truncated: SweepOptions,
) -> Result<(BandStructure, BandStructure), ExperimentError> {
    let mut uniform = cfg.clone();
    uniform.scenario = ScenarioKind::Uniform;
    uniform.defect_separation = None;
    let chain = build_scenario(&uniform)?;
    let matrices: Vec<CapacitanceMatrix> =
        capacitance_sweep(&chain, grid, cfg.fourier_terms, cfg.panels_per_disk)?;
    Ok((
        band_from_capacitance(&chain, &matrices, opts)?,
        band_from_capacitance(&chain, &matrices, truncated)?,
    ))
}

fn write_bands(
    out: &mut Outputs,
    full: &BandStructure,
    rf: &DefectReport,
    trunc: &BandStructure,
    rt: &DefectReport,
) -> Result<(), ExperimentError> {
    out.write("band_full.csv", |w| write_band_csv(w, full, Some(rf)))?;
    out.write("band_truncated.csv", |w| write_band_csv(w, trunc, Some(rt)))
}

/// Chain position just below `y = 0`, where the two half-chains meet.
pub fn domain_wall(chain: &ResonatorChain) -> usize {
    chain
        .disks
        .iter()
        .rposition(|d| d.center[1] < 0.0)
        .unwrap_or(0)
}
