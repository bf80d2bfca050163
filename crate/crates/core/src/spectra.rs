//! Generalized eigenproblem `Ĉ^α v = λ M v`, Brillouin-zone sweeps and the
//! localization-based classification of defect and interface modes.

use crate::bem::{self, BemError};
use crate::capmat::{band_truncate, hermitian_part, CapacitanceMatrix};
use crate::geometry::{discretize, ResonatorChain, ScenarioKind};
use crate::qpgreen::GreenParams;
use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

pub const DEFAULT_IPR_THRESHOLD: f64 = 0.2;
/// Margin around the reference band used by the gap criterion.
pub const BAND_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("eigen-decomposition failed to converge at alpha = {0}")]
    NoConvergence(f64),
    #[error("capacitance matrix at alpha = {0} has not been hermitized")]
    NotHermitian(f64),
    #[error("dimension mismatch: matrix {matrix}, mass {mass}")]
    Dimension { matrix: usize, mass: usize },
    #[error("zero vector has no participation ratio")]
    ZeroVector,
    #[error("invalid eigenvalue pair ({0}, {1}): need 0 < l1 <= l2")]
    InvalidPair(f64, f64),
    #[error("negative eigenvalue {0} has no frequency")]
    NegativeEigenvalue(f64),
    #[error("invalid frequency parameters: {0}")]
    InvalidFrequency(String),
    #[error("expected {expected} defect eigenvalues at alpha = {alpha}, found {found}")]
    DefectCount { alpha: f64, expected: usize, found: usize },
    #[error("reference band structure does not match (grid or size)")]
    ReferenceMismatch,
    #[error("alpha grid contains zero")]
    ZeroAlpha,
    #[error("sweep failed at {} grid point(s): {}", .0.len(), describe(.0))]
    Sweep(Vec<(f64, String)>),
}

fn describe(failures: &[(f64, String)]) -> String {
    failures
        .iter()
        .map(|(a, e)| format!("alpha={a}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Diagonal `|D_n| = π r_n²`.
#[derive(Clone, Debug, PartialEq)]
pub struct MassMatrix {
    pub diagonal: Vec<f64>,
}

pub fn mass_matrix(chain: &ResonatorChain) -> MassMatrix {
    MassMatrix {
        diagonal: chain.disks.iter().map(|d| d.area()).collect(),
    }
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    pub alpha: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns normalized to `vᴴ M v = 1`.
    pub eigenvectors: Mat<Complex64>,
    pub iprs: Vec<f64>,
    /// `max_k ‖Ĉ v_k − λ_k M v_k‖_∞ / ‖Ĉ‖_∞`.
    pub relative_residual: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<Complex64> {
        (0..self.eigenvectors.nrows())
            .map(|i| self.eigenvectors[(i, k)])
            .collect()
    }

    /// `Σ i|v_i|⁴ / Σ |v_i|⁴`: the disk position a mode concentrates on.
    pub fn localization_center(&self, k: usize) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.eigenvectors.nrows() {
            let w = self.eigenvectors[(i, k)].norm_sqr().powi(2);
            num += w * i as f64;
            den += w;
        }
        num / den
    }
}

/// `Σ|v_n|⁴ / (Σ|v_n|²)²` over the disk amplitudes.
pub fn ipr(v: &[Complex64]) -> Result<f64, SpectraError> {
    let s2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if s2 == 0.0 {
        return Err(SpectraError::ZeroVector);
    }
    let s4: f64 = v.iter().map(|z| z.norm_sqr().powi(2)).sum();
    Ok(s4 / (s2 * s2))
}

/// Full decomposition of the pencil through `A = M^{−1/2} Ĉ M^{−1/2}`.
pub fn eig_pencil(c: &CapacitanceMatrix, m: &MassMatrix) -> Result<Spectrum, SpectraError> {
    if !c.hermitized {
        return Err(SpectraError::NotHermitian(c.alpha));
    }
    let n = c.dim();
    if m.diagonal.len() != n {
        return Err(SpectraError::Dimension {
            matrix: n,
            mass: m.diagonal.len(),
        });
    }
    let scale: Vec<f64> = m.diagonal.iter().map(|d| 1.0 / d.sqrt()).collect();
    let a = Mat::from_fn(n, n, |i, j| c.entries[(i, j)] * (scale[i] * scale[j]));
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| SpectraError::NoConvergence(c.alpha))?;
    let s = eig.S();
    let u = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    let values: Vec<f64> = (0..n).map(|k| s[k].re).collect();
    order.sort_by(|&x, &y| values[x].total_cmp(&values[y]));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    let eigenvectors = Mat::from_fn(n, n, |i, k| u[(i, order[k])] * scale[i]);
    let mut iprs = Vec::with_capacity(n);
    for k in 0..n {
        let v: Vec<Complex64> = (0..n).map(|i| eigenvectors[(i, k)]).collect();
        iprs.push(ipr(&v)?);
    }
    let c_norm = c.inf_norm();
    let mut worst = 0.0f64;
    for (k, &lambda) in eigenvalues.iter().enumerate() {
        for i in 0..n {
            let mut r = -eigenvectors[(i, k)] * (lambda * m.diagonal[i]);
            for j in 0..n {
                r += c.entries[(i, j)] * eigenvectors[(j, k)];
            }
            worst = worst.max(r.norm());
        }
    }
    Ok(Spectrum {
        alpha: c.alpha,
        eigenvalues,
        eigenvectors,
        iprs,
        relative_residual: if c_norm > 0.0 { worst / c_norm } else { worst },
    })
}

/// Discretization and post-processing choices of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub fourier_terms: usize,
    pub panels_per_disk: usize,
    /// `Some(b)` keeps only the entries with `|row − col| ≤ b`.
    pub truncation: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            fourier_terms: 200,
            panels_per_disk: 64,
            truncation: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BandStructure {
    pub alpha_grid: Vec<f64>,
    pub spectra: Vec<Spectrum>,
    pub scenario_name: String,
    pub fourier_terms: usize,
    pub panels_per_disk: usize,
    pub alpha_points: usize,
    pub truncation: Option<usize>,
    pub labels: Vec<i64>,
}

impl BandStructure {
    pub fn max_relative_residual(&self) -> f64 {
        self.spectra
            .iter()
            .map(|s| s.relative_residual)
            .fold(0.0, f64::max)
    }
}

/// Raw (not yet hermitized) capacitance matrices over the grid, in grid order.
pub fn capacitance_sweep(
    chain: &ResonatorChain,
    alpha_grid: &[f64],
    fourier_terms: usize,
    panels_per_disk: usize,
) -> Result<Vec<CapacitanceMatrix>, SpectraError> {
    if alpha_grid.contains(&0.0) {
        return Err(SpectraError::ZeroAlpha);
    }
    let mesh = discretize(chain, panels_per_disk)
        .map_err(|e| SpectraError::Sweep(vec![(f64::NAN, e.to_string())]))?;
    faer::set_global_parallelism(faer::Par::Seq);
    let results: Vec<Result<CapacitanceMatrix, BemError>> = alpha_grid
        .par_iter()
        .map(|&alpha| {
            let params = GreenParams::new(alpha, fourier_terms)?;
            let opts = bem::AssemblyOptions {
                parallel_blocks: false,
                ..Default::default()
            };
            let c = bem::capacitance_with(&mesh, &params, opts)?;
            log::debug!("alpha = {alpha:.6}: capacitance asymmetry {:.3e}", c.asymmetry);
            Ok(c)
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (alpha, r) in alpha_grid.iter().zip(results) {
        match r {
            Ok(c) => out.push(c),
            Err(e) => failures.push((*alpha, e.to_string())),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(SpectraError::Sweep(failures))
    }
}

/// Hermitize, optionally truncate, and solve the pencil for every matrix.
pub fn spectra_from_capacitance(
    matrices: &[CapacitanceMatrix],
    mass: &MassMatrix,
    truncation: Option<usize>,
) -> Result<Vec<Spectrum>, SpectraError> {
    let results: Vec<Result<Spectrum, SpectraError>> = matrices
        .par_iter()
        .map(|c| {
            let h = hermitian_part(c);
            let h = match truncation {
                Some(b) => band_truncate(&h, b),
                None => h,
            };
            eig_pencil(&h, mass)
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (c, r) in matrices.iter().zip(results) {
        match r {
            Ok(s) => out.push(s),
            Err(e) => failures.push((c.alpha, e.to_string())),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(SpectraError::Sweep(failures))
    }
}

/// Band structure assembled from precomputed capacitance matrices.
pub fn band_from_capacitance(
    chain: &ResonatorChain,
    matrices: &[CapacitanceMatrix],
    opts: SweepOptions,
) -> Result<BandStructure, SpectraError> {
    let spectra = spectra_from_capacitance(matrices, &mass_matrix(chain), opts.truncation)?;
    Ok(BandStructure {
        alpha_grid: matrices.iter().map(|c| c.alpha).collect(),
        spectra,
        scenario_name: chain.scenario_name.clone(),
        fourier_terms: opts.fourier_terms,
        panels_per_disk: opts.panels_per_disk,
        alpha_points: matrices.len(),
        truncation: opts.truncation,
        labels: chain.labels(),
    })
}

/// Assemble → solve → capacitance → hermitize → truncate → eigen, per α.
pub fn band_sweep(
    chain: &ResonatorChain,
    alpha_grid: &[f64],
    opts: SweepOptions,
) -> Result<BandStructure, SpectraError> {
    let matrices = capacitance_sweep(chain, alpha_grid, opts.fourier_terms, opts.panels_per_disk)?;
    band_from_capacitance(chain, &matrices, opts)
}

/// Eigenvalues singled out at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectMode {
    pub index: usize,
    pub eigenvalue: f64,
    pub ipr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectReport {
    pub alpha_grid: Vec<f64>,
    pub defect_bands: Vec<Vec<DefectMode>>,
    pub max_gap: Option<f64>,
    pub max_relative_difference: Option<f64>,
    pub rd_curve: Vec<(f64, f64)>,
    /// Interface band meets the range of the lowest passing band (ssh only).
    pub overlaps_lowest_band: Option<bool>,
}

impl DefectReport {
    /// The `k`-th smallest defect eigenvalue at every grid point.
    pub fn band(&self, k: usize) -> Option<Vec<f64>> {
        self.defect_bands
            .iter()
            .map(|modes| modes.get(k).map(|m| m.eigenvalue))
            .collect()
    }
}

/// Flags eigenvalues outside the per-α reference interval (with
/// [`BAND_MARGIN`]) or with IPR above `ipr_threshold`.
///
/// When the scenario name fixes the number of defects and the union flags
/// more than that, the surplus is dropped in order: in-band before
/// out-of-band, then lowest IPR first. This discards modes trapped between
/// nearby defects that are localized but stay inside the passing band. Fewer
/// flagged modes than expected at any grid point is an error.
pub fn classify_defects(
    band: &BandStructure,
    reference: &BandStructure,
    ipr_threshold: f64,
) -> Result<DefectReport, SpectraError> {
    if band.alpha_grid.len() != reference.alpha_grid.len()
        || band
            .alpha_grid
            .iter()
            .zip(&reference.alpha_grid)
            .any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(SpectraError::ReferenceMismatch);
    }
    let expected = ScenarioKind::parse(&band.scenario_name)
        .filter(|k| *k != ScenarioKind::Custom)
        .map(|k| k.expected_defects());
    let mut defect_bands = Vec::with_capacity(band.spectra.len());
    for (s, r) in band.spectra.iter().zip(&reference.spectra) {
        let lo = r.eigenvalues.first().copied().unwrap_or(f64::INFINITY);
        let hi = r.eigenvalues.last().copied().unwrap_or(f64::NEG_INFINITY);
        let outside = |l: f64| l < lo - BAND_MARGIN || l > hi + BAND_MARGIN;
        let mut modes: Vec<DefectMode> = s
            .eigenvalues
            .iter()
            .zip(&s.iprs)
            .enumerate()
            .filter(|&(_, (&l, &p))| outside(l) || p > ipr_threshold)
            .map(|(index, (&eigenvalue, &ipr))| DefectMode { index, eigenvalue, ipr })
            .collect();
        if let Some(expected) = expected {
            if modes.len() < expected {
                return Err(SpectraError::DefectCount {
                    alpha: s.alpha,
                    expected,
                    found: modes.len(),
                });
            }
            if modes.len() > expected {
                modes.sort_by(|a, b| {
                    outside(b.eigenvalue)
                        .cmp(&outside(a.eigenvalue))
                        .then(b.ipr.total_cmp(&a.ipr))
                });
                modes.truncate(expected);
                modes.sort_by_key(|m| m.index);
            }
        }
        defect_bands.push(modes);
    }
    let mut report = DefectReport {
        alpha_grid: band.alpha_grid.clone(),
        defect_bands,
        max_gap: None,
        max_relative_difference: None,
        rd_curve: Vec::new(),
        overlaps_lowest_band: None,
    };
    if expected == Some(2) {
        let pairs: Vec<(f64, f64)> = report
            .defect_bands
            .iter()
            .map(|m| (m[0].eigenvalue, m[1].eigenvalue))
            .collect();
        report.max_gap = Some(max_gap(&pairs)?);
        let mut curve = Vec::with_capacity(pairs.len());
        for (&alpha, &(l1, l2)) in band.alpha_grid.iter().zip(&pairs) {
            curve.push((alpha, relative_difference(l1, l2)?));
        }
        report.max_relative_difference = Some(curve.iter().map(|c| c.1).fold(0.0, f64::max));
        report.rd_curve = curve;
    }
    Ok(report)
}

/// Interface modes of a chain with a domain wall between `wall` and
/// `wall + 1` (positions in the chain): IPR above the threshold and
/// localization centre within `window` disks of the wall. Modes centred within
/// `window` disks of either chain end are end artifacts of the finite chain
/// and are dropped.
pub fn classify_interface(
    band: &BandStructure,
    wall: usize,
    ipr_threshold: f64,
    window: f64,
) -> Result<DefectReport, SpectraError> {
    let wall_pos = wall as f64 + 0.5;
    let mut defect_bands = Vec::with_capacity(band.spectra.len());
    let mut lowest_band_top = f64::NEG_INFINITY;
    for s in &band.spectra {
        let n = s.len();
        let mut modes = Vec::new();
        let mut ordinary = Vec::new();
        for k in 0..n {
            let center = s.localization_center(k);
            let at_end = center <= window || center >= (n - 1) as f64 - window;
            let localized = s.iprs[k] > ipr_threshold;
            if localized && (center - wall_pos).abs() <= window {
                modes.push(DefectMode {
                    index: k,
                    eigenvalue: s.eigenvalues[k],
                    ipr: s.iprs[k],
                });
            } else if !(localized && at_end) {
                ordinary.push(s.eigenvalues[k]);
            }
        }
        if modes.is_empty() {
            return Err(SpectraError::DefectCount {
                alpha: s.alpha,
                expected: 1,
                found: 0,
            });
        }
        // the lowest passing band holds the lower half of the extended modes
        if !ordinary.is_empty() {
            let top = ordinary[(ordinary.len() - 1) / 2];
            lowest_band_top = lowest_band_top.max(top);
        }
        defect_bands.push(modes);
    }
    let overlaps = defect_bands
        .iter()
        .any(|modes| modes.iter().any(|m| m.eigenvalue <= lowest_band_top));
    Ok(DefectReport {
        alpha_grid: band.alpha_grid.clone(),
        defect_bands,
        max_gap: None,
        max_relative_difference: None,
        rd_curve: Vec::new(),
        overlaps_lowest_band: Some(overlaps),
    })
}

/// `1 − l1/l2` for `0 < l1 ≤ l2`.
pub fn relative_difference(l1: f64, l2: f64) -> Result<f64, SpectraError> {
    if !(l1 > 0.0 && l1 <= l2) {
        return Err(SpectraError::InvalidPair(l1, l2));
    }
    Ok(1.0 - l1 / l2)
}

/// `max_α (λ₂ − λ₁)`.
pub fn max_gap(pairs: &[(f64, f64)]) -> Result<f64, SpectraError> {
    if pairs.is_empty() {
        return Err(SpectraError::InvalidPair(f64::NAN, f64::NAN));
    }
    let mut best = f64::NEG_INFINITY;
    for &(l1, l2) in pairs {
        if !(l1 <= l2) {
            return Err(SpectraError::InvalidPair(l1, l2));
        }
        best = best.max(l2 - l1);
    }
    Ok(best)
}

/// `max_α |λ − λ_t|` between two single-mode defect bands on the same grid.
pub fn defect_error(full: &DefectReport, truncated: &DefectReport) -> Result<f64, SpectraError> {
    let a = full.band(0).ok_or(SpectraError::ReferenceMismatch)?;
    let b = truncated.band(0).ok_or(SpectraError::ReferenceMismatch)?;
    if a.len() != b.len() {
        return Err(SpectraError::ReferenceMismatch);
    }
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Contrast `δ` and interior wave speed `μ₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrequencyParams {
    pub delta: f64,
    pub mu1: f64,
}

impl Default for FrequencyParams {
    fn default() -> Self {
        Self { delta: 1e-3, mu1: 1.0 }
    }
}

impl FrequencyParams {
    pub fn new(delta: f64, mu1: f64) -> Result<Self, SpectraError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(SpectraError::InvalidFrequency(format!("delta must be positive, got {delta}")));
        }
        if !(mu1 > 0.0 && mu1.is_finite()) {
            return Err(SpectraError::InvalidFrequency(format!("mu1 must be positive, got {mu1}")));
        }
        if delta > 0.1 {
            log::warn!("contrast delta = {delta} is not small; the leading-order frequency is unreliable");
        }
        Ok(Self { delta, mu1 })
    }
}

/// Leading-order frequency `√(δλ)·μ₁`.
pub fn to_frequency(lambda: f64, params: &FrequencyParams) -> Result<f64, SpectraError> {
    if lambda < 0.0 {
        return Err(SpectraError::NegativeEigenvalue(lambda));
    }
    Ok((params.delta * lambda).sqrt() * params.mu1)
}

/// Rows `alpha,eig_index,lambda,ipr,is_defect`.
pub fn write_band_csv<W: Write>(
    mut w: W,
    band: &BandStructure,
    report: Option<&DefectReport>,
) -> std::io::Result<()> {
    writeln!(w, "alpha,eig_index,lambda,ipr,is_defect")?;
    for (g, s) in band.spectra.iter().enumerate() {
        for k in 0..s.len() {
            let flagged = report
                .map(|r| r.defect_bands[g].iter().any(|m| m.index == k))
                .unwrap_or(false);
            writeln!(
                w,
                "{:.16e},{k},{:.16e},{:.16e},{}",
                s.alpha, s.eigenvalues[k], s.iprs[k], flagged as u8
            )?;
        }
    }
    Ok(())
}

/// Fields of `summary.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub max_gap: Option<f64>,
    pub max_rd: Option<f64>,
    pub defect_error: Option<f64>,
    pub decay_rho_by_alpha: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncated_max_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncated_max_rd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interface_overlaps_lowest_band: Option<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_scenario, ScenarioConfig};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn herm(rows: &[Vec<Complex64>]) -> CapacitanceMatrix {
        let n = rows.len();
        let m = Mat::from_fn(n, n, |i, j| rows[i][j]);
        hermitian_part(&CapacitanceMatrix::new(0.5, m, "t", (0..n as i64).collect()))
    }

    #[test]
    fn mass_matrix_areas() {
        let mut cfg = ScenarioConfig::new(ScenarioKind::SingleDefect);
        cfg.half_width = 2;
        let m = mass_matrix(&build_scenario(&cfg).unwrap());
        assert!((m.diagonal[0] - 0.384_845_100_064_749_4).abs() < 1e-12);
        assert!((m.diagonal[2] / m.diagonal[0] - (0.2f64 / 0.35).powi(2)).abs() < 1e-14);
        let ssh = mass_matrix(&build_scenario(&ScenarioConfig::new(ScenarioKind::Ssh)).unwrap());
        assert!((ssh.diagonal[0] - 0.282_743_338_823_081_4).abs() < 1e-12);
    }

    #[test]
    fn scalar_pencil() {
        let s = eig_pencil(&herm(&[vec![c(2.0, 0.0)]]), &MassMatrix { diagonal: vec![2.0] }).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_pencil() {
        let cm = herm(&[vec![c(2.0, 0.0), c(-1.0, 0.0)], vec![c(-1.0, 0.0), c(2.0, 0.0)]]);
        let s = eig_pencil(&cm, &MassMatrix { diagonal: vec![1.0, 1.0] }).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((s.eigenvalues[1] - 3.0).abs() < 1e-14);
        assert!((s.iprs[0] - 0.5).abs() < 1e-14);
        assert!(s.relative_residual < 1e-14);
    }

    #[test]
    fn rejects_unhermitized_input() {
        let m = Mat::from_fn(1, 1, |_, _| c(1.0, 0.0));
        let raw = CapacitanceMatrix::new(0.1, m, "t", vec![0]);
        assert_eq!(
            eig_pencil(&raw, &MassMatrix { diagonal: vec![1.0] }).unwrap_err(),
            SpectraError::NotHermitian(0.1)
        );
    }

    #[test]
    fn pencil_vectors_are_mass_orthonormal() {
        let rows = vec![
            vec![c(3.0, 0.0), c(0.5, 0.2), c(0.1, 0.0)],
            vec![c(0.5, -0.2), c(2.0, 0.0), c(0.3, -0.1)],
            vec![c(0.1, 0.0), c(0.3, 0.1), c(1.5, 0.0)],
        ];
        let mass = MassMatrix { diagonal: vec![0.5, 1.0, 2.0] };
        let s = eig_pencil(&herm(&rows), &mass).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut g = c(0.0, 0.0);
                for k in 0..3 {
                    g += s.eigenvectors[(k, i)].conj() * s.eigenvectors[(k, j)] * mass.diagonal[k];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - c(expect, 0.0)).norm() < 1e-12);
            }
        }
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.relative_residual < 1e-13);
    }

    #[test]
    fn ipr_limits() {
        let e = vec![c(0.0, 0.0), c(0.0, 2.0), c(0.0, 0.0)];
        assert!((ipr(&e).unwrap() - 1.0).abs() < 1e-15);
        let u = vec![c(0.3, 0.4); 29];
        assert!((ipr(&u).unwrap() - 1.0 / 29.0).abs() < 1e-15);
        assert_eq!(ipr(&[c(0.0, 0.0)]), Err(SpectraError::ZeroVector));
    }

    #[test]
    fn relative_difference_cases() {
        assert_eq!(relative_difference(1.0, 2.0).unwrap(), 0.5);
        assert_eq!(relative_difference(1.7, 1.7).unwrap(), 0.0);
        assert!(relative_difference(2.0, 1.0).is_err());
        assert!(relative_difference(0.0, 1.0).is_err());
        assert!(relative_difference(-1.0, 1.0).is_err());
    }

    #[test]
    fn max_gap_cases() {
        assert_eq!(max_gap(&[(1.0, 2.0), (1.0, 4.5), (2.0, 2.0)]).unwrap(), 3.5);
        assert!(max_gap(&[]).is_err());
        assert!(max_gap(&[(3.0, 2.0)]).is_err());
    }

    #[test]
    fn frequency_map() {
        let p = FrequencyParams::new(0.25, 2.0).unwrap();
        assert!((to_frequency(4.0, &p).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(to_frequency(0.0, &p).unwrap(), 0.0);
        assert!(to_frequency(-1.0, &p).is_err());
        let d = FrequencyParams::default();
        assert_eq!((to_frequency(2.5, &d).unwrap()), (1e-3f64 * 2.5).sqrt());
        assert!(FrequencyParams::new(0.0, 1.0).is_err());
        assert!(FrequencyParams::new(1e-3, -1.0).is_err());
    }

    fn small_band(kind: ScenarioKind, alphas: &[f64]) -> BandStructure {
        let mut cfg = ScenarioConfig::new(kind);
        cfg.half_width = 4;
        cfg.defect_separation = Some(1);
        let chain = build_scenario(&cfg).unwrap();
        band_sweep(
            &chain,
            alphas,
            SweepOptions {
                fourier_terms: 200,
                panels_per_disk: 16,
                truncation: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn uniform_against_itself_has_no_defects() {
        let alphas = [-PI / 2.0, PI / 3.0];
        let band = small_band(ScenarioKind::Uniform, &alphas);
        let report = classify_defects(&band, &band, DEFAULT_IPR_THRESHOLD).unwrap();
        assert!(report.defect_bands.iter().all(|m| m.is_empty()));
    }

    #[test]
    fn sweep_is_symmetric_in_alpha() {
        let band = small_band(ScenarioKind::SingleDefect, &[-2.0, 2.0]);
        assert_eq!(band.spectra.len(), 2);
        for (a, b) in band.spectra[0].eigenvalues.iter().zip(&band.spectra[1].eigenvalues) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(band.max_relative_residual() < 1e-10);
    }

    #[test]
    fn full_bandwidth_truncation_is_identity() {
        let mut cfg = ScenarioConfig::new(ScenarioKind::SingleDefect);
        cfg.half_width = 3;
        let chain = build_scenario(&cfg).unwrap();
        let cs = capacitance_sweep(&chain, &[1.0], 200, 16).unwrap();
        let mass = mass_matrix(&chain);
        let full = spectra_from_capacitance(&cs, &mass, None).unwrap();
        let same = spectra_from_capacitance(&cs, &mass, Some(6)).unwrap();
        for (a, b) in full[0].eigenvalues.iter().zip(&same[0].eigenvalues) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_rejects_zero_alpha() {
        let chain = build_scenario(&ScenarioConfig::new(ScenarioKind::Uniform)).unwrap();
        assert_eq!(
            capacitance_sweep(&chain, &[0.0], 200, 16).unwrap_err(),
            SpectraError::ZeroAlpha
        );
    }

    #[test]
    fn band_csv_shape() {
        let band = small_band(ScenarioKind::Uniform, &[1.0]);
        let mut buf = Vec::new();
        write_band_csv(&mut buf, &band, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 9);
        assert!(text.lines().nth(1).unwrap().ends_with(",0"));
    }
}
