//! Piecewise-constant collocation for the quasi-periodic single layer.
//!
//! Off-disk panel pairs use Gauss–Legendre on the spectral series. On a single
//! disk the kernel is split as `ln|x − y|/2π + R(x − y)`; with
//! `|x − y| = 2r|sin(s/2)|` the logarithm becomes `ln|s| + ln(2r sin(|s|/2)/|s|)`,
//! the first integrated exactly and the second, like `R`, by Gauss rules that
//! are refined on the self and adjacent panels.
//!
//! Disk-pair blocks depend only on the centre offset and the two radii, so
//! identical blocks (every translate in a uniform chain) are computed once.

use crate::capmat::CapacitanceMatrix;
use crate::geometry::BoundaryMesh;
use crate::qpgreen::{GreenError, GreenParams, KernelTables};
use crate::quadrature::GaussLegendre;
use faer::linalg::solvers::PartialPivLu;
use faer::prelude::*;
use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

/// Condition estimates above this mark the system as numerically singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BemError {
    #[error(transparent)]
    Green(#[from] GreenError),
    #[error("non-finite single-layer entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("near-singular single-layer system at alpha = {alpha}: condition estimate {estimate:.3e}")]
    NearSingular { alpha: f64, estimate: f64 },
    #[error("density residual {residual:.3e} exceeds {bound:.3e}")]
    Residual { residual: f64, bound: f64 },
    #[error("mesh mismatch: matrix built for {expected}, got {found}")]
    MeshMismatch { expected: String, found: String },
}

/// Gauss orders for the panel integrals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadratureOrders {
    /// Source panel on a different disk.
    pub off_disk: usize,
    /// Same disk, neither self nor adjacent.
    pub same_disk: usize,
    /// Panels adjacent to the target panel.
    pub adjacent: usize,
    /// Each half of the self panel, split at the target node.
    pub self_half: usize,
}

impl Default for QuadratureOrders {
    fn default() -> Self {
        Self {
            off_disk: 4,
            same_disk: 4,
            adjacent: 8,
            self_half: 8,
        }
    }
}

/// Discretized single-layer operator: `S[i][j] ≈ ∫_{panel j} G(node_i − y) dσ(y)`.
#[derive(Clone, Debug)]
pub struct SingleLayerMatrix {
    pub entries: Mat<Complex64>,
    pub params: GreenParams,
    pub mesh_id: String,
}

impl SingleLayerMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Max row sum of moduli.
    pub fn inf_norm(&self) -> f64 {
        inf_norm(&self.entries)
    }
}

/// Boundary densities `φ_n` for every disk, one column per disk.
#[derive(Clone, Debug)]
pub struct DensitySet {
    /// `P × N`.
    pub densities: Mat<Complex64>,
    pub params: GreenParams,
    pub mesh_id: String,
    /// `max_n ‖S φ_n − e_n‖_∞`.
    pub residual: f64,
    /// 1-norm condition estimate of the system matrix.
    pub condition: f64,
}

fn inf_norm(m: &Mat<Complex64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn one_norm(m: &Mat<Complex64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Quadrature orders and whether disk-pair blocks are computed on the rayon
/// pool. Sweeps that already run α values concurrently turn the latter off so
/// that a waiting worker does not start yet another dense assembly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssemblyOptions {
    pub orders: QuadratureOrders,
    pub parallel_blocks: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            orders: QuadratureOrders::default(),
            parallel_blocks: true,
        }
    }
}

pub fn assemble(mesh: &BoundaryMesh, params: &GreenParams) -> Result<SingleLayerMatrix, BemError> {
    assemble_with(mesh, params, AssemblyOptions::default())
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct BlockKey([u64; 4]);

impl BlockKey {
    fn new(offset: [f64; 2], target_radius: f64, source_radius: f64) -> Self {
        // +0.0 and -0.0 must share a block
        let canon = |v: f64| if v == 0.0 { 0u64 } else { v.to_bits() };
        Self([
            canon(offset[0]),
            canon(offset[1]),
            target_radius.to_bits(),
            source_radius.to_bits(),
        ])
    }
}

struct BlockJob {
    offset: [f64; 2],
    target_radius: f64,
    source_radius: f64,
    same_disk: bool,
}

pub fn assemble_with(
    mesh: &BoundaryMesh,
    params: &GreenParams,
    opts: AssemblyOptions,
) -> Result<SingleLayerMatrix, BemError> {
    let tables = KernelTables::new(params)?;
    let nd = mesh.num_disks();
    let per = mesh.panels_per_disk;

    let mut index = HashMap::new();
    let mut jobs: Vec<BlockJob> = Vec::new();
    let mut block_of = vec![0usize; nd * nd];
    for q in 0..nd {
        for n in 0..nd {
            let dq = &mesh.disks[q];
            let dn = &mesh.disks[n];
            let offset = if q == n {
                [0.0, 0.0]
            } else {
                [dq.center[0] - dn.center[0], dq.center[1] - dn.center[1]]
            };
            let key = BlockKey::new(offset, dq.radius, dn.radius);
            let id = *index.entry((key, q == n)).or_insert_with(|| {
                jobs.push(BlockJob {
                    offset,
                    target_radius: dq.radius,
                    source_radius: dn.radius,
                    same_disk: q == n,
                });
                jobs.len() - 1
            });
            block_of[q * nd + n] = id;
        }
    }

    let rules = Rules::new(opts.orders);
    let compute = |job: &BlockJob| {
        clear_upper_simd_state();
        if job.same_disk {
            same_disk_block(&tables, job.target_radius, per, &rules)
        } else {
            off_disk_block(&tables, job, per, &rules)
        }
    };
    let blocks: Vec<Vec<Complex64>> = if opts.parallel_blocks {
        jobs.par_iter().map(compute).collect()
    } else {
        jobs.iter().map(compute).collect()
    };

    let total = nd * per;
    let mut entries = Mat::<Complex64>::zeros(total, total);
    for q in 0..nd {
        for n in 0..nd {
            let block = &blocks[block_of[q * nd + n]];
            for j in 0..per {
                for i in 0..per {
                    entries[(q * per + i, n * per + j)] = block[i * per + j];
                }
            }
        }
    }
    for j in 0..total {
        for i in 0..total {
            let v = entries[(i, j)];
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(BemError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(SingleLayerMatrix {
        entries,
        params: *params,
        mesh_id: mesh.mesh_id.clone(),
    })
}

/// Dense factorizations leave the upper halves of the AVX registers dirty on
/// the calling thread, after which the scalar SSE code of the kernel loops runs
/// several times slower on common x86 cores. `vzeroupper` resets that state.
#[inline]
fn clear_upper_simd_state() {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx") {
            // SAFETY: guarded by the runtime feature check above.
            unsafe { zero_upper() }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn zero_upper() {
    std::arch::x86_64::_mm256_zeroupper();
}

struct Rules {
    off_disk: GaussLegendre,
    same_disk: GaussLegendre,
    adjacent: GaussLegendre,
    self_half: GaussLegendre,
}

impl Rules {
    fn new(o: QuadratureOrders) -> Self {
        Self {
            off_disk: GaussLegendre::new(o.off_disk),
            same_disk: GaussLegendre::new(o.same_disk),
            adjacent: GaussLegendre::new(o.adjacent),
            self_half: GaussLegendre::new(o.self_half),
        }
    }
}

fn node_angle(i: usize, per: usize) -> f64 {
    2.0 * PI * (i as f64 + 0.5) / per as f64
}

/// Row-major `per × per` block, target panel index first.
fn off_disk_block(
    tables: &KernelTables,
    job: &BlockJob,
    per: usize,
    rules: &Rules,
) -> Vec<Complex64> {
    let h = 2.0 * PI / per as f64;
    let rs = job.source_radius;
    let rt = job.target_radius;
    // source quadrature points relative to the source centre
    let mut sources = Vec::with_capacity(per * rules.off_disk.len());
    for j in 0..per {
        let c = node_angle(j, per);
        for (theta, w) in rules.off_disk.mapped(c - 0.5 * h, c + 0.5 * h) {
            let (s, co) = theta.sin_cos();
            sources.push(([rs * co, rs * s], rs * w));
        }
    }
    let g = rules.off_disk.len();
    let mut out = vec![Complex64::new(0.0, 0.0); per * per];
    for i in 0..per {
        let (s, c) = node_angle(i, per).sin_cos();
        let x = [job.offset[0] + rt * c, job.offset[1] + rt * s];
        for j in 0..per {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(y, w) in &sources[j * g..(j + 1) * g] {
                acc += tables.series([x[0] - y[0], x[1] - y[1]]) * w;
            }
            out[i * per + j] = acc;
        }
    }
    out
}

/// `t ln|t| − t`, an antiderivative of `ln|t|`.
fn log_antiderivative(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t.abs().ln() - t
    }
}

/// `ln(2r sin(|s|/2)/|s|)`, smooth for `|s| < 2π`.
fn log_ratio(r: f64, s: f64) -> f64 {
    let a = s.abs();
    if a < 1e-8 {
        r.ln() - a * a / 24.0
    } else {
        (2.0 * r * (0.5 * a).sin() / a).ln()
    }
}

fn same_disk_block(tables: &KernelTables, r: f64, per: usize, rules: &Rules) -> Vec<Complex64> {
    let h = 2.0 * PI / per as f64;
    let inv_2pi = 1.0 / (2.0 * PI);
    let mut out = vec![Complex64::new(0.0, 0.0); per * per];
    for i in 0..per {
        let ti = node_angle(i, per);
        for j in 0..per {
            let gap = (j + per - i) % per;
            // signed panel-centre offset in (−π, π]
            let sc = if gap <= per / 2 {
                gap as f64 * h
            } else {
                (gap as f64 - per as f64) * h
            };
            let (a, b) = (sc - 0.5 * h, sc + 0.5 * h);
            let smooth = |s: f64| -> Complex64 {
                let half = 0.5 * s;
                let chord = 2.0 * r * half.sin();
                let (sp, cp) = (ti + half).sin_cos();
                let x = [chord * sp, -chord * cp];
                tables.remainder(x) + log_ratio(r, s) * inv_2pi
            };
            let mut acc = Complex64::new(0.0, 0.0);
            let mut integrate = |rule: &GaussLegendre, lo: f64, hi: f64| {
                for (s, w) in rule.mapped(lo, hi) {
                    acc += smooth(s) * w;
                }
            };
            if gap == 0 {
                integrate(&rules.self_half, a, 0.0);
                integrate(&rules.self_half, 0.0, b);
            } else if gap == 1 || gap == per - 1 {
                integrate(&rules.adjacent, a, b);
            } else {
                integrate(&rules.same_disk, a, b);
            }
            let log_part = (log_antiderivative(b) - log_antiderivative(a)) * inv_2pi;
            out[i * per + j] = (acc + log_part) * r;
        }
    }
    out
}

/// `S[φ](point)` for a point off the boundary, by `order`-point Gauss on every
/// panel with the full kernel.
pub fn evaluate_potential(
    mesh: &BoundaryMesh,
    tables: &KernelTables,
    density: &[Complex64],
    point: [f64; 2],
    order: usize,
) -> Complex64 {
    clear_upper_simd_state();
    let rule = GaussLegendre::new(order);
    let h = mesh.panel_angle();
    let mut acc = Complex64::new(0.0, 0.0);
    for (p, phi) in mesh.panels.iter().zip(density) {
        let disk = &mesh.disks[p.parent_disk];
        let mut panel = Complex64::new(0.0, 0.0);
        for (theta, w) in rule.mapped(p.angle - 0.5 * h, p.angle + 0.5 * h) {
            let (s, c) = theta.sin_cos();
            let y = [disk.center[0] + disk.radius * c, disk.center[1] + disk.radius * s];
            panel += tables.accelerated([point[0] - y[0], point[1] - y[1]]) * (w * disk.radius);
        }
        acc += panel * phi;
    }
    acc
}

/// Indicator vectors of every disk's panels, `P × N`.
pub fn indicator_rhs(mesh: &BoundaryMesh) -> Mat<Complex64> {
    let per = mesh.panels_per_disk;
    Mat::from_fn(mesh.len(), mesh.num_disks(), |i, n| {
        if i / per == n {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Solves `S φ_n = e_n` for every disk with a single pivoted LU.
pub fn solve_densities(s: &SingleLayerMatrix, mesh: &BoundaryMesh) -> Result<DensitySet, BemError> {
    if s.mesh_id != mesh.mesh_id || s.dim() != mesh.len() {
        return Err(BemError::MeshMismatch {
            expected: s.mesh_id.clone(),
            found: mesh.mesh_id.clone(),
        });
    }
    let lu = s.entries.partial_piv_lu();
    let condition = one_norm(&s.entries) * inverse_one_norm_estimate(&lu, s.dim());
    if !(condition <= SINGULAR_CONDITION) {
        return Err(BemError::NearSingular {
            alpha: s.params.alpha,
            estimate: condition,
        });
    }
    let rhs = indicator_rhs(mesh);
    let mut phi = rhs.clone();
    lu.solve_in_place(phi.as_mut());

    let applied = &s.entries * &phi;
    let mut residual = 0.0f64;
    for j in 0..phi.ncols() {
        for i in 0..phi.nrows() {
            residual = residual.max((applied[(i, j)] - rhs[(i, j)]).norm());
        }
    }
    let bound = 1e-10 * s.inf_norm();
    if !(residual < bound) {
        return Err(BemError::Residual { residual, bound });
    }
    Ok(DensitySet {
        densities: phi,
        params: s.params,
        mesh_id: s.mesh_id.clone(),
        residual,
        condition,
    })
}

/// `Ĉ[q][n] = −Σ_{j ∈ ∂D_q} w_j φ_n(j)`.
pub fn capacitance(densities: &DensitySet, mesh: &BoundaryMesh) -> CapacitanceMatrix {
    let nd = mesh.num_disks();
    let per = mesh.panels_per_disk;
    let phi = &densities.densities;
    let entries = Mat::from_fn(nd, nd, |q, n| {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in mesh.disk_range(q) {
            acc += phi[(j, n)] * mesh.panels[j].weight;
        }
        debug_assert_eq!(mesh.disk_range(q).len(), per);
        -acc
    });
    CapacitanceMatrix::new(
        densities.params.alpha,
        entries,
        mesh.mesh_id.clone(),
        mesh.disks.iter().map(|d| d.index).collect(),
    )
}

/// Assembly, solve and flux sum in one call.
pub fn capacitance_at(mesh: &BoundaryMesh, params: &GreenParams) -> Result<CapacitanceMatrix, BemError> {
    capacitance_with(mesh, params, AssemblyOptions::default())
}

pub fn capacitance_with(
    mesh: &BoundaryMesh,
    params: &GreenParams,
    opts: AssemblyOptions,
) -> Result<CapacitanceMatrix, BemError> {
    let s = assemble_with(mesh, params, opts)?;
    let d = solve_densities(&s, mesh)?;
    Ok(capacitance(&d, mesh))
}

/// 1-norm condition estimate `‖S‖₁ · est(‖S⁻¹‖₁)`.
pub fn condition_estimate(s: &SingleLayerMatrix) -> f64 {
    condition_estimate_of(&s.entries)
}

pub fn condition_estimate_of(a: &Mat<Complex64>) -> f64 {
    let lu = a.partial_piv_lu();
    one_norm(a) * inverse_one_norm_estimate(&lu, a.nrows())
}

/// Hager's estimator with Higham's complex sign vectors and alternative
/// probe, applied to `A⁻¹` through the LU factors.
fn inverse_one_norm_estimate(lu: &PartialPivLu<Complex64>, n: usize) -> f64 {
    let col_norm = |v: &Mat<Complex64>| (0..n).map(|i| v[(i, 0)].norm()).sum::<f64>();
    let mut x = Mat::<Complex64>::from_fn(n, 1, |_, _| Complex64::new(1.0 / n as f64, 0.0));
    let mut estimate = 0.0f64;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        lu.solve_in_place(x.as_mut());
        let y = x.clone();
        estimate = estimate.max(col_norm(&y));
        let mut z = Mat::<Complex64>::from_fn(n, 1, |i, _| {
            let v = y[(i, 0)];
            let m = v.norm();
            if m == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                v / m
            }
        });
        lu.solve_adjoint_in_place(z.as_mut());
        let (mut j, mut zmax) = (0, 0.0);
        for i in 0..n {
            if z[(i, 0)].norm() > zmax {
                zmax = z[(i, 0)].norm();
                j = i;
            }
        }
        if j == last_j {
            break;
        }
        last_j = j;
        x = Mat::from_fn(n, 1, |i, _| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
    }
    let mut alt = Mat::<Complex64>::from_fn(n, 1, |i, _| {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let ramp = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        Complex64::new(sign * (1.0 + ramp), 0.0)
    });
    lu.solve_in_place(alt.as_mut());
    estimate.max(2.0 * col_norm(&alt) / (3.0 * n as f64))
}

/// Debug record `{mesh_id, alpha, matrix, densities}`; complex values are
/// `[re, im]` pairs, matrices are arrays of rows.
pub fn write_debug_json<W: Write>(
    w: W,
    s: &SingleLayerMatrix,
    densities: Option<&DensitySet>,
) -> serde_json::Result<()> {
    let rows = |m: &Mat<Complex64>| -> Vec<Vec<[f64; 2]>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect()
    };
    let value = serde_json::json!({
        "mesh_id": s.mesh_id,
        "alpha": s.params.alpha,
        "fourier_terms": s.params.fourier_terms,
        "matrix": rows(&s.entries),
        "densities": densities.map(|d| rows(&d.densities)),
    });
    serde_json::to_writer(w, &value)
}
