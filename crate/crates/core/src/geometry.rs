//! Lattices, resonator chains and their boundary panels.
//!
//! Chains live in a single period strip of width `|v1| = 1`. Disk centres use
//! strip coordinates; every scenario places them at `x = 0.5` so the strip
//! walls sit at `x = 0` and `x = 1`.

use serde::{Deserialize, Serialize};
use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::fmt;
use std::hash::{Hash, Hasher};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
    #[error("inadmissible chain: {}", describe(.0))]
    Inadmissible(Vec<Violation>),
    #[error("panels_per_disk must be even and at least 8, got {0}")]
    InvalidPanelCount(usize),
}

fn describe(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Lattice vectors of the crystal and the cell height `a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub v1: [f64; 2],
    pub v2: [f64; 2],
    pub cell_height: f64,
}

impl LatticeSpec {
    pub fn new(v1: [f64; 2], v2: [f64; 2], cell_height: f64) -> Result<Self, GeometryError> {
        let det = v1[0] * v2[1] - v1[1] * v2[0];
        if det.abs() < 1e-12 {
            return Err(GeometryError::InvalidLattice(
                "v1 and v2 are linearly dependent".into(),
            ));
        }
        if ((v1[0] * v1[0] + v1[1] * v1[1]).sqrt() - 1.0).abs() > 1e-12 {
            return Err(GeometryError::InvalidLattice("|v1| must equal 1".into()));
        }
        if cell_height <= 0.0 || !cell_height.is_finite() {
            return Err(GeometryError::InvalidLattice(
                "cell_height must be positive".into(),
            ));
        }
        Ok(Self { v1, v2, cell_height })
    }

    /// `v1 = (1,0)`, `v2 = (0,1)`, `a = 1`.
    pub fn square() -> Self {
        Self {
            v1: [1.0, 0.0],
            v2: [0.0, 1.0],
            cell_height: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub index: i64,
    pub center: [f64; 2],
    pub radius: f64,
}

impl Disk {
    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }
}

/// Ordered disks of one period strip.
#[derive(Clone, Debug, PartialEq)]
pub struct ResonatorChain {
    pub lattice: LatticeSpec,
    pub disks: Vec<Disk>,
    pub scenario_name: String,
}

impl ResonatorChain {
    /// Sorts by centre height (stable) and checks admissibility.
    pub fn new(
        lattice: LatticeSpec,
        mut disks: Vec<Disk>,
        scenario_name: impl Into<String>,
    ) -> Result<Self, GeometryError> {
        disks.sort_by(|a, b| a.center[1].total_cmp(&b.center[1]));
        let chain = Self {
            lattice,
            disks,
            scenario_name: scenario_name.into(),
        };
        let report = validate_geometry(&chain);
        if report.is_empty() {
            Ok(chain)
        } else {
            Err(GeometryError::Inadmissible(report))
        }
    }

    /// Builds without validation; used to inspect inadmissible layouts.
    pub fn unchecked(
        lattice: LatticeSpec,
        mut disks: Vec<Disk>,
        scenario_name: impl Into<String>,
    ) -> Self {
        disks.sort_by(|a, b| a.center[1].total_cmp(&b.center[1]));
        Self {
            lattice,
            disks,
            scenario_name: scenario_name.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.disks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disks.is_empty()
    }

    pub fn labels(&self) -> Vec<i64> {
        self.disks.iter().map(|d| d.index).collect()
    }

    /// Position of the disk labelled `label`.
    pub fn position_of(&self, label: i64) -> Option<usize> {
        self.disks.iter().position(|d| d.index == label)
    }

    /// Every centre moved by `shift`.
    pub fn translated(&self, shift: [f64; 2]) -> Self {
        let mut out = self.clone();
        for d in &mut out.disks {
            d.center[0] += shift[0];
            d.center[1] += shift[1];
        }
        out
    }

    /// Index permutation induced by `y ↦ 2·y_mid − y`, where `y_mid` is the
    /// midpoint of the extreme centres. `None` when the disk list is not
    /// invariant under the reflection.
    pub fn mirror_permutation(&self, tol: f64) -> Option<Vec<usize>> {
        let first = self.disks.first()?;
        let last = self.disks.last()?;
        let mid = 0.5 * (first.center[1] + last.center[1]);
        let mut perm = Vec::with_capacity(self.len());
        for d in &self.disks {
            let target_y = 2.0 * mid - d.center[1];
            let j = self.disks.iter().position(|e| {
                (e.center[1] - target_y).abs() <= tol
                    && (e.center[0] - d.center[0]).abs() <= tol
                    && (e.radius - d.radius).abs() <= tol
            })?;
            perm.push(j);
        }
        Some(perm)
    }

    /// Stable identifier derived from the exact disk data.
    pub fn id(&self) -> String {
        let mut h = DefaultHasher::new();
        self.scenario_name.hash(&mut h);
        for d in &self.disks {
            d.index.hash(&mut h);
            d.center[0].to_bits().hash(&mut h);
            d.center[1].to_bits().hash(&mut h);
            d.radius.to_bits().hash(&mut h);
        }
        format!("{}-{:016x}", self.scenario_name, h.finish())
    }

    /// JSON record `{scenario, disks: [{index, cx, cy, r}]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let disks: Vec<_> = self
            .disks
            .iter()
            .map(|d| {
                serde_json::json!({
                    "index": d.index,
                    "cx": d.center[0],
                    "cy": d.center[1],
                    "r": d.radius,
                })
            })
            .collect();
        serde_json::json!({ "scenario": self.scenario_name, "disks": disks })
    }
}

/// One admissibility failure.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NonPositiveRadius { index: i64, radius: f64 },
    Overlap { first: i64, second: i64, distance: f64, radius_sum: f64 },
    /// The chain does not fit inside one strip of width 1 with positive
    /// clearance to both walls, for any horizontal placement of the walls.
    WallClearance { index: i64, clearance: f64 },
    DuplicateIndex { index: i64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveRadius { index, radius } => {
                write!(f, "disk {index} has non-positive radius {radius}")
            }
            Violation::Overlap { first, second, distance, radius_sum } => write!(
                f,
                "disks {first} and {second} overlap (centre distance {distance} <= {radius_sum})"
            ),
            Violation::WallClearance { index, clearance } => write!(
                f,
                "disk {index} leaves wall clearance {clearance} <= 0"
            ),
            Violation::DuplicateIndex { index } => write!(f, "disk index {index} repeated"),
        }
    }
}

/// Lists every overlap pair and wall-clearance failure; empty iff admissible.
///
/// Wall clearance is measured after the optimal horizontal gauge shift: the
/// walls are centred on the horizontal extent of the chain, giving clearance
/// `(1 − extent)/2` to the outermost disks.
pub fn validate_geometry(chain: &ResonatorChain) -> Vec<Violation> {
    let mut report = Vec::new();
    for d in &chain.disks {
        if !(d.radius > 0.0) {
            report.push(Violation::NonPositiveRadius {
                index: d.index,
                radius: d.radius,
            });
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for d in &chain.disks {
        if !seen.insert(d.index) {
            report.push(Violation::DuplicateIndex { index: d.index });
        }
    }
    for (i, a) in chain.disks.iter().enumerate() {
        for b in &chain.disks[i + 1..] {
            let distance = (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]);
            let radius_sum = a.radius + b.radius;
            if distance <= radius_sum {
                report.push(Violation::Overlap {
                    first: a.index,
                    second: b.index,
                    distance,
                    radius_sum,
                });
            }
        }
    }
    if !chain.disks.is_empty() {
        let left = chain
            .disks
            .iter()
            .map(|d| d.center[0] - d.radius)
            .fold(f64::INFINITY, f64::min);
        let right = chain
            .disks
            .iter()
            .map(|d| d.center[0] + d.radius)
            .fold(f64::NEG_INFINITY, f64::max);
        let clearance = 0.5 * (1.0 - (right - left));
        if clearance <= 0.0 {
            for d in &chain.disks {
                if d.center[0] - d.radius <= left + 1e-15 || d.center[0] + d.radius >= right - 1e-15 {
                    report.push(Violation::WallClearance {
                        index: d.index,
                        clearance,
                    });
                }
            }
        }
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Uniform,
    SingleDefect,
    TwoDefect,
    Ssh,
    Custom,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Uniform => "uniform",
            ScenarioKind::SingleDefect => "single_defect",
            ScenarioKind::TwoDefect => "two_defect",
            ScenarioKind::Ssh => "ssh",
            ScenarioKind::Custom => "custom",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "uniform" => ScenarioKind::Uniform,
            "single_defect" => ScenarioKind::SingleDefect,
            "two_defect" => ScenarioKind::TwoDefect,
            "ssh" => ScenarioKind::Ssh,
            "custom" => ScenarioKind::Custom,
            _ => return None,
        })
    }

    /// Number of localized modes the scenario is built to host.
    pub fn expected_defects(&self) -> usize {
        match self {
            ScenarioKind::Uniform | ScenarioKind::Custom => 0,
            ScenarioKind::SingleDefect | ScenarioKind::Ssh => 1,
            ScenarioKind::TwoDefect => 2,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Declarative experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub bulk_radius: f64,
    pub defect_radius: f64,
    pub half_width: usize,
    pub defect_separation: Option<usize>,
    pub alpha_points: usize,
    pub fourier_terms: usize,
    pub panels_per_disk: usize,
    pub band_truncation_width: usize,
    pub output_dir: std::path::PathBuf,
    /// Explicit disks for `custom` chains.
    pub custom_disks: Vec<Disk>,
}

impl ScenarioConfig {
    pub const DEFAULT_BULK_RADIUS: f64 = 0.35;
    pub const DEFAULT_DEFECT_RADIUS: f64 = 0.2;
    pub const DEFAULT_HALF_WIDTH: usize = 14;
    pub const DEFAULT_ALPHA_POINTS: usize = 80;
    pub const DEFAULT_FOURIER_TERMS: usize = 200;
    pub const DEFAULT_PANELS: usize = 64;
    pub const DEFAULT_TRUNCATION_WIDTH: usize = 1;

    pub fn new(scenario: ScenarioKind) -> Self {
        Self {
            scenario,
            bulk_radius: Self::DEFAULT_BULK_RADIUS,
            defect_radius: Self::DEFAULT_DEFECT_RADIUS,
            half_width: Self::DEFAULT_HALF_WIDTH,
            defect_separation: None,
            alpha_points: Self::DEFAULT_ALPHA_POINTS,
            fourier_terms: Self::DEFAULT_FOURIER_TERMS,
            panels_per_disk: Self::DEFAULT_PANELS,
            band_truncation_width: Self::DEFAULT_TRUNCATION_WIDTH,
            output_dir: std::path::PathBuf::from("out"),
            custom_disks: Vec::new(),
        }
    }

    /// Range checks shared by the builders and the config parser. Returns the
    /// offending key on failure.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let fail = |key: &str, msg: String| Err((key.to_string(), msg));
        if self.alpha_points < 2 {
            return fail("alpha_points", format!("must be >= 2, got {}", self.alpha_points));
        }
        if self.fourier_terms < 1 {
            return fail("fourier_terms", "must be >= 1".into());
        }
        if self.panels_per_disk < 8 || self.panels_per_disk % 2 != 0 {
            return fail(
                "panels_per_disk",
                format!("must be even and >= 8, got {}", self.panels_per_disk),
            );
        }
        if self.half_width < 1 && self.scenario != ScenarioKind::Custom {
            return fail("half_width", "must be >= 1".into());
        }
        if !(self.bulk_radius > 0.0 && self.bulk_radius < 0.5) {
            return fail(
                "bulk_radius",
                format!("must lie in (0, 0.5), got {}", self.bulk_radius),
            );
        }
        if !(self.defect_radius > 0.0 && self.defect_radius < 0.5) {
            return fail(
                "defect_radius",
                format!("must lie in (0, 0.5), got {}", self.defect_radius),
            );
        }
        if self.scenario == ScenarioKind::TwoDefect {
            match self.defect_separation {
                None => return fail("defect_separation", "required for two_defect".into()),
                Some(0) => return fail("defect_separation", "must be >= 1".into()),
                Some(l) if l > self.half_width => {
                    return fail(
                        "defect_separation",
                        format!("must not exceed half_width = {}", self.half_width),
                    )
                }
                _ => {}
            }
        }
        if self.scenario == ScenarioKind::Custom && self.custom_disks.is_empty() {
            return fail("disks", "custom scenario needs at least one disk".into());
        }
        Ok(())
    }
}

/// Heights of the 60-disk dimerized chain with a domain wall at `y = 0`.
///
/// Upper half: cells `[2n−2, 2n]`, disks at `2n − 1.65` and `2n − 0.35`
/// (inter-cell spacing 0.7). Lower half: cells `[2n, 2n+2]` for `n = −15..−1`,
/// disks at `2n + 0.65` and `2n + 1.35` (intra-cell spacing 0.7).
pub fn ssh_heights() -> Vec<f64> {
    let mut ys = Vec::with_capacity(60);
    for n in -15i32..=-1 {
        let base = 2.0 * n as f64;
        ys.push(base + 0.65);
        ys.push(base + 1.35);
    }
    for n in 1i32..=15 {
        let base = 2.0 * n as f64;
        ys.push(base - 1.65);
        ys.push(base - 0.35);
    }
    ys
}

pub const SSH_RADIUS: f64 = 0.3;

/// The two half-chains with the unflipped lower-half formula
/// (`x = 0`, lower half at `−2n + 0.65`, `−2n + 1.35`). These interleave with
/// the upper half and overlap; kept for validation diagnostics.
pub fn ssh_literal_chain() -> ResonatorChain {
    let mut disks = Vec::new();
    let mut label = 0i64;
    let mut push = |y: f64, disks: &mut Vec<Disk>| {
        disks.push(Disk {
            index: label,
            center: [0.0, y],
            radius: SSH_RADIUS,
        });
        label += 1;
    };
    for n in -15i32..=-1 {
        let nf = n as f64;
        push(-2.0 * nf + 0.65, &mut disks);
        push(-2.0 * nf + 1.35, &mut disks);
    }
    for n in 1i32..=15 {
        let nf = n as f64;
        push(2.0 * nf - 1.65, &mut disks);
        push(2.0 * nf - 0.35, &mut disks);
    }
    ResonatorChain::unchecked(LatticeSpec::square(), disks, "ssh_literal")
}

/// Disk list for the configured scenario.
pub fn build_scenario(config: &ScenarioConfig) -> Result<ResonatorChain, GeometryError> {
    config
        .validate()
        .map_err(|(key, msg)| GeometryError::InvalidConfig(format!("{key}: {msg}")))?;
    let lattice = LatticeSpec::square();
    let name = config.scenario.name();
    let hw = config.half_width as i64;
    let row = |radius_of: &dyn Fn(i64) -> f64| -> Vec<Disk> {
        (-hw..=hw)
            .map(|n| Disk {
                index: n,
                center: [0.5, n as f64 + 0.5],
                radius: radius_of(n),
            })
            .collect()
    };
    let disks = match config.scenario {
        ScenarioKind::Uniform => row(&|_| config.bulk_radius),
        ScenarioKind::SingleDefect => row(&|n| {
            if n == 0 {
                config.defect_radius
            } else {
                config.bulk_radius
            }
        }),
        ScenarioKind::TwoDefect => {
            let l = config.defect_separation.unwrap_or(1) as i64;
            row(&|n| {
                if n.abs() == l {
                    config.defect_radius
                } else {
                    config.bulk_radius
                }
            })
        }
        ScenarioKind::Ssh => {
            // labels count outward from the domain wall: ..., -2, -1 | 0, 1, ...
            let heights = ssh_heights();
            let half = heights.len() as i64 / 2;
            heights
                .iter()
                .enumerate()
                .map(|(i, &y)| Disk {
                    index: i as i64 - half,
                    center: [0.5, y],
                    radius: SSH_RADIUS,
                })
                .collect()
        }
        ScenarioKind::Custom => config.custom_disks.clone(),
    };
    ResonatorChain::new(lattice, disks, name)
}

/// One boundary element: an equal-arc piece of a circle.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    /// Position of the parent disk in the chain.
    pub parent_disk: usize,
    /// Collocation point at the arc midpoint.
    pub node: [f64; 2],
    /// Outward unit normal at `node`.
    pub normal: [f64; 2],
    /// Arc length.
    pub weight: f64,
    /// Polar angle of `node` about the disk centre.
    pub angle: f64,
}

/// Panels of every disk, grouped disk by disk.
#[derive(Clone, Debug)]
pub struct BoundaryMesh {
    pub panels: Vec<Panel>,
    pub panels_per_disk: usize,
    pub disks: Vec<Disk>,
    pub mesh_id: String,
}

impl BoundaryMesh {
    pub fn num_disks(&self) -> usize {
        self.disks.len()
    }

    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    /// Panel index range of disk `d`.
    pub fn disk_range(&self, d: usize) -> std::ops::Range<usize> {
        d * self.panels_per_disk..(d + 1) * self.panels_per_disk
    }

    /// Angular width of every panel.
    pub fn panel_angle(&self) -> f64 {
        2.0 * PI / self.panels_per_disk as f64
    }
}

/// Equal-arc panels with nodes at arc midpoints, angles `2π(k + ½)/P`.
pub fn discretize(
    chain: &ResonatorChain,
    panels_per_disk: usize,
) -> Result<BoundaryMesh, GeometryError> {
    if panels_per_disk < 8 || panels_per_disk % 2 != 0 {
        return Err(GeometryError::InvalidPanelCount(panels_per_disk));
    }
    let step = 2.0 * PI / panels_per_disk as f64;
    let mut panels = Vec::with_capacity(chain.len() * panels_per_disk);
    for (d, disk) in chain.disks.iter().enumerate() {
        let weight = 2.0 * PI * disk.radius / panels_per_disk as f64;
        for k in 0..panels_per_disk {
            let angle = step * (k as f64 + 0.5);
            let (s, c) = angle.sin_cos();
            panels.push(Panel {
                parent_disk: d,
                node: [disk.center[0] + disk.radius * c, disk.center[1] + disk.radius * s],
                normal: [c, s],
                weight,
                angle,
            });
        }
    }
    Ok(BoundaryMesh {
        panels,
        panels_per_disk,
        disks: chain.disks.clone(),
        mesh_id: format!("{}/p{}", chain.id(), panels_per_disk),
    })
}
