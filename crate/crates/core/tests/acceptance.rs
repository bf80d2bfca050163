//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs the full default-resolution sweeps (80 grid points, 64 panels,
//! M = 200), so it takes several minutes. Failing criteria are reported, not
//! hidden; set `SUBWAVE_ACCEPTANCE_STRICT=1` to turn any FAIL into a nonzero
//! exit status.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subwave::capmat::{
    alpha_dft, alpha_grid, fit_decay, hermitian_part, linear_fit, CapacitanceMatrix,
};
use subwave::geometry::{build_scenario, ResonatorChain, ScenarioConfig, ScenarioKind};
use subwave::qpgreen::{eval_series, GreenParams, KernelTables};
use subwave::spectra::{
    band_from_capacitance, capacitance_sweep, classify_defects, classify_interface, defect_error,
    BandStructure, DefectReport, SweepOptions, DEFAULT_IPR_THRESHOLD,
};

const ALPHA_POINTS: usize = 80;
const PANELS: usize = 64;
const TERMS: usize = 200;

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Ledger {
    outcomes: Vec<Outcome>,
}

impl Ledger {
    fn record(&mut self, id: usize, pass: bool, detail: String) {
        println!("criterion {id}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
        self.outcomes.push(Outcome { id, pass, detail });
    }
}

fn chain(kind: ScenarioKind, l: Option<usize>) -> ResonatorChain {
    let mut cfg = ScenarioConfig::new(kind);
    cfg.defect_separation = l;
    build_scenario(&cfg).expect("default scenarios are admissible")
}

fn opts(truncation: Option<usize>) -> SweepOptions {
    SweepOptions {
        fourier_terms: TERMS,
        panels_per_disk: PANELS,
        truncation,
    }
}

struct Sweep {
    matrices: Vec<CapacitanceMatrix>,
    full: BandStructure,
    truncated: BandStructure,
    seconds: f64,
}

fn sweep(chain: &ResonatorChain, grid: &[f64]) -> Sweep {
    let start = Instant::now();
    let matrices = capacitance_sweep(chain, grid, TERMS, PANELS).expect("sweep");
    let full = band_from_capacitance(chain, &matrices, opts(None)).expect("full band");
    let truncated = band_from_capacitance(chain, &matrices, opts(Some(1))).expect("truncated band");
    let seconds = start.elapsed().as_secs_f64();
    println!("  [{}: {} grid points in {seconds:.1} s]", chain.scenario_name, grid.len());
    Sweep {
        matrices,
        full,
        truncated,
        seconds,
    }
}

fn defects(s: &Sweep, reference: &Sweep) -> (DefectReport, DefectReport) {
    (
        classify_defects(&s.full, &reference.full, DEFAULT_IPR_THRESHOLD).expect("full classification"),
        classify_defects(&s.truncated, &reference.truncated, DEFAULT_IPR_THRESHOLD)
            .expect("truncated classification"),
    )
}

/// Direct spectral sum, written independently of the library.
fn oracle_series(alpha: f64, m: i64, x: [f64; 2]) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for k in 0..=m {
        for kk in if k == 0 { vec![0] } else { vec![k, -k] } {
            let xi = 2.0 * PI * kk as f64 + alpha;
            s -= Complex64::from_polar(1.0, xi * x[0]) * (-xi.abs() * x[1].abs()).exp() / (2.0 * xi.abs());
        }
    }
    s
}

fn criterion_6(ledger: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut identity = 0.0f64;
    for _ in 0..100 {
        let alpha = rng.random_range(0.05..PI) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let x = [rng.random_range(-0.5..0.5), rng.random_range(-0.8..0.8)];
        let p = GreenParams::new(alpha, TERMS).unwrap();
        let q = GreenParams::new(-alpha, TERMS).unwrap();
        let g = eval_series(&p, x).unwrap();
        let scale = g.norm().max(1.0);
        let shifted = eval_series(&p, [x[0] + 1.0, x[1]]).unwrap();
        let quasi = (shifted - Complex64::from_polar(1.0, alpha) * g).norm();
        let even = (eval_series(&p, [x[0], -x[1]]).unwrap() - g).norm();
        let conj = (eval_series(&q, x).unwrap() - g.conj()).norm();
        let tp = KernelTables::new(&p).unwrap();
        let tq = KernelTables::new(&q).unwrap();
        let a = tp.accelerated(x);
        let even_acc = (tp.accelerated([x[0], -x[1]]) - a).norm();
        let conj_acc = (tq.accelerated(x) - a.conj()).norm();
        identity = identity.max([quasi, even, conj, even_acc, conj_acc].into_iter().fold(0.0, f64::max) / scale);
    }
    let mut split = 0.0f64;
    let mut n = 0;
    while n < 100 {
        let x: [f64; 2] = [rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)];
        let r = x[0].hypot(x[1]);
        if !(0.05..=0.4).contains(&r) || x[1].abs() < 0.005 {
            continue;
        }
        n += 1;
        let alpha = rng.random_range(0.05..PI) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let tables = KernelTables::new(&GreenParams::new(alpha, 2000).unwrap()).unwrap();
        let reference = oracle_series(alpha, 2000, x);
        split = split.max((tables.accelerated(x) - reference).norm() / reference.norm().max(1.0));
    }
    ledger.record(
        6,
        identity <= 1e-13 && split <= 1e-9,
        format!("identities max rel {identity:.2e} (tol 1e-13); split vs M=2000 series max rel {split:.2e} (tol 1e-9)"),
    );
}

fn criterion_3(ledger: &mut Ledger, uniform: &ResonatorChain) {
    let alphas = [PI / 4.0, PI / 2.0, 3.0 * PI / 4.0];
    let cs = capacitance_sweep(uniform, &alphas, TERMS, PANELS).expect("decay sweep");
    let mut pass = true;
    let mut parts = Vec::new();
    for c in &cs {
        let fit = fit_decay(&hermitian_part(c), 5).expect("decay fit");
        pass &= fit.log_linear_r2 > 0.99 && fit.rho < 1.0;
        parts.push(format!("α={:.4}: ρ={:.3e} r²={:.5}", c.alpha, fit.rho, fit.log_linear_r2));
    }
    ledger.record(3, pass, parts.join("; "));
}

fn criterion_4(ledger: &mut Ledger, uniform: &Sweep) {
    let slice = alpha_dft(&uniform.matrices, 0, 0, 6).expect("dft");
    let xs: Vec<f64> = slice.p_offsets.iter().map(|p| p.unsigned_abs() as f64).collect();
    let ys: Vec<f64> = slice.entries.iter().map(|z| z.norm().ln()).collect();
    let (slope, _, r2) = linear_fit(&xs, &ys);
    let max = slice.entries.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let residue = slice.imaginary_residue() / max;
    let mags: Vec<String> = (0..=6).map(|p| format!("{:.2e}", slice.at(p).unwrap().norm())).collect();
    ledger.record(
        4,
        r2 > 0.99 && residue < 1e-8,
        format!(
            "log-linear r² {r2:.4} (need > 0.99), slope {slope:.3}; imaginary residue {residue:.2e}; |C^p| p=0..6: {}",
            mags.join(" ")
        ),
    );
}

fn criterion_1(ledger: &mut Ledger, single: &Sweep, uniform: &Sweep) {
    let (rf, rt) = defects(single, uniform);
    let e = defect_error(&rf, &rt).expect("defect error");
    let target = 0.02655;
    ledger.record(
        1,
        ((e - target) / target).abs() <= 0.10,
        format!(
            "max |λ − λ_t| = {e:.6} vs {target} (±10%); single-defect sweep {:.0} s",
            single.seconds
        ),
    );
}

struct Table1 {
    gap: f64,
    rd: f64,
    gap_t: f64,
    rd_t: f64,
}

fn table_row(s: &Sweep, uniform: &Sweep) -> Table1 {
    let (rf, rt) = defects(s, uniform);
    Table1 {
        gap: rf.max_gap.unwrap(),
        rd: rf.max_relative_difference.unwrap(),
        gap_t: rt.max_gap.unwrap(),
        rd_t: rt.max_relative_difference.unwrap(),
    }
}

/// Reference rows `(gap, rd %, truncated gap, truncated rd %)` keyed by `l`.
const TABLE1: [(usize, [f64; 4]); 3] = [
    (1, [3.55087, 11.26227, 3.59281, 11.38087]),
    (3, [0.41703, 1.37087, 0.42113, 1.38304]),
    (5, [5.40939e-2, 0.17881, 5.46282e-2, 0.18042]),
];

fn compare_row(got: &Table1, want: &[f64; 4]) -> (bool, String) {
    let gap_ok = |g: f64, w: f64| ((g - w) / w).abs() <= 0.02;
    let rd_ok = |r: f64, w: f64| (100.0 * r - w).abs() <= 0.5;
    let ok = gap_ok(got.gap, want[0]) && rd_ok(got.rd, want[1]) && gap_ok(got.gap_t, want[2]) && rd_ok(got.rd_t, want[3]);
    (
        ok,
        format!(
            "gap {:.5e}/{:.5e}, rd {:.5}%/{:.5}%, gap_t {:.5e}/{:.5e}, rd_t {:.5}%/{:.5}%",
            got.gap,
            want[0],
            100.0 * got.rd,
            want[1],
            got.gap_t,
            want[2],
            100.0 * got.rd_t,
            want[3]
        ),
    )
}

fn criterion_2(ledger: &mut Ledger, rows: &[(usize, Table1)]) {
    let find = |l: usize| &rows.iter().find(|r| r.0 == l).unwrap().1;
    let mut pass = true;
    let mut parts = Vec::new();
    for (l, want) in TABLE1 {
        let (ok, text) = compare_row(find(l), &want);
        pass &= ok;
        parts.push(format!("l={l} [{}] {text}", if ok { "ok" } else { "off" }));
    }
    ledger.record(2, pass, parts.join("; "));
    // The reference l behaves like (centre distance − 1); separations 1, 2, 3
    // are printed against the same rows for information.
    for ((_, want), sep) in TABLE1.iter().zip([1usize, 2, 3]) {
        let (ok, text) = compare_row(find(sep), want);
        println!(
            "  info: defects at n = ±{sep} against the reference row l = {}: {} {text}",
            2 * sep - 1,
            if ok { "within tolerance" } else { "outside tolerance" }
        );
    }
}

fn criterion_5(ledger: &mut Ledger, ssh: &Sweep, wall: usize) {
    match classify_interface(&ssh.full, wall, DEFAULT_IPR_THRESHOLD, 2.0) {
        Ok(report) => {
            let lo = report
                .defect_bands
                .iter()
                .flat_map(|m| m.iter().map(|d| d.eigenvalue))
                .fold(f64::INFINITY, f64::min);
            let hi = report
                .defect_bands
                .iter()
                .flat_map(|m| m.iter().map(|d| d.eigenvalue))
                .fold(0.0, f64::max);
            let min_ipr = report
                .defect_bands
                .iter()
                .map(|m| m.iter().map(|d| d.ipr).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min);
            ledger.record(
                5,
                true,
                format!(
                    "interface mode at all {} grid points, band [{lo:.4}, {hi:.4}], min IPR {min_ipr:.3}, overlaps lowest band: {:?}; sweep {:.0} s",
                    report.alpha_grid.len(),
                    report.overlaps_lowest_band,
                    ssh.seconds
                ),
            );
        }
        Err(e) => ledger.record(5, false, format!("{e}")),
    }
}

fn top_localized(c: &CapacitanceMatrix, chain: &ResonatorChain) -> f64 {
    let band = band_from_capacitance(chain, std::slice::from_ref(c), opts(None)).unwrap();
    let s = &band.spectra[0];
    let k = (0..s.len()).max_by(|&a, &b| s.iprs[a].total_cmp(&s.iprs[b])).unwrap();
    s.eigenvalues[k]
}

fn criterion_7(ledger: &mut Ledger, single: &ResonatorChain) {
    let at = |panels: usize, terms: usize| {
        capacitance_sweep(single, &[PI], terms, panels).expect("refinement").remove(0)
    };
    let base = at(PANELS, TERMS);
    let panels = at(2 * PANELS, TERMS);
    let terms = at(PANELS, 2 * TERMS);
    let l0 = top_localized(&base, single);
    let dp = ((top_localized(&panels, single) - l0) / l0).abs();
    let dm = ((top_localized(&terms, single) - l0) / l0).abs();
    let herm_decreases = panels.asymmetry < base.asymmetry;
    ledger.record(
        7,
        dp < 1e-4 && dm < 1e-4 && herm_decreases,
        format!(
            "λ = {l0:.8}; 64→128 panels Δ {dp:.2e}, M 200→400 Δ {dm:.2e} (tol 1e-4); Hermiticity defect {:.2e} → {:.2e}",
            base.asymmetry, panels.asymmetry
        ),
    );
}

fn criterion_8(ledger: &mut Ledger, bands: &[&BandStructure]) {
    let mut residual = 0.0f64;
    let mut negative = 0.0f64;
    let mut mirror = 0.0f64;
    let mut pairs = 0usize;
    for band in bands {
        residual = residual.max(band.max_relative_residual());
        let n = band.spectra.len();
        for (j, s) in band.spectra.iter().enumerate() {
            pairs += s.len();
            let top = s.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
            negative = negative.max(-s.eigenvalues[0] / top);
            let other = &band.spectra[n - 1 - j];
            assert!((other.alpha + s.alpha).abs() < 1e-12, "grid is symmetric");
            for (a, b) in s.eigenvalues.iter().zip(&other.eigenvalues) {
                mirror = mirror.max((a - b).abs() / top);
            }
        }
    }
    ledger.record(
        8,
        residual <= 1e-10 && negative <= 1e-8 && mirror <= 1e-8,
        format!(
            "{pairs} pairs over {} sweeps: max residual/‖Ĉ‖∞ {residual:.2e}; most negative λ/max|λ| {:.2e}; ±α max rel diff {mirror:.2e}",
            bands.len(),
            -negative
        ),
    );
}

fn rel_diff(a: &CapacitanceMatrix, b: &CapacitanceMatrix, map: impl Fn(usize) -> usize) -> f64 {
    let n = a.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a.get(i, j) - b.get(map(i), map(j))).norm());
        }
    }
    worst / a.max_abs()
}

fn criterion_9(ledger: &mut Ledger, uniform: &ResonatorChain, u: &Sweep, s: &Sweep, single: &ResonatorChain) {
    let mut toeplitz = 0.0f64;
    for c in &u.matrices {
        let h = hermitian_part(c);
        let mid = h.center();
        for i in mid - 5..mid + 5 {
            for j in mid - 5..mid + 5 {
                toeplitz = toeplitz.max((h.get(i + 1, j + 1) - h.get(i, j)).norm() / h.max_abs());
            }
        }
    }
    let mut mirror = 0.0f64;
    for (sw, ch) in [(u, uniform), (s, single)] {
        let perm = ch.mirror_permutation(1e-12).expect("mirror-symmetric chain");
        for c in &sw.matrices {
            mirror = mirror.max(rel_diff(c, c, |i| perm[i]));
        }
    }
    let alpha = u.matrices[17].alpha;
    let shifted = uniform.translated([0.37, 0.0]);
    let moved = capacitance_sweep(&shifted, &[alpha], TERMS, PANELS).unwrap().remove(0);
    let gauge = rel_diff(&u.matrices[17], &moved, |i| i);
    ledger.record(
        9,
        toeplitz <= 1e-6 && mirror <= 1e-8 && gauge <= 1e-10,
        format!("Toeplitz {toeplitz:.2e} (tol 1e-6); mirror {mirror:.2e} (tol 1e-8); gauge {gauge:.2e} (tol 1e-10)"),
    );
}

fn main() {
    let start = Instant::now();
    let mut ledger = Ledger::default();
    let grid = alpha_grid(ALPHA_POINTS);

    criterion_6(&mut ledger);
    let uniform = chain(ScenarioKind::Uniform, None);
    let single = chain(ScenarioKind::SingleDefect, None);
    criterion_3(&mut ledger, &uniform);
    criterion_7(&mut ledger, &single);

    let u = sweep(&uniform, &grid);
    criterion_4(&mut ledger, &u);
    let s = sweep(&single, &grid);
    criterion_1(&mut ledger, &s, &u);
    criterion_9(&mut ledger, &uniform, &u, &s, &single);

    let mut rows = Vec::new();
    let mut two = Vec::new();
    for l in [1usize, 2, 3, 5] {
        let sw = sweep(&chain(ScenarioKind::TwoDefect, Some(l)), &grid);
        rows.push((l, table_row(&sw, &u)));
        two.push(sw);
    }
    criterion_2(&mut ledger, &rows);

    let ssh_chain = chain(ScenarioKind::Ssh, None);
    let wall = ssh_chain.disks.iter().rposition(|d| d.center[1] < 0.0).unwrap();
    let ssh = sweep(&ssh_chain, &grid);
    criterion_5(&mut ledger, &ssh, wall);

    let mut bands: Vec<&BandStructure> = vec![&u.full, &u.truncated, &s.full, &s.truncated, &ssh.full, &ssh.truncated];
    for sw in &two {
        bands.push(&sw.full);
        bands.push(&sw.truncated);
    }
    criterion_8(&mut ledger, &bands);

    ledger.outcomes.sort_by_key(|o| o.id);
    println!();
    println!("acceptance summary ({:.0} s):", start.elapsed().as_secs_f64());
    for o in &ledger.outcomes {
        println!("  {} criterion {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail);
    }
    let passed = ledger.outcomes.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria passed", ledger.outcomes.len());
    let strict = std::env::var("SUBWAVE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < ledger.outcomes.len() {
        std::process::exit(1);
    }
}
