//! Capacitance matrices, tight-binding truncation, decay fits and the α-grid
//! Fourier transform to full-capacitance entries.

use faer::Mat;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapmatError {
    #[error("degenerate decay fit: |C[{offset}][0]| is zero")]
    DegenerateFit { offset: usize },
    #[error("decay fit needs max_offset >= 2 and {needed} rows below the centre, have {available}")]
    FitRange { needed: usize, available: usize },
    #[error("non-uniform alpha grid: {0}")]
    NonUniformGrid(String),
    #[error("unknown disk label {0}")]
    UnknownLabel(i64),
}

/// Quasi-periodic capacitance matrix at one quasi-momentum.
#[derive(Clone, Debug)]
pub struct CapacitanceMatrix {
    pub alpha: f64,
    pub entries: Mat<Complex64>,
    pub hermitized: bool,
    /// `‖C − Cᴴ‖_F / ‖C‖_F` of the matrix before symmetrization.
    pub asymmetry: f64,
    pub chain_id: String,
    /// Disk label of each row/column.
    pub labels: Vec<i64>,
}

impl CapacitanceMatrix {
    pub fn new(
        alpha: f64,
        entries: Mat<Complex64>,
        chain_id: impl Into<String>,
        labels: Vec<i64>,
    ) -> Self {
        assert_eq!(entries.nrows(), entries.ncols());
        assert_eq!(entries.nrows(), labels.len());
        let asymmetry = hermitian_defect(&entries);
        Self {
            alpha,
            entries,
            hermitized: false,
            asymmetry,
            chain_id: chain_id.into(),
            labels,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }

    pub fn position_of(&self, label: i64) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Row of the disk labelled 0, or the middle row.
    pub fn center(&self) -> usize {
        self.position_of(0).unwrap_or(self.dim() / 2)
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.entries)
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                m = m.max(self.entries[(i, j)].norm());
            }
        }
        m
    }

    /// Max row sum of moduli.
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.entries[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn frobenius(m: &Mat<Complex64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// `‖M − Mᴴ‖_F / ‖M‖_F`, zero for the zero matrix.
pub fn hermitian_defect(m: &Mat<Complex64>) -> f64 {
    let n = m.nrows();
    let mut diff = 0.0;
    for j in 0..n {
        for i in 0..n {
            diff += (m[(i, j)] - m[(j, i)].conj()).norm_sqr();
        }
    }
    let norm = frobenius(m);
    if norm == 0.0 {
        0.0
    } else {
        diff.sqrt() / norm
    }
}

/// `(C + Cᴴ)/2`; the asymmetry of the input is kept on the output.
pub fn hermitian_part(c: &CapacitanceMatrix) -> CapacitanceMatrix {
    let n = c.dim();
    let e = &c.entries;
    let mut entries = Mat::<Complex64>::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = (e[(i, j)] + e[(j, i)].conj()) * 0.5;
            if i == j {
                entries[(i, i)] = Complex64::new(v.re, 0.0);
            } else {
                entries[(i, j)] = v;
                entries[(j, i)] = v.conj();
            }
        }
    }
    CapacitanceMatrix {
        alpha: c.alpha,
        entries,
        hermitized: true,
        asymmetry: if c.hermitized { c.asymmetry } else { hermitian_defect(e) },
        chain_id: c.chain_id.clone(),
        labels: c.labels.clone(),
    }
}

/// Zeroes entries with `|row − col| > bandwidth`; kept entries are verbatim.
pub fn band_truncate(c: &CapacitanceMatrix, bandwidth: usize) -> CapacitanceMatrix {
    let n = c.dim();
    let entries = Mat::from_fn(n, n, |i, j| {
        if i.abs_diff(j) > bandwidth {
            Complex64::new(0.0, 0.0)
        } else {
            c.entries[(i, j)]
        }
    });
    CapacitanceMatrix {
        entries,
        ..c.clone()
    }
}

/// Least-squares line `ln|C[center+i][center]| ≈ intercept + slope·i`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    pub rho: f64,
    pub log_linear_r2: f64,
    pub slope: f64,
    pub intercept: f64,
    pub samples: Vec<(usize, f64)>,
}

impl DecayFit {
    pub fn is_decaying(&self) -> bool {
        self.rho < 1.0 - 1e-12
    }
}

/// Ordinary least squares of `ys` on `xs`: `(slope, intercept, r²)`.
/// Data with no spread in `ys` is fitted exactly and reports `r² = 1`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let r = y - (intercept + slope * x);
        ss_res += r * r;
    }
    let r2 = if syy <= f64::EPSILON * f64::EPSILON * ys.len() as f64 {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    (slope, intercept, r2)
}

/// Fit over offsets `1..=max_offset` below the central disk.
pub fn fit_decay(c: &CapacitanceMatrix, max_offset: usize) -> Result<DecayFit, CapmatError> {
    let center = c.center();
    let available = c.dim() - 1 - center;
    if max_offset < 2 || max_offset > available {
        return Err(CapmatError::FitRange {
            needed: max_offset.max(2),
            available,
        });
    }
    let mut samples = Vec::with_capacity(max_offset);
    for i in 1..=max_offset {
        let v = c.entries[(center + i, center)].norm();
        if !(v > 0.0) {
            return Err(CapmatError::DegenerateFit { offset: i });
        }
        samples.push((i, v));
    }
    let xs: Vec<f64> = samples.iter().map(|&(i, _)| i as f64).collect();
    let ys: Vec<f64> = samples.iter().map(|&(_, v)| v.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(DecayFit {
        rho: slope.exp(),
        log_linear_r2: r2,
        slope,
        intercept,
        samples,
    })
}

/// Full-capacitance entries `C^{p,q}_{0,n}` for a fixed label pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FullMatrixSlice {
    pub n: i64,
    pub q: i64,
    pub p_offsets: Vec<i64>,
    pub entries: Vec<Complex64>,
}

impl FullMatrixSlice {
    /// Largest `|Im|` relative to the largest modulus.
    pub fn imaginary_residue(&self) -> f64 {
        let max = self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let im = self.entries.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if max == 0.0 {
            0.0
        } else {
            im / max
        }
    }

    pub fn at(&self, p: i64) -> Option<Complex64> {
        self.p_offsets
            .iter()
            .position(|&x| x == p)
            .map(|i| self.entries[i])
    }
}

/// Midpoint grid `α_j = −π + (j + ½)·2π/N`.
pub fn alpha_grid(points: usize) -> Vec<f64> {
    let h = 2.0 * PI / points as f64;
    (0..points).map(|j| -PI + (j as f64 + 0.5) * h).collect()
}

/// Equal-weight quadrature of `(1/2π)∫ Ĉ^α_{n,q} e^{−iαp} dα` over a uniform
/// periodic grid, for `p = −p_max..=p_max`. `n`, `q` are disk labels.
pub fn alpha_dft(
    cs: &[CapacitanceMatrix],
    n: i64,
    q: i64,
    p_max: usize,
) -> Result<FullMatrixSlice, CapmatError> {
    let count = cs.len();
    if count < 2 || count < 4 * p_max {
        return Err(CapmatError::NonUniformGrid(format!(
            "{count} grid points for p_max = {p_max}; need at least {}",
            (4 * p_max).max(2)
        )));
    }
    let h = 2.0 * PI / count as f64;
    for w in cs.windows(2) {
        if ((w[1].alpha - w[0].alpha) - h).abs() > 1e-9 {
            return Err(CapmatError::NonUniformGrid(format!(
                "spacing {} between {} and {} differs from 2π/{count}",
                w[1].alpha - w[0].alpha,
                w[0].alpha,
                w[1].alpha
            )));
        }
    }
    let mut values = Vec::with_capacity(count);
    for c in cs {
        let i = c.position_of(n).ok_or(CapmatError::UnknownLabel(n))?;
        let j = c.position_of(q).ok_or(CapmatError::UnknownLabel(q))?;
        values.push((c.alpha, c.entries[(i, j)]));
    }
    let pm = p_max as i64;
    let p_offsets: Vec<i64> = (-pm..=pm).collect();
    let entries = p_offsets
        .iter()
        .map(|&p| {
            let mut s = Complex64::new(0.0, 0.0);
            for &(a, v) in &values {
                s += v * Complex64::from_polar(1.0, -a * p as f64);
            }
            s / count as f64
        })
        .collect();
    Ok(FullMatrixSlice {
        n,
        q,
        p_offsets,
        entries,
    })
}

/// Rows `alpha,n,q,re,im` over every matrix, labels as indices.
pub fn write_capacitance_csv<W: Write>(mut w: W, cs: &[CapacitanceMatrix]) -> std::io::Result<()> {
    writeln!(w, "alpha,n,q,re,im")?;
    for c in cs {
        for (i, &n) in c.labels.iter().enumerate() {
            for (j, &q) in c.labels.iter().enumerate() {
                let v = c.entries[(i, j)];
                writeln!(w, "{:.16e},{n},{q},{:.16e},{:.16e}", c.alpha, v.re, v.im)?;
            }
        }
    }
    Ok(())
}

/// Rows `alpha,i,abs_value`.
pub fn write_decay_csv<W: Write>(mut w: W, fits: &[(f64, DecayFit)]) -> std::io::Result<()> {
    writeln!(w, "alpha,i,abs_value")?;
    for (alpha, fit) in fits {
        for &(i, v) in &fit.samples {
            writeln!(w, "{alpha:.16e},{i},{v:.16e}")?;
        }
    }
    Ok(())
}

/// Rows `p,n,q,re,im`.
pub fn write_dft_csv<W: Write>(mut w: W, slices: &[FullMatrixSlice]) -> std::io::Result<()> {
    writeln!(w, "p,n,q,re,im")?;
    for s in slices {
        for (&p, v) in s.p_offsets.iter().zip(&s.entries) {
            writeln!(w, "{p},{},{},{:.16e},{:.16e}", s.n, s.q, v.re, v.im)?;
        }
    }
    Ok(())
}
