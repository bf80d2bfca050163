//! Quasi-periodic Laplace Green function of the unit-period strip.
//!
//! The kernel is the spectral series
//!
//! ```text
//! G(x) = -Σ_{|k|≤M} exp(i(2πk+α)x₁) exp(-|2πk+α||x₂|) / (2|2πk+α|)
//! ```
//!
//! Three evaluation routes are provided:
//!
//! * [`eval_series`]: the truncated sum exactly as written, compensated and in
//!   ascending `k`. Reference route; slow near `x₂ = 0`.
//! * [`eval_nearfield_split`]: `G = log|x| / 2π + R(x)` with `R` finite at the
//!   origin. The `1/(4π|k|)` asymptote of both series halves is summed in closed
//!   form through `Σ wᵏ/k = -ln(1-w)`, and the next `α/(8π²k²)` layer through
//!   the dilogarithm `Σ wᵏ/k² = Li₂(w)`. What is left decays like `k⁻³` and is
//!   truncated at `M`, which keeps `R` smooth (not merely finite) at the origin.
//! * [`eval_accelerated`]: the same closed-form construction returning `G`
//!   itself, valid anywhere off the lattice `ℤ × {0}`.
//!
//! [`KernelTables`] caches per-α coefficients for the assembly loops.

use crate::quadrature::CompensatedSum;
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

const TWO_PI: f64 = 2.0 * PI;

/// Relative size below which a series term is dropped by the fast evaluators.
const TAIL_TOLERANCE: f64 = 1e-18;

/// Beyond this `|x₂|` the plain series converges geometrically and the
/// closed-form construction is not needed.
const SERIES_ONLY_HEIGHT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GreenError {
    #[error("invalid Green-function parameter: {0}")]
    InvalidParameter(String),
    #[error("near-field split requires |x| < 0.5, got |x| = {norm}")]
    OutOfRange { norm: f64 },
}

/// Quasi-momentum and series truncation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenParams {
    pub alpha: f64,
    pub fourier_terms: usize,
}

impl GreenParams {
    /// Checks `|α| ≤ π` and `M ≥ 1`. `α = 0` is accepted here and rejected by
    /// every evaluator, since the `k = 0` term divides by `|α|`.
    pub fn new(alpha: f64, fourier_terms: usize) -> Result<Self, GreenError> {
        if !alpha.is_finite() || alpha.abs() > PI {
            return Err(GreenError::InvalidParameter(format!(
                "alpha must lie in [-pi, pi], got {alpha}"
            )));
        }
        if fourier_terms == 0 {
            return Err(GreenError::InvalidParameter(
                "fourier_terms must be at least 1".into(),
            ));
        }
        Ok(Self {
            alpha,
            fourier_terms,
        })
    }

    fn require_nonzero_alpha(&self) -> Result<(), GreenError> {
        if self.alpha == 0.0 {
            return Err(GreenError::InvalidParameter(
                "alpha = 0 makes the k = 0 term singular".into(),
            ));
        }
        Ok(())
    }
}

/// Truncated spectral series, summed in ascending `k` with compensation.
pub fn eval_series(params: &GreenParams, x: [f64; 2]) -> Result<Complex64, GreenError> {
    params.require_nonzero_alpha()?;
    let m = params.fourier_terms as i64;
    let height = x[1].abs();
    let mut acc = CompensatedSum::default();
    for k in -m..=m {
        let xi = TWO_PI * k as f64 + params.alpha;
        let a = xi.abs();
        let phase = Complex64::from_polar(1.0, xi * x[0]);
        acc.add(-phase * ((-a * height).exp() / (2.0 * a)));
    }
    Ok(acc.value())
}

/// Periodic (`α = 0`) kernel `|x₂|/2 − Σ_{k≠0} e^{2πikx₁} e^{−|2πkx₂|}/|4πk|`.
/// Diagnostic only; the solver never uses `α = 0`.
pub fn eval_periodic0(fourier_terms: usize, x: [f64; 2]) -> Complex64 {
    let m = fourier_terms as i64;
    let height = x[1].abs();
    let mut acc = CompensatedSum::default();
    acc.add(Complex64::new(0.5 * height, 0.0));
    for k in -m..=m {
        if k == 0 {
            continue;
        }
        let xi = TWO_PI * k as f64;
        let phase = Complex64::from_polar(1.0, xi * x[0]);
        acc.add(-phase * ((-xi.abs() * height).exp() / (2.0 * xi.abs())));
    }
    acc.value()
}

/// `G(x) = log_coefficient · ln|x| + remainder`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearfieldSplit {
    pub log_coefficient: f64,
    pub remainder: Complex64,
}

impl NearfieldSplit {
    /// Recombines the split into the kernel value (`x ≠ 0`).
    pub fn reconstruct(&self, x: [f64; 2]) -> Complex64 {
        self.remainder + self.log_coefficient * x[0].hypot(x[1]).ln()
    }
}

/// Singularity-split evaluation for `|x| < 0.5`.
pub fn eval_nearfield_split(
    params: &GreenParams,
    x: [f64; 2],
) -> Result<NearfieldSplit, GreenError> {
    params.require_nonzero_alpha()?;
    let norm = x[0].hypot(x[1]);
    if norm >= 0.5 || !norm.is_finite() {
        return Err(GreenError::OutOfRange { norm });
    }
    let tables = KernelTables::new(params)?;
    Ok(NearfieldSplit {
        log_coefficient: 1.0 / TWO_PI,
        remainder: tables.remainder(x),
    })
}

/// Full kernel through the closed-form construction. Valid for every `x` off
/// the lattice `ℤ × {0}`; agrees with [`eval_series`] up to the series'
/// truncation error, which it does not share near `x₂ = 0`.
pub fn eval_accelerated(params: &GreenParams, x: [f64; 2]) -> Result<Complex64, GreenError> {
    params.require_nonzero_alpha()?;
    Ok(KernelTables::new(params)?.accelerated(x))
}

/// Per-α coefficient tables shared by the fast evaluators used during assembly.
#[derive(Clone, Debug)]
pub struct KernelTables {
    alpha: f64,
    terms: usize,
    /// `α² / (8π²k²(2πk+α))`, k = 1..=M
    corr_plus: Vec<f64>,
    /// `α² / (8π²k²(2πk−α))`, k = 1..=M
    corr_minus: Vec<f64>,
}

impl KernelTables {
    pub fn new(params: &GreenParams) -> Result<Self, GreenError> {
        params.require_nonzero_alpha()?;
        let a = params.alpha;
        let m = params.fourier_terms;
        let corr_plus = (1..=m)
            .map(|k| {
                let kf = k as f64;
                a * a / (8.0 * PI * PI * kf * kf * (TWO_PI * kf + a))
            })
            .collect();
        let corr_minus = (1..=m)
            .map(|k| {
                let kf = k as f64;
                a * a / (8.0 * PI * PI * kf * kf * (TWO_PI * kf - a))
            })
            .collect();
        Ok(Self {
            alpha: a,
            terms: m,
            corr_plus,
            corr_minus,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn fourier_terms(&self) -> usize {
        self.terms
    }

    /// Truncated series with geometric recurrences; terms negligible against
    /// the `k = 0` term are skipped. Matches [`eval_series`] to rounding.
    pub fn series(&self, x: [f64; 2]) -> Complex64 {
        let a = self.alpha;
        let a0 = a.abs();
        let t = x[1].abs();
        let k0_mag = (-a0 * t).exp() / (2.0 * a0);
        let base = Complex64::from_polar(1.0, a * x[0]);
        let mut sum = -base * k0_mag;

        let rot = Complex64::from_polar(1.0, TWO_PI * x[0]);
        let rot_inv = rot.conj();
        let q = (-TWO_PI * t).exp();

        // k >= 1
        let mut mag = (-(TWO_PI + a) * t).exp();
        let mut phase = base * rot;
        for k in 1..=self.terms {
            let xi = TWO_PI * k as f64 + a;
            let term_mag = mag / (2.0 * xi);
            if t > 0.0 && term_mag < TAIL_TOLERANCE * k0_mag {
                break;
            }
            sum -= phase * term_mag;
            mag *= q;
            phase *= rot;
        }
        // k <= -1
        let mut mag = (-(TWO_PI - a) * t).exp();
        let mut phase = base * rot_inv;
        for j in 1..=self.terms {
            let xi = TWO_PI * j as f64 - a;
            let term_mag = mag / (2.0 * xi);
            if t > 0.0 && term_mag < TAIL_TOLERANCE * k0_mag {
                break;
            }
            sum -= phase * term_mag;
            mag *= q;
            phase *= rot_inv;
        }
        sum
    }

    /// Full kernel value off the lattice.
    pub fn accelerated(&self, x: [f64; 2]) -> Complex64 {
        if x[1].abs() >= SERIES_ONLY_HEIGHT {
            return self.series(x);
        }
        let parts = self.closed_form(x);
        let norm = x[0].hypot(x[1]);
        parts.smooth + parts.log_factor * (TWO_PI * norm).ln()
    }

    /// `G(x) − ln|x|/2π`, finite at `x = 0`. Intended for `|x₂| < 0.5`.
    pub fn remainder(&self, x: [f64; 2]) -> Complex64 {
        let parts = self.closed_form(x);
        let norm = x[0].hypot(x[1]);
        let mut r = parts.smooth + parts.log_factor * TWO_PI.ln();
        if norm > 0.0 {
            r += (parts.log_factor - 1.0 / TWO_PI) * norm.ln();
        }
        r
    }

    /// Decomposes `G = smooth + log_factor · ln(2π|x|)`.
    fn closed_form(&self, x: [f64; 2]) -> ClosedForm {
        let a = self.alpha;
        let t = x[1].abs();
        let pre = Complex64::from_polar(1.0, a * x[0]);
        let k0 = -pre * ((-a.abs() * t).exp() / (2.0 * a.abs()));

        // 1 - w = -z E(z), z = 2π(i x₁ - |x₂|), E(z) = (e^z - 1)/z
        let z = Complex64::new(-TWO_PI * t, TWO_PI * x[0]);
        let e = exp_relative(z);
        let one_minus_w = -z * e;
        let theta = if z.norm() == 0.0 {
            0.0
        } else {
            one_minus_w.arg()
        };
        let cosh = (a * t).cosh();
        let sinh = (a * t).sinh();
        let log_factor = pre * (cosh / TWO_PI);
        let closed = log_factor * e.norm().ln()
            - Complex64::new(0.0, theta * sinh / TWO_PI) * pre;

        ClosedForm {
            smooth: k0 + closed + self.correction(x),
            log_factor,
        }
    }

    /// Both series halves minus their `1/(4π|k|)` asymptote. The next
    /// `α/(8π²k²)` layer is summed in closed form with the dilogarithm; the
    /// `O(k⁻³)` rest is truncated at `M`.
    fn correction(&self, x: [f64; 2]) -> Complex64 {
        let a = self.alpha;
        let t = x[1].abs();
        let base = Complex64::from_polar(1.0, a * x[0]);
        let rot = Complex64::from_polar(1.0, TWO_PI * x[0]);
        let rot_inv = rot.conj();
        let q = (-TWO_PI * t).exp();
        let scale = 1.0 / (2.0 * a.abs());

        let li = dilog_of_w(x);
        let second = base
            * (li * (-a * t).exp() - li.conj() * (a * t).exp())
            * (a / (8.0 * PI * PI));

        let mut plus = Complex64::new(0.0, 0.0);
        let mut mag = (-(TWO_PI + a) * t).exp();
        let mut phase = base * rot;
        for &c in &self.corr_plus {
            let term = mag * c;
            if t > 0.0 && term.abs() < TAIL_TOLERANCE * scale {
                break;
            }
            plus += phase * term;
            mag *= q;
            phase *= rot;
        }

        let mut minus = Complex64::new(0.0, 0.0);
        let mut mag = (-(TWO_PI - a) * t).exp();
        let mut phase = base * rot_inv;
        for &c in &self.corr_minus {
            let term = mag * c;
            if t > 0.0 && term.abs() < TAIL_TOLERANCE * scale {
                break;
            }
            minus += phase * term;
            mag *= q;
            phase *= rot_inv;
        }
        second - plus - minus
    }
}

/// `Li₂(w)` for `w = e^{2π(i x₁ − |x₂|)}`, with `1 − w` formed without
/// cancellation so the value stays accurate as `x → 0`.
fn dilog_of_w(x: [f64; 2]) -> Complex64 {
    let t = x[1].abs();
    let z = Complex64::new(-TWO_PI * t, TWO_PI * x[0]);
    let w = z.exp();
    let one_minus_w = -z * exp_relative(z);
    if one_minus_w.norm() == 0.0 {
        return Complex64::new(PI * PI / 6.0, 0.0);
    }
    if w.re > 0.5 {
        // Li₂(w) = π²/6 − ln(w)ln(1−w) − Li₂(1−w)
        let ln_w = if z.im.abs() <= PI { z } else { w.ln() };
        Complex64::new(PI * PI / 6.0, 0.0) - ln_w * one_minus_w.ln()
            - dilog_bernoulli(one_minus_w, w)
    } else {
        dilog_bernoulli(w, one_minus_w)
    }
}

/// `Li₂(v)` for `|v| ≤ 1`, `Re v ≤ ½`, given `1 − v` separately.
fn dilog_bernoulli(v: Complex64, one_minus_v: Complex64) -> Complex64 {
    // B_{2k}/(2k+1)!
    const COEFFS: [f64; 10] = [
        1.0 / 36.0,
        -1.0 / 3600.0,
        1.0 / 211680.0,
        -1.0 / 10886400.0,
        1.0 / 526901760.0,
        -4.064761645144226e-11,
        8.921691020456453e-13,
        -1.993929586072108e-14,
        4.518980029619918e-16,
        -1.035651761218125e-17,
    ];
    if v.norm() < 1e-3 {
        // short power series avoids the log of a number near 1
        let mut sum = Complex64::new(0.0, 0.0);
        let mut p = v;
        for k in 1..=8 {
            sum += p / (k * k) as f64;
            p *= v;
        }
        return sum;
    }
    let u = -one_minus_v.ln();
    let u2 = u * u;
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in COEFFS.iter().rev() {
        acc = acc * u2 + c;
    }
    u - u2 * 0.25 + u * u2 * acc
}

struct ClosedForm {
    smooth: Complex64,
    log_factor: Complex64,
}

/// `(e^z − 1)/z`, accurate near `z = 0`.
fn exp_relative(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        // Σ zⁿ/(n+1)!, Horner form
        let mut acc = Complex64::new(1.0, 0.0);
        for n in (1..=24).rev() {
            acc = Complex64::new(1.0, 0.0) + z * acc / (n as f64 + 1.0);
        }
        acc
    } else {
        (z.exp() - 1.0) / z
    }
}
