//! Closed-form real roots of polynomials up to degree four.
//!
//! Quartics go through Ferrari's method (depressed quartic plus resolvent
//! cubic), evaluated in complex arithmetic so the same code path covers
//! every root configuration. Each root then gets exactly [`POLISH_STEPS`]
//! safeguarded Newton steps, so the operation count does not depend on the
//! input.

use arrayvec::ArrayVec;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Leading coefficients below this fraction of the largest one are dropped.
pub const DEGREE_TOL: f64 = 1e-12;
/// Real roots closer than this (absolute) are merged into one with multiplicity.
pub const ROOT_MERGE_TOL: f64 = 1e-8;
/// Residual bound, relative to `max(1, max |g_i|)`.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// A root is real when `|im| < IMAG_TOL * max(1, |re|)`.
pub const IMAG_TOL: f64 = 1e-7;
pub const POLISH_STEPS: usize = 3;

/// `g4 t^4 + g3 t^3 + g2 t^2 + g1 t + g0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuarticCoeffs {
    pub g4: f64,
    pub g3: f64,
    pub g2: f64,
    pub g1: f64,
    pub g0: f64,
}

impl QuarticCoeffs {
    pub const fn new(g4: f64, g3: f64, g2: f64, g1: f64, g0: f64) -> Self {
        Self { g4, g3, g2, g1, g0 }
    }

    /// Coefficients from the highest power down.
    pub fn descending(&self) -> [f64; 5] {
        [self.g4, self.g3, self.g2, self.g1, self.g0]
    }

    pub fn eval(&self, t: f64) -> f64 {
        (((self.g4 * t + self.g3) * t + self.g2) * t + self.g1) * t + self.g0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        ((4.0 * self.g4 * t + 3.0 * self.g3) * t + 2.0 * self.g2) * t + self.g1
    }

    pub fn max_abs(&self) -> f64 {
        self.descending().iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.descending().iter().all(|g| g.is_finite())
    }

    /// Degree after dropping negligible leading coefficients; `None` for the
    /// zero polynomial.
    pub fn effective_degree(&self) -> Option<usize> {
        let scale = self.max_abs();
        if scale == 0.0 {
            return None;
        }
        let c = self.descending();
        let lead = c.iter().position(|g| g.abs() > DEGREE_TOL * scale)?;
        Some(4 - lead)
    }

    /// Discriminant of the quartic (zero iff a repeated root exists).
    pub fn discriminant(&self) -> f64 {
        let [a, b, c, d, e] = self.descending();
        256.0 * a.powi(3) * e.powi(3) - 192.0 * a * a * b * d * e * e - 128.0 * a * a * c * c * e * e
            + 144.0 * a * a * c * d * d * e
            - 27.0 * a * a * d.powi(4)
            + 144.0 * a * b * b * c * e * e
            - 6.0 * a * b * b * d * d * e
            - 80.0 * a * b * c * c * d * e
            + 18.0 * a * b * c * d.powi(3)
            + 16.0 * a * c.powi(4) * e
            - 4.0 * a * c.powi(3) * d * d
            - 27.0 * b.powi(4) * e * e
            + 18.0 * b.powi(3) * c * d * e
            - 4.0 * b.powi(3) * d.powi(3)
            - 4.0 * b * b * c.powi(3) * e
            + b * b * c * c * d * d
    }
}

/// Distinct real roots in ascending order with their multiplicities.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RealRoots {
    roots: ArrayVec<f64, 4>,
    multiplicities: ArrayVec<u8, 4>,
}

impl RealRoots {
    /// Sorts and merges raw real root candidates closer than [`ROOT_MERGE_TOL`].
    pub fn from_candidates(candidates: &[f64]) -> Self {
        let mut sorted: ArrayVec<f64, 4> = candidates.iter().copied().take(4).collect();
        sorted.sort_by(f64::total_cmp);
        let mut out = RealRoots::default();
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i + 1;
            while j < sorted.len() && sorted[j] - sorted[j - 1] < ROOT_MERGE_TOL {
                j += 1;
            }
            let group = &sorted[i..j];
            out.roots.push(group.iter().sum::<f64>() / group.len() as f64);
            out.multiplicities.push(group.len() as u8);
            i = j;
        }
        out
    }

    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    pub fn multiplicities(&self) -> &[u8] {
        &self.multiplicities
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Number of real roots counted with multiplicity.
    pub fn count_with_multiplicity(&self) -> usize {
        self.multiplicities.iter().map(|&m| m as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, u8)> + '_ {
        self.roots.iter().copied().zip(self.multiplicities.iter().copied())
    }
}

/// All real roots of `c`.
pub fn solve_quartic(c: &QuarticCoeffs) -> Result<RealRoots> {
    let all = complex_roots(c)?;
    let real: ArrayVec<f64, 4> = all
        .iter()
        .filter(|z| is_effectively_real(**z))
        .map(|z| z.re)
        .collect();
    Ok(RealRoots::from_candidates(&real))
}

pub fn is_effectively_real(z: Complex64) -> bool {
    z.im.abs() < IMAG_TOL * z.re.abs().max(1.0)
}

/// All complex roots of `c` (as many as its effective degree), polished.
pub fn complex_roots(c: &QuarticCoeffs) -> Result<ArrayVec<Complex64, 4>> {
    if !c.is_finite() {
        return Err(Error::InvalidParams("non-finite polynomial coefficient".into()));
    }
    let degree = c.effective_degree().ok_or(Error::AllCoefficientsZero)?;
    let desc = c.descending();
    let coeffs = &desc[4 - degree..];
    let lead = coeffs[0];
    let monic: ArrayVec<f64, 4> = coeffs[1..].iter().map(|g| g / lead).collect();

    let mut roots: ArrayVec<Complex64, 4> = match degree {
        0 => ArrayVec::new(),
        1 => [Complex64::new(-monic[0], 0.0)].into_iter().collect(),
        2 => quadratic(cplx(monic[0]), cplx(monic[1])).into_iter().collect(),
        3 => cubic(cplx(monic[0]), cplx(monic[1]), cplx(monic[2])).into_iter().collect(),
        _ => quartic_monic(monic[0], monic[1], monic[2], monic[3]).into_iter().collect(),
    };
    for z in roots.iter_mut() {
        *z = polish(&monic, *z, POLISH_STEPS);
    }
    Ok(roots)
}

fn cplx(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Roots of the monic polynomial `z^n + m[0] z^(n-1) + ... + m[n-1]`.
fn eval_monic(monic: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(1.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &m in monic {
        dp = dp * z + p;
        p = p * z + m;
    }
    (p, dp)
}

fn polish(monic: &[f64], mut z: Complex64, steps: usize) -> Complex64 {
    for _ in 0..steps {
        let (p, dp) = eval_monic(monic, z);
        if p.norm() == 0.0 || dp.norm() == 0.0 {
            break;
        }
        let next = z - p / dp;
        if !(next.re.is_finite() && next.im.is_finite()) {
            break;
        }
        // Only accept steps that do not increase the residual.
        if eval_monic(monic, next).0.norm() <= p.norm() {
            z = next;
        } else {
            break;
        }
    }
    z
}

/// `z^2 + b z + c`.
fn quadratic(b: Complex64, c: Complex64) -> [Complex64; 2] {
    let disc = (b * b - 4.0 * c).sqrt();
    // Pick the sign that avoids cancellation.
    let plus = b + disc;
    let minus = b - disc;
    let q = -0.5 * if plus.norm() >= minus.norm() { plus } else { minus };
    if q.norm() == 0.0 {
        return [q, q];
    }
    [q, c / q]
}

/// `z^3 + a z^2 + b z + c` via Cardano in complex arithmetic.
fn cubic(a: Complex64, b: Complex64, c: Complex64) -> [Complex64; 3] {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    let t1 = -q / 2.0 + disc;
    let t2 = -q / 2.0 - disc;
    let t = if t1.norm() >= t2.norm() { t1 } else { t2 };
    if t.norm() == 0.0 {
        return [-shift; 3];
    }
    let u = t.cbrt();
    let v = -p / (3.0 * u);
    let omega = Complex64::new(-0.5, 0.75_f64.sqrt());
    let omega2 = omega.conj();
    [
        u + v - shift,
        u * omega + v * omega2 - shift,
        u * omega2 + v * omega - shift,
    ]
}

/// Ferrari's method for `x^4 + a x^3 + b x^2 + c x + d`.
fn quartic_monic(a: f64, b: f64, c: f64, d: f64) -> [Complex64; 4] {
    let shift = a / 4.0;
    let a2 = a * a;
    // Depressed quartic y^4 + p y^2 + r y + s, x = y - a/4.
    let p = b - 3.0 * a2 / 8.0;
    let r = c - a * b / 2.0 + a2 * a / 8.0;
    let s = d - a * c / 4.0 + a2 * b / 16.0 - 3.0 * a2 * a2 / 256.0;

    // Resolvent cubic m^3 + p m^2 + (p^2/4 - s) m - r^2/8 = 0.
    let res_monic = [p, p * p / 4.0 - s, -r * r / 8.0];
    let mut res = cubic(cplx(res_monic[0]), cplx(res_monic[1]), cplx(res_monic[2]));
    for m in res.iter_mut() {
        *m = polish(&res_monic, *m, 2);
    }
    let m = res
        .iter()
        .copied()
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        .unwrap_or_default();
    let shift_c = cplx(shift);
    if m.norm() == 0.0 {
        return [-shift_c; 4];
    }
    // (y^2 + p/2 + m)^2 = (sigma y - r/(2 sigma))^2 with sigma^2 = 2m.
    let sigma = (2.0 * m).sqrt();
    let half_p_m = p / 2.0 + m;
    let k = r / (2.0 * sigma);
    let [y1, y2] = quadratic(-sigma, half_p_m + k);
    let [y3, y4] = quadratic(sigma, half_p_m - k);
    [y1 - shift_c, y2 - shift_c, y3 - shift_c, y4 - shift_c]
}
