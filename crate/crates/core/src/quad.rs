//! Adaptive Gauss–Kronrod (7/15) quadrature on finite and semi-infinite
//! intervals.
//!
//! The integrand may fail; the first error aborts the integration and is
//! returned unchanged, which lets nested integrals propagate non-convergence
//! from any depth.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_subdivisions: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64, max_subdivisions: usize) -> Self {
        Tolerance {
            abs,
            rel,
            max_subdivisions,
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// QUADPACK's error rescaling: the raw |K - G| difference is very pessimistic
/// for smooth integrands.
fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<Segment>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center)?;
    let mut res_k = WGK[7] * f_center;
    let mut res_g = WG[3] * f_center;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let error = rescale_error((res_k - res_g) * half, res_abs * half.abs(), res_asc * half.abs());
    if !value.is_finite() {
        return Err(Error::domain(format!(
            "integrand is not finite on [{a}, {b}]"
        )));
    }
    Ok(Segment { a, b, value, error })
}

/// Single 15-point Kronrod panel, no error control.
pub fn fixed_panel<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = WGK[7] * f(center);
    for j in 0..7 {
        let dx = half * XGK[j];
        sum += WGK[j] * (f(center - dx) + f(center + dx));
    }
    sum * half
}

/// Adaptive integration of a fallible integrand over `[a, b]`.
pub fn try_integrate<F>(mut f: F, a: f64, b: f64, tol: &Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!("finite limits required, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if b < a {
        let r = try_integrate(f, b, a, tol)?;
        return Ok(Integral {
            value: -r.value,
            ..r
        });
    }

    let first = gk15(&mut f, a, b)?;
    let mut evaluations = 15;
    let mut total = first.value;
    let mut total_err = first.error;
    if total_err <= tol.target(total) {
        return Ok(Integral {
            value: total,
            error: total_err,
            evaluations,
        });
    }

    let mut heap = BinaryHeap::with_capacity(tol.max_subdivisions + 1);
    heap.push(first);
    let mut subdivisions = 1;
    while total_err > tol.target(total) {
        if subdivisions >= tol.max_subdivisions {
            return Err(Error::NonConvergence {
                estimate: total,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Cannot split further at this precision.
            return Err(Error::NonConvergence {
                estimate: total,
                error: total_err,
            });
        }
        let left = gk15(&mut f, worst.a, mid)?;
        let right = gk15(&mut f, mid, worst.b)?;
        evaluations += 30;
        subdivisions += 1;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        if total_err <= tol.target(total) {
            // Re-sum to shed accumulated cancellation in the running totals.
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    Ok(Integral {
        value: total,
        error: total_err,
        evaluations,
    })
}

/// One subinterval of a vector-valued integral.
struct VecSegment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
}

fn gk15_vec<F>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Result<VecSegment>
where
    F: FnMut(f64, &mut [f64]) -> Result<()>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    // buf holds the 15 node values of every component, node-major.
    let nodes = |j: usize| -> f64 {
        match j {
            0..=6 => center - half * XGK[j],
            7 => center,
            _ => center + half * XGK[j - 8],
        }
    };
    for j in 0..15 {
        f(nodes(j), &mut buf[j * dim..(j + 1) * dim])?;
    }
    let mut value = vec![0.0; dim];
    let mut error = vec![0.0; dim];
    for c in 0..dim {
        let at = |j: usize| buf[j * dim + c];
        let mut res_k = WGK[7] * at(7);
        let mut res_g = WG[3] * at(7);
        let mut res_abs = res_k.abs();
        for j in 0..7 {
            let (f1, f2) = (at(j), at(j + 8));
            res_k += WGK[j] * (f1 + f2);
            res_abs += WGK[j] * (f1.abs() + f2.abs());
            if j % 2 == 1 {
                res_g += WG[j / 2] * (f1 + f2);
            }
        }
        let mean = 0.5 * res_k;
        let mut res_asc = WGK[7] * (at(7) - mean).abs();
        for j in 0..7 {
            res_asc += WGK[j] * ((at(j) - mean).abs() + (at(j + 8) - mean).abs());
        }
        value[c] = res_k * half;
        if !value[c].is_finite() {
            return Err(Error::domain(format!("integrand is not finite on [{a}, {b}]")));
        }
        error[c] = rescale_error((res_k - res_g) * half, res_abs * half.abs(), res_asc * half.abs());
    }
    Ok(VecSegment { a, b, value, error })
}

/// Adaptive integration of `dim` integrands sharing their nodes. `f(x, out)`
/// writes all components at `x`. Each component must meet the tolerance;
/// the segment with the largest component error is split first.
pub fn try_integrate_vec<F>(mut f: F, dim: usize, a: f64, b: f64, tol: &Tolerance) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]) -> Result<()>,
{
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(Error::domain(format!("finite ordered limits required, got [{a}, {b}]")));
    }
    if a == b || dim == 0 {
        return Ok(vec![0.0; dim]);
    }
    let mut buf = vec![0.0; 15 * dim];
    let mut segments = vec![gk15_vec(&mut f, a, b, dim, &mut buf)?];
    let worst_error = |s: &VecSegment| s.error.iter().copied().fold(0.0, f64::max);
    loop {
        let mut total = vec![0.0; dim];
        let mut total_err = vec![0.0; dim];
        for s in &segments {
            for c in 0..dim {
                total[c] += s.value[c];
                total_err[c] += s.error[c];
            }
        }
        if (0..dim).all(|c| total_err[c] <= tol.target(total[c])) {
            return Ok(total);
        }
        if segments.len() >= tol.max_subdivisions {
            let c = (0..dim)
                .max_by(|&i, &j| total_err[i].total_cmp(&total_err[j]))
                .expect("dim > 0");
            return Err(Error::NonConvergence {
                estimate: total[c],
                error: total_err[c],
            });
        }
        let k = (0..segments.len())
            .max_by(|&i, &j| worst_error(&segments[i]).total_cmp(&worst_error(&segments[j])))
            .expect("at least one segment");
        let worst = segments.swap_remove(k);
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::NonConvergence {
                estimate: worst.value[0],
                error: worst.error[0],
            });
        }
        segments.push(gk15_vec(&mut f, worst.a, mid, dim, &mut buf)?);
        segments.push(gk15_vec(&mut f, mid, worst.b, dim, &mut buf)?);
    }
}

/// Adaptive integration of an infallible integrand over `[a, b]`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: &Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    try_integrate(|x| Ok(f(x)), a, b, tol)
}

/// `∫_a^∞ f(x) dx` through the substitution `x = a + (1 - u)/u`.
pub fn try_integrate_to_infinity<F>(f: F, a: f64, tol: &Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> Result<f64>,
{
    try_integrate_to_infinity_scaled(f, a, 1.0, tol)
}

/// As [`try_integrate_to_infinity`] with `x = a + scale·(1 - u)/u`, which
/// places `u = 1/2` at `a + scale`.
pub fn try_integrate_to_infinity_scaled<F>(mut f: F, a: f64, scale: f64, tol: &Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::domain(format!("scale must be positive, got {scale}")));
    }
    try_integrate(
        |u| {
            if u == 0.0 {
                return Ok(0.0);
            }
            let x = a + scale * (1.0 - u) / u;
            Ok(f(x)? * scale / (u * u))
        },
        0.0,
        1.0,
        tol,
    )
}

pub fn integrate_to_infinity<F>(mut f: F, a: f64, tol: &Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    try_integrate_to_infinity(|x| Ok(f(x)), a, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerance {
        Tolerance::new(1e-12, 1e-10, 500)
    }

    #[test]
    fn vector_integral_matches_componentwise() {
        let tol = tol();
        let got = try_integrate_vec(
            |x, out| {
                out[0] = x.sin();
                out[1] = (-x * x).exp();
                out[2] = 1.0 / (1.0 + 400.0 * (x - 0.3).powi(2));
                Ok(())
            },
            3,
            0.0,
            2.0,
            &tol,
        )
        .unwrap();
        let want = [
            1.0 - 2f64.cos(),
            integrate(|x| (-x * x).exp(), 0.0, 2.0, &tol).unwrap().value,
            ((20.0f64 * 1.7).atan() + (20.0f64 * 0.3).atan()) / 20.0,
        ];
        for c in 0..3 {
            assert!((got[c] - want[c]).abs() < 1e-11, "component {c}: {} vs {}", got[c], want[c]);
        }
        assert_eq!(try_integrate_vec(|_, _| Ok(()), 2, 1.0, 1.0, &tol).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, &tol()).unwrap();
        let want = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((r.value - want).abs() < 1e-13);
        assert_eq!(r.evaluations, 15);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let fwd = integrate(f64::sin, 0.0, 2.0, &tol()).unwrap().value;
        let rev = integrate(f64::sin, 2.0, 0.0, &tol()).unwrap().value;
        assert!((fwd + rev).abs() < 1e-15);
        assert!((fwd - (1.0 - 2.0f64.cos())).abs() < 1e-12);
    }

    #[test]
    fn sharp_peak_is_resolved() {
        let width = 1e-3;
        let r = integrate(
            |x| (-(x - 0.3f64).powi(2) / (2.0 * width * width)).exp(),
            0.0,
            1.0,
            &tol(),
        )
        .unwrap();
        let want = width * (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.value - want).abs() < 1e-11, "{} vs {want}", r.value);
    }

    #[test]
    fn semi_infinite_exponential() {
        let r = integrate_to_infinity(|x| (-x).exp(), 1.0, &tol()).unwrap();
        assert!((r.value - (-1.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn semi_infinite_power_tail() {
        // ∫_1^∞ x^-2 dx = 1, a slowly decaying tail.
        let r = integrate_to_infinity(|x| 1.0 / (x * x), 1.0, &tol()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn scaled_semi_infinite_matches_unscaled() {
        let f = |x: f64| Ok(x * (-x / 40.0).exp());
        let a = try_integrate_to_infinity(f, 0.0, &tol()).unwrap().value;
        let b = try_integrate_to_infinity_scaled(f, 0.0, 40.0, &tol()).unwrap().value;
        assert!((a - 1600.0).abs() < 1e-7 && (b - 1600.0).abs() < 1e-7);
    }

    #[test]
    fn integrand_errors_propagate() {
        let err = try_integrate(
            |x| {
                if x > 0.5 {
                    Err(Error::usage("boom"))
                } else {
                    Ok(x)
                }
            },
            0.0,
            1.0,
            &tol(),
        )
        .unwrap_err();
        assert_eq!(err, Error::Usage("boom".into()));
    }

    #[test]
    fn reports_non_convergence() {
        let tight = Tolerance::new(0.0, 0.0, 3);
        let err = integrate(|x| x.sqrt(), 0.0, 1.0, &tight).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn fixed_panel_matches_adaptive_for_smooth_integrand() {
        let a = fixed_panel(f64::cos, 0.0, 1.0);
        assert!((a - 1.0f64.sin()).abs() < 1e-15);
    }
}
