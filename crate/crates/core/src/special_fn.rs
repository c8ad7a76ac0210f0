//! Special functions and the two distance distributions everything else is
//! built from.
//!
//! `Ra(x, σ²)` and `Ri(x, y, σ²)` take the variance σ², never σ. The Rician
//! density is always evaluated through the exponentially scaled Bessel
//! function so that it stays finite when `xy/σ²` is in the hundreds.

use crate::error::{Error, Result};

/// A strictly positive, finite real (variances, scales, rates).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PositiveReal(f64);

impl PositiveReal {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(PositiveReal(value))
        } else {
            Err(Error::domain(format!("expected a positive finite value, got {value}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// Switch point between the power series and the asymptotic expansion.
const I0_SERIES_LIMIT: f64 = 15.0;

/// Modified Bessel function of the first kind, order zero.
///
/// Overflows to `+inf` above x ≈ 713; use [`bessel_i0_scaled`] there.
pub fn bessel_i0(x: f64) -> Result<f64> {
    check_finite_nonneg("bessel_i0", x)?;
    if x < I0_SERIES_LIMIT {
        Ok(i0_series(x))
    } else {
        Ok(i0_scaled_asymptotic(x) * x.exp())
    }
}

/// `exp(-x) · I0(x)`, finite for every finite `x ≥ 0`.
pub fn bessel_i0_scaled(x: f64) -> Result<f64> {
    check_finite_nonneg("bessel_i0_scaled", x)?;
    Ok(i0_scaled(x))
}

#[inline]
pub(crate) fn i0_scaled(x: f64) -> f64 {
    if x < I0_SERIES_LIMIT {
        i0_series(x) * (-x).exp()
    } else {
        i0_scaled_asymptotic(x)
    }
}

fn i0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < sum * 1e-17 {
            return sum;
        }
        k += 1.0;
    }
}

/// Hankel expansion of `exp(-x) I0(x)`; all terms are positive, so stop at
/// the smallest one.
fn i0_scaled_asymptotic(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        let odd = 2.0 * k - 1.0;
        let next = term * odd * odd / (8.0 * k * x);
        if next >= term || next < sum * 1e-17 {
            break;
        }
        term = next;
        sum += term;
        k += 1.0;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// First-order Marcum Q function
/// `Q1(a, b) = ∫_b^∞ t exp(-(t² + a²)/2) I0(a t) dt`.
///
/// Evaluated as the Poisson mixture `Σ_k Pois(k; a²/2) · P[Pois(b²/2) ≤ k]`,
/// with both mass functions carried in log space so that neither `a` nor `b`
/// in the tens causes underflow of the leading factors.
pub fn marcum_q1(a: f64, b: f64) -> Result<f64> {
    check_finite_nonneg("marcum_q1 (a)", a)?;
    check_finite_nonneg("marcum_q1 (b)", b)?;
    Ok(marcum_q1_unchecked(a, b))
}

pub(crate) fn marcum_q1_unchecked(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        return 1.0;
    }
    let mu = 0.5 * b * b;
    if a == 0.0 {
        return (-mu).exp();
    }
    let lambda = 0.5 * a * a;
    // Q1 = P[N_mu <= N_lambda] for independent Poisson counts. Sum whichever
    // of Q1 and 1 - Q1 is the smaller so the result keeps relative accuracy.
    if b < a {
        1.0 - poisson_order_prob(mu, lambda, 1).clamp(0.0, 1.0)
    } else {
        poisson_order_prob(lambda, mu, 0).clamp(0.0, 1.0)
    }
}

/// `P[N_x + shift <= N_w]` style sum: `Σ_k Pois(k; w) · P[Pois(x) <= k - shift]`.
fn poisson_order_prob(w: f64, x: f64, shift: u64) -> f64 {
    let ln_w = w.ln();
    let ln_x = x.ln();

    // Mixing weights beyond ±12 standard deviations of Pois(w) are below 1e-30.
    let spread = 12.0 * w.sqrt() + 30.0;
    let k_lo = (w - spread).floor().max(0.0) as u64;
    let k_hi = (w + spread).ceil() as u64;

    // cdf_x holds P[Pois(x) <= k - shift].
    let mut ln_pmf_x = -x;
    let mut cdf_x = 0.0;
    let mut ln_pmf_w = -w;
    let mut total = 0.0;
    for k in 0..=k_hi {
        if k > 0 {
            ln_pmf_w += ln_w - (k as f64).ln();
        }
        if k >= shift {
            let j = k - shift;
            if j > 0 {
                ln_pmf_x += ln_x - (j as f64).ln();
            }
            cdf_x += ln_pmf_x.exp();
        }
        if k >= k_lo {
            total += ln_pmf_w.exp() * cdf_x.min(1.0);
        }
    }
    total
}

/// Rayleigh density `Ra(x, σ²) = (x/σ²) exp(-x²/(2σ²))`.
pub fn rayleigh_pdf(x: f64, variance: PositiveReal) -> Result<f64> {
    check_finite_nonneg("rayleigh_pdf (x)", x)?;
    Ok(rayleigh_density(x, variance.get()))
}

/// Rician density `Ri(x, y, σ²) = (x/σ²) exp(-(x²+y²)/(2σ²)) I0(xy/σ²)`.
pub fn rician_pdf(x: f64, y: f64, variance: PositiveReal) -> Result<f64> {
    check_finite_nonneg("rician_pdf (x)", x)?;
    check_finite_nonneg("rician_pdf (y)", y)?;
    Ok(rician_density(x, y, variance.get()))
}

#[inline]
pub(crate) fn rayleigh_density(x: f64, variance: f64) -> f64 {
    x / variance * (-0.5 * x * x / variance).exp()
}

#[inline]
pub(crate) fn rician_density(x: f64, y: f64, variance: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let d = x - y;
    x / variance * (-0.5 * d * d / variance).exp() * i0_scaled(x * y / variance)
}

fn check_finite_nonneg(what: &str, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::domain(format!("{what}: argument must be finite, got {x}")));
    }
    if x < 0.0 {
        return Err(Error::domain(format!("{what}: argument must be >= 0, got {x}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `exp(-x) I0(x) = (1/π) ∫_0^π exp(x (cos θ - 1)) dθ`; the trapezoid rule
    /// on this periodic integrand converges geometrically.
    fn i0_scaled_by_angle(x: f64) -> f64 {
        let n = 20_000;
        let h = std::f64::consts::PI / n as f64;
        let mut s = 0.5 * (1.0 + (-2.0 * x).exp());
        for j in 1..n {
            s += (x * ((j as f64 * h).cos() - 1.0)).exp();
        }
        s * h / std::f64::consts::PI
    }

    /// Power series summed in log space with a running ln(k!).
    fn i0_scaled_by_log_series(x: f64) -> f64 {
        if x == 0.0 {
            return 1.0;
        }
        let ln_half = (0.5 * x).ln();
        let mut ln_fact = 0.0;
        let mut sum = 0.0;
        for k in 0..5000u32 {
            if k > 0 {
                ln_fact += (k as f64).ln();
            }
            let ln_term = 2.0 * k as f64 * ln_half - 2.0 * ln_fact - x;
            sum += ln_term.exp();
            if k as f64 > x && ln_term < -60.0 {
                break;
            }
        }
        sum
    }

    /// Composite Simpson on the defining integral of Q1.
    fn marcum_by_simpson(a: f64, b: f64) -> f64 {
        let upper = b.max(a) + 40.0;
        let n = 40_000;
        let h = (upper - b) / n as f64;
        let f = |t: f64| rician_density(t, a, 1.0);
        let mut s = f(b) + f(upper);
        for j in 1..n {
            let w = if j % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(b + j as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn i0_reference_values() {
        assert_eq!(bessel_i0(0.0).unwrap(), 1.0);
        let v1 = bessel_i0(1.0).unwrap();
        assert!((v1 - 1.2660658777520084).abs() / v1 < 1e-14);
        let v10 = bessel_i0(10.0).unwrap();
        assert!((v10 - 2815.716628466254).abs() / v10 < 1e-13);
    }

    #[test]
    fn i0_matches_series_and_angle_oracles() {
        for j in 0..=140 {
            let x = 5.0 * j as f64;
            let got = i0_scaled(x);
            let series = i0_scaled_by_log_series(x);
            let angle = i0_scaled_by_angle(x);
            // The log-space oracle carries ~x·ε of rounding in its exponents.
            let series_tol = 1e-12 + 1e-14 * x;
            assert!((got - series).abs() <= series_tol * series, "x={x}: {got} vs {series}");
            assert!((got - angle).abs() <= 1e-12 * angle, "x={x}: {got} vs {angle}");
        }
        // Both sides of the series/asymptotic switch.
        for x in [14.5, 14.999, 15.0, 15.001, 16.0, 20.0] {
            let got = i0_scaled(x);
            let want = i0_scaled_by_log_series(x);
            assert!((got - want).abs() <= 1e-12 * want, "x={x}");
        }
    }

    #[test]
    fn i0_rejects_non_finite() {
        assert!(matches!(bessel_i0(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(bessel_i0_scaled(f64::INFINITY), Err(Error::Domain(_))));
        assert!(bessel_i0(-1.0).is_err());
    }

    #[test]
    fn marcum_edge_values() {
        assert_eq!(marcum_q1(3.0, 0.0).unwrap(), 1.0);
        assert!((marcum_q1(0.0, 2.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
        let want = marcum_by_simpson(1.0, 1.0);
        assert!((marcum_q1(1.0, 1.0).unwrap() - want).abs() < 1e-10);
        assert!(marcum_q1(-1.0, 1.0).is_err());
        assert!(marcum_q1(1.0, -1.0).is_err());
    }

    #[test]
    fn marcum_matches_quadrature_of_definition() {
        for ia in 0..10 {
            for ib in 0..10 {
                let a = 5.0 * ia as f64 + 0.3;
                let b = 5.0 * ib as f64 + 0.1;
                let got = marcum_q1(a, b).unwrap();
                let want = marcum_by_simpson(a, b);
                assert!((got - want).abs() < 1e-10, "a={a} b={b}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn marcum_is_stable_for_large_noncentrality() {
        let q = marcum_q1(50.0, 50.0).unwrap();
        assert!((q - 0.5).abs() < 0.01, "{q}");
        assert!(marcum_q1(50.0, 30.0).unwrap() > 1.0 - 1e-12);
        assert!(marcum_q1(50.0, 70.0).unwrap() < 1e-12);
    }

    #[test]
    fn rayleigh_values() {
        let var = PositiveReal::new(4.0).unwrap();
        assert_eq!(rayleigh_pdf(0.0, var).unwrap(), 0.0);
        let want = 0.5 * (-0.5f64).exp();
        assert!((rayleigh_pdf(2.0, var).unwrap() - want).abs() < 1e-15);
        assert!(rayleigh_pdf(-1.0, var).is_err());
        assert!(PositiveReal::new(0.0).is_err());
    }

    #[test]
    fn rician_survives_large_arguments() {
        let var = PositiveReal::new(1.0).unwrap();
        let got = rician_pdf(50.0, 50.0, var).unwrap();
        // ln Ri = ln x - (x²+y²)/2 + ln I0(xy), with ln I0 from the log-space series.
        let z = 2500.0f64;
        let ln_i0 = z + i0_scaled_by_log_series(z).ln();
        let want = (50.0f64.ln() - 2500.0 + ln_i0).exp();
        assert!(got.is_finite());
        assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
    }

    proptest! {
        #[test]
        fn rician_with_zero_offset_is_rayleigh(x in 0.0f64..200.0, var in 0.1f64..1e4) {
            let v = PositiveReal::new(var).unwrap();
            let ri = rician_pdf(x, 0.0, v).unwrap();
            let ra = rayleigh_pdf(x, v).unwrap();
            prop_assert!((ri - ra).abs() <= 1e-14 * ra.max(1e-300));
        }

        #[test]
        fn marcum_monotone(a in 0.0f64..30.0, b in 0.0f64..40.0, da in 0.0f64..3.0, db in 0.0f64..3.0) {
            let base = marcum_q1(a, b).unwrap();
            prop_assert!(marcum_q1(a, b + db).unwrap() <= base + 1e-13);
            prop_assert!(marcum_q1(a + da, b).unwrap() >= base - 1e-13);
        }
    }
}
