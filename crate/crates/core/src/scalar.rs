//! Floating point abstraction shared by the model, the estimators and the
//! exact oracle.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Scalar type for parameters, fields and expectations: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Spin value `±1` as a scalar.
    #[inline]
    fn spin(s: i8) -> Self {
        Self::lit(s as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `ln cosh(x)`, stable for large `|x|`.
#[inline]
pub fn ln_cosh<F: Scalar>(x: F) -> F {
    let ax = x.abs();
    if ax < F::lit(20.0) {
        ax.cosh().ln()
    } else {
        ax - F::LN_2() + (-(ax + ax)).exp().ln_1p()
    }
}

/// `atanh(tanh(a) * tanh(b))`, evaluated as `(ln cosh(a+b) - ln cosh(a-b)) / 2`
/// so that the argument of `atanh` never has to approach `±1` numerically.
#[inline]
pub fn atanh_tanh_product<F: Scalar>(a: F, b: F) -> F {
    (ln_cosh(a + b) - ln_cosh(a - b)) * F::lit(0.5)
}

/// `ln(1 - tanh²(u) tanh²(v))`, evaluated through the identity
/// `1 - tanh²u tanh²v = cosh(u+v) cosh(u-v) / (cosh²u cosh²v)`.
#[inline]
pub fn ln_one_minus_tanh2_product<F: Scalar>(u: F, v: F) -> F {
    ln_cosh(u + v) + ln_cosh(u - v) - F::lit(2.0) * (ln_cosh(u) + ln_cosh(v))
}

/// Numerically stable `ln Σ exp(x_k)`; returns `-inf` for an empty slice.
pub fn log_sum_exp<F: Scalar>(xs: &[F]) -> F {
    let max = xs.iter().copied().fold(F::neg_infinity(), F::max);
    if !max.is_finite() {
        return max;
    }
    let sum: F = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ln_cosh_matches_direct_formula() {
        for &x in &[-30.0f64, -5.0, -0.3, 0.0, 1e-4, 2.0, 19.9, 20.1, 40.0] {
            let direct = if x.abs() < 300.0 { x.cosh().ln() } else { f64::NAN };
            assert_abs_diff_eq!(ln_cosh(x), direct, epsilon = 1e-12);
        }
        // far beyond cosh overflow
        assert_abs_diff_eq!(ln_cosh(1000.0f64), 1000.0 - 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn atanh_tanh_product_agrees_with_naive() {
        for &(a, b) in &[(0.1f64, 0.2), (-0.7, 0.3), (1.5, -2.0), (0.0, 3.0), (1e-3, 1e-3)] {
            let naive = (a.tanh() * b.tanh()).atanh();
            assert_abs_diff_eq!(atanh_tanh_product(a, b), naive, epsilon = 1e-13);
        }
        // Saturated regime where the naive formula returns inf.
        let v = atanh_tanh_product(40.0f64, 40.0);
        assert!(v.is_finite());
        assert_abs_diff_eq!(v, 40.0 - 0.5 * 2f64.ln() + 0.0, epsilon = 1e-9);
    }

    #[test]
    fn ln_one_minus_tanh2_product_agrees_with_naive() {
        for &(u, v) in &[(0.1f64, 0.2), (-0.7, 0.3), (1.5, -2.0), (0.0, 3.0)] {
            let naive = (1.0 - u.tanh().powi(2) * v.tanh().powi(2)).ln();
            assert_abs_diff_eq!(ln_one_minus_tanh2_product(u, v), naive, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_basic() {
        assert_abs_diff_eq!(log_sum_exp(&[0.0f64, 0.0]), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(log_sum_exp(&[1000.0f64, 1000.0]), 1000.0 + 2f64.ln(), epsilon = 1e-12);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
    }
}
