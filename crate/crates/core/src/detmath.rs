//! Platform-independent elementary functions.
//!
//! `f64::exp` defers to the system libm, whose last-ulp behavior differs
//! between platforms. Anything that must be a pure function of its inputs on
//! every platform (entropy-coding tables) goes through these routines, which
//! use only correctly rounded IEEE-754 add, mul, div and rounding.

const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;

/// `e^x` from Cody-Waite reduction and a degree-13 Taylor polynomial.
pub fn exp(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    if x > 709.78 {
        return f64::INFINITY;
    }
    if x < -745.2 {
        return 0.0;
    }
    let k = (x * std::f64::consts::LOG2_E).round();
    let r = (x - k * LN2_HI) - k * LN2_LO;

    let mut p = 1.0;
    for n in (1..=13).rev() {
        p = 1.0 + p * r / f64::from(n);
    }
    scale_by_pow2(p, k as i32)
}

fn pow2(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

fn scale_by_pow2(x: f64, k: i32) -> f64 {
    if (-1022..=1023).contains(&k) {
        x * pow2(k)
    } else {
        let half = k / 2;
        x * pow2(half) * pow2(k - half)
    }
}

const ERF_P: f64 = 0.327_591_1;
const ERF_A: [f64; 5] = [0.254_829_592, -0.284_496_736, 1.421_413_741, -1.453_152_027, 1.061_405_429];

/// Upper tail `1 - Phi(x)` of the standard normal for `x >= 0`, using the
/// Abramowitz-Stegun 7.1.26 rational approximation of `erfc`.
pub fn normal_upper_tail(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    let z = x / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + ERF_P * z);
    let poly = t * (ERF_A[0] + t * (ERF_A[1] + t * (ERF_A[2] + t * (ERF_A[3] + t * ERF_A[4]))));
    0.5 * poly * exp(-z * z)
}

/// Standard normal CDF built on [`normal_upper_tail`].
pub fn normal_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 - normal_upper_tail(x)
    } else {
        normal_upper_tail(-x)
    }
}
