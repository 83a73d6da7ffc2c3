//! Log-gamma and digamma.
//!
//! `log_gamma` uses the Lanczos approximation (g = 607/128, 15 terms) with
//! the reflection-free shift for arguments below 0.5. `digamma` shifts the
//! argument above 6 with the recurrence and then applies the asymptotic
//! series.

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 607.0 / 128.0;

const LANCZOS_COEFFS: [f64; 15] = [
    0.999_999_999_999_997_1,
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_746,
    -0.491_913_816_097_620_2,
    0.339_946_499_848_118_9e-4,
    0.465_236_289_270_485_7e-4,
    -0.983_744_753_048_795_8e-4,
    0.158_088_703_224_912_5e-3,
    -0.210_264_441_724_104_9e-3,
    0.217_439_618_115_212_6e-3,
    -0.164_318_106_536_763_9e-3,
    0.844_182_239_838_527_4e-4,
    -0.261_908_384_015_814_1e-4,
    0.368_991_826_595_316_2e-5,
];

/// ln(sqrt(2π))
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_unchecked(x))
}

/// `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    // Exact zeros at the two roots keep log-marginals of empty data at 0.
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x < 0.5 {
        // Γ(x) = Γ(x + 1) / x
        return lanczos_ln_gamma(x + 1.0) - x.ln();
    }
    lanczos_ln_gamma(x)
}

fn lanczos_ln_gamma(x: f64) -> f64 {
    debug_assert!(x >= 0.5);
    let z = x - 1.0;
    let mut sum = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        sum += c / (z + i as f64);
    }
    let base = z + LANCZOS_G + 0.5;
    sum.ln() + LN_SQRT_2PI + (z + 0.5) * base.ln() - base
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli terms B_2k / (2k x^2k), k = 1..7
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + x.ln() - 0.5 * inv - series
}

/// `ψ(φ + c) − ψ(φ)`. Integer increments are summed term by term, which
/// avoids cancellation when `φ` is tiny.
pub(crate) fn digamma_increment(phi: f64, c: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    if c.fract() == 0.0 && c <= 64.0 {
        let steps = c as usize;
        return (0..steps).map(|j| 1.0 / (phi + j as f64)).sum();
    }
    digamma_unchecked(phi + c) - digamma_unchecked(phi)
}

/// `ln Γ(φ + c) − ln Γ(φ)`, summed exactly for small integer `c`.
pub(crate) fn ln_gamma_increment(phi: f64, c: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    if c.fract() == 0.0 && c <= 16.0 {
        let steps = c as usize;
        return (0..steps).map(|j| (phi + j as f64).ln()).sum();
    }
    ln_gamma_unchecked(phi + c) - ln_gamma_unchecked(phi)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    const LN_SQRT_PI: f64 = 0.572_364_942_924_700_1;

    extern "C" {
        fn lgamma(x: f64) -> f64;
    }

    fn libm_lgamma(x: f64) -> f64 {
        unsafe { lgamma(x) }
    }

    #[test]
    fn log_gamma_closed_forms() {
        assert_eq!(log_gamma(1.0).unwrap(), 0.0);
        assert!((log_gamma(0.5).unwrap() - LN_SQRT_PI).abs() < 1e-14);
        let fact9: f64 = (1..=9).map(|i| i as f64).product();
        let v = log_gamma(10.0).unwrap();
        assert!(((v - fact9.ln()) / fact9.ln()).abs() < 1e-13);
    }

    #[test]
    fn log_gamma_integer_factorials() {
        let mut ln_fact = 0.0f64;
        for n in 1..170u32 {
            // ln Γ(n + 1) = ln n!
            ln_fact += (n as f64).ln();
            let v = log_gamma(n as f64 + 1.0).unwrap();
            if ln_fact > 0.0 {
                assert!(((v - ln_fact) / ln_fact).abs() < 1e-12, "n={n}");
            }
        }
    }

    #[test]
    fn log_gamma_matches_libm_over_range() {
        let mut x = 1e-6;
        while x < 1e6 {
            let expect = libm_lgamma(x);
            let got = log_gamma(x).unwrap();
            let scale = expect.abs().max(1.0);
            assert!(((got - expect) / scale).abs() < 1e-12, "x={x} got={got} expect={expect}");
            x *= 1.37;
        }
    }

    #[test]
    fn log_gamma_rejects_nonpositive() {
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn digamma_closed_forms() {
        assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-12);
        assert!((digamma(2.0).unwrap() - (1.0 - EULER_GAMMA)).abs() < 1e-12);
        let half = -EULER_GAMMA - 2.0 * std::f64::consts::LN_2;
        assert!((digamma(0.5).unwrap() - half).abs() < 1e-12);
    }

    #[test]
    fn digamma_recurrence_sweep() {
        let mut x = 0.1;
        while x <= 100.0 {
            let d = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            assert!((d - 1.0 / x).abs() < 1e-10, "x={x}");
            x += 0.1;
        }
    }

    #[test]
    fn digamma_matches_finite_difference_of_log_gamma() {
        for &x in &[1e-4f64, 0.01, 0.3, 1.7, 5.5, 12.0, 250.0, 1e4] {
            let h = 1e-5 * x.max(1e-3);
            let fd = (libm_lgamma(x + h) - libm_lgamma(x - h)) / (2.0 * h);
            let got = digamma(x).unwrap();
            assert!((got - fd).abs() / got.abs().max(1.0) < 1e-6, "x={x}");
        }
    }

    #[test]
    fn digamma_rejects_nonpositive() {
        assert!(digamma(0.0).is_err());
        assert!(digamma(-2.0).is_err());
    }

    #[test]
    fn increments_agree_with_direct_differences() {
        for &phi in &[1e-10, 1e-3, 0.4, 2.5, 30.0] {
            for &c in &[0.0, 0.5, 1.0, 3.0, 7.0, 20.0, 100.0] {
                let d = digamma_increment(phi, c);
                let direct = digamma_unchecked(phi + c) - digamma_unchecked(phi);
                assert!((d - direct).abs() <= 1e-9 * direct.abs().max(1.0), "phi={phi} c={c}");
                let g = ln_gamma_increment(phi, c);
                let direct = libm_lgamma(phi + c) - libm_lgamma(phi);
                assert!((g - direct).abs() <= 1e-10 * direct.abs().max(1.0), "phi={phi} c={c}");
            }
        }
    }
}
