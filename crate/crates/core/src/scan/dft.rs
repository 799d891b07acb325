use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex amplitude of the `f_k` component of a uniformly sampled signal,
/// scaled so that `A·cos(2π f_k t + θ)` yields `A·e^{jθ}`. Phase is
/// referenced to the first sample.
///
/// The window must span an integer number of periods to within one sample.
pub fn single_bin_dft(samples: &[f64], dt: f64, f_k: f64) -> Result<Complex64> {
    if !(dt > 0.0 && f_k > 0.0) {
        return Err(Error::domain(
            "dft",
            format!("dt and f_k must be > 0 (dt = {dt}, f_k = {f_k})"),
        ));
    }
    let n = samples.len();
    let periods = n as f64 * dt * f_k;
    let whole = periods.round();
    if whole < 1.0 || (periods - whole).abs() > f_k * dt * (1.0 + 1e-9) {
        return Err(Error::NonIntegerWindow {
            samples: n,
            periods,
            f_hz: f_k,
        });
    }
    let w = 2.0 * PI * f_k * dt;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &x) in samples.iter().enumerate() {
        let (s, c) = (w * k as f64).sin_cos();
        acc += Complex64::new(x * c, -x * s);
    }
    Ok(acc * (2.0 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(a: f64, f: f64, theta: f64, dt: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| a * (2.0 * PI * f * k as f64 * dt + theta).cos())
            .collect()
    }

    #[test]
    fn cosine_and_sine() {
        let dt = 20e-6;
        let n = (10.0f64 / 25.0 / dt).round() as usize;
        let c = single_bin_dft(&tone(0.01, 25.0, 0.0, dt, n), dt, 25.0).unwrap();
        assert!((c - Complex64::new(0.01, 0.0)).norm() < 1e-10);
        let s: Vec<f64> = (0..n)
            .map(|k| 0.01 * (2.0 * PI * 25.0 * k as f64 * dt).sin())
            .collect();
        let s = single_bin_dft(&s, dt, 25.0).unwrap();
        assert!((s - Complex64::new(0.0, -0.01)).norm() < 1e-10);
    }

    #[test]
    fn constant_is_orthogonal() {
        let dt = 20e-6;
        let n = (10.0f64 / 25.0 / dt).round() as usize;
        let c = single_bin_dft(&vec![1.0; n], dt, 25.0).unwrap();
        assert!(c.norm() < 1e-12);
    }

    #[test]
    fn other_harmonics_vanish() {
        let dt = 1.0 / (7.0 * 400.0);
        let n = 10 * 400;
        let mut x = tone(0.5, 14.0, 0.3, dt, n);
        for (k, v) in tone(0.2, 7.0, 1.1, dt, n).into_iter().enumerate() {
            x[k] += v;
        }
        let c = single_bin_dft(&x, dt, 7.0).unwrap();
        assert!((c - Complex64::from_polar(0.2, 1.1)).norm() < 1e-10);
    }

    #[test]
    fn fractional_window_rejected() {
        let dt = 1e-4;
        let n = (2.5 / 10.0 / dt) as usize;
        assert!(matches!(
            single_bin_dft(&vec![0.0; n], dt, 10.0),
            Err(Error::NonIntegerWindow { .. })
        ));
        assert!(single_bin_dft(&[1.0; 10], dt, 10.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn recovers_any_tone(a in 1e-3f64..2.0, theta in -3.1f64..3.1, f in 5.0f64..100.0, m in 200usize..2000, p in 5usize..12) {
                let dt = 1.0 / (f * m as f64);
                let c = single_bin_dft(&tone(a, f, theta, dt, p * m), dt, f).unwrap();
                prop_assert!((c - Complex64::from_polar(a, theta)).norm() < 1e-10);
            }
        }
    }
}
