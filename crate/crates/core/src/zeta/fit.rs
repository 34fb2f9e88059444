//! Least-squares fits of `N(B) / B` by polynomials in `log B`.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::Serialize;

use super::ZetaError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResidual {
    pub b: u64,
    /// `N(B) / B`.
    pub value: f64,
    pub fitted: f64,
    /// `|value - fitted| / value`.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub n: usize,
    pub degree: usize,
    pub sample_count: usize,
    /// Coefficients of `P`, constant term first, in powers of `log B`.
    pub coefficients: Vec<f64>,
    pub leading_positive: bool,
    pub max_relative_residual: f64,
    pub rms_relative_residual: f64,
    pub warning: Option<String>,
    #[serde(skip)]
    pub residuals: Vec<FitResidual>,
}

impl FitResult {
    /// `P(log b)`.
    pub fn evaluate(&self, b: f64) -> f64 {
        horner(&self.coefficients, b.ln())
    }

    pub fn residual_at(&self, b: u64) -> Option<&FitResidual> {
        self.residuals.iter().find(|r| r.b == b)
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Ordinary least squares of `y` against `1, log B, ..., (log B)^degree`.
///
/// The abscissa is rescaled to `[0, 1]` before solving and the coefficients
/// are mapped back, which keeps the Vandermonde matrix well conditioned.
pub fn fit_log_polynomial(points: &[(f64, f64)], degree: usize) -> Result<Vec<f64>, ZetaError> {
    if points.len() < degree + 1 {
        return Err(ZetaError::InsufficientSamples {
            needed: degree + 1,
            got: points.len(),
        });
    }
    let scale = points
        .iter()
        .map(|&(b, _)| b.ln().abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let a = DMatrix::from_fn(points.len(), degree + 1, |i, j| (points[i].0.ln() / scale).powi(j as i32));
    let y = DVector::from_iterator(points.len(), points.iter().map(|&(_, v)| v));
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    if svd.singular_values.min() <= max_sv * 1e-13 {
        return Err(ZetaError::Singular);
    }
    let sol = svd.solve(&y, max_sv * 1e-14).map_err(|_| ZetaError::Singular)?;
    Ok(sol.iter().enumerate().map(|(j, c)| c / scale.powi(j as i32)).collect())
}

/// Fits `N_n(B) / B` by a polynomial of degree `C(n,2) - 1` in `log B`.
///
/// Needs at least `degree + 2` samples with `max B / min B >= 100`. A
/// warning is attached when the degree exceeds the number of decades
/// covered, where the higher coefficients are poorly determined.
pub fn asympt_fit(n: usize, samples: &[(u64, BigUint)]) -> Result<FitResult, ZetaError> {
    let points: Vec<(f64, f64)> = samples
        .iter()
        .map(|(b, nb)| (*b as f64, nb.to_f64().unwrap_or(f64::INFINITY)))
        .collect();
    asympt_fit_points(n, &points)
}

/// [`asympt_fit`] on real-valued samples `(B, N(B))`.
pub fn asympt_fit_points(n: usize, samples: &[(f64, f64)]) -> Result<FitResult, ZetaError> {
    if n < 2 {
        return Err(ZetaError::InvalidArgument(format!("growth fits need n >= 2, got {n}")));
    }
    let degree = n * (n - 1) / 2 - 1;
    let needed = degree + 2;
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    if samples.is_empty() || lo < 1.0 {
        return Err(ZetaError::InvalidArgument("samples need B >= 1".into()));
    }
    let decades = (hi / lo).log10();
    if samples.len() < needed || decades < 2.0 - 1e-12 {
        return Err(ZetaError::InsufficientSamples {
            needed,
            got: samples.len(),
        });
    }
    let points: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(b, nb)| (b, nb / b))
        .collect();
    let coefficients = fit_log_polynomial(&points, degree)?;
    let residuals: Vec<FitResidual> = points
        .iter()
        .map(|&(b, value)| {
            let fitted = horner(&coefficients, b.ln());
            FitResidual {
                b: b.round() as u64,
                value,
                fitted,
                relative: (value - fitted).abs() / value.abs(),
            }
        })
        .collect();
    let max_relative_residual = residuals.iter().map(|r| r.relative).fold(0.0, f64::max);
    let rms_relative_residual =
        (residuals.iter().map(|r| r.relative * r.relative).sum::<f64>() / residuals.len() as f64).sqrt();
    let whole_decades = (decades + 1e-9).floor() as usize;
    let warning = (degree > whole_decades).then(|| {
        format!("{degree} log-powers over {whole_decades} decades of B is under-determined")
    });
    Ok(FitResult {
        n,
        degree,
        sample_count: samples.len(),
        leading_positive: coefficients[degree] > 0.0,
        coefficients,
        max_relative_residual,
        rms_relative_residual,
        warning,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_planted_quadratic() {
        let q = [0.25, 0.5, 3.0];
        let points: Vec<(f64, f64)> = (0..=300)
            .map(|i| {
                let b = 10f64.powf(i as f64 / 50.0);
                (b, b * horner(&q, b.ln()))
            })
            .collect();
        let fit = asympt_fit_points(3, &points).unwrap();
        for (got, want) in fit.coefficients.iter().zip(q) {
            assert!((got - want).abs() / want.abs() < 1e-6, "{got} vs {want}");
        }
        assert!(fit.leading_positive);
        assert!(fit.warning.is_none());
    }

    #[test]
    fn constant_ratio_gives_unit_polynomial() {
        let samples: Vec<_> = (1..=1000u64).map(|b| (b, BigUint::from(b))).collect();
        let fit = asympt_fit(3, &samples).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-9);
        assert!(fit.coefficients[1..].iter().all(|c| c.abs() < 1e-9));
        assert!(fit.max_relative_residual < 1e-9);
    }

    #[test]
    fn sample_requirements() {
        let few: Vec<_> = (1..=3u64).map(|b| (b * 100, BigUint::from(b))).collect();
        assert!(matches!(asympt_fit(3, &few), Err(ZetaError::InsufficientSamples { .. })));
        let narrow: Vec<_> = (10..=99u64).map(|b| (b, BigUint::from(b))).collect();
        assert!(matches!(asympt_fit(3, &narrow), Err(ZetaError::InsufficientSamples { .. })));
        let wide: Vec<_> = (1..=10_000u64).map(|b| (b, BigUint::from(b * 2))).collect();
        let fit = asympt_fit(4, &wide).unwrap();
        assert_eq!(fit.degree, 5);
        assert!(fit.warning.is_some());
    }
}
