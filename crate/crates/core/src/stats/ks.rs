//! Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};

pub const KS_ALPHA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Column-wise KS comparison of two matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsMatrixReport {
    pub per_dimension: Vec<KsResult>,
    pub median_p: f64,
    pub pass_fraction: f64,
    pub passed: bool,
}

fn sorted_finite(xs: &[f64], name: &str) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(GadError::Argument(format!("KS sample {name} is empty")));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(GadError::Argument(format!("KS sample {name} has non-finite values")));
    }
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

/// Supremum ECDF gap of two ascending samples.
pub fn ks_statistic_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form of the CDF; converges fast for small lambda.
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for j in 1..=20 {
            let k = (2 * j - 1) as f64;
            let term = (c * k * k).exp();
            cdf += term;
            if term < 1e-18 {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * cdf;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for j in 1..=100 {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * lambda * lambda).exp();
            sum += if j % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value for statistic `d` with effective size `ne`, using
/// Stephens' finite-sample scaling of the Kolmogorov argument.
pub fn ks_p_value(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let a = sorted_finite(a, "a")?;
    let b = sorted_finite(b, "b")?;
    let statistic = ks_statistic_sorted(&a, &b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(KsResult {
        statistic,
        p_value: ks_p_value(statistic, na * nb / (na + nb)),
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Per-dimension KS; passes when the median p-value exceeds 0.05.
pub fn ks_matrix(a: ArrayView2<'_, f32>, b: ArrayView2<'_, f32>) -> Result<KsMatrixReport> {
    if a.ncols() != b.ncols() {
        return Err(GadError::Shape(format!(
            "KS matrices have {} and {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.ncols() == 0 {
        return Err(GadError::Argument("KS matrices have no columns".into()));
    }
    let per_dimension = (0..a.ncols())
        .into_par_iter()
        .map(|j| {
            let ca: Vec<f64> = a.column(j).iter().map(|&x| x as f64).collect();
            let cb: Vec<f64> = b.column(j).iter().map(|&x| x as f64).collect();
            ks_two_sample(&ca, &cb)
        })
        .collect::<Result<Vec<_>>>()?;
    let ps: Vec<f64> = per_dimension.iter().map(|r| r.p_value).collect();
    let median_p = median(&ps);
    let pass_fraction = ps.iter().filter(|&&p| p > KS_ALPHA).count() as f64 / ps.len() as f64;
    Ok(KsMatrixReport {
        per_dimension,
        median_p,
        pass_fraction,
        passed: median_p > KS_ALPHA,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn identical_samples() {
        let r = ks_two_sample(&[3.0, 1.0, 2.0, 2.0], &[2.0, 3.0, 1.0, 2.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn disjoint_samples() {
        let r = ks_two_sample(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
    }

    #[test]
    fn interleaved_thirds() {
        // ECDF gap is 1/3 just after each point of `a`.
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5]).unwrap();
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_sample_is_an_argument_error() {
        assert!(matches!(ks_two_sample(&[], &[1.0]), Err(GadError::Argument(_))));
    }

    #[test]
    fn kolmogorov_reference_values() {
        // P(K > 1.36) ~ 0.0494, P(K > 1.0) ~ 0.2700
        assert!((kolmogorov_sf(1.36) - 0.04946).abs() < 1e-4);
        assert!((kolmogorov_sf(1.0) - 0.26999967).abs() < 1e-6);
        assert!((kolmogorov_sf(0.5) - 0.96394524).abs() < 1e-6);
        // the two series agree around the switch point
        let below = kolmogorov_sf(1.18 - 1e-9);
        let above = kolmogorov_sf(1.18);
        assert!((below - above).abs() < 1e-9);
    }

    #[test]
    fn matrix_single_dimension_median_is_that_p() {
        let a = Array2::from_shape_vec((4, 1), vec![0.1f32, 0.2, 0.3, 0.4]).unwrap();
        let b = Array2::from_shape_vec((3, 1), vec![0.15f32, 0.5, 0.9]).unwrap();
        let rep = ks_matrix(a.view(), b.view()).unwrap();
        assert_eq!(rep.median_p, rep.per_dimension[0].p_value);
    }

    #[test]
    fn matrix_column_mismatch() {
        let a = Array2::<f32>::zeros((3, 2));
        let b = Array2::<f32>::zeros((3, 3));
        assert!(matches!(ks_matrix(a.view(), b.view()), Err(GadError::Shape(_))));
    }
}
