//! Singular values and everything derived from them: stable rank, energy
//! concentration, power-law fits, Weyl gaps, and relative per-index errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::{make_stream, DenseMatrix};

/// Ordinary least-squares fit of `ln sigma_k` on `ln k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerFit {
    /// `exp(intercept)`: the spectral magnitude constant.
    pub mu: f64,
    /// Negated slope; estimates half the Zipf exponent.
    pub decay: f64,
    pub r_squared: f64,
    /// 1-based inclusive fit range.
    pub k_range: (usize, usize),
    /// Set when the target has zero variance (flat spectrum).
    pub degenerate: bool,
}

/// Descending singular values plus derived scalar metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub sigma: Vec<f64>,
    pub frob_sq: f64,
    pub spec_sq: f64,
    pub stable_rank: f64,
    pub power_fit: Option<PowerFit>,
}

/// Per-index relative errors, with indices excluded by the floor reported
/// separately. All indices are 1-based ranks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelativeErrors {
    pub values: Vec<(usize, f64)>,
    pub excluded: Vec<usize>,
}

/// All `min(m, n)` singular values of `a`, descending.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    let svd = a.to_nalgebra().svd(false, false);
    let mut sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    if sigma.iter().any(|s| !s.is_finite()) {
        return Err(Error::Data("SVD produced non-finite singular values".into()));
    }
    sigma.sort_by(|x, y| y.total_cmp(x));
    Ok(sigma)
}

/// Eigenvalues of a symmetric matrix, descending. The caller is responsible
/// for symmetry; the routine averages `a` with its transpose first.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    if a.rows() != a.cols() {
        return Err(Error::Shape(format!(
            "eigenvalues need a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let m = a.to_nalgebra();
    let sym = (&m + m.transpose()) * 0.5;
    let mut eigs: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(|x, y| y.total_cmp(x));
    Ok(eigs)
}

/// Top singular value by power iteration on `A^T A`.
///
/// Converges from below; accurate to ~1e-9 relative on matrices with a
/// nondegenerate top gap, which is all the Monte Carlo medians need. Exact
/// predicates (Weyl) use [`singular_values`] instead.
pub fn spectral_norm_estimate(a: &DenseMatrix) -> f64 {
    let (m, n) = (a.rows(), a.cols());
    let mut rng = make_stream(0x5EC7_0A11, 0);
    let mut v: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);

    let data = a.entries();
    let mut av = vec![0.0; m];
    let mut atav = vec![0.0; n];
    let mut lambda_prev = 0.0f64;
    // Near-degenerate top pairs converge slowly between sigma_2 and
    // sigma_1; since those differ by well under 1% on every matrix this
    // estimator sees, a capped iteration count keeps the cost linear
    // without hurting the statistics it feeds.
    for iter in 0..120 {
        for (r, slot) in av.iter_mut().enumerate() {
            let row = &data[r * n..(r + 1) * n];
            *slot = row.iter().zip(&v).map(|(x, y)| x * y).sum();
        }
        atav.iter_mut().for_each(|x| *x = 0.0);
        for (r, &avr) in av.iter().enumerate() {
            let row = &data[r * n..(r + 1) * n];
            for (c, x) in row.iter().enumerate() {
                atav[c] += x * avr;
            }
        }
        let lambda = atav.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
        let norm = atav.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (slot, &x) in v.iter_mut().zip(&atav) {
            *slot = x / norm;
        }
        if iter > 4 && (lambda - lambda_prev).abs() <= 1e-11 * lambda.abs() {
            break;
        }
        lambda_prev = lambda;
    }
    let mut final_av = vec![0.0; m];
    for (r, slot) in final_av.iter_mut().enumerate() {
        let row = &data[r * n..(r + 1) * n];
        *slot = row.iter().zip(&v).map(|(x, y)| x * y).sum();
    }
    final_av.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Stable rank `sum(sigma_k^2) / sigma_1^2`.
pub fn stable_rank(sigma: &[f64]) -> Result<f64> {
    if sigma.is_empty() {
        return Err(Error::Domain("empty spectrum".into()));
    }
    let top = sigma[0];
    if top <= 0.0 {
        return Err(Error::Domain(
            "stable rank is undefined for the zero matrix".into(),
        ));
    }
    Ok(sigma.iter().map(|s| s * s).sum::<f64>() / (top * top))
}

/// Fraction of squared-singular-value mass in the top `k` components
/// (`k` is a 1-based count).
pub fn energy_concentration(sigma: &[f64], k: usize) -> Result<f64> {
    if k < 1 || k > sigma.len() {
        return Err(Error::Index(format!(
            "k = {k} outside [1, {}]",
            sigma.len()
        )));
    }
    let head: f64 = sigma[..k].iter().map(|s| s * s).sum();
    let tail: f64 = sigma[k..].iter().map(|s| s * s).sum();
    let total = head + tail;
    if total <= 0.0 {
        return Err(Error::Domain(
            "energy concentration is undefined for the zero matrix".into(),
        ));
    }
    Ok(head / total)
}

/// OLS fit of `ln sigma_k` against `ln k` over the 1-based inclusive range
/// `[k_lo, k_hi]`. `decay` is the negated slope.
pub fn fit_power_law(sigma: &[f64], k_lo: usize, k_hi: usize) -> Result<PowerFit> {
    if k_lo < 1 || k_hi <= k_lo || k_hi > sigma.len() {
        return Err(Error::Domain(format!(
            "invalid fit range [{k_lo}, {k_hi}] for {} singular values",
            sigma.len()
        )));
    }
    if k_hi - k_lo + 1 < 3 {
        return Err(Error::Domain("power-law fit needs at least 3 points".into()));
    }
    let points: Vec<(f64, f64)> = (k_lo..=k_hi)
        .map(|k| {
            let s = sigma[k - 1];
            if s <= 0.0 {
                Err(Error::Domain(format!(
                    "sigma_{k} = {s} is not positive; cannot fit in log space"
                )))
            } else {
                Ok(((k as f64).ln(), s.ln()))
            }
        })
        .collect::<Result<_>>()?;

    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();

    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    // Zero-variance target: slope 0, zero residual; report r^2 = 1 flagged.
    let degenerate = syy <= f64::EPSILON * n * mean_y.abs().max(1.0);
    let r_squared = if degenerate { 1.0 } else { 1.0 - ss_res / syy };

    Ok(PowerFit {
        mu: intercept.exp(),
        decay: -slope,
        r_squared,
        k_range: (k_lo, k_hi),
        degenerate,
    })
}

/// Largest absolute per-index singular value shift `max_k |st_k - s_k|`.
pub fn weyl_gap(sigma: &[f64], sigma_tilde: &[f64]) -> Result<f64> {
    if sigma.len() != sigma_tilde.len() {
        return Err(Error::Shape(format!(
            "spectra have lengths {} and {}",
            sigma.len(),
            sigma_tilde.len()
        )));
    }
    Ok(sigma
        .iter()
        .zip(sigma_tilde)
        .map(|(a, b)| (b - a).abs())
        .fold(0.0, f64::max))
}

/// Relative errors `|st_k - s_k| / s_k` for indices with
/// `s_k > floor * s_1`; the rest are excluded and reported.
pub fn relative_errors(sigma: &[f64], sigma_tilde: &[f64], floor: f64) -> Result<RelativeErrors> {
    if sigma.len() != sigma_tilde.len() {
        return Err(Error::Shape(format!(
            "spectra have lengths {} and {}",
            sigma.len(),
            sigma_tilde.len()
        )));
    }
    if floor < 0.0 {
        return Err(Error::Domain("floor must be nonnegative".into()));
    }
    let top = sigma.first().copied().unwrap_or(0.0);
    let cutoff = floor * top;
    let mut values = Vec::new();
    let mut excluded = Vec::new();
    for (i, (&s, &st)) in sigma.iter().zip(sigma_tilde).enumerate() {
        if s > cutoff && s > 0.0 {
            values.push((i + 1, (st - s).abs() / s));
        } else {
            excluded.push(i + 1);
        }
    }
    Ok(RelativeErrors { values, excluded })
}

/// Default relative floor below which singular values are treated as
/// numerically zero in relative-error reports.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-10;

/// Default power-law fit head: `k in [1, ceil(0.1 * len)]`.
pub fn default_fit_range(spectrum_len: usize) -> (usize, usize) {
    (1, ((spectrum_len as f64) * 0.1).ceil().max(3.0) as usize)
}

/// One-stop spectral summary of a matrix.
pub fn summarize(a: &DenseMatrix, fit_range: Option<(usize, usize)>) -> Result<SpectralSummary> {
    let sigma = singular_values(a)?;
    summarize_spectrum(sigma, fit_range)
}

/// Summary from an already-computed descending spectrum.
pub fn summarize_spectrum(
    sigma: Vec<f64>,
    fit_range: Option<(usize, usize)>,
) -> Result<SpectralSummary> {
    let frob_sq: f64 = sigma.iter().map(|s| s * s).sum();
    let spec_sq = sigma[0] * sigma[0];
    let stable_rank = stable_rank(&sigma)?;
    let (lo, hi) = fit_range.unwrap_or_else(|| default_fit_range(sigma.len()));
    let hi = hi.min(sigma.len());
    let power_fit = if hi > lo && hi - lo + 1 >= 3 && sigma[..hi].iter().all(|s| *s > 0.0) {
        Some(fit_power_law(&sigma, lo, hi)?)
    } else {
        None
    };
    Ok(SpectralSummary {
        sigma,
        frob_sq,
        spec_sq,
        stable_rank,
        power_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorio::make_stream;

    fn mat(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn diagonal_spectrum() {
        let sigma = singular_values(&mat(&[vec![3.0, 0.0], vec![0.0, 1.0]])).unwrap();
        assert!((sigma[0] - 3.0).abs() < 1e-12);
        assert!((sigma[1] - 1.0).abs() < 1e-12);
    }

    /// Closed-form 2x2 symmetric oracle: eigenvalues (4 +- sqrt(4.04)) / 2.
    #[test]
    fn two_by_two_closed_form() {
        let sigma = singular_values(&mat(&[vec![3.0, 0.1], vec![0.1, 1.0]])).unwrap();
        let lam_hi = (4.0 + 4.04f64.sqrt()) / 2.0;
        let lam_lo = (4.0 - 4.04f64.sqrt()) / 2.0;
        assert!((sigma[0] - lam_hi).abs() < 1e-10, "{} vs {lam_hi}", sigma[0]);
        assert!((sigma[1] - lam_lo).abs() < 1e-10, "{} vs {lam_lo}", sigma[1]);
    }

    #[test]
    fn zero_matrix_spectrum() {
        let sigma = singular_values(&DenseMatrix::zeros(3, 2).unwrap()).unwrap();
        assert_eq!(sigma, vec![0.0, 0.0]);
    }

    #[test]
    fn energy_conservation_and_orthogonal_invariance() {
        let mut rng = make_stream(31, 0);
        for trial in 0..5 {
            let entries: Vec<f64> = (0..40 * 30).map(|_| rng.next_normal()).collect();
            let a = DenseMatrix::from_vec(40, 30, entries).unwrap();
            let sigma = singular_values(&a).unwrap();
            let energy: f64 = sigma.iter().map(|s| s * s).sum();
            let frob2 = a.frobenius_norm_sq();
            assert!(
                (energy - frob2).abs() <= 1e-8 * frob2,
                "trial {trial}: energy {energy} vs frob^2 {frob2}"
            );

            // Q from QR of a Gaussian square matrix.
            let g_entries: Vec<f64> = (0..40 * 40).map(|_| rng.next_normal()).collect();
            let g = DenseMatrix::from_vec(40, 40, g_entries).unwrap();
            let q = g.to_nalgebra().qr().q();
            let qa = DenseMatrix::from_nalgebra(&(q * a.to_nalgebra()));
            let sigma_q = singular_values(&qa).unwrap();
            for (s, sq) in sigma.iter().zip(&sigma_q) {
                assert!((s - sq).abs() <= 1e-8 * sigma[0]);
            }
        }
    }

    #[test]
    fn psd_singular_values_equal_eigenvalues() {
        let mut rng = make_stream(32, 0);
        let entries: Vec<f64> = (0..20 * 20).map(|_| rng.next_normal()).collect();
        let b = DenseMatrix::from_vec(20, 20, entries).unwrap();
        let psd = b.matmul(&b.transpose()).unwrap();
        let sigma = singular_values(&psd).unwrap();
        let eigs = symmetric_eigenvalues(&psd).unwrap();
        for (s, e) in sigma.iter().zip(&eigs) {
            assert!((s - e).abs() <= 1e-8 * sigma[0].max(1.0), "{s} vs {e}");
        }
    }

    #[test]
    fn stable_rank_cases() {
        assert!((stable_rank(&[1.0; 8]).unwrap() - 8.0).abs() < 1e-12);
        assert!((stable_rank(&[5.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((stable_rank(&[2.0, 1.0, 1.0]).unwrap() - 1.5).abs() < 1e-12);
        assert!(matches!(
            stable_rank(&[0.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn energy_concentration_cases() {
        let sigma = [2.0, 1.0, 1.0];
        assert!((energy_concentration(&sigma, 1).unwrap() - 4.0 / 6.0).abs() < 1e-12);
        assert!((energy_concentration(&sigma, 3).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            energy_concentration(&sigma, 0),
            Err(Error::Index(_))
        ));
        assert!(matches!(
            energy_concentration(&sigma, 4),
            Err(Error::Index(_))
        ));
        // 1 / F(1) is exactly the stable rank.
        let sr = stable_rank(&sigma).unwrap();
        let f1 = energy_concentration(&sigma, 1).unwrap();
        assert!((1.0 / f1 - sr).abs() < 1e-12);
    }

    #[test]
    fn concentration_is_nondecreasing() {
        let sigma = [5.0, 3.0, 2.0, 1.0, 0.5];
        let mut prev = 0.0;
        for k in 1..=5 {
            let f = energy_concentration(&sigma, k).unwrap();
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn exact_power_law_fit() {
        let sigma: Vec<f64> = (1..=20).map(|k| 3.0 * (k as f64).powf(-0.75)).collect();
        let fit = fit_power_law(&sigma, 1, 20).unwrap();
        assert!((fit.mu - 3.0).abs() < 1e-10);
        assert!((fit.decay - 0.75).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
        assert!(!fit.degenerate);
    }

    #[test]
    fn flat_spectrum_fit_is_degenerate() {
        let sigma = vec![2.0; 10];
        let fit = fit_power_law(&sigma, 1, 10).unwrap();
        assert!(fit.decay.abs() < 1e-12);
        assert_eq!(fit.r_squared, 1.0);
        assert!(fit.degenerate);
    }

    /// Perturbed power law: decay recovered within 0.03 (Monte Carlo OLS).
    #[test]
    fn noisy_power_law_fit() {
        let mut rng = make_stream(33, 0);
        for _ in 0..10 {
            let sigma: Vec<f64> = (1..=50)
                .map(|k| {
                    let eps = 0.01 * (2.0 * rng.next_uniform() - 1.0);
                    (k as f64).powf(-0.5) * (1.0 + eps)
                })
                .collect();
            let fit = fit_power_law(&sigma, 1, 50).unwrap();
            assert!(
                (fit.decay - 0.5).abs() <= 0.03,
                "decay {} too far from 0.5",
                fit.decay
            );
        }
    }

    #[test]
    fn fit_rejects_bad_ranges() {
        let sigma = [1.0, 0.5, 0.0, 0.0];
        assert!(matches!(
            fit_power_law(&sigma, 1, 4),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            fit_power_law(&sigma, 1, 2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn weyl_gap_cases() {
        assert_eq!(weyl_gap(&[3.0, 1.0], &[3.0, 1.0]).unwrap(), 0.0);
        let g = weyl_gap(&[3.0, 1.0], &[3.0049875621, 0.9950124378]).unwrap();
        assert!((g - 0.0049875621).abs() < 1e-9);
        assert!(matches!(weyl_gap(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    /// Weyl inequality checked on random (A, E) pairs via full SVDs.
    #[test]
    fn weyl_never_violated() {
        let mut rng = make_stream(34, 0);
        for _ in 0..20 {
            let a_entries: Vec<f64> = (0..24 * 24).map(|_| rng.next_normal()).collect();
            let e_entries: Vec<f64> = (0..24 * 24).map(|_| 0.05 * rng.next_normal()).collect();
            let a = DenseMatrix::from_vec(24, 24, a_entries).unwrap();
            let e = DenseMatrix::from_vec(24, 24, e_entries).unwrap();
            let perturbed = DenseMatrix::from_vec(
                24,
                24,
                a.entries().iter().zip(e.entries()).map(|(x, y)| x + y).collect(),
            )
            .unwrap();
            let gap = weyl_gap(
                &singular_values(&a).unwrap(),
                &singular_values(&perturbed).unwrap(),
            )
            .unwrap();
            let e_norm = singular_values(&e).unwrap()[0];
            assert!(gap <= e_norm * (1.0 + 1e-12), "gap {gap} > ||E|| {e_norm}");
        }
    }

    #[test]
    fn relative_error_cases() {
        let r = relative_errors(&[2.0, 1.0], &[2.1, 0.8], 0.0).unwrap();
        assert_eq!(r.values.len(), 2);
        assert_eq!(r.values[0].0, 1);
        assert!((r.values[0].1 - 0.05).abs() < 1e-12);
        assert!((r.values[1].1 - 0.2).abs() < 1e-12);

        let r = relative_errors(&[1.0, 0.0, 0.0], &[1.0, 0.1, 0.0], 1e-12).unwrap();
        assert_eq!(r.values.len(), 1);
        assert_eq!(r.excluded, vec![2, 3]);
    }

    /// The estimator approaches sigma_1 from below and lands within 0.5%
    /// even on Gaussian matrices with their nearly-degenerate top pairs.
    #[test]
    fn spectral_norm_estimate_matches_svd() {
        let mut rng = make_stream(35, 0);
        let entries: Vec<f64> = (0..64 * 48).map(|_| rng.next_normal()).collect();
        let a = DenseMatrix::from_vec(64, 48, entries).unwrap();
        let exact = singular_values(&a).unwrap()[0];
        let est = spectral_norm_estimate(&a);
        assert!(est <= exact * (1.0 + 1e-10), "estimate {est} above exact {exact}");
        assert!(est >= exact * 0.995, "estimate {est} too far below {exact}");

        // On a matrix with a clear top gap it is essentially exact.
        let d = DenseMatrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((spectral_norm_estimate(&d) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn summary_has_consistent_fields() {
        let a = mat(&[vec![3.0, 0.0], vec![0.0, 1.0]]);
        let s = summarize(&a, None).unwrap();
        assert!((s.frob_sq - 10.0).abs() < 1e-10);
        assert!((s.spec_sq - 9.0).abs() < 1e-10);
        assert!((s.stable_rank - 10.0 / 9.0).abs() < 1e-10);
    }
}
