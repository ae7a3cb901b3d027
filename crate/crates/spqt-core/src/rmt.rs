//! Closed-form random-matrix quantities: the power-law spiked covariance
//! model, its noise floor, the Marchenko-Pastur bulk edge, the BBP outlier
//! map, Stieltjes transforms, and the matrix-Bernstein tail bound together
//! with its inverse and the per-index failure-probability profile.

pub use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spiked power-law covariance model: eigenvalues `tau_k = L * k^-alpha`
/// with a head of rank `r`, dimension `d`, and aspect ratio `c = d/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikedModel {
    /// Energy scale `L` of the eigenvalue profile.
    pub l_scale: f64,
    /// Decay exponent, must exceed 1.
    pub alpha: f64,
    /// Head rank `r` (number of signal spikes).
    pub r: usize,
    /// Covariance dimension.
    pub d: usize,
    /// Aspect ratio `d / N`.
    pub c: f64,
}

impl SpikedModel {
    pub fn new(l_scale: f64, alpha: f64, r: usize, d: usize, c: f64) -> Result<Self> {
        let m = Self {
            l_scale,
            alpha,
            r,
            d,
            c,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_scale > 0.0) {
            return Err(Error::Domain("energy scale must be positive".into()));
        }
        if self.alpha <= 1.0 {
            return Err(Error::Domain(format!(
                "decay exponent must exceed 1, got {}",
                self.alpha
            )));
        }
        if self.r < 1 || self.r >= self.d {
            return Err(Error::Domain(format!(
                "head rank must satisfy 1 <= r < d, got r = {}, d = {}",
                self.r, self.d
            )));
        }
        if !(self.c > 0.0) {
            return Err(Error::Domain("aspect ratio must be positive".into()));
        }
        Ok(())
    }
}

/// Parameters of the matrix-Bernstein tail bound for an `m x n` error
/// matrix with per-entry variance `B` and almost-sure entry bound `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBoundParams {
    pub m: usize,
    pub n: usize,
    /// Per-entry error variance `B`.
    pub variance: f64,
    /// Almost-sure bound on a single entry perturbation.
    pub range: f64,
}

impl TailBoundParams {
    /// Round-to-nearest with step `s`: `B = s^2/12`, `R = s/2`.
    pub fn for_step(m: usize, n: usize, step: f64) -> Self {
        Self {
            m,
            n,
            variance: step * step / 12.0,
            range: step / 2.0,
        }
    }

    /// Variance statistic `delta^2 = max(m, n) * B`.
    pub fn delta_sq(&self) -> f64 {
        self.m.max(self.n) as f64 * self.variance
    }
}

/// Population eigenvalue `tau_k = L * k^-alpha` (`k` is a 1-based rank).
pub fn tau(model: &SpikedModel, k: usize) -> Result<f64> {
    if k < 1 || k > model.d {
        return Err(Error::Index(format!("k = {k} outside [1, {}]", model.d)));
    }
    Ok(model.l_scale * (k as f64).powf(-model.alpha))
}

/// Noise floor: mean energy of the tail eigenvalues,
/// `nu^2(d) = L/(d-r) * sum_{j=r+1..d} j^-alpha`, by direct summation.
pub fn noise_level(model: &SpikedModel) -> Result<f64> {
    if model.r >= model.d {
        return Err(Error::Domain(format!(
            "head rank {} must be below dimension {}",
            model.r, model.d
        )));
    }
    let sum: f64 = (model.r + 1..=model.d)
        .map(|j| (j as f64).powf(-model.alpha))
        .sum();
    Ok(model.l_scale * sum / (model.d - model.r) as f64)
}

/// Right edge of the Marchenko-Pastur bulk: `nu^2 (1 + sqrt(c))^2`.
pub fn mp_bulk_edge(nu2: f64, c: f64) -> f64 {
    assert!(nu2 >= 0.0 && c >= 0.0);
    nu2 * (1.0 + c.sqrt()).powi(2)
}

/// Super-critical BBP limit `rho(tau) = tau * (1 + c nu^2 / (tau - nu^2))`.
/// Requires `tau > nu2`; sub-critical eigenvalues collapse onto the bulk
/// edge instead.
pub fn bbp_map(tau: f64, nu2: f64, c: f64) -> Result<f64> {
    if tau <= nu2 {
        return Err(Error::Domain(format!(
            "bbp_map needs tau > nu^2 (got tau = {tau}, nu^2 = {nu2}); \
             sub-critical eigenvalues sit at the bulk edge"
        )));
    }
    Ok(tau * (1.0 + c * nu2 / (tau - nu2)))
}

/// Partition of a descending eigenvalue list at the BBP threshold
/// `nu^2 (1 + sqrt(c))`. Boundary values are sub-critical (weak inequality).
/// Returned indices are 1-based ranks.
pub fn classify_spectrum(taus: &[f64], nu2: f64, c: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if taus.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Data("eigenvalues must be sorted descending".into()));
    }
    let threshold = nu2 * (1.0 + c.sqrt());
    let mut supercritical = Vec::new();
    let mut subcritical = Vec::new();
    for (i, &t) in taus.iter().enumerate() {
        if t > threshold {
            supercritical.push(i + 1);
        } else {
            subcritical.push(i + 1);
        }
    }
    Ok((supercritical, subcritical))
}

fn require_upper_half_plane(z: Complex64) -> Result<()> {
    if z.im <= 0.0 {
        return Err(Error::Domain(format!(
            "Stieltjes transforms need Im z > 0, got z = {z}"
        )));
    }
    Ok(())
}

/// Discrete Stieltjes transform `(1/len) sum_j 1/(e_j - z)`.
pub fn stieltjes_discrete(eigs: &[f64], z: Complex64) -> Result<Complex64> {
    require_upper_half_plane(z)?;
    if eigs.is_empty() {
        return Err(Error::Domain("empty spectrum".into()));
    }
    let sum: Complex64 = eigs
        .iter()
        .map(|&e| (Complex64::new(e, 0.0) - z).inv())
        .sum();
    Ok(sum / eigs.len() as f64)
}

/// Stieltjes transform of the white-noise reference `1/(nu^2 - z)`.
pub fn stieltjes_white(nu2: f64, z: Complex64) -> Result<Complex64> {
    require_upper_half_plane(z)?;
    Ok((Complex64::new(nu2, 0.0) - z).inv())
}

/// Gap `|m_Noise(z) - m_White(z)|` between the tail spectrum of the model
/// and the white-noise reference; shrinks like 1/d at fixed z.
pub fn stieltjes_gap(model: &SpikedModel, z: Complex64) -> Result<f64> {
    require_upper_half_plane(z)?;
    model.validate()?;
    let nu2 = noise_level(model)?;
    let white = stieltjes_white(nu2, z)?;
    let mut sum = Complex64::new(0.0, 0.0);
    for j in model.r + 1..=model.d {
        let tau_j = model.l_scale * (j as f64).powf(-model.alpha);
        sum += (Complex64::new(tau_j, 0.0) - z).inv();
    }
    let noise = sum / (model.d - model.r) as f64;
    Ok((noise - white).norm())
}

/// Matrix-Bernstein tail bound
/// `min(1, (m+n) exp(-(t^2/2) / (delta^2 + R t / 3)))`.
pub fn bernstein_tail_bound(p: &TailBoundParams, t: f64) -> f64 {
    assert!(t >= 0.0, "threshold must be nonnegative");
    let delta_sq = p.delta_sq();
    let denom = delta_sq + p.range * t / 3.0;
    if denom == 0.0 {
        // No variance and no range: the error is identically zero.
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let bound = (p.m + p.n) as f64 * (-(t * t / 2.0) / denom).exp();
    bound.min(1.0)
}

/// Exact inverse of the (unclamped) tail bound: the unique `t >= 0` with
/// `(m+n) exp(-(t^2/2)/(delta^2 + R t/3)) = theta`, from the positive root
/// of `t^2/2 = ln((m+n)/theta) (delta^2 + R t/3)`.
pub fn invert_tail_bound(p: &TailBoundParams, theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Domain(format!(
            "theta must lie in (0, 1), got {theta}"
        )));
    }
    let a = ((p.m + p.n) as f64 / theta).ln();
    debug_assert!(a > 0.0);
    let half_lin = a * p.range / 3.0; // from t^2 - (2aR/3) t - 2a delta^2 = 0
    let t = half_lin + (half_lin * half_lin + 2.0 * a * p.delta_sq()).sqrt();
    Ok(t)
}

/// Relative-error budget at confidence `1 - theta`:
/// `epsilon_k(theta) = F^-1(theta) / sigma_k`.
pub fn epsilon_budget(p: &TailBoundParams, theta: f64, sigma_k: f64) -> Result<f64> {
    if sigma_k <= 0.0 {
        return Err(Error::Domain(format!(
            "singular value must be positive, got {sigma_k}"
        )));
    }
    Ok(invert_tail_bound(p, theta)? / sigma_k)
}

/// Per-index failure-probability bounds for an `m x n` matrix with the
/// power-law profile `sigma_k = mu * xi_k^(1/2)`,
/// `xi_k = k^-alpha (k <= r), r^-alpha (k > r)`, quantized with step `s`:
/// `bound_k = min(1, (m+n) exp(-((eta sigma_k)^2/2)/(delta^2 + R eta sigma_k/3)))`.
#[allow(clippy::too_many_arguments)]
pub fn failure_profile(
    mu: f64,
    alpha: f64,
    r: usize,
    eta: f64,
    step: f64,
    m: usize,
    n: usize,
    count: usize,
) -> Result<Vec<f64>> {
    if !(eta > 0.0) {
        return Err(Error::Domain("tolerance eta must be positive".into()));
    }
    if !(step > 0.0) {
        return Err(Error::Domain("step must be positive".into()));
    }
    if r < 1 {
        return Err(Error::Domain("head rank must be >= 1".into()));
    }
    let params = TailBoundParams::for_step(m, n, step);
    Ok((1..=count)
        .map(|k| {
            let xi = if k <= r {
                (k as f64).powf(-alpha)
            } else {
                (r as f64).powf(-alpha)
            };
            let sigma_k = mu * xi.sqrt();
            bernstein_tail_bound(&params, eta * sigma_k)
        })
        .collect())
}
