//! Acquisition functions: expected improvement and the distribution-guided
//! information term built from per-region credit histories.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::objective::Placement;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// `E[max(N(mu, sigma) - threshold, 0)]`, clamped at 0.
///
/// With `sigma_power = 2` the density term is scaled by `σ²` instead of `σ`
/// (the alternative form kept for comparison runs).
pub fn expected_excess(mu: f64, sigma: f64, threshold: f64, sigma_power: i32) -> f64 {
    if !(sigma > 0.0) {
        return (mu - threshold).max(0.0);
    }
    let d = mu - threshold;
    let z = d / sigma;
    (d * norm_cdf(z) + sigma.powi(sigma_power) * norm_pdf(z)).max(0.0)
}

/// Expected improvement of `N(mu, sigma)` over the incumbent `f_star`.
pub fn ei(mu: f64, sigma: f64, f_star: f64) -> f64 {
    expected_excess(mu, sigma, f_star, 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionParams {
    pub sigma_floor: f64,
    /// Scale the density term of each region's gain by `σ²`.
    pub dg_sigma_squared: bool,
}

impl Default for AcquisitionParams {
    fn default() -> Self {
        Self {
            sigma_floor: 1e-6,
            dg_sigma_squared: false,
        }
    }
}

/// One row of a profile export.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSummary {
    pub prior: f64,
    pub mean: f64,
    pub std: f64,
    pub expected_gain: f64,
}

/// Per-region information history: the single-sensor prior, the credits
/// received from later queries, and the expected gain cached from the last
/// iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct InformationProfile {
    pub prior: Vec<f64>,
    pub credited: Vec<Vec<f64>>,
    pub expected_gain_prev: Vec<f64>,
    pub params: AcquisitionParams,
}

impl InformationProfile {
    /// Starts from single-sensor values; the initial gain equals the prior.
    pub fn new(prior: Vec<f64>, params: AcquisitionParams) -> Self {
        let l = prior.len();
        Self {
            expected_gain_prev: prior.clone(),
            prior,
            credited: vec![Vec::new(); l],
            params,
        }
    }

    pub fn len(&self) -> usize {
        self.prior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior.is_empty()
    }

    /// Splits `value` over the regions of `x` in proportion to their
    /// priors (equally if all are zero) and appends each share. Returns the
    /// shares in index order.
    pub fn credit(&mut self, x: &Placement, value: f64) -> Vec<f64> {
        let total: f64 = x.indices().iter().map(|&i| self.prior[i]).sum();
        let shares: Vec<f64> = if total > 0.0 {
            x.indices().iter().map(|&i| self.prior[i] / total * value).collect()
        } else {
            vec![value / x.len() as f64; x.len()]
        };
        for (&i, &s) in x.indices().iter().zip(&shares) {
            self.credited[i].push(s);
        }
        shares
    }

    /// Mean and floored population standard deviation of the prior and
    /// all credits of region `i`.
    pub fn region_gaussian(&self, i: usize) -> (f64, f64) {
        let c = &self.credited[i];
        let n = (c.len() + 1) as f64;
        let mean = (self.prior[i] + c.iter().sum::<f64>()) / n;
        let var = ((self.prior[i] - mean).powi(2) + c.iter().map(|v| (v - mean).powi(2)).sum::<f64>()) / n;
        (mean, var.sqrt().max(self.params.sigma_floor))
    }

    /// Average cached gain over the regions of the incumbent.
    pub fn incumbent_gain(&self, x_star: &Placement) -> f64 {
        x_star.indices().iter().map(|&i| self.expected_gain_prev[i]).sum::<f64>() / x_star.len() as f64
    }

    /// Expected positive gain of every region over `i_star`.
    pub fn region_gains(&self, i_star: f64) -> Vec<f64> {
        let power = if self.params.dg_sigma_squared { 2 } else { 1 };
        (0..self.len())
            .map(|i| {
                let (mu, sigma) = self.region_gaussian(i);
                expected_excess(mu, sigma, i_star, power)
            })
            .collect()
    }

    /// Caches `gains` for the next incumbent-gain computation.
    pub fn commit_gains(&mut self, gains: Vec<f64>) {
        debug_assert_eq!(gains.len(), self.len());
        self.expected_gain_prev = gains;
    }

    pub fn summary(&self) -> Vec<RegionSummary> {
        (0..self.len())
            .map(|i| {
                let (mean, std) = self.region_gaussian(i);
                RegionSummary {
                    prior: self.prior[i],
                    mean,
                    std,
                    expected_gain: self.expected_gain_prev[i],
                }
            })
            .collect()
    }
}

/// Distribution-guided term: mean of per-region gains over `x`.
pub fn alpha_dg(x: &Placement, gains: &[f64]) -> f64 {
    x.indices().iter().map(|&i| gains[i]).sum::<f64>() / x.len() as f64
}

/// `EI + α_DG`.
pub fn dgbo_score(x: &Placement, mu: f64, sigma: f64, f_star: f64, gains: &[f64]) -> f64 {
    ei(mu, sigma, f_star) + alpha_dg(x, gains)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ei_closed_forms() {
        assert!((ei(0.5, 1.0, 0.5) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!(ei(0.0, 1e-6, 10.0) < 1e-12);
        assert!((ei(1.5, 1e-6, 0.5) - 1.0).abs() < 1e-9);
        assert!(ei(0.2, 0.1, 0.3) < ei(0.25, 0.1, 0.3));
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-9);
    }

    #[test]
    fn credit_hand_case() {
        let mut prof = InformationProfile::new(vec![0.2, 0.3, 0.5], AcquisitionParams::default());
        let x = Placement::new(vec![0, 1], 3).unwrap();
        let shares = prof.credit(&x, 0.6);
        assert!((shares[0] - 0.24).abs() < 1e-15 && (shares[1] - 0.36).abs() < 1e-15);
        assert!(prof.credited[2].is_empty());
        let (mu, sigma) = prof.region_gaussian(0);
        assert!((mu - 0.22).abs() < 1e-15);
        assert!((sigma - 0.02).abs() < 1e-12);
        assert_eq!(prof.region_gaussian(2), (0.5, 1e-6));
    }

    #[test]
    fn credit_zero_priors_split_equally() {
        let mut prof = InformationProfile::new(vec![0.0; 4], AcquisitionParams::default());
        let shares = prof.credit(&Placement::new(vec![1, 3], 4).unwrap(), 0.5);
        assert_eq!(shares, vec![0.25, 0.25]);
        let single = prof.credit(&Placement::single(2), 0.7);
        assert_eq!(single, vec![0.7]);
    }

    #[test]
    fn incumbent_gain_starts_at_prior_mean() {
        let prof = InformationProfile::new(vec![0.1, 0.3, 0.8], AcquisitionParams::default());
        assert!((prof.incumbent_gain(&Placement::new(vec![0, 1], 3).unwrap()) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn alpha_dg_at_threshold_is_density() {
        let mut prof = InformationProfile::new(vec![0.0, 2.0], AcquisitionParams::default());
        prof.credited[0].push(0.0);
        prof.credited[1].push(0.0);
        // both regions: mean 0 or 1 with std 0 or 1
        let gains = prof.region_gains(1.0);
        let (mu, sigma) = prof.region_gaussian(1);
        assert_eq!((mu, sigma), (1.0, 1.0));
        assert!((gains[1] - INV_SQRT_2PI).abs() < 1e-15);
        assert!(gains[0] < 1e-12);
        assert!(gains.iter().all(|&g| g >= 0.0));
    }
}
