//! Position estimators working on anchor beacons.
//!
//! - [`ls_estimate`] / [`wls_estimate`]: linearised trilateration.
//! - [`l1_estimate`]: least-absolute-deviation plane fit solved with ADMM.
//! - [`gd_estimate`]: normalised-step gradient descent on the ℓ1 ranging loss.
//! - [`MagdState`]: the mobility-adaptive tracker with learning-rate control
//!   across timesteps and reputation-weighted gradients.

mod gd;
mod linear;
mod magd;

pub use gd::{gd_estimate, l1_loss, l1_loss_gradient, GdOutcome};
pub use linear::{l1_estimate, ls_estimate, wls_estimate, L1Outcome};
pub use magd::{magd_step, MagdOutcome, MagdState};

use crate::{Error, Result, UavId, Vec3};

/// One anchor's broadcast as received by the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beacon {
    pub anchor_id: UavId,
    pub reported_position: Vec3,
    pub reported_sigma_p: f64,
    pub measured_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ln1Config {
    pub k_max: usize,
    pub rho: f64,
    pub theta: f64,
}

impl Default for Ln1Config {
    fn default() -> Self {
        Self { k_max: 300, rho: 0.3, theta: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdConfig {
    pub k_max: usize,
    pub alpha0: f64,
    pub beta: f64,
    pub theta: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self { k_max: 50, alpha0: 1.5, beta: 0.8, theta: 1e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagdConfig {
    pub eps_max_t0: f64,
    pub eps_min_t0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub momentum: f64,
    pub theta: f64,
    pub k_max: usize,
    /// Window length of the speed/loss trend statistic.
    pub phi: usize,
    /// Relative deviation of `D̄_t` from its running mean below which the
    /// estimate counts as stable.
    pub step3_ratio: f64,
    /// Trend statistic above which the learning rate is enlarged.
    pub step4_ratio: f64,
    /// Divide the learning rate by the number of beacons again in the
    /// position update. Steps 1 and 3 already scale the rate by `1/N`, so
    /// this is off by default.
    pub divide_step_by_n: bool,
}

impl Default for MagdConfig {
    fn default() -> Self {
        Self {
            eps_max_t0: 50.0,
            eps_min_t0: 5.0,
            beta1: 0.5,
            beta2: 0.05,
            momentum: 1e-5,
            theta: 1e-8,
            k_max: 30,
            phi: 5,
            step3_ratio: 0.3,
            step4_ratio: 1.3,
            divide_step_by_n: false,
        }
    }
}

/// Parameters of every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorConfig {
    pub ln1: Ln1Config,
    pub gd: GdConfig,
    pub magd: MagdConfig,
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid estimator setting: {what}")));
        if !(self.ln1.rho > 0.0) || !(self.ln1.theta > 0.0) || self.ln1.k_max == 0 {
            return bad("ln1");
        }
        let gd = &self.gd;
        if !(gd.alpha0 > 0.0) || !(gd.beta > 0.0 && gd.beta < 1.0) || !(gd.theta > 0.0) || gd.k_max == 0 {
            return bad("gd");
        }
        let m = &self.magd;
        if !(m.beta1 > 0.0 && m.beta1 < 1.0) || !(m.beta2 >= 0.0) || !(m.theta > 0.0) || m.k_max == 0 {
            return bad("magd discount factors / threshold");
        }
        if !(m.eps_min_t0 > 0.0 && m.eps_min_t0 < m.eps_max_t0) {
            return bad("magd step-size thresholds");
        }
        if m.phi == 0 || !(m.step3_ratio > 0.0) || !(m.step4_ratio > 0.0) {
            return bad("magd trend window");
        }
        Ok(())
    }
}

/// `w_n = max(sigma) / sigma_n`.
pub fn weights_from_sigma(sigma_f: &[f64]) -> Result<Vec<f64>> {
    if let Some(s) = sigma_f.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::Domain(format!("error scales must be positive, got {s}")));
    }
    let max = sigma_f.iter().copied().fold(0.0, f64::max);
    Ok(sigma_f.iter().map(|&s| max / s).collect())
}

/// Mean of the reported anchor positions.
pub fn centroid(beacons: &[Beacon]) -> Option<Vec3> {
    if beacons.is_empty() {
        return None;
    }
    let sum: Vec3 = beacons.iter().map(|b| b.reported_position).sum();
    Some(sum / beacons.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_examples() {
        assert_eq!(weights_from_sigma(&[2.0, 2.0, 2.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(weights_from_sigma(&[1.0, 2.0, 4.0]).unwrap(), vec![4.0, 2.0, 1.0]);
        assert!(weights_from_sigma(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn default_config_is_valid() {
        EstimatorConfig::default().validate().unwrap();
        let mut cfg = EstimatorConfig::default();
        cfg.magd.eps_min_t0 = 60.0;
        assert!(cfg.validate().is_err());
    }
}
