//! Mobility-adaptive gradient descent.
//!
//! One [`MagdState`] follows one target across timesteps. Each call to
//! [`MagdState::step`] runs a bounded descent on the weighted ranging
//! residuals from the previous estimate, then adapts the learning rate:
//!
//! 1. at the first timestep the rate is `max(eps_max / N, eps_min)`;
//! 2. inside a timestep a step that raises the mean weighted residual `D̄`
//!    is discarded and the working rate multiplied by `beta1`;
//! 3. when `D̄_t` stays within `step3_ratio` of its running mean the rate
//!    decays by `beta2`, down to `eps_min / N`;
//! 4. when `sqrt(mean over the last phi steps of (D̄_τ / D̿)(V̄ / V_τ))`
//!    exceeds `step4_ratio` the rate is multiplied by that statistic.

use super::{Beacon, MagdConfig};
use crate::{Error, Result, Vec3};

/// Residual level below which an estimate counts as stable regardless of the
/// relative test (noise-free data drives `D̄` to zero).
const STABLE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MagdState {
    pub alpha_hat: f64,
    pub p_hat: Vec3,
    pub dbar_history: Vec<f64>,
    pub dbar_mean: f64,
    pub v_history: Vec<f64>,
    pub v_mean: f64,
    /// Number of completed timesteps.
    pub t: usize,
    alpha_cap: f64,
}

/// Per-timestep diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagdOutcome {
    pub position: Vec3,
    pub dbar: f64,
    pub iterations: usize,
    pub stable: bool,
    /// Trend statistic when the learning rate was enlarged.
    pub boosted: Option<f64>,
    /// No beacons were available; the state is untouched.
    pub skipped: bool,
}

struct Terms<'a> {
    beacons: &'a [Beacon],
    scale: Vec<f64>,
    mu_f: &'a [f64],
}

impl Terms<'_> {
    fn dbar(&self, p: &Vec3) -> f64 {
        let n = self.beacons.len() as f64;
        self.beacons
            .iter()
            .zip(&self.scale)
            .zip(self.mu_f)
            .map(|((b, &w), &mu)| w * ((p - b.reported_position).norm() - b.measured_distance + mu).abs())
            .sum::<f64>()
            / n
    }

    fn gradient(&self, p: &Vec3) -> Vec3 {
        let mut g = Vec3::zeros();
        for ((b, &w), &mu) in self.beacons.iter().zip(&self.scale).zip(self.mu_f) {
            let diff = p - b.reported_position;
            let d = diff.norm();
            if d == 0.0 {
                continue;
            }
            g += diff * (w / d * (d - b.measured_distance + mu));
        }
        g
    }
}

impl MagdState {
    pub fn new(initial: Vec3) -> Self {
        Self {
            alpha_hat: 0.0,
            p_hat: initial,
            dbar_history: Vec::new(),
            dbar_mean: 0.0,
            v_history: Vec::new(),
            v_mean: 0.0,
            t: 0,
            alpha_cap: f64::INFINITY,
        }
    }

    /// One timestep. `reputations`, `weights` and `mu_f` are aligned with
    /// `beacons`.
    pub fn step(
        &mut self,
        beacons: &[Beacon],
        reputations: &[f64],
        weights: &[f64],
        mu_f: &[f64],
        cfg: &MagdConfig,
    ) -> Result<MagdOutcome> {
        let n = beacons.len();
        if reputations.len() != n || weights.len() != n || mu_f.len() != n {
            return Err(Error::Usage("reputations, weights and mu_f must align with beacons".into()));
        }
        if n == 0 {
            return Ok(MagdOutcome {
                position: self.p_hat,
                dbar: self.dbar_history.last().copied().unwrap_or(0.0),
                iterations: 0,
                stable: false,
                boosted: None,
                skipped: true,
            });
        }
        let nf = n as f64;
        if self.t == 0 {
            self.alpha_hat = (cfg.eps_max_t0 / nf).max(cfg.eps_min_t0);
            self.alpha_cap = self.alpha_hat;
        }
        let terms = Terms { beacons, scale: weights.iter().zip(reputations).map(|(w, r)| w * r).collect(), mu_f };

        let previous = self.p_hat;
        let mut p = self.p_hat;
        let mut dbar = terms.dbar(&p);
        let mut alpha = self.alpha_hat;
        let mut iterations = 0;
        while iterations < cfg.k_max {
            iterations += 1;
            let g = terms.gradient(&p);
            let norm = g.norm();
            if norm == 0.0 {
                break;
            }
            let step = if cfg.divide_step_by_n { alpha / nf } else { alpha };
            if step < cfg.theta {
                break;
            }
            let candidate = p + p * cfg.momentum - g * (step / norm);
            let cand = terms.dbar(&candidate);
            if cand > dbar {
                alpha *= cfg.beta1;
            } else {
                let gain = dbar - cand;
                p = candidate;
                dbar = cand;
                if gain < cfg.theta {
                    break;
                }
            }
        }
        self.p_hat = p;

        self.dbar_history.push(dbar);
        self.dbar_mean += (dbar - self.dbar_mean) / self.dbar_history.len() as f64;

        let mut stable = false;
        let mut boosted = None;
        if self.t >= 1 {
            let mean = self.dbar_mean;
            if (dbar - mean).abs() <= cfg.step3_ratio * mean + STABLE_FLOOR {
                stable = true;
                self.alpha_hat = (self.alpha_hat - cfg.beta2).max(cfg.eps_min_t0 / nf);
            }

            let v = (p - previous).norm();
            self.v_history.push(v);
            self.v_mean += (v - self.v_mean) / self.v_history.len() as f64;
            if self.v_history.len() >= cfg.phi && mean > 0.0 {
                let recent_v = &self.v_history[self.v_history.len() - cfg.phi..];
                let recent_d = &self.dbar_history[self.dbar_history.len() - cfg.phi..];
                let ratios: Vec<f64> = recent_d
                    .iter()
                    .zip(recent_v)
                    .filter(|(_, &v)| v > 1e-9)
                    .map(|(&d, &v)| (d / mean) * (self.v_mean / v))
                    .collect();
                if !ratios.is_empty() {
                    let rho = (ratios.iter().sum::<f64>() / ratios.len() as f64).sqrt();
                    if rho > cfg.step4_ratio {
                        self.alpha_hat = (self.alpha_hat * rho).min(self.alpha_cap);
                        boosted = Some(rho);
                    }
                }
            }
        }
        self.t += 1;
        Ok(MagdOutcome { position: p, dbar, iterations, stable, boosted, skipped: false })
    }
}

/// Value-semantics wrapper around [`MagdState::step`].
pub fn magd_step(
    state: &MagdState,
    beacons: &[Beacon],
    reputations: &[f64],
    weights: &[f64],
    mu_f: &[f64],
    cfg: &MagdConfig,
) -> Result<(MagdState, MagdOutcome)> {
    let mut next = state.clone();
    let out = next.step(beacons, reputations, weights, mu_f, cfg)?;
    Ok((next, out))
}
