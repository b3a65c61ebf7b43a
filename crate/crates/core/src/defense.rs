//! Trust-aware anomaly detection (TAD) and reputation propagation (RP).
//!
//! Each observer keeps a reputation in `[0, 1]` per anchor. After every
//! estimate it checks each beacon's range residual against the modeled
//! error distribution, rewards consistent anchors and penalises outliers.
//! Observers may additionally fuse reputations uploaded by third parties.

use std::collections::BTreeMap;

use statrs::function::erf::erfc;

use crate::errormodel::AnchorErrorModel;
use crate::estimators::Beacon;
use crate::{Error, Result, UavId, Vec3};

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `P(|E| ≤ x)` for `E ~ N(mu, sigma²)`.
pub fn folded_abs_error_cdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let p = std_normal_cdf((x - mu) / sigma) - std_normal_cdf((-x - mu) / sigma);
    Ok(p.clamp(0.0, 1.0))
}

/// Reputation recursion applied after the reward/penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForgetRule {
    /// `r ← γ (r + 1) − 1 + r̂`. With `γ = 0.5, λ_r = 0.2` its fixed point
    /// under constant reward is negative, so every reputation decays to 0.
    Decaying,
    /// `r ← 1 + γ (r − 1) + r̂`: the deficit `1 − r` is forgotten at rate
    /// `γ`, so a consistently rewarded anchor returns to full trust.
    Restoring,
}

/// Which side of the confidence threshold counts as anomalous.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlagDirection {
    /// Anomalous when `ξ > ε_t` (the residual sits in the extreme tail).
    PenalizeAbove,
    /// Anomalous when `ξ ≤ ε_t`.
    PenalizeBelow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TadConfig {
    pub lambda_r: f64,
    pub lambda_p: f64,
    pub gamma: f64,
    pub eps_t: f64,
    pub sigma_p_min: f64,
    pub forget: ForgetRule,
    pub direction: FlagDirection,
}

impl Default for TadConfig {
    fn default() -> Self {
        Self {
            lambda_r: 0.2,
            lambda_p: -0.8,
            gamma: 0.5,
            eps_t: 0.95,
            sigma_p_min: 0.1,
            forget: ForgetRule::Restoring,
            direction: FlagDirection::PenalizeAbove,
        }
    }
}

impl TadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_p < 0.0 && 0.0 < self.lambda_r) {
            return Err(Error::Config("TAD needs lambda_p < 0 < lambda_r".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("forget factor must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.eps_t > 0.0 && self.eps_t < 1.0) {
            return Err(Error::Config(format!("confidence threshold must lie in (0, 1), got {}", self.eps_t)));
        }
        if !(self.sigma_p_min > 0.0) {
            return Err(Error::Config("sigma_p_min must be positive".into()));
        }
        Ok(())
    }

    /// One reputation update given the previous score and the flag.
    pub fn next_reputation(&self, previous: f64, anomalous: bool) -> f64 {
        let reward = if anomalous { self.lambda_p } else { self.lambda_r };
        let r = match self.forget {
            ForgetRule::Decaying => self.gamma * (previous + 1.0) - 1.0 + reward,
            ForgetRule::Restoring => 1.0 + self.gamma * (previous - 1.0) + reward,
        };
        r.clamp(0.0, 1.0)
    }

    fn is_anomalous(&self, xi: f64) -> bool {
        match self.direction {
            FlagDirection::PenalizeAbove => xi > self.eps_t,
            FlagDirection::PenalizeBelow => xi <= self.eps_t,
        }
    }
}

/// One observer's reputations of the anchors it has heard.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationLedger {
    pub owner: UavId,
    scores: BTreeMap<UavId, f64>,
    last_update: BTreeMap<UavId, usize>,
}

impl ReputationLedger {
    pub fn new(owner: UavId) -> Self {
        Self { owner, scores: BTreeMap::new(), last_update: BTreeMap::new() }
    }

    /// Score of `anchor`; unseen anchors start fully trusted.
    pub fn get(&self, anchor: UavId) -> f64 {
        self.scores.get(&anchor).copied().unwrap_or(1.0)
    }

    pub fn set(&mut self, anchor: UavId, score: f64, t: usize) {
        self.scores.insert(anchor, score.clamp(0.0, 1.0));
        self.last_update.insert(anchor, t);
    }

    pub fn scores(&self) -> &BTreeMap<UavId, f64> {
        &self.scores
    }

    pub fn last_update(&self, anchor: UavId) -> Option<usize> {
        self.last_update.get(&anchor).copied()
    }
}

/// Detector verdict for one beacon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TadVerdict {
    pub anchor: UavId,
    pub residual: f64,
    pub sigma_f: f64,
    pub xi: f64,
    pub anomalous: bool,
    pub reputation: f64,
}

/// Check every beacon against the current estimate `p_hat` and update the
/// ledger in place.
pub fn tad_update(
    ledger: &mut ReputationLedger,
    p_hat: &Vec3,
    beacons: &[Beacon],
    model: &AnchorErrorModel,
    cfg: &TadConfig,
    t: usize,
) -> Result<Vec<TadVerdict>> {
    let mut out = Vec::with_capacity(beacons.len());
    for b in beacons {
        let mu = model.mu_f(b.measured_distance);
        let d_hat = (p_hat - b.reported_position).norm();
        let residual = (d_hat - b.measured_distance + mu).abs();
        let sigma_f = model.sigma_f(b.measured_distance, b.reported_sigma_p).max(cfg.sigma_p_min);
        let xi = folded_abs_error_cdf(residual, mu, sigma_f)?;
        let anomalous = cfg.is_anomalous(xi);
        let reputation = cfg.next_reputation(ledger.get(b.anchor_id), anomalous);
        ledger.set(b.anchor_id, reputation, t);
        out.push(TadVerdict { anchor: b.anchor_id, residual, sigma_f, xi, anomalous, reputation });
    }
    Ok(out)
}

/// Reputations uploaded by a third party.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudReputationShare {
    pub uploader: UavId,
    pub scores: BTreeMap<UavId, f64>,
}

impl CloudReputationShare {
    /// Clamp uploaded values to `[0, 1]`; the flag reports whether any value
    /// had to be altered (non-finite values become 0).
    pub fn ingest(uploader: UavId, raw: BTreeMap<UavId, f64>) -> (Self, bool) {
        let mut altered = false;
        let scores = raw
            .into_iter()
            .map(|(k, v)| {
                let c = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
                altered |= c != v;
                (k, c)
            })
            .collect();
        (Self { uploader, scores }, altered)
    }

    pub fn from_ledger(ledger: &ReputationLedger) -> Self {
        Self { uploader: ledger.owner, scores: ledger.scores.clone() }
    }
}

/// Fused reputations and whether any anchor fell back to its local score
/// because no trusted share covered it.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagated {
    pub effective: BTreeMap<UavId, f64>,
    pub fallback: bool,
}

/// Default discrimination map `F_p(x) = x²`.
pub fn square(x: f64) -> f64 {
    x * x
}

/// `r̃ = Σ_m r_km r_mn / Σ_m r_km` over shares from uploaders other than the
/// observer and the anchor, then `(F_p(r̃) + r_kn) / 2`.
pub fn propagate_reputation(
    local: &ReputationLedger,
    shares: &[CloudReputationShare],
    anchors: &[UavId],
    f_p: impl Fn(f64) -> f64,
) -> Propagated {
    let mut effective = BTreeMap::new();
    let mut fallback = false;
    for &n in anchors {
        let r_kn = local.get(n);
        let (mut num, mut den) = (0.0, 0.0);
        for s in shares {
            let m = s.uploader;
            if m == local.owner || m == n {
                continue;
            }
            let Some(&r_mn) = s.scores.get(&n) else { continue };
            let r_km = local.get(m);
            num += r_km * r_mn;
            den += r_km;
        }
        let value = if den > 0.0 {
            let r_tilde = num / den;
            (0.5 * (f_p(r_tilde) + r_kn)).clamp(0.0, 1.0)
        } else {
            fallback = true;
            r_kn
        };
        effective.insert(n, value);
    }
    Propagated { effective, fallback }
}
