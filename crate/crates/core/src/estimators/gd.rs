//! Normalised-step gradient descent on the ℓ1 ranging loss
//! `f(p) = Σ | |p_n − p| − d_n |`.

use super::{Beacon, GdConfig};
use crate::Vec3;

pub fn l1_loss(p: &Vec3, beacons: &[Beacon]) -> f64 {
    beacons.iter().map(|b| ((b.reported_position - p).norm() - b.measured_distance).abs()).sum()
}

/// Gradient of [`l1_loss`]; terms at a zero residual or a coincident anchor
/// contribute nothing.
pub fn l1_loss_gradient(p: &Vec3, beacons: &[Beacon]) -> Vec3 {
    let mut g = Vec3::zeros();
    for b in beacons {
        let diff = p - b.reported_position;
        let d = diff.norm();
        if d == 0.0 {
            continue;
        }
        let r = d - b.measured_distance;
        if r != 0.0 {
            g += diff / d * r.signum();
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdOutcome {
    pub position: Vec3,
    pub loss: f64,
    pub iterations: usize,
    /// Step size at exit.
    pub alpha: f64,
}

/// Descend from `initial`. A step that raises the loss is discarded and the
/// step size multiplied by `beta`; the loop ends after `k_max` iterations or
/// once the step size drops below `theta`.
pub fn gd_estimate(initial: &Vec3, beacons: &[Beacon], cfg: &GdConfig) -> GdOutcome {
    let mut p = *initial;
    let mut loss = l1_loss(&p, beacons);
    let mut alpha = cfg.alpha0;
    let mut iterations = 0;
    while iterations < cfg.k_max && alpha >= cfg.theta {
        iterations += 1;
        let g = l1_loss_gradient(&p, beacons);
        let norm = g.norm();
        if norm == 0.0 {
            break;
        }
        let candidate = p - g * (alpha / norm);
        let cand_loss = l1_loss(&candidate, beacons);
        if cand_loss > loss {
            alpha *= cfg.beta;
        } else {
            p = candidate;
            loss = cand_loss;
        }
    }
    GdOutcome { position: p, loss, iterations, alpha }
}
