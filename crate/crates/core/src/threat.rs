//! Falsified-information injection.
//!
//! Three attack modes alter what a victim receives from a malicious anchor:
//! jamming corrupts the received position, range and error power; bias
//! shifts the reported position by a fixed vector; manipulation adds a
//! large position error while claiming a tiny error power. Three
//! orchestration strategies decide who attacks whom at each timestep.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::errormodel::{
    build_modeled_error_table, measure_distance, modeled_error_sample, sample_position, PathLossParams,
    PositionErrorProfile, DISTANCE_FLOOR_M,
};
use crate::estimators::Beacon;
use crate::rng::{label, stream};
use crate::scenario::{
    prepare, run_monte_carlo, AttackSettings, Defense, EstimatorChoice, Prepared, ScenarioConfig, TrialSpec,
};
use crate::{Error, Result, UavId, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackMode {
    /// Jamming power `sigma_J²`.
    Jamming { sigma_j_sq: f64 },
    /// Position bias vector in meters.
    Bias { b: Vec3 },
    /// Manipulation index `sigma_M²` of the attacker.
    Manipulation { sigma_m_sq: f64 },
}

impl AttackMode {
    /// Mode of the given kind with scalar attack parameter `a_t`. A scalar
    /// bias `a_t` means the vector `(a_t, a_t, a_t)`.
    pub fn from_parameter(kind: AttackKind, a_t: f64) -> Result<Self> {
        if !(a_t >= 0.0) {
            return Err(Error::Domain(format!("attack parameter must be non-negative, got {a_t}")));
        }
        Ok(match kind {
            AttackKind::Jamming => AttackMode::Jamming { sigma_j_sq: a_t },
            AttackKind::Bias => AttackMode::Bias { b: Vec3::repeat(a_t) },
            AttackKind::Manipulation => AttackMode::Manipulation { sigma_m_sq: a_t },
        })
    }

    pub fn kind(&self) -> AttackKind {
        match self {
            AttackMode::Jamming { .. } => AttackKind::Jamming,
            AttackMode::Bias { .. } => AttackKind::Bias,
            AttackMode::Manipulation { .. } => AttackKind::Manipulation,
        }
    }

    /// Scalar attack parameter `A_t` (the per-axis bias for bias mode).
    pub fn parameter(&self) -> f64 {
        match self {
            AttackMode::Jamming { sigma_j_sq } => *sigma_j_sq,
            AttackMode::Bias { b } => b.amax(),
            AttackMode::Manipulation { sigma_m_sq } => *sigma_m_sq,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            AttackMode::Jamming { sigma_j_sq } => *sigma_j_sq >= 0.0,
            AttackMode::Bias { b } => b.iter().all(|v| v.is_finite()),
            AttackMode::Manipulation { sigma_m_sq } => *sigma_m_sq >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid attack parameters {self:?}")))
        }
    }

    fn is_null(&self) -> bool {
        match self {
            AttackMode::Jamming { sigma_j_sq } => *sigma_j_sq == 0.0,
            AttackMode::Bias { b } => *b == Vec3::zeros(),
            AttackMode::Manipulation { sigma_m_sq } => *sigma_m_sq == 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    Jamming,
    Bias,
    Manipulation,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Jamming => "jamming",
            AttackKind::Bias => "bias",
            AttackKind::Manipulation => "manipulation",
        })
    }
}

impl std::str::FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jamming" | "jam" => Ok(AttackKind::Jamming),
            "bias" => Ok(AttackKind::Bias),
            "manipulation" | "mani" => Ok(AttackKind::Manipulation),
            other => Err(Error::Config(format!("unknown attack mode '{other}'"))),
        }
    }
}

/// Apply `mode` to one received beacon. The input is never modified.
pub fn corrupt_beacon<R: Rng + ?Sized>(beacon: &Beacon, mode: &AttackMode, rng: &mut R) -> Beacon {
    let mut out = *beacon;
    if mode.is_null() {
        return out;
    }
    match *mode {
        AttackMode::Jamming { sigma_j_sq } => {
            let axis = (sigma_j_sq / 3.0).sqrt();
            out.reported_position += Vec3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ) * axis;
            let extra = sigma_j_sq * rng.random::<f64>();
            out.measured_distance = (out.measured_distance + extra).max(DISTANCE_FLOOR_M);
            out.reported_sigma_p += sigma_j_sq.sqrt();
        }
        AttackMode::Bias { b } => {
            out.reported_position += b;
        }
        AttackMode::Manipulation { sigma_m_sq } => {
            let half = (sigma_m_sq / 3.0).sqrt();
            for k in 0..3 {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                out.reported_position[k] += sign * half * rng.random::<f64>();
            }
            out.reported_sigma_p = 1.0 / sigma_m_sq.sqrt();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackStrategy {
    /// Every malicious UAV independently decides each step whether to attack
    /// a random in-range localizing UAV.
    GlobalRandom,
    /// All malicious UAVs attack in the same frames of `frame_period` steps.
    GlobalCoordinated { frame_period: usize },
    /// All malicious UAVs attack one victim.
    Stalking { victim: UavId },
}

impl AttackStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            AttackStrategy::GlobalRandom => "random",
            AttackStrategy::GlobalCoordinated { .. } => "coordinated",
            AttackStrategy::Stalking { .. } => "stalking",
        }
    }
}

/// Who is malicious and how they attack.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    pub malicious_ids: BTreeSet<UavId>,
    pub mode: AttackMode,
    pub strategy: AttackStrategy,
    /// Probability that a malicious UAV attacks in a given timestep (`r_a`).
    pub attack_rate: f64,
    /// Seed of the frame schedule shared by coordinated attackers.
    pub frame_seed: u64,
}

impl AttackPlan {
    pub fn validate(&self) -> Result<()> {
        self.mode.validate()?;
        if !(0.0..=1.0).contains(&self.attack_rate) {
            return Err(Error::Domain(format!("attack rate must lie in [0, 1], got {}", self.attack_rate)));
        }
        if let AttackStrategy::GlobalCoordinated { frame_period: 0 } = self.strategy {
            return Err(Error::Usage("coordinated frame period must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether coordinated attackers are active at timestep `t`.
    pub fn frame_active(&self, t: usize) -> bool {
        match self.strategy {
            AttackStrategy::GlobalCoordinated { frame_period } => {
                let frame = (t / frame_period.max(1)) as u64;
                let mut r = stream(self.frame_seed, &[label::FRAMES, frame]);
                r.random::<f64>() < self.attack_rate
            }
            _ => true,
        }
    }
}

/// Attacker/victim pairs for timestep `t`.
///
/// `positions` holds every UAV in the world, `localizing` the UAVs that
/// currently estimate their position; only those are worth attacking.
pub fn schedule_attacks<R: Rng + ?Sized>(
    plan: &AttackPlan,
    t: usize,
    positions: &BTreeMap<UavId, Vec3>,
    localizing: &[UavId],
    coverage: f64,
    rng: &mut R,
) -> Result<Vec<(UavId, UavId)>> {
    plan.validate()?;
    let mut pairs = Vec::new();
    if plan.attack_rate == 0.0 {
        return Ok(pairs);
    }
    if let AttackStrategy::Stalking { victim } = plan.strategy {
        if !positions.contains_key(&victim) {
            return Err(Error::Usage(format!("stalking victim {victim} is not in the world")));
        }
        for &a in &plan.malicious_ids {
            if a != victim && rng.random::<f64>() < plan.attack_rate {
                pairs.push((a, victim));
            }
        }
        return Ok(pairs);
    }
    let coordinated = matches!(plan.strategy, AttackStrategy::GlobalCoordinated { .. });
    if coordinated && !plan.frame_active(t) {
        return Ok(pairs);
    }
    for &a in &plan.malicious_ids {
        let Some(pa) = positions.get(&a) else { continue };
        if !coordinated && rng.random::<f64>() >= plan.attack_rate {
            continue;
        }
        let near: Vec<UavId> = localizing
            .iter()
            .copied()
            .filter(|v| *v != a && positions.get(v).is_some_and(|pv| (pv - pa).norm() <= coverage))
            .collect();
        if let Some(&v) = near.choose(rng) {
            pairs.push((a, v));
        }
    }
    Ok(pairs)
}

/// Root-mean-square range residual of a falsified beacon, evaluated at the
/// true target position, for anchors uniform within `coverage`.
///
/// This is the error scale `sigma'_M` that falsified beacons present to an
/// estimator; it has no closed form and is estimated by Monte Carlo.
pub fn attacked_sigma_m<R: Rng + ?Sized>(
    mode: &AttackMode,
    params: &PathLossParams,
    profile: &PositionErrorProfile,
    coverage: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Usage("need at least one sample".into()));
    }
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let d = DISTANCE_FLOOR_M + (coverage - DISTANCE_FLOOR_M).max(0.0) * (1.0 - rng.random::<f64>());
        let dir = loop {
            let v = Vec3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            if v.norm() > 1e-12 {
                break v.normalize();
            }
        };
        let anchor = dir * d;
        let sigma_p = profile.draw_sigma(rng);
        let honest = Beacon {
            anchor_id: UavId(0),
            reported_position: sample_position(&anchor, sigma_p, rng)?,
            reported_sigma_p: sigma_p.max(1e-3),
            measured_distance: measure_distance(d, params, rng)?,
        };
        let bad = corrupt_beacon(&honest, mode, rng);
        let r = bad.reported_position.norm() - bad.measured_distance;
        sum_sq += r * r;
    }
    Ok((sum_sq / samples as f64).sqrt())
}

/// Honest counterpart of [`attacked_sigma_m`] (RMS of the fused error).
pub fn honest_sigma_m<R: Rng + ?Sized>(
    params: &PathLossParams,
    profile: &PositionErrorProfile,
    coverage: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Usage("need at least one sample".into()));
    }
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let e = modeled_error_sample(coverage, params, profile, rng)?;
        sum_sq += e * e;
    }
    Ok((sum_sq / samples as f64).sqrt())
}

/// One grid point of [`measure_effectiveness`].
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivenessPoint {
    pub p_a: f64,
    pub a_t: f64,
    /// Mean error of the same worlds without any attack.
    pub err_no_attack: f64,
    pub err_no_ad: f64,
    pub se_no_ad: f64,
    /// Mean error with TAD, if the detector was run.
    pub err_tad: Option<f64>,
    pub se_tad: Option<f64>,
    /// Error inflation `E` without detection.
    pub e: f64,
    /// Error inflation `E_d` with detection.
    pub e_d: Option<f64>,
    pub p_d: Option<f64>,
    pub p_f: Option<f64>,
    /// Falsified and honest beacons behind `p_d` and `p_f` (the detector
    /// run, or the undefended run without one).
    pub n_falsified: usize,
    pub n_honest: usize,
    /// Measured fraction of falsified beacons among those received.
    pub falsified_fraction: f64,
    /// `sqrt(6 sigma_M² / (N (1 − p_a P_d − P_f)))` with `N` the mean number
    /// of beacons in range.
    pub crlb_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectivenessReport {
    pub kind: AttackKind,
    pub strategy: &'static str,
    pub points: Vec<EffectivenessPoint>,
}

/// Malicious UAV count that makes about `p_a` of the received beacons
/// falsified when each malicious UAV attacks with probability `attack_rate`.
pub fn malicious_count_for(p_a: f64, n_anchors: usize, attack_rate: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&p_a) {
        return Err(Error::Domain(format!("p_a must lie in [0, 1], got {p_a}")));
    }
    if p_a == 0.0 {
        return Ok(0);
    }
    if !(attack_rate > 0.0) {
        return Err(Error::Domain("a positive attack rate is needed to reach p_a > 0".into()));
    }
    Ok(((p_a * n_anchors as f64 / attack_rate).round() as usize).min(n_anchors))
}

/// Simulated attack effectiveness over a grid of `(p_a, A_t)` points.
///
/// Each point uses the scenario's strategy and attack rate with the
/// malicious count from [`malicious_count_for`]; attacked and unattacked
/// runs share trial indices, so `E` is a paired difference.
pub fn measure_effectiveness(
    base: &ScenarioConfig,
    kind: AttackKind,
    plan_grid: &[(f64, f64)],
    detector: bool,
    trials: usize,
    threads: usize,
) -> Result<EffectivenessReport> {
    if trials == 0 {
        return Err(Error::Usage("need at least one trial".into()));
    }
    let mut sigma_rng = stream(base.seed, &[label::TABLE, 1]);
    let sigma_m = build_modeled_error_table(
        &base.path_loss,
        &base.position_error,
        &[base.world.coverage_radius.max(DISTANCE_FLOOR_M)],
        base.table_samples,
        &mut sigma_rng,
    )?
    .entries()[0]
        .sigma_m;
    let mut baselines: BTreeMap<usize, (Prepared, f64)> = BTreeMap::new();
    let mut points = Vec::with_capacity(plan_grid.len());
    for &(p_a, a_t) in plan_grid {
        let n_mal = malicious_count_for(p_a, base.world.n_anchors, base.attack.attack_rate)?;
        if let std::collections::btree_map::Entry::Vacant(slot) = baselines.entry(n_mal) {
            let mut cfg = base.clone();
            cfg.world.n_malicious = n_mal;
            let prep = prepare(&cfg)?;
            let none =
                run_monte_carlo(&prep, &TrialSpec::new(EstimatorChoice::Magd, None, Defense::None), trials, threads)?;
            slot.insert((prep, none.mean_error));
        }
        let (prep, err_no_attack) = &baselines[&n_mal];
        let attack = AttackSettings { kind, parameter: a_t, ..base.attack };
        let no_ad = run_monte_carlo(
            prep,
            &TrialSpec::new(EstimatorChoice::Magd, Some(attack), Defense::None),
            trials,
            threads,
        )?;
        let tad = if detector {
            Some(run_monte_carlo(
                prep,
                &TrialSpec::new(EstimatorChoice::Magd, Some(attack), Defense::Tad),
                trials,
                threads,
            )?)
        } else {
            None
        };
        let crlb_floor = tad.as_ref().and_then(|t| {
            let keep = 1.0 - p_a * t.p_d.unwrap_or(0.0) - t.p_f.unwrap_or(0.0);
            let n_eff = t.mean_in_range * keep;
            (n_eff > 0.0).then(|| (6.0 * sigma_m * sigma_m / n_eff).sqrt())
        });
        let counted = tad.as_ref().unwrap_or(&no_ad);
        points.push(EffectivenessPoint {
            p_a,
            a_t,
            err_no_attack: *err_no_attack,
            err_no_ad: no_ad.mean_error,
            se_no_ad: no_ad.std_error,
            err_tad: tad.as_ref().map(|t| t.mean_error),
            se_tad: tad.as_ref().map(|t| t.std_error),
            e: no_ad.mean_error - err_no_attack,
            e_d: tad.as_ref().map(|t| t.mean_error - err_no_attack),
            p_d: tad.as_ref().and_then(|t| t.p_d),
            p_f: tad.as_ref().and_then(|t| t.p_f),
            n_falsified: counted.results.iter().map(|r| r.falsified_total).sum(),
            n_honest: counted.results.iter().map(|r| r.honest_total).sum(),
            falsified_fraction: no_ad.falsified_fraction,
            crlb_floor,
        });
    }
    Ok(EffectivenessReport { kind, strategy: base.attack.strategy(UavId(0)).name(), points })
}

/// The adversary's best attack parameter on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOptimum {
    pub a_t: f64,
    pub e_d: f64,
    pub p_d: Option<f64>,
    /// The maximum sits at an end of the grid.
    pub boundary: bool,
    /// `P_d` at the optimum lies in [0.35, 0.65].
    pub p_d_near_half: bool,
}

/// Grid argmax of the measured `E_d` at fixed `p_a < 0.5`.
pub fn optimize_attack_param(
    base: &ScenarioConfig,
    kind: AttackKind,
    p_a: f64,
    search_grid: &[f64],
    trials: usize,
    threads: usize,
) -> Result<AttackOptimum> {
    if search_grid.is_empty() {
        return Err(Error::Usage("empty attack-parameter grid".into()));
    }
    if !(p_a < 0.5) {
        return Err(Error::Usage(format!("optimisation needs p_a < 0.5, got {p_a}")));
    }
    let grid: Vec<(f64, f64)> = search_grid.iter().map(|&a| (p_a, a)).collect();
    let report = measure_effectiveness(base, kind, &grid, true, trials, threads)?;
    best_attack(&report.points)
}

/// Argmax of `E_d` over measured points ordered by `A_t`.
pub fn best_attack(points: &[EffectivenessPoint]) -> Result<AttackOptimum> {
    let (idx, best) = points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.e_d.unwrap_or(f64::NEG_INFINITY).total_cmp(&b.1.e_d.unwrap_or(f64::NEG_INFINITY)))
        .ok_or_else(|| Error::Usage("no measured points".into()))?;
    let p_d = best.p_d;
    Ok(AttackOptimum {
        a_t: best.a_t,
        e_d: best.e_d.unwrap_or(0.0),
        p_d,
        boundary: points.len() > 1 && (idx == 0 || idx + 1 == points.len()),
        p_d_near_half: p_d.is_some_and(|p| (0.35..=0.65).contains(&p)),
    })
}
