//! One simulated trial: move, schedule attacks, corrupt, estimate, detect.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;

use super::world::{in_range_beacons, init_world, random_direction, step_world, LabeledBeacon, World};
use super::{AttackSettings, InitialGuess, ScenarioConfig, StrategyKind, TadTiming};
use crate::defense::{propagate_reputation, square, tad_update, CloudReputationShare, ReputationLedger};
use crate::errormodel::AnchorErrorModel;
use crate::estimators::{
    centroid, gd_estimate, l1_estimate, ls_estimate, weights_from_sigma, wls_estimate, Beacon, GdConfig, MagdState,
};
use crate::rng::{label, stream};
use crate::threat::{corrupt_beacon, schedule_attacks, AttackKind, AttackPlan};
use crate::{Error, Result, UavId, Vec3};

/// The position estimator run by the target UAV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorChoice {
    Magd,
    /// Gradient descent with a fixed initial step, warm-started from the
    /// previous estimate.
    FixedGd {
        alpha: f64,
    },
    Ls,
    Wls,
    Ln1,
}

impl EstimatorChoice {
    pub fn name(&self) -> String {
        match self {
            EstimatorChoice::Magd => "MAGD".into(),
            EstimatorChoice::FixedGd { alpha } => format!("GD(alpha={alpha})"),
            EstimatorChoice::Ls => "LS".into(),
            EstimatorChoice::Wls => "WLS".into(),
            EstimatorChoice::Ln1 => "LN-1".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Defense {
    None,
    Tad,
    /// TAD plus reputations shared by uploading UAVs; with
    /// `falsified_shares` the malicious uploaders report honest anchors as 0
    /// and malicious ones as 1.
    TadRp {
        falsified_shares: bool,
    },
}

impl Defense {
    pub fn name(&self) -> &'static str {
        match self {
            Defense::None => "none",
            Defense::Tad => "TAD",
            Defense::TadRp { falsified_shares: false } => "TAD+RP",
            Defense::TadRp { falsified_shares: true } => "TAD+RP(falsified)",
        }
    }
}

/// What varies between runs of the same scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub estimator: EstimatorChoice,
    /// `None` runs without attacks.
    pub attack: Option<AttackSettings>,
    pub defense: Defense,
    /// Record the target's reputation trace.
    pub trace: bool,
}

impl TrialSpec {
    pub fn new(estimator: EstimatorChoice, attack: Option<AttackSettings>, defense: Defense) -> Self {
        Self { estimator, attack, defense, trace: false }
    }
}

/// Scenario with its error tables built once.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cfg: ScenarioConfig,
    pub model: AnchorErrorModel,
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, &[label::TABLE]);
    let model =
        AnchorErrorModel::build(&cfg.path_loss, 2.0 * cfg.world.coverage_radius.max(1.0), cfg.table_samples, &mut rng)?;
    Ok(Prepared { cfg: cfg.clone(), model })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepTraceRow {
    pub t: usize,
    pub observer: UavId,
    pub anchor: UavId,
    pub r_local: f64,
    pub r_effective: f64,
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialResult {
    pub estimates: Vec<Vec3>,
    pub truth: Vec<Vec3>,
    pub errors: Vec<f64>,
    /// The estimator produced nothing at this step; the estimate was carried.
    pub failed: Vec<bool>,
    pub beacons_in_range: Vec<usize>,
    pub falsified_in_range: Vec<usize>,
    pub mean_error: f64,
    pub max_error: f64,
    pub falsified_flagged: usize,
    pub falsified_total: usize,
    pub honest_flagged: usize,
    pub honest_total: usize,
    pub trace: Vec<RepTraceRow>,
    /// Uploaded cloud shares when tracing with RP: `observer` is the
    /// uploader, `r_local` its own ledger value and `r_effective` the value
    /// it uploaded. `flag` is unused.
    pub shares: Vec<RepTraceRow>,
}

impl TrialResult {
    /// Detection rate over falsified beacons, if any were received.
    pub fn p_d(&self) -> Option<f64> {
        (self.falsified_total > 0).then(|| self.falsified_flagged as f64 / self.falsified_total as f64)
    }

    /// False-alarm rate over honest beacons, if any were received.
    pub fn p_f(&self) -> Option<f64> {
        (self.honest_total > 0).then(|| self.honest_flagged as f64 / self.honest_total as f64)
    }

    /// Fraction of received beacons that were falsified.
    pub fn falsified_fraction(&self) -> f64 {
        let total: usize = self.beacons_in_range.iter().sum();
        if total == 0 {
            0.0
        } else {
            self.falsified_in_range.iter().sum::<usize>() as f64 / total as f64
        }
    }
}

/// One localizing UAV: its tracker state and its reputation ledger.
struct Observer {
    id: UavId,
    magd: Option<MagdState>,
    estimate: Option<Vec3>,
    ledger: ReputationLedger,
    effective: BTreeMap<UavId, f64>,
}

impl Observer {
    fn new(id: UavId) -> Self {
        Self { id, magd: None, estimate: None, ledger: ReputationLedger::new(id), effective: BTreeMap::new() }
    }

    fn reputation(&self, anchor: UavId, defense: Defense) -> f64 {
        match defense {
            Defense::None => 1.0,
            Defense::Tad => self.ledger.get(anchor),
            Defense::TadRp { .. } => self.effective.get(&anchor).copied().unwrap_or_else(|| self.ledger.get(anchor)),
        }
    }
}

struct Roles {
    honest_uploaders: Vec<UavId>,
    malicious_uploaders: Vec<UavId>,
}

/// In stalking scenarios every malicious UAV and every honest uploader keeps
/// station around the victim, with or without an active attack, so that all
/// variants share one geometry.
fn assign_roles(world: &mut World, cfg: &ScenarioConfig, rng: &mut crate::rng::SimRng) -> Result<Roles> {
    let mut roles = Roles { honest_uploaders: Vec::new(), malicious_uploaders: Vec::new() };
    if cfg.attack.strategy != StrategyKind::Stalking {
        return Ok(roles);
    }
    let malicious: Vec<UavId> = world.malicious_ids().collect();
    let honest: Vec<UavId> = world.uavs.iter().skip(1).filter(|u| !u.is_malicious).map(|u| u.id).collect();
    let n_bad = cfg.rp.malicious_uploaders.min(malicious.len());
    let n_good = (cfg.rp.uploaders - cfg.rp.malicious_uploaders).min(honest.len());
    roles.malicious_uploaders = index::sample(rng, malicious.len(), n_bad).into_iter().map(|i| malicious[i]).collect();
    roles.honest_uploaders = index::sample(rng, honest.len(), n_good).into_iter().map(|i| honest[i]).collect();
    roles.malicious_uploaders.sort();
    roles.honest_uploaders.sort();
    let followers: Vec<UavId> = malicious.iter().chain(&roles.honest_uploaders).copied().collect();
    world.attach_followers(world.target, &followers, cfg.rp.follow_radius, rng)?;
    Ok(roles)
}

fn falsified_share(world: &World, uploader: UavId) -> CloudReputationShare {
    let raw = world
        .uavs
        .iter()
        .filter(|u| u.id != uploader)
        .map(|u| (u.id, if u.is_malicious { 1.0 } else { 0.0 }))
        .collect();
    CloudReputationShare::ingest(uploader, raw).0
}

/// Deliver beacons to `receiver`, corrupting those from attackers.
#[allow(clippy::too_many_arguments)]
fn receive(
    world: &World,
    receiver: UavId,
    plan: Option<&AttackPlan>,
    attackers: &BTreeSet<UavId>,
    jam_pairs: &BTreeSet<(UavId, UavId)>,
    prep: &Prepared,
    trial: u64,
    t: usize,
    rng: &mut crate::rng::SimRng,
) -> Result<Vec<LabeledBeacon>> {
    let mut beacons = in_range_beacons(world, receiver, &prep.cfg.path_loss, rng)?;
    let Some(plan) = plan else { return Ok(beacons) };
    let jamming = plan.mode.kind() == AttackKind::Jamming;
    for lb in &mut beacons {
        let a = lb.beacon.anchor_id;
        let hit = if jamming { jam_pairs.contains(&(a, receiver)) } else { attackers.contains(&a) };
        if hit {
            let mut crng = stream(
                prep.cfg.seed,
                &[trial, label::CORRUPTION, t as u64, a.0 as u64, if jamming { receiver.0 as u64 } else { u64::MAX }],
            );
            lb.beacon = corrupt_beacon(&lb.beacon, &plan.mode, &mut crng);
            lb.falsified = true;
        }
    }
    Ok(beacons)
}

fn initial_guess(cfg: &ScenarioConfig, beacons: &[Beacon], truth: &Vec3, rng: &mut crate::rng::SimRng) -> Option<Vec3> {
    match cfg.initial_guess {
        InitialGuess::Centroid => centroid(beacons),
        InitialGuess::Offset(d) => Some(truth + random_direction(rng, true) * d),
    }
}

struct Estimated {
    position: Option<Vec3>,
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    obs: &mut Observer,
    choice: EstimatorChoice,
    defense: Defense,
    beacons: &[Beacon],
    prep: &Prepared,
    truth: &Vec3,
    guess_rng: &mut crate::rng::SimRng,
) -> Result<Estimated> {
    let cfg = &prep.cfg;
    if beacons.is_empty() {
        return Ok(Estimated { position: None });
    }
    let sigma_f: Vec<f64> =
        beacons.iter().map(|b| prep.model.sigma_f(b.measured_distance, b.reported_sigma_p)).collect();
    let weights = weights_from_sigma(&sigma_f)?;
    let position = match choice {
        EstimatorChoice::Magd => {
            if obs.magd.is_none() {
                match initial_guess(cfg, beacons, truth, guess_rng) {
                    Some(p) => obs.magd = Some(MagdState::new(p)),
                    None => return Ok(Estimated { position: None }),
                }
            }
            let reps: Vec<f64> = beacons.iter().map(|b| obs.reputation(b.anchor_id, defense)).collect();
            let mu: Vec<f64> = beacons.iter().map(|b| prep.model.mu_f(b.measured_distance)).collect();
            let state = obs.magd.as_mut().expect("tracker initialised above");
            Some(state.step(beacons, &reps, &weights, &mu, &cfg.estimator.magd)?.position)
        }
        EstimatorChoice::FixedGd { alpha } => {
            let start = match obs.estimate {
                Some(p) => Some(p),
                None => initial_guess(cfg, beacons, truth, guess_rng),
            };
            start.map(|s| gd_estimate(&s, beacons, &GdConfig { alpha0: alpha, ..cfg.estimator.gd }).position)
        }
        EstimatorChoice::Ls => ls_estimate(beacons).ok(),
        EstimatorChoice::Wls => wls_estimate(beacons, &weights).ok(),
        EstimatorChoice::Ln1 => l1_estimate(beacons, &cfg.estimator.ln1).ok().map(|o| o.position),
    };
    Ok(Estimated { position })
}

/// TAD on the target's beacons, scoring flags against the hidden labels.
#[allow(clippy::too_many_arguments)]
fn detect(
    ledger: &mut ReputationLedger,
    reference: &Vec3,
    received: &[LabeledBeacon],
    beacons: &[Beacon],
    prep: &Prepared,
    t: usize,
    flags: &mut [bool],
    out: &mut TrialResult,
) -> Result<()> {
    if beacons.is_empty() {
        return Ok(());
    }
    let verdicts = tad_update(ledger, reference, beacons, &prep.model, &prep.cfg.tad, t)?;
    for ((v, lb), f) in verdicts.iter().zip(received).zip(flags.iter_mut()) {
        *f = v.anomalous;
        match (lb.falsified, v.anomalous) {
            (true, true) => out.falsified_flagged += 1,
            (false, true) => out.honest_flagged += 1,
            _ => {}
        }
    }
    Ok(())
}

/// Run trial number `trial` of the prepared scenario. Trials with the same
/// index share world, mobility and honest measurement noise across specs.
pub fn run_trial(prep: &Prepared, spec: &TrialSpec, trial: u64) -> Result<TrialResult> {
    let cfg = &prep.cfg;
    let seed = cfg.seed;
    let mut world_rng = stream(seed, &[trial, label::WORLD]);
    let mut world = init_world(&cfg.world, &cfg.position_error, &mut world_rng)?;
    let roles = assign_roles(&mut world, cfg, &mut world_rng)?;
    let mut mobility = stream(seed, &[trial, label::MOBILITY]);
    let mut guess_rng = stream(seed, &[trial, label::GEOMETRY]);

    let plan = match &spec.attack {
        Some(a) => {
            Some(a.plan(world.malicious_ids().collect(), world.target, seed ^ trial.wrapping_mul(0x9E37_79B9))?)
        }
        None => None,
    };
    let with_tad = spec.defense != Defense::None;
    let with_rp = matches!(spec.defense, Defense::TadRp { .. });
    let falsified_shares = matches!(spec.defense, Defense::TadRp { falsified_shares: true });

    let mut target = Observer::new(world.target);
    let mut helpers: Vec<Observer> = if with_rp {
        roles.honest_uploaders.iter().chain(&roles.malicious_uploaders).map(|&id| Observer::new(id)).collect()
    } else {
        Vec::new()
    };

    let steps = cfg.world.timesteps();
    let mut out = TrialResult::default();
    for t in 0..steps {
        if t > 0 {
            step_world(&mut world, cfg.world.dt, &mut mobility)?;
        }
        world.refresh_reports(&mut stream(seed, &[trial, label::BEACONS, t as u64, 0]))?;

        let (attackers, jam_pairs) = match &plan {
            Some(plan) => {
                let mut localizing = vec![world.target];
                localizing.extend(roles.honest_uploaders.iter().copied());
                let mut arng = stream(seed, &[trial, label::ATTACKS, t as u64]);
                let pairs =
                    schedule_attacks(plan, t, &world.positions(), &localizing, cfg.world.coverage_radius, &mut arng)?;
                (pairs.iter().map(|p| p.0).collect(), pairs.into_iter().collect())
            }
            None => (BTreeSet::new(), BTreeSet::new()),
        };

        let mut brng = stream(seed, &[trial, label::BEACONS, t as u64, 1]);
        let truth = world.position(world.target).expect("target exists");
        let received = receive(&world, world.target, plan.as_ref(), &attackers, &jam_pairs, prep, trial, t, &mut brng)?;
        let beacons: Vec<Beacon> = received.iter().map(|l| l.beacon).collect();

        let mut flags = vec![false; received.len()];
        let before = cfg.tad_timing == TadTiming::BeforeEstimate;
        if with_tad && before {
            if let Some(prev) = target.estimate {
                detect(&mut target.ledger, &prev, &received, &beacons, prep, t, &mut flags, &mut out)?;
            }
        }
        let est = estimate(&mut target, spec.estimator, spec.defense, &beacons, prep, &truth, &mut guess_rng)?;
        let failed = est.position.is_none();
        let p_hat = est.position.or(target.estimate).unwrap_or_else(|| world.cfg.map_size * 0.5);
        target.estimate = Some(p_hat);

        if with_tad && !before {
            detect(&mut target.ledger, &p_hat, &received, &beacons, prep, t, &mut flags, &mut out)?;
        }
        for lb in &received {
            if lb.falsified {
                out.falsified_total += 1;
            } else {
                out.honest_total += 1;
            }
        }

        if with_rp {
            let mut shares = Vec::with_capacity(helpers.len());
            for h in helpers.iter_mut() {
                let hb: Vec<Beacon> =
                    receive(&world, h.id, plan.as_ref(), &attackers, &jam_pairs, prep, trial, t, &mut brng)?
                        .into_iter()
                        .map(|l| l.beacon)
                        .collect();
                let htruth = world.position(h.id).expect("uploader exists");
                if before && !hb.is_empty() {
                    if let Some(prev) = h.estimate {
                        tad_update(&mut h.ledger, &prev, &hb, &prep.model, &cfg.tad, t)?;
                    }
                }
                let hest = estimate(h, EstimatorChoice::Magd, Defense::Tad, &hb, prep, &htruth, &mut guess_rng)?;
                if let Some(p) = hest.position.or(h.estimate) {
                    h.estimate = Some(p);
                    if !before && !hb.is_empty() {
                        tad_update(&mut h.ledger, &p, &hb, &prep.model, &cfg.tad, t)?;
                    }
                }
                let malicious_uploader = roles.malicious_uploaders.contains(&h.id);
                let share = if malicious_uploader && falsified_shares {
                    falsified_share(&world, h.id)
                } else {
                    CloudReputationShare::from_ledger(&h.ledger)
                };
                if spec.trace {
                    for (&a, &v) in &share.scores {
                        out.shares.push(RepTraceRow {
                            t,
                            observer: h.id,
                            anchor: a,
                            r_local: h.ledger.get(a),
                            r_effective: v,
                            flag: false,
                        });
                    }
                }
                shares.push(share);
            }
            let anchors: Vec<UavId> = world.uavs.iter().skip(1).map(|u| u.id).collect();
            target.effective = propagate_reputation(&target.ledger, &shares, &anchors, square).effective;
        }

        if spec.trace && with_tad {
            for (lb, &flag) in received.iter().zip(&flags) {
                let a = lb.beacon.anchor_id;
                out.trace.push(RepTraceRow {
                    t,
                    observer: target.id,
                    anchor: a,
                    r_local: target.ledger.get(a),
                    r_effective: target.reputation(a, spec.defense),
                    flag,
                });
            }
        }

        let err = (p_hat - truth).norm();
        out.estimates.push(p_hat);
        out.truth.push(truth);
        out.errors.push(err);
        out.failed.push(failed);
        out.beacons_in_range.push(received.len());
        out.falsified_in_range.push(received.iter().filter(|l| l.falsified).count());
    }
    if out.errors.is_empty() {
        return Err(Error::Usage("scenario has no timesteps".into()));
    }
    out.mean_error = out.errors.iter().sum::<f64>() / out.errors.len() as f64;
    out.max_error = out.errors.iter().copied().fold(0.0, f64::max);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(cfg: ScenarioConfig) -> Prepared {
        prepare(&cfg).unwrap()
    }

    #[test]
    fn aggregates_match_series() {
        let prep = quick(ScenarioConfig::setup2());
        let r = run_trial(&prep, &TrialSpec::new(EstimatorChoice::Magd, None, Defense::None), 0).unwrap();
        assert_eq!(r.errors.len(), 15);
        let mean = r.errors.iter().sum::<f64>() / 15.0;
        assert!((mean - r.mean_error).abs() <= 1e-12);
        assert!(r.errors.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn deterministic_per_trial_index() {
        let prep = quick(ScenarioConfig::setup2());
        let spec = TrialSpec::new(EstimatorChoice::Magd, Some(AttackSettings::default()), Defense::Tad);
        assert_eq!(run_trial(&prep, &spec, 3).unwrap(), run_trial(&prep, &spec, 3).unwrap());
        assert_ne!(run_trial(&prep, &spec, 3).unwrap(), run_trial(&prep, &spec, 4).unwrap());
    }

    #[test]
    fn no_attack_means_no_falsified_beacons() {
        let prep = quick(ScenarioConfig::setup2());
        let r = run_trial(&prep, &TrialSpec::new(EstimatorChoice::Magd, None, Defense::Tad), 1).unwrap();
        assert_eq!(r.falsified_total, 0);
        assert!(r.honest_total > 0);
        assert_eq!(r.p_d(), None);
    }

    #[test]
    fn attack_produces_labelled_beacons() {
        let prep = quick(ScenarioConfig::setup2());
        let attack = AttackSettings { attack_rate: 1.0, ..AttackSettings::default() };
        let r = run_trial(&prep, &TrialSpec::new(EstimatorChoice::Magd, Some(attack), Defense::Tad), 2).unwrap();
        assert!(r.falsified_total > 0);
        let p = r.p_d().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}
