//! Worlds, mobility and the seeded Monte Carlo engine.
//!
//! A [`ScenarioConfig`] fully determines a simulation: given the same config
//! (including its seed) every trajectory, beacon, attack and estimate is
//! reproduced bit for bit, whatever the thread count.

mod config;
mod montecarlo;
mod trial;
mod world;

pub use config::{parse_config, ConfigMap};
pub use montecarlo::{run_monte_carlo, McSummary};
pub use trial::{prepare, run_trial, Defense, EstimatorChoice, Prepared, RepTraceRow, TrialResult, TrialSpec};
pub use world::{in_range_beacons, init_world, step_world, LabeledBeacon, UavState, World, ARRIVAL_RADIUS_M};

use std::collections::BTreeSet;

use crate::defense::TadConfig;
use crate::errormodel::{PathLossParams, PositionErrorProfile};
use crate::estimators::EstimatorConfig;
use crate::threat::{AttackKind, AttackMode, AttackPlan, AttackStrategy};
use crate::{Error, Result, UavId, Vec3};

/// How anchors are arranged around the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    /// Anchors start uniformly in a ball of `radius` around the target and
    /// fly in formation with it; the target changes speed and heading every
    /// `speed_period` seconds.
    Formation { radius: f64 },
    /// Every UAV flies between random waypoints inside the map.
    Map,
}

/// Where the tracker starts at the first timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialGuess {
    /// Mean of the first reported anchor positions.
    Centroid,
    /// True position displaced horizontally by the given distance in a random
    /// direction.
    Offset(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub layout: Layout,
    pub map_size: Vec3,
    pub n_anchors: usize,
    pub n_malicious: usize,
    pub speed_range: (f64, f64),
    /// Seconds between speed changes in formation flight.
    pub speed_period: f64,
    pub sim_duration: f64,
    pub dt: f64,
    pub coverage_radius: f64,
    /// Horizontal distance from the map edge kept by the target's waypoints.
    pub target_margin: f64,
    /// Horizontal distance from the map edge kept by anchor waypoints.
    pub anchor_margin: f64,
}

impl WorldConfig {
    /// Formation flight: 20 anchors within 25 m, V ~ U(0.6, 3.4), T = 50 s.
    pub fn setup1() -> Self {
        Self {
            layout: Layout::Formation { radius: 25.0 },
            map_size: Vec3::new(300.0, 300.0, 100.0),
            n_anchors: 20,
            n_malicious: 0,
            speed_range: (0.6, 3.4),
            speed_period: 10.0,
            sim_duration: 50.0,
            dt: 1.0,
            coverage_radius: 50.0,
            target_margin: 0.0,
            anchor_margin: 0.0,
        }
    }

    /// Map [300, 300, 10], 100 anchors, 33 malicious, V ~ U(0.3, 1.7), T = 15 s.
    pub fn setup2() -> Self {
        Self {
            layout: Layout::Map,
            map_size: Vec3::new(300.0, 300.0, 10.0),
            n_anchors: 100,
            n_malicious: 33,
            speed_range: (0.3, 1.7),
            speed_period: 10.0,
            sim_duration: 15.0,
            dt: 1.0,
            coverage_radius: 50.0,
            target_margin: 100.0,
            anchor_margin: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_malicious > self.n_anchors {
            return Err(Error::Usage(format!(
                "{} malicious UAVs requested but only {} anchors exist",
                self.n_malicious, self.n_anchors
            )));
        }
        if !(self.coverage_radius >= 0.0) {
            return bad(format!("coverage radius must be non-negative, got {}", self.coverage_radius));
        }
        if !(self.dt > 0.0) || !(self.sim_duration > 0.0) || !(self.speed_period > 0.0) {
            return bad("dt, sim_duration and speed_period must be positive".into());
        }
        let (lo, hi) = self.speed_range;
        if !(lo >= 0.0 && lo <= hi) {
            return bad(format!("speed range must satisfy 0 <= min <= max, got ({lo}, {hi})"));
        }
        if self.map_size.iter().any(|&v| !(v >= 0.0)) {
            return bad("map size must be non-negative".into());
        }
        if let Layout::Formation { radius } = self.layout {
            if !(radius > ARRIVAL_RADIUS_M) {
                return bad(format!("formation radius must exceed {ARRIVAL_RADIUS_M} m, got {radius}"));
            }
        }
        if !(self.target_margin >= 0.0) || !(self.anchor_margin >= 0.0) {
            return bad("margins must be non-negative".into());
        }
        Ok(())
    }
}

/// Which estimate the detector checks beacons against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TadTiming {
    /// Estimate first with last step's reputations, then check the beacons
    /// against the new estimate.
    AfterEstimate,
    /// Check the beacons against the previous estimate, then estimate with
    /// the refreshed reputations.
    BeforeEstimate,
}

impl std::str::FromStr for TadTiming {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "after" => Ok(TadTiming::AfterEstimate),
            "before" => Ok(TadTiming::BeforeEstimate),
            other => Err(Error::Config(format!("unknown TAD timing {other:?}"))),
        }
    }
}

/// Attack parameters as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSettings {
    pub kind: AttackKind,
    /// Attack parameter `A_t`: jamming power, bias per axis or manipulation
    /// index.
    pub parameter: f64,
    pub strategy: StrategyKind,
    pub frame_period: usize,
    pub attack_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    Random,
    Coordinated,
    Stalking,
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" | "ran" => Ok(StrategyKind::Random),
            "coordinated" | "coor" => Ok(StrategyKind::Coordinated),
            "stalking" => Ok(StrategyKind::Stalking),
            other => Err(Error::Config(format!("unknown attack strategy {other:?}"))),
        }
    }
}

impl AttackSettings {
    pub fn mode(&self) -> Result<AttackMode> {
        AttackMode::from_parameter(self.kind, self.parameter)
    }

    pub fn strategy(&self, victim: UavId) -> AttackStrategy {
        match self.strategy {
            StrategyKind::Random => AttackStrategy::GlobalRandom,
            StrategyKind::Coordinated => AttackStrategy::GlobalCoordinated { frame_period: self.frame_period },
            StrategyKind::Stalking => AttackStrategy::Stalking { victim },
        }
    }

    /// Plan against `victim` with the given malicious set.
    pub fn plan(&self, malicious_ids: BTreeSet<UavId>, victim: UavId, frame_seed: u64) -> Result<AttackPlan> {
        let plan = AttackPlan {
            malicious_ids,
            mode: self.mode()?,
            strategy: self.strategy(victim),
            attack_rate: self.attack_rate,
            frame_seed,
        };
        plan.validate()?;
        Ok(plan)
    }
}

impl Default for AttackSettings {
    /// Coordinated bias of 6 m per axis at attack rate 0.7.
    fn default() -> Self {
        Self {
            kind: AttackKind::Bias,
            parameter: 6.0,
            strategy: StrategyKind::Coordinated,
            frame_period: 1,
            attack_rate: 0.7,
        }
    }
}

/// Reputation sharing among UAVs that follow the victim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpSettings {
    /// UAVs uploading their local reputations.
    pub uploaders: usize,
    /// How many of the uploaders are malicious.
    pub malicious_uploaders: usize,
    /// Radius of the ball in which followers keep station around the victim.
    pub follow_radius: f64,
}

impl Default for RpSettings {
    fn default() -> Self {
        Self { uploaders: 10, malicious_uploaders: 3, follow_radius: 25.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub path_loss: PathLossParams,
    pub position_error: PositionErrorProfile,
    pub estimator: EstimatorConfig,
    pub tad: TadConfig,
    pub tad_timing: TadTiming,
    pub attack: AttackSettings,
    pub initial_guess: InitialGuess,
    /// Draws per knot of the distance-error table.
    pub table_samples: usize,
    pub rp: RpSettings,
}

impl ScenarioConfig {
    pub fn setup1() -> Self {
        Self {
            seed: 1,
            world: WorldConfig::setup1(),
            path_loss: PathLossParams::reference(),
            position_error: PositionErrorProfile::default(),
            estimator: EstimatorConfig::default(),
            tad: TadConfig::default(),
            tad_timing: TadTiming::BeforeEstimate,
            attack: AttackSettings::default(),
            initial_guess: InitialGuess::Offset(80.0),
            table_samples: 10_000,
            rp: RpSettings::default(),
        }
    }

    pub fn setup2() -> Self {
        Self { world: WorldConfig::setup2(), initial_guess: InitialGuess::Centroid, ..Self::setup1() }
    }

    /// Stalking bias attack with reputation sharing, T = 100 s, 30 malicious.
    pub fn rp_stalking() -> Self {
        let base = Self::setup2();
        Self {
            world: WorldConfig { n_malicious: 30, sim_duration: 100.0, ..base.world },
            attack: AttackSettings { strategy: StrategyKind::Stalking, ..AttackSettings::default() },
            ..base
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "setup1" => Ok(Self::setup1()),
            "setup2" => Ok(Self::setup2()),
            "rp" | "rp_stalking" => Ok(Self::rp_stalking()),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.estimator.validate()?;
        self.tad.validate()?;
        self.attack.mode()?;
        if !(0.0..=1.0).contains(&self.attack.attack_rate) {
            return Err(Error::Config(format!("attack rate must lie in [0, 1], got {}", self.attack.attack_rate)));
        }
        if self.attack.frame_period == 0 {
            return Err(Error::Config("frame period must be at least 1".into()));
        }
        if self.table_samples < 10_000 {
            return Err(Error::Config(format!("table_samples must be at least 10000, got {}", self.table_samples)));
        }
        if let InitialGuess::Offset(d) = self.initial_guess {
            if !(d >= 0.0) {
                return Err(Error::Config(format!("initial offset must be non-negative, got {d}")));
            }
        }
        if self.rp.malicious_uploaders > self.rp.uploaders {
            return Err(Error::Config("more malicious uploaders than uploaders".into()));
        }
        if !(self.rp.follow_radius > ARRIVAL_RADIUS_M) {
            return Err(Error::Config(format!("follow radius must exceed {ARRIVAL_RADIUS_M} m")));
        }
        Ok(())
    }
}
