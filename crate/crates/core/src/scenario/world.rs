//! UAV positions and mobility.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Layout, WorldConfig};
use crate::errormodel::{measure_distance, sample_position, uniform_in, PathLossParams, PositionErrorProfile};
use crate::estimators::Beacon;
use crate::{Error, Result, UavId, Vec3};

/// Arrival radius at which a UAV picks its next waypoint.
pub const ARRIVAL_RADIUS_M: f64 = 1.0;

/// Smallest error power an anchor ever reports.
const MIN_REPORTED_SIGMA_P: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct UavState {
    pub id: UavId,
    pub true_position: Vec3,
    pub velocity: Vec3,
    pub waypoint: Vec3,
    pub speed: f64,
    pub sigma_p: f64,
    /// Self-position estimate broadcast at the current timestep.
    pub reported_position: Vec3,
    pub is_malicious: bool,
    /// Fixed offset from a leader; such UAVs move rigidly with it.
    pub leader_offset: Option<(UavId, Vec3)>,
}

/// A beacon together with ground truth that never reaches estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBeacon {
    pub beacon: Beacon,
    pub true_position: Vec3,
    pub true_distance: f64,
    pub falsified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub cfg: WorldConfig,
    pub uavs: Vec<UavState>,
    /// Index 0 is always the target UAV.
    pub target: UavId,
    pub t: usize,
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R, horizontal: bool) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            if horizontal { 0.0 } else { rng.sample::<f64, _>(StandardNormal) },
        );
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

pub(crate) fn random_direction<R: Rng + ?Sized>(rng: &mut R, horizontal: bool) -> Vec3 {
    unit_vector(rng, horizontal)
}

fn in_ball<R: Rng + ?Sized>(radius: f64, min_dist: f64, rng: &mut R) -> Vec3 {
    let (a, b) = (min_dist.powi(3), radius.powi(3));
    unit_vector(rng, false) * (a + (b - a) * rng.random::<f64>()).cbrt()
}

impl WorldConfig {
    fn region(&self, margin: f64) -> (Vec3, Vec3) {
        let m = margin.clamp(0.0, 0.5 * self.map_size.x.min(self.map_size.y));
        (Vec3::new(m, m, 0.0), Vec3::new(self.map_size.x - m, self.map_size.y - m, self.map_size.z))
    }

    fn point_in<R: Rng + ?Sized>(&self, margin: f64, rng: &mut R) -> Vec3 {
        let (lo, hi) = self.region(margin);
        Vec3::new(
            lo.x + (hi.x - lo.x) * rng.random::<f64>(),
            lo.y + (hi.y - lo.y) * rng.random::<f64>(),
            lo.z + (hi.z - lo.z) * rng.random::<f64>(),
        )
    }

    pub fn timesteps(&self) -> usize {
        (self.sim_duration / self.dt).round().max(1.0) as usize
    }
}

/// Place the target and anchors and pick the malicious subset.
pub fn init_world<R: Rng + ?Sized>(cfg: &WorldConfig, profile: &PositionErrorProfile, rng: &mut R) -> Result<World> {
    cfg.validate()?;
    let n = cfg.n_anchors;
    let malicious: Vec<usize> = index::sample(rng, n, cfg.n_malicious).into_iter().map(|i| i + 1).collect();
    let mut uavs = Vec::with_capacity(n + 1);
    match cfg.layout {
        Layout::Formation { radius } => {
            let center = cfg.map_size * 0.5;
            let speed = uniform_in(cfg.speed_range, rng);
            let heading = unit_vector(rng, false);
            uavs.push(UavState {
                id: UavId(0),
                true_position: center,
                velocity: heading * speed,
                waypoint: center,
                speed,
                sigma_p: profile.draw_sigma(rng),
                reported_position: center,
                is_malicious: false,
                leader_offset: None,
            });
            for i in 1..=n {
                let offset = in_ball(radius, ARRIVAL_RADIUS_M, rng);
                uavs.push(UavState {
                    id: UavId(i as u32),
                    true_position: center + offset,
                    velocity: heading * speed,
                    waypoint: center + offset,
                    speed,
                    sigma_p: profile.draw_sigma(rng),
                    reported_position: center + offset,
                    is_malicious: false,
                    leader_offset: Some((UavId(0), offset)),
                });
            }
        }
        Layout::Map => {
            for i in 0..=n {
                let margin = if i == 0 { cfg.target_margin } else { cfg.anchor_margin };
                let position = cfg.point_in(margin, rng);
                let waypoint = cfg.point_in(margin, rng);
                let speed = uniform_in(cfg.speed_range, rng);
                uavs.push(UavState {
                    id: UavId(i as u32),
                    true_position: position,
                    velocity: Vec3::zeros(),
                    waypoint,
                    speed,
                    sigma_p: profile.draw_sigma(rng),
                    reported_position: position,
                    is_malicious: false,
                    leader_offset: None,
                });
            }
        }
    }
    for i in malicious {
        uavs[i].is_malicious = true;
    }
    Ok(World { cfg: cfg.clone(), uavs, target: UavId(0), t: 0 })
}

impl World {
    pub fn get(&self, id: UavId) -> Option<&UavState> {
        self.uavs.get(id.0 as usize).filter(|u| u.id == id)
    }

    pub fn position(&self, id: UavId) -> Option<Vec3> {
        self.get(id).map(|u| u.true_position)
    }

    pub fn positions(&self) -> BTreeMap<UavId, Vec3> {
        self.uavs.iter().map(|u| (u.id, u.true_position)).collect()
    }

    pub fn malicious_ids(&self) -> impl Iterator<Item = UavId> + '_ {
        self.uavs.iter().filter(|u| u.is_malicious).map(|u| u.id)
    }

    /// Make `followers` move rigidly with `leader` at offsets uniform in a
    /// ball of `radius`.
    pub fn attach_followers<R: Rng + ?Sized>(
        &mut self,
        leader: UavId,
        followers: &[UavId],
        radius: f64,
        rng: &mut R,
    ) -> Result<()> {
        let lp = self.position(leader).ok_or_else(|| Error::Usage(format!("leader {leader} is not in the world")))?;
        for &f in followers {
            if f == leader {
                continue;
            }
            let offset = in_ball(radius, ARRIVAL_RADIUS_M, rng);
            let u = self
                .uavs
                .get_mut(f.0 as usize)
                .ok_or_else(|| Error::Usage(format!("follower {f} is not in the world")))?;
            u.leader_offset = Some((leader, offset));
            u.true_position = lp + offset;
        }
        Ok(())
    }

    /// Redraw every UAV's broadcast self-position around its true position.
    pub fn refresh_reports<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for u in &mut self.uavs {
            u.reported_position = sample_position(&u.true_position, u.sigma_p, rng)?;
        }
        Ok(())
    }

    fn clamp_to_map(&self, p: Vec3) -> Vec3 {
        if self.cfg.layout != Layout::Map {
            return p;
        }
        Vec3::new(
            p.x.clamp(0.0, self.cfg.map_size.x),
            p.y.clamp(0.0, self.cfg.map_size.y),
            p.z.clamp(0.0, self.cfg.map_size.z),
        )
    }
}

/// Advance every UAV by `dt` seconds.
pub fn step_world<R: Rng + ?Sized>(world: &mut World, dt: f64, rng: &mut R) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    world.t += 1;
    let cfg = world.cfg.clone();
    let elapsed = world.t as f64 * dt;
    for i in 0..world.uavs.len() {
        if world.uavs[i].leader_offset.is_some() {
            continue;
        }
        let margin = if i == 0 { cfg.target_margin } else { cfg.anchor_margin };
        match cfg.layout {
            Layout::Formation { .. } => {
                let u = &mut world.uavs[i];
                u.true_position += u.velocity * dt;
                let period = cfg.speed_period.max(dt);
                if (elapsed / period).fract() < 1e-9 || (elapsed / period).fract() > 1.0 - 1e-9 {
                    u.speed = uniform_in(cfg.speed_range, rng);
                    u.velocity = unit_vector(rng, false) * u.speed;
                }
            }
            Layout::Map => {
                let (pos, waypoint, speed) = {
                    let u = &world.uavs[i];
                    (u.true_position, u.waypoint, u.speed)
                };
                let to_go = waypoint - pos;
                let dist = to_go.norm();
                let travel = (speed * dt).min(dist);
                let next = if dist > 0.0 { pos + to_go * (travel / dist) } else { pos };
                let next = world.clamp_to_map(next);
                let u = &mut world.uavs[i];
                u.velocity = (next - pos) / dt;
                u.true_position = next;
                if (u.waypoint - next).norm() <= ARRIVAL_RADIUS_M {
                    u.waypoint = cfg.point_in(margin, rng);
                    u.speed = uniform_in(cfg.speed_range, rng);
                }
            }
        }
    }
    for i in 0..world.uavs.len() {
        if let Some((leader, offset)) = world.uavs[i].leader_offset {
            let lp = world.uavs[leader.0 as usize].true_position;
            let lv = world.uavs[leader.0 as usize].velocity;
            let u = &mut world.uavs[i];
            u.true_position = lp + offset;
            u.velocity = lv;
        }
    }
    Ok(())
}

/// Honest beacons from every UAV within coverage of `receiver`. Reported
/// positions are the current broadcasts (see [`World::refresh_reports`]);
/// only the range is measured here.
pub fn in_range_beacons<R: Rng + ?Sized>(
    world: &World,
    receiver: UavId,
    path_loss: &PathLossParams,
    rng: &mut R,
) -> Result<Vec<LabeledBeacon>> {
    let rp =
        world.position(receiver).ok_or_else(|| Error::Usage(format!("receiver {receiver} is not in the world")))?;
    let mut out = Vec::new();
    for u in &world.uavs {
        if u.id == receiver {
            continue;
        }
        let d = (u.true_position - rp).norm();
        if d > world.cfg.coverage_radius || d <= 0.0 {
            continue;
        }
        let measured = measure_distance(d, path_loss, rng)?;
        out.push(LabeledBeacon {
            beacon: Beacon {
                anchor_id: u.id,
                reported_position: u.reported_position,
                reported_sigma_p: u.sigma_p.max(MIN_REPORTED_SIGMA_P),
                measured_distance: measured,
            },
            true_position: u.true_position,
            true_distance: d,
            falsified: false,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn map_cfg() -> WorldConfig {
        WorldConfig::setup2()
    }

    #[test]
    fn same_seed_same_world() {
        let p = PositionErrorProfile::default();
        let a = init_world(&map_cfg(), &p, &mut stream(1, &[])).unwrap();
        let b = init_world(&map_cfg(), &p, &mut stream(1, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malicious_fraction_is_exact() {
        let w = init_world(&map_cfg(), &PositionErrorProfile::default(), &mut stream(2, &[])).unwrap();
        assert_eq!(w.malicious_ids().count(), 33);
        assert!(!w.uavs[0].is_malicious);
    }

    #[test]
    fn too_many_malicious_rejected() {
        let cfg = WorldConfig { n_malicious: 101, ..map_cfg() };
        assert!(matches!(
            init_world(&cfg, &PositionErrorProfile::default(), &mut stream(3, &[])),
            Err(Error::Config(_)) | Err(Error::Usage(_))
        ));
    }

    #[test]
    fn straight_line_step() {
        let cfg = WorldConfig { n_anchors: 0, n_malicious: 0, ..map_cfg() };
        let mut w = init_world(&cfg, &PositionErrorProfile::default(), &mut stream(4, &[])).unwrap();
        w.uavs[0].true_position = Vec3::new(10.0, 10.0, 5.0);
        w.uavs[0].waypoint = Vec3::new(200.0, 10.0, 5.0);
        w.uavs[0].speed = 1.3;
        step_world(&mut w, 1.0, &mut stream(5, &[])).unwrap();
        assert!((w.uavs[0].true_position - Vec3::new(11.3, 10.0, 5.0)).norm() < 1e-9);
    }

    #[test]
    fn zero_speed_stays() {
        let cfg = WorldConfig { n_anchors: 0, n_malicious: 0, ..map_cfg() };
        let mut w = init_world(&cfg, &PositionErrorProfile::default(), &mut stream(6, &[])).unwrap();
        w.uavs[0].speed = 0.0;
        let before = w.uavs[0].true_position;
        step_world(&mut w, 1.0, &mut stream(7, &[])).unwrap();
        assert_eq!(w.uavs[0].true_position, before);
    }

    #[test]
    fn zero_coverage_has_no_beacons() {
        let cfg = WorldConfig { coverage_radius: 0.0, ..map_cfg() };
        let w = init_world(&cfg, &PositionErrorProfile::default(), &mut stream(8, &[])).unwrap();
        let b = in_range_beacons(&w, UavId(0), &PathLossParams::reference(), &mut stream(9, &[])).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn displacement_bounded_by_speed() {
        let cfg = map_cfg();
        let mut w = init_world(&cfg, &PositionErrorProfile::default(), &mut stream(10, &[])).unwrap();
        let mut rng = stream(11, &[]);
        for _ in 0..200 {
            let before: Vec<Vec3> = w.uavs.iter().map(|u| u.true_position).collect();
            step_world(&mut w, 1.0, &mut rng).unwrap();
            for (u, b) in w.uavs.iter().zip(before) {
                assert!((u.true_position - b).norm() <= cfg.speed_range.1 + 1e-9);
            }
        }
    }
}
