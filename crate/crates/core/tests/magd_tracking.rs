use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use uavloc::estimators::{Beacon, MagdConfig, MagdState};
use uavloc::{UavId, Vec3};

struct Run {
    switch: usize,
    errors: Vec<f64>,
    alphas: Vec<f64>,
    boosted: Vec<bool>,
}

/// Target flies straight along x at `v1` until at least `settle` steps have
/// passed and the learning rate has sat at its floor for three steps, then at
/// `v2` for `after` more steps. Twelve anchors fly in formation around it and ranges carry N(0, 0.2²) noise.
fn track(cfg: &MagdConfig, v1: f64, v2: f64, settle: usize, after: usize, seed: u64) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.2).unwrap();
    let offsets: Vec<Vec3> = (0..12)
        .map(|i| {
            let a = i as f64 * std::f64::consts::TAU / 12.0;
            Vec3::new(30.0 * a.cos(), 30.0 * a.sin(), if i % 2 == 0 { 10.0 } else { -10.0 })
        })
        .collect();
    let mut target = Vec3::zeros();
    let mut state = MagdState::new(target);
    let ones = vec![1.0; offsets.len()];
    let zeros = vec![0.0; offsets.len()];
    let floor = cfg.eps_min_t0 / offsets.len() as f64;
    let mut run = Run { switch: usize::MAX, errors: Vec::new(), alphas: Vec::new(), boosted: Vec::new() };
    let mut t = 0;
    while t < run.switch.saturating_add(after) {
        if run.switch == usize::MAX && t >= settle && t >= 3 && run.alphas[t - 3..].iter().all(|&a| a == floor) {
            run.switch = t;
        }
        target.x += if t < run.switch { v1 } else { v2 };
        let beacons: Vec<Beacon> = offsets
            .iter()
            .enumerate()
            .map(|(i, o)| Beacon {
                anchor_id: UavId(i as u32 + 1),
                reported_position: target + o,
                reported_sigma_p: 0.5,
                measured_distance: o.norm() + noise.sample(&mut rng),
            })
            .collect();
        let out = state.step(&beacons, &ones, &ones, &zeros, cfg).unwrap();
        run.errors.push((out.position - target).norm());
        run.alphas.push(state.alpha_hat);
        run.boosted.push(out.boosted.is_some());
        t += 1;
        if run.switch == usize::MAX && t > 10 * settle {
            break;
        }
    }
    run
}

/// Small inner-loop budget so a settled tracker cannot absorb a speed jump
/// within one timestep.
fn tight() -> MagdConfig {
    MagdConfig { k_max: 5, eps_min_t0: 1.0, ..MagdConfig::default() }
}

#[test]
fn speed_jump_triggers_boost_and_recovery() {
    let cfg = tight();
    for seed in 0..8 {
        let r = track(&cfg, 0.3, 0.6, 100, 20, seed);
        let switch = r.switch;
        assert!(switch < usize::MAX, "seed {seed}: rate never settled");
        let pre = r.errors[switch - 10..switch].iter().sum::<f64>() / 10.0;
        let boost = (switch..=switch + cfg.phi)
            .find(|&t| r.boosted[t])
            .unwrap_or_else(|| panic!("seed {seed}: no boost within phi steps"));
        assert!(r.alphas[boost] > r.alphas[boost - 1]);
        let recovered = (boost + 1..=switch + 10).any(|t| r.errors[t] <= 1.25 * pre);
        assert!(recovered, "seed {seed}: errors {:?} vs pre {pre}", &r.errors[switch..=switch + 10]);
    }
}

#[test]
fn steady_flight_settles_at_floor() {
    let cfg = tight();
    let r = track(&cfg, 0.3, 0.3, 180, 20, 11);
    assert!((r.alphas[r.alphas.len() - 1] - cfg.eps_min_t0 / 12.0).abs() < 0.2);
    let late = r.errors[r.errors.len() - 50..].iter().sum::<f64>() / 50.0;
    assert!(late < 0.5, "late error {late}");
}
