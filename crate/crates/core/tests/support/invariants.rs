//! Property suites shared by `properties.rs` and the CLI acceptance target.
//!
//! Each suite runs a deterministic proptest runner so repeated runs draw
//! the same cases.

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};
use uavloc::defense::{propagate_reputation, square, CloudReputationShare, ForgetRule, ReputationLedger, TadConfig};
use uavloc::errormodel::mixture_pdf;
use uavloc::estimators::{l1_loss, l1_loss_gradient, ls_estimate, wls_estimate, Beacon};
use uavloc::{UavId, Vec3};

pub const CASES: u32 = 1000;

fn runner(cases: u32) -> TestRunner {
    let cfg = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn report<T: std::fmt::Debug>(r: Result<(), TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

fn vec3(span: f64) -> impl Strategy<Value = Vec3> {
    (-span..span, -span..span, -span..span).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn beacons(positions: &[Vec3], target: &Vec3, noise: &[f64]) -> Vec<Beacon> {
    positions
        .iter()
        .zip(noise)
        .enumerate()
        .map(|(i, (p, e))| Beacon {
            anchor_id: UavId(i as u32 + 1),
            reported_position: *p,
            reported_sigma_p: 0.5,
            measured_distance: ((p - target).norm() + e).max(0.01),
        })
        .collect()
}

/// Anchor sets with enough spread in every axis for the linear solvers.
fn anchor_set() -> impl Strategy<Value = (Vec<Vec3>, Vec3, Vec<f64>)> {
    (5usize..20)
        .prop_flat_map(|n| (prop::collection::vec(vec3(60.0), n), vec3(20.0), prop::collection::vec(-2.0..2.0f64, n)))
}

fn well_spread(anchors: &[Vec3]) -> bool {
    let c = anchors.iter().sum::<Vec3>() / anchors.len() as f64;
    let cov = anchors.iter().fold(c * c.transpose() * 0.0, |acc, a| acc + (a - c) * (a - c).transpose());
    let eig = cov.symmetric_eigenvalues();
    eig.min() > 1e-2 * eig.max()
}

/// Every reputation produced by updates, ledgers or propagation lies in [0, 1].
pub fn reputation_clamping(cases: u32) -> Result<(), String> {
    let cfg = (0.01..1.0f64, -2.0..-0.01f64, 0.01..1.0f64, any::<bool>());
    let shares = prop::collection::vec((1u32..12, prop::collection::btree_map(1u32..12, -3.0..3.0f64, 0..10)), 0..8);
    let strategy = (cfg, -1.0..2.0f64, prop::collection::vec(any::<bool>(), 1..30), shares);
    report(runner(cases).run(&strategy, |((r, p, gamma, decaying), start, flags, raw_shares)| {
        let tad = TadConfig {
            lambda_r: r,
            lambda_p: p,
            gamma,
            forget: if decaying { ForgetRule::Decaying } else { ForgetRule::Restoring },
            ..TadConfig::default()
        };
        let mut ledger = ReputationLedger::new(UavId(0));
        let mut score = start;
        for (t, &flag) in flags.iter().enumerate() {
            score = tad.next_reputation(score, flag);
            prop_assert!((0.0..=1.0).contains(&score), "update gave {score}");
            let anchor = UavId(1 + t as u32 % 11);
            ledger.set(anchor, score, t);
            prop_assert!((0.0..=1.0).contains(&ledger.get(anchor)));
        }
        let shares: Vec<CloudReputationShare> = raw_shares
            .into_iter()
            .map(|(u, raw)| {
                let raw: BTreeMap<UavId, f64> = raw.into_iter().map(|(k, v)| (UavId(k), v)).collect();
                let (share, altered) = CloudReputationShare::ingest(UavId(u), raw.clone());
                let out_of_range = raw.values().any(|v| !(0.0..=1.0).contains(v));
                assert_eq!(altered, out_of_range);
                share
            })
            .collect();
        for s in &shares {
            prop_assert!(s.scores.values().all(|v| (0.0..=1.0).contains(v)));
        }
        let anchors: Vec<UavId> = (1..12).map(UavId).collect();
        let fused = propagate_reputation(&ledger, &shares, &anchors, square);
        for (&n, &v) in &fused.effective {
            prop_assert!((0.0..=1.0).contains(&v), "propagated {v} for {n:?}");
        }
        Ok(())
    }))
}

/// The analytic ℓ1-loss gradient agrees with central differences wherever
/// every residual is clear of the kink.
pub fn gradient_matches_fd(cases: u32) -> Result<(), String> {
    let h = 1e-6;
    report(runner(cases).run(&(anchor_set(), vec3(30.0)), |((anchors, target, noise), probe)| {
        let bs = beacons(&anchors, &target, &noise);
        let min_residual = bs
            .iter()
            .map(|b| ((b.reported_position - probe).norm() - b.measured_distance).abs())
            .fold(f64::INFINITY, f64::min);
        let min_range = bs.iter().map(|b| (b.reported_position - probe).norm()).fold(f64::INFINITY, f64::min);
        prop_assume!(min_residual > 1e-3 && min_range > 1e-3);
        let g = l1_loss_gradient(&probe, &bs);
        let mut fd = Vec3::zeros();
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = h;
            fd[k] = (l1_loss(&(probe + e), &bs) - l1_loss(&(probe - e), &bs)) / (2.0 * h);
        }
        let err = (g - fd).norm();
        prop_assert!(err <= 1e-5 * g.norm().max(1.0), "analytic {g:?} vs fd {fd:?}");
        Ok(())
    }))
}

/// Shifting every reported position shifts the LS estimate by the same vector.
pub fn ls_translation_equivariance(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&(anchor_set(), vec3(500.0)), |((anchors, target, noise), shift)| {
        prop_assume!(well_spread(&anchors));
        let bs = beacons(&anchors, &target, &noise);
        let moved: Vec<Beacon> =
            bs.iter().map(|b| Beacon { reported_position: b.reported_position + shift, ..*b }).collect();
        let a = ls_estimate(&bs).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let b = ls_estimate(&moved).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let scale = 1.0 + shift.norm() + anchors.iter().map(|p| p.norm()).fold(0.0, f64::max);
        prop_assert!((b - (a + shift)).norm() <= 1e-9 * scale, "{a:?} + {shift:?} != {b:?}");
        Ok(())
    }))
}

/// WLS with equal weights reproduces LS.
pub fn wls_uniform_is_ls(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&(anchor_set(), 0.01..100.0f64), |((anchors, target, noise), w)| {
        prop_assume!(well_spread(&anchors));
        let bs = beacons(&anchors, &target, &noise);
        let ls = ls_estimate(&bs).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let wls = wls_estimate(&bs, &vec![w; bs.len()]).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!((ls - wls).norm() <= 1e-12 * (1.0 + ls.norm()), "{ls:?} vs {wls:?}");
        Ok(())
    }))
}

/// The σ-mixture density integrates to one. Quadrature uses `x = μ + a·sinh u`
/// so the narrow core and the wide tails get comparable resolution.
pub fn mixture_normalised(cases: u32) -> Result<(), String> {
    let strategy = (-10.0..10.0f64, 0.05..3.0f64, 0.0..5.0f64);
    report(runner(cases).run(&strategy, |(mu, a, extra)| {
        let b = a + extra;
        let u_max = (14.0 * b / a).asinh();
        let n = 1200;
        let du = 2.0 * u_max / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let u = -u_max + i as f64 * du;
            let x = mu + a * u.sinh();
            let f = mixture_pdf(x, mu, (a, b)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * f * a * u.cosh() * du;
        }
        prop_assert!((total - 1.0).abs() < 1e-4, "integral {total} for mu={mu} range=({a}, {b})");
        Ok(())
    }))
}

pub type Suite = fn(u32) -> Result<(), String>;

/// Name and entry point of every suite.
#[allow(dead_code)]
pub const SUITES: [(&str, Suite); 5] = [
    ("reputation clamping", reputation_clamping),
    ("gradient vs finite difference", gradient_matches_fd),
    ("LS translation equivariance", ls_translation_equivariance),
    ("WLS uniform equals LS", wls_uniform_is_ls),
    ("mixture pdf normalisation", mixture_normalised),
];
