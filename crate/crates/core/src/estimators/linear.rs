//! Linearised trilateration.
//!
//! Squaring the range equations gives one linear row per beacon in the
//! unknowns `u = (x, y, z, |p|²)`:
//! `[-2x_n, -2y_n, -2z_n, 1] · u = d_n² − |p_n|²`.
//! Coordinates are centred on the anchor centroid and rescaled before the
//! solve, which keeps the normal matrix well conditioned at map scale.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};

use super::{Beacon, Ln1Config};
use crate::{Error, Result, Vec3};

struct Frame {
    origin: Vec3,
    scale: f64,
}

impl Frame {
    fn new(beacons: &[Beacon]) -> Self {
        let origin = super::centroid(beacons).unwrap_or_else(Vec3::zeros);
        let rms = (beacons
            .iter()
            .map(|b| (b.reported_position - origin).norm_squared() + b.measured_distance.powi(2))
            .sum::<f64>()
            / beacons.len().max(1) as f64)
            .sqrt();
        Self { origin, scale: if rms > 0.0 { rms } else { 1.0 } }
    }

    /// Rows of the scaled system; unknowns are `(x/s, y/s, z/s, |p|²/s²)`.
    fn rows(&self, beacons: &[Beacon]) -> Vec<(Vector4<f64>, f64)> {
        beacons
            .iter()
            .map(|b| {
                let p = (b.reported_position - self.origin) / self.scale;
                let d = b.measured_distance / self.scale;
                (Vector4::new(-2.0 * p.x, -2.0 * p.y, -2.0 * p.z, 1.0), d * d - p.norm_squared())
            })
            .collect()
    }

    fn position(&self, u: &Vector4<f64>) -> Vec3 {
        self.origin + Vec3::new(u[0], u[1], u[2]) * self.scale
    }
}

fn check_count(beacons: &[Beacon]) -> Result<()> {
    if beacons.len() < 4 {
        return Err(Error::degenerate(format!("linear estimation needs at least 4 beacons, got {}", beacons.len())));
    }
    Ok(())
}

fn solve_normal(rows: &[(Vector4<f64>, f64)], weights: &[f64]) -> Result<Vector4<f64>> {
    let mut ata = Matrix4::zeros();
    let mut atb = Vector4::zeros();
    for ((a, b), &w) in rows.iter().zip(weights) {
        ata += a * a.transpose() * w;
        atb += a * (b * w);
    }
    let eig = SymmetricEigen::new(ata).eigenvalues;
    let max = eig.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, &e| m.min(e));
    if !(min > 1e-12 * max) {
        return Err(Error::DegenerateGeometry {
            reason: "design matrix is rank deficient".into(),
            det: ata.determinant(),
            cond: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    ata.cholesky().map(|c| c.solve(&atb)).ok_or_else(|| Error::degenerate("normal matrix is not positive definite"))
}

/// Ordinary least squares on the linearised system.
pub fn ls_estimate(beacons: &[Beacon]) -> Result<Vec3> {
    check_count(beacons)?;
    let frame = Frame::new(beacons);
    let rows = frame.rows(beacons);
    let u = solve_normal(&rows, &vec![1.0; rows.len()])?;
    Ok(frame.position(&u))
}

/// Weighted least squares with per-beacon weights (typically `1/sigma_M,n`).
pub fn wls_estimate(beacons: &[Beacon], weights: &[f64]) -> Result<Vec3> {
    check_count(beacons)?;
    if weights.len() != beacons.len() {
        return Err(Error::Usage(format!("{} weights for {} beacons", weights.len(), beacons.len())));
    }
    if let Some(w) = weights.iter().find(|&&w| !(w > 0.0)) {
        return Err(Error::Domain(format!("weights must be positive, got {w}")));
    }
    let frame = Frame::new(beacons);
    let rows = frame.rows(beacons);
    let u = solve_normal(&rows, weights)?;
    Ok(frame.position(&u))
}

/// Result of the ℓ1 plane fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Outcome {
    pub position: Vec3,
    pub iterations: usize,
    pub converged: bool,
}

fn soft_threshold(x: f64, k: f64) -> f64 {
    x.signum() * (x.abs() - k).max(0.0)
}

/// Minimise `|A u − b|₁` with scaled-form ADMM, starting from the LS fit.
///
/// Rows are divided by the mean absolute LS residual so that `rho` does not
/// depend on map scale. Splitting `w = A u − b`:
/// `u ← (AᵀA)⁻¹ Aᵀ (b + w − y)`, `w ← shrink(A u − b + y, 1/rho)`,
/// `y ← y + A u − b − w`. Stops when the update of `u` (in map units) falls
/// below `theta` and the constraint `A u − b = w` holds to `theta` relative.
pub fn l1_estimate(beacons: &[Beacon], cfg: &Ln1Config) -> Result<L1Outcome> {
    check_count(beacons)?;
    if !(cfg.rho > 0.0) {
        return Err(Error::Domain(format!("rho must be positive, got {}", cfg.rho)));
    }
    let frame = Frame::new(beacons);
    let mut rows = frame.rows(beacons);
    let n = rows.len();
    let ones = vec![1.0; n];
    let mut u = solve_normal(&rows, &ones)?;
    let spread = rows.iter().map(|(a, b)| (a.dot(&u) - b).abs()).sum::<f64>() / n as f64;
    if !(spread > 0.0) {
        return Ok(L1Outcome { position: frame.position(&u), iterations: 0, converged: true });
    }
    for (a, b) in &mut rows {
        *a /= spread;
        *b /= spread;
    }
    let mut ata = Matrix4::zeros();
    for (a, _) in &rows {
        ata += a * a.transpose();
    }
    let chol = ata.cholesky().ok_or_else(|| Error::degenerate("normal matrix is not positive definite"))?;

    let kappa = 1.0 / cfg.rho;
    let mut y = vec![0.0; n];
    let mut w: Vec<f64> = rows.iter().map(|(a, b)| soft_threshold(a.dot(&u) - b, kappa)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.k_max {
        iterations += 1;
        let mut rhs = Vector4::zeros();
        for (i, (a, b)) in rows.iter().enumerate() {
            rhs += a * (b + w[i] - y[i]);
        }
        let next = chol.solve(&rhs);
        let mut primal = 0.0;
        for (i, (a, b)) in rows.iter().enumerate() {
            let r = a.dot(&next) - b;
            w[i] = soft_threshold(r + y[i], kappa);
            y[i] += r - w[i];
            primal += (r - w[i]).powi(2);
        }
        let moved = (frame.position(&next) - frame.position(&u)).norm();
        u = next;
        if moved < cfg.theta && (primal / n as f64).sqrt() < cfg.theta {
            converged = true;
            break;
        }
    }
    Ok(L1Outcome { position: frame.position(&u), iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::UavId;
    use approx::assert_relative_eq;

    pub(crate) fn exact_beacons(target: Vec3, anchors: &[Vec3]) -> Vec<Beacon> {
        anchors
            .iter()
            .enumerate()
            .map(|(i, &p)| Beacon {
                anchor_id: UavId(i as u32),
                reported_position: p,
                reported_sigma_p: 1.0,
                measured_distance: (p - target).norm(),
            })
            .collect()
    }

    fn tetra() -> Vec<Vec3> {
        vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(20.0, 0.0, 3.0), Vec3::new(0.0, 15.0, -4.0), Vec3::new(3.0, 4.0, 18.0)]
    }

    #[test]
    fn ls_exact_data() {
        let target = Vec3::new(5.0, 5.0, 5.0);
        let est = ls_estimate(&exact_beacons(target, &tetra())).unwrap();
        assert!((est - target).norm() < 1e-9);
    }

    #[test]
    fn coplanar_anchors_rejected() {
        let anchors: Vec<Vec3> = (0..6).map(|i| Vec3::new(i as f64 * 3.0, (i * i) as f64, 2.0)).collect();
        let beacons = exact_beacons(Vec3::new(1.0, 1.0, 10.0), &anchors);
        assert!(matches!(ls_estimate(&beacons), Err(Error::DegenerateGeometry { .. })));
    }

    #[test]
    fn too_few_beacons() {
        let beacons = exact_beacons(Vec3::zeros(), &tetra()[..3]);
        assert!(ls_estimate(&beacons).is_err());
    }

    #[test]
    fn wls_uniform_equals_ls() {
        let target = Vec3::new(1.0, -2.0, 3.0);
        let mut beacons = exact_beacons(target, &tetra());
        beacons[2].measured_distance += 1.3;
        let ls = ls_estimate(&beacons).unwrap();
        let wls = wls_estimate(&beacons, &[0.7; 4]).unwrap();
        assert_relative_eq!(ls, wls, epsilon = 1e-12);
    }

    #[test]
    fn l1_exact_data() {
        let target = Vec3::new(5.0, 5.0, 5.0);
        let mut anchors = tetra();
        anchors.push(Vec3::new(-10.0, 8.0, 2.0));
        let out = l1_estimate(&exact_beacons(target, &anchors), &Ln1Config::default()).unwrap();
        assert!((out.position - target).norm() < 1e-3);
    }

    #[test]
    fn l1_shrugs_off_one_outlier() {
        let target = Vec3::new(2.0, -1.0, 4.0);
        let anchors: Vec<Vec3> = (0..12)
            .map(|i| {
                let a = i as f64 * 0.52;
                Vec3::new(25.0 * a.cos(), 25.0 * a.sin(), if i % 3 == 0 { 15.0 } else { -8.0 + i as f64 })
            })
            .collect();
        let mut beacons = exact_beacons(target, &anchors);
        beacons[4].measured_distance += 30.0;
        let ls = ls_estimate(&beacons).unwrap();
        let l1 = l1_estimate(&beacons, &Ln1Config { k_max: 3000, ..Ln1Config::default() }).unwrap();
        assert!(l1.iterations > 1);
        assert!((l1.position - target).norm() < 0.2 * (ls - target).norm(), "{l1:?} vs {ls:?}");
    }
}
