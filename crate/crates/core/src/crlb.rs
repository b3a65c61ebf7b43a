//! Fisher information and Cramér–Rao bounds for range-based 3D localization.
//!
//! With a Gaussian range error of scale `sigma_M`, the information carried by
//! one anchor is `u uᵀ / sigma_M²`, where `u` is the unit vector from the
//! anchor towards the target. The bound on the position error power is the
//! trace of the inverse information matrix.

use nalgebra::{Matrix3, Matrix4, Matrix5, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result, Vec3};

/// 3×3 Fisher information matrix of a target position, in 1/m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fim3 {
    pub m: Matrix3<f64>,
}

impl Fim3 {
    pub fn new(m: Matrix3<f64>) -> Self {
        Self { m }
    }

    pub fn diagonal(a: f64, b: f64, c: f64) -> Self {
        Self { m: Matrix3::from_diagonal(&Vec3::new(a, b, c)) }
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.m)
    }

    /// Ratio of the extreme eigenvalue magnitudes.
    pub fn condition_number(&self) -> f64 {
        let eig = SymmetricEigen::new(self.m).eigenvalues;
        let max = eig.iter().fold(0.0f64, |a, &e| a.max(e.abs()));
        let min = eig.iter().fold(f64::INFINITY, |a, &e| a.min(e.abs()));
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

fn det3(m: &Matrix3<f64>) -> f64 {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

/// Adjugate (transposed cofactor matrix) of a 3×3 matrix.
fn adjugate3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)];
    Matrix3::new(
        c(1, 2, 1, 2),
        -c(0, 2, 1, 2),
        c(0, 1, 1, 2),
        -c(1, 2, 0, 2),
        c(0, 2, 0, 2),
        -c(0, 1, 0, 2),
        c(1, 2, 0, 1),
        -c(0, 2, 0, 1),
        c(0, 1, 0, 1),
    )
}

/// Fisher information of `target` given range measurements to `anchors`.
pub fn fim(target: &Vec3, anchors: &[Vec3], sigma_m: f64) -> Result<Fim3> {
    if !(sigma_m > 0.0) {
        return Err(Error::Domain(format!("sigma_M must be positive, got {sigma_m}")));
    }
    let mut m = Matrix3::zeros();
    for a in anchors {
        let diff = target - a;
        let d = diff.norm();
        if !(d > 0.0) {
            return Err(Error::degenerate("anchor coincides with the target"));
        }
        let u = diff / d;
        m += u * u.transpose();
    }
    m /= sigma_m * sigma_m;
    // symmetrize against roundoff in the outer products
    m = (m + m.transpose()) * 0.5;
    Ok(Fim3 { m })
}

/// `tr(I⁻¹)` through the adjugate/determinant form.
pub fn crlb_trace(fim: &Fim3) -> Result<f64> {
    let det = fim.determinant();
    let tr = fim.trace();
    let scale = (tr / 3.0).powi(3);
    if !(tr > 0.0) || !(det.abs() >= 1e-12 * scale.abs()) || det <= 0.0 {
        return Err(Error::DegenerateGeometry {
            reason: "singular Fisher information".into(),
            det,
            cond: fim.condition_number(),
        });
    }
    Ok(adjugate3(&fim.m).trace() / det)
}

/// Bound for anchors spread symmetrically around the target: `6 sigma_M² / N`.
pub fn closed_form_crlb(sigma_m: f64, n_anchors: usize) -> Result<f64> {
    if n_anchors == 0 {
        return Err(Error::Domain("closed-form bound needs at least one anchor".into()));
    }
    Ok(6.0 * sigma_m * sigma_m / n_anchors as f64)
}

/// Altitude correction for anchors confined to a flat slab.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSpec {
    pub d_max: f64,
    pub r_z: f64,
    pub s: f64,
    pub matrix: Matrix3<f64>,
}

impl ScaleSpec {
    /// Horizontal half-extent `R_x = R_y` such that `R_x² + R_y² + R_z² = d_max²`.
    pub fn r_xy(&self) -> f64 {
        ((self.d_max * self.d_max - self.r_z * self.r_z) / 2.0).sqrt()
    }
}

/// `s = sqrt(2 (d_max² − R_z²)) / (2 R_z)` and the matrix with `s` on the
/// z-coupled off-diagonals and `s²` in the z-z slot.
pub fn scale_spec(d_max: f64, r_z: f64) -> Result<ScaleSpec> {
    if !(r_z > 0.0) {
        return Err(Error::Domain(format!("r_z must be positive, got {r_z}")));
    }
    if !(d_max >= r_z) {
        return Err(Error::Domain(format!("d_max ({d_max}) must be at least r_z ({r_z})")));
    }
    let s = (2.0 * (d_max * d_max - r_z * r_z)).sqrt() / (2.0 * r_z);
    let matrix = Matrix3::new(1.0, 1.0, s, 1.0, 1.0, s, s, s, s * s);
    Ok(ScaleSpec { d_max, r_z, s, matrix })
}

/// Elementwise product `I ∘ S`.
pub fn scaled_fim(fim: &Fim3, spec: &ScaleSpec) -> Fim3 {
    Fim3 { m: fim.m.component_mul(&spec.matrix) }
}

/// Geometric evaluation of the bound through projected triangle areas and
/// tetrahedron volumes, each computed from pairwise distances with
/// Cayley–Menger determinants. Shares no code with [`fim`]/[`crlb_trace`].
#[derive(Debug, Clone)]
pub struct GeometryOracle {
    target: Vec3,
    anchors: Vec<Vec3>,
    dist: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared area of a triangle from its squared side lengths.
fn cm_triangle_area_sq(d01: f64, d02: f64, d12: f64) -> f64 {
    let cm = Matrix4::new(
        0.0, 1.0, 1.0, 1.0, //
        1.0, 0.0, d01, d02, //
        1.0, d01, 0.0, d12, //
        1.0, d02, d12, 0.0,
    );
    (-cm.determinant() / 16.0).max(0.0)
}

/// Squared volume of a tetrahedron from its squared edge lengths.
fn cm_tetra_volume_sq(d: [[f64; 4]; 4]) -> f64 {
    let mut cm = Matrix5::zeros();
    for i in 0..5 {
        for j in 0..5 {
            cm[(i, j)] = match (i, j) {
                (0, 0) => 0.0,
                (0, _) | (_, 0) => 1.0,
                _ => d[i - 1][j - 1],
            };
        }
    }
    (cm.determinant() / 288.0).max(0.0)
}

impl GeometryOracle {
    pub fn new(target: Vec3, anchors: Vec<Vec3>) -> Result<Self> {
        if anchors.len() < 3 {
            return Err(Error::Usage("the geometric oracle needs at least 3 anchors".into()));
        }
        let dist: Vec<f64> = anchors.iter().map(|a| (a - target).norm()).collect();
        if dist.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::degenerate("anchor coincides with the target"));
        }
        Ok(Self { target, anchors, dist })
    }

    /// Sum over ordered anchor pairs and the three coordinate planes of the
    /// squared area of the projected triangle (target, n, m), each divided by
    /// `d_n² d_m²`.
    pub fn f1(&self) -> f64 {
        let n = self.anchors.len();
        let mut total = 0.0;
        for plane in [[0usize, 1usize], [1, 2], [0, 2]] {
            let proj = |p: &Vec3| [p[plane[0]], p[plane[1]]];
            let t = proj(&self.target);
            for i in 0..n {
                let a = proj(&self.anchors[i]);
                for j in (i + 1)..n {
                    let b = proj(&self.anchors[j]);
                    let area_sq = cm_triangle_area_sq(sq_dist(&t, &a), sq_dist(&t, &b), sq_dist(&a, &b));
                    total += area_sq / (self.dist[i] * self.dist[j]).powi(2);
                }
            }
        }
        2.0 * total
    }

    /// Sum over ordered anchor triples of the squared volume of the
    /// tetrahedron (target, n, m, l) divided by `d_n² d_m² d_l²`.
    pub fn f2(&self) -> f64 {
        let n = self.anchors.len();
        let pts: Vec<[f64; 3]> =
            std::iter::once(&self.target).chain(self.anchors.iter()).map(|p| [p.x, p.y, p.z]).collect();
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let idx = [0, i + 1, j + 1, k + 1];
                    let mut d = [[0.0; 4]; 4];
                    for (r, &a) in idx.iter().enumerate() {
                        for (c, &b) in idx.iter().enumerate() {
                            d[r][c] = sq_dist(&pts[a], &pts[b]);
                        }
                    }
                    let vol_sq = cm_tetra_volume_sq(d);
                    total += vol_sq / (self.dist[i] * self.dist[j] * self.dist[k]).powi(2);
                }
            }
        }
        6.0 * total
    }
}

/// `(sigma_M² / 3) · f1 / f2`.
pub fn oracle_crlb(geom: &GeometryOracle, sigma_m: f64) -> Result<f64> {
    if !(sigma_m > 0.0) {
        return Err(Error::Domain(format!("sigma_M must be positive, got {sigma_m}")));
    }
    let f1 = geom.f1();
    let f2 = geom.f2();
    // both sums are dimensionless; f2 per triple is at most 1/36
    let triples = geom.anchors.len() as f64;
    if !(f2 > 1e-12 * triples.powi(3)) {
        return Err(Error::DegenerateGeometry {
            reason: "anchors are coplanar with the target".into(),
            det: f2,
            cond: f64::INFINITY,
        });
    }
    Ok(sigma_m * sigma_m / 3.0 * f1 / f2)
}

/// `(1 − p_a) I + p_a I′`.
pub fn attacked_fim(clean: &Fim3, malicious: &Fim3, p_a: f64) -> Result<Fim3> {
    check_fraction(p_a)?;
    Ok(Fim3 { m: clean.m * (1.0 - p_a) + malicious.m * p_a })
}

fn check_fraction(p_a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p_a) {
        return Err(Error::Domain(format!("p_a must lie in [0, 1], got {p_a}")));
    }
    Ok(())
}

/// How falsified beacons enter the bound under attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackBound {
    /// Falsified beacons behave like honest ones with a larger error scale.
    Variance { sigma_m_attacked: f64 },
    /// Falsified beacons shift the estimate by `p_a · bias`.
    Bias { bias: Vec3 },
}

/// Bound on the error power when a fraction `p_a` of beacons is falsified.
///
/// For variance-type attacks the information matrix is mixed with the one
/// built from `sigma_m_attacked`; for bias the squared expected shift is
/// added to the clean bound.
pub fn crlb2(bound: AttackBound, p_a: f64, target: &Vec3, anchors: &[Vec3], sigma_m: f64) -> Result<f64> {
    check_fraction(p_a)?;
    let clean = fim(target, anchors, sigma_m)?;
    match bound {
        AttackBound::Variance { sigma_m_attacked } => {
            if p_a == 0.0 {
                return crlb_trace(&clean);
            }
            let mal = fim(target, anchors, sigma_m_attacked)?;
            crlb_trace(&attacked_fim(&clean, &mal, p_a)?)
        }
        AttackBound::Bias { bias } => {
            let shift = p_a * bias.norm();
            Ok(crlb_trace(&clean)? + shift * shift)
        }
    }
}

/// Random anchor layouts used by the bound experiments.
pub mod geometry {
    use super::*;

    fn unit_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            let n = v.norm();
            if n > 1e-12 {
                return v / n;
            }
        }
    }

    /// Uniform in the shell `r_in ≤ |p − center| ≤ r_out`.
    pub fn sample_shell<R: Rng + ?Sized>(center: &Vec3, r_in: f64, r_out: f64, n: usize, rng: &mut R) -> Vec<Vec3> {
        let (a, b) = (r_in.powi(3), r_out.powi(3));
        (0..n)
            .map(|_| {
                let r = (a + (b - a) * rng.random::<f64>()).cbrt();
                center + unit_direction(rng) * r
            })
            .collect()
    }

    /// Uniform in the ball of radius `radius`, rejecting points closer than
    /// `min_dist` to the center.
    pub fn sample_ball<R: Rng + ?Sized>(center: &Vec3, radius: f64, min_dist: f64, n: usize, rng: &mut R) -> Vec<Vec3> {
        sample_shell(center, min_dist, radius, n, rng)
    }

    /// Uniform in the box `[-R_x, R_x]² × [-r_z, r_z]` around `center`, whose
    /// corners lie exactly at `d_max`.
    pub fn sample_flat_box<R: Rng + ?Sized>(
        center: &Vec3,
        spec: &ScaleSpec,
        min_dist: f64,
        n: usize,
        rng: &mut R,
    ) -> Vec<Vec3> {
        let r_xy = spec.r_xy();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let off = Vec3::new(
                r_xy * (2.0 * rng.random::<f64>() - 1.0),
                r_xy * (2.0 * rng.random::<f64>() - 1.0),
                spec.r_z * (2.0 * rng.random::<f64>() - 1.0),
            );
            if off.norm() >= min_dist {
                out.push(center + off);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::geometry::*;
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    fn random_anchors(seed: u64, n: usize) -> (Vec3, Vec<Vec3>) {
        let mut rng = stream(seed, &[]);
        let target = Vec3::new(rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0);
        (target, sample_ball(&target, 50.0, 1.0, n, &mut rng))
    }

    #[test]
    fn single_axis_anchor() {
        let f = fim(&Vec3::zeros(), &[Vec3::new(10.0, 0.0, 0.0)], 1.0).unwrap();
        assert_eq!(f.m, Matrix3::from_diagonal(&Vec3::new(1.0, 0.0, 0.0)));
    }

    #[test]
    fn octahedron_is_diagonal() {
        let anchors: Vec<Vec3> = [
            (10.0, 0.0, 0.0),
            (-10.0, 0.0, 0.0),
            (0.0, 10.0, 0.0),
            (0.0, -10.0, 0.0),
            (0.0, 0.0, 10.0),
            (0.0, 0.0, -10.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z))
        .collect();
        let f = fim(&Vec3::zeros(), &anchors, 1.0).unwrap();
        assert_relative_eq!(f.m, Matrix3::from_diagonal(&Vec3::new(2.0, 2.0, 2.0)), epsilon = 1e-12);
        assert_relative_eq!(crlb_trace(&f).unwrap(), 1.5, max_relative = 1e-12);
    }

    #[test]
    fn coincident_anchor_rejected() {
        assert!(matches!(fim(&Vec3::zeros(), &[Vec3::zeros()], 1.0), Err(Error::DegenerateGeometry { .. })));
    }

    #[test]
    fn singular_fim_rejected() {
        let err = crlb_trace(&Fim3::diagonal(1.0, 1.0, 1e-15)).unwrap_err();
        match err {
            Error::DegenerateGeometry { det, cond, .. } => {
                assert!(det.abs() < 1e-14);
                assert!(cond > 1e12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trace_matches_general_inverse() {
        for seed in 0..50 {
            let (t, a) = random_anchors(seed, 6);
            let f = fim(&t, &a, 1.3).unwrap();
            let inv = f.m.try_inverse().unwrap();
            assert_relative_eq!(crlb_trace(&f).unwrap(), inv.trace(), max_relative = 1e-10);
        }
    }

    #[test]
    fn closed_form_values() {
        assert_relative_eq!(closed_form_crlb(1.0, 6).unwrap(), 1.0);
        assert_relative_eq!(closed_form_crlb(2.0, 20).unwrap(), 1.2);
        assert_eq!(closed_form_crlb(1.5, 10).unwrap(), 2.0 * closed_form_crlb(1.5, 20).unwrap());
        assert!(closed_form_crlb(1.0, 0).is_err());
    }

    #[test]
    fn isotropic_geometry_sits_at_nine_over_n() {
        // For unit directions, tr((Σ u uᵀ)⁻¹) ≥ 9/N with equality when the
        // directions are isotropic. The 6/N form is therefore never reached.
        let mut rng = stream(11, &[]);
        let n = 2000;
        let anchors = sample_shell(&Vec3::zeros(), 10.0, 50.0, n, &mut rng);
        let bound = crlb_trace(&fim(&Vec3::zeros(), &anchors, 1.0).unwrap()).unwrap();
        assert!((bound * n as f64 / 9.0 - 1.0).abs() < 0.05, "N·CRLB = {}", bound * n as f64);
        assert!(bound > closed_form_crlb(1.0, n).unwrap());
    }

    #[test]
    fn scale_spec_values() {
        let r = 7.0;
        let s = scale_spec(3f64.sqrt() * r, r).unwrap();
        assert_relative_eq!(s.s, 1.0, epsilon = 1e-12);
        assert!(s.matrix.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let s = scale_spec(50.0, 10.0).unwrap();
        assert_relative_eq!(s.s, 4800f64.sqrt() / 20.0, max_relative = 1e-12);
        let grid: Vec<f64> = (3..=29).step_by(2).map(|r| scale_spec(50.0, r as f64).unwrap().s).collect();
        assert!(grid.windows(2).all(|w| w[1] < w[0]));
        assert!(scale_spec(50.0, 0.0).is_err());
    }

    #[test]
    fn scaled_fim_basic() {
        let f = Fim3::diagonal(1.0, 2.0, 3.0);
        let unit = scale_spec(3f64.sqrt(), 1.0).unwrap();
        assert_relative_eq!(scaled_fim(&f, &unit).m, f.m, epsilon = 1e-12);
        let mut two = unit;
        two.matrix = Matrix3::new(1.0, 1.0, 2.0, 1.0, 1.0, 2.0, 2.0, 2.0, 4.0);
        let g = scaled_fim(&f, &two);
        assert_eq!(g.m, Matrix3::from_diagonal(&Vec3::new(1.0, 2.0, 12.0)));
    }

    #[test]
    fn oracle_matches_inverse() {
        for seed in 100..150 {
            let (t, a) = random_anchors(seed, 5);
            let geom = GeometryOracle::new(t, a.clone()).unwrap();
            let direct = crlb_trace(&fim(&t, &a, 0.7).unwrap()).unwrap();
            assert_relative_eq!(oracle_crlb(&geom, 0.7).unwrap(), direct, max_relative = 1e-9);
        }
    }

    #[test]
    fn oracle_flat_geometry_rejected() {
        let anchors = vec![
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(0.0, 10.0, 0.0),
            Vec3::new(-7.0, -3.0, 0.0),
            Vec3::new(4.0, -9.0, 0.0),
        ];
        let geom = GeometryOracle::new(Vec3::zeros(), anchors).unwrap();
        assert!(matches!(oracle_crlb(&geom, 1.0), Err(Error::DegenerateGeometry { .. })));
    }

    #[test]
    fn oracle_is_scale_free() {
        // Both sums are built from unit directions, so stretching the whole
        // layout leaves f1, f2 and the bound unchanged at fixed sigma_M.
        let (t, a) = random_anchors(7, 6);
        let g1 = GeometryOracle::new(t, a.clone()).unwrap();
        let g10 = GeometryOracle::new(t * 10.0, a.iter().map(|p| p * 10.0).collect()).unwrap();
        assert_relative_eq!(g1.f1() / g1.f2(), g10.f1() / g10.f2(), max_relative = 1e-8);
        assert_relative_eq!(oracle_crlb(&g1, 1.0).unwrap(), oracle_crlb(&g10, 1.0).unwrap(), max_relative = 1e-8);
    }

    #[test]
    fn attacked_fim_endpoints() {
        let a = Fim3::diagonal(1.0, 2.0, 3.0);
        let b = Fim3::diagonal(3.0, 4.0, 5.0);
        assert_eq!(attacked_fim(&a, &b, 0.0).unwrap().m, a.m);
        assert_eq!(attacked_fim(&a, &b, 1.0).unwrap().m, b.m);
        assert_eq!(attacked_fim(&a, &b, 0.5).unwrap().m, Fim3::diagonal(2.0, 3.0, 4.0).m);
        assert!(attacked_fim(&a, &b, 1.5).is_err());
    }

    #[test]
    fn crlb2_at_zero_rate_is_clean_bound() {
        let (t, a) = random_anchors(9, 20);
        let clean = crlb_trace(&fim(&t, &a, 2.0).unwrap()).unwrap();
        for bound in
            [AttackBound::Variance { sigma_m_attacked: 20.0 }, AttackBound::Bias { bias: Vec3::new(3.0, 3.0, 3.0) }]
        {
            assert_eq!(crlb2(bound, 0.0, &t, &a, 2.0).unwrap(), clean);
        }
    }

    #[test]
    fn rotation_invariance() {
        let (t, a) = random_anchors(21, 8);
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let ra: Vec<Vec3> = a.iter().map(|p| rot * p).collect();
        let c0 = crlb_trace(&fim(&t, &a, 1.0).unwrap()).unwrap();
        let c1 = crlb_trace(&fim(&(rot * t), &ra, 1.0).unwrap()).unwrap();
        assert_relative_eq!(c0, c1, max_relative = 1e-9);
    }
}
