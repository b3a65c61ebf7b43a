//! Measurement noise: RSSI ranging error, self-positioning error and the
//! single Gaussian scale `sigma_M` that stands in for both.

use std::f64::consts::{LN_10, PI};
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result, Vec3};

/// Measured distances never drop below one centimeter.
pub const DISTANCE_FLOOR_M: f64 = 0.01;

/// Log-distance path-loss model with uniformly distributed shadowing power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossParams {
    /// Path-loss exponent `n_p`.
    pub exponent: f64,
    /// Reference distance `d0` in meters.
    pub ref_distance: f64,
    /// RSSI at the reference distance, dBm.
    pub rssi_at_ref: f64,
    /// Bounds of the RSSI noise standard deviation, dB.
    pub sigma_r_range: (f64, f64),
}

impl PathLossParams {
    pub fn new(exponent: f64, ref_distance: f64, rssi_at_ref: f64, sigma_r_range: (f64, f64)) -> Result<Self> {
        if !(exponent > 0.0) {
            return Err(Error::Domain(format!("path-loss exponent must be positive, got {exponent}")));
        }
        if !(ref_distance > 0.0) {
            return Err(Error::Domain(format!("reference distance must be positive, got {ref_distance}")));
        }
        check_range("sigma_r_range", sigma_r_range)?;
        Ok(Self { exponent, ref_distance, rssi_at_ref, sigma_r_range })
    }

    /// n_p = 3, d0 = 1 m, P_r(d0) = -30 dBm, sigma_r in [0.5, 2] dB.
    pub fn reference() -> Self {
        Self { exponent: 3.0, ref_distance: 1.0, rssi_at_ref: -30.0, sigma_r_range: (0.5, 2.0) }
    }

    fn log_spread(&self, sigma_r: f64) -> f64 {
        sigma_r * LN_10 / (10.0 * self.exponent)
    }
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Range of the per-UAV self-positioning error standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionErrorProfile {
    pub sigma_p_range: (f64, f64),
}

impl PositionErrorProfile {
    pub fn new(sigma_p_range: (f64, f64)) -> Result<Self> {
        check_range("sigma_p_range", sigma_p_range)?;
        Ok(Self { sigma_p_range })
    }

    pub fn draw_sigma<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        uniform_in(self.sigma_p_range, rng)
    }
}

impl Default for PositionErrorProfile {
    fn default() -> Self {
        Self { sigma_p_range: (0.1, 3.0) }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo >= 0.0) || !(hi >= lo) || !hi.is_finite() {
        return Err(Error::Domain(format!("{name} must satisfy 0 <= min <= max, got ({lo}, {hi})")));
    }
    Ok(())
}

pub(crate) fn uniform_in<R: Rng + ?Sized>((lo, hi): (f64, f64), rng: &mut R) -> f64 {
    if hi > lo {
        lo + (hi - lo) * rng.random::<f64>()
    } else {
        lo
    }
}

/// RSSI observed at distance `d` with Gaussian shadowing of `noise_std` dB.
pub fn rssi_at_distance<R: Rng + ?Sized>(d: f64, params: &PathLossParams, noise_std: f64, rng: &mut R) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::Domain(format!("noise std must be non-negative, got {noise_std}")));
    }
    let noise = if noise_std > 0.0 { noise_std * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
    Ok(params.rssi_at_ref - 10.0 * params.exponent * (d / params.ref_distance).log10() + noise)
}

/// Invert the noise-free path-loss model.
pub fn distance_from_rssi(rssi: f64, params: &PathLossParams) -> f64 {
    params.ref_distance * 10f64.powf((params.rssi_at_ref - rssi) / (10.0 * params.exponent))
}

/// One RSSI-based range measurement of a link of true length `d_true`.
///
/// The shadowing power is drawn per measurement from `sigma_r_range`. The
/// inverted distance is log-normal; it is divided by its conditional mean
/// factor `exp(s^2 / 2)` so that the range error is zero-mean.
pub fn measure_distance<R: Rng + ?Sized>(d_true: f64, params: &PathLossParams, rng: &mut R) -> Result<f64> {
    if !(d_true > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d_true}")));
    }
    let sigma_r = uniform_in(params.sigma_r_range, rng);
    if sigma_r == 0.0 {
        return Ok(d_true.max(DISTANCE_FLOOR_M));
    }
    let rssi = rssi_at_distance(d_true, params, sigma_r, rng)?;
    let spread = params.log_spread(sigma_r);
    let d = distance_from_rssi(rssi, params) * (-0.5 * spread * spread).exp();
    Ok(d.max(DISTANCE_FLOOR_M))
}

/// Self-reported position: truth plus isotropic Gaussian error of total
/// power `sigma_p^2` (variance `sigma_p^2 / 3` per axis).
pub fn sample_position<R: Rng + ?Sized>(p_true: &Vec3, sigma_p: f64, rng: &mut R) -> Result<Vec3> {
    if !(sigma_p >= 0.0) {
        return Err(Error::Domain(format!("sigma_p must be non-negative, got {sigma_p}")));
    }
    if sigma_p == 0.0 {
        return Ok(*p_true);
    }
    let axis = sigma_p / 3f64.sqrt();
    let delta = Vec3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * axis;
    Ok(p_true + delta)
}

fn gaussian_density(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Density of a Gaussian whose standard deviation is itself uniform on
/// `sigma_range`, evaluated by adaptive Simpson quadrature over `t = 1/sigma`.
pub fn mixture_pdf(x: f64, mu: f64, sigma_range: (f64, f64)) -> Result<f64> {
    let (a, b) = sigma_range;
    if !(a > 0.0) || !(b >= a) {
        return Err(Error::Domain(format!("sigma range must satisfy 0 < min <= max, got ({a}, {b})")));
    }
    if b - a <= 1e-9 * b {
        return Ok(gaussian_density(x, mu, 0.5 * (a + b)));
    }
    let u = (x - mu) * (x - mu);
    let integrand = |t: f64| (-0.5 * u * t * t).exp() / (t * (2.0 * PI).sqrt());
    let integral = adaptive_simpson(&integrand, 1.0 / b, 1.0 / a, 1e-8, 50);
    Ok(integral / (b - a))
}

/// Adaptive Simpson quadrature of `f` on `[lo, hi]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64, max_depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }

    let fa = f(lo);
    let fb = f(hi);
    let fm = f(0.5 * (lo + hi));
    let whole = simpson(fa, fm, fb, hi - lo);
    recurse(f, lo, hi, fa, fm, fb, whole, tol, max_depth)
}

/// One knot of an error table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableEntry {
    /// Coverage radius (or link distance, for the distance-indexed variant).
    pub key_m: f64,
    pub sigma_m: f64,
    pub mu_f: f64,
}

/// Piecewise-linear lookup of the modeled error scale.
///
/// Indexed either by coverage radius (`sigma_M` of a whole coverage disc) or
/// by link distance (`sigma_d` of one measured range).
#[derive(Debug, Clone, PartialEq)]
pub struct ModeledErrorTable {
    entries: Vec<TableEntry>,
}

impl ModeledErrorTable {
    pub fn from_entries(entries: Vec<TableEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Usage("error table needs at least one entry".into()));
        }
        if entries.windows(2).any(|w| !(w[1].key_m > w[0].key_m)) {
            return Err(Error::Usage("error table keys must be strictly increasing".into()));
        }
        if entries.iter().any(|e| !(e.sigma_m >= 0.0) || !e.mu_f.is_finite()) {
            return Err(Error::Usage("error table values must be finite and sigma >= 0".into()));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    fn interpolate(&self, key: f64, field: impl Fn(&TableEntry) -> f64) -> f64 {
        let first = &self.entries[0];
        let last = &self.entries[self.entries.len() - 1];
        if key <= first.key_m {
            return field(first);
        }
        if key >= last.key_m {
            return field(last);
        }
        let idx = self.entries.partition_point(|e| e.key_m <= key);
        let (lo, hi) = (&self.entries[idx - 1], &self.entries[idx]);
        let w = (key - lo.key_m) / (hi.key_m - lo.key_m);
        field(lo) + w * (field(hi) - field(lo))
    }

    /// Linear interpolation between knots, clamped at both ends.
    pub fn sigma_at(&self, key: f64) -> f64 {
        self.interpolate(key, |e| e.sigma_m)
    }

    pub fn mu_at(&self, key: f64) -> f64 {
        self.interpolate(key, |e| e.mu_f)
    }

    /// CSV with header `coverage_m,sigma_M_m,mu_f_m`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io { path: "<csv>".into(), message: e.to_string() };
        w.write_record(["coverage_m", "sigma_M_m", "mu_f_m"]).map_err(io)?;
        for e in &self.entries {
            w.write_record([e.key_m.to_string(), e.sigma_m.to_string(), e.mu_f.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io { path: "<csv>".into(), message: e.to_string() })
    }
}

/// One draw of the fused range error for an anchor uniformly placed within
/// `coverage`: RSSI range error plus the self-positioning error projected at
/// a uniformly random relative angle.
pub fn modeled_error_sample<R: Rng + ?Sized>(
    coverage: f64,
    params: &PathLossParams,
    profile: &PositionErrorProfile,
    rng: &mut R,
) -> Result<f64> {
    let d = DISTANCE_FLOOR_M + (coverage - DISTANCE_FLOOR_M).max(0.0) * (1.0 - rng.random::<f64>());
    let eps_d = measure_distance(d, params, rng)? - d;
    let sigma_p = profile.draw_sigma(rng);
    let eps_p = sample_position(&Vec3::zeros(), sigma_p, rng)?.norm();
    let cos_angle: f64 = 2.0 * rng.random::<f64>() - 1.0;
    Ok(eps_d + eps_p * cos_angle)
}

fn mean_and_std(samples: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for x in samples {
        n += 1.0;
        let delta = x - mean;
        mean += delta / n;
        m2 += delta * (x - mean);
    }
    let var = if n > 1.0 { m2 / (n - 1.0) } else { 0.0 };
    (mean, var.max(0.0).sqrt())
}

fn check_knots(knots: &[f64], samples: usize) -> Result<()> {
    if knots.is_empty() {
        return Err(Error::Usage("at least one table knot is required".into()));
    }
    if knots.windows(2).any(|w| !(w[1] > w[0])) || !(knots[0] > 0.0) {
        return Err(Error::Usage("table knots must be positive and strictly increasing".into()));
    }
    if samples < 10_000 {
        return Err(Error::Usage(format!("need at least 10^4 samples per knot, got {samples}")));
    }
    Ok(())
}

/// Monte Carlo table of `sigma_M` (and `mu_f`) against coverage radius.
pub fn build_modeled_error_table<R: Rng + ?Sized>(
    params: &PathLossParams,
    profile: &PositionErrorProfile,
    coverages: &[f64],
    samples_per_point: usize,
    rng: &mut R,
) -> Result<ModeledErrorTable> {
    check_knots(coverages, samples_per_point)?;
    let mut entries = Vec::with_capacity(coverages.len());
    for &coverage in coverages {
        let mut draws = Vec::with_capacity(samples_per_point);
        for _ in 0..samples_per_point {
            draws.push(modeled_error_sample(coverage, params, profile, rng)?);
        }
        let (mu_f, sigma_m) = mean_and_std(draws.into_iter());
        entries.push(TableEntry { key_m: coverage, sigma_m, mu_f });
    }
    ModeledErrorTable::from_entries(entries)
}

/// Monte Carlo table of the range error `sigma_d` against link distance.
pub fn build_distance_error_table<R: Rng + ?Sized>(
    params: &PathLossParams,
    distances: &[f64],
    samples_per_point: usize,
    rng: &mut R,
) -> Result<ModeledErrorTable> {
    check_knots(distances, samples_per_point)?;
    let mut entries = Vec::with_capacity(distances.len());
    for &d in distances {
        let mut draws = Vec::with_capacity(samples_per_point);
        for _ in 0..samples_per_point {
            draws.push(measure_distance(d, params, rng)? - d);
        }
        let (mu_f, sigma_m) = mean_and_std(draws.into_iter());
        entries.push(TableEntry { key_m: d, sigma_m, mu_f });
    }
    ModeledErrorTable::from_entries(entries)
}

/// Per-anchor error statistics used by the weighting and the detector.
///
/// `sigma_f = sqrt(sigma_d(d)^2 + sigma_p^2)` with `sigma_d` read from a
/// distance-indexed table at the measured range.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorErrorModel {
    distance_table: ModeledErrorTable,
}

impl AnchorErrorModel {
    pub fn new(distance_table: ModeledErrorTable) -> Self {
        Self { distance_table }
    }

    /// Distance table on 1..=`max_distance` m in 1 m steps.
    pub fn build<R: Rng + ?Sized>(
        params: &PathLossParams,
        max_distance: f64,
        samples_per_point: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let knots: Vec<f64> = (1..=max_distance.ceil().max(1.0) as usize).map(|d| d as f64).collect();
        Ok(Self::new(build_distance_error_table(params, &knots, samples_per_point, rng)?))
    }

    pub fn distance_table(&self) -> &ModeledErrorTable {
        &self.distance_table
    }

    pub fn sigma_d(&self, measured_distance: f64) -> f64 {
        self.distance_table.sigma_at(measured_distance)
    }

    pub fn sigma_f(&self, measured_distance: f64, reported_sigma_p: f64) -> f64 {
        self.sigma_d(measured_distance).hypot(reported_sigma_p)
    }

    pub fn mu_f(&self, measured_distance: f64) -> f64 {
        self.distance_table.mu_at(measured_distance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;

    #[test]
    fn reference_rssi_values() {
        let p = PathLossParams::reference();
        let mut rng = stream(1, &[]);
        assert_relative_eq!(rssi_at_distance(1.0, &p, 0.0, &mut rng).unwrap(), -30.0, epsilon = 1e-12);
        assert_relative_eq!(rssi_at_distance(10.0, &p, 0.0, &mut rng).unwrap(), -60.0, epsilon = 1e-12);
        assert_relative_eq!(rssi_at_distance(100.0, &p, 0.0, &mut rng).unwrap(), -90.0, epsilon = 1e-12);
    }

    #[test]
    fn rssi_inversion_reference_points() {
        let p = PathLossParams::reference();
        assert_relative_eq!(distance_from_rssi(-60.0, &p), 10.0, max_relative = 1e-12);
        assert_relative_eq!(distance_from_rssi(-30.0, &p), 1.0, max_relative = 1e-12);
        assert_relative_eq!(distance_from_rssi(-90.0, &p), 100.0, max_relative = 1e-12);
    }

    #[test]
    fn non_positive_distance_is_rejected() {
        let p = PathLossParams::reference();
        let mut rng = stream(1, &[]);
        assert!(matches!(rssi_at_distance(0.0, &p, 0.0, &mut rng), Err(Error::Domain(_))));
        assert!(matches!(measure_distance(-1.0, &p, &mut rng), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_noise_measurement_is_exact() {
        let p = PathLossParams { sigma_r_range: (0.0, 0.0), ..PathLossParams::reference() };
        let mut rng = stream(2, &[]);
        assert_eq!(measure_distance(20.0, &p, &mut rng).unwrap(), 20.0);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(PathLossParams::new(0.0, 1.0, -30.0, (0.5, 2.0)).is_err());
        assert!(PathLossParams::new(3.0, 0.0, -30.0, (0.5, 2.0)).is_err());
        assert!(PathLossParams::new(3.0, 1.0, -30.0, (2.0, 0.5)).is_err());
        assert!(PositionErrorProfile::new((-0.1, 1.0)).is_err());
    }

    #[test]
    fn measured_distance_mean_and_spread() {
        let p = PathLossParams::reference();
        let mut rng = stream(3, &[]);
        let n = 100_000;
        let stats =
            |d: f64, rng: &mut crate::rng::SimRng| mean_and_std((0..n).map(|_| measure_distance(d, &p, rng).unwrap()));
        let (mean50, std50) = stats(50.0, &mut rng);
        let (_, std10) = stats(10.0, &mut rng);
        assert!((mean50 - 50.0).abs() < 0.3, "mean {mean50}");
        assert!(std50 > std10, "std at 50 m ({std50}) should exceed std at 10 m ({std10})");
    }

    #[test]
    fn zero_sigma_position_is_identity() {
        let mut rng = stream(4, &[]);
        let p = Vec3::new(1.0, -2.0, 3.0);
        assert_eq!(sample_position(&p, 0.0, &mut rng).unwrap(), p);
        assert!(sample_position(&p, -1.0, &mut rng).is_err());
    }

    #[test]
    fn position_error_power() {
        let mut rng = stream(5, &[]);
        let n = 1_000_000;
        let msq: f64 =
            (0..n).map(|_| sample_position(&Vec3::zeros(), 3.0, &mut rng).unwrap().norm_squared()).sum::<f64>()
                / n as f64;
        assert!((msq - 9.0).abs() < 0.1, "mean squared norm {msq}");
    }

    #[test]
    fn degenerate_mixture_is_gaussian() {
        for &x in &[-3.0, -1.0, 0.0, 0.5, 2.0] {
            let f = mixture_pdf(x, 0.0, (1.0, 1.0 + 1e-12)).unwrap();
            assert!((f - gaussian_density(x, 0.0, 1.0)).abs() < 1e-6);
        }
        assert!(mixture_pdf(0.0, 0.0, (0.0, 1.0)).is_err());
    }

    #[test]
    fn mixture_is_symmetric() {
        for &x in &[0.1, 0.7, 1.3, 2.9, 4.4] {
            let a = mixture_pdf(x, 0.0, (0.5, 2.0)).unwrap();
            let b = mixture_pdf(-x, 0.0, (0.5, 2.0)).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn table_lookup_interpolates() {
        let t = ModeledErrorTable::from_entries(vec![
            TableEntry { key_m: 10.0, sigma_m: 1.0, mu_f: 0.0 },
            TableEntry { key_m: 20.0, sigma_m: 3.0, mu_f: 0.2 },
        ])
        .unwrap();
        assert_eq!(t.sigma_at(10.0), 1.0);
        assert_eq!(t.sigma_at(20.0), 3.0);
        assert_relative_eq!(t.sigma_at(15.0), 2.0);
        assert_relative_eq!(t.mu_at(12.5), 0.05);
        assert_eq!(t.sigma_at(5.0), 1.0);
        assert_eq!(t.sigma_at(50.0), 3.0);
    }

    #[test]
    fn table_rejects_bad_input() {
        let p = PathLossParams::reference();
        let prof = PositionErrorProfile::default();
        let mut rng = stream(6, &[]);
        assert!(matches!(build_modeled_error_table(&p, &prof, &[], 10_000, &mut rng), Err(Error::Usage(_))));
        assert!(build_modeled_error_table(&p, &prof, &[10.0, 5.0], 10_000, &mut rng).is_err());
        assert!(build_modeled_error_table(&p, &prof, &[10.0], 100, &mut rng).is_err());
    }

    #[test]
    fn noiseless_table_is_zero() {
        let p = PathLossParams { sigma_r_range: (0.0, 0.0), ..PathLossParams::reference() };
        let prof = PositionErrorProfile::new((0.0, 0.0)).unwrap();
        let mut rng = stream(7, &[]);
        let t = build_modeled_error_table(&p, &prof, &[5.0, 25.0, 50.0], 10_000, &mut rng).unwrap();
        assert!(t.entries().iter().all(|e| e.sigma_m == 0.0 && e.mu_f == 0.0));
    }

    #[test]
    fn sigma_m_grows_with_coverage() {
        let p = PathLossParams::reference();
        let prof = PositionErrorProfile::default();
        let mut rng = stream(8, &[]);
        let coverages: Vec<f64> = (1..=20).map(|i| 5.0 * i as f64).collect();
        let t = build_modeled_error_table(&p, &prof, &coverages, 20_000, &mut rng).unwrap();
        let sig: Vec<f64> = t.entries().iter().map(|e| e.sigma_m).collect();
        assert!(sig.windows(2).all(|w| w[1] > w[0]), "{sig:?}");
    }

    #[test]
    fn csv_header() {
        let t = ModeledErrorTable::from_entries(vec![TableEntry { key_m: 5.0, sigma_m: 1.5, mu_f: 0.0 }]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("coverage_m,sigma_M_m,mu_f_m\n5,1.5,0\n"));
    }
}
