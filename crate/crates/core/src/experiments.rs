//! Experiment drivers behind the command-line tool.
//!
//! Each experiment maps a scenario plus a few grids to a set of [`Table`]s,
//! one per plot. Tables carry no wall-clock or host information, so equal
//! inputs give byte-identical CSV.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use statrs::distribution::{Continuous, Normal};

use crate::crlb::geometry::{sample_ball, sample_flat_box};
use crate::crlb::{closed_form_crlb, crlb2, crlb_trace, fim, scale_spec, scaled_fim, AttackBound};
use crate::errormodel::{
    build_modeled_error_table, distance_from_rssi, measure_distance, modeled_error_sample, rssi_at_distance,
    sample_position, uniform_in, AnchorErrorModel,
};
use crate::estimators::{centroid, gd_estimate, l1_estimate, ls_estimate, weights_from_sigma, wls_estimate, Beacon};
use crate::rng::{label, stream};
use crate::scenario::{
    parse_config, prepare, run_monte_carlo, AttackSettings, ConfigMap, Defense, EstimatorChoice, McSummary,
    ScenarioConfig, StrategyKind, TrialSpec,
};
use crate::threat::{attacked_sigma_m, best_attack, measure_effectiveness, AttackKind, AttackMode, EffectivenessPoint};
use crate::{Error, Result, UavId, Vec3};

/// First line of every CSV the tool writes.
pub const CSV_VERSION_LINE: &str = "# coop-loc-sec v1";

/// Samples used for the attacked error scale behind CRLB-2.
const ATTACKED_SIGMA_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    ErrorModel,
    Crlb,
    SpatialBench,
    MagdBench,
    AttackEval,
    DefenseBench,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::ErrorModel,
        Experiment::Crlb,
        Experiment::SpatialBench,
        Experiment::MagdBench,
        Experiment::AttackEval,
        Experiment::DefenseBench,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::ErrorModel => "error-model",
            Experiment::Crlb => "crlb",
            Experiment::SpatialBench => "spatial-bench",
            Experiment::MagdBench => "magd-bench",
            Experiment::AttackEval => "attack-eval",
            Experiment::DefenseBench => "defense-bench",
        }
    }

    /// Preset used when the config file names none.
    pub fn default_preset(&self) -> &'static str {
        match self {
            Experiment::MagdBench => "setup1",
            _ => "setup2",
        }
    }

    /// Trials (or geometry repetitions) per cell when not given.
    pub fn default_trials(&self) -> usize {
        match self {
            Experiment::MagdBench => 50,
            _ => 100,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| Error::Usage(format!("unknown experiment {s:?}")))
    }
}

/// One CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &'static str, header: &[&'static str]) -> Self {
        Self { file, header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = format!("{CSV_VERSION_LINE}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let err = |e: csv::Error| Error::io(self.file, e);
            w.write_record(&self.header).map_err(err)?;
            for r in &self.rows {
                w.write_record(r).map_err(err)?;
            }
            w.flush().map_err(|e| Error::io(self.file, e))?;
        }
        String::from_utf8(buf).map_err(|e| Error::io(self.file, e))
    }

    fn index(&self, column: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| *h == column)
            .ok_or_else(|| Error::Usage(format!("{} has no column {column:?}", self.file)))
    }

    /// Values of one column, `None` for empty cells.
    pub fn column(&self, column: &str) -> Result<Vec<Option<f64>>> {
        let i = self.index(column)?;
        self.rows
            .iter()
            .map(|r| {
                if r[i].is_empty() {
                    Ok(None)
                } else {
                    r[i].parse().map(Some).map_err(|_| Error::Usage(format!("{:?} is not a number", r[i])))
                }
            })
            .collect()
    }

    /// Rows whose `column` equals `value`.
    pub fn filter(&self, column: &str, value: &str) -> Result<Table> {
        let i = self.index(column)?;
        Ok(Table {
            file: self.file,
            header: self.header.clone(),
            rows: self.rows.iter().filter(|r| r[i] == value).cloned().collect(),
        })
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// `start, start + step, …` up to `end` inclusive, rounded to 1e-9.
pub fn grid(start: f64, step: f64, end: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect()
}

/// Sweep axes and fixed knobs of the experiments. Every field has a config
/// key of the same name taking a comma-separated list or a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Grids {
    pub rssi_distances: Vec<f64>,
    pub rssi_samples: usize,
    pub hist_coverages: Vec<f64>,
    pub hist_samples: usize,
    pub hist_bins: usize,
    pub table_coverages: Vec<f64>,
    pub crlb_anchor_counts: Vec<usize>,
    pub crlb_coverages: Vec<f64>,
    pub d_max: f64,
    pub r_z_grid: Vec<f64>,
    pub nonuniform_anchors: usize,
    pub alpha_grid: Vec<f64>,
    pub n_anchor_grid: Vec<usize>,
    pub crlb2_p_a_grid: Vec<f64>,
    pub crlb2_anchors: usize,
    pub crlb2_bias: f64,
    pub crlb2_manipulation: f64,
    pub crlb2_jamming: f64,
    pub eff_p_a_grid: Vec<f64>,
    pub eff_bias_grid: Vec<f64>,
    pub eff_manipulation_grid: Vec<f64>,
    pub sweep_p_a: f64,
    pub sweep_bias_grid: Vec<f64>,
    pub sweep_manipulation_grid: Vec<f64>,
    pub eps_t_grid: Vec<f64>,
    pub eps_p_a: f64,
    pub eps_bias: f64,
    pub eps_manipulation: f64,
    pub bias_parameter: f64,
    pub manipulation_parameter: f64,
    pub rp_n_malicious: usize,
    pub rp_sim_duration: f64,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            rssi_distances: grid(1.0, 1.0, 100.0),
            rssi_samples: 20,
            hist_coverages: vec![10.0, 30.0, 50.0],
            hist_samples: 100_000,
            hist_bins: 60,
            table_coverages: grid(5.0, 5.0, 100.0),
            crlb_anchor_counts: (5..=50).step_by(5).collect(),
            crlb_coverages: grid(10.0, 10.0, 100.0),
            d_max: 50.0,
            r_z_grid: grid(3.0, 2.0, 29.0),
            nonuniform_anchors: 30,
            alpha_grid: grid(0.1, 0.1, 2.9),
            n_anchor_grid: (5..=40).step_by(5).collect(),
            crlb2_p_a_grid: grid(0.0, 0.05, 0.95),
            crlb2_anchors: 20,
            crlb2_bias: 3.0,
            crlb2_manipulation: 400.0,
            crlb2_jamming: 8.0,
            eff_p_a_grid: vec![0.0, 0.14, 0.28],
            eff_bias_grid: vec![4.0, 8.0],
            eff_manipulation_grid: vec![200.0, 800.0],
            sweep_p_a: 0.14,
            sweep_bias_grid: grid(0.0, 1.5, 30.0),
            sweep_manipulation_grid: grid(0.0, 200.0, 4000.0),
            eps_t_grid: grid(0.80, 0.02, 0.98),
            eps_p_a: 0.14,
            eps_bias: 8.0,
            eps_manipulation: 800.0,
            bias_parameter: 6.0,
            manipulation_parameter: 600.0,
            rp_n_malicious: 30,
            rp_sim_duration: 100.0,
        }
    }
}

fn list<T: FromStr>(map: &mut ConfigMap, key: &str, slot: &mut Vec<T>) -> Result<()>
where
    T::Err: fmt::Display,
{
    if let Some(v) = map.take_list(key)? {
        if v.is_empty() {
            return Err(Error::Config(format!("{key} must not be empty")));
        }
        *slot = v;
    }
    Ok(())
}

fn scalar<T: FromStr>(map: &mut ConfigMap, key: &str, slot: &mut T) -> Result<()>
where
    T::Err: fmt::Display,
{
    if let Some(v) = map.take(key)? {
        *slot = v;
    }
    Ok(())
}

impl Grids {
    pub fn from_map(map: &mut ConfigMap) -> Result<Self> {
        let mut g = Grids::default();
        list(map, "rssi_distances", &mut g.rssi_distances)?;
        scalar(map, "rssi_samples", &mut g.rssi_samples)?;
        list(map, "hist_coverages", &mut g.hist_coverages)?;
        scalar(map, "hist_samples", &mut g.hist_samples)?;
        scalar(map, "hist_bins", &mut g.hist_bins)?;
        list(map, "table_coverages", &mut g.table_coverages)?;
        list(map, "crlb_anchor_counts", &mut g.crlb_anchor_counts)?;
        list(map, "crlb_coverages", &mut g.crlb_coverages)?;
        scalar(map, "d_max", &mut g.d_max)?;
        list(map, "r_z_grid", &mut g.r_z_grid)?;
        scalar(map, "nonuniform_anchors", &mut g.nonuniform_anchors)?;
        list(map, "alpha_grid", &mut g.alpha_grid)?;
        list(map, "n_anchor_grid", &mut g.n_anchor_grid)?;
        list(map, "crlb2_p_a_grid", &mut g.crlb2_p_a_grid)?;
        scalar(map, "crlb2_anchors", &mut g.crlb2_anchors)?;
        scalar(map, "crlb2_bias", &mut g.crlb2_bias)?;
        scalar(map, "crlb2_manipulation", &mut g.crlb2_manipulation)?;
        scalar(map, "crlb2_jamming", &mut g.crlb2_jamming)?;
        list(map, "eff_p_a_grid", &mut g.eff_p_a_grid)?;
        list(map, "eff_bias_grid", &mut g.eff_bias_grid)?;
        list(map, "eff_manipulation_grid", &mut g.eff_manipulation_grid)?;
        scalar(map, "sweep_p_a", &mut g.sweep_p_a)?;
        list(map, "sweep_bias_grid", &mut g.sweep_bias_grid)?;
        list(map, "sweep_manipulation_grid", &mut g.sweep_manipulation_grid)?;
        list(map, "eps_t_grid", &mut g.eps_t_grid)?;
        scalar(map, "eps_p_a", &mut g.eps_p_a)?;
        scalar(map, "eps_bias", &mut g.eps_bias)?;
        scalar(map, "eps_manipulation", &mut g.eps_manipulation)?;
        scalar(map, "bias_parameter", &mut g.bias_parameter)?;
        scalar(map, "manipulation_parameter", &mut g.manipulation_parameter)?;
        scalar(map, "rp_n_malicious", &mut g.rp_n_malicious)?;
        scalar(map, "rp_sim_duration", &mut g.rp_sim_duration)?;
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rssi_distances.iter().any(|&d| !(d > 0.0)) {
            return bad("rssi_distances must be positive".into());
        }
        if self.hist_bins == 0 || self.hist_samples < 2 || self.rssi_samples == 0 {
            return bad("histogram and RSSI sample counts must be positive".into());
        }
        if !(self.d_max > 0.0) || self.r_z_grid.iter().any(|&r| !(r > 0.0 && r <= self.d_max)) {
            return bad("r_z_grid values must lie in (0, d_max]".into());
        }
        if self.alpha_grid.iter().any(|&a| !(a > 0.0)) {
            return bad("alpha_grid values must be positive".into());
        }
        let fractions = self.crlb2_p_a_grid.iter().chain(&self.eff_p_a_grid).chain([&self.sweep_p_a, &self.eps_p_a]);
        if fractions.copied().any(|p| !(0.0..=1.0).contains(&p)) {
            return bad("p_a values must lie in [0, 1]".into());
        }
        if self.eps_t_grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return bad("eps_t_grid values must lie in (0, 1)".into());
        }
        Ok(())
    }
}

/// Scenario plus grids for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub grids: Grids,
}

impl ExperimentConfig {
    /// Parse a config file. Without a `preset` key the experiment's default
    /// preset is used; unknown keys are rejected.
    pub fn from_text(exp: Experiment, text: &str) -> Result<Self> {
        let mut map = parse_config(text)?;
        if map.take::<String>("preset")?.is_none() {
            map = parse_config(&format!("preset = {}\n{text}", exp.default_preset()))?;
        } else {
            map = parse_config(text)?;
        }
        let scenario = ScenarioConfig::from_map(&mut map)?;
        let grids = Grids::from_map(&mut map)?;
        map.finish()?;
        Ok(Self { scenario, grids })
    }

    pub fn defaults(exp: Experiment) -> Result<Self> {
        Self::from_text(exp, "")
    }
}

/// Run `exp`; `trials` is the number of Monte Carlo trials (or geometry
/// repetitions) per cell, `threads` the worker count (0 = all cores).
pub fn run(exp: Experiment, cfg: &ExperimentConfig, trials: usize, threads: usize) -> Result<Vec<Table>> {
    if trials == 0 {
        return Err(Error::Usage("need at least one trial".into()));
    }
    match exp {
        Experiment::ErrorModel => error_model(cfg),
        Experiment::Crlb => crlb_tables(cfg, trials),
        Experiment::SpatialBench => spatial_bench(cfg, trials).map(|t| vec![t]),
        Experiment::MagdBench => magd_bench(cfg, trials, threads),
        Experiment::AttackEval => attack_eval(cfg, trials, threads),
        Experiment::DefenseBench => defense_bench(cfg, trials, threads),
    }
}

fn error_model(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let s = &cfg.scenario;
    let g = &cfg.grids;
    let pl = &s.path_loss;

    let mut rssi =
        Table::new("rssi_vs_distance.csv", &["distance_m", "sample", "rssi_dbm", "rssi_mean_dbm", "distance_est_m"]);
    let mut rng = stream(s.seed, &[label::TABLE, 10]);
    for &d in &g.rssi_distances {
        let mean = rssi_at_distance(d, pl, 0.0, &mut rng)?;
        for i in 0..g.rssi_samples {
            let sigma_r = uniform_in(pl.sigma_r_range, &mut rng);
            let r = rssi_at_distance(d, pl, sigma_r, &mut rng)?;
            rssi.push(vec![num(d), i.to_string(), num(r), num(mean), num(distance_from_rssi(r, pl))]);
        }
    }

    let mut hist = Table::new("error_histogram.csv", &["coverage_m", "bin_center_m", "density", "gaussian_pdf"]);
    for (k, &c) in g.hist_coverages.iter().enumerate() {
        let mut rng = stream(s.seed, &[label::TABLE, 11, k as u64]);
        let draws = (0..g.hist_samples)
            .map(|_| modeled_error_sample(c, pl, &s.position_error, &mut rng))
            .collect::<Result<Vec<f64>>>()?;
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let (lo, hi) = (mean - 4.0 * sd, mean + 4.0 * sd);
        let width = (hi - lo) / g.hist_bins as f64;
        let mut counts = vec![0usize; g.hist_bins];
        for x in &draws {
            if *x >= lo && *x < hi {
                counts[(((x - lo) / width) as usize).min(g.hist_bins - 1)] += 1;
            }
        }
        let fit = Normal::new(mean, sd.max(f64::MIN_POSITIVE)).map_err(|e| Error::Domain(e.to_string()))?;
        for (i, &cnt) in counts.iter().enumerate() {
            let center = lo + (i as f64 + 0.5) * width;
            hist.push(vec![num(c), num(center), num(cnt as f64 / (n * width)), num(fit.pdf(center))]);
        }
    }

    let mut rng = stream(s.seed, &[label::TABLE, 12]);
    let model = build_modeled_error_table(pl, &s.position_error, &g.table_coverages, s.table_samples, &mut rng)?;
    let mut table = Table::new("sigma_m_table.csv", &["coverage_m", "sigma_M_m", "mu_f_m"]);
    for e in model.entries() {
        table.push(vec![num(e.key_m), num(e.sigma_m), num(e.mu_f)]);
    }
    Ok(vec![rssi, hist, table])
}

fn sigma_m_at(cfg: &ExperimentConfig, knots: &[f64], salt: u64) -> Result<Vec<f64>> {
    let s = &cfg.scenario;
    let mut sorted = knots.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut rng = stream(s.seed, &[label::TABLE, salt]);
    let table = build_modeled_error_table(&s.path_loss, &s.position_error, &sorted, s.table_samples, &mut rng)?;
    Ok(knots.iter().map(|&k| table.sigma_at(k)).collect())
}

fn crlb_tables(cfg: &ExperimentConfig, reps: usize) -> Result<Vec<Table>> {
    let g = &cfg.grids;
    let seed = cfg.scenario.seed;
    let target = Vec3::zeros();

    let sigmas = sigma_m_at(cfg, &g.crlb_coverages, 20)?;
    let mut surface =
        Table::new("crlb_surface.csv", &["n_anchors", "coverage_m", "crlb_m2", "sigma_M_m", "closed_form_m2"]);
    for &n in &g.crlb_anchor_counts {
        for (ci, (&c, &sigma)) in g.crlb_coverages.iter().zip(&sigmas).enumerate() {
            let mut acc = 0.0;
            for r in 0..reps {
                let mut rng = stream(seed, &[label::GEOMETRY, 20, n as u64, ci as u64, r as u64]);
                let anchors = sample_ball(&target, c, 1.0, n, &mut rng);
                acc += crlb_trace(&fim(&target, &anchors, sigma)?)?;
            }
            surface.push(vec![
                n.to_string(),
                num(c),
                num(acc / reps as f64),
                num(sigma),
                num(closed_form_crlb(sigma, n)?),
            ]);
        }
    }

    let sigma = sigma_m_at(cfg, &[g.d_max], 21)?[0];
    let n = g.nonuniform_anchors;
    let mut bench = 0.0;
    for r in 0..reps {
        let mut rng = stream(seed, &[label::GEOMETRY, 21, r as u64]);
        bench += crlb_trace(&fim(&target, &sample_ball(&target, g.d_max, 1.0, n, &mut rng), sigma)?)?;
    }
    bench /= reps as f64;
    let mut nonuni =
        Table::new("crlb_nonuniform.csv", &["r_z_m", "crlb_unscaled", "crlb_scaled", "crlb_benchmark", "scale_s"]);
    for &r_z in &g.r_z_grid {
        let spec = scale_spec(g.d_max, r_z)?;
        let (mut un, mut sc) = (0.0, 0.0);
        for r in 0..reps {
            let mut rng = stream(seed, &[label::GEOMETRY, 22, r as u64]);
            let f = fim(&target, &sample_flat_box(&target, &spec, 1.0, n, &mut rng), sigma)?;
            un += crlb_trace(&f)?;
            sc += crlb_trace(&scaled_fim(&f, &spec))?;
        }
        nonuni.push(vec![num(r_z), num(un / reps as f64), num(sc / reps as f64), num(bench), num(spec.s)]);
    }
    Ok(vec![surface, nonuni])
}

/// Noisy beacons from anchors at known true positions around a target at
/// the origin.
fn static_beacons<R: Rng + ?Sized>(anchors: &[Vec3], s: &ScenarioConfig, rng: &mut R) -> Result<Vec<Beacon>> {
    anchors
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let sigma_p = s.position_error.draw_sigma(rng);
            Ok(Beacon {
                anchor_id: UavId(i as u32 + 1),
                reported_position: sample_position(a, sigma_p, rng)?,
                reported_sigma_p: sigma_p.max(1e-3),
                measured_distance: measure_distance(a.norm(), &s.path_loss, rng)?,
            })
        })
        .collect()
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

const SPATIAL_METHODS: [&str; 4] = ["LS", "WLS", "LN-1", "GD"];

fn spatial_bench(cfg: &ExperimentConfig, trials: usize) -> Result<Table> {
    let s = &cfg.scenario;
    let g = &cfg.grids;
    let mut trng = stream(s.seed, &[label::TABLE, 30]);
    let model = AnchorErrorModel::build(&s.path_loss, 2.0 * g.d_max, s.table_samples, &mut trng)?;
    let mut out = Table::new("spatial_bench.csv", &["r_z_m", "method", "mean_error_m", "std_error_m"]);
    for &r_z in &g.r_z_grid {
        let spec = scale_spec(g.d_max, r_z)?;
        let mut errs: [Vec<f64>; 4] = Default::default();
        for t in 0..trials {
            let mut rng = stream(s.seed, &[label::GEOMETRY, 30, t as u64]);
            let anchors = sample_flat_box(&Vec3::zeros(), &spec, 1.0, g.nonuniform_anchors, &mut rng);
            let beacons = static_beacons(&anchors, s, &mut rng)?;
            let sigma: Vec<f64> =
                beacons.iter().map(|b| model.sigma_f(b.measured_distance, b.reported_sigma_p)).collect();
            let start = centroid(&beacons).expect("anchors are present");
            let estimates = [
                ls_estimate(&beacons)?,
                wls_estimate(&beacons, &weights_from_sigma(&sigma)?)?,
                l1_estimate(&beacons, &s.estimator.ln1)?.position,
                gd_estimate(&start, &beacons, &s.estimator.gd).position,
            ];
            for (e, p) in errs.iter_mut().zip(estimates) {
                e.push(p.norm());
            }
        }
        for (m, e) in SPATIAL_METHODS.iter().zip(&errs) {
            let (mean, se) = mean_and_se(e);
            out.push(vec![num(r_z), m.to_string(), num(mean), num(se)]);
        }
    }
    Ok(out)
}

fn magd_bench(cfg: &ExperimentConfig, trials: usize, threads: usize) -> Result<Vec<Table>> {
    let g = &cfg.grids;
    let mut methods = vec![EstimatorChoice::Magd];
    methods.extend(g.alpha_grid.iter().map(|&alpha| EstimatorChoice::FixedGd { alpha }));
    let mut per_n = Table::new("magd_bench.csv", &["n_anchors", "method", "alpha", "mean_error_m", "std_error_m"]);
    let mut sums = vec![Vec::new(); methods.len()];
    for &n in &g.n_anchor_grid {
        let mut sc = cfg.scenario.clone();
        sc.world.n_anchors = n;
        sc.world.n_malicious = sc.world.n_malicious.min(n);
        let prep = prepare(&sc)?;
        for (m, sum) in methods.iter().zip(sums.iter_mut()) {
            let r = run_monte_carlo(&prep, &TrialSpec::new(*m, None, Defense::None), trials, threads)?;
            sum.push(r.mean_error);
            per_n.push(vec![n.to_string(), method_name(m), method_alpha(m), num(r.mean_error), num(r.std_error)]);
        }
    }
    let mut table = Table::new("magd_table.csv", &["method", "alpha", "mean_error_m"]);
    for (m, v) in methods.iter().zip(&sums) {
        table.push(vec![method_name(m), method_alpha(m), num(mean_and_se(v).0)]);
    }
    Ok(vec![per_n, table])
}

fn method_name(m: &EstimatorChoice) -> String {
    match m {
        EstimatorChoice::FixedGd { .. } => "GD".into(),
        other => other.name(),
    }
}

fn method_alpha(m: &EstimatorChoice) -> String {
    match m {
        EstimatorChoice::FixedGd { alpha } => num(*alpha),
        _ => String::new(),
    }
}

const EFFECTIVENESS_HEADER: [&str; 17] = [
    "p_a",
    "A_t",
    "mode",
    "strategy",
    "mean_err_noAD",
    "mean_err_TAD",
    "P_d",
    "P_f",
    "crlb_floor",
    "mean_err_no_attack",
    "E",
    "E_d",
    "falsified_fraction",
    "se_noAD",
    "se_TAD",
    "n_falsified",
    "n_honest",
];

fn push_points(t: &mut Table, kind: AttackKind, strategy: StrategyKind, points: &[EffectivenessPoint]) {
    for p in points {
        t.push(vec![
            num(p.p_a),
            num(p.a_t),
            kind.to_string(),
            strategy_name(strategy).into(),
            num(p.err_no_ad),
            opt(p.err_tad),
            opt(p.p_d),
            opt(p.p_f),
            opt(p.crlb_floor),
            num(p.err_no_attack),
            num(p.e),
            opt(p.e_d),
            num(p.falsified_fraction),
            num(p.se_no_ad),
            opt(p.se_tad),
            p.n_falsified.to_string(),
            p.n_honest.to_string(),
        ]);
    }
}

fn strategy_name(s: StrategyKind) -> &'static str {
    match s {
        StrategyKind::Random => "random",
        StrategyKind::Coordinated => "coordinated",
        StrategyKind::Stalking => "stalking",
    }
}

fn with_strategy(base: &ScenarioConfig, strategy: StrategyKind) -> ScenarioConfig {
    let mut c = base.clone();
    c.attack.strategy = strategy;
    c
}

fn attack_eval(cfg: &ExperimentConfig, trials: usize, threads: usize) -> Result<Vec<Table>> {
    let s = &cfg.scenario;
    let g = &cfg.grids;
    let target = Vec3::zeros();
    let coverage = s.world.coverage_radius;

    // bounds
    let sigma = sigma_m_at(cfg, &[coverage], 40)?[0];
    let mut srng = stream(s.seed, &[label::TABLE, 41]);
    let modes = [
        (AttackKind::Bias, g.crlb2_bias),
        (AttackKind::Manipulation, g.crlb2_manipulation),
        (AttackKind::Jamming, g.crlb2_jamming),
    ];
    let geoms: Vec<Vec<Vec3>> = (0..trials)
        .map(|r| {
            sample_ball(&target, coverage, 1.0, g.crlb2_anchors, &mut stream(s.seed, &[label::GEOMETRY, 40, r as u64]))
        })
        .collect();
    let mut curves = Table::new(
        "crlb2_curves.csv",
        &["mode", "A_t", "p_a", "crlb1_m2", "crlb2_m2", "sigma_M_m", "sigma_M_attacked_m"],
    );
    for (kind, a_t) in modes {
        let mode = AttackMode::from_parameter(kind, a_t)?;
        let (bound, attacked) = match mode {
            AttackMode::Bias { b } => (AttackBound::Bias { bias: b }, None),
            _ => {
                let sa = attacked_sigma_m(
                    &mode,
                    &s.path_loss,
                    &s.position_error,
                    coverage,
                    ATTACKED_SIGMA_SAMPLES,
                    &mut srng,
                )?;
                (AttackBound::Variance { sigma_m_attacked: sa }, Some(sa))
            }
        };
        for &p_a in &g.crlb2_p_a_grid {
            let (mut c1, mut c2) = (0.0, 0.0);
            for a in &geoms {
                c1 += crlb2(bound, 0.0, &target, a, sigma)?;
                c2 += crlb2(bound, p_a, &target, a, sigma)?;
            }
            let n = geoms.len() as f64;
            curves.push(vec![
                kind.to_string(),
                num(a_t),
                num(p_a),
                num(c1 / n),
                num(c2 / n),
                num(sigma),
                opt(attacked),
            ]);
        }
    }

    let mut eff = Table::new("effectiveness.csv", &EFFECTIVENESS_HEADER);
    for (kind, grid) in [(AttackKind::Bias, &g.eff_bias_grid), (AttackKind::Manipulation, &g.eff_manipulation_grid)] {
        for strategy in [StrategyKind::Coordinated, StrategyKind::Random] {
            let points: Vec<(f64, f64)> =
                g.eff_p_a_grid.iter().flat_map(|&p| grid.iter().map(move |&a| (p, a))).collect();
            let r = measure_effectiveness(&with_strategy(s, strategy), kind, &points, true, trials, threads)?;
            push_points(&mut eff, kind, strategy, &r.points);
        }
    }

    let mut sweep = Table::new("ed_sweep.csv", &EFFECTIVENESS_HEADER);
    let mut optimum = Table::new(
        "attack_optimum.csv",
        &["mode", "strategy", "p_a", "A_t", "E_d", "P_d", "boundary", "P_d_near_half"],
    );
    for (kind, grid) in [(AttackKind::Bias, &g.sweep_bias_grid), (AttackKind::Manipulation, &g.sweep_manipulation_grid)]
    {
        let points: Vec<(f64, f64)> = grid.iter().map(|&a| (g.sweep_p_a, a)).collect();
        let r = measure_effectiveness(s, kind, &points, true, trials, threads)?;
        push_points(&mut sweep, kind, s.attack.strategy, &r.points);
        let best = best_attack(&r.points)?;
        optimum.push(vec![
            kind.to_string(),
            strategy_name(s.attack.strategy).into(),
            num(g.sweep_p_a),
            num(best.a_t),
            num(best.e_d),
            opt(best.p_d),
            best.boundary.to_string(),
            best.p_d_near_half.to_string(),
        ]);
    }

    let mut eps = Table::new(
        "eps_sweep.csv",
        &[
            "eps_t",
            "p_a",
            "A_t",
            "mode",
            "strategy",
            "mean_err_no_attack",
            "mean_err_noAD",
            "mean_err_TAD",
            "P_d",
            "P_f",
            "se_TAD",
            "n_falsified",
            "n_honest",
        ],
    );
    for (kind, a_t) in [(AttackKind::Manipulation, g.eps_manipulation), (AttackKind::Bias, g.eps_bias)] {
        for &e in &g.eps_t_grid {
            let mut c = s.clone();
            c.tad.eps_t = e;
            let r = measure_effectiveness(&c, kind, &[(g.eps_p_a, a_t)], true, trials, threads)?;
            let p = &r.points[0];
            eps.push(vec![
                num(e),
                num(p.p_a),
                num(p.a_t),
                kind.to_string(),
                strategy_name(s.attack.strategy).into(),
                num(p.err_no_attack),
                num(p.err_no_ad),
                opt(p.err_tad),
                opt(p.p_d),
                opt(p.p_f),
                opt(p.se_tad),
                p.n_falsified.to_string(),
                p.n_honest.to_string(),
            ]);
        }
    }
    Ok(vec![curves, eff, sweep, optimum, eps])
}

fn summary_row(
    scenario: &str,
    mode: &str,
    strategy: &str,
    a_t: Option<f64>,
    defense: Defense,
    m: &McSummary,
) -> Vec<String> {
    vec![
        scenario.into(),
        mode.into(),
        strategy.into(),
        opt(a_t),
        defense.name().into(),
        num(m.mean_error),
        num(m.std_error),
        opt(m.p_d.filter(|_| defense != Defense::None)),
        opt(m.p_f.filter(|_| defense != Defense::None)),
        num(m.falsified_fraction),
        num(m.mean_in_range),
    ]
}

const SUMMARY_HEADER: [&str; 11] = [
    "scenario",
    "mode",
    "strategy",
    "A_t",
    "defense",
    "mean_error_m",
    "std_error_m",
    "P_d",
    "P_f",
    "falsified_fraction",
    "mean_in_range",
];

fn push_series(t: &mut Table, scenario: &str, defense: Defense, m: &McSummary) {
    for (i, e) in m.series.iter().enumerate() {
        t.push(vec![scenario.into(), defense.name().into(), i.to_string(), num(*e)]);
    }
}

fn defense_bench(cfg: &ExperimentConfig, trials: usize, threads: usize) -> Result<Vec<Table>> {
    let s = &cfg.scenario;
    let g = &cfg.grids;
    let mut table = Table::new("tad_table.csv", &SUMMARY_HEADER);
    let mut series = Table::new("tad_series.csv", &["scenario", "defense", "t", "mean_error_m"]);

    let prep = prepare(s)?;
    let none = run_monte_carlo(&prep, &TrialSpec::new(EstimatorChoice::Magd, None, Defense::None), trials, threads)?;
    table.push(summary_row("no attack", "", "", None, Defense::None, &none));
    push_series(&mut series, "no attack", Defense::None, &none);
    for (kind, a_t, short) in
        [(AttackKind::Manipulation, g.manipulation_parameter, "mani"), (AttackKind::Bias, g.bias_parameter, "bias")]
    {
        for (strategy, sname) in [(StrategyKind::Coordinated, "coor."), (StrategyKind::Random, "ran.")] {
            let attack = AttackSettings { kind, parameter: a_t, strategy, ..s.attack };
            let label = format!("{sname} {short}");
            for defense in [Defense::None, Defense::Tad] {
                let m = run_monte_carlo(
                    &prep,
                    &TrialSpec::new(EstimatorChoice::Magd, Some(attack), defense),
                    trials,
                    threads,
                )?;
                table.push(summary_row(&label, &kind.to_string(), strategy_name(strategy), Some(a_t), defense, &m));
                push_series(&mut series, &label, defense, &m);
            }
        }
    }

    let mut rc = s.clone();
    rc.world.n_malicious = g.rp_n_malicious;
    rc.world.sim_duration = g.rp_sim_duration;
    rc.attack = AttackSettings {
        kind: AttackKind::Bias,
        parameter: g.bias_parameter,
        strategy: StrategyKind::Stalking,
        ..s.attack
    };
    let rprep = prepare(&rc)?;
    let attack = Some(rc.attack);
    let rows = [
        ("no attack", None, Defense::None),
        ("no TAD", attack, Defense::None),
        ("TAD", attack, Defense::Tad),
        ("TAD+RP", attack, Defense::TadRp { falsified_shares: false }),
        ("TAD+RP falsified", attack, Defense::TadRp { falsified_shares: true }),
    ];
    let mut rp = Table::new("rp_table.csv", &SUMMARY_HEADER);
    let mut rp_series = Table::new("rp_series.csv", &["scenario", "defense", "t", "mean_error_m"]);
    for (name, a, defense) in rows {
        let m = run_monte_carlo(&rprep, &TrialSpec::new(EstimatorChoice::Magd, a, defense), trials, threads)?;
        let (mode, strat, a_t) = match a {
            Some(a) => (a.kind.to_string(), strategy_name(a.strategy), Some(a.parameter)),
            None => (String::new(), "", None),
        };
        rp.push(summary_row(name, &mode, strat, a_t, defense, &m));
        push_series(&mut rp_series, name, defense, &m);
    }

    let mut spec = TrialSpec::new(EstimatorChoice::Magd, attack, Defense::TadRp { falsified_shares: true });
    spec.trace = true;
    let traced = crate::scenario::run_trial(&rprep, &spec, 0)?;
    let mut trace = Table::new("reputation_trace.csv", &["t", "observer", "anchor", "r_local", "r_effective", "flag"]);
    for r in &traced.trace {
        trace.push(vec![
            r.t.to_string(),
            r.observer.to_string(),
            r.anchor.to_string(),
            num(r.r_local),
            num(r.r_effective),
            u8::from(r.flag).to_string(),
        ]);
    }
    let mut shares = Table::new("cloud_shares.csv", &["t", "observer", "anchor", "r_local", "r_effective"]);
    for r in &traced.shares {
        shares.push(vec![
            r.t.to_string(),
            r.observer.to_string(),
            r.anchor.to_string(),
            num(r.r_local),
            num(r.r_effective),
        ]);
    }
    Ok(vec![table, series, rp, rp_series, trace, shares])
}
