//! Flat `key = value` scenario files.
//!
//! Blank lines and text after `#` are ignored. Keys are unique. Consumers
//! take the keys they understand; [`ConfigMap::finish`] rejects leftovers so
//! that typos never pass silently.

use std::collections::BTreeMap;
use std::str::FromStr;

use super::{InitialGuess, Layout, ScenarioConfig};
use crate::defense::{FlagDirection, ForgetRule};
use crate::errormodel::{PathLossParams, PositionErrorProfile};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    entries: BTreeMap<String, (usize, String)>,
}

pub fn parse_config(text: &str) -> Result<ConfigMap> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected `key = value`", i + 1)));
        };
        let key = k.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", i + 1)));
        }
    }
    Ok(ConfigMap { entries })
}

impl ConfigMap {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Remove `key` and parse its value.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: bad value {v:?} for {key}: {e}"))),
        }
    }

    /// Remove `key` and parse a comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>().map_err(|e| Error::Config(format!("line {line}: bad item {s:?} in {key}: {e}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn pair(&mut self, key: &str, slot: &mut (f64, f64)) -> Result<()> {
        if let Some(v) = self.take_list::<f64>(key)? {
            match v[..] {
                [a, b] => *slot = (a, b),
                _ => return Err(Error::Config(format!("{key} needs two values"))),
            }
        }
        Ok(())
    }

    /// Fail if any key was left unconsumed.
    pub fn finish(self) -> Result<()> {
        if let Some((k, (line, _))) = self.entries.into_iter().next() {
            return Err(Error::Config(format!("line {line}: unknown key {k:?}")));
        }
        Ok(())
    }
}

fn parse_forget(s: &str) -> Result<ForgetRule> {
    match s.trim().to_ascii_lowercase().as_str() {
        "decaying" => Ok(ForgetRule::Decaying),
        "restoring" => Ok(ForgetRule::Restoring),
        other => Err(Error::Config(format!("unknown forget rule {other:?}"))),
    }
}

fn parse_direction(s: &str) -> Result<FlagDirection> {
    match s.trim().to_ascii_lowercase().as_str() {
        "above" => Ok(FlagDirection::PenalizeAbove),
        "below" => Ok(FlagDirection::PenalizeBelow),
        other => Err(Error::Config(format!("unknown flag direction {other:?}"))),
    }
}

fn parse_guess(s: &str) -> Result<InitialGuess> {
    let s = s.trim().to_ascii_lowercase();
    if s == "centroid" {
        return Ok(InitialGuess::Centroid);
    }
    if let Some(d) = s.strip_prefix("offset:") {
        return d
            .trim()
            .parse()
            .map(InitialGuess::Offset)
            .map_err(|e| Error::Config(format!("bad initial offset {d:?}: {e}")));
    }
    Err(Error::Config(format!("initial_guess must be `centroid` or `offset:<m>`, got {s:?}")))
}

impl ScenarioConfig {
    /// Build from a preset (key `preset`, default `setup2`) and overrides.
    pub fn from_map(map: &mut ConfigMap) -> Result<Self> {
        let preset: String = map.take("preset")?.unwrap_or_else(|| "setup2".into());
        let mut c = ScenarioConfig::preset(&preset)?;
        map.set("seed", &mut c.seed)?;

        let w = &mut c.world;
        if let Some(layout) = map.take::<String>("layout")? {
            w.layout = match layout.to_ascii_lowercase().as_str() {
                "map" => Layout::Map,
                "formation" => Layout::Formation { radius: w.coverage_radius },
                other => return Err(Error::Config(format!("unknown layout {other:?}"))),
            };
        }
        if let Some(r) = map.take::<f64>("formation_radius")? {
            match &mut w.layout {
                Layout::Formation { radius } => *radius = r,
                Layout::Map => return Err(Error::Config("formation_radius needs layout = formation".into())),
            }
        }
        if let Some(v) = map.take_list::<f64>("map_size")? {
            match v[..] {
                [x, y, z] => w.map_size = Vec3::new(x, y, z),
                _ => return Err(Error::Config("map_size needs three values".into())),
            }
        }
        map.set("n_anchors", &mut w.n_anchors)?;
        map.set("n_malicious", &mut w.n_malicious)?;
        map.pair("speed_range", &mut w.speed_range)?;
        map.set("speed_period", &mut w.speed_period)?;
        map.set("sim_duration", &mut w.sim_duration)?;
        map.set("dt", &mut w.dt)?;
        map.set("coverage_radius", &mut w.coverage_radius)?;
        map.set("target_margin", &mut w.target_margin)?;
        map.set("anchor_margin", &mut w.anchor_margin)?;

        let mut pl = c.path_loss;
        map.set("path_loss_exponent", &mut pl.exponent)?;
        map.set("ref_distance", &mut pl.ref_distance)?;
        map.set("rssi_at_ref", &mut pl.rssi_at_ref)?;
        map.pair("sigma_r_range", &mut pl.sigma_r_range)?;
        c.path_loss = PathLossParams::new(pl.exponent, pl.ref_distance, pl.rssi_at_ref, pl.sigma_r_range)
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut sp = c.position_error.sigma_p_range;
        map.pair("sigma_p_range", &mut sp)?;
        c.position_error = PositionErrorProfile::new(sp).map_err(|e| Error::Config(e.to_string()))?;

        let e = &mut c.estimator;
        map.set("magd_eps_max", &mut e.magd.eps_max_t0)?;
        map.set("magd_eps_min", &mut e.magd.eps_min_t0)?;
        map.set("magd_beta1", &mut e.magd.beta1)?;
        map.set("magd_beta2", &mut e.magd.beta2)?;
        map.set("magd_momentum", &mut e.magd.momentum)?;
        map.set("magd_theta", &mut e.magd.theta)?;
        map.set("magd_k_max", &mut e.magd.k_max)?;
        map.set("magd_phi", &mut e.magd.phi)?;
        map.set("magd_step3_ratio", &mut e.magd.step3_ratio)?;
        map.set("magd_step4_ratio", &mut e.magd.step4_ratio)?;
        map.set("magd_divide_step_by_n", &mut e.magd.divide_step_by_n)?;
        map.set("gd_k_max", &mut e.gd.k_max)?;
        map.set("gd_alpha0", &mut e.gd.alpha0)?;
        map.set("gd_beta", &mut e.gd.beta)?;
        map.set("gd_theta", &mut e.gd.theta)?;
        map.set("ln1_k_max", &mut e.ln1.k_max)?;
        map.set("ln1_rho", &mut e.ln1.rho)?;
        map.set("ln1_theta", &mut e.ln1.theta)?;

        let t = &mut c.tad;
        map.set("tad_lambda_r", &mut t.lambda_r)?;
        map.set("tad_lambda_p", &mut t.lambda_p)?;
        map.set("tad_gamma", &mut t.gamma)?;
        map.set("tad_eps_t", &mut t.eps_t)?;
        map.set("tad_sigma_p_min", &mut t.sigma_p_min)?;
        if let Some(s) = map.take::<String>("tad_forget")? {
            t.forget = parse_forget(&s)?;
        }
        if let Some(s) = map.take::<String>("tad_direction")? {
            t.direction = parse_direction(&s)?;
        }

        map.set("tad_timing", &mut c.tad_timing)?;

        let a = &mut c.attack;
        map.set("attack_mode", &mut a.kind)?;
        map.set("attack_parameter", &mut a.parameter)?;
        map.set("attack_strategy", &mut a.strategy)?;
        map.set("frame_period", &mut a.frame_period)?;
        map.set("attack_rate", &mut a.attack_rate)?;

        if let Some(s) = map.take::<String>("initial_guess")? {
            c.initial_guess = parse_guess(&s)?;
        }
        map.set("table_samples", &mut c.table_samples)?;
        map.set("rp_uploaders", &mut c.rp.uploaders)?;
        map.set("rp_malicious_uploaders", &mut c.rp.malicious_uploaders)?;
        map.set("follow_radius", &mut c.rp.follow_radius)?;

        c.validate()?;
        Ok(c)
    }
}
