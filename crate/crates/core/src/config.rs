//! Scenario configuration: a TOML schema with defaults, range checks that
//! name the offending key, `BLACKCHAIN_<KEY>` environment overrides, and
//! parameter grids for sweeps.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackProfile, Strategy};
use crate::scms::IssuancePolicy;
use crate::sim::{Position, RadioModel, Tick};
use crate::vehicle::{DetectionParams, MobilityParams};

/// Prefix of environment variables that override top-level config keys,
/// e.g. `BLACKCHAIN_DIFFICULTY_BITS=4`.
pub const ENV_PREFIX: &str = "BLACKCHAIN_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub ticks: Tick,
    pub world_w: f64,
    pub world_h: f64,
    pub vehicles: u32,
    pub regions: u8,
    /// RSU coordinates, meters.
    pub rsu_positions: Vec<[f64; 2]>,
    /// Side of the grid cells that group RSUs, meters.
    pub rsu_cell_size_m: f64,
    pub radio_range_m: f64,
    /// Accept ranges outside 300..=1000 m.
    pub radio_range_override: bool,
    pub v_max: f64,
    pub accel_step: f64,
    pub turn_step: f64,
    pub detection_tol: f64,
    pub jump_slack_m: f64,
    pub pseudonym_window: Tick,
    pub pseudonym_overlap: Tick,
    pub cluster_epoch: Tick,
    pub recluster_interval: Tick,
    pub bft_round_ticks: Tick,
    pub difficulty_bits: u32,
    pub mine_interval: Tick,
    /// Mine empty blocks when there is nothing to include.
    pub heartbeat_mining: bool,
    /// RSU to MA and MA to MA delivery delay, ticks.
    pub ma_link_delay: Tick,
    /// Shorthand: this many `false_position` attackers on vehicles 0, 1, ...
    pub attackers: u32,
    pub attack_offset_m: f64,
    pub attack_start_tick: Tick,
    pub attack: Vec<AttackProfile>,
    pub event_log: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let d = DetectionParams::default();
        let m = MobilityParams::default();
        let p = IssuancePolicy::default();
        ScenarioConfig {
            seed: 1,
            ticks: 1200,
            world_w: m.world_w,
            world_h: m.world_h,
            vehicles: 20,
            regions: 2,
            rsu_positions: vec![[250.0, 250.0], [750.0, 250.0], [250.0, 750.0], [750.0, 750.0]],
            rsu_cell_size_m: 1000.0,
            radio_range_m: RadioModel::default().range_m,
            radio_range_override: false,
            v_max: d.v_max,
            accel_step: m.accel_step,
            turn_step: m.turn_step,
            detection_tol: d.tol,
            jump_slack_m: d.jump_slack_m,
            pseudonym_window: p.window_ticks,
            pseudonym_overlap: p.overlap_ticks,
            cluster_epoch: 10,
            recluster_interval: 50,
            bft_round_ticks: 10,
            difficulty_bits: 8,
            mine_interval: 10,
            heartbeat_mining: false,
            ma_link_delay: 1,
            attackers: 0,
            attack_offset_m: 500.0,
            attack_start_tick: 100,
            attack: Vec::new(),
            event_log: true,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("config key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be a positive number, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be a non-negative number, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| parse_error(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every value against its documented range.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ticks == 0 {
            return Err(invalid("ticks", "must be at least 1"));
        }
        positive("world_w", self.world_w)?;
        positive("world_h", self.world_h)?;
        if self.vehicles == 0 {
            return Err(invalid("vehicles", "must be at least 1"));
        }
        if self.regions == 0 {
            return Err(invalid("regions", "must be at least 1"));
        }
        if self.rsu_positions.is_empty() {
            return Err(invalid("rsu_positions", "at least one RSU is required"));
        }
        for (i, [x, y]) in self.rsu_positions.iter().enumerate() {
            let inside = (0.0..=self.world_w).contains(x) && (0.0..=self.world_h).contains(y);
            if !inside {
                return Err(invalid("rsu_positions", format!("RSU {i} at ({x}, {y}) lies outside the world")));
            }
        }
        positive("rsu_cell_size_m", self.rsu_cell_size_m)?;
        self.radio().map_err(|e| invalid("radio_range_m", e.to_string()))?;
        positive("v_max", self.v_max)?;
        non_negative("accel_step", self.accel_step)?;
        non_negative("turn_step", self.turn_step)?;
        non_negative("detection_tol", self.detection_tol)?;
        non_negative("jump_slack_m", self.jump_slack_m)?;
        self.issuance()
            .validate()
            .map_err(|e| invalid("pseudonym_overlap", e.to_string()))?;
        if self.cluster_epoch < 3 {
            return Err(invalid("cluster_epoch", "must be at least 3 ticks (propose, vote, commit)"));
        }
        if self.recluster_interval == 0 {
            return Err(invalid("recluster_interval", "must be at least 1"));
        }
        if self.bft_round_ticks < 4 {
            return Err(invalid("bft_round_ticks", "must be at least 4 ticks (propose, echo, confirm, decide)"));
        }
        if self.difficulty_bits > 32 {
            return Err(invalid("difficulty_bits", "must be at most 32"));
        }
        if self.mine_interval == 0 {
            return Err(invalid("mine_interval", "must be at least 1"));
        }
        if self.ma_link_delay == 0 || self.ma_link_delay >= self.mine_interval {
            return Err(invalid("ma_link_delay", "must be at least 1 and below mine_interval"));
        }
        if self.attackers > self.vehicles {
            return Err(invalid("attackers", format!("{} attackers but only {} vehicles", self.attackers, self.vehicles)));
        }
        positive("attack_offset_m", self.attack_offset_m)?;
        for (i, a) in self.attack.iter().enumerate() {
            let key = format!("attack[{i}]");
            let limit = if a.strategy.targets_rsu() {
                self.rsu_positions.len() as u32
            } else {
                self.vehicles
            };
            if a.node >= limit {
                return Err(invalid(&key, format!("node {} out of range (< {limit})", a.node)));
            }
            if a.targets.iter().any(|&t| t >= self.vehicles || t == a.node && !a.strategy.targets_rsu()) {
                return Err(invalid(&key, "targets must be other existing vehicles"));
            }
            if a.strategy == Strategy::FalsePosition {
                positive(&format!("{key}.offset_m"), a.offset_m)?;
            }
            if a.strategy == Strategy::BadMouth && a.targets.is_empty() {
                return Err(invalid(&key, "bad_mouth needs at least one target"));
            }
            if a.end_tick.is_some_and(|e| e < a.start_tick) {
                return Err(invalid(&key, "end_tick precedes start_tick"));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in self.attack_profiles() {
            if !seen.insert((a.strategy.targets_rsu(), a.node)) {
                return Err(invalid("attack", format!("node {} has more than one attack profile", a.node)));
            }
        }
        Ok(())
    }

    /// Explicit profiles plus the `attackers` shorthand.
    pub fn attack_profiles(&self) -> Vec<AttackProfile> {
        let mut out: Vec<AttackProfile> = (0..self.attackers)
            .map(|v| AttackProfile::false_position(v, self.attack_offset_m, self.attack_start_tick))
            .collect();
        out.extend(self.attack.iter().cloned());
        out
    }

    pub fn radio(&self) -> Result<RadioModel, crate::sim::RadioRangeError> {
        if self.radio_range_override {
            RadioModel::overridden(self.radio_range_m)
        } else {
            RadioModel::new(self.radio_range_m)
        }
    }

    pub fn detection(&self) -> DetectionParams {
        DetectionParams {
            v_max: self.v_max,
            tol: self.detection_tol,
            jump_slack_m: self.jump_slack_m,
        }
    }

    pub fn mobility(&self) -> MobilityParams {
        MobilityParams {
            v_max: self.v_max,
            accel_step: self.accel_step,
            turn_step: self.turn_step,
            world_w: self.world_w,
            world_h: self.world_h,
        }
    }

    pub fn issuance(&self) -> IssuancePolicy {
        IssuancePolicy {
            window_ticks: self.pseudonym_window,
            overlap_ticks: self.pseudonym_overlap,
        }
    }

    pub fn rsu_sites(&self) -> Vec<Position> {
        self.rsu_positions.iter().map(|[x, y]| Position::new(*x, *y)).collect()
    }

    /// Sets one top-level key from its textual value. The value is read as
    /// a TOML literal (`4`, `true`, `[1, 2]`), falling back to a string.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let parsed = parse_literal(value);
        self.set_value(key, parsed)
    }

    pub fn set_value(&mut self, key: &str, value: toml::Value) -> Result<(), ConfigError> {
        let mut table = match toml::Value::try_from(&*self).expect("config serializes") {
            toml::Value::Table(t) => t,
            _ => unreachable!("struct serializes to a table"),
        };
        if !is_known_key(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        table.insert(key.to_string(), value);
        let updated: ScenarioConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| invalid(key, e.message().to_string()))?;
        *self = updated;
        Ok(())
    }

    /// Applies every `BLACKCHAIN_<KEY>` variable from `vars`.
    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_ascii_lowercase(), v)))
            .collect();
        overrides.sort();
        for (k, v) in overrides {
            self.set_key(&k, &v)?;
        }
        self.validate()
    }
}

fn parse_error(e: &toml::de::Error) -> ConfigError {
    let msg = e.message();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(key) = rest.split('`').next() {
            return ConfigError::UnknownKey(key.to_string());
        }
    }
    ConfigError::Parse(e.to_string())
}

fn parse_literal(value: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    toml::from_str::<Wrap>(&format!("v = {value}"))
        .map(|w| w.v)
        .unwrap_or_else(|_| toml::Value::String(value.to_string()))
}

/// Top-level keys of the schema, in declaration order.
pub fn known_keys() -> Vec<String> {
    match toml::Value::try_from(ScenarioConfig {
        out_dir: Some(PathBuf::new()),
        ..ScenarioConfig::default()
    })
    .expect("config serializes")
    {
        toml::Value::Table(t) => t.keys().cloned().collect(),
        _ => unreachable!(),
    }
}

fn is_known_key(key: &str) -> bool {
    known_keys().iter().any(|k| k == key)
}

/// A sweep grid: each key maps to the values it takes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub axes: BTreeMap<String, Vec<toml::Value>>,
}

impl Grid {
    /// Parses `key = [v1, v2, ...]` lines; a scalar is a one-value axis.
    pub fn from_toml(text: &str) -> Result<Grid, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut axes = BTreeMap::new();
        for (k, v) in table {
            if !is_known_key(&k) {
                return Err(ConfigError::UnknownKey(k));
            }
            let values = match v {
                toml::Value::Array(a) if k != "rsu_positions" && k != "attack" => a,
                other => vec![other],
            };
            if values.is_empty() {
                return Err(invalid(&k, "grid axis has no values"));
            }
            axes.insert(k, values);
        }
        Ok(Grid { axes })
    }

    /// Every combination, in lexicographic order of the sorted keys. An
    /// empty grid yields the base configuration alone.
    pub fn expand(&self, base: &ScenarioConfig) -> Result<Vec<(String, ScenarioConfig)>, ConfigError> {
        let keys: Vec<&String> = self.axes.keys().collect();
        let mut rows = vec![(Vec::<String>::new(), base.clone())];
        for key in keys {
            let mut next = Vec::with_capacity(rows.len() * self.axes[key].len());
            for (labels, cfg) in &rows {
                for v in &self.axes[key] {
                    let mut c = cfg.clone();
                    c.set_value(key, v.clone())?;
                    let mut l = labels.clone();
                    l.push(format!("{key}={v}"));
                    next.push((l, c));
                }
            }
            rows = next;
        }
        rows.into_iter()
            .map(|(labels, cfg)| {
                cfg.validate()?;
                Ok((labels.join(";"), cfg))
            })
            .collect()
    }
}
