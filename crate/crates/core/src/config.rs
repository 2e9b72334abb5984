//! Run configuration: a flat, dotted-key TOML document.
//!
//! Every section rejects unknown keys. [`RunConfig::to_flat_toml`] renders
//! the effective configuration as `section.key = value` lines, which parse
//! back to an identical [`RunConfig`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::lifecycle::{ResourceVector, TransitionTable};
use crate::mobility::MobilityConfig;
use crate::placement::PlacementParams;
use crate::radio::{Environment, RadioConfig};
use crate::topology::{Layout, TopologyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Static,
    Reactive,
    Swaves,
    Oracle,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Static,
        Strategy::Reactive,
        Strategy::Swaves,
        Strategy::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Static => "static",
            Strategy::Reactive => "reactive",
            Strategy::Swaves => "swaves",
            Strategy::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(Strategy::Static),
            "reactive" => Ok(Strategy::Reactive),
            "swaves" => Ok(Strategy::Swaves),
            "oracle" => Ok(Strategy::Oracle),
            other => Err(format!(
                "unknown strategy `{other}` (expected static, reactive, swaves or oracle)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySection {
    pub n_m2: usize,
    pub n_m1: usize,
    pub n_bs: usize,
    pub area_m: f64,
    pub layout: Layout,
    pub jitter_m: f64,
    pub packet_size_bits: f64,
}

impl Default for TopologySection {
    fn default() -> Self {
        Self {
            n_m2: 4,
            n_m1: 16,
            n_bs: 64,
            area_m: 4000.0,
            layout: Layout::Grid,
            jitter_m: 0.0,
            packet_size_bits: 12_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub rate_bps: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self { rate_bps: 1e9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSection {
    pub tx_power_dbm: f64,
    pub freq_mhz: f64,
    pub bs_height_m: f64,
    pub ue_height_m: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub environment: Environment,
}

impl Default for RadioSection {
    fn default() -> Self {
        Self {
            tx_power_dbm: 40.0,
            freq_mhz: 1800.0,
            bs_height_m: 30.0,
            ue_height_m: 1.5,
            bandwidth_hz: 20e6,
            noise_figure_db: 9.0,
            environment: Environment::Urban,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub lambda_u_bps: f64,
}

impl Default for TrafficSection {
    fn default() -> Self {
        Self {
            lambda_u_bps: 0.2e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelaySection {
    pub t_p_s: f64,
}

impl Default for DelaySection {
    fn default() -> Self {
        Self { t_p_s: 0.2e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilitySection {
    pub alpha: f64,
    pub mean_speed_mps: f64,
    pub sigma_v: f64,
    pub sigma_theta: f64,
    pub ttr_s: f64,
    pub hysteresis_db: f64,
}

impl Default for MobilitySection {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            mean_speed_mps: 1.4,
            sigma_v: 0.5,
            sigma_theta: 0.3,
            ttr_s: 0.5,
            hysteresis_db: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub dt_s: f64,
    pub duration_s: f64,
    pub n_users: usize,
    pub seed: u64,
    /// Drop packets emitted before `warmup_s` from the metrics.
    pub exclude_warmup: bool,
    pub warmup_s: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt_s: 0.1,
            duration_s: 600.0,
            n_users: 50,
            seed: 1,
            exclude_warmup: false,
            warmup_s: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifecycleSection {
    pub t_download_s: f64,
    pub t_build_s: f64,
    pub t_deploy_s: f64,
    pub t_start_s: f64,
    pub t_stop_s: f64,
    pub t_pause_s: f64,
    pub t_resume_s: f64,
}

impl Default for LifecycleSection {
    fn default() -> Self {
        let t = TransitionTable::default();
        Self {
            t_download_s: t.download_s,
            t_build_s: t.build_s,
            t_deploy_s: t.deploy_s,
            t_start_s: t.start_s,
            t_stop_s: t.stop_s,
            t_pause_s: t.pause_s,
            t_resume_s: t.resume_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VnfSection {
    pub count: usize,
    pub cpu_cores: f64,
    pub mem_gb: f64,
    pub disk_gb: f64,
    /// User context size; 500 KB.
    pub v_mem_bytes: f64,
    pub stateful: bool,
    /// End-to-end delay limit shared by every VNF.
    pub d_max_ms: f64,
}

impl Default for VnfSection {
    fn default() -> Self {
        Self {
            count: 10,
            cpu_cores: 2.0,
            mem_gb: 5.0,
            disk_gb: 1.0,
            v_mem_bytes: 500_000.0,
            stateful: true,
            d_max_ms: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcSection {
    pub cpu_cores: f64,
    pub mem_gb: f64,
    pub disk_gb: f64,
}

impl Default for EcSection {
    fn default() -> Self {
        Self {
            cpu_cores: 8.0,
            mem_gb: 20.0,
            disk_gb: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub horizon_s: f64,
    pub n_paths: usize,
    pub n_fading: usize,
    pub period_s: f64,
    /// Cell size of the cached connection-likelihood grid.
    pub grid_m: f64,
    /// Lookahead of the perfect-knowledge forecast used by the oracle.
    pub oracle_horizon_s: f64,
}

impl Default for ForecastSection {
    fn default() -> Self {
        Self {
            horizon_s: 5.0,
            n_paths: 64,
            n_fading: 128,
            period_s: 1.0,
            grid_m: 20.0,
            // horizon + a full Descriptor -> Running chain
            oracle_horizon_s: 24.83,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementSection {
    pub strategy: Strategy,
    pub p_drop: f64,
    pub epsilon: f64,
    pub use_paused: bool,
    /// Nearest neighbouring cells the reactive heuristic stages VNFs at.
    pub reactive_neighbors: usize,
    /// Demand weight given to those neighbouring cells.
    pub reactive_neighbor_weight: f64,
}

impl Default for PlacementSection {
    fn default() -> Self {
        Self {
            strategy: Strategy::Swaves,
            p_drop: 0.05,
            epsilon: 0.01,
            use_paused: false,
            reactive_neighbors: 4,
            reactive_neighbor_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub topology: TopologySection,
    pub link: LinkSection,
    pub radio: RadioSection,
    pub traffic: TrafficSection,
    pub delay: DelaySection,
    pub mobility: MobilitySection,
    pub sim: SimSection,
    pub lifecycle: LifecycleSection,
    pub vnf: VnfSection,
    pub ec: EcSection,
    pub forecast: ForecastSection,
    pub placement: PlacementSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    format!("line {line}, column {col}")
                }
                None => "config".to_string(),
            };
            ConfigError::Parse {
                location,
                message: e.message().trim().to_string(),
            }
        })?;
        cfg.validate().map_err(|e| locate_key(e, text))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse { location, message } => ConfigError::Parse {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.topology;
        positive_count("topology.n_m2", t.n_m2)?;
        positive_count("topology.n_m1", t.n_m1)?;
        positive_count("topology.n_bs", t.n_bs)?;
        positive("topology.area_m", t.area_m)?;
        non_negative("topology.jitter_m", t.jitter_m)?;
        positive("topology.packet_size_bits", t.packet_size_bits)?;
        if t.n_bs % t.n_m1 != 0 {
            return Err(ConfigError::invalid(
                "topology.n_bs",
                format!("{} base stations do not split evenly into {} M1 clusters", t.n_bs, t.n_m1),
            ));
        }
        if t.n_m1 < t.n_m2 {
            return Err(ConfigError::invalid(
                "topology.n_m1",
                format!("need at least as many M1 nodes as M2 nodes ({})", t.n_m2),
            ));
        }
        positive("link.rate_bps", self.link.rate_bps)?;

        let r = &self.radio;
        finite("radio.tx_power_dbm", r.tx_power_dbm)?;
        if !(1500.0..=2000.0).contains(&r.freq_mhz) {
            return Err(ConfigError::invalid(
                "radio.freq_mhz",
                "COST-231 Hata is valid for 1500-2000 MHz",
            ));
        }
        positive("radio.bs_height_m", r.bs_height_m)?;
        positive("radio.ue_height_m", r.ue_height_m)?;
        positive("radio.bandwidth_hz", r.bandwidth_hz)?;
        non_negative("radio.noise_figure_db", r.noise_figure_db)?;

        positive("traffic.lambda_u_bps", self.traffic.lambda_u_bps)?;
        positive("delay.t_p_s", self.delay.t_p_s)?;

        let m = &self.mobility;
        if !(0.0..=1.0).contains(&m.alpha) {
            return Err(ConfigError::invalid("mobility.alpha", "must lie in [0, 1]"));
        }
        non_negative("mobility.mean_speed_mps", m.mean_speed_mps)?;
        non_negative("mobility.sigma_v", m.sigma_v)?;
        non_negative("mobility.sigma_theta", m.sigma_theta)?;
        non_negative("mobility.ttr_s", m.ttr_s)?;
        non_negative("mobility.hysteresis_db", m.hysteresis_db)?;

        let s = &self.sim;
        positive("sim.dt_s", s.dt_s)?;
        positive("sim.duration_s", s.duration_s)?;
        if s.duration_s < s.dt_s {
            return Err(ConfigError::invalid("sim.duration_s", "shorter than one step"));
        }
        positive_count("sim.n_users", s.n_users)?;
        non_negative("sim.warmup_s", s.warmup_s)?;

        let l = &self.lifecycle;
        non_negative("lifecycle.t_download_s", l.t_download_s)?;
        non_negative("lifecycle.t_build_s", l.t_build_s)?;
        non_negative("lifecycle.t_deploy_s", l.t_deploy_s)?;
        non_negative("lifecycle.t_start_s", l.t_start_s)?;
        non_negative("lifecycle.t_stop_s", l.t_stop_s)?;
        non_negative("lifecycle.t_pause_s", l.t_pause_s)?;
        non_negative("lifecycle.t_resume_s", l.t_resume_s)?;

        let v = &self.vnf;
        positive_count("vnf.count", v.count)?;
        non_negative("vnf.cpu_cores", v.cpu_cores)?;
        non_negative("vnf.mem_gb", v.mem_gb)?;
        non_negative("vnf.disk_gb", v.disk_gb)?;
        non_negative("vnf.v_mem_bytes", v.v_mem_bytes)?;
        positive("vnf.d_max_ms", v.d_max_ms)?;
        non_negative("ec.cpu_cores", self.ec.cpu_cores)?;
        non_negative("ec.mem_gb", self.ec.mem_gb)?;
        non_negative("ec.disk_gb", self.ec.disk_gb)?;

        let f = &self.forecast;
        positive("forecast.horizon_s", f.horizon_s)?;
        positive_count("forecast.n_paths", f.n_paths)?;
        positive_count("forecast.n_fading", f.n_fading)?;
        positive("forecast.period_s", f.period_s)?;
        positive("forecast.grid_m", f.grid_m)?;
        positive("forecast.oracle_horizon_s", f.oracle_horizon_s)?;

        let p = &self.placement;
        if !(0.0..=1.0).contains(&p.p_drop) {
            return Err(ConfigError::invalid("placement.p_drop", "must lie in [0, 1]"));
        }
        non_negative("placement.epsilon", p.epsilon)?;
        if !(0.0..=1.0).contains(&p.reactive_neighbor_weight) {
            return Err(ConfigError::invalid(
                "placement.reactive_neighbor_weight",
                "must lie in [0, 1]",
            ));
        }
        if p.reactive_neighbors >= t.n_bs {
            return Err(ConfigError::invalid(
                "placement.reactive_neighbors",
                format!("must be below the number of base stations ({})", t.n_bs),
            ));
        }
        Ok(())
    }

    /// Renders the configuration as flat `section.key = value` lines.
    pub fn to_flat_toml(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serializes to a TOML table");
        let mut out = String::new();
        if let toml::Value::Table(sections) = value {
            for (section, body) in sections {
                if let toml::Value::Table(keys) = body {
                    for (key, v) in keys {
                        out.push_str(&format!("{section}.{key} = {v}\n"));
                    }
                }
            }
        }
        out
    }

    pub fn topology_config(&self) -> TopologyConfig {
        TopologyConfig {
            n_m2: self.topology.n_m2,
            n_m1: self.topology.n_m1,
            n_bs: self.topology.n_bs,
            area_m: self.topology.area_m,
            layout: self.topology.layout,
            jitter_m: self.topology.jitter_m,
            packet_size_bits: self.topology.packet_size_bits,
            link_rate_bps: self.link.rate_bps,
        }
    }

    pub fn radio_config(&self) -> RadioConfig {
        let r = &self.radio;
        RadioConfig {
            tx_power_dbm: r.tx_power_dbm,
            carrier_freq_mhz: r.freq_mhz,
            bs_height_m: r.bs_height_m,
            user_height_m: r.ue_height_m,
            bandwidth_hz: r.bandwidth_hz,
            noise_figure_db: r.noise_figure_db,
            environment: r.environment,
        }
    }

    pub fn transition_table(&self) -> TransitionTable {
        let l = &self.lifecycle;
        TransitionTable {
            download_s: l.t_download_s,
            build_s: l.t_build_s,
            deploy_s: l.t_deploy_s,
            start_s: l.t_start_s,
            stop_s: l.t_stop_s,
            pause_s: l.t_pause_s,
            resume_s: l.t_resume_s,
        }
    }

    pub fn vnf_resources(&self) -> ResourceVector {
        ResourceVector::new(self.vnf.cpu_cores, self.vnf.mem_gb, self.vnf.disk_gb)
    }

    pub fn ec_capacity(&self) -> ResourceVector {
        ResourceVector::new(self.ec.cpu_cores, self.ec.mem_gb, self.ec.disk_gb)
    }

    pub fn lambda_u_pps(&self) -> f64 {
        self.traffic.lambda_u_bps / self.topology.packet_size_bits
    }

    pub fn v_mem_bits(&self) -> f64 {
        self.vnf.v_mem_bytes * 8.0
    }

    pub fn d_max_s(&self) -> f64 {
        self.vnf.d_max_ms * 1e-3
    }

    pub fn n_steps(&self) -> usize {
        (self.sim.duration_s / self.sim.dt_s + 1e-9).floor() as usize
    }

    pub fn mobility_config(&self) -> MobilityConfig {
        let m = &self.mobility;
        MobilityConfig {
            alpha: m.alpha,
            mean_speed_mps: m.mean_speed_mps,
            sigma_v: m.sigma_v,
            sigma_theta: m.sigma_theta,
            ttr_s: m.ttr_s,
            hysteresis_db: m.hysteresis_db,
            dt_s: self.sim.dt_s,
            area_m: self.topology.area_m,
        }
    }

    pub fn placement_params(&self) -> PlacementParams {
        PlacementParams {
            p_drop: self.placement.p_drop,
            epsilon: self.placement.epsilon,
            use_paused: self.placement.use_paused,
            r_v: self.vnf_resources(),
            capacity: self.ec_capacity(),
        }
    }

    /// Steps spanned by `seconds`, at least one.
    pub fn steps_for(&self, seconds: f64) -> usize {
        ((seconds / self.sim.dt_s - 1e-9).ceil() as usize).max(1)
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// Best-effort lookup of the line that sets `section.key`, in either dotted
/// or `[section]` form.
fn key_line(text: &str, dotted: &str) -> Option<usize> {
    let (section, leaf) = dotted.split_once('.')?;
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        let lhs = lhs.trim();
        let full = if current.is_empty() {
            lhs.to_string()
        } else {
            format!("{current}.{lhs}")
        };
        if full == dotted || (current == section && lhs == leaf) {
            return Some(i + 1);
        }
    }
    None
}

fn locate_key(err: ConfigError, text: &str) -> ConfigError {
    match err {
        ConfigError::Invalid { key, reason, .. } => {
            let line = key_line(text, &key).map_or(String::new(), |n| format!(" (line {n})"));
            ConfigError::Invalid { key, reason, line }
        }
        other => other,
    }
}

fn finite(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, "must be finite"))
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, format!("must be positive (got {v})")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, format!("must be non-negative (got {v})")))
    }
}

fn positive_count(key: &str, v: usize) -> Result<(), ConfigError> {
    if v > 0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(key, "must be at least 1"))
    }
}
