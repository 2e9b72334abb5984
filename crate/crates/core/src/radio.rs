//! COST-231 Hata path loss, Rayleigh fading, and Shannon rate.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::topology::Point;

/// Distances below this are clamped before evaluating the path-loss model.
pub const MIN_DISTANCE_M: f64 = 10.0;

const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Urban,
    Suburban,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    pub carrier_freq_mhz: f64,
    pub bs_height_m: f64,
    pub user_height_m: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub environment: Environment,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: 40.0,
            carrier_freq_mhz: 1800.0,
            bs_height_m: 30.0,
            user_height_m: 1.5,
            bandwidth_hz: 20e6,
            noise_figure_db: 9.0,
            environment: Environment::Urban,
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl RadioConfig {
    /// Thermal noise over the channel bandwidth plus the receiver noise figure.
    pub fn noise_dbm(&self) -> f64 {
        THERMAL_NOISE_DBM_PER_HZ + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    pub fn noise_watts(&self) -> f64 {
        dbm_to_watts(self.noise_dbm())
    }

    pub fn tx_power_watts(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// Small/medium-city mobile antenna height correction a(h_U).
    fn mobile_antenna_correction(&self) -> f64 {
        let lf = self.carrier_freq_mhz.log10();
        (1.1 * lf - 0.7) * self.user_height_m - (1.56 * lf - 0.8)
    }

    fn area_correction_db(&self) -> f64 {
        match self.environment {
            Environment::Urban => 3.0,
            Environment::Suburban => 0.0,
        }
    }

    /// Distance-independent part of the loss and the per-decade slope.
    fn loss_terms(&self) -> (f64, f64) {
        let lf = self.carrier_freq_mhz.log10();
        let lh = self.bs_height_m.log10();
        let intercept = 46.3 + 33.9 * lf - 13.82 * lh - self.mobile_antenna_correction()
            + self.area_correction_db();
        let slope = 44.9 - 6.55 * lh;
        (intercept, slope)
    }
}

/// COST-231 Hata path loss in dB.
pub fn path_loss_db(cfg: &RadioConfig, distance_m: f64) -> f64 {
    let (intercept, slope) = cfg.loss_terms();
    let d_km = distance_m.max(MIN_DISTANCE_M) / 1000.0;
    intercept + slope * d_km.log10()
}

/// Received power `P_b |h|^2 / L_p`, in watts.
pub fn received_power(cfg: &RadioConfig, distance_m: f64, fading_power: f64) -> f64 {
    cfg.tx_power_watts() * fading_power / db_to_linear(path_loss_db(cfg, distance_m))
}

/// Received power in dBm; `-inf` for a zero fading draw.
pub fn rsrp_dbm(cfg: &RadioConfig, distance_m: f64, fading_power: f64) -> f64 {
    cfg.tx_power_dbm - path_loss_db(cfg, distance_m) + 10.0 * fading_power.log10()
}

/// Squared magnitude of a unit-power Rayleigh channel, i.e. `Exp(1)`.
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Shannon capacity `B log2(1 + P/N)` in bits per second.
pub fn shannon_rate(cfg: &RadioConfig, p_rx_watts: f64) -> f64 {
    cfg.bandwidth_hz * (p_rx_watts / cfg.noise_watts()).ln_1p() / std::f64::consts::LN_2
}

/// Wireless service rate in packets per second between a user and a BS.
pub fn wireless_service_rate_pps(
    cfg: &RadioConfig,
    user_pos: Point,
    bs_pos: Point,
    fading_power: f64,
    packet_size_bits: f64,
) -> f64 {
    let p = received_power(cfg, user_pos.distance(bs_pos), fading_power);
    shannon_rate(cfg, p) / packet_size_bits
}
