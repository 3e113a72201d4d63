//! Radio propagation, carrier sensing and capture-based reception.
//!
//! Path loss follows free space up to the crossover distance and the
//! two-ray ground model beyond it. Receivers track every overlapping
//! arrival that is strong enough to matter and decide, when a frame ends,
//! whether it was decoded, destroyed by overlap, or only heard as energy.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, NodeId};
use crate::time::{SimDuration, SimTime};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum PhyError {
    #[error("distance must be positive, got {0} m")]
    InvalidGeometry(f64),
    #[error("invalid radio parameters: {0}")]
    InvalidParams(&'static str),
}

/// WaveLAN-style DSSS radio. Thresholds are linear watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub bandwidth_bps: u64,
    pub frequency_hz: f64,
    pub capture_threshold_db: f64,
    pub carrier_sense_threshold_w: f64,
    pub receive_threshold_w: f64,
    pub tx_power_w: f64,
    pub antenna_gain_tx: f64,
    pub antenna_gain_rx: f64,
    pub antenna_height_m: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            bandwidth_bps: 2_000_000,
            frequency_hz: 914e6,
            capture_threshold_db: 10.0,
            carrier_sense_threshold_w: 1.559e-11,
            receive_threshold_w: 3.562e-10,
            tx_power_w: 0.2818,
            antenna_gain_tx: 1.0,
            antenna_gain_rx: 1.0,
            antenna_height_m: 1.5,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), PhyError> {
        let positive = [
            self.frequency_hz,
            self.carrier_sense_threshold_w,
            self.receive_threshold_w,
            self.tx_power_w,
            self.antenna_gain_tx,
            self.antenna_gain_rx,
            self.antenna_height_m,
        ];
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) || self.bandwidth_bps == 0 {
            return Err(PhyError::InvalidParams("powers, gains, heights and rates must be positive"));
        }
        if self.receive_threshold_w <= self.carrier_sense_threshold_w {
            return Err(PhyError::InvalidParams(
                "receive threshold must exceed carrier-sense threshold",
            ));
        }
        if !self.capture_threshold_db.is_finite() || self.capture_threshold_db < 0.0 {
            return Err(PhyError::InvalidParams("capture threshold must be a non-negative dB value"));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    /// Distance at which the free-space and two-ray curves meet.
    pub fn crossover_distance_m(&self) -> f64 {
        let h = self.antenna_height_m;
        4.0 * PI * h * h / self.wavelength_m()
    }

    /// Linear power ratio equivalent to the capture threshold.
    pub fn capture_ratio(&self) -> f64 {
        10f64.powf(self.capture_threshold_db / 10.0)
    }

    pub fn friis_w(&self, d_m: f64) -> f64 {
        let lambda = self.wavelength_m();
        self.tx_power_w * self.antenna_gain_tx * self.antenna_gain_rx * lambda * lambda
            / ((4.0 * PI).powi(2) * d_m * d_m)
    }

    pub fn two_ray_w(&self, d_m: f64) -> f64 {
        let h2 = self.antenna_height_m * self.antenna_height_m;
        self.tx_power_w * self.antenna_gain_tx * self.antenna_gain_rx * h2 * h2 / d_m.powi(4)
    }

    pub fn received_power(&self, d_m: f64) -> Result<f64, PhyError> {
        if d_m.is_nan() || d_m <= 0.0 || !d_m.is_finite() {
            return Err(PhyError::InvalidGeometry(d_m));
        }
        if d_m < self.crossover_distance_m() {
            Ok(self.friis_w(d_m))
        } else {
            Ok(self.two_ray_w(d_m))
        }
    }

    pub fn decodes_at(&self, d_m: f64) -> bool {
        self.received_power(d_m).is_ok_and(|p| p >= self.receive_threshold_w)
    }

    pub fn senses_at(&self, d_m: f64) -> bool {
        self.received_power(d_m).is_ok_and(|p| p >= self.carrier_sense_threshold_w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x_m: f64,
    pub y_m: f64,
}

impl Position {
    pub fn new(x_m: f64, y_m: f64) -> Self {
        Position { x_m, y_m }
    }

    pub fn distance_to(&self, other: &Position) -> f64 {
        (self.x_m - other.x_m).hypot(self.y_m - other.y_m)
    }
}

pub fn propagation_delay(d_m: f64) -> SimDuration {
    SimDuration::from_secs_f64(d_m / SPEED_OF_LIGHT)
}

/// Precomputed pairwise link budget for a static node set.
#[derive(Debug, Clone)]
pub struct LinkTable {
    n: usize,
    power_w: Vec<f64>,
    delay: Vec<SimDuration>,
}

impl LinkTable {
    pub fn build(positions: &[Position], radio: &RadioParams) -> Result<Self, PhyError> {
        let n = positions.len();
        let mut power_w = vec![0.0; n * n];
        let mut delay = vec![SimDuration::ZERO; n * n];
        for (i, a) in positions.iter().enumerate() {
            for (j, b) in positions.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = a.distance_to(b);
                power_w[i * n + j] = radio.received_power(d)?;
                delay[i * n + j] = propagation_delay(d);
            }
        }
        Ok(LinkTable { n, power_w, delay })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn power(&self, from: NodeId, to: NodeId) -> f64 {
        self.power_w[from.0 * self.n + to.0]
    }

    pub fn delay(&self, from: NodeId, to: NodeId) -> SimDuration {
        self.delay[from.0 * self.n + to.0]
    }
}

/// A frame on the air, as seen from the transmitter.
#[derive(Debug, Clone)]
pub struct AirFrame {
    pub id: u64,
    pub frame: Frame,
    pub tx_node: NodeId,
    pub start: SimTime,
    pub end: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    Decoded,
    CollisionDrop,
    BelowThreshold,
}

/// Capture rule against the strongest overlapping interferer.
pub fn resolve_reception(power_w: f64, strongest_interferer_w: f64, radio: &RadioParams) -> Reception {
    if power_w < radio.receive_threshold_w {
        return Reception::BelowThreshold;
    }
    if strongest_interferer_w > 0.0 && power_w < strongest_interferer_w * radio.capture_ratio() {
        return Reception::CollisionDrop;
    }
    Reception::Decoded
}

#[derive(Debug, Clone)]
struct Arrival {
    air_id: u64,
    power_w: f64,
    strongest_interferer_w: f64,
    /// Lost because the receiver transmitted during the arrival (half duplex).
    deafened: bool,
}

/// Outcome of an arrival once its last bit has been received.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalResult {
    pub air_id: u64,
    pub power_w: f64,
    pub outcome: Reception,
    pub deafened: bool,
}

/// Per-node receiver front end.
#[derive(Debug, Clone, Default)]
pub struct Receiver {
    arrivals: Vec<Arrival>,
    transmitting: bool,
}

impl Receiver {
    /// Registers a new arrival. Only arrivals above the carrier-sense
    /// threshold are tracked: anything weaker can neither be decoded nor
    /// break capture of a decodable frame.
    pub fn begin_arrival(&mut self, air_id: u64, power_w: f64) {
        let mut strongest = 0.0f64;
        for other in &mut self.arrivals {
            other.strongest_interferer_w = other.strongest_interferer_w.max(power_w);
            strongest = strongest.max(other.power_w);
        }
        self.arrivals.push(Arrival {
            air_id,
            power_w,
            strongest_interferer_w: strongest,
            deafened: self.transmitting,
        });
    }

    pub fn end_arrival(&mut self, air_id: u64, radio: &RadioParams) -> Option<ArrivalResult> {
        let idx = self.arrivals.iter().position(|a| a.air_id == air_id)?;
        let a = self.arrivals.swap_remove(idx);
        let outcome = if a.deafened {
            if a.power_w >= radio.receive_threshold_w {
                Reception::CollisionDrop
            } else {
                Reception::BelowThreshold
            }
        } else {
            resolve_reception(a.power_w, a.strongest_interferer_w, radio)
        };
        Some(ArrivalResult { air_id, power_w: a.power_w, outcome, deafened: a.deafened })
    }

    /// Air ids of the frames currently arriving.
    pub fn arrival_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.arrivals.iter().map(|a| a.air_id)
    }

    pub fn start_transmit(&mut self) {
        self.transmitting = true;
        for a in &mut self.arrivals {
            a.deafened = true;
        }
    }

    pub fn end_transmit(&mut self) {
        self.transmitting = false;
    }

    pub fn is_transmitting(&self) -> bool {
        self.transmitting
    }

    /// Physical carrier sense: own transmission or any tracked arrival.
    pub fn channel_busy(&self) -> bool {
        self.transmitting || !self.arrivals.is_empty()
    }
}
