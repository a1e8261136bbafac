//! Synthetic multi-constellation scenarios with ground truth.
//!
//! The receiver follows piecewise constant-acceleration motion in the local
//! NED frame of the scenario origin. Satellites sit on an azimuth/elevation
//! shell around the origin (optionally rotating in azimuth). Each pseudorange
//! is `range + dt + cme + multipath + noise`, where `cme` is the residual
//! common-mode error and `multipath` comes from a two-state Markov outlier
//! process that is only active inside the configured obstructed windows.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesy::{elevation_angle, ned_rotation, GeodeticPosition};
use crate::models::{los_vector, pseudorange_variance, NoiseModelParams};
use crate::propagation::{process_noise, ProcessNoiseParams};
use crate::types::{
    ConstellationId, ConstellationSet, EpochMeasurements, Measurement, MeasurementKind, SkyLabel, StateVector,
};

/// Salt separating the outlier random stream from the measurement noise stream.
const OUTLIER_STREAM: u64 = 0x6f75_746c_6965_7273;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "track", rename_all = "snake_case")]
pub enum SatelliteTrack {
    /// Fixed direction from the origin. Angles in radians, range in meters.
    Static { azimuth: f64, elevation: f64, range: f64 },
    /// Constant elevation, azimuth advancing at `azimuth_rate` rad/s.
    Circular {
        azimuth: f64,
        elevation: f64,
        range: f64,
        azimuth_rate: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatelliteConfig {
    pub sat_id: u32,
    pub constellation: ConstellationId,
    #[serde(flatten)]
    pub track: SatelliteTrack,
}

/// Acceleration (NED, m/s^2) applied from `start` until the next segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub start: f64,
    pub accel_ned: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClockTruth {
    /// Initial offsets in meters, one per constellation in clock-slot order.
    pub initial_offsets: Vec<f64>,
    pub initial_drift: f64,
    /// m^2/s
    pub offset_psd: f64,
    /// m^2/s^3
    pub drift_psd: f64,
}

impl Default for ClockTruth {
    fn default() -> Self {
        Self {
            initial_offsets: vec![30.0, -12.0, 45.0],
            initial_drift: 0.5,
            offset_psd: 0.5,
            drift_psd: 0.005,
        }
    }
}

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutlierModel {
    /// Per-epoch activation probability of an inactive channel.
    pub p_on: f64,
    /// Per-epoch probability that an active channel stays active.
    pub p_stay: f64,
    /// Bias magnitude range, meters.
    pub bias_low: f64,
    pub bias_high: f64,
    /// Also bias Doppler channels.
    pub bias_dopplers: bool,
}

impl Default for OutlierModel {
    fn default() -> Self {
        Self {
            p_on: 0.15,
            p_stay: 0.7,
            bias_low: 5.0,
            bias_high: 30.0,
            bias_dopplers: false,
        }
    }
}

impl OutlierModel {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_on) || !prob(self.p_stay) {
            return Err(Error::InvalidParameter(
                "outlier probabilities must lie in [0, 1]".into(),
            ));
        }
        if !(self.bias_low <= self.bias_high) || self.bias_low < 0.0 {
            return Err(Error::InvalidParameter(
                "outlier bias range must satisfy 0 <= low <= high".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub epoch_interval: f64,
    pub origin: GeodeticPosition,
    pub initial_velocity_ned: [f64; 3],
    pub trajectory: Vec<TrajectorySegment>,
    pub satellites: Vec<SatelliteConfig>,
    /// Radians.
    pub elevation_cutoff: f64,
    pub noise: NoiseModelParams,
    /// Draw measurement noise; when false every measurement is exact up to multipath.
    pub measurement_noise: bool,
    pub clock: ClockTruth,
    pub outlier_windows: Vec<TimeWindow>,
    pub outlier_model: OutlierModel,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            duration: 1200.0,
            epoch_interval: 1.0,
            origin: GeodeticPosition::from_degrees(33.9737, -117.3281, 300.0),
            initial_velocity_ned: [10.0, 0.0, 0.0],
            trajectory: default_trajectory(),
            satellites: default_sky(),
            elevation_cutoff: 10f64.to_radians(),
            noise: NoiseModelParams::default(),
            measurement_noise: true,
            clock: ClockTruth::default(),
            outlier_windows: vec![
                TimeWindow {
                    start: 300.0,
                    end: 450.0,
                },
                TimeWindow {
                    start: 750.0,
                    end: 900.0,
                },
            ],
            outlier_model: OutlierModel::default(),
            seed: 20_240_601,
        }
    }
}

/// Right-angle turns every 200 s, each lasting 10 s, keeping speed near 10 m/s.
fn default_trajectory() -> Vec<TrajectorySegment> {
    let turns = [
        [-1.0, 1.0, 0.0],
        [1.0, -1.0, 0.0],
        [-1.0, -1.0, 0.0],
        [1.0, 1.0, 0.0],
        [-1.0, 1.0, 0.0],
    ];
    let mut segments = vec![TrajectorySegment {
        start: 0.0,
        accel_ned: [0.0; 3],
    }];
    for (k, a) in turns.iter().enumerate() {
        let start = 100.0 + 200.0 * k as f64;
        segments.push(TrajectorySegment { start, accel_ned: *a });
        segments.push(TrajectorySegment {
            start: start + 10.0,
            accel_ned: [0.0; 3],
        });
    }
    segments
}

/// 8 GPS + 7 Galileo + 8 BeiDou satellites spread over the sky.
fn default_sky() -> Vec<SatelliteConfig> {
    let gps = [
        (10.0, 72.0),
        (55.0, 38.0),
        (100.0, 18.0),
        (150.0, 52.0),
        (195.0, 27.0),
        (240.0, 63.0),
        (290.0, 14.0),
        (330.0, 44.0),
    ];
    let gal = [
        (30.0, 24.0),
        (80.0, 58.0),
        (125.0, 33.0),
        (175.0, 16.0),
        (220.0, 47.0),
        (270.0, 36.0),
        (315.0, 68.0),
    ];
    let bds = [
        (0.0, 31.0),
        (45.0, 15.0),
        (90.0, 49.0),
        (135.0, 78.0),
        (180.0, 40.0),
        (225.0, 20.0),
        (270.0, 57.0),
        (315.0, 26.0),
    ];
    let mut sky = Vec::new();
    for (constellation, table, range, base) in [
        (ConstellationId::Gps, &gps[..], 2.22e7, 1),
        (ConstellationId::Galileo, &gal[..], 2.56e7, 1),
        (ConstellationId::BeiDou, &bds[..], 2.39e7, 1),
    ] {
        for (k, &(az, el)) in table.iter().enumerate() {
            sky.push(SatelliteConfig {
                sat_id: base + k as u32,
                constellation,
                track: SatelliteTrack::Static {
                    azimuth: f64::to_radians(az),
                    elevation: f64::to_radians(el),
                    range,
                },
            });
        }
    }
    sky
}

impl ScenarioConfig {
    pub fn constellations(&self) -> Result<ConstellationSet> {
        ConstellationSet::new(self.satellites.iter().map(|s| s.constellation))
    }

    pub fn epoch_count(&self) -> usize {
        (self.duration / self.epoch_interval).round() as usize
    }

    pub fn epoch_time(&self, k: usize) -> f64 {
        k as f64 * self.epoch_interval
    }

    pub fn sky_label(&self, t: f64) -> SkyLabel {
        sky_label(&self.outlier_windows, t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !(self.epoch_interval > 0.0) {
            return Err(Error::InvalidParameter(
                "duration and epoch_interval must be positive".into(),
            ));
        }
        let set = self.constellations()?;
        if self.clock.initial_offsets.len() != set.len() {
            return Err(Error::InvalidParameter(format!(
                "{} clock offsets for {} constellations",
                self.clock.initial_offsets.len(),
                set.len()
            )));
        }
        if self.clock.offset_psd < 0.0 || self.clock.drift_psd < 0.0 {
            return Err(Error::InvalidParameter("clock PSDs must be non-negative".into()));
        }
        for w in &self.outlier_windows {
            if !(w.start <= w.end) || w.start < 0.0 || w.end > self.duration {
                return Err(Error::InvalidParameter(format!(
                    "outlier window [{}, {}) outside the scenario",
                    w.start, w.end
                )));
            }
        }
        self.outlier_model.validate()?;
        self.noise.validate()
    }

    /// True position, velocity and acceleration in NED relative to the origin.
    pub fn kinematics_ned(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let mut segments = self.trajectory.clone();
        segments.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut p = Vector3::zeros();
        let mut v = Vector3::from(self.initial_velocity_ned);
        let mut a = Vector3::zeros();
        let mut now = 0.0;
        for seg in segments.iter().filter(|s| s.start <= t) {
            let dt = (seg.start - now).max(0.0);
            p += v * dt + a * (0.5 * dt * dt);
            v += a * dt;
            now = now.max(seg.start);
            a = Vector3::from(seg.accel_ned);
        }
        let dt = t - now;
        p += v * dt + a * (0.5 * dt * dt);
        v += a * dt;
        (p, v, a)
    }

    /// True receiver position, velocity and acceleration in ECEF.
    pub fn kinematics_ecef(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let r_t = ned_rotation(&self.origin).transpose();
        let (p, v, a) = self.kinematics_ned(t);
        (self.origin.to_ecef() + r_t * p, r_t * v, r_t * a)
    }
}

pub fn sky_label(windows: &[TimeWindow], t: f64) -> SkyLabel {
    if windows.iter().any(|w| w.contains(t)) {
        SkyLabel::Obstructed
    } else {
        SkyLabel::Open
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteGeometry {
    pub sat_id: u32,
    pub constellation: ConstellationId,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Elevation at the true receiver position, radians.
    pub elevation: f64,
}

fn shell_direction(azimuth: f64, elevation: f64) -> Vector3<f64> {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Vector3::new(ce * ca, ce * sa, -se)
}

/// Visible satellites at `t`, in configuration order.
pub fn epoch_geometry(config: &ScenarioConfig, t: f64) -> Result<Vec<SatelliteGeometry>> {
    let r_t = ned_rotation(&config.origin).transpose();
    let origin = config.origin.to_ecef();
    let (receiver, _, _) = config.kinematics_ecef(t);
    let mut out = Vec::new();
    for sat in &config.satellites {
        let (position, velocity) = match sat.track {
            SatelliteTrack::Static {
                azimuth,
                elevation,
                range,
            } => (
                origin + r_t * shell_direction(azimuth, elevation) * range,
                Vector3::zeros(),
            ),
            SatelliteTrack::Circular {
                azimuth,
                elevation,
                range,
                azimuth_rate,
            } => {
                let az = (azimuth + azimuth_rate * t).rem_euclid(2.0 * PI);
                let ce = elevation.cos();
                let d_dir = Vector3::new(-ce * az.sin(), ce * az.cos(), 0.0) * azimuth_rate;
                (
                    origin + r_t * shell_direction(az, elevation) * range,
                    r_t * d_dir * range,
                )
            }
        };
        let elevation = elevation_angle(&receiver, &position)?;
        if elevation >= config.elevation_cutoff {
            out.push(SatelliteGeometry {
                sat_id: sat.sat_id,
                constellation: sat.constellation,
                position,
                velocity,
                elevation,
            });
        }
    }
    Ok(out)
}

/// Error components of one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementTruth {
    /// Multipath bias, meters (m/s for biased Dopplers).
    pub multipath: f64,
    /// Residual common-mode error, meters; zero for Dopplers.
    pub cme: f64,
    /// White noise draw.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub t: f64,
    pub state: StateVector,
    /// Per-measurement error terms in epoch order.
    pub measurements: Vec<MeasurementTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub constellations: ConstellationSet,
    pub origin: GeodeticPosition,
    pub windows: Vec<TimeWindow>,
    pub epochs: Vec<EpochMeasurements>,
    pub truth: Vec<TruthRecord>,
}

impl Scenario {
    pub fn sky_label(&self, t: f64) -> SkyLabel {
        sky_label(&self.windows, t)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Exact discrete clock propagation `[dt(1..n_s), dtdot]` with sampled noise.
struct ClockProcess {
    n_s: usize,
    state: DVector<f64>,
    noise_factor: Option<DMatrix<f64>>,
    dt: f64,
}

impl ClockProcess {
    fn new(truth: &ClockTruth, n_s: usize, dt: f64) -> Result<Self> {
        let mut state = DVector::zeros(n_s + 1);
        for (k, v) in truth.initial_offsets.iter().enumerate() {
            state[k] = *v;
        }
        state[n_s] = truth.initial_drift;
        let params = ProcessNoiseParams {
            jerk_psd: 0.0,
            clock_offset_psd: truth.offset_psd,
            clock_drift_psd: truth.drift_psd,
        };
        let q = process_noise(dt, &params, n_s)?;
        let block = q.view((9, 9), (n_s + 1, n_s + 1)).into_owned();
        let noise_factor = if block.amax() > 0.0 {
            Some(
                block
                    .cholesky()
                    .ok_or_else(|| Error::InvalidParameter("clock noise must be positive definite".into()))?
                    .l(),
            )
        } else {
            None
        };
        Ok(Self {
            n_s,
            state,
            noise_factor,
            dt,
        })
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) {
        let drift = self.state[self.n_s];
        for k in 0..self.n_s {
            self.state[k] += self.dt * drift;
        }
        if let Some(l) = &self.noise_factor {
            let w = DVector::from_fn(self.n_s + 1, |_, _| normal(rng));
            self.state += l * w;
        }
    }
}

/// Generates the measurement stream and its ground truth.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let constellations = config.constellations()?;
    let n_s = constellations.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut clock = ClockProcess::new(&config.clock, n_s, config.epoch_interval)?;
    let noise_scale = if config.measurement_noise { 1.0 } else { 0.0 };
    let sigma_rho = config.noise.sigma_rho;
    let sigma_d = config.noise.sigma_doppler;

    let mut epochs = Vec::with_capacity(config.epoch_count());
    let mut truth = Vec::with_capacity(config.epoch_count());
    for k in 0..config.epoch_count() {
        let t = config.epoch_time(k);
        if k > 0 {
            clock.step(&mut rng);
        }
        let (p, v, a) = config.kinematics_ecef(t);
        let mut state = StateVector::zeros(constellations);
        state.set_position(&p);
        state.set_velocity(&v);
        state.set_acceleration(&a);
        for (slot, c) in constellations.iter().enumerate() {
            state.set_clock(c, clock.state[slot])?;
        }
        state.set_drift(clock.state[n_s]);

        let geometry = epoch_geometry(config, t)?;
        if geometry.is_empty() {
            return Err(Error::EmptySky { t });
        }
        let mut pseudoranges = Vec::with_capacity(geometry.len());
        let mut dopplers = Vec::with_capacity(geometry.len());
        let mut pr_truth = Vec::with_capacity(geometry.len());
        let mut dop_truth = Vec::with_capacity(geometry.len());
        for sat in &geometry {
            let cme = normal(&mut rng) * config.noise.cme_variance(sat.elevation).sqrt() * noise_scale;
            let eta = normal(&mut rng) * sigma_rho * noise_scale;
            let eta_d = normal(&mut rng) * sigma_d * noise_scale;
            let los = los_vector(&p, &sat.position)?;
            let clock_offset = state.clock(sat.constellation).unwrap_or_default();
            let measurement = |kind, value, sigma| Measurement {
                sat_id: sat.sat_id,
                constellation: sat.constellation,
                kind,
                value,
                sigma,
                sat_pos: sat.position.into(),
                sat_vel: sat.velocity.into(),
                elevation: sat.elevation,
            };
            pseudoranges.push(measurement(
                MeasurementKind::Pseudorange,
                (p - sat.position).norm() + clock_offset + cme + eta,
                pseudorange_variance(&config.noise, sat.elevation).sqrt(),
            ));
            dopplers.push(measurement(
                MeasurementKind::Doppler,
                los.dot(&v) + state.drift() + eta_d,
                sigma_d,
            ));
            pr_truth.push(MeasurementTruth {
                multipath: 0.0,
                cme,
                noise: eta,
            });
            dop_truth.push(MeasurementTruth {
                multipath: 0.0,
                cme: 0.0,
                noise: eta_d,
            });
        }
        pseudoranges.append(&mut dopplers);
        pr_truth.append(&mut dop_truth);
        epochs.push(EpochMeasurements {
            t,
            measurements: pseudoranges,
        });
        truth.push(TruthRecord {
            t,
            state,
            measurements: pr_truth,
        });
    }

    inject_outliers(
        &mut epochs,
        &mut truth,
        &config.outlier_windows,
        &config.outlier_model,
        config.seed ^ OUTLIER_STREAM,
    )?;
    Ok(Scenario {
        constellations,
        origin: config.origin,
        windows: config.outlier_windows.clone(),
        epochs,
        truth,
    })
}

/// Adds multipath biases from a two-state Markov process per channel.
///
/// Inside a window an inactive channel activates with probability `p_on`
/// and draws a sign and magnitude held for the whole activation; an active
/// channel stays active with probability `p_stay`. Channels are inactive
/// outside the windows and whenever their satellite is not tracked.
pub fn inject_outliers(
    epochs: &mut [EpochMeasurements],
    truth: &mut [TruthRecord],
    windows: &[TimeWindow],
    model: &OutlierModel,
    seed: u64,
) -> Result<()> {
    model.validate()?;
    if epochs.len() != truth.len() {
        return Err(Error::Dimension("epoch and truth streams differ in length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut active: HashMap<(ConstellationId, u32, MeasurementKind), f64> = HashMap::new();
    for (epoch, record) in epochs.iter_mut().zip(truth.iter_mut()) {
        if record.measurements.len() != epoch.measurements.len() {
            return Err(Error::Dimension(format!(
                "truth at t = {} does not match its epoch",
                epoch.t
            )));
        }
        let inside = windows.iter().any(|w| w.contains(epoch.t));
        let mut next = HashMap::new();
        for (m, mt) in epoch.measurements.iter_mut().zip(record.measurements.iter_mut()) {
            let eligible = m.kind == MeasurementKind::Pseudorange || model.bias_dopplers;
            if !inside || !eligible {
                continue;
            }
            let key = (m.constellation, m.sat_id, m.kind);
            let bias = match active.get(&key) {
                Some(&bias) if rng.random::<f64>() < model.p_stay => Some(bias),
                Some(_) => None,
                None if rng.random::<f64>() < model.p_on => {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    Some(sign * rng.random_range(model.bias_low..=model.bias_high))
                }
                None => None,
            };
            if let Some(bias) = bias {
                m.value += bias - mt.multipath;
                mt.multipath = bias;
                next.insert(key, bias);
            }
        }
        active = next;
    }
    Ok(())
}
