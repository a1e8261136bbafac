#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use raps::geodesy::{ned_rotation, GeodeticPosition};
use raps::models::{predict, pseudorange_variance, NoiseModelParams};
use raps::types::{
    ConstellationId, ConstellationSet, EpochMeasurements, Measurement, MeasurementKind, PerformanceSpec,
    SelectionVector, StateEstimate, StateVector,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// One GNSS epoch with a prior centered near the truth.
pub struct GnssInstance {
    pub truth: StateVector,
    pub prior: StateEstimate,
    pub epoch: EpochMeasurements,
    pub constellations: ConstellationSet,
}

pub struct InstanceParams {
    pub satellites: usize,
    pub outlier_probability: f64,
    /// log-uniform range of the prior position sigma, meters.
    pub position_sigma: (f64, f64),
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

pub fn gnss_instance(rng: &mut ChaCha8Rng, params: &InstanceParams) -> GnssInstance {
    let set = ConstellationSet::all();
    let origin = GeodeticPosition::new(
        rng.random_range(-1.2..1.2),
        rng.random_range(-3.1..3.1),
        rng.random_range(0.0..1000.0),
    );
    let r_t = ned_rotation(&origin).transpose();
    let mut truth = StateVector::zeros(set);
    truth.set_position(&origin.to_ecef());
    truth.set_velocity(
        &(r_t
            * Vector3::new(
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(-1.0..1.0),
            )),
    );
    truth.set_acceleration(&(r_t * Vector3::new(normal(rng), normal(rng), 0.1 * normal(rng))));
    for c in ConstellationId::ALL {
        truth.set_clock(c, rng.random_range(-100.0..100.0)).unwrap();
    }
    truth.set_drift(rng.random_range(-1.0..1.0));

    let noise = NoiseModelParams::default();
    let mut pseudoranges = Vec::new();
    let mut dopplers = Vec::new();
    for k in 0..params.satellites {
        let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let el: f64 = rng.random_range(10f64.to_radians()..85f64.to_radians());
        let range = rng.random_range(2.0e7..2.6e7);
        let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), -el.sin());
        let sat = truth.position() + r_t * dir * range;
        let constellation = ConstellationId::ALL[rng.random_range(0..3)];
        let sigma_pr = pseudorange_variance(&noise, el).sqrt();
        let mut m = Measurement {
            sat_id: k as u32 + 1,
            constellation,
            kind: MeasurementKind::Pseudorange,
            value: 0.0,
            sigma: sigma_pr,
            sat_pos: sat.into(),
            sat_vel: [0.0; 3],
            elevation: el,
        };
        let bias = if rng.random::<f64>() < params.outlier_probability {
            rng.random_range(5.0..30.0) * if rng.random::<bool>() { 1.0 } else { -1.0 }
        } else {
            0.0
        };
        m.value = predict(&truth, &m).unwrap() + sigma_pr * normal(rng) + bias;
        let mut d = m.clone();
        d.kind = MeasurementKind::Doppler;
        d.sigma = noise.sigma_doppler;
        d.value = predict(&truth, &d).unwrap() + d.sigma * normal(rng);
        pseudoranges.push(m);
        dopplers.push(d);
    }
    pseudoranges.extend(dopplers);
    let epoch = EpochMeasurements {
        t: 0.0,
        measurements: pseudoranges,
    };

    let pos_sigma = log_uniform(rng, params.position_sigma);
    let vel_sigma = log_uniform(rng, (0.2, 2.0));
    let sigmas: Vec<f64> = (0..13)
        .map(|i| match i {
            0..3 => pos_sigma,
            3..6 => vel_sigma,
            6..9 => 1.0,
            12 => 1.0,
            _ => 30.0,
        })
        .collect();
    let mean = DVector::from_fn(13, |i, _| truth.as_vector()[i] + sigmas[i] * normal(rng));
    let p = DMatrix::from_diagonal(&DVector::from_iterator(13, sigmas.iter().map(|s| s * s)));
    GnssInstance {
        truth,
        prior: StateEstimate::from_covariance(0.0, mean, p).unwrap(),
        epoch,
        constellations: set,
    }
}

/// ECEF to NED rotation at the geodetic position of `p` (WGS-84, fixed-point
/// latitude iteration).
pub fn ned_axes(p: &Vector3<f64>) -> Matrix3<f64> {
    let a = 6_378_137.0;
    let f = 1.0 / 298.257_223_563;
    let e2 = f * (2.0 - f);
    let lon = p.y.atan2(p.x);
    let rho = (p.x * p.x + p.y * p.y).sqrt();
    let mut lat = p.z.atan2(rho * (1.0 - e2));
    for _ in 0..20 {
        let n = a / (1.0 - e2 * lat.sin().powi(2)).sqrt();
        let h = rho / lat.cos() - n;
        lat = p.z.atan2(rho * (1.0 - e2 * n / (n + h)));
    }
    let (sl, cl) = lat.sin_cos();
    let (so, co) = lon.sin_cos();
    Matrix3::new(
        -sl * co,
        -sl * so,
        cl, //
        -so,
        co,
        0.0, //
        -cl * co,
        -cl * so,
        -sl,
    )
}

/// Measurement gradient written out by hand: unit line of sight on the
/// position (pseudorange) or velocity (Doppler) block, 1 on the clock or drift.
pub fn gnss_row(x: &DVector<f64>, set: ConstellationSet, m: &Measurement) -> DVector<f64> {
    let p = Vector3::new(x[0], x[1], x[2]);
    let s = Vector3::from(m.sat_pos);
    let los = (p - s) / (p - s).norm();
    let mut row = DVector::zeros(x.len());
    let ns = set.len();
    match m.kind {
        MeasurementKind::Pseudorange => {
            row.rows_mut(0, 3).copy_from(&los);
            let slot = set.iter().position(|c| c == m.constellation).unwrap();
            row[9 + slot] = 1.0;
        }
        MeasurementKind::Doppler => {
            row.rows_mut(3, 3).copy_from(&los);
            row[9 + ns] = 1.0;
        }
    }
    row
}

/// NED position/velocity diagonal of `J⁻ + Σ bᵢ hᵢᵀhᵢ/σᵢ²` with the
/// gradients taken at the prior mean.
pub fn ned_information_diagonal(
    prior: &StateEstimate,
    epoch: &EpochMeasurements,
    set: ConstellationSet,
    b: &SelectionVector,
) -> [f64; 6] {
    let x = prior.x();
    let mut j = prior.information().clone();
    for (i, m) in epoch.measurements.iter().enumerate() {
        if b.flags[i] {
            let h = gnss_row(x, set, m);
            j += &h * h.transpose() / (m.sigma * m.sigma);
        }
    }
    let r = ned_axes(&Vector3::new(x[0], x[1], x[2]));
    let mut out = [0.0; 6];
    for block in 0..2 {
        let jb = j.fixed_view::<3, 3>(3 * block, 3 * block).into_owned();
        let ned = r * jb * r.transpose();
        for k in 0..3 {
            out[3 * block + k] = ned[(k, k)];
        }
    }
    out
}

pub fn meets(lhs: &[f64; 6], spec: &PerformanceSpec) -> bool {
    lhs.iter().zip(spec.bounds()).all(|(l, d)| *l >= d)
}
