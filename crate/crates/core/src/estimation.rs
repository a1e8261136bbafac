//! MAP measurement update for a fixed selection vector.
//!
//! For a selection `b` the posterior mean minimizes the risk
//!
//! ```text
//! C(x, b) = (x - x⁻)ᵀ J⁻ (x - x⁻) + Σᵢ bᵢ (hᵢ(x) - yᵢ)² / σᵢ²
//! ```
//!
//! and the posterior information is `J⁺ = J⁻ + Σᵢ (bᵢ/σᵢ²) hᵢᵀ hᵢ` with the
//! Jacobian rows `hᵢ` taken at the converged mean. The minimization is a
//! Gauss-Newton iteration with step halving.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::{SelectionVector, StateEstimate};

/// Measurement set seen by the estimator: values, standard deviations and a
/// differentiable prediction model.
pub trait Observations {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value(&self, i: usize) -> f64;

    fn sigma(&self, i: usize) -> f64;

    fn predict(&self, i: usize, x: &DVector<f64>) -> Result<f64>;

    fn jacobian_row(&self, i: usize, x: &DVector<f64>) -> Result<DVector<f64>>;

    fn variance(&self, i: usize) -> f64 {
        let s = self.sigma(i);
        s * s
    }
}

/// Linear observations `y = H x + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObservations {
    h: DMatrix<f64>,
    y: DVector<f64>,
    sigma: DVector<f64>,
}

impl LinearObservations {
    pub fn new(h: DMatrix<f64>, y: DVector<f64>, sigma: DVector<f64>) -> Result<Self> {
        if h.nrows() != y.len() || y.len() != sigma.len() {
            return Err(Error::Dimension(format!(
                "H has {} rows, y {} entries, sigma {} entries",
                h.nrows(),
                y.len(),
                sigma.len()
            )));
        }
        if let Some((index, &s)) = sigma.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
            return Err(Error::NonPositiveSigma { index, sigma: s });
        }
        Ok(Self { h, y, sigma })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn sigmas(&self) -> &DVector<f64> {
        &self.sigma
    }
}

impl Observations for LinearObservations {
    fn len(&self) -> usize {
        self.y.len()
    }

    fn value(&self, i: usize) -> f64 {
        self.y[i]
    }

    fn sigma(&self, i: usize) -> f64 {
        self.sigma[i]
    }

    fn predict(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        Ok(self.h.row(i).dot(&x.transpose()))
    }

    fn jacobian_row(&self, i: usize, _x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.h.row(i).transpose())
    }
}

/// Stacked Jacobian of all observations at `x`.
pub fn jacobian<O: Observations + ?Sized>(obs: &O, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let mut h = DMatrix::zeros(obs.len(), x.len());
    for i in 0..obs.len() {
        h.set_row(i, &obs.jacobian_row(i, x)?.transpose());
    }
    Ok(h)
}

/// Diagonal of the measurement covariance.
pub fn variances<O: Observations + ?Sized>(obs: &O) -> DVector<f64> {
    DVector::from_iterator(obs.len(), (0..obs.len()).map(|i| obs.variance(i)))
}

fn check_selection<O: Observations + ?Sized>(prior: &StateEstimate, obs: &O, b: &SelectionVector) -> Result<()> {
    if b.len() != obs.len() {
        return Err(Error::Dimension(format!(
            "selection has {} flags for {} measurements",
            b.len(),
            obs.len()
        )));
    }
    if prior.dim() == 0 {
        return Err(Error::Dimension("empty state".into()));
    }
    Ok(())
}

/// Risk `C(x, b)`.
pub fn cost<O: Observations + ?Sized>(
    x: &DVector<f64>,
    b: &SelectionVector,
    prior: &StateEstimate,
    obs: &O,
) -> Result<f64> {
    check_selection(prior, obs, b)?;
    let dx = x - prior.x();
    let mut c = dx.dot(&(prior.information() * &dx));
    for i in (0..obs.len()).filter(|&i| b.get(i)) {
        let e = obs.predict(i, x)? - obs.value(i);
        c += e * e / obs.variance(i);
    }
    Ok(c)
}

/// `J⁺ = Σᵢ (bᵢ/σᵢ²) hᵢᵀ hᵢ + J⁻` for the stacked Jacobian `h` and variances.
pub fn posterior_information(
    b: &SelectionVector,
    h: &DMatrix<f64>,
    variances: &DVector<f64>,
    j_minus: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut j = j_minus.clone();
    let n = h.ncols();
    for i in (0..h.nrows()).filter(|&i| b.get(i)) {
        let w = 1.0 / variances[i];
        for k in 0..n {
            for l in k..n {
                let v = h[(i, k)] * h[(i, l)] * w;
                j[(k, l)] += v;
                if l != k {
                    j[(l, k)] += v;
                }
            }
        }
    }
    j
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSolveResult {
    pub x_plus: DVector<f64>,
    pub j_plus: DMatrix<f64>,
    pub risk: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl MapSolveResult {
    /// Posterior estimate at time `t`, covariance `(J⁺)⁻¹`.
    pub fn posterior(&self, t: f64) -> Result<StateEstimate> {
        StateEstimate::from_information(t, self.x_plus.clone(), self.j_plus.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the Gauss-Newton step norm drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_iterations: 10,
            max_halvings: 5,
        }
    }
}

pub fn map_update<O: Observations + ?Sized>(
    prior: &StateEstimate,
    obs: &O,
    b: &SelectionVector,
) -> Result<MapSolveResult> {
    map_update_with(prior, obs, b, &SolverOptions::default())
}

pub fn map_update_with<O: Observations + ?Sized>(
    prior: &StateEstimate,
    obs: &O,
    b: &SelectionVector,
    options: &SolverOptions,
) -> Result<MapSolveResult> {
    check_selection(prior, obs, b)?;
    let j_minus = prior.information();
    let selected: Vec<usize> = (0..obs.len()).filter(|&i| b.get(i)).collect();

    let mut x = prior.x().clone();
    let mut c = cost(&x, b, prior, obs)?;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iterations {
        iterations += 1;
        let mut normal = j_minus.clone();
        let mut gradient = -(j_minus * (&x - prior.x()));
        for &i in &selected {
            let row = obs.jacobian_row(i, &x)?;
            let w = 1.0 / obs.variance(i);
            let e = obs.value(i) - obs.predict(i, &x)?;
            normal.ger(w, &row, &row, 1.0);
            gradient.axpy(w * e, &row, 1.0);
        }
        let step = normal.cholesky().ok_or(Error::SingularInformation)?.solve(&gradient);

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let candidate = &x + &step * scale;
            let cc = cost(&candidate, b, prior, obs)?;
            if cc <= c {
                accepted = Some((candidate, cc));
                break;
            }
            scale *= 0.5;
        }
        let small = step.norm() < options.tolerance;
        match accepted {
            Some((candidate, cc)) => {
                x = candidate;
                c = cc;
            }
            // At the minimum the model step is pure rounding and may not lower the cost.
            None if small => {}
            None => break,
        }
        if small {
            converged = true;
            break;
        }
    }

    let h = jacobian(obs, &x)?;
    let j_plus = posterior_information(b, &h, &variances(obs), j_minus);
    Ok(MapSolveResult {
        x_plus: x,
        j_plus,
        risk: c,
        iterations,
        converged,
    })
}

/// Prior residuals and their standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub r: DVector<f64>,
    pub sigma: DVector<f64>,
}

/// `r = y - h(x⁻)` with `σ_rᵢ² = hᵢ P⁻ hᵢᵀ + σᵢ²`.
pub fn residuals<O: Observations + ?Sized>(prior: &StateEstimate, obs: &O) -> Result<Residuals> {
    let n = obs.len();
    let mut r = DVector::zeros(n);
    let mut sigma = DVector::zeros(n);
    for i in 0..n {
        let row = obs.jacobian_row(i, prior.x())?;
        r[i] = obs.value(i) - obs.predict(i, prior.x())?;
        sigma[i] = (row.dot(&(prior.covariance() * &row)) + obs.variance(i)).sqrt();
    }
    Ok(Residuals { r, sigma })
}
