//! Modulation: decomposes `U = Σ R̃_j + Υ` with
//! `R̃_j = e^{iθ̃_j} Φ_{ω̃_j, v_j}(· - x̃_j)` and `Υ` orthogonal to
//! `iR̃_j`, `iJR̃_j` and `∂R̃_j` for every `j`. Velocities stay fixed.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::params::{lorentz_gamma, ModelParams, SolitonParams};
use crate::profiles::boosted_soliton;

type Field64 = Field<f64>;

/// Modulated parameters of one soliton.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulated {
    pub theta: f64,
    pub omega: f64,
    pub x: f64,
    /// Fixed velocity.
    pub v: f64,
}

impl Modulated {
    /// Parameters of the exact soliton `sp` at time `t`.
    pub fn from_soliton(sp: &SolitonParams, t: f64) -> Self {
        let (theta, x) = crate::profiles::soliton_gauge(sp, t);
        Self { theta, omega: sp.omega, x, v: sp.v }
    }

    pub fn gamma(&self) -> f64 {
        lorentz_gamma(self.v)
    }

    /// Euler prediction `(θ + τ ω/γ, ω, x + τ v)`.
    pub fn predict(&self, tau: f64) -> Self {
        Self { theta: self.theta + tau * self.omega / self.gamma(), x: self.x + tau * self.v, ..*self }
    }

    pub fn field(&self, model: ModelParams, grid: &Arc<Grid<f64>>) -> Result<Field64> {
        boosted_soliton(model, self.omega, self.v, self.theta, self.x, grid)
    }
}

/// Newton controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Central-difference step for the Jacobian.
    pub jacobian_step: f64,
    /// Jacobians with a larger condition number are rejected.
    pub max_condition: f64,
    /// Distance kept between `|ω̃|` and `√m`.
    pub omega_margin: f64,
    /// Convergence threshold for `max |F|`, relative to `‖U‖_{H¹×L²}`.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 50, jacobian_step: 1e-6, max_condition: 1e8, omega_margin: 1e-3, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct ModulationState {
    pub solitons: Vec<Modulated>,
    /// `Υ = U - Σ R̃_j`.
    pub residual: Field64,
    /// `(⟨Υ,iR̃_j⟩, ⟨Υ,iJR̃_j⟩, ⟨Υ,∂R̃_j⟩)` per soliton, flattened.
    pub ortho_residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Condition number of the Jacobian at the initial guess.
    pub condition: f64,
}

impl ModulationState {
    pub fn max_ortho(&self) -> f64 {
        self.ortho_residuals.iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    /// Smallest gap between consecutive fitted centers.
    pub fn min_separation(&self) -> f64 {
        let mut xs: Vec<f64> = self.solitons.iter().map(|s| s.x).collect();
        xs.sort_by(f64::total_cmp);
        xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }
}

struct Problem<'a> {
    u: &'a Field64,
    model: ModelParams,
    velocities: Vec<f64>,
}

impl Problem<'_> {
    fn unpack(&self, p: &[f64]) -> Vec<Modulated> {
        p.chunks(3)
            .zip(&self.velocities)
            .map(|(c, &v)| Modulated { theta: c[0], omega: c[1], x: c[2], v })
            .collect()
    }

    fn evaluate(&self, p: &[f64]) -> Result<(Vec<f64>, Field64)> {
        let grid = self.u.grid();
        let sols = self.unpack(p);
        let fields: Vec<Field64> = sols.iter().map(|s| s.field(self.model, grid)).collect::<Result<_>>()?;
        let mut ups = self.u.clone();
        for f in &fields {
            ups.axpy(-1.0, f);
        }
        let mut out = Vec::with_capacity(3 * fields.len());
        for f in &fields {
            out.push(ups.dot(&f.times_i()));
            out.push(ups.dot(&f.i_j()));
            out.push(ups.dot(&f.dx()));
        }
        Ok((out, ups))
    }

    fn jacobian(&self, p: &[f64], h: f64) -> Result<Mat<f64>> {
        let n = p.len();
        let mut jac = Mat::<f64>::zeros(n, n);
        let mut q = p.to_vec();
        for j in 0..n {
            q[j] = p[j] + h;
            let (fp, _) = self.evaluate(&q)?;
            q[j] = p[j] - h;
            let (fm, _) = self.evaluate(&q)?;
            q[j] = p[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }
}

fn condition_number(jac: &Mat<f64>) -> Result<f64> {
    let s = jac.singular_values().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}

/// Newton solve of the orthogonality system starting from `initial`.
pub fn fit_modulation(u: &Field64, model: ModelParams, initial: &[Modulated], opts: &FitOptions) -> Result<ModulationState> {
    if initial.is_empty() {
        return Err(Error::param("initial", "need at least one soliton"));
    }
    let problem = Problem { u, model, velocities: initial.iter().map(|s| s.v).collect() };
    let mut p: Vec<f64> = initial.iter().flat_map(|s| [s.theta, s.omega, s.x]).collect();
    let omega_cap = model.m.sqrt() - opts.omega_margin;
    let scale = u.h1l2_norm().max(1.0);
    let tol = opts.tolerance * scale;
    // Target well below the acceptance tolerance; Newton reaches rounding level in a few steps.
    let target = 1e-4 * tol;

    let (mut f, mut ups) = problem.evaluate(&p)?;
    let jac0 = problem.jacobian(&p, opts.jacobian_step)?;
    let condition = condition_number(&jac0)?;
    if condition > opts.max_condition {
        return Err(Error::Degenerate(condition));
    }
    let mut jac0 = Some(jac0);
    let mut iterations = 0;
    let mut clamped = false;
    loop {
        let fmax = f.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        if fmax <= target {
            break;
        }
        if iterations == opts.max_iter {
            if fmax <= tol && !clamped {
                break;
            }
            return Err(Error::NotInTube {
                time: None,
                reason: format!("Newton did not converge in {iterations} iterations (max |F| = {fmax:.3e})"),
            });
        }
        let jac = match jac0.take() {
            Some(j) => j,
            None => problem.jacobian(&p, opts.jacobian_step)?,
        };
        let rhs = Mat::from_fn(p.len(), 1, |i, _| -f[i]);
        let step = jac.partial_piv_lu().solve(&rhs);
        let mut step_size = 0.0f64;
        clamped = false;
        for (i, pi) in p.iter_mut().enumerate() {
            let d = step[(i, 0)];
            if !d.is_finite() {
                return Err(Error::NotInTube { time: None, reason: "singular Newton step".into() });
            }
            step_size = step_size.max(d.abs() / (1.0 + pi.abs()));
            *pi += d;
            if i % 3 == 1 && pi.abs() > omega_cap {
                *pi = pi.signum() * omega_cap;
                clamped = true;
            }
        }
        iterations += 1;
        (f, ups) = problem.evaluate(&p)?;
        if step_size < 1e-15 {
            break;
        }
    }
    let fmax = f.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    if clamped {
        return Err(Error::NotInTube { time: None, reason: "fitted frequency reached the edge of the window".into() });
    }
    Ok(ModulationState {
        solitons: problem.unpack(&p),
        residual: ups,
        ortho_residuals: f,
        converged: fmax <= tol,
        iterations,
        condition,
    })
}

/// Time derivatives of the modulated parameters at one interior snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterRates {
    pub time: f64,
    /// `∂t ω̃_j`.
    pub omega_rate: Vec<f64>,
    /// `∂t θ̃_j - ω̃_j/γ_j`.
    pub phase_defect: Vec<f64>,
    /// `∂t x̃_j - v_j`.
    pub position_defect: Vec<f64>,
    /// `‖Υ‖_{H¹×L²}` at this time.
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub times: Vec<f64>,
    pub states: Vec<ModulationState>,
    /// Centered differences at the interior snapshots.
    pub rates: Vec<ParameterRates>,
}

/// Fits every snapshot of a trajectory, seeding each fit with the Euler
/// prediction from the previous one.
pub fn track_parameters(
    trajectory: &[(f64, Field64)],
    model: ModelParams,
    initial: &[Modulated],
    opts: &FitOptions,
) -> Result<Track> {
    let mut times = Vec::with_capacity(trajectory.len());
    let mut states: Vec<ModulationState> = Vec::with_capacity(trajectory.len());
    let mut seed = initial.to_vec();
    let mut last_t: Option<f64> = None;
    for (t, u) in trajectory {
        if let Some(t0) = last_t {
            seed = seed.iter().map(|s| s.predict(t - t0)).collect();
        }
        let state = fit_modulation(u, model, &seed, opts).map_err(|e| match e {
            Error::NotInTube { reason, .. } => Error::NotInTube { time: Some(*t), reason },
            other => other,
        })?;
        seed = state.solitons.clone();
        last_t = Some(*t);
        times.push(*t);
        states.push(state);
    }
    let mut rates = Vec::new();
    for i in 1..states.len().saturating_sub(1) {
        let dt = times[i + 1] - times[i - 1];
        let (a, b, c) = (&states[i - 1].solitons, &states[i].solitons, &states[i + 1].solitons);
        rates.push(ParameterRates {
            time: times[i],
            omega_rate: (0..b.len()).map(|j| (c[j].omega - a[j].omega) / dt).collect(),
            phase_defect: (0..b.len()).map(|j| (c[j].theta - a[j].theta) / dt - b[j].omega / b[j].gamma()).collect(),
            position_defect: (0..b.len()).map(|j| (c[j].x - a[j].x) / dt - b[j].v).collect(),
            residual_norm: states[i].residual.h1l2_norm(),
        });
    }
    Ok(Track { times, states, rates })
}
