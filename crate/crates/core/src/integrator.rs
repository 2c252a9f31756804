//! Time-reversible Strang splitting for `∂t (u1, u2) = J E'(u1, u2)`.
//!
//! The linear flow rotates each Fourier mode with frequency `Ω_k = √(m + k²)`
//! exactly; the nonlinear flow `u2 += τ |u1|^{p-1} u1` is exact pointwise.
//! Both sub-flows are reversible, so the symmetric composition is too.

use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::params::ModelParams;
use crate::scalar::Real;

/// Above this amplitude the run is declared blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    StrangSplit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Step size; negative values integrate backward.
    pub dt: f64,
    /// Step count used by [`run`].
    pub steps: usize,
    pub scheme: Scheme,
    /// Apply the 2/3 rule to the nonlinear term.
    pub dealias: bool,
}

impl IntegratorConfig {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if dt == 0.0 || !dt.is_finite() {
            return Err(Error::param("dt", "step must be finite and nonzero"));
        }
        Ok(Self { dt, steps, scheme: Scheme::StrangSplit, dealias: false })
    }

    pub fn with_dealias(mut self, dealias: bool) -> Self {
        self.dealias = dealias;
        self
    }

    /// Same configuration with the step direction reversed.
    pub fn reversed(mut self) -> Self {
        self.dt = -self.dt;
        self
    }

    /// Enforces the heuristic bound `|dt| ≤ 0.5·spacing`.
    pub fn check_against<T: Real>(&self, grid: &Grid<T>) -> Result<()> {
        let bound = 0.5 * grid.spacing().as_f64();
        if self.dt.abs() > bound * (1.0 + 1e-12) {
            return Err(Error::param("dt", format!("|dt| = {} exceeds 0.5·spacing = {bound}", self.dt.abs())));
        }
        Ok(())
    }
}

/// Precomputed rotation tables and buffers for one `(grid, model, dt)`.
pub struct Stepper<T: Real> {
    grid: Arc<Grid<T>>,
    p: T,
    dt: T,
    omega: Vec<T>,
    half: Vec<(T, T)>,
    full: Vec<(T, T)>,
    keep: Vec<bool>,
    work: Vec<Complex<T>>,
}

impl<T: Real> Stepper<T> {
    pub fn new(grid: Arc<Grid<T>>, model: ModelParams, cfg: &IntegratorConfig) -> Result<Self> {
        cfg.check_against(&grid)?;
        let m = model.m;
        let omega: Vec<f64> = grid.derivative_symbol().iter().map(|k| (m + k.as_f64().powi(2)).sqrt()).collect();
        let table = |tau: f64| omega.iter().map(|w| (T::lit((w * tau).cos()), T::lit((w * tau).sin()))).collect();
        let kmax = grid.max_wavenumber().as_f64();
        let keep = grid
            .wavenumbers()
            .iter()
            .map(|k| !cfg.dealias || k.as_f64().abs() <= 2.0 / 3.0 * kmax)
            .collect();
        let n = grid.points();
        Ok(Self {
            p: T::lit(model.p),
            dt: T::lit(cfg.dt),
            half: table(0.5 * cfg.dt),
            full: table(cfg.dt),
            omega: omega.into_iter().map(T::lit).collect(),
            keep,
            work: vec![Complex::new(T::zero(), T::zero()); n],
            grid,
        })
    }

    fn rotate(&self, table: &[(T, T)], h1: &mut [Complex<T>], h2: &mut [Complex<T>]) {
        for (((a, b), &(c, s)), &w) in h1.iter_mut().zip(h2.iter_mut()).zip(table).zip(&self.omega) {
            let (x, y) = (*a, *b);
            *a = x * c + y * (s / w);
            *b = y * c - x * (s * w);
        }
    }

    /// Nonlinear kick in Fourier variables; returns `sup |u1|`.
    fn kick(&mut self, h1: &[Complex<T>], h2: &mut [Complex<T>]) -> T {
        self.work.copy_from_slice(h1);
        self.grid.ifft(&mut self.work);
        let pm1 = self.p - T::one();
        let mut sup = T::zero();
        let mut finite = true;
        for z in self.work.iter_mut() {
            let a = z.norm();
            finite &= a.is_finite();
            sup = sup.max(a);
            *z = *z * a.powf(pm1);
        }
        if !finite {
            return T::infinity();
        }
        self.grid.fft(&mut self.work);
        for ((b, f), &k) in h2.iter_mut().zip(&self.work).zip(&self.keep) {
            if k {
                *b = *b + *f * self.dt;
            }
        }
        sup
    }

    /// Advances `steps` full steps from time `t0`, starting and ending in physical variables.
    pub fn advance(&mut self, w: &mut Field<T>, steps: usize, t0: f64) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        let (mut h1, mut h2) = (w.u1.clone(), w.u2.clone());
        self.grid.fft(&mut h1);
        self.grid.fft(&mut h2);
        let half = std::mem::take(&mut self.half);
        let full = std::mem::take(&mut self.full);
        self.rotate(&half, &mut h1, &mut h2);
        let mut outcome = Ok(());
        for i in 0..steps {
            let sup = self.kick(&h1, &mut h2);
            if !sup.is_finite() || sup.as_f64() > BLOWUP_THRESHOLD {
                let time = t0 + i as f64 * self.dt.as_f64();
                outcome = Err(Error::BlowUp { time, sup: sup.as_f64() });
                break;
            }
            self.rotate(if i + 1 == steps { &half } else { &full }, &mut h1, &mut h2);
        }
        self.half = half;
        self.full = full;
        outcome?;
        self.grid.ifft(&mut h1);
        self.grid.ifft(&mut h2);
        w.u1 = h1;
        w.u2 = h2;
        if !w.is_finite() {
            return Err(Error::BlowUp { time: t0 + steps as f64 * self.dt.as_f64(), sup: f64::INFINITY });
        }
        Ok(())
    }
}

/// One Strang step.
pub fn step<T: Real>(w: &Field<T>, cfg: &IntegratorConfig, model: ModelParams) -> Result<Field<T>> {
    let mut out = w.clone();
    Stepper::new(w.grid().clone(), model, cfg)?.advance(&mut out, 1, 0.0)?;
    Ok(out)
}

/// `cfg.steps` steps from `t = 0`.
pub fn run<T: Real>(w: &Field<T>, cfg: &IntegratorConfig, model: ModelParams) -> Result<Field<T>> {
    let mut out = w.clone();
    Stepper::new(w.grid().clone(), model, cfg)?.advance(&mut out, cfg.steps, 0.0)?;
    Ok(out)
}

/// Number of steps of size `dt` taking `t0` to `t1`; must be a nonnegative integer.
pub fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    let ratio = (t1 - t0) / dt;
    let n = ratio.round();
    if !(n >= 0.0) || (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::param("dt", format!("(t1 - t0)/dt = {ratio} is not a nonnegative integer")));
    }
    Ok(n as usize)
}

/// Evolves from `t0` to `t1`, calling `observe(t, W)` at `t0`, every `stride`
/// steps, and at `t1`. A `stride` of zero only observes the endpoints.
pub fn evolve<T, F>(
    w: &Field<T>,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    model: ModelParams,
    stride: usize,
    mut observe: F,
) -> Result<Field<T>>
where
    T: Real,
    F: FnMut(f64, &Field<T>) -> Result<()>,
{
    let steps = step_count(t0, t1, cfg.dt)?;
    let mut state = w.clone();
    observe(t0, &state)?;
    if steps == 0 {
        return Ok(state);
    }
    let mut stepper = Stepper::new(w.grid().clone(), model, cfg)?;
    let chunk = if stride == 0 { steps } else { stride };
    let mut done = 0;
    while done < steps {
        let k = chunk.min(steps - done);
        stepper.advance(&mut state, k, t0 + done as f64 * cfg.dt)?;
        done += k;
        let t = if done == steps { t1 } else { t0 + done as f64 * cfg.dt };
        observe(t, &state)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::boosted_soliton;

    fn cubic() -> ModelParams {
        ModelParams::new(1.0, 3.0, 1).unwrap()
    }

    #[test]
    fn zero_field_is_fixed() {
        let grid = Grid::<f64>::new(20.0, 64).unwrap();
        let z = Field::zeros(grid);
        let cfg = IntegratorConfig::new(0.1, 10).unwrap();
        assert_eq!(run(&z, &cfg, cubic()).unwrap().l2l2_norm(), 0.0);
    }

    #[test]
    fn linear_mode_dispersion() {
        let grid = Grid::<f64>::new(20.0, 64).unwrap();
        let k = 3.0 * std::f64::consts::TAU / 20.0;
        let om = (1.0 + k * k).sqrt();
        // Amplitude small enough that the cubic term is below rounding over the run.
        let a = 1e-7;
        let w = Field::from_fn(
            grid.clone(),
            |x| Complex::new(0.0, k * x).exp() * a,
            |x| Complex::new(0.0, k * x).exp() * Complex::new(0.0, -om * a),
        );
        let cfg = IntegratorConfig::new(0.05, 200).unwrap();
        let out = run(&w, &cfg, cubic()).unwrap();
        let phase = Complex::new(0.0, -om * 10.0).exp();
        let err = out.u1.iter().zip(&w.u1).map(|(x, y)| (x - y * phase).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12 * a * 1e3, "{err}");
    }

    #[test]
    fn reversibility() {
        let grid = Grid::<f64>::new(64.0, 512).unwrap();
        let w = boosted_soliton(cubic(), 0.8, 0.3, 0.2, -3.0, &grid).unwrap();
        let cfg = IntegratorConfig::new(0.02, 100).unwrap();
        let fwd = run(&w, &cfg, cubic()).unwrap();
        let back = run(&fwd, &cfg.reversed(), cubic()).unwrap();
        assert!((&back - &w).h1l2_norm() < 1e-12 * w.h1l2_norm());
    }

    #[test]
    fn blow_up_is_reported() {
        let grid = Grid::<f64>::new(20.0, 128).unwrap();
        let w = Field::from_fn(grid, |x| Complex::new(6.0 / (2.0 * x).cosh(), 0.0), |_| Complex::new(0.0, 0.0));
        let cfg = IntegratorConfig::new(0.005, 4000).unwrap();
        match run(&w, &cfg, ModelParams::new(1.0, 5.0, 1).unwrap()) {
            Err(Error::BlowUp { time, .. }) => assert!(time > 0.0 && time < 20.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn step_count_validation() {
        assert_eq!(step_count(0.0, 1.0, 0.01).unwrap(), 100);
        assert_eq!(step_count(40.0, 10.0, -0.005).unwrap(), 6000);
        assert_eq!(step_count(3.0, 3.0, 0.1).unwrap(), 0);
        assert!(step_count(0.0, 1.0, -0.1).is_err());
        assert!(step_count(0.0, 1.0, 0.3).is_err());
        assert!(IntegratorConfig::new(0.0, 1).is_err());
    }

    #[test]
    fn dt_bound() {
        let grid = Grid::<f64>::new(10.0, 64).unwrap();
        let cfg = IntegratorConfig::new(0.1, 1).unwrap();
        assert!(cfg.check_against(&grid).is_err());
    }
}
