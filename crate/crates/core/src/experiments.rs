//! End-to-end multi-soliton experiments: the backward construction from
//! `U(Tⁿ) = R(Tⁿ)`, a forward stability companion, interaction integrals
//! between solitons, and the localized-action audits.

use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::fit::{log_linear_fit, LineFit};
use crate::functionals::{
    action, build_cutoffs, charge, energy, localized_gradient_pairing, localized_hessian, localized_quantities,
    localized_taylor_remainder, momentum, ActionParams,
};
use crate::grid::{Field, Grid};
use crate::integrator::{evolve, IntegratorConfig, Stepper};
use crate::modulation::{fit_modulation, FitOptions, ModulationState, Modulated};
use crate::params::{ModelParams, SolitonParams};
use crate::profiles::{sample_soliton, sample_sum};

type Field64 = Field<f64>;

/// Multiples of the decay length kept between any soliton and the periodic seam.
const SEAM_DECAY_LENGTHS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiSolitonConfig {
    pub model: ModelParams,
    /// Sorted by increasing velocity.
    pub solitons: Vec<SolitonParams>,
    /// `Tⁿ`.
    pub t_final: f64,
    /// `T₀`.
    pub t_initial: f64,
    pub dt: f64,
    /// Reference rate `α` for reporting only.
    pub alpha_ref: f64,
    pub length: f64,
    pub points: usize,
    /// Integrator steps between diagnostics.
    pub diag_stride: usize,
    pub dealias: bool,
    /// Tube radius for `‖Υ‖`, relative to `‖R(t)‖_{H¹×L²}`.
    pub tube_radius: f64,
    /// Window for the log-error fit; defaults to `[T₀, Tⁿ - 0.1(Tⁿ - T₀)]`.
    pub fit_window: Option<(f64, f64)>,
}

impl MultiSolitonConfig {
    /// Builds and validates a configuration with default reporting settings.
    pub fn new(
        model: ModelParams,
        mut solitons: Vec<SolitonParams>,
        t_initial: f64,
        t_final: f64,
        dt: f64,
        length: f64,
        points: usize,
    ) -> Result<Self> {
        solitons.sort_by(|a, b| a.v.total_cmp(&b.v));
        let stride = ((0.1 / dt).round() as usize).max(1);
        let cfg = Self {
            model,
            solitons,
            t_final,
            t_initial,
            dt,
            alpha_ref: 1.0 / 24.0,
            length,
            points,
            diag_stride: stride,
            dealias: false,
            tube_radius: 0.1,
            fit_window: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every violated invariant, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let model = self.model;
        if model.d != 1 {
            out.push(format!("model.d: dynamics are one-dimensional, got d = {}", model.d));
        }
        if !model.is_charge_subcritical() {
            out.push(format!("model.p: p = {} must satisfy p < 1 + 4/d", model.p));
        }
        if self.solitons.is_empty() {
            out.push("solitons: at least one soliton is required".into());
        }
        for (j, s) in self.solitons.iter().enumerate() {
            if s.model != model {
                out.push(format!("soliton {}: model parameters differ from the model block", j + 1));
            }
        }
        for j in 0..self.solitons.len() {
            for k in j + 1..self.solitons.len() {
                if self.solitons[j].v == self.solitons[k].v {
                    out.push(format!(
                        "solitons {} and {}: equal velocities v = {} violate the distinct-velocity hypothesis v_j != v_k",
                        j + 1,
                        k + 1,
                        self.solitons[j].v
                    ));
                }
            }
        }
        if !(self.t_initial > 0.0) {
            out.push(format!("T0: must be positive (cutoffs scale with sqrt(t)), got {}", self.t_initial));
        }
        if !(self.t_final > self.t_initial) {
            out.push(format!("Tn: must exceed T0, got Tn = {} and T0 = {}", self.t_final, self.t_initial));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push(format!("dt: must be positive, got {}", self.dt));
        }
        if !(self.length > 0.0) || self.points < 4 {
            out.push("grid: need length > 0 and at least 4 points".into());
        } else {
            let spacing = self.length / self.points as f64;
            if self.dt > 0.5 * spacing {
                out.push(format!("dt: {} exceeds 0.5·spacing = {}", self.dt, 0.5 * spacing));
            }
            if self.t_final > self.t_initial && self.dt > 0.0 {
                let ratio = (self.t_final - self.t_initial) / self.dt;
                if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                    out.push(format!("dt: (Tn - T0)/dt = {ratio} is not an integer"));
                }
            }
            let omega_star = self.omega_star();
            if omega_star * omega_star < model.m {
                let reach = SEAM_DECAY_LENGTHS / (model.m - omega_star * omega_star).sqrt();
                for (j, s) in self.solitons.iter().enumerate() {
                    let extent = [self.t_initial, self.t_final].iter().map(|t| (s.x0 + s.v * t).abs()).fold(0.0, f64::max);
                    if extent + reach > 0.5 * self.length {
                        out.push(format!(
                            "soliton {}: center reaches |x| = {extent:.3}, within {reach:.3} of the periodic seam at L/2 = {}",
                            j + 1,
                            0.5 * self.length
                        ));
                    }
                }
            }
        }
        if self.diag_stride == 0 {
            out.push("diag_stride: must be at least 1".into());
        }
        if !(self.tube_radius > 0.0) {
            out.push("tube_radius: must be positive".into());
        }
        if let Some((a, b)) = self.fit_window {
            if !(a < b) {
                out.push(format!("fit_window: empty window [{a}, {b}]"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            for (j, s) in self.solitons.iter().enumerate() {
                if !s.is_stable() {
                    log::warn!("soliton {}: (ω, v) = ({}, {}) lies outside the stability window", j + 1, s.omega, s.v);
                }
            }
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn grid(&self) -> Result<Arc<Grid<f64>>> {
        Grid::new(self.length, self.points)
    }

    pub fn velocities(&self) -> Vec<f64> {
        self.solitons.iter().map(|s| s.v).collect()
    }

    /// `ω★ = max |ω_j|`.
    pub fn omega_star(&self) -> f64 {
        self.solitons.iter().map(|s| s.omega.abs()).fold(0.0, f64::max)
    }

    /// `v★ = min_{j≠k} |v_j - v_k|`; `None` for a single soliton.
    pub fn v_star(&self) -> Option<f64> {
        let v = self.velocities();
        v.windows(2).map(|w| (w[1] - w[0]).abs()).reduce(f64::min)
    }

    /// `√(m - ω★²)·v★`, the natural decay scale.
    pub fn decay_scale(&self) -> Option<f64> {
        let w = self.omega_star();
        self.v_star().map(|v| (self.model.m - w * w).sqrt() * v)
    }

    /// `α̃` from the direction selection `|(v_j - v_k)·e₁| ≥ α̃|v_j - v_k|`.
    /// On a line `e₁` is the only axis and the ratio is identically one.
    pub fn direction_alpha(&self) -> f64 {
        let v = self.velocities();
        let mut alpha = 1.0f64;
        for j in 0..v.len() {
            for k in j + 1..v.len() {
                let d = v[k] - v[j];
                if d != 0.0 {
                    alpha = alpha.min((d * 1.0).abs() / d.abs());
                }
            }
        }
        alpha
    }

    pub fn reference_rate(&self) -> Option<f64> {
        self.decay_scale().map(|s| self.alpha_ref * s)
    }

    /// `min{1/24, α̃/8}·√(m - ω★²)·v★`, the largest rate the proof's constraints allow.
    pub fn proof_ceiling(&self) -> Option<f64> {
        self.decay_scale().map(|s| (1.0f64 / 24.0).min(self.direction_alpha() / 8.0) * s)
    }

    pub fn fit_window(&self) -> (f64, f64) {
        self.fit_window
            .unwrap_or((self.t_initial, self.t_final - 0.1 * (self.t_final - self.t_initial)))
    }

    fn integrator(&self) -> Result<IntegratorConfig> {
        Ok(IntegratorConfig::new(self.dt, 0)?.with_dealias(self.dealias))
    }

    fn action_params(&self) -> Vec<ActionParams> {
        self.solitons.iter().map(SolitonParams::action_params).collect()
    }
}

/// One diagnostic time of a run.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub field: Field64,
    /// `None` once the field has left the modulation tube.
    pub fit: Option<ModulationState>,
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    pub times: Vec<f64>,
    /// `‖U(t) - R(t)‖_{H¹×L²}` against the exact sum.
    pub errors: Vec<f64>,
    pub records: Vec<DiagnosticsRecord>,
    /// `‖Υ(t)‖_{H¹×L²}` while the fit holds.
    pub residual_norms: Vec<Option<f64>>,
    pub fit_window: (f64, f64),
    /// Log-linear fit of the error over the fit window.
    pub fitted: Option<LineFit>,
    pub reference_rate: Option<f64>,
    pub proof_ceiling: Option<f64>,
    /// `|Q_j(t) - Q_j(t_start)|` per time, per soliton.
    pub charge_drifts: Vec<Vec<f64>>,
    /// `|𝒮(t) - 𝒮(t_start)|` per time.
    pub action_drifts: Vec<f64>,
    /// First time at which the modulation fit failed or `‖Υ‖` left the tube.
    pub tube_exit: Option<f64>,
    pub snapshots: Vec<Snapshot>,
}

impl DecayReport {
    pub fn fitted_slope(&self) -> Option<f64> {
        self.fitted.map(|f| f.slope)
    }

    pub fn final_snapshot(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    /// Error at the time closest to `t`.
    pub fn error_at(&self, t: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.errors)
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|(_, &e)| e)
    }
}

fn diagnostics_record(cfg: &MultiSolitonConfig, t: f64, w: &Field64, error: f64) -> Result<DiagnosticsRecord> {
    let cp = build_cutoffs(&cfg.velocities(), t, w.grid())?;
    let loc = localized_quantities(w, &cp, &cfg.action_params())?;
    Ok(DiagnosticsRecord {
        time: t,
        energy: energy(w, cfg.model),
        charge: charge(w),
        momentum: momentum(w),
        local_energy: loc.energy,
        local_charge: loc.charge,
        local_momentum: loc.momentum,
        localized_action: loc.action,
        error,
    })
}

fn run_pipeline(cfg: &MultiSolitonConfig, start: Field64, t_start: f64, t_end: f64) -> Result<DecayReport> {
    let grid = start.grid().clone();
    let mut icfg = cfg.integrator()?;
    if t_end < t_start {
        icfg = icfg.reversed();
    }
    let opts = FitOptions::default();
    let mut seeds: Vec<Modulated> = cfg.solitons.iter().map(|s| Modulated::from_soliton(s, t_start)).collect();
    let mut last_fit_time = t_start;
    let mut tube_exit = None;
    let mut snapshots = Vec::new();
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut residual_norms = Vec::new();

    evolve(&start, t_start, t_end, &icfg, cfg.model, cfg.diag_stride, |t, w| {
        let exact = sample_sum(&cfg.solitons, t, &grid)?;
        let error = (w - &exact).h1l2_norm();
        records.push(diagnostics_record(cfg, t, w, error)?);
        errors.push(error);
        let mut fit = None;
        if tube_exit.is_none() {
            let guess: Vec<Modulated> = seeds.iter().map(|s| s.predict(t - last_fit_time)).collect();
            match fit_modulation(w, cfg.model, &guess, &opts) {
                Ok(state) => {
                    let ups = state.residual.h1l2_norm();
                    if !state.converged || ups > cfg.tube_radius * exact.h1l2_norm() {
                        log::warn!("t = {t}: field left the modulation tube (‖Υ‖ = {ups:.3e})");
                        tube_exit = Some(t);
                    } else {
                        seeds = state.solitons.clone();
                        last_fit_time = t;
                        fit = Some(state);
                    }
                }
                Err(Error::NotInTube { reason, .. }) => {
                    log::warn!("t = {t}: modulation fit lost: {reason}");
                    tube_exit = Some(t);
                }
                Err(Error::Degenerate(c)) => {
                    log::warn!("t = {t}: degenerate modulation Jacobian (condition {c:.3e})");
                    tube_exit = Some(t);
                }
                Err(e) => return Err(e),
            }
        }
        residual_norms.push(fit.as_ref().map(|s: &ModulationState| s.residual.h1l2_norm()));
        snapshots.push(Snapshot { time: t, field: w.clone(), fit });
        Ok(())
    })?;

    let times: Vec<f64> = records.iter().map(|r| r.time).collect();
    let first = records.first().cloned().ok_or(Error::NonFinite)?;
    let charge_drifts = records
        .iter()
        .map(|r| r.local_charge.iter().zip(&first.local_charge).map(|(a, b)| (a - b).abs()).collect())
        .collect();
    let action_drifts = records.iter().map(|r| (r.localized_action - first.localized_action).abs()).collect();
    let window = if t_end < t_start { cfg.fit_window() } else { cfg.fit_window.unwrap_or((t_start, t_end)) };
    let (fx, fy): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&errors)
        .filter(|(t, _)| **t >= window.0 - 1e-9 && **t <= window.1 + 1e-9)
        .map(|(&t, &e)| (t, e))
        .unzip();
    Ok(DecayReport {
        fitted: log_linear_fit(&fx, &fy),
        times,
        errors,
        records,
        residual_norms,
        fit_window: window,
        reference_rate: cfg.reference_rate(),
        proof_ceiling: cfg.proof_ceiling(),
        charge_drifts,
        action_drifts,
        tube_exit,
        snapshots,
    })
}

/// Sets `U(Tⁿ) = Σ R_j(Tⁿ)` and integrates backward to `T₀`.
pub fn run_backward_construction(cfg: &MultiSolitonConfig) -> Result<DecayReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let start = sample_sum(&cfg.solitons, cfg.t_final, &grid)?;
    run_pipeline(cfg, start, cfg.t_final, cfg.t_initial)
}

/// Smooth random perturbation with `‖·‖_{H¹×L²} = amplitude`, localized near
/// the soliton centers at time `t`. Deterministic in `seed`.
pub fn seeded_perturbation(cfg: &MultiSolitonConfig, t: f64, amplitude: f64, seed: u64) -> Result<Field64> {
    let grid = cfg.grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bumps = Vec::new();
    for s in &cfg.solitons {
        for _ in 0..4 {
            let center = s.x0 + s.v * t + rng.gen_range(-3.0..3.0);
            let width: f64 = rng.gen_range(1.0..3.0);
            let a1 = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let a2 = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            bumps.push((center, width, a1, a2));
        }
    }
    let shape = |x: f64, c: f64, w: f64| (-(grid.wrap(x - c) / w).powi(2)).exp();
    let w = Field::from_fn(
        grid.clone(),
        |x| bumps.iter().map(|&(c, wd, a, _)| a * shape(x, c, wd)).sum(),
        |x| bumps.iter().map(|&(c, wd, _, b)| b * shape(x, c, wd)).sum(),
    );
    let norm = w.h1l2_norm();
    if !(norm > 0.0) {
        return Ok(w);
    }
    Ok(&w * (amplitude / norm))
}

/// Forward evolution of `R(T₀)` plus a seeded perturbation of the given size.
pub fn run_forward_stability(cfg: &MultiSolitonConfig, amplitude: f64, seed: u64) -> Result<DecayReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let mut start = sample_sum(&cfg.solitons, cfg.t_initial, &grid)?;
    if amplitude != 0.0 {
        start.axpy(1.0, &seeded_perturbation(cfg, cfg.t_initial, amplitude, seed)?);
    }
    run_pipeline(cfg, start, cfg.t_initial, cfg.t_final)
}

/// Re-evolves `U(T₀)` forward to `Tⁿ`; returns `‖U(Tⁿ) - R(Tⁿ)‖ / ‖R(Tⁿ)‖`.
pub fn replay_error(cfg: &MultiSolitonConfig, at_initial: &Field64) -> Result<f64> {
    let grid = at_initial.grid().clone();
    let out = evolve(at_initial, cfg.t_initial, cfg.t_final, &cfg.integrator()?, cfg.model, 0, |_, _| Ok(()))?;
    let target = sample_sum(&cfg.solitons, cfg.t_final, &grid)?;
    Ok((&out - &target).h1l2_norm() / target.h1l2_norm())
}

/// Interaction integrals between solitons `j < k` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairInteraction {
    pub j: usize,
    pub k: usize,
    /// `∫|R_j R_k|`.
    pub product: f64,
    /// `∫|R_j ∂R_k|`.
    pub value_gradient: f64,
    /// `∫|∂R_j ∂R_k|`.
    pub gradient_product: f64,
    /// `∫|R_j| φ_k` with `φ_k` the partition weight of soliton `k`.
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionReport {
    pub time: f64,
    pub pairs: Vec<PairInteraction>,
    /// `∫ ||R|^{p+1} - Σ|R_l|^{p+1}|`.
    pub nonlinear_cross: f64,
}

/// Quadrature of the pairwise interaction integrals of the exact solitons at time `t`.
/// Products use the position components.
pub fn measure_interactions(cfg: &MultiSolitonConfig, t: f64) -> Result<InteractionReport> {
    let v_star = cfg.v_star().ok_or_else(|| Error::param("solitons", "interactions need at least two solitons"))?;
    let t_min = (4.0 / (v_star * v_star)).max(1.0);
    if t < t_min {
        return Err(Error::param("t", format!("interaction estimates need t ≥ max(4/v★², 1) = {t_min}, got {t}")));
    }
    let grid = cfg.grid()?;
    let h = grid.spacing();
    let fields: Vec<Field64> = cfg.solitons.iter().map(|s| sample_soliton(s, t, &grid)).collect::<Result<_>>()?;
    let grads: Vec<Vec<Complex<f64>>> = fields.iter().map(|f| grid.derivative(&f.u1)).collect::<Result<_>>()?;
    let cp = build_cutoffs(&cfg.velocities(), t, &grid)?;
    let integral = |f: &dyn Fn(usize) -> f64| (0..grid.points()).map(f).sum::<f64>() * h;
    let mut pairs = Vec::new();
    for j in 0..fields.len() {
        for k in j + 1..fields.len() {
            let (a, b) = (&fields[j].u1, &fields[k].u1);
            let (da, db) = (&grads[j], &grads[k]);
            let va = integral(&|i| a[i].norm() * db[i].norm());
            let vb = integral(&|i| b[i].norm() * da[i].norm());
            pairs.push(PairInteraction {
                j,
                k,
                product: integral(&|i| a[i].norm() * b[i].norm()),
                value_gradient: va.max(vb),
                gradient_product: integral(&|i| da[i].norm() * db[i].norm()),
                weighted: integral(&|i| a[i].norm() * cp.weights[k][i]),
            });
        }
    }
    let p1 = cfg.model.p + 1.0;
    let nonlinear_cross = integral(&|i| {
        let total: Complex<f64> = fields.iter().map(|f| f.u1[i]).sum();
        let separate: f64 = fields.iter().map(|f| f.u1[i].norm().powf(p1)).sum();
        (total.norm().powf(p1) - separate).abs()
    });
    Ok(InteractionReport { time: t, pairs, nonlinear_cross })
}

#[derive(Debug, Clone)]
pub struct InteractionDecay {
    pub reports: Vec<InteractionReport>,
    /// Log-linear fit of `∫|R_j R_k|` against `t`, one per pair in report order.
    pub product_fits: Vec<Option<LineFit>>,
    pub weighted_fits: Vec<Option<LineFit>>,
    pub nonlinear_fit: Option<LineFit>,
    /// `(1/4)√(m - ω★²)v★`, the rate the proof derives before relaxing it.
    pub proof_rate: f64,
}

pub fn interaction_decay(cfg: &MultiSolitonConfig, times: &[f64]) -> Result<InteractionDecay> {
    let reports: Vec<InteractionReport> = times.iter().map(|&t| measure_interactions(cfg, t)).collect::<Result<_>>()?;
    let npairs = reports.first().map_or(0, |r| r.pairs.len());
    let series = |f: &dyn Fn(&PairInteraction) -> f64| -> Vec<Option<LineFit>> {
        (0..npairs)
            .map(|p| {
                let ys: Vec<f64> = reports.iter().map(|r| f(&r.pairs[p])).collect();
                log_linear_fit(times, &ys)
            })
            .collect()
    };
    let nl: Vec<f64> = reports.iter().map(|r| r.nonlinear_cross).collect();
    Ok(InteractionDecay {
        product_fits: series(&|p| p.product),
        weighted_fits: series(&|p| p.weighted),
        nonlinear_fit: log_linear_fit(times, &nl),
        proof_rate: 0.25 * cfg.decay_scale().unwrap_or(0.0),
        reports,
    })
}

/// Both sides of `∂t Im∫u1 ū2 φ = Im∫∂u1 ū1 φ'` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub time: f64,
    /// Centered time difference over one integrator step each way.
    pub lhs: f64,
    /// Quadrature of the flux.
    pub rhs: f64,
}

impl IdentityCheck {
    pub fn relative_mismatch(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.rhs.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone)]
pub struct ConservationAudit {
    /// Largest `|X(t) - X(t_start)|` for `X = E, Q, P`, relative to `Σ_j |X_j(t_start)|`
    /// (the localized values), which stays meaningful when the total cancels.
    pub energy_drift: f64,
    pub charge_drift: f64,
    pub momentum_drift: f64,
    /// `(t, |d𝒮/dt|)` by centered differences of the localized action.
    pub action_rates: Vec<(f64, f64)>,
    pub identity: Vec<IdentityCheck>,
    /// Set when the diagnostic interval is too coarse for meaningful differencing.
    pub coarse_stride: bool,
}

fn relative_drift(values: impl Iterator<Item = f64> + Clone, parts: &[f64]) -> f64 {
    let first = values.clone().next().unwrap_or(0.0);
    let scale = parts.iter().map(|x| x.abs()).sum::<f64>().max(first.abs());
    let scale = if scale == 0.0 { 1.0 } else { scale };
    values.map(|x| (x - first).abs() / scale).fold(0.0, f64::max)
}

/// Smooth weight `½(1 + tanh((x - c)/w))` and its derivative.
fn tanh_weight(grid: &Grid<f64>, center: f64, width: f64) -> (Vec<f64>, Vec<f64>) {
    (0..grid.points())
        .map(|i| {
            let s = grid.wrap(grid.position(i) - center) / width;
            let th = s.tanh();
            (0.5 * (1.0 + th), 0.5 * (1.0 - th * th) / width)
        })
        .unzip()
}

fn weighted_charge(w: &Field64, weight: &[f64]) -> f64 {
    w.u1.iter().zip(&w.u2).zip(weight).map(|((a, b), f)| f * (a.im * b.re - a.re * b.im)).sum::<f64>() * w.grid().spacing()
}

/// Global drifts, localized-action rates, and the local charge identity checked
/// at up to `identity_samples` snapshots with a weight centered on the last soliton.
pub fn almost_conservation_audit(
    cfg: &MultiSolitonConfig,
    report: &DecayReport,
    identity_samples: usize,
) -> Result<ConservationAudit> {
    let recs = &report.records;
    let first = recs.first().ok_or_else(|| Error::param("report", "no diagnostics recorded"))?;
    let energy_drift = relative_drift(recs.iter().map(|r| r.energy), &first.local_energy);
    let charge_drift = relative_drift(recs.iter().map(|r| r.charge), &first.local_charge);
    let momentum_drift = relative_drift(recs.iter().map(|r| r.momentum), &first.local_momentum);
    let mut action_rates = Vec::new();
    for i in 1..recs.len().saturating_sub(1) {
        let dt = recs[i + 1].time - recs[i - 1].time;
        action_rates.push((recs[i].time, ((recs[i + 1].localized_action - recs[i - 1].localized_action) / dt).abs()));
    }
    let interval = cfg.diag_stride as f64 * cfg.dt;
    let coarse_stride = interval > 0.25;
    if coarse_stride {
        log::warn!("diagnostic interval {interval} is coarse; localized-action rates are dominated by differencing error");
    }

    let mut identity = Vec::new();
    let n = report.snapshots.len();
    if identity_samples > 0 && n > 2 {
        let grid = cfg.grid()?;
        let icfg = cfg.integrator()?;
        let mut fwd = Stepper::new(grid.clone(), cfg.model, &icfg)?;
        let mut back = Stepper::new(grid.clone(), cfg.model, &icfg.reversed())?;
        let last = cfg.solitons.last().expect("validated non-empty");
        let picks = identity_samples.min(n - 2);
        for s in 0..picks {
            let snap = &report.snapshots[1 + s * (n - 2) / picks];
            let t = snap.time;
            let (weight, dweight) = tanh_weight(&grid, last.x0 + last.v * t, 2.0);
            let (mut plus, mut minus) = (snap.field.clone(), snap.field.clone());
            fwd.advance(&mut plus, 1, t)?;
            back.advance(&mut minus, 1, t)?;
            let lhs = (weighted_charge(&plus, &weight) - weighted_charge(&minus, &weight)) / (2.0 * cfg.dt);
            let du1 = grid.derivative(&snap.field.u1)?;
            let rhs = du1
                .iter()
                .zip(&snap.field.u1)
                .zip(&dweight)
                .map(|((d, u), f)| f * (d.im * u.re - d.re * u.im))
                .sum::<f64>()
                * grid.spacing();
            identity.push(IdentityCheck { time: t, lhs, rhs });
        }
    }
    Ok(ConservationAudit { energy_drift, charge_drift, momentum_drift, action_rates, identity, coarse_stride })
}

/// Terms of the second-order expansion of the localized action at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorSample {
    pub time: f64,
    /// `𝒮(t, U)`.
    pub direct: f64,
    /// `Σ_j S_j(R_j)` with the global action of each soliton; time independent.
    pub constant: f64,
    /// `𝒮(t, R̃) - constant`: interaction tails plus the frequency mismatch.
    pub interaction_tail: f64,
    /// `⟨𝒮'(R̃), Υ⟩`, small by orthogonality.
    pub linear: f64,
    /// `ℋ(Υ, Υ) = Σ_j ⟨S_j''(R̃_j)Υ, Υ⟩`.
    pub hessian: f64,
    /// `𝒮(U) - 𝒮(R̃) - ⟨𝒮'(R̃), Υ⟩ - ½ℋ(Υ, Υ)`, evaluated without forming the difference of actions.
    pub remainder: f64,
    /// `𝒮(U) - constant - ℋ(Υ, Υ)`, the expansion with a unit coefficient on the hessian.
    pub unit_coefficient_remainder: f64,
    pub upsilon_norm_sq: f64,
}

impl TaylorSample {
    /// `ℋ(Υ, Υ) / ‖Υ‖²_{H¹×L²}`.
    pub fn coercivity_ratio(&self) -> f64 {
        self.hessian / self.upsilon_norm_sq
    }
}

/// Evaluates both sides of the expansion at every snapshot with a fit.
pub fn taylor_expansion_audit(cfg: &MultiSolitonConfig, report: &DecayReport) -> Result<Vec<TaylorSample>> {
    let params = cfg.action_params();
    let mut out = Vec::new();
    for snap in &report.snapshots {
        let Some(fit) = &snap.fit else { continue };
        let grid = snap.field.grid();
        let t = snap.time;
        let cp = build_cutoffs(&cfg.velocities(), t, grid)?;
        let bases: Vec<Field64> = fit.solitons.iter().map(|s| s.field(cfg.model, grid)).collect::<Result<_>>()?;
        let mut tilde = Field::zeros(grid.clone());
        for b in &bases {
            tilde.axpy(1.0, b);
        }
        let constant = cfg
            .solitons
            .iter()
            .zip(&params)
            .map(|(s, ap)| sample_soliton(s, t, grid).map(|r| action(&r, ap)))
            .sum::<Result<f64>>()?;
        let direct = localized_quantities(&snap.field, &cp, &params)?.action;
        let tilde_action = localized_quantities(&tilde, &cp, &params)?.action;
        let ups = &fit.residual;
        let linear = localized_gradient_pairing(&tilde, ups, &cp, &params)?;
        let hessian = localized_hessian(ups, &bases, &cp, &params)?;
        out.push(TaylorSample {
            time: t,
            direct,
            constant,
            interaction_tail: tilde_action - constant,
            linear,
            hessian,
            remainder: localized_taylor_remainder(&tilde, ups, &bases, &cp, &params)?,
            unit_coefficient_remainder: direct - constant - hessian,
            upsilon_norm_sq: ups.h1l2_norm_sq(),
        });
    }
    Ok(out)
}
