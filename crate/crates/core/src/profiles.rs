//! Ground states `φ_ω`, the boosted profile `Φ_{ω,v}` and exact solitons.
//!
//! In one dimension the ground state is known in closed form,
//! `φ̃(x) = ((p+1)/2)^{1/(p-1)} sech^{2/(p-1)}((p-1)x/2)`, and
//! `φ_ω(x) = (m-ω²)^{1/(p-1)} φ̃(√(m-ω²) x)`. Radial profiles in `d = 2, 3`
//! come from a shooting method on `φ'' + (d-1)/r φ' = (m-ω²)φ - φ^p`.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::params::{lorentz_gamma, ModelParams, SolitonParams};
use crate::scalar::Real;

/// Tail ratios `φ(L/2)/φ(0)` above this are rejected outright.
pub const TAIL_REJECT: f64 = 1e-6;
/// Tail ratios above this (but below [`TAIL_REJECT`]) only produce a warning.
pub const TAIL_WARN: f64 = 1e-12;

/// How a ground state is evaluated off its sample points.
#[derive(Debug, Clone)]
enum Shape {
    ClosedForm,
    Tabulated(RadialTable),
}

/// Sampled radial ground state `φ_ω` together with its quality metrics.
#[derive(Debug, Clone)]
pub struct GroundState<T: Real> {
    pub model: ModelParams,
    pub omega: f64,
    /// Sample locations: grid positions in 1D, radii for shooting profiles.
    pub coords: Vec<T>,
    pub samples: Vec<T>,
    /// Discrete sup norm of `-Δφ + (m-ω²)φ - φ^p`.
    pub residual: f64,
    /// `φ` at the edge of the sampled region divided by `φ(0)`.
    pub tail_ratio: f64,
    shape: Shape,
}

impl<T: Real> GroundState<T> {
    /// `m - ω²`.
    pub fn mu(&self) -> f64 {
        self.model.m - self.omega * self.omega
    }

    pub fn central_value(&self) -> f64 {
        self.value_at(0.0)
    }

    /// `φ_ω(r)` for any `r ≥ 0` (negative arguments are reflected).
    pub fn value_at(&self, r: f64) -> f64 {
        match &self.shape {
            Shape::ClosedForm => closed_form(self.model.p, self.mu(), r).0,
            Shape::Tabulated(t) => t.eval(r.abs()).0,
        }
    }

    /// `φ_ω'(r)`, odd in `r`.
    pub fn derivative_at(&self, r: f64) -> f64 {
        match &self.shape {
            Shape::ClosedForm => closed_form(self.model.p, self.mu(), r).1,
            Shape::Tabulated(t) => r.signum() * t.eval(r.abs()).1,
        }
    }

    /// Least-squares slope of `log φ` against `|x|` over the outer quarter of the samples.
    pub fn tail_slope(&self) -> f64 {
        let rmax = self.coords.iter().fold(0.0f64, |a, c| a.max(c.as_f64().abs()));
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (c, s) in self.coords.iter().zip(&self.samples) {
            let (r, v) = (c.as_f64().abs(), s.as_f64());
            if r >= 0.75 * rmax && v > f64::MIN_POSITIVE {
                xs.push(r);
                ys.push(v.ln());
            }
        }
        crate::fit::linear_fit(&xs, &ys).map(|f| f.slope).unwrap_or(f64::NAN)
    }

    /// `‖φ‖₂²` by quadrature on the 1D samples.
    pub fn l2_norm_sq_1d(&self) -> f64 {
        let h = spacing_of(&self.coords);
        self.samples.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() * h
    }
}

fn spacing_of<T: Real>(coords: &[T]) -> f64 {
    if coords.len() < 2 {
        return 0.0;
    }
    (coords[1] - coords[0]).as_f64()
}

fn sech(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

/// Value and derivative of the scaled closed-form profile.
fn closed_form(p: f64, mu: f64, x: f64) -> (f64, f64) {
    let q = 2.0 / (p - 1.0);
    let amp = ((p + 1.0) / 2.0).powf(1.0 / (p - 1.0)) * mu.powf(1.0 / (p - 1.0));
    let k = mu.sqrt();
    let z = 0.5 * (p - 1.0) * k * x;
    let s = sech(z).powf(q);
    (amp * s, -amp * k * s * z.tanh())
}

fn check_tail(ratio: f64, what: &str) -> Result<()> {
    if ratio > TAIL_REJECT {
        return Err(Error::DomainTooSmall { tail_ratio: ratio, limit: TAIL_REJECT });
    }
    if ratio > TAIL_WARN {
        // Fits and spectra rebuild profiles many times; say it once.
        static WARNED: AtomicBool = AtomicBool::new(false);
        if WARNED.swap(true, Ordering::Relaxed) {
            log::debug!("{what}: tail ratio {ratio:.2e} above {TAIL_WARN:.0e}");
        } else {
            log::warn!("{what}: tail ratio {ratio:.2e} above {TAIL_WARN:.0e}; consider a longer domain");
        }
    }
    Ok(())
}

/// Closed-form 1D ground state sampled on `grid`.
pub fn ground_state_1d<T: Real>(model: ModelParams, omega: f64, grid: &Grid<T>) -> Result<GroundState<T>> {
    if model.d != 1 {
        return Err(Error::param("d", "the closed-form ground state is one-dimensional"));
    }
    model.check_frequency(omega)?;
    let mu = model.m - omega * omega;
    let p = model.p;
    let coords = grid.positions();
    let samples: Vec<T> = coords.iter().map(|x| T::lit(closed_form(p, mu, x.as_f64()).0)).collect();

    let half = 0.5 * grid.length().as_f64();
    let tail_ratio = closed_form(p, mu, half).0 / closed_form(p, mu, 0.0).0;
    check_tail(tail_ratio, "ground state")?;

    let complex: Vec<Complex<T>> = samples.iter().map(|&v| Complex::new(v, T::zero())).collect();
    let lap = grid.neg_laplacian(&complex)?;
    let residual = samples
        .iter()
        .zip(&lap)
        .map(|(&v, l)| {
            let v = v.as_f64();
            (l.re.as_f64() + mu * v - v.abs().powf(p - 1.0) * v).abs()
        })
        .fold(0.0, f64::max);

    Ok(GroundState { model, omega, coords, samples, residual, tail_ratio, shape: Shape::ClosedForm })
}

/// Shooting outcome for one trial central value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    /// Crossed zero: the central value was too large.
    Over,
    /// Turned upward while positive: the central value was too small.
    Under,
    /// Reached `rmax` without deciding.
    Neither,
}

struct Radial {
    mu: f64,
    p: f64,
    d: f64,
}

impl Radial {
    fn accel(&self, r: f64, phi: f64, dphi: f64) -> f64 {
        let f = self.mu * phi - phi.abs().powf(self.p - 1.0) * phi;
        if r == 0.0 {
            f / self.d
        } else {
            f - (self.d - 1.0) / r * dphi
        }
    }

    /// RK4 from `r = 0`; returns the outcome and the trajectory up to the stopping point.
    fn shoot(&self, phi0: f64, h: f64, n: usize, keep: bool) -> (Shot, Vec<(f64, f64)>) {
        let mut y = (phi0, 0.0);
        let mut path = Vec::with_capacity(if keep { n + 1 } else { 0 });
        if keep {
            path.push(y);
        }
        for i in 0..n {
            let r = i as f64 * h;
            let k1 = (y.1, self.accel(r, y.0, y.1));
            let y2 = (y.0 + 0.5 * h * k1.0, y.1 + 0.5 * h * k1.1);
            let k2 = (y2.1, self.accel(r + 0.5 * h, y2.0, y2.1));
            let y3 = (y.0 + 0.5 * h * k2.0, y.1 + 0.5 * h * k2.1);
            let k3 = (y3.1, self.accel(r + 0.5 * h, y3.0, y3.1));
            let y4 = (y.0 + h * k3.0, y.1 + h * k3.1);
            let k4 = (y4.1, self.accel(r + h, y4.0, y4.1));
            y = (
                y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            );
            if keep {
                path.push(y);
            }
            if !y.0.is_finite() || y.0 < 0.0 {
                return (Shot::Over, path);
            }
            if y.1 > 0.0 {
                return (Shot::Under, path);
            }
        }
        (Shot::Neither, path)
    }
}

/// Decaying solution of `Δg = μ g` in `d` dimensions, from the large-argument
/// expansion of `r^{-(d-2)/2} K_ν(√μ r)`, `ν = |d-2|/2`.
#[derive(Debug, Clone, Copy)]
struct Tail {
    amp: f64,
    k: f64,
    d: f64,
}

impl Tail {
    fn shape(&self, r: f64) -> (f64, f64) {
        let nu = (self.d - 2.0).abs() / 2.0;
        let z = self.k * r;
        // Asymptotic series Σ a_j z^{-j}; terminates for half-integer ν.
        let mut term = 1.0;
        let (mut s, mut ds) = (1.0, 0.0);
        for j in 1..12 {
            let c = (4.0 * nu * nu - ((2 * j - 1) as f64).powi(2)) / (8.0 * j as f64);
            let next = term * c / z;
            if next == 0.0 || next.abs() > term.abs() {
                break;
            }
            term = next;
            s += term;
            ds -= j as f64 * term / z;
        }
        let g = r.powf(-(self.d - 1.0) / 2.0) * (-z).exp() * s;
        let log_slope = -(self.d - 1.0) / (2.0 * r) - self.k + self.k * ds / s;
        (g, g * log_slope)
    }

    fn eval(&self, r: f64) -> (f64, f64) {
        let (g, dg) = self.shape(r);
        (self.amp * g, self.amp * dg)
    }
}

/// Tabulated shooting profile with a spliced analytic tail.
#[derive(Debug, Clone)]
struct RadialTable {
    h: f64,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    tail: Tail,
    tail_from: f64,
}

impl RadialTable {
    /// Cubic Hermite interpolation inside the table, analytic tail beyond it.
    fn eval(&self, r: f64) -> (f64, f64) {
        let last = (self.phi.len() - 1) as f64 * self.h;
        if r >= self.tail_from || r >= last {
            return self.tail.eval(r);
        }
        let pos = r / self.h;
        let i = (pos.floor() as usize).min(self.phi.len() - 2);
        let t = pos - i as f64;
        let (y0, y1) = (self.phi[i], self.phi[i + 1]);
        let (m0, m1) = (self.dphi[i] * self.h, self.dphi[i + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let dv = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / self.h;
        (v, dv)
    }
}

/// Level (relative to `φ(0)`) at which the shooting trajectory hands over to the tail.
const SPLICE_LEVEL: f64 = 1e-5;

/// Radial ground state by shooting on `φ(0)`, sampled at `r_i = i·rmax/n`.
pub fn ground_state_radial(model: ModelParams, omega: f64, rmax: f64, n: usize) -> Result<GroundState<f64>> {
    model.check_frequency(omega)?;
    if !(rmax > 0.0) || n < 16 {
        return Err(Error::param("rmax/n", "need rmax > 0 and at least 16 radial samples"));
    }
    let mu = model.m - omega * omega;
    let sys = Radial { mu, p: model.p, d: model.d as f64 };
    let h = rmax / n as f64;

    // Bracket the central value between an undershoot and an overshoot.
    let mut lo = mu.powf(1.0 / (model.p - 1.0)) * (1.0 + 1e-9);
    if sys.shoot(lo, h, n, false).0 != Shot::Under {
        return Err(Error::ShootingFailure("lower bracket does not undershoot".into()));
    }
    let mut hi = 2.0 * lo;
    let mut bracketed = false;
    for _ in 0..64 {
        match sys.shoot(hi, h, n, false).0 {
            Shot::Over => {
                bracketed = true;
                break;
            }
            _ => {
                lo = hi;
                hi *= 2.0;
            }
        }
    }
    if !bracketed {
        return Err(Error::ShootingFailure("no overshooting central value found".into()));
    }
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        match sys.shoot(mid, h, n, false).0 {
            Shot::Over => hi = mid,
            Shot::Under => lo = mid,
            Shot::Neither => {
                lo = mid;
                break;
            }
        }
    }
    if (hi - lo) > 1e-12 * hi {
        log::debug!("shooting stopped with bracket width {:.3e}", hi - lo);
    }
    let phi0 = lo;
    let (_, path) = sys.shoot(phi0, h, n, true);

    // Hand over to the analytic tail once φ is small but still trustworthy.
    let decay_len = 1.0 / mu.sqrt();
    let blend_cells = ((decay_len / h).ceil() as usize).max(4);
    let splice = path
        .iter()
        .position(|&(v, _)| v < SPLICE_LEVEL * phi0)
        .filter(|&i| i + blend_cells < path.len())
        .ok_or_else(|| {
            Error::ShootingFailure(format!(
                "trajectory did not decay to {SPLICE_LEVEL:.0e}·φ(0) before r = {rmax}; enlarge rmax"
            ))
        })?;
    let r_s = splice as f64 * h;
    let mut tail = Tail { amp: 1.0, k: mu.sqrt(), d: sys.d };
    tail.amp = path[splice].0 / tail.shape(r_s).0;
    let width = blend_cells as f64 * h;

    let mut phi = Vec::with_capacity(n + 1);
    let mut dphi = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let r = i as f64 * h;
        if i < splice {
            phi.push(path[i].0);
            dphi.push(path[i].1);
        } else if i < splice + blend_cells {
            let s = (r - r_s) / width;
            let b = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
            let db = 30.0 * s * s * (1.0 - s) * (1.0 - s) / width;
            let (tv, td) = tail.eval(r);
            let (pv, pd) = path[i];
            phi.push((1.0 - b) * pv + b * tv);
            dphi.push((1.0 - b) * pd + b * td + db * (tv - pv));
        } else {
            let (tv, td) = tail.eval(r);
            phi.push(tv);
            dphi.push(td);
        }
    }

    let tail_ratio = phi[n] / phi0;
    if phi[n] >= 1e-10 {
        return Err(Error::DomainTooSmall { tail_ratio, limit: 1e-10 / phi0 });
    }
    for w in phi.windows(2) {
        if !(w[1] < w[0] || (w[1] == 0.0 && w[0] == 0.0)) {
            return Err(Error::ShootingFailure("profile is not radially decreasing".into()));
        }
    }

    let residual = radial_residual(&sys, &phi, h);
    let coords = (0..=n).map(|i| i as f64 * h).collect();
    let table = RadialTable { h, phi: phi.clone(), dphi, tail, tail_from: r_s + width };
    Ok(GroundState {
        model,
        omega,
        coords,
        samples: phi,
        residual,
        tail_ratio,
        shape: Shape::Tabulated(table),
    })
}

/// Fourth-order finite-difference residual of the radial ODE, using the even
/// reflection `φ(-r) = φ(r)` near the origin.
fn radial_residual(sys: &Radial, phi: &[f64], h: f64) -> f64 {
    let n = phi.len();
    let at = |j: isize| phi[j.unsigned_abs()];
    let mut worst = 0.0f64;
    for i in 0..n.saturating_sub(2) {
        let j = i as isize;
        let d2 = (-at(j - 2) + 16.0 * at(j - 1) - 30.0 * at(j) + 16.0 * at(j + 1) - at(j + 2)) / (12.0 * h * h);
        let lap = if i == 0 {
            sys.d * d2
        } else {
            let d1 = (at(j - 2) - 8.0 * at(j - 1) + 8.0 * at(j + 1) - at(j + 2)) / (12.0 * h);
            d2 + (sys.d - 1.0) / (i as f64 * h) * d1
        };
        let v = phi[i];
        let res = -lap + sys.mu * v - v.abs().powf(sys.p - 1.0) * v;
        worst = worst.max(res.abs());
    }
    worst
}

/// Samples `e^{iθ} Φ_{ω,v}(x - center)` from a profile function `φ_ω`.
fn boosted_from<T, F>(profile: F, omega: f64, v: f64, theta: f64, center: f64, grid: &Arc<Grid<T>>) -> Result<Field<T>>
where
    T: Real,
    F: Fn(f64) -> f64,
{
    let gamma = lorentz_gamma(v);
    let length = grid.length().as_f64();
    let n = grid.points();
    let wrap = |x: f64| (x + 0.5 * length).rem_euclid(length) - 0.5 * length;
    let xi: Vec<f64> = (0..n).map(|i| wrap(-0.5 * length + length * i as f64 / n as f64 - center)).collect();
    let g: Vec<Complex<T>> = xi.iter().map(|&s| Complex::new(T::lit(profile(gamma * s)), T::zero())).collect();
    let dg = grid.derivative(&g)?;
    let mut u1 = Vec::with_capacity(n);
    let mut u2 = Vec::with_capacity(n);
    for ((&s, gv), dv) in xi.iter().zip(&g).zip(&dg) {
        let ph = theta - gamma * omega * v * s;
        let e = Complex::new(T::lit(ph.cos()), T::lit(ph.sin()));
        let gv = gv.re;
        u1.push(e * gv);
        let inner = Complex::new(-T::lit(v) * dv.re, T::lit(gamma * omega) * gv);
        u2.push(e * inner);
    }
    Field::new(grid.clone(), u1, u2)
}

fn check_contracted<T: Real>(value: impl Fn(f64) -> f64, v: f64, grid: &Grid<T>) -> Result<()> {
    let edge = lorentz_gamma(v) * 0.5 * grid.length().as_f64();
    check_tail(value(edge) / value(0.0), "boosted profile")
}

/// `Φ_{ω,v}` built from a sampled ground state.
pub fn boost_profile<T: Real>(gs: &GroundState<T>, sp: &SolitonParams, grid: &Arc<Grid<T>>) -> Result<Field<T>> {
    if gs.model != sp.model || gs.omega != sp.omega {
        return Err(Error::param("omega", "ground state and soliton parameters disagree"));
    }
    check_contracted(|r| gs.value_at(r), sp.v, grid)?;
    boosted_from(|r| gs.value_at(r), sp.omega, sp.v, 0.0, 0.0, grid)
}

/// `e^{iθ} Φ_{ω,v}(x - center)` from the 1D closed form, for any admissible `(ω, v)`.
pub fn boosted_soliton<T: Real>(
    model: ModelParams,
    omega: f64,
    v: f64,
    theta: f64,
    center: f64,
    grid: &Arc<Grid<T>>,
) -> Result<Field<T>> {
    if model.d != 1 {
        return Err(Error::param("d", "dynamics are one-dimensional"));
    }
    model.check_frequency(omega)?;
    if !(v.abs() < 1.0) {
        return Err(Error::param("v", format!("|v| must be below 1, got {v}")));
    }
    let mu = model.m - omega * omega;
    let value = |r: f64| closed_form(model.p, mu, r).0;
    check_contracted(value, v, grid)?;
    boosted_from(value, omega, v, theta, center, grid)
}

/// Phase `(ω/γ)t + θ` and center `x0 + vt` of the exact soliton at time `t`.
pub fn soliton_gauge(sp: &SolitonParams, t: f64) -> (f64, f64) {
    (sp.omega / sp.gamma() * t + sp.theta, sp.x0 + sp.v * t)
}

/// The exact soliton `R(t) = e^{i(ω/γ)t+iθ} Φ_{ω,v}(x - vt - x0)`, wrapped onto the torus.
pub fn sample_soliton<T: Real>(sp: &SolitonParams, t: f64, grid: &Arc<Grid<T>>) -> Result<Field<T>> {
    let (phase, center) = soliton_gauge(sp, t);
    boosted_soliton(sp.model, sp.omega, sp.v, phase, center, grid)
}

/// Sum of exact solitons at time `t`.
pub fn sample_sum<T: Real>(solitons: &[SolitonParams], t: f64, grid: &Arc<Grid<T>>) -> Result<Field<T>> {
    let mut total = Field::zeros(grid.clone());
    for sp in solitons {
        total.axpy(T::one(), &sample_soliton(sp, t, grid)?);
    }
    Ok(total)
}

/// Energy of the standing wave per unit `‖φ̃‖₂²` as printed in the collapsed
/// remark formula `(m(p-1) + 2ω²)(m-ω²)^{2/(p-1) - d/2}/(p+1)`. Kept only so
/// the disagreement with quadrature can be reported; never used as a value.
pub fn collapsed_energy_formula(model: ModelParams, omega: f64) -> f64 {
    let (m, p, d) = (model.m, model.p, model.d as f64);
    (m * (p - 1.0) + 2.0 * omega * omega) * (m - omega * omega).powf(2.0 / (p - 1.0) - d / 2.0) / (p + 1.0)
}
