//! Energy, charge, momentum, the action `S = E + (ω/γ)Q + vP`, the Nehari
//! functional, and the localized versions weighted by a moving partition of unity.
//!
//! Gradients are taken with respect to the real pairing `Re ∫ u v̄`, so
//! `Q'(W) = (i u2, -i u1)` and `P'(W) = (-∂u2, ∂u1)`.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::grid::{raw_inner, Field, Grid};
use crate::params::{lorentz_gamma, ModelParams};
use crate::scalar::Real;

/// Coefficients of the action a soliton with frequency `ω` and velocity `v` is critical for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionParams {
    pub omega_over_gamma: f64,
    pub v: f64,
    pub model: ModelParams,
}

impl ActionParams {
    pub fn new(model: ModelParams, omega_over_gamma: f64, v: f64) -> Result<Self> {
        if !(v.abs() < 1.0) {
            return Err(Error::param("v", format!("|v| must be below 1, got {v}")));
        }
        Ok(Self { omega_over_gamma, v, model })
    }

    pub fn for_soliton(model: ModelParams, omega: f64, v: f64) -> Self {
        Self { omega_over_gamma: omega / lorentz_gamma(v), v, model }
    }
}

fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// `Σ |u|^{p+1} h`.
pub fn nonlinear_norm<T: Real>(u: &[Complex<T>], p: f64, grid: &Grid<T>) -> T {
    let p1 = T::lit(p + 1.0);
    u.iter().fold(T::zero(), |acc, z| acc + z.norm().powf(p1)) * grid.spacing()
}

fn im_inner<T: Real>(f: &[Complex<T>], g: &[Complex<T>]) -> T {
    f.iter().zip(g).fold(T::zero(), |acc, (a, b)| acc + a.im * b.re - a.re * b.im)
}

/// `E = ½‖u2‖² + ½‖∂u1‖² + (m/2)‖u1‖² - ‖u1‖_{p+1}^{p+1}/(p+1)`.
pub fn energy<T: Real>(w: &Field<T>, model: ModelParams) -> T {
    let g = w.grid();
    let du1 = g.derivative(&w.u1).expect("field matches grid");
    let half = T::lit(0.5);
    half * (g.norm_sq(&w.u2) + g.norm_sq(&du1) + T::lit(model.m) * g.norm_sq(&w.u1))
        - nonlinear_norm(&w.u1, model.p, g) / T::lit(model.p + 1.0)
}

/// `Q = Im ∫ u1 ū2`.
pub fn charge<T: Real>(w: &Field<T>) -> T {
    im_inner(&w.u1, &w.u2) * w.grid().spacing()
}

/// `P = Re ∫ ∂u1 ū2`.
pub fn momentum<T: Real>(w: &Field<T>) -> T {
    let g = w.grid();
    let du1 = g.derivative(&w.u1).expect("field matches grid");
    raw_inner(&du1, &w.u2) * g.spacing()
}

pub fn action<T: Real>(w: &Field<T>, ap: &ActionParams) -> T {
    energy(w, ap.model) + T::lit(ap.omega_over_gamma) * charge(w) + T::lit(ap.v) * momentum(w)
}

/// `S'(W)`: the left-hand sides of the profile system
/// `-∂²w1 + m w1 - |w1|^{p-1}w1 + i(ω/γ)w2 - v∂w2` and `w2 - i(ω/γ)w1 + v∂w1`.
pub fn action_gradient<T: Real>(w: &Field<T>, ap: &ActionParams) -> Field<T> {
    let g = w.grid();
    let lap = g.neg_laplacian(&w.u1).expect("field matches grid");
    let du1 = g.derivative(&w.u1).expect("field matches grid");
    let du2 = g.derivative(&w.u2).expect("field matches grid");
    let (m, pm1) = (T::lit(ap.model.m), T::lit(ap.model.p - 1.0));
    let (cc, v) = (T::lit(ap.omega_over_gamma), T::lit(ap.v));
    let ic = c(T::zero(), cc);
    let mut out = Field::zeros(g.clone());
    for j in 0..g.points() {
        let u1 = w.u1[j];
        let u2 = w.u2[j];
        out.u1[j] = lap[j] + u1 * m - u1 * u1.norm().powf(pm1) + ic * u2 - du2[j] * v;
        out.u2[j] = u2 - ic * u1 + du1[j] * v;
    }
    out
}

/// Quadratic and nonlinear parts of the Nehari functional `I(W) = ⟨S'(W), W⟩`:
/// `I = quad - nonlin` and `I(sW) = s² quad - s^{p+1} nonlin`.
pub fn nehari_parts<T: Real>(w: &Field<T>, ap: &ActionParams) -> (T, T) {
    let g = w.grid();
    let du1 = g.derivative(&w.u1).expect("field matches grid");
    let two = T::lit(2.0);
    let quad = g.norm_sq(&w.u2)
        + g.norm_sq(&du1)
        + T::lit(ap.model.m) * g.norm_sq(&w.u1)
        + two * T::lit(ap.omega_over_gamma) * charge(w)
        + two * T::lit(ap.v) * momentum(w);
    (quad, nonlinear_norm(&w.u1, ap.model.p, g))
}

pub fn nehari_value<T: Real>(w: &Field<T>, ap: &ActionParams) -> T {
    let (quad, nonlin) = nehari_parts(w, ap);
    quad - nonlin
}

/// Rescales `W` onto the Nehari manifold along its ray: `s★ = (quad/nonlin)^{1/(p-1)}`.
pub fn nehari_project<T: Real>(w: &Field<T>, ap: &ActionParams) -> Result<(T, Field<T>)> {
    let (quad, nonlin) = nehari_parts(w, ap);
    if !(nonlin > T::zero()) || !(quad > T::zero()) {
        return Err(Error::NoProjection);
    }
    let s = (quad / nonlin).powf(T::one() / T::lit(ap.model.p - 1.0));
    Ok((s, w * s))
}

/// `N'(φ)[w] = |φ|^{p-1} w + (p-1)|φ|^{p-3} φ Re(φ w̄)`, the real-linear
/// derivative of `u ↦ |u|^{p-1} u`.
#[inline]
pub(crate) fn nonlinear_derivative<T: Real>(phi: Complex<T>, w: Complex<T>, p: f64) -> Complex<T> {
    let a = phi.norm();
    if a == T::zero() {
        return c(T::zero(), T::zero());
    }
    let q = a.powf(T::lit(p - 1.0));
    let unit = phi / a;
    let proj = unit.re * w.re + unit.im * w.im;
    w * q + unit * (T::lit(p - 1.0) * q * proj)
}

/// `S''(Φ) W`, matrix-free.
pub fn second_variation_apply<T: Real>(phi: &Field<T>, w: &Field<T>, ap: &ActionParams) -> Result<Field<T>> {
    phi.check_compatible(w)?;
    let g = w.grid();
    let lap = g.neg_laplacian(&w.u1)?;
    let dw1 = g.derivative(&w.u1)?;
    let dw2 = g.derivative(&w.u2)?;
    let m = T::lit(ap.model.m);
    let (ic, v) = (c(T::zero(), T::lit(ap.omega_over_gamma)), T::lit(ap.v));
    let mut out = Field::zeros(g.clone());
    for j in 0..g.points() {
        let (w1, w2) = (w.u1[j], w.u2[j]);
        out.u1[j] = lap[j] + w1 * m - nonlinear_derivative(phi.u1[j], w1, ap.model.p) + ic * w2 - dw2[j] * v;
        out.u2[j] = w2 - ic * w1 + dw1[j] * v;
    }
    Ok(out)
}

/// The ramp `ψ(s) = sin²(π(s+1)/4)` on `[-1, 1]`, `0` below and `1` above.
pub fn ramp(s: f64) -> f64 {
    if s <= -1.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        (std::f64::consts::FRAC_PI_4 * (s + 1.0)).sin().powi(2)
    }
}

/// `ψ'(s) = (π/4) sin(π(s+1)/2)` inside the ramp.
pub fn ramp_derivative(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        std::f64::consts::FRAC_PI_4 * (std::f64::consts::FRAC_PI_2 * (s + 1.0)).sin()
    }
}

/// Moving partition of unity `φ_j = ψ_j - ψ_{j+1}`, `φ_N = ψ_N`,
/// with `ψ_1 ≡ 1` and `ψ_j = ψ((x - m_j t)/√t)`.
#[derive(Debug, Clone)]
pub struct CutoffPartition<T: Real> {
    pub velocities: Vec<f64>,
    /// `m_j = ½(v_{j-1} + v_j)` for `j ≥ 2`; the first entry is unused and set to `-∞`.
    pub midpoints: Vec<f64>,
    pub time: f64,
    /// Sampled `φ_j`, one vector per soliton.
    pub weights: Vec<Vec<T>>,
}

impl<T: Real> CutoffPartition<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn build_cutoffs<T: Real>(velocities: &[f64], t: f64, grid: &Grid<T>) -> Result<CutoffPartition<T>> {
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    if velocities.is_empty() {
        return Err(Error::param("velocities", "need at least one velocity"));
    }
    if velocities.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("velocities", "must be strictly increasing"));
    }
    let n = velocities.len();
    let mut midpoints = vec![f64::NEG_INFINITY];
    midpoints.extend(velocities.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let sqrt_t = t.sqrt();
    let xs: Vec<f64> = (0..grid.points()).map(|i| grid.position(i).as_f64()).collect();
    let psi: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            if j == 0 {
                vec![1.0; xs.len()]
            } else {
                xs.iter().map(|&x| ramp((x - midpoints[j] * t) / sqrt_t)).collect()
            }
        })
        .collect();
    let weights = (0..n)
        .map(|j| {
            (0..xs.len())
                .map(|i| T::lit(if j + 1 < n { psi[j][i] - psi[j + 1][i] } else { psi[j][i] }))
                .collect()
        })
        .collect();
    Ok(CutoffPartition { velocities: velocities.to_vec(), midpoints, time: t, weights })
}

/// Localized energies, charges and momenta, plus the localized action
/// `𝒮 = Σ_j E_j + (ω_j/γ_j) Q_j + v_j P_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedQuantities<T> {
    pub energy: Vec<T>,
    pub charge: Vec<T>,
    pub momentum: Vec<T>,
    pub action: T,
}

pub fn localized_quantities<T: Real>(
    w: &Field<T>,
    cp: &CutoffPartition<T>,
    params: &[ActionParams],
) -> Result<LocalizedQuantities<T>> {
    if params.len() != cp.len() {
        return Err(Error::CountMismatch { what: "action parameters per cutoff", expected: cp.len(), found: params.len() });
    }
    let g = w.grid();
    let du1 = g.derivative(&w.u1)?;
    let h = g.spacing();
    let (half, p1) = (T::lit(0.5), T::lit(params.first().map_or(3.0, |a| a.model.p) + 1.0));
    let mut out = LocalizedQuantities { energy: vec![], charge: vec![], momentum: vec![], action: T::zero() };
    for (weight, ap) in cp.weights.iter().zip(params) {
        let m = T::lit(ap.model.m);
        let (mut e, mut q, mut pm) = (T::zero(), T::zero(), T::zero());
        for i in 0..g.points() {
            let (u1, u2, d1, f) = (w.u1[i], w.u2[i], du1[i], weight[i]);
            let a = u1.norm();
            e = e + f * (half * (u2.norm_sqr() + d1.norm_sqr() + m * a * a) - a.powf(p1) / p1);
            q = q + f * (u1.im * u2.re - u1.re * u2.im);
            pm = pm + f * (d1.re * u2.re + d1.im * u2.im);
        }
        let (e, q, pm) = (e * h, q * h, pm * h);
        out.action = out.action + e + T::lit(ap.omega_over_gamma) * q + T::lit(ap.v) * pm;
        out.energy.push(e);
        out.charge.push(q);
        out.momentum.push(pm);
    }
    Ok(out)
}

/// Localized Hessian `Σ_j ⟨S_j''(B_j) Υ, Υ⟩`, where `S_j` carries the weight
/// `φ_j` in every integral and `B_j` is the base point of soliton `j`.
pub fn localized_hessian<T: Real>(
    upsilon: &Field<T>,
    bases: &[Field<T>],
    cp: &CutoffPartition<T>,
    params: &[ActionParams],
) -> Result<T> {
    if params.len() != cp.len() || bases.len() != cp.len() {
        return Err(Error::CountMismatch { what: "hessian terms per cutoff", expected: cp.len(), found: params.len().min(bases.len()) });
    }
    let g = upsilon.grid();
    let dy = g.derivative(&upsilon.u1)?;
    let h = g.spacing();
    let mut total = T::zero();
    for ((weight, ap), base) in cp.weights.iter().zip(params).zip(bases) {
        upsilon.check_compatible(base)?;
        let (m, pm1) = (T::lit(ap.model.m), T::lit(ap.model.p - 1.0));
        let two = T::lit(2.0);
        let (cc, v) = (T::lit(ap.omega_over_gamma), T::lit(ap.v));
        let mut acc = T::zero();
        for i in 0..g.points() {
            let (y1, y2, d1, f) = (upsilon.u1[i], upsilon.u2[i], dy[i], weight[i]);
            let b = base.u1[i];
            let a = b.norm();
            let nl = if a == T::zero() {
                T::zero()
            } else {
                let q = a.powf(pm1);
                let proj = (b.re * y1.re + b.im * y1.im) / a;
                q * (y1.norm_sqr() + pm1 * proj * proj)
            };
            let quad = y2.norm_sqr() + d1.norm_sqr() + m * y1.norm_sqr() - nl;
            let q_part = y1.im * y2.re - y1.re * y2.im;
            let p_part = d1.re * y2.re + d1.im * y2.im;
            acc = acc + f * (quad + two * cc * q_part + two * v * p_part);
        }
        total = total + acc * h;
    }
    Ok(total)
}

/// First variation `⟨𝒮'(B), Y⟩` of the localized action, evaluated pointwise
/// from the integrand so no integration by parts against the weights is needed.
pub fn localized_gradient_pairing<T: Real>(
    base: &Field<T>,
    dir: &Field<T>,
    cp: &CutoffPartition<T>,
    params: &[ActionParams],
) -> Result<T> {
    if params.len() != cp.len() {
        return Err(Error::CountMismatch { what: "action parameters per cutoff", expected: cp.len(), found: params.len() });
    }
    base.check_compatible(dir)?;
    let g = base.grid();
    let db = g.derivative(&base.u1)?;
    let dy = g.derivative(&dir.u1)?;
    let mut total = T::zero();
    for (weight, ap) in cp.weights.iter().zip(params) {
        let (m, pm1) = (T::lit(ap.model.m), T::lit(ap.model.p - 1.0));
        let (cc, v) = (T::lit(ap.omega_over_gamma), T::lit(ap.v));
        let mut acc = T::zero();
        for i in 0..g.points() {
            let (b1, b2, y1, y2) = (base.u1[i], base.u2[i], dir.u1[i], dir.u2[i]);
            let re = |a: Complex<T>, b: Complex<T>| a.re * b.re + a.im * b.im;
            let im = |a: Complex<T>, b: Complex<T>| a.im * b.re - a.re * b.im;
            let e = re(db[i], dy[i]) + (m - b1.norm().powf(pm1)) * re(b1, y1) + re(b2, y2);
            let q = im(y1, b2) + im(b1, y2);
            let p = re(dy[i], b2) + re(db[i], y2);
            acc = acc + weight[i] * (e + cc * q + v * p);
        }
        total = total + acc * g.spacing();
    }
    Ok(total)
}

/// `(A + s)^q - A^q - q A^{q-1} s - ½ q(q-1) A^{q-2} s²` without cancellation for small `s/A`.
fn power_tail(a2: f64, s: f64, q: f64) -> f64 {
    let x = s / a2;
    if x.abs() < 0.5 {
        let (mut coef, mut pow, mut sum) = (q * (q - 1.0) / 2.0, x * x, 0.0);
        for k in 3..200 {
            coef *= (q - (k - 1) as f64) / k as f64;
            pow *= x;
            let term = coef * pow;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() || coef == 0.0 {
                break;
            }
        }
        a2.powf(q) * sum
    } else {
        a2.powf(q) * ((1.0 + x).powf(q) - 1.0 - q * x - 0.5 * q * (q - 1.0) * x * x)
    }
}

/// `|b|^{p-1}|y|² + (p-1)|b|^{p-3}(Re b ȳ)²`, the second derivative of `|u|^{p+1}/(p+1)`.
fn nonlinear_hessian(b: Complex<f64>, y: Complex<f64>, p: f64) -> f64 {
    let a = b.norm();
    if a == 0.0 {
        return 0.0;
    }
    let proj = (b.re * y.re + b.im * y.im) / a;
    a.powf(p - 1.0) * (y.norm_sqr() + (p - 1.0) * proj * proj)
}

/// Beyond-quadratic part of `|a + y|^{p+1}/(p+1)` around `a`.
fn nonlinear_cubic_remainder(a: Complex<f64>, y: Complex<f64>, p: f64) -> f64 {
    let (a2, y2) = (a.norm_sqr(), y.norm_sqr());
    let r = a.re * y.re + a.im * y.im;
    let p1 = p + 1.0;
    if a2 == 0.0 {
        return y2.powf(0.5 * p1) / p1;
    }
    if y2 > 0.25 * a2 {
        return ((a + y).norm().powf(p1) - a2.powf(0.5 * p1)) / p1 - a2.powf(0.5 * (p - 1.0)) * r
            - 0.5 * nonlinear_hessian(a, y, p);
    }
    let s = 2.0 * r + y2;
    power_tail(a2, s, 0.5 * p1) / p1 + (p - 1.0) / 8.0 * a2.powf(0.5 * (p - 3.0)) * (4.0 * r * y2 + y2 * y2)
}

/// `𝒮(t, R̃ + Υ) - 𝒮(t, R̃) - ⟨𝒮'(R̃), Υ⟩ - ½ Σ_j ⟨S_j''(B_j)Υ, Υ⟩`, evaluated pointwise.
/// The quadratic parts cancel identically, leaving the cubic remainder of the
/// nonlinearity and the gap between the full sum and the per-soliton bases in
/// the hessian; forming the difference of actions directly would lose
/// everything below rounding of `𝒮` itself.
pub fn localized_taylor_remainder(
    tilde: &Field<f64>,
    upsilon: &Field<f64>,
    bases: &[Field<f64>],
    cp: &CutoffPartition<f64>,
    params: &[ActionParams],
) -> Result<f64> {
    if params.len() != cp.len() || bases.len() != cp.len() {
        return Err(Error::CountMismatch { what: "hessian terms per cutoff", expected: cp.len(), found: params.len().min(bases.len()) });
    }
    tilde.check_compatible(upsilon)?;
    let g = tilde.grid();
    let mut total = 0.0;
    for ((weight, ap), base) in cp.weights.iter().zip(params).zip(bases) {
        base.check_compatible(upsilon)?;
        let p = ap.model.p;
        let mut acc = 0.0;
        for i in 0..g.points() {
            let (a, y, b) = (tilde.u1[i], upsilon.u1[i], base.u1[i]);
            let gap = nonlinear_hessian(a, y, p) - nonlinear_hessian(b, y, p);
            acc += weight[i] * (nonlinear_cubic_remainder(a, y, p) + 0.5 * gap);
        }
        total -= acc * g.spacing();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::boosted_soliton;

    fn cubic() -> ModelParams {
        ModelParams::new(1.0, 3.0, 1).unwrap()
    }

    #[test]
    fn standing_wave_values() {
        let grid = Grid::<f64>::new(80.0, 1024).unwrap();
        let w = boosted_soliton(cubic(), 0.8, 0.0, 0.0, 0.0, &grid).unwrap();
        assert!((energy(&w, cubic()) - 1.824).abs() < 1e-9);
        assert!((charge(&w) + 1.92).abs() < 1e-9);
        assert!(momentum(&w).abs() < 1e-12);
    }

    #[test]
    fn zero_field() {
        let grid = Grid::<f64>::new(20.0, 64).unwrap();
        let z = Field::zeros(grid);
        let ap = ActionParams::for_soliton(cubic(), 0.8, 0.3);
        assert_eq!(action(&z, &ap), 0.0);
        assert_eq!(nehari_value(&z, &ap), 0.0);
        assert!(action_gradient(&z, &ap).l2l2_norm() == 0.0);
        assert!(matches!(nehari_project(&z, &ap), Err(Error::NoProjection)));
    }

    #[test]
    fn ramp_properties() {
        assert_eq!(ramp(-1.0), 0.0);
        assert_eq!(ramp(1.0), 1.0);
        let mut prev = 0.0;
        for i in 0..=2000 {
            let s = -1.2 + 2.4 * i as f64 / 2000.0;
            let v = ramp(s);
            assert!(v >= prev);
            prev = v;
            assert!(ramp_derivative(s) <= std::f64::consts::FRAC_PI_2 * v.sqrt() + 1e-15);
            let fd = (ramp(s + 1e-7) - ramp(s - 1e-7)) / 2e-7;
            assert!((fd - ramp_derivative(s)).abs() < 1e-6);
        }
    }

    #[test]
    fn cutoffs_sum_to_one() {
        let grid = Grid::<f64>::new(100.0, 512).unwrap();
        let cp = build_cutoffs(&[-0.4, 0.1, 0.4], 3.0, &grid).unwrap();
        assert_eq!(cp.midpoints[1], -0.15000000000000002);
        for i in 0..512 {
            let s: f64 = cp.weights.iter().map(|w| w[i]).sum();
            assert!((s - 1.0).abs() < 1e-15);
            assert!(cp.weights.iter().all(|w| (0.0..=1.0).contains(&w[i])));
        }
        let single = build_cutoffs(&[0.2], 1.0, &grid).unwrap();
        assert!(single.weights[0].iter().all(|&w| w == 1.0));
        assert!(matches!(build_cutoffs(&[0.1], 0.0, &grid), Err(Error::NonPositiveTime(_))));
        assert!(build_cutoffs(&[0.4, -0.4], 1.0, &grid).is_err());
    }

    #[test]
    fn localized_variations_match_differences() {
        let grid = Grid::<f64>::new(60.0, 512).unwrap();
        let model = cubic();
        let a = boosted_soliton(model, 0.8, -0.4, 0.3, -8.0, &grid).unwrap();
        let b = boosted_soliton(model, 0.85, 0.4, -0.2, 8.0, &grid).unwrap();
        let base = &a + &b;
        let y = Field::from_fn(
            grid.clone(),
            |x| Complex::new((-(x - 1.0f64).powi(2) / 8.0).exp(), 0.3 * (-(x + 6.0f64).powi(2)).exp()),
            |x| Complex::new(0.2, -0.5) * (-(x - 7.0f64).powi(2) / 4.0).exp(),
        );
        let cp = build_cutoffs(&[-0.4, 0.4], 12.0, &grid).unwrap();
        let params = [ActionParams::for_soliton(model, 0.8, -0.4), ActionParams::for_soliton(model, 0.85, 0.4)];
        let s = |h: f64| {
            let mut w = base.clone();
            w.axpy(h, &y);
            localized_quantities(&w, &cp, &params).unwrap().action
        };
        let h = 1e-3;
        let first = (s(h) - s(-h)) / (2.0 * h);
        let pairing = localized_gradient_pairing(&base, &y, &cp, &params).unwrap();
        assert!((first - pairing).abs() < 1e-6 * pairing.abs().max(1.0), "{first} vs {pairing}");
        // Second difference against the hessian with the full base in every term.
        let second = (s(h) - 2.0 * s(0.0) + s(-h)) / (h * h);
        let hess = localized_hessian(&y, &[base.clone(), base.clone()], &cp, &params).unwrap();
        assert!((second - hess).abs() < 1e-4 * hess.abs(), "{second} vs {hess}");
    }

    #[test]
    fn taylor_remainder_matches_direct_difference() {
        let grid = Grid::<f64>::new(60.0, 512).unwrap();
        for p in [3.0, 2.5] {
            let model = ModelParams::new(1.0, p, 1).unwrap();
            let a = boosted_soliton(model, 0.8, -0.4, 0.3, -8.0, &grid).unwrap();
            let b = boosted_soliton(model, 0.85, 0.4, -0.2, 8.0, &grid).unwrap();
            let tilde = &a + &b;
            let y = Field::from_fn(
                grid.clone(),
                |x| Complex::new(0.02 * (-(x - 7.0f64).powi(2) / 8.0).exp(), 0.01 * (-(x + 8.0f64).powi(2)).exp()),
                |x| Complex::new(0.004, -0.01) * (-(x - 7.0f64).powi(2) / 4.0).exp(),
            );
            let cp = build_cutoffs(&[-0.4, 0.4], 12.0, &grid).unwrap();
            let params = [ActionParams::for_soliton(model, 0.8, -0.4), ActionParams::for_soliton(model, 0.85, 0.4)];
            let bases = [a.clone(), b.clone()];
            let s = |w: &Field<f64>| localized_quantities(w, &cp, &params).unwrap().action;
            let direct = s(&(&tilde + &y))
                - s(&tilde)
                - localized_gradient_pairing(&tilde, &y, &cp, &params).unwrap()
                - 0.5 * localized_hessian(&y, &bases, &cp, &params).unwrap();
            let stable = localized_taylor_remainder(&tilde, &y, &bases, &cp, &params).unwrap();
            assert!((direct - stable).abs() < 1e-3 * stable.abs() + 1e-14, "p = {p}: {direct} vs {stable}");
        }
    }

    #[test]
    fn power_tail_branches_agree() {
        for q in [2.0, 1.75, 3.5] {
            let (a2, s) = (1.3f64, 0.4 * 1.3);
            let direct = (a2 + s).powf(q) - a2.powf(q) - q * a2.powf(q - 1.0) * s - 0.5 * q * (q - 1.0) * a2.powf(q - 2.0) * s * s;
            assert!((power_tail(a2, s, q) - direct).abs() < 1e-13 * direct.abs().max(1e-300) + 1e-16);
        }
        assert_eq!(power_tail(2.0, 0.1, 2.0), 0.0);
    }
}
