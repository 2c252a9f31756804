//! Periodic 1D grid, the Hamiltonian state `(u1, u2)` and the spectral
//! calculus used by every other module.
//!
//! The domain is `[-L/2, L/2)` with `N` equispaced samples. Integrals use the
//! rectangle rule, which is spectrally accurate for smooth periodic data and
//! matches the FFT discretization. Derivatives are Fourier multipliers; the
//! Nyquist coefficient of the derivative symbol is zero so that the discrete
//! `d/dx` stays skew-symmetric and `-d²/dx²` equals `Dᵀ D` exactly.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform periodic mesh with cached FFT plans.
pub struct Grid<T: Real> {
    length: T,
    points: usize,
    spacing: T,
    wavenumbers: Vec<T>,
    derivative_symbol: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("length", &self.length)
            .field("points", &self.points)
            .field("spacing", &self.spacing)
            .finish()
    }
}

impl<T: Real> Grid<T> {
    pub fn new(length: T, points: usize) -> Result<Arc<Self>> {
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::param("length", "must be positive and finite"));
        }
        if points < 4 {
            return Err(Error::param("points", "need at least 4 grid points"));
        }
        if !points.is_power_of_two() {
            log::warn!("grid with {points} points is not a power of two");
        }
        let spacing = length / T::lit(points as f64);
        let two_pi_over_l = T::TAU() / length;
        let half = points / 2;
        let wavenumbers: Vec<T> = (0..points)
            .map(|j| {
                let k = if j < half || (j == half && points % 2 == 1) {
                    j as f64
                } else {
                    j as f64 - points as f64
                };
                two_pi_over_l * T::lit(k)
            })
            .collect();
        let mut derivative_symbol = wavenumbers.clone();
        if points % 2 == 0 {
            derivative_symbol[half] = T::zero();
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(points);
        let inverse = planner.plan_fft_inverse(points);
        Ok(Arc::new(Self {
            length,
            points,
            spacing,
            wavenumbers,
            derivative_symbol,
            forward,
            inverse,
        }))
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    /// Raw wavenumbers `2πk/L` in FFT order (the Nyquist entry keeps its value).
    pub fn wavenumbers(&self) -> &[T] {
        &self.wavenumbers
    }

    /// Symbol of `d/dx` divided by `i`: the wavenumbers with the Nyquist entry zeroed.
    pub fn derivative_symbol(&self) -> &[T] {
        &self.derivative_symbol
    }

    /// Largest wavenumber magnitude of the derivative symbol.
    pub fn max_wavenumber(&self) -> T {
        self.derivative_symbol.iter().fold(T::zero(), |a, &k| a.max(k.abs()))
    }

    pub fn position(&self, i: usize) -> T {
        -self.length / T::lit(2.0) + self.spacing * T::lit(i as f64)
    }

    pub fn positions(&self) -> Vec<T> {
        (0..self.points).map(|i| self.position(i)).collect()
    }

    /// Maps `x` into `[-L/2, L/2)`.
    pub fn wrap(&self, x: T) -> T {
        let half = self.length / T::lit(2.0);
        let shifted = (x + half) % self.length;
        let shifted = if shifted < T::zero() { shifted + self.length } else { shifted };
        shifted - half
    }

    pub fn same_as(&self, other: &Grid<T>) -> bool {
        self.points == other.points && self.length == other.length
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if n != self.points {
            return Err(Error::Dimension { expected: self.points, found: n });
        }
        Ok(())
    }

    /// Unnormalized forward DFT in place.
    pub fn fft(&self, data: &mut [Complex<T>]) {
        self.forward.process(data);
    }

    /// Inverse DFT in place, normalized so that `ifft(fft(f)) = f`.
    pub fn ifft(&self, data: &mut [Complex<T>]) {
        self.inverse.process(data);
        let scale = T::one() / T::lit(self.points as f64);
        for z in data.iter_mut() {
            *z = *z * scale;
        }
    }

    /// Applies the Fourier multiplier `symbol(k_j)` (indexed in FFT order).
    pub fn apply_multiplier<F>(&self, f: &[Complex<T>], symbol: F) -> Result<Vec<Complex<T>>>
    where
        F: Fn(usize) -> Complex<T>,
    {
        self.check_len(f.len())?;
        let mut buf = f.to_vec();
        self.fft(&mut buf);
        for (j, z) in buf.iter_mut().enumerate() {
            *z = *z * symbol(j);
        }
        self.ifft(&mut buf);
        Ok(buf)
    }

    pub fn derivative(&self, f: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        self.apply_multiplier(f, |j| Complex::new(T::zero(), self.derivative_symbol[j]))
    }

    /// `-d²/dx²` with the same symbol as `Dᵀ D`.
    pub fn neg_laplacian(&self, f: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        self.apply_multiplier(f, |j| {
            let k = self.derivative_symbol[j];
            Complex::new(k * k, T::zero())
        })
    }

    /// Derivative of a real sample vector.
    pub fn derivative_real(&self, f: &[T]) -> Result<Vec<T>> {
        let z: Vec<Complex<T>> = f.iter().map(|&x| Complex::new(x, T::zero())).collect();
        Ok(self.derivative(&z)?.into_iter().map(|c| c.re).collect())
    }

    /// Rectangle-rule `∫ |f|² dx`.
    pub fn norm_sq(&self, f: &[Complex<T>]) -> T {
        f.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()) * self.spacing
    }

    pub fn integrate(&self, f: &[T]) -> T {
        f.iter().fold(T::zero(), |acc, &x| acc + x) * self.spacing
    }
}

/// Fourier-mode derivative `i·k·f`. Exact for band-limited `f`.
pub fn spectral_derivative<T: Real>(f: &[Complex<T>], grid: &Grid<T>) -> Result<Vec<Complex<T>>> {
    grid.derivative(f)
}

/// The real L² pairing `Re ∫ f ḡ dx`.
pub fn inner_product_l2<T: Real>(f: &[Complex<T>], g: &[Complex<T>], grid: &Grid<T>) -> Result<T> {
    grid.check_len(f.len())?;
    grid.check_len(g.len())?;
    Ok(raw_inner(f, g) * grid.spacing())
}

#[inline]
pub(crate) fn raw_inner<T: Real>(f: &[Complex<T>], g: &[Complex<T>]) -> T {
    f.iter()
        .zip(g)
        .fold(T::zero(), |acc, (a, b)| acc + a.re * b.re + a.im * b.im)
}

/// `sqrt(‖u1‖² + ‖∂x u1‖² + ‖u2‖²)`.
pub fn norm_h1l2<T: Real>(w: &Field<T>) -> T {
    w.h1l2_norm_sq().sqrt()
}

/// Hamiltonian state: position component `u1 = u` and velocity component `u2 = u_t`.
#[derive(Clone)]
pub struct Field<T: Real> {
    pub u1: Vec<Complex<T>>,
    pub u2: Vec<Complex<T>>,
    grid: Arc<Grid<T>>,
}

impl<T: Real> fmt::Debug for Field<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("l2", &self.l2l2_norm().as_f64())
            .finish()
    }
}

impl<T: Real> Field<T> {
    pub fn new(grid: Arc<Grid<T>>, u1: Vec<Complex<T>>, u2: Vec<Complex<T>>) -> Result<Self> {
        grid.check_len(u1.len())?;
        grid.check_len(u2.len())?;
        let field = Self { u1, u2, grid };
        if !field.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(field)
    }

    pub fn zeros(grid: Arc<Grid<T>>) -> Self {
        let n = grid.points();
        Self { u1: vec![Complex::new(T::zero(), T::zero()); n], u2: vec![Complex::new(T::zero(), T::zero()); n], grid }
    }

    /// Builds a field from real-valued sample functions of position.
    pub fn from_fn<F, G>(grid: Arc<Grid<T>>, f1: F, f2: G) -> Self
    where
        F: Fn(T) -> Complex<T>,
        G: Fn(T) -> Complex<T>,
    {
        let xs = grid.positions();
        let u1 = xs.iter().map(|&x| f1(x)).collect();
        let u2 = xs.iter().map(|&x| f2(x)).collect();
        Self { u1, u2, grid }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn is_finite(&self) -> bool {
        self.u1.iter().chain(&self.u2).all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn check_compatible(&self, other: &Field<T>) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::Dimension { expected: self.grid.points(), found: other.grid.points() });
        }
        Ok(())
    }

    /// The L²×L² pairing `⟨u1,v1⟩ + ⟨u2,v2⟩`.
    pub fn dot(&self, other: &Field<T>) -> T {
        (raw_inner(&self.u1, &other.u1) + raw_inner(&self.u2, &other.u2)) * self.grid.spacing()
    }

    pub fn l2l2_norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn h1l2_norm_sq(&self) -> T {
        let du1 = self.grid.derivative(&self.u1).expect("field length matches its grid");
        self.grid.norm_sq(&self.u1) + self.grid.norm_sq(&du1) + self.grid.norm_sq(&self.u2)
    }

    pub fn h1l2_norm(&self) -> T {
        self.h1l2_norm_sq().sqrt()
    }

    /// H¹×L² inner product.
    pub fn h1l2_dot(&self, other: &Field<T>) -> T {
        let g = &self.grid;
        let da = g.derivative(&self.u1).expect("length checked");
        let db = g.derivative(&other.u1).expect("length checked");
        self.dot(other) + raw_inner(&da, &db) * g.spacing()
    }

    pub fn sup_u1(&self) -> T {
        self.u1.iter().fold(T::zero(), |a, z| a.max(z.norm()))
    }

    /// Multiplication by the imaginary unit, componentwise.
    pub fn times_i(&self) -> Self {
        let rot = |v: &Vec<Complex<T>>| v.iter().map(|z| Complex::new(-z.im, z.re)).collect();
        Self { u1: rot(&self.u1), u2: rot(&self.u2), grid: self.grid.clone() }
    }

    /// `J (u1, u2) = (u2, -u1)`.
    pub fn apply_j(&self) -> Self {
        Self { u1: self.u2.clone(), u2: self.u1.iter().map(|z| -z).collect(), grid: self.grid.clone() }
    }

    /// `iJ W`, the gradient of the charge at `W`.
    pub fn i_j(&self) -> Self {
        self.apply_j().times_i()
    }

    /// Spatial derivative of both components.
    pub fn dx(&self) -> Self {
        Self {
            u1: self.grid.derivative(&self.u1).expect("length checked"),
            u2: self.grid.derivative(&self.u2).expect("length checked"),
            grid: self.grid.clone(),
        }
    }

    /// Multiplies both components by `e^{iα}`.
    pub fn rotate_phase(&self, alpha: T) -> Self {
        let r = Complex::new(alpha.cos(), alpha.sin());
        self.map(|z| z * r)
    }

    /// Shift by an integer number of grid cells: `W(· - k h)`.
    pub fn roll(&self, cells: isize) -> Self {
        let n = self.grid.points() as isize;
        let shift = cells.rem_euclid(n) as usize;
        let mut u1 = self.u1.clone();
        let mut u2 = self.u2.clone();
        u1.rotate_right(shift);
        u2.rotate_right(shift);
        Self { u1, u2, grid: self.grid.clone() }
    }

    /// Band-limited translation `W(· - a)` via a Fourier phase.
    pub fn translate(&self, a: T) -> Self {
        let g = &self.grid;
        let shift = |v: &Vec<Complex<T>>| {
            g.apply_multiplier(v, |j| {
                let th = -g.wavenumbers()[j] * a;
                if g.points() % 2 == 0 && j == g.points() / 2 {
                    // Real interpolant at the Nyquist mode keeps real data real.
                    Complex::new(th.cos(), T::zero())
                } else {
                    Complex::new(th.cos(), th.sin())
                }
            })
            .expect("length checked")
        };
        Self { u1: shift(&self.u1), u2: shift(&self.u2), grid: self.grid.clone() }
    }

    pub fn map<F: Fn(Complex<T>) -> Complex<T>>(&self, f: F) -> Self {
        Self {
            u1: self.u1.iter().map(|&z| f(z)).collect(),
            u2: self.u2.iter().map(|&z| f(z)).collect(),
            grid: self.grid.clone(),
        }
    }

    pub fn axpy(&mut self, a: T, x: &Field<T>) {
        for (y, xv) in self.u1.iter_mut().zip(&x.u1) {
            *y = *y + *xv * a;
        }
        for (y, xv) in self.u2.iter_mut().zip(&x.u2) {
            *y = *y + *xv * a;
        }
    }

    /// Pointwise product of both components with a real weight.
    pub fn weighted(&self, weight: &[T]) -> Self {
        let mul = |v: &Vec<Complex<T>>| v.iter().zip(weight).map(|(z, &w)| *z * w).collect();
        Self { u1: mul(&self.u1), u2: mul(&self.u2), grid: self.grid.clone() }
    }
}

impl<T: Real> Add for &Field<T> {
    type Output = Field<T>;
    fn add(self, rhs: &Field<T>) -> Field<T> {
        let mut out = self.clone();
        out.axpy(T::one(), rhs);
        out
    }
}

impl<T: Real> Sub for &Field<T> {
    type Output = Field<T>;
    fn sub(self, rhs: &Field<T>) -> Field<T> {
        let mut out = self.clone();
        out.axpy(-T::one(), rhs);
        out
    }
}

impl<T: Real> Mul<T> for &Field<T> {
    type Output = Field<T>;
    fn mul(self, c: T) -> Field<T> {
        self.map(|z| z * c)
    }
}

impl<T: Real> Neg for &Field<T> {
    type Output = Field<T>;
    fn neg(self) -> Field<T> {
        self.map(|z| -z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex<f64> {
        Complex::new(re, 0.0)
    }

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    #[test]
    fn grid_basics() {
        let g = Grid::<f64>::new(80.0, 1024).unwrap();
        assert_eq!(g.spacing() * 1024.0, 80.0);
        let k = g.wavenumbers();
        for j in 1..512 {
            assert_eq!(k[j], -k[1024 - j]);
        }
        assert_eq!(g.derivative_symbol()[512], 0.0);
        assert!((g.wrap(41.0) + 39.0).abs() < 1e-12);
        assert!((g.wrap(-40.0) + 40.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_of_constant_and_mode() {
        let g = Grid::<f64>::new(10.0, 64).unwrap();
        let d = spectral_derivative(&vec![c(3.0); 64], &g).unwrap();
        assert!(d.iter().all(|z| z.norm() < 1e-13));
        let kk = 2.0 * std::f64::consts::PI / 10.0;
        let f: Vec<_> = g.positions().iter().map(|&x| Complex::new(0.0, kk * x).exp()).collect();
        let d = spectral_derivative(&f, &g).unwrap();
        for (a, b) in d.iter().zip(&f) {
            assert!((a - b * Complex::new(0.0, kk)).norm() < 1e-12);
        }
    }

    #[test]
    fn derivative_of_sech() {
        let g = Grid::<f64>::new(80.0, 1024).unwrap();
        let f: Vec<_> = g.positions().iter().map(|&x| c(sech(x))).collect();
        let d = spectral_derivative(&f, &g).unwrap();
        let err = g
            .positions()
            .iter()
            .zip(&d)
            .map(|(&x, z)| (z.re + sech(x) * x.tanh()).abs().max(z.im.abs()))
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn length_mismatch_is_reported() {
        let g = Grid::<f64>::new(10.0, 64).unwrap();
        assert!(matches!(
            spectral_derivative(&vec![c(1.0); 63], &g),
            Err(Error::Dimension { expected: 64, found: 63 })
        ));
        assert!(inner_product_l2(&vec![c(1.0); 64], &vec![c(1.0); 32], &g).is_err());
    }

    #[test]
    fn l2_pairings() {
        let g = Grid::<f64>::new(80.0, 1024).unwrap();
        let f: Vec<_> = g.positions().iter().map(|&x| c(sech(x))).collect();
        assert!((inner_product_l2(&f, &f, &g).unwrap() - 2.0).abs() < 1e-10);
        let fi: Vec<_> = f.iter().map(|z| z * Complex::i()).collect();
        assert!(inner_product_l2(&f, &fi, &g).unwrap().abs() < 1e-15);
    }

    #[test]
    fn h1l2_norm_of_ground_state() {
        let g = Grid::<f64>::new(80.0, 1024).unwrap();
        let s2 = 2f64.sqrt();
        let w = Field::from_fn(g, |x| c(s2 * sech(x)), |_| c(0.0));
        assert!((norm_h1l2(&w) - (4.0f64 + 4.0 / 3.0).sqrt()).abs() < 1e-10);
        assert!((norm_h1l2(&(&w * -2.5)) - 2.5 * norm_h1l2(&w)).abs() < 1e-12);
        assert_eq!(norm_h1l2(&Field::zeros(w.grid().clone())), 0.0);
    }

    #[test]
    fn translate_matches_roll_on_cell_multiples() {
        let g = Grid::<f64>::new(40.0, 256).unwrap();
        let w = Field::from_fn(g.clone(), |x| Complex::new(sech(x), 0.3 * sech(2.0 * x)), |x| c(x * sech(x)));
        let a = (&w.translate(7.0 * g.spacing()) - &w.roll(7)).l2l2_norm();
        assert!(a < 1e-12, "{a}");
    }

    #[test]
    fn works_in_single_precision() {
        let g = Grid::<f32>::new(40.0, 256).unwrap();
        let f: Vec<Complex<f32>> = g.positions().iter().map(|&x| Complex::new(1.0 / x.cosh(), 0.0)).collect();
        let n = inner_product_l2(&f, &f, &g).unwrap();
        assert!((n - 2.0).abs() < 1e-5);
    }

    fn band_limited(seed: &[f64], g: &Grid<f64>) -> Vec<Complex<f64>> {
        let xs = g.positions();
        let l = g.length();
        xs.iter()
            .map(|&x| {
                seed.chunks(2).enumerate().fold(Complex::new(0.0, 0.0), |acc, (m, ab)| {
                    let k = 2.0 * std::f64::consts::PI * (m as f64 + 1.0) / l;
                    acc + Complex::new(ab[0] * (k * x).cos(), ab[1] * (k * x).sin())
                })
            })
            .collect()
    }

    proptest! {
        #[test]
        fn parseval(seed in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let g = Grid::<f64>::new(12.0, 64).unwrap();
            let f = band_limited(&seed, &g);
            let mut hat = f.clone();
            g.fft(&mut hat);
            let fourier = hat.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.spacing() / 64.0;
            let direct = g.norm_sq(&f);
            prop_assert!((fourier - direct).abs() <= 1e-12 * direct.max(1e-300));
        }

        #[test]
        fn second_derivative_and_integration_by_parts(
            a in proptest::collection::vec(-1.0f64..1.0, 16),
            b in proptest::collection::vec(-1.0f64..1.0, 16),
        ) {
            let g = Grid::<f64>::new(12.0, 64).unwrap();
            let f = band_limited(&a, &g);
            let h = band_limited(&b, &g);
            let dd = g.derivative(&g.derivative(&f).unwrap()).unwrap();
            let lap = g.neg_laplacian(&f).unwrap();
            for (x, y) in dd.iter().zip(&lap) {
                prop_assert!((x + y).norm() < 1e-10);
            }
            let lhs = inner_product_l2(&g.derivative(&f).unwrap(), &h, &g).unwrap();
            let rhs = -inner_product_l2(&f, &g.derivative(&h).unwrap(), &g).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
            let sym = inner_product_l2(&f, &h, &g).unwrap() - inner_product_l2(&h, &f, &g).unwrap();
            prop_assert!(sym.abs() < 1e-14);
        }
    }
}
