//! Dense realization of the second variation `S''(Φ_{ω,v})`, its spectrum,
//! and the coercivity constant under the orthogonality conditions
//! `⟨W, ∂Φ⟩ = ⟨W, iJΦ⟩ = ⟨W, iΦ⟩ = 0`.
//!
//! Complex pairs are flattened as `[Re u1, Im u1, Re u2, Im u2]`. In that basis
//! `S''` is the real symmetric matrix
//!
//! ```text
//! [ K + m - N'(φ)     [[-vD, -c],[c, -vD]] ]
//! [ [[vD, c],[-c, vD]]        I            ]
//! ```
//!
//! with `K = DᵀD`, `c = ω/γ`, and `N'(φ)` the real-linear derivative of
//! `|u|^{p-1}u`. The Gram matrix of H¹×L² is `diag(I + K, I + K, I, I)`.

use std::sync::Arc;

use faer::{Mat, Side};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::functionals::{action_gradient, second_variation_apply, ActionParams};
use crate::grid::{Field, Grid};
use crate::profiles::boosted_soliton;

type Grid64 = Grid<f64>;
type Field64 = Field<f64>;

/// Relative size of eigenvalues counted as kernel.
pub const KERNEL_TOL: f64 = 1e-6;
/// Largest allowed symmetrization correction, relative to the spectral radius.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Differencing step in `ω` for `Λ_ω Φ`.
pub const OMEGA_STEP: f64 = 1e-4;

/// `S''(Φ)` and the H¹×L² Gram matrix in the real flattening.
pub struct RealizedOperator {
    pub matrix: Mat<f64>,
    pub gram: Mat<f64>,
    /// Symmetrization correction that was removed, relative to the spectral radius bound.
    pub asymmetry: f64,
    /// Row-sum bound on the spectral radius.
    pub radius_bound: f64,
    grid: Arc<Grid64>,
}

impl RealizedOperator {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn grid(&self) -> &Arc<Grid64> {
        &self.grid
    }

    /// `x ↦ M x` for a flattened vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n).map(|i| (0..n).map(|j| self.matrix[(i, j)] * x[j]).sum()).collect()
    }
}

/// Flattens a field to `[Re u1, Im u1, Re u2, Im u2]`.
pub fn flatten(w: &Field64) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * w.u1.len());
    out.extend(w.u1.iter().map(|z| z.re));
    out.extend(w.u1.iter().map(|z| z.im));
    out.extend(w.u2.iter().map(|z| z.re));
    out.extend(w.u2.iter().map(|z| z.im));
    out
}

pub fn unflatten(x: &[f64], grid: &Arc<Grid64>) -> Result<Field64> {
    let n = grid.points();
    if x.len() != 4 * n {
        return Err(Error::Dimension { expected: 4 * n, found: x.len() });
    }
    let u1 = (0..n).map(|i| Complex::new(x[i], x[n + i])).collect();
    let u2 = (0..n).map(|i| Complex::new(x[2 * n + i], x[3 * n + i])).collect();
    Field::new(grid.clone(), u1, u2)
}

/// Dense matrix of a real Fourier multiplier, built column by column.
fn multiplier_matrix(grid: &Grid64, symbol: impl Fn(usize) -> Complex<f64>) -> Mat<f64> {
    let n = grid.points();
    let mut out = Mat::<f64>::zeros(n, n);
    let mut e = vec![Complex::new(0.0, 0.0); n];
    for j in 0..n {
        e[j] = Complex::new(1.0, 0.0);
        let col = grid.apply_multiplier(&e, &symbol).expect("length matches");
        for (i, z) in col.iter().enumerate() {
            out[(i, j)] = z.re;
        }
        e[j] = Complex::new(0.0, 0.0);
    }
    out
}

/// Assembles `S''(Φ)` for a profile that is a critical point of the action.
pub fn assemble_second_variation(phi: &Field64, ap: &ActionParams, grid: &Arc<Grid64>) -> Result<RealizedOperator> {
    if !phi.grid().same_as(grid) {
        return Err(Error::Dimension { expected: grid.points(), found: phi.grid().points() });
    }
    let grad = action_gradient(phi, ap).l2l2_norm();
    if grad > 1e-6 {
        return Err(Error::param("phi", format!("profile is not a critical point: ‖S'(Φ)‖ = {grad:.3e}")));
    }
    let n = grid.points();
    let ks = grid.derivative_symbol().to_vec();
    let d = multiplier_matrix(grid, |j| Complex::new(0.0, ks[j]));
    let k = multiplier_matrix(grid, |j| Complex::new(ks[j] * ks[j], 0.0));
    let (m, p) = (ap.model.m, ap.model.p);
    let (c, v) = (ap.omega_over_gamma, ap.v);

    let mut a = Mat::<f64>::zeros(4 * n, 4 * n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = k[(i, j)];
            a[(n + i, n + j)] = k[(i, j)];
            let vd = v * d[(i, j)];
            a[(i, 2 * n + j)] = -vd;
            a[(n + i, 3 * n + j)] = -vd;
            a[(2 * n + i, j)] = vd;
            a[(3 * n + i, n + j)] = vd;
        }
        let z = phi.u1[i];
        let r = z.norm();
        let q = r.powf(p - 1.0);
        let (ua, ub) = if r > 0.0 { (z.re / r, z.im / r) } else { (0.0, 0.0) };
        let s = (p - 1.0) * q;
        a[(i, i)] += m - q - s * ua * ua;
        a[(n + i, n + i)] += m - q - s * ub * ub;
        a[(i, n + i)] -= s * ua * ub;
        a[(n + i, i)] -= s * ua * ub;
        a[(i, 3 * n + i)] -= c;
        a[(n + i, 2 * n + i)] += c;
        a[(2 * n + i, n + i)] += c;
        a[(3 * n + i, i)] -= c;
        a[(2 * n + i, 2 * n + i)] = 1.0;
        a[(3 * n + i, 3 * n + i)] = 1.0;
    }

    let size = 4 * n;
    let radius_bound = (0..size)
        .map(|i| (0..size).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for i in 0..size {
        for j in (i + 1)..size {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            worst = worst.max((x - y).abs() / 2.0);
            let mean = 0.5 * (x + y);
            a[(i, j)] = mean;
            a[(j, i)] = mean;
        }
    }
    let asymmetry = worst / radius_bound;
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::Asymmetric(asymmetry));
    }

    let mut gram = Mat::<f64>::zeros(size, size);
    for i in 0..n {
        for j in 0..n {
            let e = k[(i, j)] + if i == j { 1.0 } else { 0.0 };
            gram[(i, j)] = e;
            gram[(n + i, n + j)] = e;
        }
        gram[(2 * n + i, 2 * n + i)] = 1.0;
        gram[(3 * n + i, 3 * n + i)] = 1.0;
    }
    Ok(RealizedOperator { matrix: a, gram, asymmetry, radius_bound, grid: grid.clone() })
}

/// Eigenvalues in nondecreasing order.
pub fn symmetric_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Outcome of the slope computation `⟨S''(Φ)Λ_ωΦ, Λ_ωΦ⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeReport {
    pub slope: f64,
    /// `‖S''(Φ)Λ_ωΦ + (1/γ) iJΦ‖_{L²×L²}`.
    pub miracle_residual: f64,
}

/// Spectral summary of `S''(Φ_{ω,v})`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub negative_count: usize,
    /// Most negative eigenvalue.
    pub negative_eigenvalue: f64,
    pub kernel_dimension: usize,
    /// Absolute kernel threshold `KERNEL_TOL · spectral radius`.
    pub kernel_tol: f64,
    pub spectral_radius: f64,
    /// Minimum of `⟨S''W,W⟩ / ‖W‖²_{H¹×L²}` on the orthogonal complement.
    pub coercivity_delta: f64,
    /// Rayleigh quotients of `iΦ` and `∂Φ`, divided by the spectral radius.
    pub kernel_rayleigh: [f64; 2],
    /// `‖S''(iΦ)‖` and `‖S''(∂Φ)‖` in L²×L².
    pub kernel_residuals: [f64; 2],
    pub slope: SlopeReport,
    /// Smallest eigenvalue of the potential-free operator over the grid modes.
    pub essential_floor: f64,
    /// Lowest eigenvalues (up to 20).
    pub lowest: Vec<f64>,
}

/// `⟨S''(Φ)Λ_ωΦ, Λ_ωΦ⟩` by centered differencing of a profile family in `ω`.
pub fn slope_test<F>(family: F, ap: &ActionParams, omega: f64) -> Result<SlopeReport>
where
    F: Fn(f64) -> Result<Field64>,
{
    let root_m = ap.model.m.sqrt();
    if omega.abs() + OMEGA_STEP >= root_m {
        return Err(Error::param("omega", "centered difference would leave the frequency window"));
    }
    let center = family(omega)?;
    let plus = family(omega + OMEGA_STEP)?;
    let minus = family(omega - OMEGA_STEP)?;
    let lam = &(&plus - &minus) * (0.5 / OMEGA_STEP);
    let s_lam = second_variation_apply(&center, &lam, ap)?;
    let slope = s_lam.dot(&lam);
    let gamma = crate::params::lorentz_gamma(ap.v);
    let mut miracle = s_lam;
    miracle.axpy(1.0 / gamma, &center.i_j());
    Ok(SlopeReport { slope, miracle_residual: miracle.l2l2_norm() })
}

/// `min_k ((k²+m+1) - √((k²+m-1)² + 4(c - vk)²))/2` over the grid wavenumbers.
pub fn essential_floor(ap: &ActionParams, grid: &Grid64) -> f64 {
    let (m, c, v) = (ap.model.m, ap.omega_over_gamma, ap.v);
    grid.derivative_symbol()
        .iter()
        .map(|&k| {
            let a = k * k + m;
            let s = c - v * k;
            0.5 * ((a + 1.0) - ((a - 1.0).powi(2) + 4.0 * s * s).sqrt())
        })
        .fold(f64::INFINITY, f64::min)
}

/// Applies the Fourier multiplier `(1 + k²)^{-1/2}` to the first two blocks of every column.
fn precondition_columns(a: &Mat<f64>, grid: &Grid64) -> Mat<f64> {
    let n = grid.points();
    let size = a.nrows();
    let ks = grid.derivative_symbol();
    let mut out = a.clone();
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for j in 0..size {
        for block in 0..2 {
            for i in 0..n {
                buf[i] = Complex::new(a[(block * n + i, j)], 0.0);
            }
            let col = grid
                .apply_multiplier(&buf, |l| Complex::new(1.0 / (1.0 + ks[l] * ks[l]).sqrt(), 0.0))
                .expect("length matches");
            for i in 0..n {
                out[(block * n + i, j)] = col[i].re;
            }
        }
    }
    out
}

fn precondition_vector(x: &[f64], grid: &Grid64) -> Vec<f64> {
    let n = grid.points();
    let ks = grid.derivative_symbol();
    let mut out = x.to_vec();
    for block in 0..2 {
        let seg: Vec<Complex<f64>> = x[block * n..(block + 1) * n].iter().map(|&r| Complex::new(r, 0.0)).collect();
        let col = grid
            .apply_multiplier(&seg, |l| Complex::new(1.0 / (1.0 + ks[l] * ks[l]).sqrt(), 0.0))
            .expect("length matches");
        for i in 0..n {
            out[block * n + i] = col[i].re;
        }
    }
    out
}

fn transpose(a: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)])
}

/// Minimum generalized Rayleigh quotient `⟨M x, x⟩ / ⟨G x, x⟩` over the
/// L²-orthogonal complement of `constraints`.
pub fn constrained_minimum(op: &RealizedOperator, constraints: &[Vec<f64>], spectral_radius: f64) -> Result<f64> {
    let grid = op.grid.clone();
    // With T = diag(A^{-1/2}, A^{-1/2}, I, I), A = I + K, the Gram matrix becomes the identity.
    let tm = precondition_columns(&op.matrix, &grid);
    let mut b = precondition_columns(&transpose(&tm), &grid);
    let size = b.nrows();
    for i in 0..size {
        for j in (i + 1)..size {
            let mean = 0.5 * (b[(i, j)] + b[(j, i)]);
            b[(i, j)] = mean;
            b[(j, i)] = mean;
        }
    }
    // Orthonormal basis of the transformed constraint directions.
    let mut q: Vec<Vec<f64>> = Vec::new();
    for c in constraints {
        let mut v = precondition_vector(c, &grid);
        for _ in 0..2 {
            for u in &q {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::param("constraints", "orthogonality directions are linearly dependent"));
        }
        v.iter_mut().for_each(|a| *a /= norm);
        q.push(v);
    }
    // P B P + σ Q Qᵀ with P = I - Q Qᵀ: the constrained directions are lifted to σ.
    let sigma = 10.0 * spectral_radius.max(1.0);
    let bq: Vec<Vec<f64>> = q
        .iter()
        .map(|u| (0..size).map(|i| (0..size).map(|j| b[(i, j)] * u[j]).sum()).collect())
        .collect();
    let r = q.len();
    let qbq: Vec<Vec<f64>> = (0..r)
        .map(|a| (0..r).map(|c| q[a].iter().zip(&bq[c]).map(|(x, y)| x * y).sum()).collect())
        .collect();
    for i in 0..size {
        for j in 0..size {
            let mut corr = 0.0;
            for a in 0..r {
                corr -= q[a][i] * bq[a][j] + bq[a][i] * q[a][j];
                corr += sigma * q[a][i] * q[a][j];
                for c in 0..r {
                    corr += q[a][i] * qbq[a][c] * q[c][j];
                }
            }
            b[(i, j)] += corr;
        }
    }
    let eig = symmetric_eigenvalues(&b)?;
    Ok(eig[0])
}

/// Full spectral report for the operator assembled at `phi`.
pub fn spectrum_report(op: &RealizedOperator, phi: &Field64, ap: &ActionParams) -> Result<SpectrumReport> {
    let eig = symmetric_eigenvalues(&op.matrix)?;
    let radius = eig.iter().fold(0.0f64, |a, &e| a.max(e.abs()));
    let kernel_tol = KERNEL_TOL * radius;
    let negative_count = eig.iter().filter(|&&e| e < -kernel_tol).count();
    let kernel_dimension = eig.iter().filter(|&&e| e.abs() <= kernel_tol).count();

    let i_phi = phi.times_i();
    let d_phi = phi.dx();
    let ij_phi = phi.i_j();
    let rayleigh = |z: &Field64| -> Result<(f64, f64)> {
        let sz = second_variation_apply(phi, z, ap)?;
        Ok((sz.dot(z) / z.dot(z) / radius, sz.l2l2_norm()))
    };
    let (r_i, res_i) = rayleigh(&i_phi)?;
    let (r_d, res_d) = rayleigh(&d_phi)?;

    let constraints = [flatten(&d_phi), flatten(&ij_phi), flatten(&i_phi)];
    let coercivity_delta = constrained_minimum(op, &constraints, radius)?;

    let gamma = crate::params::lorentz_gamma(ap.v);
    let omega = ap.omega_over_gamma * gamma;
    let grid = op.grid.clone();
    let (model, v) = (ap.model, ap.v);
    let slope = slope_test(|w| boosted_soliton(model, w, v, 0.0, 0.0, &grid), ap, omega)?;

    Ok(SpectrumReport {
        negative_count,
        negative_eigenvalue: eig[0],
        kernel_dimension,
        kernel_tol,
        spectral_radius: radius,
        coercivity_delta,
        kernel_rayleigh: [r_i, r_d],
        kernel_residuals: [res_i, res_d],
        slope,
        essential_floor: essential_floor(ap, &op.grid),
        lowest: eig.iter().take(20).copied().collect(),
    })
}

/// Analytic `(1/γ) d/dω (ω ‖φ_ω‖²)` for `d = 1`, where `‖φ_ω‖² = (m-ω²)^{(5-p)/(2(p-1))} ‖φ̃‖²`.
pub fn analytic_slope_1d(model: crate::params::ModelParams, omega: f64, v: f64, tilde_norm_sq: f64) -> f64 {
    let e = (5.0 - model.p) / (2.0 * (model.p - 1.0));
    let mu = model.m - omega * omega;
    let d = mu.powf(e) - 2.0 * e * omega * omega * mu.powf(e - 1.0);
    d * tilde_norm_sq / crate::params::lorentz_gamma(v)
}
