//! Model and soliton parameters.

use crate::error::{Error, Result};

/// Mass `m`, nonlinearity exponent `p` and spatial dimension `d` of
/// `u_tt - Δu + m u - |u|^{p-1} u = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub m: f64,
    pub p: f64,
    pub d: u32,
}

impl ModelParams {
    /// Validates `m > 0`, `d ∈ {1,2,3}` and `p` energy-subcritical
    /// (`p < 1 + 4/(d-2)` when `d = 3`), which is what ground states need.
    /// The stricter charge-subcritical bound required by the stability
    /// theory is reported by [`ModelParams::is_charge_subcritical`].
    pub fn new(m: f64, p: f64, d: u32) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::param("m", format!("mass must be positive, got {m}")));
        }
        if !(1..=3).contains(&d) {
            return Err(Error::param("d", format!("dimension must be 1, 2 or 3, got {d}")));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::param("p", format!("exponent must exceed 1, got {p}")));
        }
        if d == 3 && p >= 5.0 {
            return Err(Error::param("p", format!("p = {p} is not energy-subcritical in d = 3")));
        }
        Ok(Self { m, p, d })
    }

    /// `p < 1 + 4/d`.
    pub fn is_charge_subcritical(&self) -> bool {
        self.p < 1.0 + 4.0 / self.d as f64
    }

    /// Lower edge of the stable window in `ω²/m`, or `None` when the window is empty.
    pub fn stability_threshold(&self) -> Option<f64> {
        let den = 1.0 + 4.0 / (self.p - 1.0) - self.d as f64;
        (den > 1.0).then(|| 1.0 / den)
    }

    pub fn check_frequency(&self, omega: f64) -> Result<()> {
        if !(omega.abs() < self.m.sqrt()) {
            return Err(Error::FrequencyOutOfRange { omega, m: self.m });
        }
        Ok(())
    }

    /// `ω ↦ (ω²/m) > 1/(1 + 4/(p-1) - d)` together with `|ω| < √m`.
    pub fn is_stable_frequency(&self, omega: f64) -> bool {
        match self.stability_threshold() {
            Some(th) => omega.abs() < self.m.sqrt() && omega * omega / self.m > th,
            None => false,
        }
    }
}

/// One boosted standing wave `e^{i(ω/γ)t + iθ} Φ_{ω,v}(x - vt - x0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitonParams {
    pub model: ModelParams,
    pub omega: f64,
    pub theta: f64,
    pub v: f64,
    pub x0: f64,
}

impl SolitonParams {
    pub fn new(model: ModelParams, omega: f64, theta: f64, v: f64, x0: f64) -> Result<Self> {
        model.check_frequency(omega)?;
        if !(v.abs() < 1.0) {
            return Err(Error::param("v", format!("|v| must be below 1, got {v}")));
        }
        if !theta.is_finite() || !x0.is_finite() {
            return Err(Error::param("theta/x0", "must be finite"));
        }
        Ok(Self { model, omega, theta, v, x0 })
    }

    /// Lorentz factor `1/√(1 - v²)`.
    pub fn gamma(&self) -> f64 {
        lorentz_gamma(self.v)
    }

    /// Membership in the stable parameter window.
    pub fn is_stable(&self) -> bool {
        self.v.abs() < 1.0 && self.model.is_stable_frequency(self.omega)
    }

    /// Coefficients of the action this soliton is a critical point of.
    pub fn action_params(&self) -> crate::functionals::ActionParams {
        crate::functionals::ActionParams::for_soliton(self.model, self.omega, self.v)
    }
}

pub fn lorentz_gamma(v: f64) -> f64 {
    1.0 / (1.0 - v * v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stability_window() {
        let model = ModelParams::new(1.0, 3.0, 1).unwrap();
        assert_eq!(model.stability_threshold(), Some(0.5));
        assert!(model.is_stable_frequency(0.8));
        assert!(!model.is_stable_frequency(0.6));
        assert!(!model.is_stable_frequency(0.7));
        let cubic3d = ModelParams::new(1.0, 3.0, 3).unwrap();
        assert!(!cubic3d.is_charge_subcritical());
        assert_eq!(cubic3d.stability_threshold(), None);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ModelParams::new(0.0, 3.0, 1).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1).is_err());
        assert!(ModelParams::new(1.0, 5.0, 3).is_err());
        let model = ModelParams::new(1.0, 3.0, 1).unwrap();
        assert!(matches!(SolitonParams::new(model, 1.0, 0.0, 0.0, 0.0), Err(Error::FrequencyOutOfRange { .. })));
        assert!(SolitonParams::new(model, 0.8, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn gamma_value() {
        assert!((lorentz_gamma(0.4) - 1.091089451179962).abs() < 1e-12);
    }
}
