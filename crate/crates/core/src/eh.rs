//! Piecewise nonlinear energy-harvesting (EH) model.
//!
//! The harvested power for a linear input power `P` (both in mW) is
//!
//! ```text
//! P_eh(P) = (a P + b) / (P + c) - b / c
//! ```
//!
//! which is zero at `P = 0`, strictly increasing, and saturates at
//! `a - b/c`. The coefficients are fitted in milliwatts, so every caller in
//! this crate converts from watts at this boundary.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EhError {
    #[error("EH coefficients must be positive (a={a}, b={b}, c={c})")]
    NonPositiveCoefficient { a: f64, b: f64, c: f64 },
    #[error("EH model requires a > b/c so that the saturation level is positive (a={a}, b/c={ratio})")]
    NoHeadroom { a: f64, ratio: f64 },
    #[error("input power must be finite and non-negative, got {0} mW")]
    NegativeInput(f64),
    #[error("harvest target {target} mW is at or beyond the saturation level {saturation} mW")]
    Saturated { target: f64, saturation: f64 },
}

/// Coefficients of the nonlinear EH curve (mW-consistent).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EhModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl EhModel {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, EhError> {
        if !(a > 0.0 && b > 0.0 && c > 0.0) || !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(EhError::NonPositiveCoefficient { a, b, c });
        }
        if a <= b / c {
            return Err(EhError::NoHeadroom { a, ratio: b / c });
        }
        Ok(Self { a, b, c })
    }

    /// Upper bound of the harvested power, `a - b/c`.
    pub fn saturation(&self) -> f64 {
        self.a - self.b / self.c
    }

    /// Harvested power (mW) for a linear input power `p_in` (mW).
    pub fn harvest(&self, p_in: f64) -> Result<f64, EhError> {
        if !(p_in >= 0.0) || p_in.is_nan() {
            return Err(EhError::NegativeInput(p_in));
        }
        if p_in.is_infinite() {
            return Ok(self.saturation());
        }
        // (aP + b)/(P + c) - b/c rewritten without the cancellation at small P.
        Ok(p_in * (self.a * self.c - self.b) / (self.c * (p_in + self.c)))
    }

    /// Linear input power (mW) needed to harvest `target` mW.
    ///
    /// Inverse of [`EhModel::harvest`] on `[0, a - b/c)`.
    pub fn required_input(&self, target: f64) -> Result<f64, EhError> {
        if !(target >= 0.0) {
            return Err(EhError::NegativeInput(target));
        }
        let sat = self.saturation();
        if target >= sat {
            return Err(EhError::Saturated {
                target,
                saturation: sat,
            });
        }
        // (b - (e + b/c) c) / (e + b/c - a) == e c / (a - b/c - e)
        Ok(target * self.c / (sat - target))
    }
}

impl Default for EhModel {
    fn default() -> Self {
        Self {
            a: 2.463,
            b: 1.635,
            c: 0.826,
        }
    }
}

/// dBm to milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}
