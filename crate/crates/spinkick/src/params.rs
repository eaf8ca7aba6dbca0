//! Dimensionless model parameters shared by every computation.

use crate::error::{Error, Result};
use crate::C64;

/// Default cap on the number of measurement steps (2^20 branches ≈ 16 MB).
pub const DEFAULT_MAX_STEPS: usize = 20;

/// Model parameters in the dimensionless convention ħ = 1, b = 1.
///
/// The dynamics depends only on the frequency ratio `r` (per-step rotation
/// angle ω0T = 2πR), the kick strength `v` = α/ħω0, and the initial coherent
/// label `z0` = q0' + ip0'. The Larmor period only scales delivered power
/// (units ħ/T_L²) and is optional.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemParams {
    r: f64,
    v: f64,
    z0: C64,
    larmor_period: Option<f64>,
    max_steps: usize,
    prune_exponent: f64,
}

impl SystemParams {
    pub fn new(r: f64, v: f64, z0: C64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::config("r", format!("must be finite and > 0, got {r}")));
        }
        if !v.is_finite() {
            return Err(Error::config("v", format!("must be finite, got {v}")));
        }
        if !z0.re.is_finite() || !z0.im.is_finite() {
            return Err(Error::config("z0", format!("must be finite, got {z0}")));
        }
        Ok(Self {
            r,
            v,
            z0,
            larmor_period: None,
            max_steps: DEFAULT_MAX_STEPS,
            prune_exponent: 0.0,
        })
    }

    pub fn with_larmor_period(mut self, t_l: f64) -> Result<Self> {
        if !(t_l > 0.0) || !t_l.is_finite() {
            return Err(Error::config(
                "larmor_period",
                format!("must be finite and > 0, got {t_l}"),
            ));
        }
        self.larmor_period = Some(t_l);
        Ok(self)
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Result<Self> {
        if max_steps == 0 {
            return Err(Error::config("max_steps", "must be >= 1"));
        }
        self.max_steps = max_steps;
        Ok(self)
    }

    /// Gram-sum pair pruning: skip pairs whose Gaussian overlap exponent
    /// |ΔZ|²/2 exceeds this threshold. 0 disables pruning; 745 drops only
    /// pairs that underflow to exactly 0 in double precision.
    pub fn with_prune_exponent(mut self, prune: f64) -> Result<Self> {
        if !(prune >= 0.0) || !prune.is_finite() {
            return Err(Error::config(
                "prune",
                format!("must be finite and >= 0, got {prune}"),
            ));
        }
        self.prune_exponent = prune;
        Ok(self)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn z0(&self) -> C64 {
        self.z0
    }

    pub fn larmor_period(&self) -> Option<f64> {
        self.larmor_period
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn prune_exponent(&self) -> f64 {
        self.prune_exponent
    }

    /// Per-step phase-space rotation angle ω0T = 2πR.
    pub fn rotation_angle(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.r
    }

    /// Refuse branch enumeration beyond the step cap.
    pub fn check_step_capacity(&self, n: usize) -> Result<()> {
        if n > self.max_steps {
            return Err(Error::Capacity(format!(
                "{n} steps exceed max_steps = {} (2^{n} branches); raise --max-steps to override",
                self.max_steps
            )));
        }
        Ok(())
    }

    /// Parameter set for the echo's perturbed evolution: R' = R + δR at
    /// fixed stroboscopic frequency. By default the kick strength rescales
    /// as v' = v·R/R' (fixed α while ω0 shifts); `hold_v` keeps v fixed.
    pub fn perturbed(&self, delta_r: f64, hold_v: bool) -> Result<Self> {
        if !delta_r.is_finite() {
            return Err(Error::config("delta_r", "must be finite"));
        }
        let r_new = self.r + delta_r;
        if r_new <= 0.0 {
            return Err(Error::config(
                "delta_r",
                format!("R + delta_R = {r_new} must stay > 0"),
            ));
        }
        let v_new = if hold_v { self.v } else { self.v * self.r / r_new };
        Ok(Self {
            r: r_new,
            v: v_new,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_values() {
        assert!(SystemParams::new(0.0, 1.0, C64::new(0.0, 0.0)).is_err());
        assert!(SystemParams::new(-0.3, 1.0, C64::new(0.0, 0.0)).is_err());
        assert!(SystemParams::new(0.5, f64::NAN, C64::new(0.0, 0.0)).is_err());
        assert!(SystemParams::new(0.5, 1.0, C64::new(f64::INFINITY, 0.0)).is_err());
        let p = SystemParams::new(0.5, 1.0, C64::new(0.0, 0.0)).unwrap();
        assert!(p.clone().with_max_steps(0).is_err());
        assert!(p.clone().with_larmor_period(-1.0).is_err());
        assert!(p.with_prune_exponent(f64::NAN).is_err());
    }

    #[test]
    fn step_capacity_guard() {
        let p = SystemParams::new(0.5, 1.0, C64::new(0.0, 0.0))
            .unwrap()
            .with_max_steps(4)
            .unwrap();
        assert!(p.check_step_capacity(4).is_ok());
        assert!(matches!(
            p.check_step_capacity(5),
            Err(crate::Error::Capacity(_))
        ));
    }

    #[test]
    fn echo_perturbation_rescales_v() {
        let p = SystemParams::new(0.4, 2.0, C64::new(1.0, 0.0)).unwrap();
        let q = p.perturbed(0.01, false).unwrap();
        assert!((q.r() - 0.41).abs() < 1e-15);
        assert!((q.v() - 2.0 * 0.4 / 0.41).abs() < 1e-15);
        let q = p.perturbed(0.01, true).unwrap();
        assert_eq!(q.v(), 2.0);
        assert!(p.perturbed(-0.5, false).is_err());
    }
}
