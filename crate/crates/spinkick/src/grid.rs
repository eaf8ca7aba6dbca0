//! Rectangular phase-space grids for Husimi field evaluation.

use crate::error::{Error, Result};
use crate::{par, C64};

/// A rectangular grid in dimensionless (q', p') with a row-major field
/// (q index outer, p index inner).
#[derive(Clone, Debug, PartialEq)]
pub struct HusimiGrid {
    q_min: f64,
    q_max: f64,
    p_min: f64,
    p_max: f64,
    nq: usize,
    np: usize,
    values: Vec<f64>,
}

impl HusimiGrid {
    pub fn new(q_min: f64, q_max: f64, p_min: f64, p_max: f64, nq: usize, np: usize) -> Result<Self> {
        for (name, lo, hi) in [("q", q_min, q_max), ("p", p_min, p_max)] {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::config(format!("{name}_grid"), "bounds must be finite"));
            }
            if !(lo < hi) {
                return Err(Error::config(
                    format!("{name}_grid"),
                    format!("min {lo} must be < max {hi}"),
                ));
            }
        }
        if nq < 2 || np < 2 {
            return Err(Error::config("grid", "node counts must be >= 2"));
        }
        Ok(Self {
            q_min,
            q_max,
            p_min,
            p_max,
            nq,
            np,
            values: vec![0.0; nq * np],
        })
    }

    /// Grid from per-axis steps; the last node may fall short of the upper
    /// bound by less than one step.
    pub fn from_steps(
        q_min: f64,
        q_max: f64,
        dq: f64,
        p_min: f64,
        p_max: f64,
        dp: f64,
    ) -> Result<Self> {
        if !(dq > 0.0) || !(dp > 0.0) {
            return Err(Error::config("grid", "step must be > 0"));
        }
        let count = |lo: f64, hi: f64, step: f64| ((hi - lo) / step + 1e-9).floor() as usize + 1;
        let nq = count(q_min, q_max, dq);
        let np = count(p_min, p_max, dp);
        Self::new(
            q_min,
            q_min + dq * (nq - 1) as f64,
            p_min,
            p_min + dp * (np - 1) as f64,
            nq.max(2),
            np.max(2),
        )
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    pub fn np(&self) -> usize {
        self.np
    }

    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / (self.nq - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.np - 1) as f64
    }

    /// Phase-space point of node (iq, ip).
    pub fn node(&self, iq: usize, ip: usize) -> C64 {
        C64::new(
            self.q_min + self.dq() * iq as f64,
            self.p_min + self.dp() * ip as f64,
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, iq: usize, ip: usize) -> f64 {
        self.values[iq * self.np + ip]
    }

    /// Evaluate `f` at every node (in parallel when enabled; node order is
    /// fixed so results are deterministic).
    pub fn fill(&mut self, f: impl Fn(C64) -> f64 + Sync + Send) {
        let np = self.np;
        let q_min = self.q_min;
        let p_min = self.p_min;
        let dq = self.dq();
        let dp = self.dp();
        par::fill_indexed(&mut self.values, |k| {
            let z = C64::new(
                q_min + dq * (k / np) as f64,
                p_min + dp * (k % np) as f64,
            );
            f(z)
        });
    }

    /// Riemann sum of the field times the cell area dq'·dp'.
    pub fn integral(&self) -> f64 {
        let cell = self.dq() * self.dp();
        self.values.iter().sum::<f64>() * cell
    }

    /// Iterate (q', p', value) rows in emission order.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.nq).flat_map(move |iq| {
            (0..self.np).map(move |ip| {
                let z = self.node(iq, ip);
                (z.re, z.im, self.value(iq, ip))
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_bounds() {
        assert!(HusimiGrid::new(0.0, 1.0, 0.0, 1.0, 2, 2).is_ok());
        assert!(HusimiGrid::new(1.0, 0.0, 0.0, 1.0, 2, 2).is_err());
        assert!(HusimiGrid::new(0.0, 1.0, 0.0, f64::NAN, 2, 2).is_err());
        assert!(HusimiGrid::new(0.0, 1.0, 0.0, 1.0, 1, 2).is_err());
    }

    #[test]
    fn step_construction_counts_nodes() {
        let g = HusimiGrid::from_steps(-1.0, 1.0, 0.5, 0.0, 2.0, 1.0).unwrap();
        assert_eq!(g.nq(), 5);
        assert_eq!(g.np(), 3);
        assert!((g.node(4, 2) - C64::new(1.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn fill_and_integrate_gaussian() {
        // unit-height Gaussian integrates to pi
        let mut g = HusimiGrid::from_steps(-6.0, 6.0, 0.1, -6.0, 6.0, 0.1).unwrap();
        g.fill(|z| (-z.norm_sqr()).exp());
        assert!((g.integral() - std::f64::consts::PI).abs() < 0.01);
    }
}
