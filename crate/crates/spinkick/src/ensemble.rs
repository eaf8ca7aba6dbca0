//! Record-averaged (ensemble) quantities: the equal-weight mixture of all
//! 2^N branch centers, closed-form moments and their enumeration oracle, the
//! delivered-power resonance, ensemble Husimi fields, explicit Husimi
//! centers, and phase-space crystal diagnostics.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::HusimiGrid;
use crate::kahan::Kahan;
use crate::maps::{compose_closed_form, BranchIndex};
use crate::{par, SystemParams, C64};

/// The 2^N equal-weight coherent centers realizing the record-averaged state.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleState {
    n_steps: usize,
    centers: Vec<C64>,
}

impl EnsembleState {
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Centers in canonical index order.
    pub fn centers(&self) -> &[C64] {
        &self.centers
    }

    /// Equal weight 2^{-N} of each center.
    pub fn weight(&self) -> f64 {
        0.5f64.powi(self.n_steps as i32)
    }
}

/// Ensemble means and variances, dimensionless (lengths in √2 b, momenta in
/// √2 ħ/b, energy in ħω0; var_x is ΔX²/2b², var_p is ΔP²·b²/2ħ²).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentReport {
    pub n_steps: usize,
    pub mean_energy: f64,
    pub mean_q: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
}

/// All 2^N closed-form centers in canonical order.
pub fn enumerate_ensemble(params: &SystemParams, n: usize) -> Result<EnsembleState> {
    params.check_step_capacity(n)?;
    let centers = par::map_indexed(1usize << n, |rank| {
        compose_closed_form(params, &BranchIndex::from_rank(rank, n))
    });
    Ok(EnsembleState { n_steps: n, centers })
}

/// Closed-form ensemble moments after N steps.
///
/// mean energy = |z0|² + ½ + 4v²sin²(πR)·N; the means follow the free
/// oscillator, z0·e^{−iNω0T}; the variances add one odd-ℓ term per step.
pub fn closed_form_moments(params: &SystemParams, n: usize) -> MomentReport {
    let theta = params.rotation_angle();
    let kick = 4.0 * params.v() * params.v() * (PI * params.r()).sin().powi(2);
    let angle = theta * n as f64;
    let z0 = params.z0();
    let mean_q = z0.re * angle.cos() + z0.im * angle.sin();
    let mean_p = -z0.re * angle.sin() + z0.im * angle.cos();
    let mut sin_sum = Kahan::new();
    let mut cos_sum = Kahan::new();
    for l in (1..=2 * n).step_by(2) {
        let half = 0.5 * theta * l as f64;
        sin_sum.add(half.sin().powi(2));
        cos_sum.add(half.cos().powi(2));
    }
    MomentReport {
        n_steps: n,
        mean_energy: z0.norm_sqr() + 0.5 + kick * n as f64,
        mean_q,
        mean_p,
        var_x: kick * sin_sum.value() + 0.25,
        var_p: kick * cos_sum.value() + 0.25,
    }
}

/// Enumeration oracle for [`closed_form_moments`], using only the center
/// list: cross terms vanish in the record average, so each moment is a
/// diagonal coherent-state expectation.
pub fn enumerated_moments(ens: &EnsembleState) -> MomentReport {
    let n = ens.centers.len() as f64;
    let mut e = Kahan::new();
    let mut q = Kahan::new();
    let mut p = Kahan::new();
    for z in &ens.centers {
        e.add(z.norm_sqr());
        q.add(z.re);
        p.add(z.im);
    }
    let mean_q = q.value() / n;
    let mean_p = p.value() / n;
    let mut vq = Kahan::new();
    let mut vp = Kahan::new();
    for z in &ens.centers {
        vq.add((z.re - mean_q) * (z.re - mean_q));
        vp.add((z.im - mean_p) * (z.im - mean_p));
    }
    MomentReport {
        n_steps: ens.n_steps,
        mean_energy: e.value() / n + 0.5,
        mean_q,
        mean_p,
        var_x: vq.value() / n + 0.25,
        var_p: vp.value() / n + 0.25,
    }
}

/// Average delivered power 2π sin²(πR)/R in units ħ/T_L². Requires the
/// Larmor period, which fixes the unit's physical scale.
pub fn mean_power(params: &SystemParams) -> Result<f64> {
    if params.larmor_period().is_none() {
        return Err(Error::config(
            "larmor_period",
            "power in units ħ/T_L² needs the Larmor period",
        ));
    }
    let r = params.r();
    Ok(2.0 * PI * (PI * r).sin().powi(2) / r)
}

/// Small-period (continuous) power 2v²sin²(πR)/(πR) in units ħω0²; tends to
/// zero linearly in R, freezing the dynamics under continuous measurement.
pub fn mean_power_continuous(params: &SystemParams) -> f64 {
    let r = params.r();
    2.0 * params.v() * params.v() * (PI * r).sin().powi(2) / (PI * r)
}

/// The frequency ratio maximizing delivered power: the root of
/// tan(πR) = 2πR in (0.25, 0.5), via bisection on
/// g(R) = sin(πR) − 2πR cos(πR).
pub fn resonance_ratio() -> f64 {
    let g = |r: f64| (PI * r).sin() - 2.0 * PI * r * (PI * r).cos();
    let mut lo = 0.25;
    let mut hi = 0.4999;
    debug_assert!(g(lo) < 0.0 && g(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    debug_assert!(g(root).abs() <= 1e-13);
    root
}

/// Fill `grid` with the ensemble Husimi field
/// h(q', p') = 2^{-N} Σ_I exp(−(q'−Re Z_I)² − (p'−Im Z_I)²) ∈ (0, 1].
pub fn ensemble_husimi(ens: &EnsembleState, grid: &mut HusimiGrid) {
    let weight = ens.weight();
    let centers = &ens.centers;
    grid.fill(|z| {
        let mut acc = Kahan::new();
        for c in centers {
            let d2 = (z - c).norm_sqr();
            if d2 < crate::maps::OVERLAP_EXP_CUTOFF {
                acc.add((-d2).exp());
            }
        }
        weight * acc.value()
    });
}

/// Explicit Husimi center of one branch from real trigonometric sums; a
/// cross-check of [`compose_closed_form`] that never touches complex
/// exponentials of the composed map.
pub fn husimi_centers(params: &SystemParams, idx: &BranchIndex) -> (f64, f64) {
    let theta = params.rotation_angle();
    let n = idx.len();
    let angle = theta * n as f64;
    let z0 = params.z0();
    let mut q = z0.re * angle.cos() + z0.im * angle.sin();
    let mut p = -z0.re * angle.sin() + z0.im * angle.cos();
    let v = params.v();
    for (j, s) in idx.signs().iter().enumerate() {
        let back = (n - (j + 1)) as f64 * theta;
        q += s.as_f64() * v * (back.cos() - (back + theta).cos());
        p += s.as_f64() * v * ((back + theta).sin() - back.sin());
    }
    (q, p)
}

/// Crystal-lattice diagnostics of the rotated-back centers.
#[derive(Clone, Debug)]
pub struct CrystalReport {
    pub n_steps: usize,
    /// Centers with the overall rotation undone and z0 subtracted.
    pub rotated_centers: Vec<C64>,
    /// Distance of each rotated-back center to v(1+i)·(ℤ+iℤ).
    pub lattice_residuals: Vec<f64>,
    pub max_lattice_residual: f64,
    /// Number of distinct centers after 1e-9 deduplication.
    pub distinct_centers: usize,
}

/// Rotate the centers back by e^{+iNω0T}, subtract z0, and measure distances
/// to the square lattice v(1+i)·(ℤ+iℤ). At R = 1/4 every center lies on the
/// lattice exactly; elsewhere the residuals are diagnostic only.
pub fn crystal_lattice_check(ens: &EnsembleState, params: &SystemParams) -> CrystalReport {
    let angle = params.rotation_angle() * ens.n_steps as f64;
    let unrot = C64::from_polar(1.0, angle);
    let base = params.v() * C64::new(1.0, 1.0);
    let rotated: Vec<C64> = ens
        .centers
        .iter()
        .map(|z| z * unrot - params.z0())
        .collect();
    let residuals: Vec<f64> = rotated
        .iter()
        .map(|w| {
            if base.norm_sqr() == 0.0 {
                return w.norm();
            }
            let u = w / base;
            let nearest = C64::new(u.re.round(), u.im.round());
            ((u - nearest) * base).norm()
        })
        .collect();
    let max_lattice_residual = residuals.iter().copied().fold(0.0, f64::max);

    let mut sorted = rotated.clone();
    sorted.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    let mut distinct = if sorted.is_empty() { 0 } else { 1 };
    for pair in sorted.windows(2) {
        if (pair[1].re - pair[0].re).abs() > 1e-9 || (pair[1].im - pair[0].im).abs() > 1e-9 {
            distinct += 1;
        }
    }

    CrystalReport {
        n_steps: ens.n_steps,
        rotated_centers: rotated,
        lattice_residuals: residuals,
        max_lattice_residual,
        distinct_centers: distinct,
    }
}
