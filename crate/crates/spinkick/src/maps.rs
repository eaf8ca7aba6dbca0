//! Phase-space maps, their closed-form composition, sign coefficients, and
//! coherent-state inner products. Everything else in the crate builds on
//! these pure functions.
//!
//! One evolution period rotates a coherent label by ω0T = 2πR about the
//! displaced potential center: Z_±(z) = (z ∓ v)e^{−iω0T} ± v. N compositions
//! collapse to a single translation plus rotation, which is what makes exact
//! 2^N-branch evolution affordable.

use crate::error::{Error, Result};
use crate::kahan::{Kahan, KahanC};
use crate::par;
use crate::trajectory::OutcomeSequence;
use crate::{SystemParams, C64};

/// Exponents below this underflow `exp` to a subnormal; overlaps are cut to
/// exactly zero there.
pub(crate) const OVERLAP_EXP_CUTOFF: f64 = 745.0;

/// A two-valued sign: a σx eigenvalue or a map label i_j.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    #[inline]
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    #[inline]
    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn from_i8(s: i8) -> Result<Self> {
        match s {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            _ => Err(Error::config("sign", format!("must be +1 or -1, got {s}"))),
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            '+' => Ok(Sign::Plus),
            '-' => Ok(Sign::Minus),
            _ => Err(Error::config(
                "outcomes",
                format!("expected '+' or '-', got {c:?}"),
            )),
        }
    }

    #[inline]
    pub fn flipped(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;

    #[inline]
    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// An arrangement I_N = {i_N, …, i_1} of map labels; `signs[0]` is i_1, the
/// map applied first.
///
/// Canonical rank: the binary integer with i_1 in the least-significant bit
/// and +1 ↦ 0, −1 ↦ 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchIndex {
    signs: Vec<Sign>,
}

impl BranchIndex {
    pub fn new(signs: Vec<Sign>) -> Self {
        Self { signs }
    }

    /// Index of canonical rank `rank` among the 2^n arrangements of length n.
    pub fn from_rank(rank: usize, n: usize) -> Self {
        assert!(n < usize::BITS as usize && (n == 0 || rank >> n == 0));
        let signs = (0..n)
            .map(|j| {
                if (rank >> j) & 1 == 0 {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            })
            .collect();
        Self { signs }
    }

    pub fn rank(&self) -> usize {
        self.signs
            .iter()
            .enumerate()
            .fold(0, |acc, (j, s)| acc | (usize::from(*s == Sign::Minus) << j))
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    /// Map labels in order of application (i_1 first).
    pub fn signs(&self) -> &[Sign] {
        &self.signs
    }
}

impl std::fmt::Display for BranchIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in &self.signs {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// One term of a signed coherent superposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch {
    pub sign: Sign,
    pub center: C64,
}

/// An unnormalized superposition Σ c_I |Z_I⟩ with c_I = ±1, kept in
/// canonical branch order.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedCoherentSum {
    branches: Vec<Branch>,
}

impl SignedCoherentSum {
    /// Single positive branch |z⟩.
    pub fn single(center: C64) -> Self {
        Self {
            branches: vec![Branch {
                sign: Sign::Plus,
                center,
            }],
        }
    }

    pub fn from_branches(branches: Vec<Branch>) -> Self {
        Self { branches }
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Squared norm ‖Σ c_I |Z_I⟩‖² via the Gram double sum, compensated and
    /// accumulated in canonical order, clamped to ≥ 0.
    pub fn norm_sq(&self) -> f64 {
        gram_norm_sq(&self.branches, None, 0.0)
    }
}

/// One application of the ± map: Z_s(z) = (z ∓ v)e^{−iω0T} ± v.
pub fn map_apply(z: C64, sign: Sign, params: &SystemParams) -> C64 {
    let theta = params.rotation_angle();
    let rot = C64::from_polar(1.0, -theta);
    let sv = sign.as_f64() * params.v();
    (z - sv) * rot + sv
}

/// Closed form of N composed maps:
/// Z_{I_N} = (z0 + 2iv e^{−iω0T/2} sin(ω0T/2) Σ_j i_j e^{iω0T·j}) e^{−iNω0T}.
pub fn compose_closed_form(params: &SystemParams, idx: &BranchIndex) -> C64 {
    let (w, theta) = decompose_translation_rotation(params, idx);
    (params.z0() + w) * C64::from_polar(1.0, theta)
}

/// The z0-independent translation W_{I_N} and the rotation angle θ = −Nω0T
/// with Z_{I_N} = e^{iθ}(z0 + W_{I_N}).
pub fn decompose_translation_rotation(params: &SystemParams, idx: &BranchIndex) -> (C64, f64) {
    let theta0 = params.rotation_angle();
    // 2i sin(θ/2) e^{-iθ/2} = (1 - cos θ) + i sin θ
    let w_unit = C64::new(1.0 - theta0.cos(), theta0.sin());
    let mut phase_sum = C64::new(0.0, 0.0);
    for (j, s) in idx.signs().iter().enumerate() {
        phase_sum += s.as_f64() * C64::from_polar(1.0, theta0 * (j + 1) as f64);
    }
    let w = params.v() * w_unit * phase_sum;
    (w, -(idx.len() as f64) * theta0)
}

/// Trajectory coefficient c_{I_N} = Π_j (s_j s_{j−1})^{δ_{i_j,−1}}.
pub fn sign_coefficient(idx: &BranchIndex, outcomes: &OutcomeSequence) -> Result<Sign> {
    if idx.len() != outcomes.len() {
        return Err(Error::config(
            "outcomes",
            format!(
                "branch index length {} does not match outcome record length {}",
                idx.len(),
                outcomes.len()
            ),
        ));
    }
    let mut acc = Sign::Plus;
    for (j, map_sign) in idx.signs().iter().enumerate() {
        if *map_sign == Sign::Minus {
            acc = acc * outcomes.spin_after(j + 1) * outcomes.spin_after(j);
        }
    }
    Ok(acc)
}

/// Coherent-state overlap ⟨z1|z2⟩ = exp(−|z1|²/2 − |z2|²/2 + z̄1 z2),
/// evaluated through its log-domain decomposition
/// exp(−|z1−z2|²/2) · e^{i Im(z̄1 z2)}. Exponents below −745 give exactly 0.
pub fn coherent_overlap(z1: C64, z2: C64) -> C64 {
    let re_exp = -0.5 * (z1 - z2).norm_sqr();
    if re_exp < -OVERLAP_EXP_CUTOFF {
        return C64::new(0.0, 0.0);
    }
    let angle = z1.re * z2.im - z1.im * z2.re;
    C64::from_polar(re_exp.exp(), angle)
}

/// Number-operator matrix element ⟨z1|â†â|z2⟩ = z̄1 z2 ⟨z1|z2⟩.
pub fn ho_number_matrix_element(z1: C64, z2: C64) -> C64 {
    z1.conj() * z2 * coherent_overlap(z1, z2)
}

#[inline]
fn coeff(branch: &Branch, phases: Option<&[f64]>, i: usize) -> (f64, f64) {
    // (sign, phase) of the effective coefficient c_i e^{iΦ_i}
    let phi = phases.map_or(0.0, |p| p[i]);
    (branch.sign.as_f64(), phi)
}

/// Gram norm² of a (possibly phase-carrying) signed coherent sum:
/// Σ_{I,J} conj(ĉ_I) ĉ_J ⟨Z_I|Z_J⟩ with ĉ_I = c_I e^{iΦ_I}.
///
/// Rows are evaluated independently (in parallel when enabled) and combined
/// sequentially in canonical order; the result does not depend on thread
/// count. `prune > 0` skips pairs with Gaussian exponent above the
/// threshold.
pub(crate) fn gram_norm_sq(branches: &[Branch], phases: Option<&[f64]>, prune: f64) -> f64 {
    let n = branches.len();
    if n == 0 {
        return 0.0;
    }
    let rows = par::map_indexed(n - 1, |i| {
        let (si, phi_i) = coeff(&branches[i], phases, i);
        let zi = branches[i].center;
        let mut row = Kahan::new();
        for (j, bj) in branches.iter().enumerate().skip(i + 1) {
            let half_d2 = 0.5 * (zi - bj.center).norm_sqr();
            if half_d2 > OVERLAP_EXP_CUTOFF || (prune > 0.0 && half_d2 > prune) {
                continue;
            }
            let (sj, phi_j) = coeff(bj, phases, j);
            let angle = zi.re * bj.center.im - zi.im * bj.center.re + phi_j - phi_i;
            row.add(si * sj * (-half_d2).exp() * angle.cos());
        }
        row.value()
    });
    let mut off = Kahan::new();
    for r in rows {
        off.add(r);
    }
    // diagonal terms are exactly 1 each
    (n as f64 + 2.0 * off.value()).max(0.0)
}

/// Numerator of the oscillator-energy expectation in units ħω0:
/// Σ_{I,J} conj(ĉ_I) ĉ_J (⟨Z_I|â†â|Z_J⟩ + ½⟨Z_I|Z_J⟩), summed as conjugate
/// pairs so the result is real by construction.
pub(crate) fn gram_energy_numerator(
    branches: &[Branch],
    phases: Option<&[f64]>,
    prune: f64,
) -> f64 {
    let n = branches.len();
    let rows = par::map_indexed(n, |i| {
        let (si, phi_i) = coeff(&branches[i], phases, i);
        let zi = branches[i].center;
        let mut row = Kahan::new();
        // diagonal term first so each row is self-contained
        row.add(zi.norm_sqr() + 0.5);
        for (j, bj) in branches.iter().enumerate().skip(i + 1) {
            let zj = bj.center;
            let half_d2 = 0.5 * (zi - zj).norm_sqr();
            if half_d2 > OVERLAP_EXP_CUTOFF || (prune > 0.0 && half_d2 > prune) {
                continue;
            }
            let (sj, phi_j) = coeff(bj, phases, j);
            let re_el = zi.re * zj.re + zi.im * zj.im + 0.5; // Re(z̄i zj) + 1/2
            let im_el = zi.re * zj.im - zi.im * zj.re; // Im(z̄i zj)
            let angle = im_el + phi_j - phi_i;
            let (sin_a, cos_a) = angle.sin_cos();
            row.add(2.0 * si * sj * (-half_d2).exp() * (re_el * cos_a - im_el * sin_a));
        }
        row.value()
    });
    let mut total = Kahan::new();
    for r in rows {
        total.add(r);
    }
    total.value()
}

/// Cross inner product ⟨Σ ĉ_I Z_I | Σ ĉ'_J Z'_J⟩ between two signed sums.
pub(crate) fn gram_cross(
    bra: (&[Branch], Option<&[f64]>),
    ket: (&[Branch], Option<&[f64]>),
    prune: f64,
) -> C64 {
    let (bb, bp) = bra;
    let (kb, kp) = ket;
    let rows = par::map_indexed(bb.len(), |i| {
        let (si, phi_i) = coeff(&bb[i], bp, i);
        let zi = bb[i].center;
        let mut row = KahanC::new();
        for (j, bj) in kb.iter().enumerate() {
            let half_d2 = 0.5 * (zi - bj.center).norm_sqr();
            if half_d2 > OVERLAP_EXP_CUTOFF || (prune > 0.0 && half_d2 > prune) {
                continue;
            }
            let (sj, phi_j) = coeff(bj, kp, j);
            let angle = zi.re * bj.center.im - zi.im * bj.center.re + phi_j - phi_i;
            let (sin_a, cos_a) = angle.sin_cos();
            let mag = si * sj * (-half_d2).exp();
            row.add(mag * cos_a, mag * sin_a);
        }
        row.value()
    });
    let mut re = Kahan::new();
    let mut im = Kahan::new();
    for (r, i) in rows {
        re.add(r);
        im.add(i);
    }
    C64::new(re.value(), im.value())
}

/// Amplitude Σ_I ĉ_I ⟨z|Z_I⟩ at one phase-space point.
pub(crate) fn husimi_amplitude(z: C64, branches: &[Branch], phases: Option<&[f64]>) -> C64 {
    let mut acc = KahanC::new();
    for (i, b) in branches.iter().enumerate() {
        let half_d2 = 0.5 * (z - b.center).norm_sqr();
        if half_d2 > OVERLAP_EXP_CUTOFF {
            continue;
        }
        let (s, phi) = coeff(b, phases, i);
        let angle = z.re * b.center.im - z.im * b.center.re + phi;
        let (sin_a, cos_a) = angle.sin_cos();
        let mag = s * (-half_d2).exp();
        acc.add(mag * cos_a, mag * sin_a);
    }
    let (re, im) = acc.value();
    C64::new(re, im)
}
