//! Independent number-basis validator. States live in a truncated Fock
//! basis, one period is applied through the numerically exponentiated
//! block Hamiltonians, and σx projections are carried out explicitly. None
//! of the coherent-state algebra of [`crate::maps`] is used here; agreement
//! between the two routes is the crate's primary cross-check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::maps::Sign;
use crate::trajectory::OutcomeSequence;
use crate::{SystemParams, C64};

/// Truncation deficit above which a coherent expansion is rejected.
pub const COHERENT_DEFICIT_LIMIT: f64 = 1e-8;

/// Occupation allowed near the truncation boundary during replay.
pub const BOUNDARY_OCCUPATION_LIMIT: f64 = 1e-10;

/// Composite (oscillator ⊗ spin) vector: the σz = +1 block (n = 0..n_max)
/// followed by the σz = −1 block.
#[derive(Clone, Debug)]
pub struct FockCompositeVector {
    n_max: usize,
    amplitudes: Vec<C64>,
}

impl FockCompositeVector {
    pub fn from_blocks(plus: Vec<C64>, minus: Vec<C64>) -> Self {
        assert_eq!(plus.len(), minus.len());
        let n_max = plus.len() - 1;
        let mut amplitudes = plus;
        amplitudes.extend(minus);
        Self { n_max, amplitudes }
    }

    /// Product state |φ⟩|s⟩ₓ: blocks (φ/√2, s·φ/√2).
    pub fn product(orbital: &[C64], spin: Sign) -> Self {
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_blocks(
            orbital.iter().map(|a| a * inv).collect(),
            orbital.iter().map(|a| a * inv * spin.as_f64()).collect(),
        )
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn plus_block(&self) -> &[C64] {
        &self.amplitudes[..=self.n_max]
    }

    pub fn minus_block(&self) -> &[C64] {
        &self.amplitudes[self.n_max + 1..]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Real symmetric tridiagonal block Hamiltonian in units ħω0:
/// diagonal n + ½, off-diagonal ∓v√(n+1).
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalHamiltonian {
    diagonal: Vec<f64>,
    off_diagonal: Vec<f64>,
}

impl TridiagonalHamiltonian {
    pub fn size(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn off_diagonal(&self) -> &[f64] {
        &self.off_diagonal
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diagonal[i];
        }
        for i in 0..n - 1 {
            m[(i, i + 1)] = self.off_diagonal[i];
            m[(i + 1, i)] = self.off_diagonal[i];
        }
        m
    }

    /// Sorted eigenvalues (ascending), for spectrum checks.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let prop = Propagator::new(self)?;
        let mut vals = prop.eigenvalues.as_slice().to_vec();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(vals)
    }

    /// Apply exp(−i·phase·H) to an orbital vector (one-shot; use a
    /// [`Propagator`] to amortize the eigendecomposition over many steps).
    pub fn propagate(&self, phase: f64, vec: &[C64]) -> Result<Vec<C64>> {
        Ok(Propagator::new(self)?.apply(phase, vec))
    }
}

/// H_± = diag(n + ½) ∓ v·(√(n+1) couplings), built from the undisplaced
/// oscillator plus the linear coupling ∓v(â + â†).
pub fn build_hpm(v: f64, n_max: usize) -> (TridiagonalHamiltonian, TridiagonalHamiltonian) {
    let diagonal: Vec<f64> = (0..=n_max).map(|n| n as f64 + 0.5).collect();
    let couplings: Vec<f64> = (0..n_max).map(|n| ((n + 1) as f64).sqrt()).collect();
    (
        TridiagonalHamiltonian {
            diagonal: diagonal.clone(),
            off_diagonal: couplings.iter().map(|c| -v * c).collect(),
        },
        TridiagonalHamiltonian {
            diagonal,
            off_diagonal: couplings.iter().map(|c| v * c).collect(),
        },
    )
}

/// Spectral decomposition of a block Hamiltonian; immutable once built and
/// shareable across threads.
pub struct Propagator {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    eigenvectors_t: DMatrix<f64>,
}

impl Propagator {
    pub fn new(h: &TridiagonalHamiltonian) -> Result<Self> {
        let eig = nalgebra::linalg::SymmetricEigen::try_new(h.to_dense(), f64::EPSILON, 0)
            .ok_or_else(|| {
                Error::Numerical(format!(
                    "symmetric eigendecomposition failed for size {}",
                    h.size()
                ))
            })?;
        let eigenvectors_t = eig.eigenvectors.transpose();
        Ok(Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            eigenvectors_t,
        })
    }

    /// exp(−i·phase·H)·vec through the spectral decomposition.
    pub fn apply(&self, phase: f64, vec: &[C64]) -> Vec<C64> {
        let n = self.eigenvalues.len();
        assert_eq!(vec.len(), n);
        let re = DVector::from_iterator(n, vec.iter().map(|c| c.re));
        let im = DVector::from_iterator(n, vec.iter().map(|c| c.im));
        let mut spec_re = &self.eigenvectors_t * re;
        let mut spec_im = &self.eigenvectors_t * im;
        for k in 0..n {
            let (s, c) = (phase * self.eigenvalues[k]).sin_cos();
            let (a, b) = (spec_re[k], spec_im[k]);
            // (a + ib)(c - is)
            spec_re[k] = a * c + b * s;
            spec_im[k] = b * c - a * s;
        }
        let out_re = &self.eigenvectors * spec_re;
        let out_im = &self.eigenvectors * spec_im;
        (0..n).map(|i| C64::new(out_re[i], out_im[i])).collect()
    }
}

/// Coherent state |z⟩ in the truncated number basis, amplitudes
/// e^{−|z|²/2} zⁿ/√(n!) through a log-magnitude recurrence, plus the
/// truncation deficit 1 − Σ|amp|².
pub fn coherent_in_fock(z: C64, n_max: usize) -> Result<(Vec<C64>, f64)> {
    if n_max < 1 {
        return Err(Error::config("n_max", "must be >= 1"));
    }
    let mut amps = Vec::with_capacity(n_max + 1);
    let modulus = z.norm();
    if modulus == 0.0 {
        amps.push(C64::new(1.0, 0.0));
        amps.extend(std::iter::repeat(C64::new(0.0, 0.0)).take(n_max));
        return Ok((amps, 0.0));
    }
    let log_mod = modulus.ln();
    let arg = z.arg();
    let mut log_mag = -0.5 * z.norm_sqr();
    let mut phase = 0.0;
    let mut captured = 0.0;
    for n in 0..=n_max {
        if n > 0 {
            log_mag += log_mod - 0.5 * (n as f64).ln();
            phase += arg;
        }
        let mag = if log_mag < -745.0 { 0.0 } else { log_mag.exp() };
        captured += mag * mag;
        amps.push(C64::from_polar(mag, phase));
    }
    let deficit = (1.0 - captured).max(0.0);
    if deficit > COHERENT_DEFICIT_LIMIT {
        return Err(Error::Truncation(format!(
            "coherent expansion of |z| = {modulus:.3} at n_max = {n_max} leaves deficit {deficit:.3e}; raise n_max"
        )));
    }
    Ok((amps, deficit))
}

/// Truncation level for a replay: the excursion bound |z0| + 2|v|N plus
/// Poisson-tail headroom.
pub fn default_n_max(params: &SystemParams, n_steps: usize) -> usize {
    let ex = params.z0().norm() + 2.0 * params.v().abs() * n_steps as f64;
    (ex * ex + 10.0 * ex + 20.0).ceil() as usize
}

/// Replay a measurement record entirely in the number basis: block-evolve,
/// project onto |s_j⟩ₓ, renormalize, accumulate the probability. Returns the
/// normalized orbital vector of the measured spin sector and the record
/// probability.
pub fn oracle_replay(
    params: &SystemParams,
    seq: &OutcomeSequence,
    n_max: usize,
) -> Result<(Vec<C64>, f64)> {
    let (coh, _deficit) = coherent_in_fock(params.z0(), n_max)?;
    let norm = coh.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let mut orbital: Vec<C64> = coh.iter().map(|a| a / norm).collect();
    if seq.is_empty() {
        return Ok((orbital, 1.0));
    }

    let (h_plus, h_minus) = build_hpm(params.v(), n_max);
    let u_plus = Propagator::new(&h_plus)?;
    let u_minus = Propagator::new(&h_minus)?;
    let phase = params.rotation_angle();

    // The composite state after a projection always factorizes as
    // |φ⟩|s⟩ₓ, i.e. blocks (φ/√2, s·φ/√2); tracking φ and s is the full
    // composite. Evolution acts blockwise (the Hamiltonian never mixes σz
    // sectors), so the next projection reads
    // ⟨s'|ₓ ψ = (U₊φ + s'·s·U₋φ)/2.
    let mut spin = seq.s0();
    let mut prob = 1.0;
    for j in 1..=seq.len() {
        let s = seq.spin_after(j);
        let a = u_plus.apply(phase, &orbital);
        let b = u_minus.apply(phase, &orbital);
        // ⟨s|ₓ (a|+⟩ + s_prev·b|−⟩)/√2 = (a + s·s_prev·b)/2
        let factor = (s * spin).as_f64();
        let projected: Vec<C64> = a
            .iter()
            .zip(&b)
            .map(|(ap, bm)| 0.5 * (ap + factor * bm))
            .collect();
        let p_cond = projected.iter().map(|c| c.norm_sqr()).sum::<f64>();
        if p_cond <= 0.0 {
            return Err(Error::ImpossibleOutcome {
                step: j,
                prob: p_cond,
                threshold: 0.0,
            });
        }
        let inv = p_cond.sqrt().recip();
        orbital = projected.iter().map(|c| c * inv).collect();
        prob *= p_cond;
        spin = s;

        let boundary: f64 = orbital[n_max.saturating_sub(9)..]
            .iter()
            .map(|c| c.norm_sqr())
            .sum();
        if boundary > BOUNDARY_OCCUPATION_LIMIT {
            return Err(Error::Truncation(format!(
                "boundary occupation {boundary:.3e} at step {j} exceeds {BOUNDARY_OCCUPATION_LIMIT:.0e}; raise n_max beyond {n_max}"
            )));
        }
    }
    Ok((orbital, prob))
}

/// ⟨u|w⟩ of two truncated vectors.
pub fn inner_product(u: &[C64], w: &[C64]) -> C64 {
    u.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}

/// Normalized overlap squared |⟨u|w⟩|²/(‖u‖²‖w‖²).
pub fn fidelity(u: &[C64], w: &[C64]) -> f64 {
    let uu: f64 = u.iter().map(|c| c.norm_sqr()).sum();
    let ww: f64 = w.iter().map(|c| c.norm_sqr()).sum();
    inner_product(u, w).norm_sqr() / (uu * ww)
}

/// Expand an engine branch sum Σ c_I e^{iΦ_I} |Z_I⟩ in the number basis so
/// it can be compared with oracle states.
pub fn expand_branch_sum(
    branches: &[crate::maps::Branch],
    phases: Option<&[f64]>,
    n_max: usize,
) -> Result<Vec<C64>> {
    let mut total = vec![C64::new(0.0, 0.0); n_max + 1];
    for (i, b) in branches.iter().enumerate() {
        let (amps, _) = coherent_in_fock(b.center, n_max)?;
        let coeff = C64::from_polar(1.0, phases.map_or(0.0, |p| p[i])) * b.sign.as_f64();
        for (t, a) in total.iter_mut().zip(&amps) {
            *t += coeff * a;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{coherent_overlap, map_apply};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn vacuum_expansion() {
        let (amps, deficit) = coherent_in_fock(c(0.0, 0.0), 10).unwrap();
        assert_eq!(deficit, 0.0);
        assert_eq!(amps[0], c(1.0, 0.0));
        assert!(amps[1..].iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn expansion_norm_is_one_minus_deficit() {
        let (amps, deficit) = coherent_in_fock(c(1.4, -2.2), 120).unwrap();
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        assert!((norm - (1.0 - deficit)).abs() < 1e-13);
    }

    #[test]
    fn truncation_deficit_is_reported_as_error() {
        assert!(matches!(
            coherent_in_fock(c(6.0, 0.0), 20),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn series_overlap_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let z1 = c(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let z2 = c(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let (a1, _) = coherent_in_fock(z1, 200).unwrap();
            let (a2, _) = coherent_in_fock(z2, 200).unwrap();
            let series = inner_product(&a1, &a2);
            let closed = coherent_overlap(z1, z2);
            assert!((series - closed).norm() <= 1e-10, "{series} vs {closed}");
        }
    }

    #[test]
    fn series_number_element_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..10 {
            let z1 = c(rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5));
            let z2 = c(rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5));
            let (a1, _) = coherent_in_fock(z1, 200).unwrap();
            let (a2, _) = coherent_in_fock(z2, 200).unwrap();
            // ⟨z1|n̂|z2⟩ = Σ n conj(a1_n) a2_n
            let series: C64 = a1
                .iter()
                .zip(&a2)
                .enumerate()
                .map(|(n, (x, y))| n as f64 * x.conj() * y)
                .sum();
            let closed = crate::maps::ho_number_matrix_element(z1, z2);
            assert!((series - closed).norm() <= 1e-10);
        }
    }

    #[test]
    fn zero_coupling_hamiltonian_is_diagonal() {
        let (hp, hm) = build_hpm(0.0, 8);
        assert!(hp.off_diagonal().iter().all(|&x| x == 0.0));
        assert_eq!(hp, hm);
        assert_eq!(hp.diagonal()[3], 3.5);
    }

    #[test]
    fn displaced_spectrum_is_shifted_ladder() {
        let (hp, hm) = build_hpm(2.0, 400);
        let ep = hp.eigenvalues().unwrap();
        let em = hm.eigenvalues().unwrap();
        for n in 0..10 {
            let expect = n as f64 + 0.5 - 4.0;
            assert!((ep[n] - expect).abs() <= 1e-8, "n={n}: {} vs {expect}", ep[n]);
            // parity: H+ and H- share their spectrum
            assert!((ep[n] - em[n]).abs() <= 1e-8);
        }
    }

    #[test]
    fn zero_phase_is_identity() {
        let (hp, _) = build_hpm(1.3, 60);
        let (vec, _) = coherent_in_fock(c(0.8, -0.5), 60).unwrap();
        let out = hp.propagate(0.0, &vec).unwrap();
        for (a, b) in vec.iter().zip(&out) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn propagation_is_unitary() {
        let (hp, _) = build_hpm(1.7, 150);
        let prop = Propagator::new(&hp).unwrap();
        let (vec, _) = coherent_in_fock(c(1.0, 0.6), 150).unwrap();
        let mut state = vec;
        for _ in 0..5 {
            state = prop.apply(2.0 * std::f64::consts::PI * 0.37, &state);
        }
        let norm: f64 = state.iter().map(|a| a.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn free_evolution_rotates_coherent_labels() {
        let p = SystemParams::new(0.29, 0.0, c(1.1, -0.7)).unwrap();
        let (h, _) = build_hpm(0.0, 120);
        let (vec, _) = coherent_in_fock(p.z0(), 120).unwrap();
        let out = h.propagate(p.rotation_angle(), &vec).unwrap();
        let rotated = p.z0() * C64::from_polar(1.0, -p.rotation_angle());
        let (expect, _) = coherent_in_fock(rotated, 120).unwrap();
        assert!(fidelity(&out, &expect) >= 1.0 - 1e-10);
    }

    #[test]
    fn propagated_coherent_state_follows_the_maps() {
        // numerical check of the displaced-frame rotation: U_±|z0⟩ is the
        // coherent state at Z_±(z0) up to a phase
        let p = SystemParams::new(0.37, 2.0, c(0.7, 0.7)).unwrap();
        let n_max = default_n_max(&p, 1);
        let (hp, hm) = build_hpm(p.v(), n_max);
        let (vec, _) = coherent_in_fock(p.z0(), n_max).unwrap();
        for (h, sign) in [(hp, Sign::Plus), (hm, Sign::Minus)] {
            let out = h.propagate(p.rotation_angle(), &vec).unwrap();
            let (expect, _) =
                coherent_in_fock(map_apply(p.z0(), sign, &p), n_max).unwrap();
            let f = fidelity(&out, &expect);
            assert!(f >= 1.0 - 1e-8, "sign {sign}: fidelity {f}");
        }
    }

    #[test]
    fn replay_without_coupling_keeps_probability_one() {
        let p = SystemParams::new(0.31, 0.0, c(0.9, 0.4)).unwrap();
        let seq = OutcomeSequence::parse(Sign::Minus, "---").unwrap();
        let (orbital, prob) = oracle_replay(&p, &seq, 80).unwrap();
        assert!((prob - 1.0).abs() < 1e-12);
        let rotated = p.z0() * C64::from_polar(1.0, -3.0 * p.rotation_angle());
        let (expect, _) = coherent_in_fock(rotated, 80).unwrap();
        assert!(fidelity(&orbital, &expect) >= 1.0 - 1e-10);
    }

    #[test]
    fn boundary_occupation_triggers_truncation_error() {
        let p = SystemParams::new(0.37, 2.0, c(1.0, 1.0)).unwrap();
        let seq = OutcomeSequence::parse(Sign::Plus, "++++").unwrap();
        // far below the rule's recommendation
        assert!(matches!(
            oracle_replay(&p, &seq, 60),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn composite_layout_and_block_evolution() {
        let (vec, _) = coherent_in_fock(c(0.4, -0.3), 40).unwrap();
        let comp = FockCompositeVector::product(&vec, Sign::Minus);
        assert_eq!(comp.n_max(), 40);
        assert_eq!(comp.amplitudes().len(), 82);
        assert!((comp.norm_sqr() - 1.0).abs() < 1e-12);
        // blocks stay in their σz sector under evolution: propagating each
        // separately conserves both block norms
        let (hp, hm) = build_hpm(1.2, 40);
        let a = hp.propagate(0.9, comp.plus_block()).unwrap();
        let b = hm.propagate(0.9, comp.minus_block()).unwrap();
        let na: f64 = a.iter().map(|x| x.norm_sqr()).sum();
        let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum();
        assert!((na - 0.5).abs() < 1e-10);
        assert!((nb - 0.5).abs() < 1e-10);
    }

    #[test]
    fn n_max_rule_covers_excursion() {
        let p = SystemParams::new(0.5, 2.0, c(1.0, 1.0)).unwrap();
        let ex = 2f64.sqrt() + 2.0 * 2.0 * 4.0;
        assert_eq!(
            default_n_max(&p, 4),
            (ex * ex + 10.0 * ex + 20.0).ceil() as usize
        );
    }
}
