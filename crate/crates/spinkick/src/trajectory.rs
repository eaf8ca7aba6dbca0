//! Single-trajectory evolution: branch doubling per measurement step,
//! stochastic sampling or forced replay of σx outcomes, per-trajectory
//! probability, energy, Husimi fields, and the Loschmidt echo.
//!
//! Branches carry the measurement signs of the record table plus a dynamical
//! phase per branch. One period contributes e^{±iχ(z)} to a branch mapped
//! from parent center z, with χ(z) = v·Im(z(1 − e^{−iω0T})); the remaining
//! per-step phase is common to all branches and dropped. With these phases
//! the branch sum reproduces the exact composite evolution (the number-basis
//! validator agrees to machine precision), while the signs alone do not.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::HusimiGrid;
use crate::maps::{
    gram_cross, gram_energy_numerator, husimi_amplitude, map_apply, Branch, Sign,
    SignedCoherentSum,
};
use crate::{SystemParams, C64};

/// Conditional probabilities below this are treated as impossible outcomes
/// when replaying a forced record.
pub const IMPOSSIBLE_OUTCOME_THRESHOLD: f64 = 1e-15;

/// Norm² below this means the state is numerically degenerate.
pub const DEGENERATE_NORM_THRESHOLD: f64 = 1e-30;

/// Initial spin s0 plus the record {s_1, …, s_N} of σx results.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutcomeSequence {
    s0: Sign,
    outcomes: Vec<Sign>,
}

impl OutcomeSequence {
    pub fn new(s0: Sign, outcomes: Vec<Sign>) -> Self {
        Self { s0, outcomes }
    }

    /// Parse a record like "+-++" (s_1 first).
    pub fn parse(s0: Sign, record: &str) -> Result<Self> {
        let outcomes = record
            .chars()
            .map(Sign::from_char)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { s0, outcomes })
    }

    /// Record of canonical rank `rank` among the 2^n records of length n
    /// (s_1 in the least-significant bit, +1 ↦ 0).
    pub fn from_rank(s0: Sign, rank: usize, n: usize) -> Self {
        assert!(n < usize::BITS as usize && (n == 0 || rank >> n == 0));
        let outcomes = (0..n)
            .map(|j| {
                if (rank >> j) & 1 == 0 {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            })
            .collect();
        Self { s0, outcomes }
    }

    pub fn s0(&self) -> Sign {
        self.s0
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[Sign] {
        &self.outcomes
    }

    /// Spin eigenvalue after j measurements: s_0 for j = 0, else s_j.
    pub fn spin_after(&self, j: usize) -> Sign {
        if j == 0 {
            self.s0
        } else {
            self.outcomes[j - 1]
        }
    }

    /// The record as a "+-…" string (without s0).
    pub fn record_string(&self) -> String {
        self.outcomes
            .iter()
            .map(|s| if *s == Sign::Plus { '+' } else { '-' })
            .collect()
    }

    /// The record truncated to its first n outcomes.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            s0: self.s0,
            outcomes: self.outcomes[..n].to_vec(),
        }
    }

    fn push(&mut self, s: Sign) {
        self.outcomes.push(s);
    }
}

/// State of one quantum trajectory after `step` measurements.
///
/// The orbital part is the unnormalized sum Σ c_I e^{iΦ_I} |Z_I⟩ over the
/// 2^step canonical branch indices; `log_prob` accumulates the record's
/// probability.
#[derive(Clone, Debug)]
pub struct TrajectoryState {
    params: SystemParams,
    record: OutcomeSequence,
    branch_sum: SignedCoherentSum,
    phases: Vec<f64>,
    log_prob: f64,
    norm_sq: f64,
}

impl TrajectoryState {
    pub fn step(&self) -> usize {
        self.record.len()
    }

    /// Current σx eigenvalue s_N.
    pub fn spin(&self) -> Sign {
        self.record.spin_after(self.record.len())
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn record(&self) -> &OutcomeSequence {
        &self.record
    }

    pub fn branch_sum(&self) -> &SignedCoherentSum {
        &self.branch_sum
    }

    /// Per-branch dynamical phases Φ_I (canonical order).
    pub fn branch_phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn log_prob(&self) -> f64 {
        self.log_prob
    }

    /// Cumulative probability of the record, exp(log_prob).
    pub fn prob(&self) -> f64 {
        self.log_prob.exp()
    }

    /// Cached squared norm of the branch sum.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    fn check_not_degenerate(&self) -> Result<()> {
        if self.norm_sq < DEGENERATE_NORM_THRESHOLD {
            return Err(Error::Numerical(format!(
                "degenerate state: branch-sum norm² = {:.3e} at step {}",
                self.norm_sq,
                self.step()
            )));
        }
        Ok(())
    }
}

/// The state |z0⟩|s0⟩ₓ before any measurement.
pub fn initial_state(params: &SystemParams, s0: Sign) -> TrajectoryState {
    TrajectoryState {
        params: params.clone(),
        record: OutcomeSequence::new(s0, Vec::new()),
        branch_sum: SignedCoherentSum::single(params.z0()),
        phases: vec![0.0],
        log_prob: 0.0,
        norm_sq: 1.0,
    }
}

/// One candidate continuation (a measurement outcome not yet chosen).
#[derive(Clone, Debug)]
pub struct StepCandidate {
    pub spin: Sign,
    pub branch_sum: SignedCoherentSum,
    pub phases: Vec<f64>,
    pub norm_sq: f64,
    pub cond_prob: f64,
}

/// Both candidate continuations, for s_{N+1} = +1 and −1.
#[derive(Clone, Debug)]
pub struct StepCandidates {
    pub plus: StepCandidate,
    pub minus: StepCandidate,
}

impl StepCandidates {
    pub fn for_spin(&self, s: Sign) -> &StepCandidate {
        match s {
            Sign::Plus => &self.plus,
            Sign::Minus => &self.minus,
        }
    }
}

/// Evolve one period and form both post-measurement candidates. The first
/// 2^N entries of a candidate are the parents mapped through Z₊ (sign kept),
/// the second 2^N the parents through Z₋ (sign times s·s_N), in canonical
/// order.
pub fn step_candidates(state: &TrajectoryState) -> Result<StepCandidates> {
    if state.step() >= state.params.max_steps() {
        return Err(Error::Capacity(format!(
            "step {} would exceed max_steps = {} (2^{} branches); raise --max-steps to override",
            state.step() + 1,
            state.params.max_steps(),
            state.step() + 1,
        )));
    }
    state.check_not_degenerate()?;

    let params = &state.params;
    let theta = params.rotation_angle();
    // 1 - e^{-iθ}; χ(z) = v·Im(z·u)
    let u = C64::new(1.0 - theta.cos(), theta.sin());
    let v = params.v();
    let parents = state.branch_sum.branches();
    let n = parents.len();
    let s_n = state.spin();

    let mut plus_branches = Vec::with_capacity(n);
    let mut minus_branches = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(2 * n);
    for (b, phi) in parents.iter().zip(&state.phases) {
        plus_branches.push(Branch {
            sign: b.sign,
            center: map_apply(b.center, Sign::Plus, params),
        });
        minus_branches.push(Branch {
            sign: b.sign,
            center: map_apply(b.center, Sign::Minus, params),
        });
        let chi = v * (b.center.re * u.im + b.center.im * u.re);
        phases.push(phi + chi);
    }
    for (b, phi) in parents.iter().zip(&state.phases) {
        let chi = v * (b.center.re * u.im + b.center.im * u.re);
        phases.push(phi - chi);
    }

    // Both halves are unitary images of the parent, so
    // ‖A ± B‖² = 2‖parent‖² ± 2Re⟨A|B⟩ and only the cross Gram is needed.
    let cross = gram_cross(
        (&plus_branches, Some(&phases[..n])),
        (&minus_branches, Some(&phases[n..])),
        params.prune_exponent(),
    )
    .re;

    let make = |spin: Sign| -> StepCandidate {
        let minus_factor = spin * s_n;
        let mut branches = plus_branches.clone();
        branches.extend(minus_branches.iter().map(|b| Branch {
            sign: b.sign * minus_factor,
            center: b.center,
        }));
        let norm_sq =
            (2.0 * state.norm_sq + 2.0 * minus_factor.as_f64() * cross).max(0.0);
        StepCandidate {
            spin,
            branch_sum: SignedCoherentSum::from_branches(branches),
            phases: phases.clone(),
            norm_sq,
            cond_prob: norm_sq / (4.0 * state.norm_sq),
        }
    };

    Ok(StepCandidates {
        plus: make(Sign::Plus),
        minus: make(Sign::Minus),
    })
}

/// Commit one candidate (from [`step_candidates`] on the same state) as the
/// measured outcome.
pub fn apply_candidate(state: &TrajectoryState, candidate: StepCandidate) -> TrajectoryState {
    let mut record = state.record.clone();
    record.push(candidate.spin);
    TrajectoryState {
        params: state.params.clone(),
        record,
        branch_sum: candidate.branch_sum,
        phases: candidate.phases,
        log_prob: state.log_prob + candidate.cond_prob.ln(),
        norm_sq: candidate.norm_sq,
    }
}

/// Sample one measurement: draw u ∈ [0,1) and take s = +1 iff
/// u < p(+1 | record). Deterministic for a given generator state.
pub fn sample_step(state: &TrajectoryState, rng: &mut impl Rng) -> Result<TrajectoryState> {
    let candidates = step_candidates(state)?;
    let u: f64 = rng.gen();
    let chosen = if u < candidates.plus.cond_prob {
        candidates.plus
    } else {
        candidates.minus
    };
    Ok(apply_candidate(state, chosen))
}

/// Force each recorded outcome in turn.
pub fn replay(params: &SystemParams, seq: &OutcomeSequence) -> Result<TrajectoryState> {
    params.check_step_capacity(seq.len())?;
    let mut state = initial_state(params, seq.s0());
    for j in 0..seq.len() {
        let s = seq.spin_after(j + 1);
        let candidates = step_candidates(&state)?;
        let chosen = candidates.for_spin(s).clone();
        if chosen.cond_prob < IMPOSSIBLE_OUTCOME_THRESHOLD {
            return Err(Error::ImpossibleOutcome {
                step: j + 1,
                prob: chosen.cond_prob,
                threshold: IMPOSSIBLE_OUTCOME_THRESHOLD,
            });
        }
        state = apply_candidate(&state, chosen);
    }
    Ok(state)
}

/// Oscillator energy expectation ⟨ψ|n̂ + ½|ψ⟩ in units ħω0. The spin
/// coupling contributes nothing: the post-measurement spin is a σx
/// eigenstate and ⟨s|σ̂z|s⟩ₓ = 0.
pub fn trajectory_energy(state: &TrajectoryState) -> Result<f64> {
    state.check_not_degenerate()?;
    let num = gram_energy_numerator(
        state.branch_sum.branches(),
        Some(&state.phases),
        state.params.prune_exponent(),
    );
    Ok(num / state.norm_sq)
}

/// Fill `grid` with the normalized Husimi field |⟨z|ψ⟩|² ∈ [0, 1].
pub fn trajectory_husimi(state: &TrajectoryState, grid: &mut HusimiGrid) -> Result<()> {
    state.check_not_degenerate()?;
    let branches = state.branch_sum.branches();
    let phases = &state.phases;
    let inv_norm = 1.0 / state.norm_sq;
    grid.fill(|z| {
        let amp = husimi_amplitude(z, branches, Some(phases));
        (amp.norm_sqr() * inv_norm).min(1.0)
    });
    Ok(())
}

/// Loschmidt echo L_n = |⟨ψ_n|ψ'_n⟩|² for n = 1..N between the same record
/// evolved under `params` and under {R' = R + δR, v' = v·R/R' (or v fixed
/// with `hold_v`), same z0}.
pub fn loschmidt_echo(
    params: &SystemParams,
    delta_r: f64,
    seq: &OutcomeSequence,
    hold_v: bool,
) -> Result<Vec<f64>> {
    let perturbed = params.perturbed(delta_r, hold_v)?;
    params.check_step_capacity(seq.len())?;
    let mut a = initial_state(params, seq.s0());
    let mut b = initial_state(&perturbed, seq.s0());
    let mut echoes = Vec::with_capacity(seq.len());
    for j in 0..seq.len() {
        let s = seq.spin_after(j + 1);
        for state in [&mut a, &mut b] {
            let candidates = step_candidates(state)?;
            let chosen = candidates.for_spin(s).clone();
            if chosen.cond_prob < IMPOSSIBLE_OUTCOME_THRESHOLD {
                return Err(Error::ImpossibleOutcome {
                    step: j + 1,
                    prob: chosen.cond_prob,
                    threshold: IMPOSSIBLE_OUTCOME_THRESHOLD,
                });
            }
            *state = apply_candidate(state, chosen);
        }
        let cross = gram_cross(
            (a.branch_sum.branches(), Some(a.phases.as_slice())),
            (b.branch_sum.branches(), Some(b.phases.as_slice())),
            params.prune_exponent(),
        );
        echoes.push((cross.norm_sqr() / (a.norm_sq * b.norm_sq)).min(1.0));
    }
    Ok(echoes)
}
