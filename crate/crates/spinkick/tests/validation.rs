//! Cross-validation of the coherent-branch engine against the number-basis
//! propagator on the pinned parameter sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinkick::fock::{self, coherent_in_fock, default_n_max, oracle_replay};
use spinkick::maps::{Branch, Sign, SignedCoherentSum};
use spinkick::trajectory::{initial_state, replay, step_candidates, OutcomeSequence};
use spinkick::{SystemParams, C64};

fn fig2_params() -> SystemParams {
    SystemParams::new(
        0.106,
        2.0,
        C64::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    )
    .unwrap()
}

#[test]
fn first_step_probabilities_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..6 {
        let params = SystemParams::new(
            rng.gen_range(0.05..0.95),
            rng.gen_range(-1.8..1.8),
            C64::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2)),
        )
        .unwrap();
        let n_max = default_n_max(&params, 1);
        for s0 in [Sign::Plus, Sign::Minus] {
            let state = initial_state(&params, s0);
            let candidates = step_candidates(&state).unwrap();
            for s1 in [Sign::Plus, Sign::Minus] {
                let seq = OutcomeSequence::new(s0, vec![s1]);
                let (_, oracle_prob) = oracle_replay(&params, &seq, n_max).unwrap();
                let engine_prob = candidates.for_spin(s1).cond_prob;
                assert!(
                    (engine_prob - oracle_prob).abs() <= 1e-8,
                    "p({s1}|{s0}) engine {engine_prob} vs oracle {oracle_prob}"
                );
            }
        }
    }
}

#[test]
fn replay_states_match_oracle_at_pinned_parameters() {
    // v = 2, z0 = (1+i)/√2, R = 0.106; every record length up to 4
    let params = fig2_params();
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    for n in 1..=4 {
        let n_max = default_n_max(&params, n);
        for _ in 0..3 {
            let rank = rng.gen_range(0..1usize << n);
            let seq = OutcomeSequence::from_rank(Sign::Plus, rank, n);
            let engine = match replay(&params, &seq) {
                Ok(state) => state,
                Err(spinkick::Error::ImpossibleOutcome { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let (oracle_state, oracle_prob) = oracle_replay(&params, &seq, n_max).unwrap();
            assert!(
                (engine.prob() - oracle_prob).abs() <= 1e-8,
                "N={n} rank={rank}: prob {} vs {}",
                engine.prob(),
                oracle_prob
            );
            let engine_fock = fock::expand_branch_sum(
                engine.branch_sum().branches(),
                Some(engine.branch_phases()),
                n_max,
            )
            .unwrap();
            let fidelity = fock::fidelity(&engine_fock, &oracle_state);
            assert!(
                fidelity >= 1.0 - 1e-6,
                "N={n} rank={rank}: fidelity {fidelity}"
            );
        }
    }
}

#[test]
fn two_branch_norm_matches_fock_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..10 {
        let z = C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let w = C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let sum = SignedCoherentSum::from_branches(vec![
            Branch {
                sign: Sign::Plus,
                center: z,
            },
            Branch {
                sign: Sign::Plus,
                center: w,
            },
        ]);
        let (az, _) = coherent_in_fock(z, 200).unwrap();
        let (aw, _) = coherent_in_fock(w, 200).unwrap();
        let fock_norm: f64 = az
            .iter()
            .zip(&aw)
            .map(|(a, b)| (a + b).norm_sqr())
            .sum();
        assert!(
            (sum.norm_sq() - fock_norm).abs() <= 1e-10,
            "{} vs {fock_norm}",
            sum.norm_sq()
        );
    }
}

#[test]
fn sampled_trajectories_match_oracle() {
    // sample under one parameter set, then check the record's probability
    // and final state against the oracle
    let params = SystemParams::new(0.37, 1.5, C64::new(0.4, -0.6)).unwrap();
    for seed in [3u64, 8u64] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = initial_state(&params, Sign::Plus);
        for _ in 0..3 {
            state = spinkick::trajectory::sample_step(&state, &mut rng).unwrap();
        }
        let n_max = default_n_max(&params, 3);
        let (oracle_state, oracle_prob) = oracle_replay(&params, state.record(), n_max).unwrap();
        assert!((state.prob() - oracle_prob).abs() <= 1e-8);
        let engine_fock = fock::expand_branch_sum(
            state.branch_sum().branches(),
            Some(state.branch_phases()),
            n_max,
        )
        .unwrap();
        assert!(fock::fidelity(&engine_fock, &oracle_state) >= 1.0 - 1e-6);
    }
}
