//! Command-line surface: flag/config-file resolution, deterministic
//! seeding, and CSV emission for every figure-class output.
//!
//! Flags override a JSON config file given with `--config`; keys mirror the
//! flag names in snake_case. Identical config + seed produce byte-identical
//! output files regardless of thread count. Output files are written to a
//! temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::ensemble::{
    closed_form_moments, crystal_lattice_check, ensemble_husimi, enumerate_ensemble,
    enumerated_moments, resonance_ratio,
};
use crate::error::{Error, Result};
use crate::fock::{self, coherent_in_fock, default_n_max, oracle_replay};
use crate::grid::HusimiGrid;
use crate::maps::{coherent_overlap, map_apply, Sign};
use crate::trajectory::{
    apply_candidate, initial_state, loschmidt_echo, replay, sample_step, step_candidates,
    trajectory_energy, trajectory_husimi, OutcomeSequence, TrajectoryState,
    IMPOSSIBLE_OUTCOME_THRESHOLD,
};
use crate::{SystemParams, C64};

pub const DEFAULT_ENERGY_CAP: usize = 14;
pub const DEFAULT_VALIDATE_DRAWS: usize = 10;

#[derive(Parser, Debug)]
#[command(
    name = "spinkick",
    version,
    about = "Harmonic oscillator kicked by stroboscopic spin measurements"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample one trajectory and emit per-step records
    Trajectory(CommonArgs),
    /// Replay a forced outcome record
    Replay(CommonArgs),
    /// Closed-form vs enumerated ensemble moments for N = 0..steps
    Ensemble(CommonArgs),
    /// Husimi field of a replayed trajectory or of the ensemble
    Husimi(CommonArgs),
    /// Loschmidt echo between R and R + delta_R evolutions
    Echo(CommonArgs),
    /// Print the power-maximizing frequency ratio and the power there
    Resonance(CommonArgs),
    /// Rotated-back center lattice report
    Crystal(CommonArgs),
    /// Cross-check the branch engine against the number-basis propagator
    Validate(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Trajectory(_) => "trajectory",
            Command::Replay(_) => "replay",
            Command::Ensemble(_) => "ensemble",
            Command::Husimi(_) => "husimi",
            Command::Echo(_) => "echo",
            Command::Resonance(_) => "resonance",
            Command::Crystal(_) => "crystal",
            Command::Validate(_) => "validate",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Trajectory(a)
            | Command::Replay(a)
            | Command::Ensemble(a)
            | Command::Husimi(a)
            | Command::Echo(a)
            | Command::Resonance(a)
            | Command::Crystal(a)
            | Command::Validate(a) => a,
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// JSON config file; explicit flags override its keys
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Frequency ratio R = ω0/ω (per-step rotation angle 2πR)
    #[arg(long = "R", value_name = "RATIO")]
    pub r: Option<f64>,

    /// Kick strength v = α/ħω0
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<f64>,

    /// Initial coherent label, as "re,im"
    #[arg(long, value_name = "RE,IM", allow_hyphen_values = true)]
    pub z0: Option<String>,

    /// Larmor period T_L (only scales power units)
    #[arg(long = "larmor-period")]
    pub larmor_period: Option<f64>,

    /// Number of measurement steps N
    #[arg(long)]
    pub steps: Option<usize>,

    /// RNG seed (unsigned 64-bit; default 0, deterministic)
    #[arg(long)]
    pub seed: Option<u64>,

    /// Echo perturbation δR = δω0/ω
    #[arg(long = "delta-R", allow_hyphen_values = true)]
    pub delta_r: Option<f64>,

    /// Forced outcome record like "+-++" (s_1 first)
    #[arg(long, allow_hyphen_values = true)]
    pub outcomes: Option<String>,

    /// Initial spin s0 (+1 or -1)
    #[arg(long, allow_hyphen_values = true)]
    pub s0: Option<i8>,

    /// q' grid as "min:max:step"
    #[arg(long = "q-grid", value_name = "MIN:MAX:STEP", allow_hyphen_values = true)]
    pub q_grid: Option<String>,

    /// p' grid as "min:max:step"
    #[arg(long = "p-grid", value_name = "MIN:MAX:STEP", allow_hyphen_values = true)]
    pub p_grid: Option<String>,

    /// Number-basis truncation override for validate
    #[arg(long = "n-max")]
    pub n_max: Option<usize>,

    /// Output file path
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,

    /// Keep v fixed in the echo's perturbed evolution
    #[arg(long = "hold-v", action = ArgAction::SetTrue)]
    pub hold_v: Option<bool>,

    /// Gram-sum pruning exponent (0 = off; 745 = exact-to-double cut)
    #[arg(long)]
    pub prune: Option<f64>,

    /// Cap on branch-doubling steps (memory guard, default 20)
    #[arg(long = "max-steps")]
    pub max_steps: Option<usize>,

    /// Cap on steps with per-step energy output (O(4^N), default 14)
    #[arg(long = "energy-cap")]
    pub energy_cap: Option<usize>,

    /// Number of random validate draws
    #[arg(long)]
    pub draws: Option<usize>,
}

/// Config-file counterpart of the flags; unknown keys are rejected so typos
/// are reported by name.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    subcommand: Option<String>,
    r: Option<f64>,
    v: Option<f64>,
    z0: Option<[f64; 2]>,
    larmor_period: Option<f64>,
    steps: Option<usize>,
    seed: Option<u64>,
    delta_r: Option<f64>,
    outcomes: Option<String>,
    s0: Option<i8>,
    q_grid: Option<String>,
    p_grid: Option<String>,
    n_max: Option<usize>,
    output: Option<String>,
    hold_v: Option<bool>,
    prune: Option<f64>,
    max_steps: Option<usize>,
    energy_cap: Option<usize>,
    draws: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridAxis {
    fn parse(field: &str, text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::config(
                field,
                format!("expected min:max:step, got {text:?}"),
            ));
        }
        let mut vals = [0.0; 3];
        for (slot, part) in vals.iter_mut().zip(&parts) {
            *slot = part
                .parse::<f64>()
                .map_err(|e| Error::config(field, format!("bad number {part:?}: {e}")))?;
        }
        let axis = GridAxis {
            min: vals[0],
            max: vals[1],
            step: vals[2],
        };
        if !(axis.step > 0.0) {
            return Err(Error::config(field, "step must be > 0"));
        }
        if !(axis.min < axis.max) {
            return Err(Error::config(field, "min must be < max"));
        }
        Ok(axis)
    }
}

/// Fully resolved run description (flags merged over the config file, with
/// defaults applied).
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub subcommand: String,
    pub r: Option<f64>,
    pub v: Option<f64>,
    pub z0: Option<C64>,
    pub larmor_period: Option<f64>,
    pub steps: Option<usize>,
    pub seed: u64,
    pub seed_given: bool,
    pub delta_r: Option<f64>,
    pub outcomes: Option<String>,
    pub s0: Sign,
    pub q_grid: Option<GridAxis>,
    pub p_grid: Option<GridAxis>,
    pub n_max: Option<usize>,
    pub output: PathBuf,
    pub hold_v: bool,
    pub prune: f64,
    pub max_steps: usize,
    pub energy_cap: usize,
    pub draws: usize,
}

fn parse_z0_flag(text: &str) -> Result<C64> {
    let (re, im) = text
        .split_once(',')
        .ok_or_else(|| Error::config("z0", format!("expected re,im, got {text:?}")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::config("z0", format!("bad number {s:?}: {e}")))
    };
    Ok(C64::new(parse(re)?, parse(im)?))
}

fn default_output(subcommand: &str) -> &'static str {
    match subcommand {
        "trajectory" | "replay" => "trajectory.csv",
        "ensemble" => "moments.csv",
        "husimi" => "husimi.csv",
        "echo" => "echo.csv",
        "crystal" => "crystal.csv",
        _ => "validate.csv",
    }
}

impl RunConfig {
    /// Merge flags over the optional config file and normalize defaults.
    pub fn resolve(command: &Command) -> Result<Self> {
        let args = command.args();
        let name = command.name();
        let file: FileConfig = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::config("config", format!("cannot read {}: {e}", path.display()))
                })?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::config("config", format!("invalid JSON: {e}")))?
            }
            None => FileConfig::default(),
        };
        if let Some(sub) = &file.subcommand {
            if sub != name {
                return Err(Error::config(
                    "subcommand",
                    format!("config file says {sub:?} but the command line runs {name:?}"),
                ));
            }
        }

        let z0 = match (&args.z0, file.z0) {
            (Some(text), _) => Some(parse_z0_flag(text)?),
            (None, Some([re, im])) => Some(C64::new(re, im)),
            (None, None) => None,
        };
        let s0 = match args.s0.or(file.s0) {
            Some(raw) => Sign::from_i8(raw)
                .map_err(|_| Error::config("s0", format!("must be +1 or -1, got {raw}")))?,
            None => Sign::Plus,
        };
        let q_grid = match args.q_grid.as_ref().or(file.q_grid.as_ref()) {
            Some(text) => Some(GridAxis::parse("q_grid", text)?),
            None => None,
        };
        let p_grid = match args.p_grid.as_ref().or(file.p_grid.as_ref()) {
            Some(text) => Some(GridAxis::parse("p_grid", text)?),
            None => None,
        };
        let seed = args.seed.or(file.seed);
        let output = args
            .output
            .clone()
            .or_else(|| file.output.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(default_output(name)));

        Ok(RunConfig {
            subcommand: name.to_string(),
            r: args.r.or(file.r),
            v: args.v.or(file.v),
            z0,
            larmor_period: args.larmor_period.or(file.larmor_period),
            steps: args.steps.or(file.steps),
            seed: seed.unwrap_or(0),
            seed_given: seed.is_some(),
            delta_r: args.delta_r.or(file.delta_r),
            outcomes: args.outcomes.clone().or(file.outcomes),
            s0,
            q_grid,
            p_grid,
            n_max: args.n_max.or(file.n_max),
            output,
            hold_v: args.hold_v.or(file.hold_v).unwrap_or(false),
            prune: args.prune.or(file.prune).unwrap_or(0.0),
            max_steps: args
                .max_steps
                .or(file.max_steps)
                .unwrap_or(crate::params::DEFAULT_MAX_STEPS),
            energy_cap: args
                .energy_cap
                .or(file.energy_cap)
                .unwrap_or(DEFAULT_ENERGY_CAP),
            draws: args.draws.or(file.draws).unwrap_or(DEFAULT_VALIDATE_DRAWS),
        })
    }

    fn require<T: Copy>(&self, field: &str, value: Option<T>) -> Result<T> {
        value.ok_or_else(|| Error::config(field, format!("required by `{}`", self.subcommand)))
    }

    fn params(&self) -> Result<SystemParams> {
        let r = self.require("r", self.r)?;
        let v = self.require("v", self.v)?;
        let z0 = self.require("z0", self.z0)?;
        let mut params = SystemParams::new(r, v, z0)?
            .with_max_steps(self.max_steps)?
            .with_prune_exponent(self.prune)?;
        if let Some(t_l) = self.larmor_period {
            params = params.with_larmor_period(t_l)?;
        }
        Ok(params)
    }

    fn steps(&self) -> Result<usize> {
        self.require("steps", self.steps)
    }

    fn outcome_sequence(&self) -> Result<Option<OutcomeSequence>> {
        match &self.outcomes {
            Some(text) => Ok(Some(OutcomeSequence::parse(self.s0, text)?)),
            None => Ok(None),
        }
    }

    fn warn_default_seed(&self) {
        if !self.seed_given {
            eprintln!("warning: no --seed given; sampling uses the deterministic default seed 0");
        }
    }
}

/// Resolve and dispatch a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    let config = RunConfig::resolve(&cli.command)?;
    run(&config)
}

/// Execute one resolved run.
pub fn run(config: &RunConfig) -> Result<()> {
    match config.subcommand.as_str() {
        "trajectory" => run_trajectory(config, None),
        "replay" => {
            let seq = config
                .outcome_sequence()?
                .ok_or_else(|| Error::config("outcomes", "required by `replay`"))?;
            run_trajectory(config, Some(seq))
        }
        "ensemble" => run_ensemble(config),
        "husimi" => run_husimi(config),
        "echo" => run_echo(config),
        "resonance" => run_resonance(config),
        "crystal" => run_crystal(config),
        "validate" => run_validate(config),
        other => Err(Error::config("subcommand", format!("unknown: {other}"))),
    }
}

fn check_energy_cap(config: &RunConfig, steps: usize) -> Result<()> {
    if steps > config.energy_cap {
        return Err(Error::Capacity(format!(
            "{steps} steps with per-step energy exceed energy_cap = {} (O(4^N) Gram sums); \
             raise --energy-cap to override",
            config.energy_cap
        )));
    }
    Ok(())
}

fn step_forced(state: &TrajectoryState, s: Sign) -> Result<TrajectoryState> {
    let candidates = step_candidates(state)?;
    let chosen = candidates.for_spin(s).clone();
    if chosen.cond_prob < IMPOSSIBLE_OUTCOME_THRESHOLD {
        return Err(Error::ImpossibleOutcome {
            step: state.step() + 1,
            prob: chosen.cond_prob,
            threshold: IMPOSSIBLE_OUTCOME_THRESHOLD,
        });
    }
    Ok(apply_candidate(state, chosen))
}

fn run_trajectory(config: &RunConfig, forced: Option<OutcomeSequence>) -> Result<()> {
    let params = config.params()?;
    let steps = match &forced {
        Some(seq) => seq.len(),
        None => config.steps()?,
    };
    params.check_step_capacity(steps)?;
    check_energy_cap(config, steps)?;

    let mut csv = String::from("step,outcome,cond_prob,cum_prob,energy\n");
    let mut state = initial_state(&params, forced.as_ref().map_or(config.s0, |s| s.s0()));
    let _ = writeln!(
        csv,
        "0,{},1,1,{}",
        state.spin().as_i8(),
        trajectory_energy(&state)?
    );

    let mut rng = match &forced {
        Some(_) => None,
        None => {
            config.warn_default_seed();
            Some(ChaCha8Rng::seed_from_u64(config.seed))
        }
    };
    for j in 1..=steps {
        let prev_log = state.log_prob();
        state = match (&forced, rng.as_mut()) {
            (Some(seq), _) => step_forced(&state, seq.spin_after(j))?,
            (None, Some(rng)) => sample_step(&state, rng)?,
            _ => unreachable!(),
        };
        let cond = (state.log_prob() - prev_log).exp();
        let energy = trajectory_energy(&state)?;
        let _ = writeln!(
            csv,
            "{j},{},{cond},{},{energy}",
            state.spin().as_i8(),
            state.prob()
        );
    }
    write_atomic(&config.output, &csv)?;
    println!(
        "wrote {} ({} steps, record {})",
        config.output.display(),
        steps,
        state.record().record_string()
    );
    Ok(())
}

fn run_ensemble(config: &RunConfig) -> Result<()> {
    let params = config.params()?;
    let steps = config.steps()?;
    params.check_step_capacity(steps)?;
    let mut csv = String::from(
        "N,E_closed,E_enum,q_mean,p_mean,varx_closed,varx_enum,varp_closed,varp_enum\n",
    );
    for n in 0..=steps {
        let closed = closed_form_moments(&params, n);
        let enumerated = enumerated_moments(&enumerate_ensemble(&params, n)?);
        let _ = writeln!(
            csv,
            "{n},{},{},{},{},{},{},{},{}",
            closed.mean_energy,
            enumerated.mean_energy,
            closed.mean_q,
            closed.mean_p,
            closed.var_x,
            enumerated.var_x,
            closed.var_p,
            enumerated.var_p
        );
    }
    write_atomic(&config.output, &csv)?;
    println!("wrote {} (N = 0..{steps})", config.output.display());
    Ok(())
}

fn auto_axis(centers: &[C64], pick: impl Fn(&C64) -> f64) -> GridAxis {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in centers {
        lo = lo.min(pick(c));
        hi = hi.max(pick(c));
    }
    GridAxis {
        min: lo - 5.0,
        max: hi + 5.0,
        step: 0.2,
    }
}

fn build_grid(config: &RunConfig, centers: &[C64]) -> Result<HusimiGrid> {
    let q = config.q_grid.unwrap_or_else(|| auto_axis(centers, |c| c.re));
    let p = config.p_grid.unwrap_or_else(|| auto_axis(centers, |c| c.im));
    HusimiGrid::from_steps(q.min, q.max, q.step, p.min, p.max, p.step)
}

fn run_husimi(config: &RunConfig) -> Result<()> {
    let params = config.params()?;
    let grid = match config.outcome_sequence()? {
        Some(seq) => {
            let state = replay(&params, &seq)?;
            let centers: Vec<C64> = state
                .branch_sum()
                .branches()
                .iter()
                .map(|b| b.center)
                .collect();
            let mut grid = build_grid(config, &centers)?;
            trajectory_husimi(&state, &mut grid)?;
            grid
        }
        None => {
            let ens = enumerate_ensemble(&params, config.steps()?)?;
            let mut grid = build_grid(config, ens.centers())?;
            ensemble_husimi(&ens, &mut grid);
            grid
        }
    };
    let mut csv = String::from("q,p,h\n");
    for (q, p, h) in grid.nodes() {
        let _ = writeln!(csv, "{q},{p},{h}");
    }
    write_atomic(&config.output, &csv)?;
    println!(
        "wrote {} ({}x{} nodes)",
        config.output.display(),
        grid.nq(),
        grid.np()
    );
    Ok(())
}

fn run_echo(config: &RunConfig) -> Result<()> {
    let params = config.params()?;
    let delta_r = config.require("delta_r", config.delta_r)?;
    let seq = match config.outcome_sequence()? {
        Some(seq) => {
            if let Some(steps) = config.steps {
                if steps != seq.len() {
                    return Err(Error::config(
                        "steps",
                        format!("{} outcomes given but steps = {steps}", seq.len()),
                    ));
                }
            }
            params.check_step_capacity(seq.len())?;
            seq
        }
        None => {
            let steps = config.steps()?;
            params.check_step_capacity(steps)?;
            config.warn_default_seed();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut state = initial_state(&params, config.s0);
            for _ in 0..steps {
                state = sample_step(&state, &mut rng)?;
            }
            println!("sampled record: {}", state.record().record_string());
            state.record().clone()
        }
    };
    let echoes = loschmidt_echo(&params, delta_r, &seq, config.hold_v)?;
    let mut csv = String::from("step,L\n0,1\n");
    for (j, l) in echoes.iter().enumerate() {
        let _ = writeln!(csv, "{},{l}", j + 1);
    }
    write_atomic(&config.output, &csv)?;
    println!(
        "wrote {} ({} echo points, delta_R = {delta_r})",
        config.output.display(),
        echoes.len()
    );
    Ok(())
}

fn run_resonance(_config: &RunConfig) -> Result<()> {
    let r_star = resonance_ratio();
    let power =
        2.0 * std::f64::consts::PI * (std::f64::consts::PI * r_star).sin().powi(2) / r_star;
    println!("R*={r_star}");
    println!("P(R*)={power} hbar/T_L^2");
    Ok(())
}

fn run_crystal(config: &RunConfig) -> Result<()> {
    let params = config.params()?;
    let steps = config.steps()?;
    let ens = enumerate_ensemble(&params, steps)?;
    let report = crystal_lattice_check(&ens, &params);
    let mut csv = String::from("center_re,center_im,lattice_residual\n");
    for (w, resid) in report.rotated_centers.iter().zip(&report.lattice_residuals) {
        let _ = writeln!(csv, "{},{},{resid}", w.re, w.im);
    }
    write_atomic(&config.output, &csv)?;
    println!(
        "wrote {} ({} centers, {} distinct, max lattice residual {:e})",
        config.output.display(),
        report.rotated_centers.len(),
        report.distinct_centers,
        report.max_lattice_residual
    );
    Ok(())
}

struct ValidateRow {
    case: String,
    quantity: &'static str,
    engine: f64,
    oracle: f64,
    tolerance: f64,
}

impl ValidateRow {
    fn abs_diff(&self) -> f64 {
        (self.engine - self.oracle).abs()
    }
}

fn run_validate(config: &RunConfig) -> Result<()> {
    let params = config.params()?;
    let steps = config.steps.unwrap_or(3).min(params.max_steps());
    let draws = config.draws;
    config.warn_default_seed();

    let mut rows: Vec<ValidateRow> = Vec::new();

    // coherent overlaps: truncated series vs closed form
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for k in 0..draws {
        let z1 = C64::new(rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5));
        let z2 = C64::new(rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5));
        let (a1, _) = coherent_in_fock(z1, 200)?;
        let (a2, _) = coherent_in_fock(z2, 200)?;
        let series = fock::inner_product(&a1, &a2);
        let closed = coherent_overlap(z1, z2);
        for (quantity, engine, oracle) in
            [("re", closed.re, series.re), ("im", closed.im, series.im)]
        {
            rows.push(ValidateRow {
                case: format!("overlap_{k}"),
                quantity,
                engine,
                oracle,
                tolerance: 1e-10,
            });
        }
    }

    // one-period propagation vs the map prediction, on the configured params
    {
        let n_max = config.n_max.unwrap_or_else(|| default_n_max(&params, 1));
        let (hp, hm) = fock::build_hpm(params.v(), n_max);
        let (vec, _) = coherent_in_fock(params.z0(), n_max)?;
        for (h, sign, label) in [(hp, Sign::Plus, "plus"), (hm, Sign::Minus, "minus")] {
            let out = h.propagate(params.rotation_angle(), &vec)?;
            let (expect, _) = coherent_in_fock(map_apply(params.z0(), sign, &params), n_max)?;
            rows.push(ValidateRow {
                case: format!("map_{label}"),
                quantity: "fidelity",
                engine: fock::fidelity(&expect, &out),
                oracle: 1.0,
                tolerance: 1e-8,
            });
        }
    }

    // full replay cross-validation on random draws (index-ordered, parallel)
    let seed = config.seed;
    let n_max_override = config.n_max;
    let draw_rows: Vec<Result<Vec<ValidateRow>>> = crate::par::map_indexed(draws, |k| {
        let mut draw_rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64 + 1));
        let r = draw_rng.gen_range(0.02..0.98);
        let v = draw_rng.gen_range(-2.0..2.0);
        let z0 = C64::new(draw_rng.gen_range(-1.4..1.4), draw_rng.gen_range(-1.4..1.4));
        let n = draw_rng.gen_range(1..=steps.clamp(1, 4));
        let draw_params = SystemParams::new(r, v, z0)?;
        let mut state = initial_state(&draw_params, Sign::Plus);
        for _ in 0..n {
            state = sample_step(&state, &mut draw_rng)?;
        }
        let n_max = n_max_override.unwrap_or_else(|| default_n_max(&draw_params, n));
        let (oracle_state, oracle_prob) = oracle_replay(&draw_params, state.record(), n_max)?;
        let engine_fock = fock::expand_branch_sum(
            state.branch_sum().branches(),
            Some(state.branch_phases()),
            n_max,
        )?;
        Ok(vec![
            ValidateRow {
                case: format!("replay_{k}"),
                quantity: "probability",
                engine: state.prob(),
                oracle: oracle_prob,
                tolerance: 1e-8,
            },
            ValidateRow {
                case: format!("replay_{k}"),
                quantity: "fidelity",
                engine: fock::fidelity(&engine_fock, &oracle_state),
                oracle: 1.0,
                tolerance: 1e-6,
            },
        ])
    });
    for group in draw_rows {
        rows.extend(group?);
    }

    let mut csv = String::from("case,quantity,engine,oracle,abs_diff\n");
    let mut worst: Option<&ValidateRow> = None;
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.case,
            row.quantity,
            row.engine,
            row.oracle,
            row.abs_diff()
        );
        if row.abs_diff() > row.tolerance
            && worst.map_or(true, |w| {
                row.abs_diff() / row.tolerance > w.abs_diff() / w.tolerance
            })
        {
            worst = Some(row);
        }
    }
    write_atomic(&config.output, &csv)?;
    println!("wrote {} ({} checks)", config.output.display(), rows.len());
    if let Some(w) = worst {
        return Err(Error::Numerical(format!(
            "validation failed: {} {} |engine - oracle| = {:e} exceeds {:e}",
            w.case,
            w.quantity,
            w.abs_diff(),
            w.tolerance
        )));
    }
    println!("all checks within tolerance");
    Ok(())
}

/// Write via a temporary sibling then rename, so readers never observe a
/// partial file.
fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
