//! Monte-Carlo check of linear-rate constants: the seed-averaged FBE gap
//! must stay below `(1 - c)^m gap_0 (1 + slack)` at every checkpoint `m`
//! past the burn-in. Checkpoints are iterations for randomized rules and
//! epochs (cyclic, shuffled) or windows of length `T` (essentially cyclic).

use std::path::Path;

use bcprox::bc::{solve_bc, BcSolverConfig};
use bcprox::rates::{
    rate_essentially_cyclic, rate_randomized, rate_randomized_optimal, rate_shuffled_cyclic, RateInputs,
};
use bcprox::sampling::{SamplerKind, SamplerSpec};
use bcprox::{BlockVector, Problem, SmoothBlock, Stepsize};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{default_schedule, Family, ProblemSpec, CONFIG_VERSION};
use crate::error::{io_err, BenchError, Result};
use crate::generate::{full_step, generate_problem, Generated, Instance};
use crate::runner::thread_pool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateRule {
    /// One block per iteration, uniformly; `c` from the worst-case formula.
    Uniform,
    /// Optimal stepsizes and sampling probabilities with their constant.
    Optimal,
    Cyclic,
    Shuffled,
    /// Default schedule of period `T` (index `i` repeated `T / N` times).
    EssentiallyCyclic {
        period: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub version: u32,
    pub problem: ProblemSpec,
    pub instance_seed: u64,
    pub rule: RateRule,
    /// Sampler seeds averaged over.
    pub seeds: Vec<u64>,
    /// Number of checkpoints after the start.
    pub horizon: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
    /// Multiplies the certified constant; values above 1 serve as negative controls.
    #[serde(default = "default_scale")]
    pub c_scale: f64,
}

fn default_burn_in() -> usize {
    5
}
fn default_slack() -> f64 {
    0.05
}
fn default_scale() -> f64 {
    1.0
}

impl VerifyConfig {
    pub fn new(problem: ProblemSpec, instance_seed: u64, rule: RateRule, seeds: Vec<u64>, horizon: usize) -> Self {
        Self {
            version: CONFIG_VERSION,
            problem,
            instance_seed,
            rule,
            seeds,
            horizon,
            burn_in: default_burn_in(),
            slack: default_slack(),
            c_scale: default_scale(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: VerifyConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(BenchError::Config(format!(
                "unsupported config version {}",
                self.version
            )));
        }
        self.problem.validate()?;
        if self.problem.family == Family::Accel {
            return Err(BenchError::Config(
                "rate verification runs the generic scheme; use another family".into(),
            ));
        }
        if self.seeds.is_empty() || self.horizon == 0 {
            return Err(BenchError::Config(
                "need at least one seed and a positive horizon".into(),
            ));
        }
        if !(self.slack >= 0.0 && self.c_scale > 0.0) {
            return Err(BenchError::Config(
                "slack must be nonnegative and c_scale positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rule: RateRule,
    pub inputs: RateInputs,
    /// Certified constant before scaling.
    pub c: f64,
    /// Constant used for the envelope, `c_scale c`.
    pub c_used: f64,
    pub min_phi: f64,
    pub gap0: f64,
    /// Iterations between checkpoints.
    pub spacing: usize,
    /// Iteration count of every checkpoint.
    pub checkpoints: Vec<usize>,
    pub mean_gap: Vec<f64>,
    pub envelope: Vec<f64>,
    /// Largest `mean_gap / envelope` over the checked checkpoints.
    pub worst_ratio: f64,
    pub worst_at: usize,
    pub pass: bool,
}

/// Constants of `problem` at `step` for the rate formulas.
pub fn rate_inputs<S: SmoothBlock>(
    problem: &Problem<S>,
    step: &Stepsize,
    probabilities: Vec<f64>,
    period: Option<usize>,
) -> RateInputs {
    RateInputs {
        n_blocks: problem.n_blocks(),
        lipschitz: problem.lipschitz_constants(),
        strong_convexity: problem.strong_convexity_constants(),
        gammas: step.gammas().to_vec(),
        probabilities,
        period,
    }
}

struct Plan {
    step: Stepsize,
    sampler: SamplerKind,
    inputs: RateInputs,
    c: f64,
    spacing: usize,
}

fn plan<S: SmoothBlock>(problem: &Problem<S>, default_step: &Stepsize, rule: &RateRule) -> Result<Plan> {
    let n = problem.n_blocks();
    let uniform = vec![1.0 / n as f64; n];
    Ok(match rule {
        RateRule::Uniform => {
            let inputs = rate_inputs(problem, default_step, uniform.clone(), None);
            Plan {
                step: default_step.clone(),
                sampler: SamplerKind::Randomized {
                    probabilities: uniform,
                    batch: Some(1),
                },
                c: rate_randomized(&inputs)?,
                inputs,
                spacing: 1,
            }
        }
        RateRule::Optimal => {
            let o = rate_randomized_optimal(n, &problem.lipschitz_constants(), &problem.strong_convexity_constants())?;
            let step = Stepsize::new(o.gammas.clone())?;
            Plan {
                inputs: rate_inputs(problem, &step, o.probabilities.clone(), None),
                sampler: SamplerKind::Randomized {
                    probabilities: o.probabilities,
                    batch: Some(1),
                },
                step,
                c: o.c,
                spacing: 1,
            }
        }
        RateRule::Cyclic | RateRule::Shuffled => {
            let inputs = rate_inputs(problem, default_step, uniform, Some(n));
            Plan {
                step: default_step.clone(),
                sampler: if *rule == RateRule::Cyclic {
                    SamplerKind::Cyclic
                } else {
                    SamplerKind::ShuffledCyclic
                },
                c: rate_shuffled_cyclic(&inputs)?,
                inputs,
                spacing: n,
            }
        }
        RateRule::EssentiallyCyclic { period } => {
            let inputs = rate_inputs(problem, default_step, uniform, Some(*period));
            Plan {
                step: default_step.clone(),
                sampler: SamplerKind::EssentiallyCyclic {
                    period: *period,
                    schedule: default_schedule(n, *period)?,
                },
                c: rate_essentially_cyclic(&inputs)?,
                inputs,
                spacing: *period,
            }
        }
    })
}

/// FBE values at `x^{m spacing}`, `m = 0..=horizon`.
fn checkpoint_fbe<S: SmoothBlock>(
    problem: &Problem<S>,
    x0: &BlockVector,
    step: &Stepsize,
    sampler: SamplerSpec,
    spacing: usize,
    horizon: usize,
) -> Result<Vec<f64>> {
    let mut cfg = BcSolverConfig::new(step.clone(), sampler, spacing * horizon);
    cfg.trace_every = spacing;
    let out = solve_bc(problem, x0.clone(), &cfg)?;
    if out.status != bcprox::bc::SolverStatus::MaxIters && out.status != bcprox::bc::SolverStatus::Converged {
        return Err(BenchError::Config(format!("solver stopped with {:?}", out.status)));
    }
    let mut values: Vec<f64> = out
        .trace
        .rows
        .iter()
        .filter(|r| r.k % spacing == 0)
        .map(|r| r.fbe)
        .collect();
    // A run that reached an exact fixed point stays there.
    let last = *values.last().expect("trace has a final row");
    values.resize(horizon + 1, last);
    Ok(values)
}

fn verify_on<S: SmoothBlock + Sync>(problem: &Problem<S>, gen: &Generated, cfg: &VerifyConfig) -> Result<RateReport> {
    let p = plan(problem, &gen.step, &cfg.rule)?;
    let truth = full_step(problem, &gen.x0, &p.step)?;
    let runs: Vec<Vec<f64>> = thread_pool()?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let spec = SamplerSpec::new(p.sampler.clone(), seed);
                checkpoint_fbe(problem, &gen.x0, &p.step, spec, p.spacing, cfg.horizon)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let m = cfg.seeds.len() as f64;
    let mean_gap: Vec<f64> = (0..=cfg.horizon)
        .map(|j| runs.iter().map(|r| r[j] - truth.min_phi).sum::<f64>() / m)
        .collect();
    let c_used = cfg.c_scale * p.c;
    let gap0 = mean_gap[0];
    let envelope: Vec<f64> = (0..=cfg.horizon)
        .map(|j| (1.0 - c_used).powi(j as i32) * gap0)
        .collect();
    let checkpoints: Vec<usize> = (0..=cfg.horizon).map(|j| j * p.spacing).collect();
    let (mut worst_ratio, mut worst_at, mut pass) = (0.0f64, 0, true);
    for j in 0..=cfg.horizon {
        if checkpoints[j] < cfg.burn_in {
            continue;
        }
        let ratio = mean_gap[j] / envelope[j];
        if mean_gap[j] > envelope[j] * (1.0 + cfg.slack) {
            pass = false;
        }
        if ratio > worst_ratio || ratio.is_nan() {
            worst_ratio = ratio;
            worst_at = checkpoints[j];
        }
    }
    Ok(RateReport {
        rule: cfg.rule.clone(),
        inputs: p.inputs,
        c: p.c,
        c_used,
        min_phi: truth.min_phi,
        gap0,
        spacing: p.spacing,
        checkpoints,
        mean_gap,
        envelope,
        worst_ratio,
        worst_at,
        pass,
    })
}

/// Generates the instance of `cfg` and checks the rate of its rule.
pub fn verify_rates(cfg: &VerifyConfig) -> Result<RateReport> {
    cfg.validate()?;
    let gen = generate_problem(&cfg.problem, cfg.instance_seed)?;
    match &gen.instance {
        Instance::FiniteSum(fp) => verify_on(fp.problem(), &gen, cfg),
        Instance::Sharing(sp) => verify_on(sp.problem(), &gen, cfg),
        Instance::Generic(p) => verify_on(p, &gen, cfg),
        Instance::Accel(_) => unreachable!("rejected by validate"),
    }
}
