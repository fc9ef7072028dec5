//! Run configuration, read from TOML. The schema is documented in the crate
//! README; `version` is mandatory and must equal [`CONFIG_VERSION`].

use std::path::{Path, PathBuf};

use bcprox::prox::ProxAtom;
use bcprox::sampling::{IndexSet, SamplerKind, SamplerSpec};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, BenchError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Consensus formulation of a regularized finite sum, solved by Finito/MISO.
    FiniteSum,
    /// `sum f_i(x_i) + g(sum x_i)`, solved by the incremental sharing method.
    Sharing,
    /// Generic block-coordinate scheme with the `G` chosen by `coupling`.
    GenericBc,
    /// Accelerated method; quadratic blocks and convex `G` only.
    Accel,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::FiniteSum => "finite_sum",
            Family::Sharing => "sharing",
            Family::GenericBc => "generic_bc",
            Family::Accel => "accel",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothKind {
    #[default]
    Quadratic,
    /// `(a/2)||x||^2 + b sum sin(x_j) + c^T x`, nonconvex when `|b| > a`.
    Sine,
}

/// Nonsmooth term for the `generic_bc` and `accel` families.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    #[default]
    Separable,
    Consensus,
    Sharing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub family: Family,
    pub n_blocks: usize,
    pub dim: usize,
    #[serde(default)]
    pub smooth: SmoothKind,
    /// Range of per-block condition numbers `L_i / mu_i` (quadratic blocks).
    #[serde(default = "default_kappa")]
    pub kappa: [f64; 2],
    /// Range of per-block `L_i` (quadratic blocks).
    #[serde(default = "default_lipschitz")]
    pub lipschitz: [f64; 2],
    /// If false, quadratic blocks get a zero eigenvalue (`mu_i = 0`).
    #[serde(default = "default_true")]
    pub strongly_convex: bool,
    /// Sine blocks draw `b` in `[-ratio a, ratio a]`.
    #[serde(default = "default_sine_ratio")]
    pub sine_ratio: f64,
    #[serde(default)]
    pub coupling: Coupling,
    #[serde(default = "default_regularizer")]
    pub regularizer: ProxAtom,
    /// `gamma_i = step_fraction N / L_i`.
    #[serde(default = "default_step_fraction")]
    pub step_fraction: f64,
}

fn default_kappa() -> [f64; 2] {
    [1.0, 10.0]
}
fn default_lipschitz() -> [f64; 2] {
    [1.0, 4.0]
}
fn default_true() -> bool {
    true
}
fn default_sine_ratio() -> f64 {
    1.5
}
fn default_regularizer() -> ProxAtom {
    ProxAtom::L1 { lambda: 0.1 }
}
fn default_step_fraction() -> f64 {
    0.95
}

impl ProblemSpec {
    /// A spec with every optional field at its default.
    pub fn new(family: Family, n_blocks: usize, dim: usize) -> Self {
        Self {
            family,
            n_blocks,
            dim,
            smooth: SmoothKind::default(),
            kappa: default_kappa(),
            lipschitz: default_lipschitz(),
            strongly_convex: true,
            sine_ratio: default_sine_ratio(),
            coupling: Coupling::default(),
            regularizer: default_regularizer(),
            step_fraction: default_step_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.n_blocks == 0 || self.dim == 0 {
            return bad("n_blocks and dim must be positive".into());
        }
        let [k0, k1] = self.kappa;
        if !(k0 >= 1.0 && k0 <= k1 && k1.is_finite()) {
            return bad(format!("kappa range [{k0}, {k1}] must satisfy 1 <= lo <= hi"));
        }
        let [l0, l1] = self.lipschitz;
        if !(l0 > 0.0 && l0 <= l1 && l1.is_finite()) {
            return bad(format!("lipschitz range [{l0}, {l1}] must satisfy 0 < lo <= hi"));
        }
        if self.smooth == SmoothKind::Quadratic && self.dim == 1 && k1 > 1.0 && self.strongly_convex {
            return bad("scalar quadratic blocks have kappa = 1; set kappa = [1, 1] or dim >= 2".into());
        }
        if !self.strongly_convex && self.dim < 2 {
            return bad("a zero eigenvalue needs dim >= 2".into());
        }
        if !(self.sine_ratio >= 0.0 && self.sine_ratio.is_finite()) {
            return bad("sine_ratio must be nonnegative".into());
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return bad(format!("step_fraction {} must lie in (0, 1)", self.step_fraction));
        }
        self.regularizer.validate()?;
        if self.family == Family::Accel {
            if self.smooth != SmoothKind::Quadratic {
                return bad("the accel family needs quadratic blocks".into());
            }
            if !self.regularizer.is_convex() {
                return bad("the accel family needs a convex regularizer".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub tol_residual: f64,
    #[serde(default = "default_one")]
    pub trace_every: usize,
    #[serde(default = "default_true")]
    pub check_descent: bool,
    /// Off by default so that reruns produce byte-identical traces.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Compute `min Phi` by a full proximal-gradient run per seed.
    #[serde(default = "default_true")]
    pub ground_truth: bool,
}

fn default_max_iters() -> usize {
    1000
}
fn default_one() -> usize {
    1
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iters: default_max_iters(),
            tol_residual: 0.0,
            trace_every: 1,
            check_descent: true,
            record_wall_time: false,
            ground_truth: true,
        }
    }
}

/// Sampler as written in a config; resolved per seed into a [`SamplerSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerChoice {
    /// One block per iteration, uniformly.
    Uniform,
    Randomized {
        probabilities: Vec<f64>,
        #[serde(default)]
        batch: Option<usize>,
    },
    Cyclic,
    Shuffled,
    /// Without `schedule`, index `i` is repeated `period / N` times in a row.
    EssentiallyCyclic {
        period: usize,
        #[serde(default)]
        schedule: Option<Vec<Vec<usize>>>,
    },
    /// All blocks every iteration.
    Full,
}

impl SamplerChoice {
    pub fn label(&self) -> &'static str {
        match self {
            SamplerChoice::Uniform => "uniform",
            SamplerChoice::Randomized { .. } => "randomized",
            SamplerChoice::Cyclic => "cyclic",
            SamplerChoice::Shuffled => "shuffled",
            SamplerChoice::EssentiallyCyclic { .. } => "essentially_cyclic",
            SamplerChoice::Full => "full",
        }
    }

    pub fn resolve(&self, n_blocks: usize, seed: u64) -> Result<SamplerSpec> {
        let spec = match self {
            SamplerChoice::Uniform => SamplerSpec::uniform(n_blocks, seed),
            SamplerChoice::Randomized { probabilities, batch } => SamplerSpec::new(
                SamplerKind::Randomized {
                    probabilities: probabilities.clone(),
                    batch: *batch,
                },
                seed,
            ),
            SamplerChoice::Cyclic => SamplerSpec::cyclic(),
            SamplerChoice::Shuffled => SamplerSpec::shuffled(seed),
            SamplerChoice::EssentiallyCyclic { period, schedule } => {
                let schedule = match schedule {
                    Some(sets) => sets
                        .iter()
                        .map(|s| IndexSet::new(s.clone(), n_blocks))
                        .collect::<bcprox::Result<Vec<_>>>()?,
                    None => default_schedule(n_blocks, *period)?,
                };
                SamplerSpec::new(
                    SamplerKind::EssentiallyCyclic {
                        period: *period,
                        schedule,
                    },
                    seed,
                )
            }
            SamplerChoice::Full => SamplerSpec::full(n_blocks),
        };
        // Surface schedule and probability errors at resolution time.
        bcprox::sampling::SamplerState::new(&spec, n_blocks)?;
        Ok(spec)
    }
}

/// `0, .., 0, 1, .., 1, ..` with each index repeated `period / N` times.
pub fn default_schedule(n_blocks: usize, period: usize) -> Result<Vec<IndexSet>> {
    if period < n_blocks {
        return Err(BenchError::Config(format!(
            "period {period} below N = {n_blocks} needs an explicit schedule"
        )));
    }
    let reps = period / n_blocks;
    Ok((0..n_blocks)
        .flat_map(|i| std::iter::repeat_n(IndexSet::single(i), reps))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solver: SolverParams,
    pub samplers: Vec<SamplerChoice>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(BenchError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.problem.validate()?;
        if self.samplers.is_empty() || self.seeds.is_empty() {
            return Err(BenchError::Config(
                "at least one sampler and one seed are required".into(),
            ));
        }
        let s = &self.solver;
        if s.max_iters == 0 || s.trace_every == 0 || !(s.tol_residual >= 0.0) {
            return Err(BenchError::Config(
                "max_iters and trace_every must be positive, tol_residual nonnegative".into(),
            ));
        }
        for choice in &self.samplers {
            choice.resolve(self.problem.n_blocks, 0)?;
        }
        Ok(())
    }
}
