//! Index-set selection rules: randomized (independent or mini-batch),
//! cyclic, shuffled cyclic and essentially cyclic schedules.
//!
//! All randomness comes from [`stream_rng`]: ChaCha8 (`rand_chacha`) seeded
//! with `seed_from_u64(seed)` and switched to a fixed stream id, so sampler
//! and problem-generator streams never overlap and are reproducible across
//! platforms.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stream id of index samplers.
pub const SAMPLER_STREAM: u64 = 1;
/// Stream id of problem generators.
pub const GENERATOR_STREAM: u64 = 2;
/// Stream id for random starting points.
pub const START_STREAM: u64 = 3;

/// ChaCha8 generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A nonempty set of distinct block indices (0-based), kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(mut indices: Vec<usize>, n_blocks: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::Contract("index set must be nonempty".into()));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= n_blocks) {
            return Err(Error::Contract(format!("index {i} out of range for {n_blocks} blocks")));
        }
        Ok(Self(indices))
    }

    pub fn single(i: usize) -> Self {
        Self(vec![i])
    }

    pub fn all(n_blocks: usize) -> Self {
        Self((0..n_blocks).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }
}

impl TryFrom<Vec<usize>> for IndexSet {
    type Error = String;
    fn try_from(v: Vec<usize>) -> std::result::Result<Self, String> {
        let n = v.iter().max().map_or(0, |m| m + 1);
        IndexSet::new(v, n).map_err(|e| e.to_string())
    }
}

impl From<IndexSet> for Vec<usize> {
    fn from(s: IndexSet) -> Self {
        s.0
    }
}

/// Which sampling rule to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerKind {
    /// Each index `i` is included with probability at least `p_i`.
    ///
    /// Without `batch`, indices are included independently with probability
    /// `p_i` and empty draws are redrawn; conditioning on a nonempty set only
    /// raises the inclusion probabilities. With `batch = b`, `b` distinct
    /// indices are drawn by weighted sampling without replacement using the
    /// `p_i` as weights.
    Randomized {
        probabilities: Vec<f64>,
        #[serde(default)]
        batch: Option<usize>,
    },
    /// `I^{k+1} = {k mod N}`.
    Cyclic,
    /// `I^{k+1} = {pi_{floor(k/N)}(k mod N)}` with a fresh uniform permutation each epoch.
    ShuffledCyclic,
    /// A periodic schedule in which every index appears in any `period` consecutive sets.
    EssentiallyCyclic { period: usize, schedule: Vec<IndexSet> },
}

/// A sampling rule plus the seed of its random stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    #[serde(default)]
    pub seed: u64,
}

impl SamplerSpec {
    pub fn new(kind: SamplerKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    /// One index per iteration, uniformly at random.
    pub fn uniform(n_blocks: usize, seed: u64) -> Self {
        Self::new(
            SamplerKind::Randomized {
                probabilities: vec![1.0 / n_blocks as f64; n_blocks],
                batch: Some(1),
            },
            seed,
        )
    }

    pub fn cyclic() -> Self {
        Self::new(SamplerKind::Cyclic, 0)
    }

    pub fn shuffled(seed: u64) -> Self {
        Self::new(SamplerKind::ShuffledCyclic, seed)
    }

    /// `I^{k+1} = [N]` for all `k` (full proximal gradient).
    pub fn full(n_blocks: usize) -> Self {
        Self::new(
            SamplerKind::EssentiallyCyclic {
                period: 1,
                schedule: vec![IndexSet::all(n_blocks)],
            },
            0,
        )
    }

    /// The period `T` of a deterministic rule (`N` for cyclic rules).
    pub fn period(&self, n_blocks: usize) -> Option<usize> {
        match &self.kind {
            SamplerKind::Randomized { .. } => None,
            SamplerKind::Cyclic | SamplerKind::ShuffledCyclic => Some(n_blocks),
            SamplerKind::EssentiallyCyclic { period, .. } => Some(*period),
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            SamplerKind::Randomized { .. } => "randomized",
            SamplerKind::Cyclic => "cyclic",
            SamplerKind::ShuffledCyclic => "shuffled",
            SamplerKind::EssentiallyCyclic { .. } => "essentially_cyclic",
        }
    }
}

/// True iff every window of `period` consecutive entries of the periodic
/// extension of `schedule` covers all `n_blocks` indices.
pub fn validate_essentially_cyclic(schedule: &[IndexSet], period: usize, n_blocks: usize) -> bool {
    if schedule.is_empty() || period == 0 || n_blocks == 0 {
        return false;
    }
    let len = schedule.len();
    let mut seen = vec![false; n_blocks];
    for start in 0..len {
        seen.iter_mut().for_each(|s| *s = false);
        for j in 0..period {
            for &i in schedule[(start + j) % len].as_slice() {
                if i < n_blocks {
                    seen[i] = true;
                }
            }
        }
        if !seen.iter().all(|&s| s) {
            return false;
        }
    }
    true
}

enum Permutations {
    Random,
    Explicit(Vec<Vec<usize>>),
}

/// Mutable sampler state; one owner, one counter.
pub struct SamplerState {
    n_blocks: usize,
    kind: SamplerKind,
    rng: ChaCha8Rng,
    counter: usize,
    perms: Permutations,
    epoch_perm: Vec<usize>,
}

impl SamplerState {
    pub fn new(spec: &SamplerSpec, n_blocks: usize) -> Result<Self> {
        if n_blocks == 0 {
            return Err(Error::Config("sampler needs at least one block".into()));
        }
        match &spec.kind {
            SamplerKind::Randomized { probabilities, batch } => {
                if probabilities.len() != n_blocks {
                    return Err(Error::Config(format!(
                        "{} probabilities for {n_blocks} blocks",
                        probabilities.len()
                    )));
                }
                if probabilities.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
                    return Err(Error::Config("sampling probabilities must be positive".into()));
                }
                match batch {
                    Some(b) if *b == 0 || *b > n_blocks => {
                        return Err(Error::Config(format!("batch size {b} not in [1, {n_blocks}]")));
                    }
                    None if probabilities.iter().any(|p| *p > 1.0) => {
                        return Err(Error::Config("inclusion probabilities must not exceed 1".into()));
                    }
                    _ => {}
                }
            }
            SamplerKind::EssentiallyCyclic { period, schedule } => {
                for set in schedule {
                    if set.as_slice().iter().any(|&i| i >= n_blocks) {
                        return Err(Error::Config("schedule index out of range".into()));
                    }
                }
                if !validate_essentially_cyclic(schedule, *period, n_blocks) {
                    return Err(Error::Config(format!(
                        "schedule does not cover all {n_blocks} indices in every window of {period}"
                    )));
                }
            }
            SamplerKind::Cyclic | SamplerKind::ShuffledCyclic => {}
        }
        Ok(Self {
            n_blocks,
            kind: spec.kind.clone(),
            rng: stream_rng(spec.seed, SAMPLER_STREAM),
            counter: 0,
            perms: Permutations::Random,
            epoch_perm: (0..n_blocks).collect(),
        })
    }

    /// Shuffled-cyclic sampler cycling through the given epoch permutations
    /// (0-based) instead of drawing them at random.
    pub fn with_permutations(n_blocks: usize, perms: Vec<Vec<usize>>) -> Result<Self> {
        if perms.is_empty() {
            return Err(Error::Config("no permutations given".into()));
        }
        for p in &perms {
            let mut s = p.clone();
            s.sort_unstable();
            if s != (0..n_blocks).collect::<Vec<_>>() {
                return Err(Error::Config(format!("{p:?} is not a permutation of 0..{n_blocks}")));
            }
        }
        let mut st = Self::new(&SamplerSpec::shuffled(0), n_blocks)?;
        st.perms = Permutations::Explicit(perms);
        Ok(st)
    }

    pub fn counter(&self) -> usize {
        self.counter
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// Index set `I^{k+1}`; `k` must equal the internal counter.
    pub fn next_indices(&mut self, k: usize) -> Result<IndexSet> {
        if k != self.counter {
            return Err(Error::Contract(format!(
                "sampler asked for iteration {k}, internal counter is {}",
                self.counter
            )));
        }
        let n = self.n_blocks;
        let set = match &self.kind {
            SamplerKind::Cyclic => IndexSet::single(k % n),
            SamplerKind::ShuffledCyclic => {
                if k.is_multiple_of(n) {
                    let epoch = k / n;
                    match &self.perms {
                        Permutations::Random => self.epoch_perm.shuffle(&mut self.rng),
                        Permutations::Explicit(ps) => self.epoch_perm.clone_from(&ps[epoch % ps.len()]),
                    }
                }
                IndexSet::single(self.epoch_perm[k % n])
            }
            SamplerKind::EssentiallyCyclic { schedule, .. } => schedule[k % schedule.len()].clone(),
            SamplerKind::Randomized {
                probabilities,
                batch: None,
            } => loop {
                let picked: Vec<usize> = (0..n)
                    .filter(|&i| self.rng.random::<f64>() < probabilities[i])
                    .collect();
                if !picked.is_empty() {
                    break IndexSet(picked);
                }
            },
            SamplerKind::Randomized {
                probabilities,
                batch: Some(b),
            } => {
                let mut weights = probabilities.clone();
                let mut picked = Vec::with_capacity(*b);
                for _ in 0..*b {
                    let total: f64 = weights.iter().sum();
                    let mut r = self.rng.random::<f64>() * total;
                    let mut chosen = None;
                    for (i, w) in weights.iter().enumerate() {
                        if *w <= 0.0 {
                            continue;
                        }
                        chosen = Some(i);
                        if r < *w {
                            break;
                        }
                        r -= w;
                    }
                    let i = chosen.expect("positive weights remain");
                    weights[i] = 0.0;
                    picked.push(i);
                }
                picked.sort_unstable();
                IndexSet(picked)
            }
        };
        self.counter += 1;
        Ok(set)
    }

    /// Index set for the next iteration.
    pub fn next_set(&mut self) -> IndexSet {
        let k = self.counter;
        self.next_indices(k).expect("counter in sync")
    }
}
