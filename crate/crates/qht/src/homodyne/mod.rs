//! Homodyne dataset generation.
//!
//! A dataset is B blocks of n quadrature samples (x, phi) drawn from a
//! state's distribution p(x, phi) under a phase-selection strategy. Blocks
//! are the unit of error analysis (subensemble means) and of parallelism:
//! each block runs on an independent child RNG derived from (seed, block),
//! so a dataset is bit-identical no matter how blocks are scheduled.

pub mod io;
mod sampler;

pub use sampler::{sample_quadrature, QuadratureSampler};

use crate::error::{Error, Result};
use crate::states::{StateKind, StateSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// RNG scheme recorded in provenance so datasets are portable: ChaCha12
/// streams seeded per block by a SplitMix64 hash of (seed, block index).
pub const GENERATOR_NAME: &str = "chacha12/splitmix64-block-seeds";

/// One homodyne outcome: quadrature value at a reference phase, tagged with
/// the block it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    /// Reference phase in [0, pi).
    pub phi: f64,
    pub block: u32,
}

/// How phases are chosen.
///
/// `Random` is the usual assumption (phi uniform on [0, pi)); `Grid`
/// cycles deterministically through P equally spaced phases, which models
/// equally-spaced phase scanning together with its systematic errors;
/// `Stratified` draws uniformly inside each of P equal bins in cyclic
/// order, giving per-phase-bin bookkeeping without the grid's bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseStrategy {
    Random,
    Grid { p: u32 },
    Stratified { p: u32 },
}

impl PhaseStrategy {
    fn validate(&self) -> Result<()> {
        match self {
            PhaseStrategy::Grid { p } | PhaseStrategy::Stratified { p } if *p == 0 => {
                Err(Error::InvalidParameter {
                    name: "p",
                    why: "phase count must be >= 1".into(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// Everything needed to regenerate or audit a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub state: StateKind,
    /// Fock truncation used by the generating state.
    pub nmax: usize,
    pub strategy: PhaseStrategy,
    pub seed: u64,
    pub blocks: u32,
    pub samples_per_block: u32,
    pub generator: String,
}

/// Block-ordered homodyne samples plus their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneDataset {
    provenance: Provenance,
    samples: Vec<Sample>,
}

impl HomodyneDataset {
    /// Assemble from parts, enforcing the layout invariants: blocks * n
    /// samples, contiguous block runs in order, finite x, phi in [0, pi).
    pub fn from_parts(provenance: Provenance, samples: Vec<Sample>) -> Result<Self> {
        let b = provenance.blocks as usize;
        let n = provenance.samples_per_block as usize;
        if b == 0 || n == 0 {
            return Err(Error::BadDataset("empty block structure".into()));
        }
        if samples.len() != b * n {
            return Err(Error::BadDataset(format!(
                "{} samples, expected {} blocks x {}",
                samples.len(),
                b,
                n
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.block as usize != i / n {
                return Err(Error::BadDataset(format!(
                    "sample {i} tagged block {}, expected {}",
                    s.block,
                    i / n
                )));
            }
            if !s.x.is_finite() {
                return Err(Error::BadDataset(format!("sample {i}: x = {}", s.x)));
            }
            if !(0.0..std::f64::consts::PI).contains(&s.phi) {
                return Err(Error::BadDataset(format!(
                    "sample {i}: phi = {} outside [0, pi)",
                    s.phi
                )));
            }
        }
        Ok(HomodyneDataset {
            provenance,
            samples,
        })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn blocks(&self) -> u32 {
        self.provenance.blocks
    }

    pub fn n_per_block(&self) -> u32 {
        self.provenance.samples_per_block
    }

    /// The contiguous run of samples belonging to one block.
    pub fn block_slice(&self, block: u32) -> &[Sample] {
        let n = self.provenance.samples_per_block as usize;
        let start = block as usize * n;
        &self.samples[start..start + n]
    }

    /// A new dataset holding blocks `[from, to)`, renumbered from zero.
    ///
    /// Useful for split fits: tune coefficients on one half of the blocks,
    /// evaluate on the other, so the tuned kernel is statistically
    /// independent of the data it is averaged over.
    pub fn subset_blocks(&self, from: u32, to: u32) -> Result<HomodyneDataset> {
        if from >= to || to > self.provenance.blocks {
            return Err(Error::InvalidParameter {
                name: "blocks",
                why: format!(
                    "need 0 <= from < to <= {}, got [{from}, {to})",
                    self.provenance.blocks
                ),
            });
        }
        let mut samples = Vec::with_capacity(((to - from) as usize) * self.n_per_block() as usize);
        for b in from..to {
            for s in self.block_slice(b) {
                let mut s2 = *s;
                s2.block = b - from;
                samples.push(s2);
            }
        }
        let mut provenance = self.provenance.clone();
        provenance.blocks = to - from;
        HomodyneDataset::from_parts(provenance, samples)
    }
}

/// SplitMix64 finalizer; full-avalanche 64-bit mix.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent child seed for one block.
fn child_seed(seed: u64, block: u32) -> u64 {
    mix64(mix64(seed) ^ mix64(0xB10C_0000_0000_0000 | block as u64))
}

/// Generate a dataset: B blocks of n samples each.
///
/// Per sample the RNG stream is consumed in a fixed order (phase uniform
/// if the strategy needs one, then the quadrature uniform), so the output
/// is a pure function of (spec, strategy, blocks, n, seed).
pub fn generate_dataset(
    spec: &StateSpec,
    strategy: PhaseStrategy,
    blocks: u32,
    n_per_block: u32,
    seed: u64,
) -> Result<HomodyneDataset> {
    strategy.validate()?;
    if blocks == 0 || n_per_block == 0 {
        return Err(Error::InvalidParameter {
            name: "blocks/n_per_block",
            why: format!("need at least 1 of each, got {blocks} x {n_per_block}"),
        });
    }
    let sampler = QuadratureSampler::new(spec)?;
    // Exact phase repetition only happens on the grid; caching per-phase
    // tables for continuous strategies would just hoard memory.
    let use_cache = matches!(strategy, PhaseStrategy::Grid { .. });
    let per_block: Vec<Vec<Sample>> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<Vec<Sample>> {
            let mut rng = ChaCha12Rng::seed_from_u64(child_seed(seed, b));
            let mut cache = sampler::PhaseCache::new();
            let mut out = Vec::with_capacity(n_per_block as usize);
            for j in 0..n_per_block {
                let gidx = b as u64 * n_per_block as u64 + j as u64;
                let phi = match strategy {
                    PhaseStrategy::Random => std::f64::consts::PI * rng.random::<f64>(),
                    PhaseStrategy::Grid { p } => {
                        std::f64::consts::PI * ((gidx % p as u64) as f64) / p as f64
                    }
                    PhaseStrategy::Stratified { p } => {
                        let bin = (gidx % p as u64) as f64;
                        std::f64::consts::PI * (bin + rng.random::<f64>()) / p as f64
                    }
                };
                let u = rng.random::<f64>();
                let x = if use_cache {
                    sampler.draw_cached(&mut cache, phi, u)?
                } else {
                    sampler.draw(phi, u)?
                };
                out.push(Sample { x, phi, block: b });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let samples: Vec<Sample> = per_block.into_iter().flatten().collect();
    let provenance = Provenance {
        state: spec.kind().clone(),
        nmax: spec.nmax(),
        strategy,
        seed,
        blocks,
        samples_per_block: n_per_block,
        generator: GENERATOR_NAME.to_string(),
    };
    HomodyneDataset::from_parts(provenance, samples)
}
