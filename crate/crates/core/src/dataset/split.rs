//! Seeded train/validation/test assignment with overlap removal.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::samples::Sample;
use crate::dataset::series::Minute;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitKind {
    Train,
    Validation,
    Test,
}

impl SplitKind {
    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Validation => "val",
            SplitKind::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitConfig {
    pub fractions: [f64; 3],
    pub seed: u64,
    /// Consecutive samples assigned together. One reproduces a per-sample
    /// shuffle; larger blocks keep most samples when windows overlap.
    pub block_len: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { fractions: [0.70, 0.15, 0.15], seed: 0, block_len: 1 }
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Samples dropped for overlapping a differently assigned sample.
    pub discarded: usize,
    /// Anchor and assignment of every kept sample, in anchor order.
    pub assignment: Vec<(Minute, SplitKind)>,
}

impl Split {
    pub fn get(&self, kind: SplitKind) -> &[Sample] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Validation => &self.validation,
            SplitKind::Test => &self.test,
        }
    }
}

fn overlaps(a: (Minute, Minute), b: (Minute, Minute)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// True when either sample's full span touches the other's forecast hours.
pub fn conflicts(a: &Sample, b: &Sample) -> bool {
    overlaps(a.span(), b.target_span()) || overlaps(b.span(), a.target_span())
}

/// Shuffles blocks of samples with a seeded RNG, cuts the shuffled order at
/// the requested fractions, then walks samples by anchor and drops any that
/// conflict with an already kept sample of another split. The earlier
/// anchor always wins.
pub fn split(samples: Vec<Sample>, cfg: &SplitConfig) -> Result<Split> {
    if samples.is_empty() {
        return Err(Error::Contract("cannot split an empty sample set".into()));
    }
    let total: f64 = cfg.fractions.iter().sum();
    if cfg.fractions.iter().any(|f| *f < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {:?} must be non-negative and sum to 1", cfg.fractions)));
    }
    let mut samples = samples;
    samples.sort_by_key(|s| s.anchor);

    let block_len = cfg.block_len.max(1);
    let n_blocks = samples.len().div_ceil(block_len);
    let mut order: Vec<usize> = (0..n_blocks).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let n_train = (cfg.fractions[0] * n_blocks as f64).round() as usize;
    let n_val = ((cfg.fractions[1] * n_blocks as f64).round() as usize).min(n_blocks - n_train.min(n_blocks));
    let mut block_kind = vec![SplitKind::Test; n_blocks];
    for (rank, &b) in order.iter().enumerate() {
        block_kind[b] = if rank < n_train {
            SplitKind::Train
        } else if rank < n_train + n_val {
            SplitKind::Validation
        } else {
            SplitKind::Test
        };
    }

    let mut kept: Vec<(Sample, SplitKind)> = Vec::with_capacity(samples.len());
    let mut discarded = 0;
    for (i, s) in samples.into_iter().enumerate() {
        let kind = block_kind[i / block_len];
        let reach = s.span().0 - (s.target_span().1 - s.target_span().0);
        let clash = kept
            .iter()
            .rev()
            .take_while(|(k, _)| k.span().1 > reach)
            .any(|(k, kk)| *kk != kind && conflicts(k, &s));
        if clash {
            discarded += 1;
        } else {
            kept.push((s, kind));
        }
    }

    let assignment = kept.iter().map(|(s, k)| (s.anchor, *k)).collect();
    let mut out = Split { train: vec![], validation: vec![], test: vec![], discarded, assignment };
    for (s, k) in kept {
        match k {
            SplitKind::Train => out.train.push(s),
            SplitKind::Validation => out.validation.push(s),
            SplitKind::Test => out.test.push(s),
        }
    }
    Ok(out)
}
