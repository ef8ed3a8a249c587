//! Proportional stratified sampling of drawings by segment count.
//!
//! Bin width is the smaller of Sturges's rule and the Freedman–Diaconis
//! estimator. Quartiles use linear interpolation between order statistics
//! (the "type 7" convention).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drawing::{ConceptCorpus, Drawing};

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("cannot compute a bin width of an empty sample")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub width: f64,
    pub origin: f64,
    pub count: usize,
}

impl BinSpec {
    pub fn for_values(values: &[usize]) -> Result<Self, SamplingError> {
        let width = bin_width(values)?;
        let min = *values.iter().min().ok_or(SamplingError::Empty)?;
        let max = *values.iter().max().ok_or(SamplingError::Empty)?;
        let range = (max - min) as f64;
        // tolerate float noise when the range is an exact multiple of the width
        let count = ((range / width) - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            width,
            origin: min as f64,
            count,
        })
    }

    pub fn index(&self, value: usize) -> usize {
        let raw = ((value as f64 - self.origin) / self.width).floor();
        (raw.max(0.0) as usize).min(self.count - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub target_size: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            target_size: 50,
            seed: 0,
        }
    }
}

/// Type-7 quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sturges_width(values: &[usize]) -> Result<f64, SamplingError> {
    let (min, max) = min_max(values)?;
    let n = values.len() as f64;
    let bins = n.log2().ceil() + 1.0;
    Ok((max - min) as f64 / bins)
}

pub fn freedman_diaconis_width(values: &[usize]) -> Result<f64, SamplingError> {
    if values.is_empty() {
        return Err(SamplingError::Empty);
    }
    let mut sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    Ok(2.0 * iqr * (values.len() as f64).powf(-1.0 / 3.0))
}

fn min_max(values: &[usize]) -> Result<(usize, usize), SamplingError> {
    let min = values.iter().min().ok_or(SamplingError::Empty)?;
    let max = values.iter().max().ok_or(SamplingError::Empty)?;
    Ok((*min, *max))
}

/// `min(sturges, fd)`, using Sturges alone when the IQR is zero and 1.0 when
/// all values are equal.
pub fn bin_width(values: &[usize]) -> Result<f64, SamplingError> {
    let (min, max) = min_max(values)?;
    if max == min {
        return Ok(1.0);
    }
    let sturges = sturges_width(values)?;
    let fd = freedman_diaconis_width(values)?;
    if fd <= 0.0 {
        return Ok(sturges);
    }
    Ok(sturges.min(fd))
}

/// Per-bin quota `round(target · pop / total)` (half rounds up), capped at the
/// bin population.
pub fn allocate_quotas(populations: &[usize], target: usize) -> Vec<usize> {
    let total: usize = populations.iter().sum();
    if total == 0 {
        return vec![0; populations.len()];
    }
    populations
        .iter()
        .map(|&pop| ((2 * target * pop + total) / (2 * total)).min(pop))
        .collect()
}

/// Draws about `cfg.target_size` drawings, proportionally from each
/// segment-count bin. Output keeps corpus order within each bin, bins in
/// ascending order.
pub fn stratified_sample(corpus: &ConceptCorpus, cfg: &SampleConfig) -> Vec<Drawing> {
    if corpus.drawings.is_empty() || cfg.target_size == 0 {
        return Vec::new();
    }
    let counts: Vec<usize> = corpus.drawings.iter().map(Drawing::segment_count).collect();
    let spec = BinSpec::for_values(&counts).expect("non-empty corpus");
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); spec.count];
    for (i, &c) in counts.iter().enumerate() {
        bins[spec.index(c)].push(i);
    }
    let pops: Vec<usize> = bins.iter().map(Vec::len).collect();
    let quotas = allocate_quotas(&pops, cfg.target_size);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for (members, quota) in bins.iter().zip(quotas) {
        if quota == 0 {
            continue;
        }
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, members.len(), quota)
            .into_iter()
            .map(|j| members[j])
            .collect();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| corpus.drawings[i].clone()));
    }
    out
}
