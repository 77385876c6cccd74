use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{token_count, CleanEmail};

/// E-mails under this many whitespace tokens count as short.
pub const DEFAULT_SHORT_THRESHOLD: usize = 25;
const BIN_WIDTH: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Inclusive lower bound in tokens.
    pub from: usize,
    /// Exclusive upper bound in tokens.
    pub to: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total: usize,
    pub short_threshold: usize,
    pub short: usize,
    pub elaborate: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub mean_tokens: f64,
    pub histogram: Vec<HistogramBin>,
}

pub fn corpus_stats(emails: &[CleanEmail], short_threshold: usize) -> StatsReport {
    let lengths: Vec<usize> = emails.iter().map(|e| token_count(&e.body)).collect();
    let short = lengths.iter().filter(|&&n| n < short_threshold).count();
    let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
    for &n in &lengths {
        *bins.entry(n / BIN_WIDTH).or_default() += 1;
    }
    StatsReport {
        total: lengths.len(),
        short_threshold,
        short,
        elaborate: lengths.len() - short,
        min_tokens: lengths.iter().copied().min().unwrap_or(0),
        max_tokens: lengths.iter().copied().max().unwrap_or(0),
        mean_tokens: if lengths.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
        },
        histogram: bins
            .into_iter()
            .map(|(b, count)| HistogramBin {
                from: b * BIN_WIDTH,
                to: (b + 1) * BIN_WIDTH,
                count,
            })
            .collect(),
    }
}
