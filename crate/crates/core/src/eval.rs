//! Full-ranking top-K evaluation: Recall, Precision, Hit, NDCG and MRR at a
//! set of cutoffs, averaged over the users that have ground truth in a split.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{SplitName, SplitPairs};
use crate::model::{score_all_items, FinalEmbeddings};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no user has ground truth in the {0} split")]
    NoEvaluableUsers(&'static str),
    #[error("cutoffs must be positive and strictly ascending: {0:?}")]
    BadCutoffs(Vec<usize>),
}

/// Held-out split to evaluate against. Training pairs are never a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> SplitName {
        match self {
            Split::Validation => SplitName::Validation,
            Split::Test => SplitName::Test,
        }
    }

    pub fn as_str(self) -> &'static str {
        self.name().as_str()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NdcgVariant {
    /// Normalizer sums `1/log(n+1)` over all `N` positions.
    #[default]
    Literal,
    /// Normalizer is the ideal DCG, capped at `min(|truth|, N)` positions.
    Standard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub cutoffs: Vec<usize>,
    pub exclude_train: bool,
    pub ndcg: NdcgVariant,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cutoffs: vec![5, 10, 15, 20, 25, 30],
            exclude_train: true,
            ndcg: NdcgVariant::Literal,
        }
    }
}

impl EvalConfig {
    pub fn with_cutoffs(cutoffs: Vec<usize>) -> Result<Self, EvalError> {
        let cfg = EvalConfig {
            cutoffs,
            ..EvalConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), EvalError> {
        let ok = !self.cutoffs.is_empty()
            && self.cutoffs[0] >= 1
            && self.cutoffs.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(())
        } else {
            Err(EvalError::BadCutoffs(self.cutoffs.clone()))
        }
    }
}

fn by_score_then_index(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// The `n` highest-scoring items not in `exclusions` (sorted ascending),
/// highest first, ties broken by ascending index.
pub fn rank_scores(scores: &[f64], n: usize, exclusions: &[usize]) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|i| exclusions.binary_search(i).is_err())
        .collect();
    let cmp = by_score_then_index(scores);
    if n == 0 {
        return Vec::new();
    }
    if candidates.len() > n {
        candidates.select_nth_unstable_by(n - 1, &cmp);
        candidates.truncate(n);
    }
    candidates.sort_unstable_by(&cmp);
    candidates
}

pub fn top_k(u: usize, finals: &FinalEmbeddings, n: usize, exclusions: &[usize]) -> Vec<usize> {
    rank_scores(&score_all_items(u, finals), n, exclusions)
}

fn hits<'a>(recs: &'a [usize], truth: &'a [usize], n: usize) -> impl Iterator<Item = bool> + 'a {
    recs.iter()
        .take(n)
        .map(move |i| truth.binary_search(i).is_ok())
}

fn hit_count(recs: &[usize], truth: &[usize], n: usize) -> usize {
    hits(recs, truth, n).filter(|&h| h).count()
}

// `truth` arguments below are sorted, deduplicated and non-empty.

pub fn recall_at(recs: &[usize], truth: &[usize], n: usize) -> f64 {
    hit_count(recs, truth, n) as f64 / truth.len() as f64
}

pub fn precision_at(recs: &[usize], truth: &[usize], n: usize) -> f64 {
    hit_count(recs, truth, n) as f64 / n as f64
}

pub fn hit_at(recs: &[usize], truth: &[usize], n: usize) -> f64 {
    if hit_count(recs, truth, n) > 0 {
        1.0
    } else {
        0.0
    }
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).ln()
}

pub fn ndcg_at(recs: &[usize], truth: &[usize], n: usize) -> f64 {
    ndcg_variant_at(recs, truth, n, NdcgVariant::Literal)
}

pub fn ndcg_variant_at(recs: &[usize], truth: &[usize], n: usize, variant: NdcgVariant) -> f64 {
    let dcg: f64 = hits(recs, truth, n)
        .enumerate()
        .filter(|&(_, h)| h)
        .map(|(pos, _)| discount(pos + 1))
        .sum();
    let ideal_len = match variant {
        NdcgVariant::Literal => n,
        NdcgVariant::Standard => n.min(truth.len()),
    };
    let ideal: f64 = (1..=ideal_len).map(discount).sum();
    dcg / ideal
}

/// Reciprocal rank of the first hit within the cutoff, 0 without one.
pub fn mrr_at(recs: &[usize], truth: &[usize], n: usize) -> f64 {
    hits(recs, truth, n)
        .position(|h| h)
        .map_or(0.0, |pos| 1.0 / (pos + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffMetrics {
    pub cutoff: usize,
    pub recall: f64,
    pub precision: f64,
    pub hit: f64,
    pub ndcg: f64,
    pub mrr: f64,
}

impl CutoffMetrics {
    fn zero(cutoff: usize) -> Self {
        CutoffMetrics {
            cutoff,
            recall: 0.0,
            precision: 0.0,
            hit: 0.0,
            ndcg: 0.0,
            mrr: 0.0,
        }
    }

    pub fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("recall", self.recall),
            ("precision", self.precision),
            ("hit", self.hit),
            ("ndcg", self.ndcg),
            ("mrr", self.mrr),
        ]
    }
}

/// Metrics of one user at every cutoff.
pub fn user_metrics(
    recs: &[usize],
    truth: &[usize],
    cutoffs: &[usize],
    ndcg: NdcgVariant,
) -> Vec<CutoffMetrics> {
    cutoffs
        .iter()
        .map(|&n| CutoffMetrics {
            cutoff: n,
            recall: recall_at(recs, truth, n),
            precision: precision_at(recs, truth, n),
            hit: hit_at(recs, truth, n),
            ndcg: ndcg_variant_at(recs, truth, n, ndcg),
            mrr: mrr_at(recs, truth, n),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub split: &'static str,
    pub n_users_evaluated: usize,
    pub rows: Vec<CutoffMetrics>,
}

#[derive(Serialize)]
struct Record<'a> {
    split: &'a str,
    cutoff: usize,
    metric: &'a str,
    value: f64,
    n_users: usize,
}

impl MetricReport {
    pub fn at(&self, cutoff: usize) -> Option<&CutoffMetrics> {
        self.rows.iter().find(|r| r.cutoff == cutoff)
    }

    /// One JSON object per line: `{split, cutoff, metric, value, n_users}`,
    /// values at full precision.
    pub fn write_records<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in &self.rows {
            for (metric, value) in row.named() {
                let rec = Record {
                    split: self.split,
                    cutoff: row.cutoff,
                    metric,
                    value,
                    n_users: self.n_users_evaluated,
                };
                serde_json::to_writer(&mut out, &rec)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "split: {}  users evaluated: {}",
            self.split, self.n_users_evaluated
        )?;
        writeln!(
            f,
            "{:>6}  {:>9}  {:>9}  {:>9}  {:>9}  {:>9}",
            "N", "Recall", "Precision", "Hit", "NDCG", "MRR"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>6}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}  {:>9.4}",
                r.cutoff, r.recall, r.precision, r.hit, r.ndcg, r.mrr
            )?;
        }
        Ok(())
    }
}

/// Ranks every non-training item for each user with ground truth in `split`
/// and averages the per-user metrics in user-index order.
pub fn evaluate(
    finals: &FinalEmbeddings,
    split: Split,
    pairs: &SplitPairs,
    cfg: &EvalConfig,
) -> Result<MetricReport, EvalError> {
    cfg.validate()?;
    let truth = pairs.items_by_user(split.name());
    let train = if cfg.exclude_train {
        pairs.items_by_user(SplitName::Train)
    } else {
        vec![Vec::new(); pairs.n_users]
    };
    let depth = *cfg.cutoffs.last().expect("validated non-empty");

    let per_user: Vec<Option<Vec<CutoffMetrics>>> = (0..pairs.n_users)
        .into_par_iter()
        .map(|u| {
            if truth[u].is_empty() {
                return None;
            }
            let recs = top_k(u, finals, depth, &train[u]);
            Some(user_metrics(&recs, &truth[u], &cfg.cutoffs, cfg.ndcg))
        })
        .collect();

    let mut sums: Vec<CutoffMetrics> = cfg
        .cutoffs
        .iter()
        .map(|&n| CutoffMetrics::zero(n))
        .collect();
    let mut n_users = 0usize;
    for m in per_user.iter().flatten() {
        n_users += 1;
        for (s, x) in sums.iter_mut().zip(m) {
            s.recall += x.recall;
            s.precision += x.precision;
            s.hit += x.hit;
            s.ndcg += x.ndcg;
            s.mrr += x.mrr;
        }
    }
    if n_users == 0 {
        return Err(EvalError::NoEvaluableUsers(split.as_str()));
    }
    let denom = n_users as f64;
    for s in &mut sums {
        s.recall /= denom;
        s.precision /= denom;
        s.hit /= denom;
        s.ndcg /= denom;
        s.mrr /= denom;
    }
    Ok(MetricReport {
        split: split.as_str(),
        n_users_evaluated: n_users,
        rows: sums,
    })
}
