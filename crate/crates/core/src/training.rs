//! Joint optimization of the layer-0 embeddings: pairwise ranking loss on
//! sampled `(user, positive, negative)` triples, the translation term on the
//! positive record's tag, and an L2 penalty on the touched layer-0 rows.
//! Gradients are analytic; Adam applies them; validation Recall@20 drives
//! early stopping.

use std::collections::HashSet;
use std::io::Write;

use rand::Rng;
use thiserror::Error;

use crate::dataset::SplitDataset;
use crate::eval::{self, EvalConfig, EvalError, Split};
use crate::graph::FolksonomyGraphs;
use crate::model::{
    dot, init_embeddings, propagate, propagate_adjoint, EmbeddingTable, FinalEmbeddings,
    ModelConfig,
};
use crate::rng::{self, Stream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training split has no pairs")]
    EmptyTrain,
    #[error("need at least two items to draw negatives, found {0}")]
    TooFewItems(usize),
    #[error("no negative candidates for user {0}: every item is a training item")]
    NoNegativeCandidates(usize),
    #[error("non-finite loss at epoch {epoch} (bpr={bpr}, transrt={transrt}, l2={l2}); the learning rate is probably too high")]
    NonFinite {
        epoch: usize,
        bpr: f64,
        transrt: f64,
        l2: f64,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Weight of the translation term; `0` is the ablation without it.
    pub alpha: f64,
    /// L2 weight on layer-0 embeddings.
    pub gamma: f64,
    pub max_epochs: usize,
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 2048,
            alpha: 1e-4,
            gamma: 1e-4,
            max_epochs: 200,
            eval_every: 1,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be a positive real");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad("alpha must be >= 0");
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad("gamma must be >= 0");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        Ok(())
    }
}

/// Which terms make up the objective and with what weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub alpha: f64,
    pub gamma: f64,
    /// When false the translation term is not evaluated at all.
    pub translation: bool,
}

impl Objective {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Objective {
            alpha: cfg.alpha,
            gamma: cfg.gamma,
            translation: true,
        }
    }

    pub fn without_translation(self) -> Self {
        Objective {
            translation: false,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainSample {
    pub u: usize,
    pub i_pos: usize,
    pub i_neg: usize,
    /// A tag the user attached to `i_pos` in training.
    pub t: usize,
}

/// Training pairs with their tags, indexed for sampling.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    n_items: usize,
    pairs: Vec<(usize, usize)>,
    pair_tags: Vec<Vec<usize>>,
    train_pairs: HashSet<(usize, usize)>,
    items_per_user: Vec<usize>,
}

impl TrainingSet {
    pub fn from_split(data: &SplitDataset) -> Self {
        let pairs = data.pairs.train.clone();
        let mut pair_tags = vec![Vec::new(); pairs.len()];
        for t in &data.train {
            let idx = pairs
                .binary_search(&(t.user, t.item))
                .expect("training triple pair is in training pairs");
            pair_tags[idx].push(t.tag);
        }
        for tags in &mut pair_tags {
            tags.sort_unstable();
            tags.dedup();
        }
        let mut items_per_user = vec![0; data.n_users];
        for &(u, _) in &pairs {
            items_per_user[u] += 1;
        }
        TrainingSet {
            n_items: data.n_items,
            train_pairs: pairs.iter().copied().collect(),
            pairs,
            pair_tags,
            items_per_user,
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }
}

/// Draws `size` samples: a uniform training pair, a uniform item rejected
/// until it is not a training item of the user, and a uniform tag of the pair.
pub fn sample_batch<R: Rng>(
    set: &TrainingSet,
    size: usize,
    rng: &mut R,
) -> Result<Vec<TrainSample>, TrainError> {
    if set.pairs.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if set.n_items < 2 {
        return Err(TrainError::TooFewItems(set.n_items));
    }
    let mut batch = Vec::with_capacity(size);
    for _ in 0..size {
        let idx = rng.random_range(0..set.pairs.len());
        let (u, i_pos) = set.pairs[idx];
        if set.items_per_user[u] >= set.n_items {
            return Err(TrainError::NoNegativeCandidates(u));
        }
        let i_neg = loop {
            let j = rng.random_range(0..set.n_items);
            if !set.train_pairs.contains(&(u, j)) {
                break j;
            }
        };
        let tags = &set.pair_tags[idx];
        let t = tags[rng.random_range(0..tags.len())];
        batch.push(TrainSample { u, i_pos, i_neg, t });
    }
    Ok(batch)
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-sample pairwise loss `-ln σ(gap)`.
pub fn bpr_sample_loss(gap: f64) -> f64 {
    softplus(-gap)
}

fn score_gap(s: &TrainSample, finals: &FinalEmbeddings) -> f64 {
    let eu = finals.user.row(s.u);
    dot(eu, finals.item.row(s.i_pos)) - dot(eu, finals.item.row(s.i_neg))
}

/// Mean over the batch of `-ln σ(ŷ_pos − ŷ_neg)`.
pub fn bpr_loss(batch: &[TrainSample], finals: &FinalEmbeddings) -> f64 {
    let sum: f64 = batch
        .iter()
        .map(|s| bpr_sample_loss(score_gap(s, finals)))
        .sum();
    sum / batch.len() as f64
}

/// `alpha` times the batch mean of `||e_u + e_t − e_pos||²`.
pub fn transrt_loss(batch: &[TrainSample], finals: &FinalEmbeddings, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    let sum: f64 = batch
        .iter()
        .map(|s| crate::model::transrt_score(s.u, s.t, s.i_pos, finals))
        .sum();
    alpha * sum / batch.len() as f64
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `gamma` times the batch mean of `½(|u|² + |pos|² + |neg|² + |t|²)` on layer 0.
pub fn l2_penalty(batch: &[TrainSample], table: &EmbeddingTable, gamma: f64) -> f64 {
    let sum: f64 = batch
        .iter()
        .map(|s| {
            0.5 * (sq_norm(table.user.row(s.u))
                + sq_norm(table.item.row(s.i_pos))
                + sq_norm(table.item.row(s.i_neg))
                + sq_norm(table.tag.row(s.t)))
        })
        .sum();
    gamma * sum / batch.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub bpr: f64,
    pub transrt: f64,
    pub l2: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.bpr + self.transrt + self.l2
    }

    pub fn is_finite(&self) -> bool {
        self.bpr.is_finite() && self.transrt.is_finite() && self.l2.is_finite()
    }
}

/// Total objective on one batch, evaluated through a fresh forward pass.
pub fn total_loss(
    batch: &[TrainSample],
    graphs: &FolksonomyGraphs,
    table: &EmbeddingTable,
    model_cfg: &ModelConfig,
    objective: &Objective,
) -> LossBreakdown {
    let finals = propagate(graphs, table, model_cfg);
    LossBreakdown {
        bpr: bpr_loss(batch, &finals),
        transrt: if objective.translation {
            transrt_loss(batch, &finals, objective.alpha)
        } else {
            0.0
        },
        l2: l2_penalty(batch, table, objective.gamma),
    }
}

fn add_scaled(dst: &mut [f64], alpha: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

/// Exact gradient of the batch objective with respect to every layer-0
/// parameter, along with the loss values at the current parameters.
///
/// Gradients are first formed on the final embeddings of the batch
/// entities and then pulled back through the propagation map.
pub fn compute_gradients(
    batch: &[TrainSample],
    graphs: &FolksonomyGraphs,
    table: &EmbeddingTable,
    model_cfg: &ModelConfig,
    objective: &Objective,
) -> (EmbeddingTable, LossBreakdown) {
    let finals = propagate(graphs, table, model_cfg);
    let inv_b = 1.0 / batch.len() as f64;
    let dim = table.dim();
    let mut g = EmbeddingTable::zeros_like(table);
    let mut loss = LossBreakdown::default();

    let mut bpr_sum = 0.0;
    let mut diff = vec![0.0; dim];
    for s in batch {
        let eu = finals.user.row(s.u);
        let ep = finals.item.row(s.i_pos);
        let en = finals.item.row(s.i_neg);
        let gap = dot(eu, ep) - dot(eu, en);
        bpr_sum += bpr_sample_loss(gap);
        let coef = -sigmoid(-gap) * inv_b;
        for d in 0..dim {
            diff[d] = ep[d] - en[d];
        }
        add_scaled(g.user.row_mut(s.u), coef, &diff);
        add_scaled(g.item.row_mut(s.i_pos), coef, eu);
        add_scaled(g.item.row_mut(s.i_neg), -coef, eu);
    }
    loss.bpr = bpr_sum * inv_b;

    if objective.translation {
        let mut g_sum = 0.0;
        let mut resid = vec![0.0; dim];
        let coef = 2.0 * objective.alpha * inv_b;
        for s in batch {
            let eu = finals.user.row(s.u);
            let et = finals.tag.row(s.t);
            let ep = finals.item.row(s.i_pos);
            for d in 0..dim {
                resid[d] = eu[d] + et[d] - ep[d];
            }
            g_sum += sq_norm(&resid);
            add_scaled(g.user.row_mut(s.u), coef, &resid);
            add_scaled(g.tag.row_mut(s.t), coef, &resid);
            add_scaled(g.item.row_mut(s.i_pos), -coef, &resid);
        }
        loss.transrt = objective.alpha * g_sum * inv_b;
    }

    let mut grads = propagate_adjoint(graphs, &g, model_cfg);

    let mut l2_sum = 0.0;
    let coef = objective.gamma * inv_b;
    for s in batch {
        let u0 = table.user.row(s.u);
        let p0 = table.item.row(s.i_pos);
        let n0 = table.item.row(s.i_neg);
        let t0 = table.tag.row(s.t);
        l2_sum += 0.5 * (sq_norm(u0) + sq_norm(p0) + sq_norm(n0) + sq_norm(t0));
        add_scaled(grads.user.row_mut(s.u), coef, u0);
        add_scaled(grads.item.row_mut(s.i_pos), coef, p0);
        add_scaled(grads.item.row_mut(s.i_neg), coef, n0);
        add_scaled(grads.tag.row_mut(s.t), coef, t0);
    }
    loss.l2 = objective.gamma * l2_sum * inv_b;

    (grads, loss)
}

/// Adam moment estimates shaped like the embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: EmbeddingTable,
    pub v: EmbeddingTable,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(like: &EmbeddingTable) -> Self {
        AdamState {
            m: EmbeddingTable::zeros_like(like),
            v: EmbeddingTable::zeros_like(like),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(
    state: &mut AdamState,
    grads: &EmbeddingTable,
    table: &mut EmbeddingTable,
    lr: f64,
) {
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let params = table.iter_mut();
    let moments = state.m.iter_mut().zip(state.v.iter_mut());
    for ((p, (m, v)), &g) in params.zip(moments).zip(grads.iter()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_recall_at_20: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStopped,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// Epoch of the returned snapshot.
    pub best_epoch: usize,
    pub best_val_recall_at_20: Option<f64>,
    pub stop_reason: StopReason,
}

/// `%g`-style formatting with `sig` significant digits.
pub fn format_significant(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= sig as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mantissa), sign, exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}

impl TrainReport {
    /// `epoch<TAB>bpr_loss<TAB>transrt_loss<TAB>l2<TAB>val_recall@20`, after a header line.
    pub fn write_log<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch\tbpr_loss\ttransrt_loss\tl2\tval_recall@20")?;
        for e in &self.epochs {
            let recall = e
                .val_recall_at_20
                .map_or_else(|| "NA".to_string(), |r| format_significant(r, 6));
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                e.epoch,
                format_significant(e.loss.bpr, 6),
                format_significant(e.loss.transrt, 6),
                format_significant(e.loss.l2, 6),
                recall
            )?;
        }
        Ok(())
    }
}

/// Trains from the `Init` substream of `cfg.seed` and returns the snapshot
/// with the best validation Recall@20 (or the last one if the validation
/// split is empty).
pub fn train(
    data: &SplitDataset,
    graphs: &FolksonomyGraphs,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<(EmbeddingTable, TrainReport), TrainError> {
    train_with(
        data,
        graphs,
        cfg,
        model_cfg,
        Objective::from_config(cfg),
        |_| {},
    )
}

pub fn train_with<F: FnMut(&EpochLog)>(
    data: &SplitDataset,
    graphs: &FolksonomyGraphs,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    objective: Objective,
    mut on_epoch: F,
) -> Result<(EmbeddingTable, TrainReport), TrainError> {
    cfg.validate()?;
    let set = TrainingSet::from_split(data);
    if set.n_pairs() == 0 {
        return Err(TrainError::EmptyTrain);
    }
    let mut table = init_embeddings(
        cfg.seed,
        model_cfg.dim,
        data.n_users,
        data.n_items,
        data.n_tags,
    );
    let mut adam = AdamState::new(&table);
    let mut rng = rng::stream(cfg.seed, Stream::Sampling);
    let n_batches = set.n_pairs().div_ceil(cfg.batch_size);
    let can_validate = !data.pairs.validation.is_empty();
    let val_cfg = EvalConfig::with_cutoffs(vec![20])?;

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, EmbeddingTable)> = None;
    let mut stale = 0usize;
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let mut sum = LossBreakdown::default();
        for _ in 0..n_batches {
            let batch = sample_batch(&set, cfg.batch_size, &mut rng)?;
            let (grads, loss) = compute_gradients(&batch, graphs, &table, model_cfg, &objective);
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    bpr: loss.bpr,
                    transrt: loss.transrt,
                    l2: loss.l2,
                });
            }
            adam_step(&mut adam, &grads, &mut table, cfg.learning_rate);
            sum.bpr += loss.bpr;
            sum.transrt += loss.transrt;
            sum.l2 += loss.l2;
        }
        let nb = n_batches as f64;
        let loss = LossBreakdown {
            bpr: sum.bpr / nb,
            transrt: sum.transrt / nb,
            l2: sum.l2 / nb,
        };

        let mut val = None;
        if can_validate && epoch % cfg.eval_every == 0 {
            let finals = propagate(graphs, &table, model_cfg);
            let report = eval::evaluate(&finals, Split::Validation, &data.pairs, &val_cfg)?;
            let recall = report.rows[0].recall;
            val = Some(recall);
            match &best {
                Some((_, r, _)) if recall <= *r => stale += 1,
                _ => {
                    best = Some((epoch, recall, table.clone()));
                    stale = 0;
                }
            }
        }
        let log = EpochLog {
            epoch,
            loss,
            val_recall_at_20: val,
        };
        on_epoch(&log);
        epochs.push(log);
        if stale >= cfg.patience {
            stop_reason = StopReason::EarlyStopped;
            break;
        }
    }

    let (best_epoch, best_recall, table) = match best {
        Some((e, r, t)) => (e, Some(r), t),
        None => (epochs.len(), None, table),
    };
    Ok((
        table,
        TrainReport {
            epochs,
            best_epoch,
            best_val_recall_at_20: best_recall,
            stop_reason,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_folksonomy, split, RawAssignment, SplitRatios, Triple};
    use crate::graph::build_graphs;
    use crate::model::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn raw(u: u64, i: u64, t: u64) -> RawAssignment {
        RawAssignment {
            user_id: u,
            item_id: i,
            tag_id: t,
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(c.validate(), Err(TrainError::InvalidConfig(_))));
        let c = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn forced_negative() {
        let f = build_folksonomy(&[raw(0, 0, 0), raw(1, 1, 0)]).unwrap();
        let data = split(&f, SplitRatios::default(), 0).unwrap();
        let set = TrainingSet::from_split(&data);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in sample_batch(&set, 200, &mut rng).unwrap() {
            assert_eq!(s.i_neg, 1 - s.i_pos);
            assert_eq!(s.i_pos, s.u);
        }
    }

    #[test]
    fn tag_frequencies_are_uniform() {
        let f = build_folksonomy(&[raw(0, 0, 0), raw(0, 0, 1), raw(1, 1, 2)]).unwrap();
        let data = split(&f, SplitRatios::default(), 0).unwrap();
        let set = TrainingSet::from_split(&data);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batch = sample_batch(&set, 20_000, &mut rng).unwrap();
        let of_pair0: Vec<_> = batch.iter().filter(|s| s.u == 0).collect();
        let t0 = of_pair0.iter().filter(|s| s.t == 0).count() as f64 / of_pair0.len() as f64;
        assert!(of_pair0.len() > 9_000);
        assert!((t0 - 0.5).abs() < 0.05, "{t0}");
        assert!(of_pair0.iter().all(|s| s.t <= 1));
    }

    #[test]
    fn sampling_is_seeded() {
        let f = build_folksonomy(
            &(0..30)
                .map(|k| raw(k % 4, k % 9, k % 3))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let data = split(&f, SplitRatios::default(), 0).unwrap();
        let set = TrainingSet::from_split(&data);
        let a = sample_batch(&set, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_batch(&set, 50, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_negative_candidates() {
        let f =
            build_folksonomy(&[raw(0, 0, 0), raw(0, 1, 0), raw(0, 2, 0), raw(0, 3, 0)]).unwrap();
        let mut data = split(&f, SplitRatios::default(), 0).unwrap();
        data.pairs.train = vec![(0, 0), (0, 1), (0, 2), (0, 3)];
        data.train = f.triples.clone();
        let set = TrainingSet::from_split(&data);
        let err = sample_batch(&set, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, TrainError::NoNegativeCandidates(0)));
    }

    #[test]
    fn bpr_values() {
        assert!((bpr_sample_loss(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        let sat = bpr_sample_loss(20.0);
        assert!((sat - (-20f64).exp()).abs() < 1e-17, "{sat}");
        assert!(bpr_sample_loss(-800.0).is_finite());
        assert!(bpr_sample_loss(50.0) > 0.0);
        let mean = [0.0, 1.0, -1.0]
            .iter()
            .map(|&g| bpr_sample_loss(g))
            .sum::<f64>()
            / 3.0;
        assert!((mean - 0.7732).abs() < 5e-5, "{mean}");
    }

    fn scalar_finals(u: &[f64], i: &[f64], t: &[f64], dim: usize) -> FinalEmbeddings {
        FinalEmbeddings {
            user: Matrix::from_vec(u.len() / dim, dim, u.to_vec()),
            item: Matrix::from_vec(i.len() / dim, dim, i.to_vec()),
            tag: Matrix::from_vec(t.len() / dim, dim, t.to_vec()),
        }
    }

    #[test]
    fn transrt_and_l2_values() {
        let s = TrainSample {
            u: 0,
            i_pos: 0,
            i_neg: 1,
            t: 0,
        };
        let f = scalar_finals(&[1.0, 0.0], &[0.0, 0.0, 1.0, 1.0], &[0.0, 1.0], 2);
        assert!((transrt_loss(&[s], &f, 1e-4) - 2e-4).abs() < 1e-18);
        assert_eq!(transrt_loss(&[s], &f, 0.0), 0.0);
        let table = EmbeddingTable {
            user: Matrix::from_vec(1, 2, vec![1.0, 0.0]),
            item: Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 1.0]),
            tag: Matrix::from_vec(1, 2, vec![0.0, 0.0]),
        };
        assert!((l2_penalty(&[s], &table, 0.01) - 0.02).abs() < 1e-15);
        assert_eq!(l2_penalty(&[s], &table, 0.0), 0.0);
        assert_eq!(
            l2_penalty(&[s], &EmbeddingTable::zeros_like(&table), 0.3),
            0.0
        );
    }

    #[test]
    fn zero_layer_bpr_gradient_by_hand() {
        let g = build_graphs(&[Triple::new(0, 0, 0)], 1, 2, 1);
        let table = EmbeddingTable {
            user: Matrix::from_vec(1, 2, vec![0.3, -0.2]),
            item: Matrix::from_vec(2, 2, vec![0.5, 0.1, -0.4, 0.7]),
            tag: Matrix::from_vec(1, 2, vec![0.2, 0.2]),
        };
        let batch = [TrainSample {
            u: 0,
            i_pos: 0,
            i_neg: 1,
            t: 0,
        }];
        let obj = Objective {
            alpha: 0.0,
            gamma: 0.0,
            translation: true,
        };
        let (grads, _) = compute_gradients(&batch, &g, &table, &ModelConfig::new(2, 0), &obj);
        let gap: f64 = 0.3 * 0.5 - 0.2 * 0.1 - (0.3 * -0.4 - 0.2 * 0.7);
        let s = 1.0 / (1.0 + gap.exp());
        let expect = [-s * (0.5 + 0.4), -s * (0.1 - 0.7)];
        for (got, want) in grads.user.row(0).iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_items_give_no_user_signal() {
        let g = build_graphs(&[Triple::new(0, 0, 0)], 1, 2, 1);
        let table = EmbeddingTable {
            user: Matrix::from_vec(1, 2, vec![0.3, -0.2]),
            item: Matrix::from_vec(2, 2, vec![0.5, 0.1, 0.5, 0.1]),
            tag: Matrix::from_vec(1, 2, vec![0.0, 0.0]),
        };
        let batch = [TrainSample {
            u: 0,
            i_pos: 0,
            i_neg: 1,
            t: 0,
        }];
        let obj = Objective {
            alpha: 0.0,
            gamma: 0.0,
            translation: true,
        };
        let (grads, _) = compute_gradients(&batch, &g, &table, &ModelConfig::new(2, 0), &obj);
        assert_eq!(grads.user.row(0), &[0.0, 0.0]);
    }

    fn scalar_table(x: f64) -> EmbeddingTable {
        EmbeddingTable {
            user: Matrix::from_vec(1, 1, vec![x]),
            item: Matrix::zeros(0, 1),
            tag: Matrix::zeros(0, 1),
        }
    }

    #[test]
    fn adam_zero_gradient_and_zero_lr() {
        let mut table = scalar_table(0.5);
        let mut st = AdamState::new(&table);
        adam_step(&mut st, &scalar_table(0.0), &mut table, 0.01);
        assert_eq!(table.user.row(0)[0], 0.5);

        adam_step(&mut st, &scalar_table(2.0), &mut table, 0.0);
        assert_eq!(table.user.row(0)[0], 0.5);
        let m = st.m.user.row(0)[0];
        adam_step(&mut st, &scalar_table(0.0), &mut table, 0.0);
        assert_eq!(st.m.user.row(0)[0], 0.9 * m);
    }

    #[test]
    fn adam_scalar_trace() {
        let mut table = scalar_table(1.0);
        let mut st = AdamState::new(&table);
        let lr = 0.01;
        adam_step(&mut st, &scalar_table(1.0), &mut table, lr);
        let after1 = table.user.row(0)[0];
        // m̂ = v̂ = 1 on the first step: a full lr step
        let expect1 = 1.0 - lr * 1.0 / (1.0 + 1e-8);
        assert!((after1 - expect1).abs() < 1e-15);
        adam_step(&mut st, &scalar_table(1.0), &mut table, lr);
        let after2 = table.user.row(0)[0];
        let m2: f64 = 0.9 * 0.1 + 0.1;
        let v2: f64 = 0.999 * 0.001 + 0.001;
        let step2 = lr * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert!((after2 - (expect1 - step2)).abs() < 1e-15);
        assert!(after2 < after1 && after1 < 1.0);
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(std::f64::consts::LN_2, 6), "0.693147");
        assert_eq!(format_significant(2.0e-4, 6), "0.0002");
        assert_eq!(format_significant(1.234567e-5, 6), "1.23457e-05");
        assert_eq!(format_significant(123.0, 6), "123");
        assert_eq!(format_significant(1234567.0, 6), "1.23457e+06");
        assert_eq!(format_significant(0.0, 6), "0");
        assert_eq!(format_significant(-0.5, 6), "-0.5");
    }
}
