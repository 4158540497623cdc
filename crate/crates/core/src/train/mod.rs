//! Tiny-batch training with early stopping, replica synchronisation and
//! evaluation.
//!
//! Each tiny batch draws `m` training entries without replacement (the pool is
//! reshuffled once exhausted) and `n` validation entries with replacement from
//! the training set. The batch is then trained for at most `l` epochs, one
//! optimizer step per epoch on the mean loss of the `m` entries, and stops
//! early once the validation loss has not improved for `p` epochs.

mod metrics;
mod optim;

pub use metrics::{average_ranks, metrics, plcc, rmse, srocc, Metrics};
pub use optim::{adam_amsgrad_step, AdamHyper, OptimizerState};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{backward, forward_record_train, Gradients, ParamId, ParamSlot};
use crate::data::DatasetEntry;
use crate::error::{LfError, Result};
use crate::features::{normalize_labels, LabelStats, ANGULAR_LEN, SPATIAL_LEN};
use crate::model::{loss_total, ModelSpec, HEAD_OUTPUTS};
use crate::tensor::LfTensor;

/// Smallest validation-loss decrease that counts as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Training draws per batch.
    pub m: usize,
    /// Validation draws per batch.
    pub n: usize,
    /// Patience in epochs.
    pub p: usize,
    /// Epoch limit per batch.
    pub l: usize,
    pub batches: usize,
    pub lambda: f64,
    pub adam: AdamHyper,
    pub seed: u64,
    pub replicas: usize,
    pub sync_every: usize,
    /// Start the primary head's bias at the mean training score.
    pub init_score_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            m: 2,
            n: 2,
            p: 2,
            l: 5,
            batches: 100,
            lambda: crate::model::DEFAULT_LAMBDA,
            adam: AdamHyper::default(),
            seed: 0,
            replicas: 1,
            sync_every: 100,
            init_score_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(LfError::BadConfig(msg.into()));
        if self.m == 0 || self.n == 0 || self.l == 0 || self.p == 0 {
            return bad("m, n, l and p must be >= 1");
        }
        if self.replicas == 0 || self.sync_every == 0 {
            return bad("replicas and sync_every must be >= 1");
        }
        let a = &self.adam;
        // Written as predicates so NaN is rejected too.
        let positive = |x: f64| x > 0.0;
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !positive(a.lr) || !open_unit(a.beta1) || !open_unit(a.beta2) {
            return bad("need lr > 0 and betas in (0, 1)");
        }
        if !positive(a.eps) || !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("need eps > 0 and a finite lambda >= 0");
        }
        Ok(())
    }
}

/// One epoch of one replica.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub batch: usize,
    pub epoch: usize,
    pub replica: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("batch,epoch,replica,train_loss,val_loss\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.batch, r.epoch, r.replica, r.train_loss, r.val_loss
        ));
    }
    s
}

/// Model parameters in global layer order, weights before biases.
pub fn flatten_params(model: &ModelSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(model.param_count());
    for layer in model.layers() {
        out.extend_from_slice(&layer.weights);
        if let Some(b) = &layer.bias {
            out.extend_from_slice(b);
        }
    }
    out
}

/// Inverse of [`flatten_params`].
pub fn set_params(model: &mut ModelSpec, params: &[f64]) -> Result<()> {
    if params.len() != model.param_count() {
        return Err(LfError::LengthMismatch {
            expected: model.param_count(),
            got: params.len(),
        });
    }
    let mut rest = params;
    for layer in model.layers_mut() {
        let (w, r) = rest.split_at(layer.weights.len());
        layer.weights.copy_from_slice(w);
        rest = r;
        if let Some(b) = layer.bias.as_mut() {
            let (bv, r) = rest.split_at(b.len());
            b.copy_from_slice(bv);
            rest = r;
        }
    }
    Ok(())
}

/// Gradients laid out like [`flatten_params`].
pub fn flatten_grads(model: &ModelSpec, grads: &Gradients) -> Vec<f64> {
    let mut out = Vec::with_capacity(model.param_count());
    for (i, layer) in model.layers().enumerate() {
        let mut push = |slot, len| match grads.params.get(&ParamId { layer: i, slot }) {
            Some(g) => out.extend_from_slice(g),
            None => out.extend(std::iter::repeat_n(0.0, len)),
        };
        push(ParamSlot::Weights, layer.weights.len());
        if let Some(b) = &layer.bias {
            push(ParamSlot::Bias, b.len());
        }
    }
    out
}

/// A training example ready for the network: normalized input and
/// normalized auxiliary targets.
struct Prepared {
    input: LfTensor,
    score: f64,
    spatial: Vec<f64>,
    angular: Vec<f64>,
}

fn check_model(model: &ModelSpec) -> Result<()> {
    let lens: Vec<usize> = model.output_shapes()?.iter().map(|s| s.len()).collect();
    if lens != HEAD_OUTPUTS {
        return Err(LfError::ShapeMismatch(format!(
            "training needs heads of sizes {HEAD_OUTPUTS:?}, model has {lens:?}"
        )));
    }
    Ok(())
}

fn prepare(model: &ModelSpec, entries: &[DatasetEntry]) -> Result<Vec<Prepared>> {
    entries
        .par_iter()
        .map(|e| {
            let t = e.tensor()?;
            if t.shape() != model.input_shape {
                return Err(LfError::ShapeMismatch(format!(
                    "entry {} has shape {}, model expects {}",
                    e.source_id,
                    t.shape(),
                    model.input_shape
                )));
            }
            let (ls, la) = (e.label.spatial.len(), e.label.angular.len());
            if ls != SPATIAL_LEN || la != ANGULAR_LEN {
                return Err(LfError::DimensionMismatch {
                    expected: SPATIAL_LEN + ANGULAR_LEN,
                    got: ls + la,
                });
            }
            let (spatial, angular) = match &model.label_stats {
                Some((s, a)) => (s.normalize(&e.label.spatial), a.normalize(&e.label.angular)),
                None => (e.label.spatial.clone(), e.label.angular.clone()),
            };
            Ok(Prepared {
                input: t.normalize(),
                score: e.label.score,
                spatial,
                angular,
            })
        })
        .collect()
}

/// Per-sample total loss with inference-mode forward pass.
fn sample_loss(model: &ModelSpec, s: &Prepared, lambda: f64) -> Result<f64> {
    let out = model.forward(&s.input, None)?;
    Ok(losses(&out, s, lambda).0)
}

/// `(total, seeds)` for one sample; seeds are `d total / d output`.
fn losses(out: &[LfTensor], s: &Prepared, lambda: f64) -> (f64, Vec<Vec<f64>>) {
    let p = out[0].data()[0];
    let lp = (p - s.score).powi(2);
    let mse = |o: &LfTensor, t: &[f64]| {
        let n = t.len() as f64;
        let loss = o
            .data()
            .iter()
            .zip(t)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / n;
        let seed: Vec<f64> = o
            .data()
            .iter()
            .zip(t)
            .map(|(a, b)| lambda * 2.0 * (a - b) / n)
            .collect();
        (loss, seed)
    };
    let (ls, gs) = mse(&out[1], &s.spatial);
    let (la, ga) = mse(&out[2], &s.angular);
    (
        loss_total(lp, ls, la, lambda),
        vec![vec![2.0 * (p - s.score)], gs, ga],
    )
}

/// Mean loss and mean flattened gradient over `samples` (training mode).
fn batch_gradient(
    model: &ModelSpec,
    samples: &[&Prepared],
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>)> {
    let seeds: Vec<u64> = samples.iter().map(|_| rng.random()).collect();
    let per: Vec<(f64, Vec<f64>)> = samples
        .par_iter()
        .zip(seeds)
        .map(|(s, seed)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (out, tape) = forward_record_train(model, &s.input, &mut r)?;
            let (loss, seeds) = losses(&out, s, lambda);
            let g = backward(&tape, &seeds)?;
            Ok((loss, flatten_grads(model, &g)))
        })
        .collect::<Result<_>>()?;
    let k = samples.len() as f64;
    let mut grad = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    for (l, g) in &per {
        loss += l;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    grad.iter_mut().for_each(|g| *g /= k);
    Ok((loss / k, grad))
}

/// Draws without replacement, reshuffling when the pool runs dry. Entries
/// already drawn into the current batch go to the back of a fresh shuffle.
struct Drawer {
    order: Vec<usize>,
    pos: usize,
    len: usize,
}

impl Drawer {
    fn new(len: usize) -> Self {
        Drawer {
            order: Vec::new(),
            pos: 0,
            len,
        }
    }

    fn draw(&mut self, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(m);
        while out.len() < m {
            if self.pos == self.order.len() {
                self.order = (0..self.len).collect();
                self.order.shuffle(rng);
                self.order.sort_by_key(|i| out.contains(i));
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

#[derive(Clone)]
struct Replica {
    model: ModelSpec,
    params: Vec<f64>,
    opt: OptimizerState,
    rng: ChaCha8Rng,
    /// Final validation loss of each batch since the last sync.
    recent_val: Vec<f64>,
}

impl Replica {
    fn running_val(&self) -> f64 {
        if self.recent_val.is_empty() {
            f64::INFINITY
        } else {
            self.recent_val.iter().sum::<f64>() / self.recent_val.len() as f64
        }
    }

    fn run_batch(
        &mut self,
        batch: usize,
        replica: usize,
        data: &[Prepared],
        drawer: &mut Drawer,
        cfg: &TrainConfig,
    ) -> Result<Vec<HistoryRow>> {
        let train_idx = drawer.draw(cfg.m, &mut self.rng);
        let val_idx: Vec<usize> = (0..cfg.n)
            .map(|_| self.rng.random_range(0..data.len()))
            .collect();
        let train: Vec<&Prepared> = train_idx.iter().map(|&i| &data[i]).collect();
        let mut rows = Vec::new();
        let mut best = f64::INFINITY;
        let mut stale = 0;
        for epoch in 1..=cfg.l {
            let (train_loss, grad) =
                batch_gradient(&self.model, &train, cfg.lambda, &mut self.rng)?;
            adam_amsgrad_step(&mut self.params, &grad, &mut self.opt, &cfg.adam)?;
            set_params(&mut self.model, &self.params)?;
            let val_loss = val_idx
                .iter()
                .map(|&i| sample_loss(&self.model, &data[i], cfg.lambda))
                .sum::<Result<f64>>()?
                / cfg.n as f64;
            rows.push(HistoryRow {
                batch,
                epoch,
                replica,
                train_loss,
                val_loss,
            });
            if val_loss < best - MIN_IMPROVEMENT {
                best = val_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.p {
                    break;
                }
            }
        }
        self.recent_val.push(rows.last().unwrap().val_loss);
        Ok(rows)
    }
}

/// Auxiliary-label statistics of a training set; identity statistics when
/// there are too few rows to estimate them.
fn label_stats(entries: &[DatasetEntry]) -> Result<(LabelStats, LabelStats)> {
    let stats = |rows: Vec<Vec<f64>>, len: usize| -> Result<LabelStats> {
        if rows.len() < 2 {
            return Ok(LabelStats {
                mean: vec![0.0; len],
                std: vec![1.0; len],
            });
        }
        Ok(normalize_labels(&rows)?.1)
    };
    Ok((
        stats(
            entries.iter().map(|e| e.label.spatial.clone()).collect(),
            SPATIAL_LEN,
        )?,
        stats(
            entries.iter().map(|e| e.label.angular.clone()).collect(),
            ANGULAR_LEN,
        )?,
    ))
}

/// The model training starts from: `config.lambda`, label statistics of
/// `train_set` and, with `init_score_bias`, the mean score as primary bias.
pub fn initialize(
    model: &ModelSpec,
    train_set: &[DatasetEntry],
    config: &TrainConfig,
) -> Result<ModelSpec> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(LfError::EmptyDataset);
    }
    check_model(model)?;
    let mut model = model.clone();
    model.lambda = config.lambda;
    model.label_stats = Some(label_stats(train_set)?);
    if config.init_score_bias {
        let mean = train_set.iter().map(|e| e.label.score).sum::<f64>() / train_set.len() as f64;
        if let Some(b) = model.primary.last_mut().and_then(|l| l.bias.as_mut()) {
            b.iter_mut().for_each(|v| *v = mean);
        }
    }
    Ok(model)
}

/// Trains `model` on `train_set`. Auxiliary labels are z-scored with
/// statistics of `train_set`, which are stored in the returned model.
pub fn train(
    model: &ModelSpec,
    train_set: &[DatasetEntry],
    config: &TrainConfig,
) -> Result<(ModelSpec, Vec<HistoryRow>)> {
    let model = initialize(model, train_set, config)?;
    let data = prepare(&model, train_set)?;
    let params = flatten_params(&model);
    let base = Replica {
        opt: OptimizerState::new(params.len()),
        params,
        model,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        recent_val: Vec::new(),
    };
    let mut replicas: Vec<(Replica, Drawer)> = (0..config.replicas)
        .map(|r| {
            let mut rep = base.clone();
            rep.rng = ChaCha8Rng::seed_from_u64(config.seed);
            rep.rng.set_stream(r as u64);
            (rep, Drawer::new(data.len()))
        })
        .collect();

    let mut history = Vec::new();
    let mut start = 0;
    while start < config.batches {
        let end = (start + config.sync_every).min(config.batches);
        let rows: Vec<Vec<HistoryRow>> = replicas
            .par_iter_mut()
            .enumerate()
            .map(|(r, (rep, drawer))| {
                let mut rows = Vec::new();
                for b in start..end {
                    rows.extend(rep.run_batch(b, r, &data, drawer, config)?);
                }
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        let mut rows: Vec<HistoryRow> = rows.into_iter().flatten().collect();
        rows.sort_by_key(|r| (r.batch, r.replica, r.epoch));
        history.extend(rows);
        if config.replicas > 1 && end < config.batches {
            let best = best_replica(replicas.iter().map(|(r, _)| r));
            let winner = replicas[best].0.clone();
            for (i, (rep, _)) in replicas.iter_mut().enumerate() {
                if i != best {
                    rep.model = winner.model.clone();
                    rep.params = winner.params.clone();
                    rep.opt = winner.opt.clone();
                }
            }
            for (rep, _) in replicas.iter_mut() {
                rep.recent_val.clear();
            }
        }
        start = end;
    }
    let best = best_replica(replicas.iter().map(|(r, _)| r));
    Ok((replicas.swap_remove(best).0.model, history))
}

/// Replica with the lowest mean end-of-batch validation loss since the last
/// sync (first on ties).
fn best_replica<'a>(reps: impl Iterator<Item = &'a Replica>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, r) in reps.enumerate() {
        let v = r.running_val();
        if v < best.0 {
            best = (v, i);
        }
    }
    best.1
}

/// Mean total loss over `entries` (inference mode) using the model's lambda
/// and label statistics.
pub fn dataset_loss(model: &ModelSpec, entries: &[DatasetEntry]) -> Result<f64> {
    if entries.is_empty() {
        return Err(LfError::EmptyDataset);
    }
    check_model(model)?;
    let data = prepare(model, entries)?;
    let losses: Vec<f64> = data
        .par_iter()
        .map(|s| sample_loss(model, s, model.lambda))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Predicted and reference scores over a test set.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub predicted: Vec<f64>,
    pub target: Vec<f64>,
}

impl Evaluation {
    pub fn rmse(&self) -> f64 {
        rmse(&self.target, &self.predicted).expect("evaluation is nonempty")
    }

    /// All three metrics; `ZeroVariance` when predictions (or labels) are constant.
    pub fn metrics(&self) -> Result<Metrics> {
        metrics(&self.target, &self.predicted)
    }

    /// Primary-task mean squared error.
    pub fn mse(&self) -> f64 {
        self.rmse().powi(2)
    }
}

pub fn evaluate(model: &ModelSpec, test_set: &[DatasetEntry]) -> Result<Evaluation> {
    if test_set.is_empty() {
        return Err(LfError::EmptyDataset);
    }
    let predicted = test_set
        .par_iter()
        .map(|e| Ok(model.predict(&e.tensor()?)?.score))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Evaluation {
        predicted,
        target: test_set.iter().map(|e| e.label.score).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drawer_covers_pool_before_repeating() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut d = Drawer::new(7);
        let mut seen: Vec<usize> = (0..4).flat_map(|_| d.draw(2, &mut rng)).collect();
        let first: Vec<usize> = seen.drain(..7).collect();
        let mut sorted = first.clone();
        sorted.sort();
        assert_eq!(sorted, (0..7).collect::<Vec<_>>());
        // the straddling batch has no duplicate
        assert_ne!(first[6], seen[0]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            m: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(LfError::BadConfig(_))));
    }
}
