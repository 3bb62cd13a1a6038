use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result, TwuError};
use crate::filterbank::{pr_loss_grad, BankMode};
use crate::trainer::data::{kfold_splits, SyntheticDataset, SyntheticSpec};
use crate::trainer::loss::cross_entropy_grad;
use crate::trainer::metrics::MetricRow;
use crate::trainer::net::{SitePolicy, ToyNet};
use crate::trainer::optim::Adam;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the half-band penalty for free-tap units.
    pub alpha: f64,
    pub seed: u64,
    pub folds: usize,
    /// Feature channels of the toy network.
    pub channels: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 200,
            batch_size: 128,
            alpha: 1.0,
            seed: 0,
            folds: 3,
            channels: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(invalid("learning rate must be finite and non-negative"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(invalid("alpha must be finite and non-negative"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.folds == 0 || self.channels == 0 {
            return Err(invalid("epochs, batch size, folds and channels must be positive"));
        }
        Ok(())
    }
}

/// Accuracy, mean cross-entropy and confusion counts
/// (`confusion[true][predicted]`).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub loss: f64,
    pub confusion: [[usize; 2]; 2],
    pub total: usize,
}

pub fn evaluate(model: &ToyNet, dataset: &SyntheticDataset) -> Result<EvalReport> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    evaluate_indices(model, dataset, &all)
}

pub fn evaluate_indices(model: &ToyNet, dataset: &SyntheticDataset, indices: &[usize]) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(invalid("cannot evaluate on an empty set"));
    }
    let mut confusion = [[0usize; 2]; 2];
    let mut loss = 0.0;
    for &i in indices {
        let logits = model.forward(&dataset.images[i])?;
        if logits.iter().any(|v| v.is_nan()) {
            return Err(TwuError::Diverged {
                epoch: None,
                reason: "NaN logits during evaluation".into(),
            });
        }
        let label = dataset.labels[i];
        let predicted = usize::from(logits[1] > logits[0]);
        confusion[label][predicted] += 1;
        let max = logits[0].max(logits[1]);
        let lse = max + ((logits[0] - max).exp() + (logits[1] - max).exp()).ln();
        loss += lse - logits[label];
    }
    let n = indices.len();
    Ok(EvalReport {
        accuracy: (confusion[0][0] + confusion[1][1]) as f64 / n as f64,
        loss: loss / n as f64,
        confusion,
        total: n,
    })
}

/// A trained fold.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    /// Epoch whose weights scored best on validation.
    pub best_epoch: usize,
    /// Weights from `best_epoch`.
    pub model: ToyNet,
    pub val: EvalReport,
    /// Σ pr_loss over every unit after the last epoch.
    pub final_pr_loss: f64,
    pub test: Option<EvalReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub folds: Vec<FoldResult>,
    pub trace: Vec<MetricRow>,
}

impl TrainOutcome {
    pub fn test_accuracies(&self) -> Vec<f64> {
        self.folds
            .iter()
            .filter_map(|f| f.test.as_ref().map(|t| t.accuracy))
            .collect()
    }

    pub fn final_pr_losses(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.final_pr_loss).collect()
    }
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix-style mixing keeps per-fold streams apart
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// Flat offsets of the free-tap bank blocks.
fn penalized_offsets(model: &ToyNet) -> Vec<(usize, usize)> {
    let mut offset = 0;
    let mut out = Vec::new();
    let free_units: Vec<bool> = model.units().iter().map(|u| u.mode() == BankMode::Free).collect();
    let mut unit_idx = 0;
    for block in model.param_blocks() {
        if block.name.ends_with(".bank") {
            if free_units[unit_idx] {
                out.push((offset, block.values.len()));
            }
            unit_idx += 1;
        }
        offset += block.values.len();
    }
    out
}

/// Trains one model per fold on a balanced pool, optionally scoring each on
/// a held-out test set. Deterministic given the config seed.
pub fn train(
    config: &TrainConfig,
    pool: &SyntheticDataset,
    test: Option<&SyntheticDataset>,
    policy: SitePolicy,
) -> Result<TrainOutcome> {
    config.validate()?;
    let splits = kfold_splits(&pool.labels, config.folds, config.seed)?;
    let mut trace = Vec::new();
    let mut folds = Vec::with_capacity(splits.len());

    for (fold, split) in splits.iter().enumerate() {
        let mut model = ToyNet::new(config.channels, policy, derive_seed(config.seed, 2 * fold as u64 + 1))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 2 * fold as u64 + 2));
        let mut opt = Adam::new(model.param_count(), config.learning_rate);
        let penalized = penalized_offsets(&model);
        let mut best: Option<(EvalReport, usize, ToyNet)> = None;

        for epoch in 1..=config.epochs {
            let mut order = split.train.clone();
            order.shuffle(&mut rng);
            let mut ce_sum = 0.0;
            let mut correct = 0usize;
            for batch in order.chunks(config.batch_size) {
                let scale = 1.0 / batch.len() as f64;
                let mut grad = vec![0.0; model.param_count()];
                for &i in batch {
                    let label = pool.labels[i];
                    let (logits, g) = model.forward_backward(&pool.images[i], |l| {
                        cross_entropy_grad(l, label).into_iter().map(|v| v * scale).collect()
                    })?;
                    let max = logits[0].max(logits[1]);
                    let lse = max + ((logits[0] - max).exp() + (logits[1] - max).exp()).ln();
                    ce_sum += lse - logits[label];
                    correct += usize::from(usize::from(logits[1] > logits[0]) == label);
                    for (a, b) in grad.iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                if config.alpha > 0.0 {
                    let flat = model.params_flat();
                    for &(off, len) in &penalized {
                        let pg = pr_loss_grad(&flat[off..off + len])?;
                        for (a, b) in grad[off..off + len].iter_mut().zip(pg) {
                            *a += config.alpha * b;
                        }
                    }
                }
                if !ce_sum.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(TwuError::Diverged {
                        epoch: Some(epoch),
                        reason: format!("non-finite loss or gradient in fold {fold}"),
                    });
                }
                let mut params = model.params_flat();
                opt.step(&mut params, &grad);
                model.load_flat(&params)?;
            }
            let n = order.len() as f64;
            let pr = model.pr_loss_sum();
            trace.push(MetricRow {
                epoch,
                fold,
                seed: config.seed,
                split: "train",
                loss: ce_sum / n,
                accuracy: correct as f64 / n,
                pr_loss_sum: pr,
            });
            let val = evaluate_indices(&model, pool, &split.val).map_err(|e| at_epoch(e, epoch))?;
            trace.push(MetricRow {
                epoch,
                fold,
                seed: config.seed,
                split: "val",
                loss: val.loss,
                accuracy: val.accuracy,
                pr_loss_sum: pr,
            });
            let improved = match &best {
                None => true,
                Some((b, _, _)) => val.accuracy > b.accuracy || (val.accuracy == b.accuracy && val.loss < b.loss),
            };
            if improved {
                best = Some((val, epoch, model.clone()));
            }
        }
        let final_pr_loss = model.pr_loss_sum();
        let (val, best_epoch, model) = best.expect("at least one epoch");

        let test_report = match test {
            Some(t) => {
                let r = evaluate(&model, t).map_err(|e| at_epoch(e, best_epoch))?;
                trace.push(MetricRow {
                    epoch: best_epoch,
                    fold,
                    seed: config.seed,
                    split: "test",
                    loss: r.loss,
                    accuracy: r.accuracy,
                    pr_loss_sum: model.pr_loss_sum(),
                });
                Some(r)
            }
            None => None,
        };
        folds.push(FoldResult {
            fold,
            best_epoch,
            model,
            val,
            final_pr_loss,
            test: test_report,
        });
    }
    Ok(TrainOutcome { folds, trace })
}

fn at_epoch(err: TwuError, epoch: usize) -> TwuError {
    match err {
        TwuError::Diverged { reason, .. } => TwuError::Diverged {
            epoch: Some(epoch),
            reason,
        },
        other => other,
    }
}

/// Data sizes for [`run_experiment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSpec {
    pub pool_size: usize,
    pub test_size: usize,
    pub data: SyntheticSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            pool_size: 340,
            test_size: 200,
            data: SyntheticSpec::default(),
        }
    }
}

/// Generates the pool and test set for `seed`. The test set uses its own
/// stream so it never overlaps the pool.
pub fn experiment_data(spec: &ExperimentSpec, seed: u64) -> Result<(SyntheticDataset, SyntheticDataset)> {
    let pool = SyntheticDataset::generate_with(spec.pool_size, derive_seed(seed, 0x5EED_0001), spec.data)?;
    let test = SyntheticDataset::generate_with(spec.test_size, derive_seed(seed, 0x5EED_0002), spec.data)?;
    Ok((pool, test))
}

/// Trains every fold for one seed on freshly generated data.
pub fn run_experiment(
    config: &TrainConfig,
    spec: &ExperimentSpec,
    policy: SitePolicy,
) -> Result<TrainOutcome> {
    let (pool, test) = experiment_data(spec, config.seed)?;
    train(config, &pool, Some(&test), policy)
}
