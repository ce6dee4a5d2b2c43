//! Supervised training: stratified student-level folds, the Adam/BCE
//! mini-batch loop with early stopping on validation AUC, and independent
//! week-by-week models over truncated histories.

pub mod adapt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalError;
use crate::events::{pad_batch, EventError, LabeledDataset, TokenizedSequence};
use crate::model::{GritNet, GritNetConfig, ModelError};
use crate::numeric::{AdamConfig, AdamState, NumericError, Tensor};
use crate::seeding;

pub use adapt::{
    adapt, encode_targets, oracle_adapt, pseudo_label, remap_embedding, AdaptConfig,
    AdaptOutcome, AdaptedModel, TargetEncoding, ThetaOutcome,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("stratification requires both classes ({positives} positives of {total})")]
    SingleClass { positives: usize, total: usize },
    #[error("pseudo-labels at threshold {theta} are all {}", if *.all_positive { "positive" } else { "negative" })]
    DegenerateLabels { theta: f64, all_positive: bool },
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Training-loop knobs shared by full training and FC fine-tuning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation-AUC improvement before stopping;
    /// 0 disables early stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 12,
            batch_size: 256,
            learning_rate: 1e-3,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Student index → fold index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    folds: Vec<usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, index: usize) -> usize {
        self.folds[index]
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn complement(&self, fold: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Stratified k-fold split: classes are shuffled separately and dealt
/// round-robin, with the negative dealing offset so total fold sizes
/// differ by at most one. Per-fold positive counts differ by at most one
/// from each other, keeping fold class proportions within one student of
/// the global proportion.
pub fn stratified_kfold(
    labels: &[bool],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, TrainError> {
    if k < 2 {
        return Err(TrainError::InvalidConfig("k must be >= 2".into()));
    }
    let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let negatives: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(TrainError::SingleClass {
            positives: positives.len(),
            total: labels.len(),
        });
    }
    if k > labels.len() {
        return Err(TrainError::InvalidConfig(format!(
            "k = {k} exceeds the {} students",
            labels.len()
        )));
    }

    use rand::seq::SliceRandom;
    let mut rng = seeding::rng_for(seed, &[seeding::tag("kfold")]);
    let mut pos = positives;
    let mut neg = negatives;
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let mut folds = vec![0usize; labels.len()];
    for (slot, &idx) in pos.iter().enumerate() {
        folds[idx] = slot % k;
    }
    let offset = pos.len() % k;
    for (slot, &idx) in neg.iter().enumerate() {
        folds[idx] = (offset + slot) % k;
    }
    Ok(FoldAssignment { k, folds })
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_auc: f64,
}

/// A trained model plus its history and the padding length it was
/// trained with.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: GritNet<f32>,
    pub history: Vec<EpochStats>,
    /// Epoch whose parameters were kept (best validation AUC).
    pub best_epoch: usize,
    pub t_max: usize,
}

fn dataset_views(set: &LabeledDataset) -> (Vec<&TokenizedSequence>, Vec<bool>) {
    let seqs = set.entries.iter().map(|(s, _)| s).collect();
    (seqs, set.labels())
}

/// Inference in fixed-size chunks; identical output to one big batch, with
/// bounded tape memory. Returns probabilities and the count of sequences
/// longer than `t_max` (their oldest events were dropped).
pub fn predict_probs(
    net: &GritNet<f32>,
    seqs: &[&TokenizedSequence],
    t_max: usize,
) -> Result<(Vec<f64>, usize), TrainError> {
    const CHUNK: usize = 512;
    let mut probs = Vec::with_capacity(seqs.len());
    let mut truncated = 0;
    for chunk in seqs.chunks(CHUNK) {
        let owned: Vec<TokenizedSequence> = chunk.iter().map(|&s| s.clone()).collect();
        let (batch, cut) = pad_batch(&owned, t_max);
        truncated += cut;
        let out = net.forward(&batch)?;
        probs.extend(out.probabilities.iter().map(|&p| f64::from(p)));
    }
    Ok((probs, truncated))
}

/// AUC of a model on a labeled evaluation set, padded to `t_max`.
pub fn evaluate_auc(
    net: &GritNet<f32>,
    set: &LabeledDataset,
    t_max: usize,
) -> Result<f64, TrainError> {
    let (seqs, labels) = dataset_views(set);
    let (probs, _) = predict_probs(net, &seqs, t_max)?;
    Ok(crate::eval::auc(&probs, &labels)?)
}

/// Mini-batch Adam on BCE with per-epoch reshuffling. Keeps the
/// parameters of the epoch with the best validation AUC and stops early
/// after `patience` epochs without improvement.
pub fn train(
    mut net: GritNet<f32>,
    train_set: &LabeledDataset,
    valid_set: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let positives = train_set.labels().iter().filter(|&&y| y).count();
    if positives == 0 || positives == train_set.len() {
        return Err(TrainError::SingleClass {
            positives,
            total: train_set.len(),
        });
    }
    if valid_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }

    let t_max = train_set.max_len();
    let (train_seqs, train_labels) = dataset_views(train_set);

    let mut adam = {
        let params = net.params_mut();
        let views: Vec<&crate::numeric::Parameter<f32>> =
            params.iter().map(|p| &**p).collect();
        AdamState::new(&views, config.adam())
    };

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, GritNet<f32>)> = None;
    let mut stall = 0usize;

    for epoch in 0..config.epochs {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..train_seqs.len()).collect();
        let mut rng = seeding::rng_for(
            config.seed,
            &[seeding::tag("epoch-shuffle"), epoch as u64],
        );
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for batch_indices in order.chunks(config.batch_size) {
            let owned: Vec<TokenizedSequence> = batch_indices
                .iter()
                .map(|&i| train_seqs[i].clone())
                .collect();
            let labels: Vec<f32> = batch_indices
                .iter()
                .map(|&i| f32::from(u8::from(train_labels[i])))
                .collect();
            let (batch, _) = pad_batch(&owned, t_max);

            let mut tape = crate::numeric::Tape::new();
            let taped = net.forward_on_tape(&mut tape, &batch, Some(&labels), true)?;
            let loss_node = taped.loss.expect("labels attached");
            tape.backward(loss_node)?;
            loss_sum += f64::from(tape.value(loss_node).item()) * batch_indices.len() as f64;

            let grads: Vec<Option<Tensor<f32>>> = taped
                .param_leaves
                .iter()
                .map(|&leaf| tape.grad(leaf).cloned())
                .collect();
            drop(tape);
            let mut params = net.params_mut();
            for (param, grad) in params.iter_mut().zip(grads) {
                param.zero_grad();
                if let Some(g) = grad {
                    param.grad.add_assign(&g);
                }
            }
            adam.step(&mut params)?;
        }

        let valid_auc = evaluate_auc(&net, valid_set, t_max)?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_seqs.len() as f64,
            valid_auc,
        });

        let improved = best.as_ref().map_or(true, |(auc, _, _)| valid_auc > *auc);
        if improved {
            best = Some((valid_auc, epoch, net.clone()));
            stall = 0;
        } else {
            stall += 1;
            if config.patience > 0 && stall >= config.patience {
                break;
            }
        }
    }

    let (_, best_epoch, best_net) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        net: best_net,
        history,
        best_epoch,
        t_max,
    })
}

/// One week's training product.
#[derive(Debug)]
pub struct WeeklyModel {
    pub week: u32,
    /// `None` when the week was skipped (no usable students).
    pub outcome: Option<TrainOutcome>,
    /// Students with no events inside the week window.
    pub dropped: usize,
    pub skipped: Option<String>,
}

/// Trains one independent model per week over week-truncated histories.
///
/// Each week recomputes its own padding length from the truncated
/// training set and carves a stratified 1-in-5 validation split from the
/// dataset for early stopping. Weeks whose surviving data cannot be
/// trained (empty or single-class) are recorded as skipped.
pub fn train_weekly(
    model_config: GritNetConfig,
    dataset: &LabeledDataset,
    weeks: &[u32],
    config: &TrainConfig,
) -> Result<Vec<WeeklyModel>, TrainError> {
    if weeks.is_empty() {
        return Err(TrainError::InvalidConfig("week list is empty".into()));
    }
    config.validate()?;
    let mut out = Vec::with_capacity(weeks.len());
    for &week in weeks {
        let (cut, dropped) = dataset.truncate_to_week(week);
        let seed = seeding::derive_seed(config.seed, &[seeding::tag("week"), u64::from(week)]);
        let week_config = TrainConfig {
            seed,
            ..config.clone()
        };
        let trained = split_and_train(model_config, &cut, &week_config);
        match trained {
            Ok(outcome) => out.push(WeeklyModel {
                week,
                outcome: Some(outcome),
                dropped,
                skipped: None,
            }),
            Err(err @ (TrainError::EmptyDataset | TrainError::SingleClass { .. })) => {
                log::warn!("week {week} skipped: {err}");
                out.push(WeeklyModel {
                    week,
                    outcome: None,
                    dropped,
                    skipped: Some(err.to_string()),
                });
            }
            Err(other) => return Err(other),
        }
    }
    Ok(out)
}

/// Stratified 80/20 train/validation split, then [`train`]. The model
/// seed is re-derived from the training seed so different weeks and folds
/// start from different weights.
pub fn split_and_train(
    model_config: GritNetConfig,
    dataset: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let labels = dataset.labels();
    let folds = stratified_kfold(
        &labels,
        5,
        seeding::derive_seed(config.seed, &[seeding::tag("valid-split")]),
    )?;
    let pick = |indices: Vec<usize>| LabeledDataset {
        entries: indices
            .into_iter()
            .map(|i| dataset.entries[i].clone())
            .collect(),
    };
    let valid = pick(folds.members(0));
    let fit = pick(folds.complement(0));

    let net_config = GritNetConfig {
        seed: seeding::derive_seed(config.seed, &[seeding::tag("model-seed")]),
        ..model_config
    };
    let net = GritNet::init(net_config)?;
    train(net, &fit, &valid, config)
}
