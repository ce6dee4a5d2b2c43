//! The four-system transfer study on synthetic courses.
//!
//! One run generates a labeled source course and a shifted target course,
//! then compares per week, over stratified target folds:
//!
//! - **vanilla-baseline** — count-feature logistic regression trained on
//!   the source, applied to the target;
//! - **gritnet-baseline** — the sequence model trained on the source,
//!   applied to the target (embedding re-keyed when the schemas differ);
//! - **domain-adaptation** — the source model fine-tuned on pseudo-labeled
//!   target students (FC layer only), best threshold from the grid;
//! - **oracle** — the same fine-tuning with true target labels, the
//!   recovery upper bound.
//!
//! Target students are split into k stratified folds once per seed. For
//! fold f, adaptation (and the oracle) fit on the other folds and all
//! systems are evaluated on fold f. The source model itself is trained
//! once per (seed, week) on source students only. AUC values aggregate
//! over seeds × folds into the weekly curves, and the recovery-rate table
//! is computed from the three sequence-model curves.
//!
//! Jobs are pure functions of `(config, seed, week)` with derived seeds,
//! so running them in parallel changes nothing in the output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{self, BaselineError};
use crate::eval::{arr_report, weekly_curve, ArrReport, EvalError, WeeklyCurve};
use crate::events::{io as events_io, CourseSchema, LabeledDataset, TokenizedSequence};
use crate::model::checkpoint::{checkpoint_bytes, checkpoint_hash};
use crate::model::{GritNet, GritNetConfig};
use crate::seeding::{self, tag};
use crate::synth::{self, ShiftSpec, SynthError, SyntheticCourseSpec};
use crate::train::{
    self, adapt::oracle_adapt_from_encoding, AdaptConfig, TrainConfig, TrainError,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Data(#[from] events_io::DataIoError),
    #[error("experiment config invalid: {0}")]
    InvalidConfig(String),
}

/// Model dimensions for the experiment (desk scale by default).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelDims {
    pub embedding_dim: u32,
    pub hidden_dim: u32,
    #[serde(default)]
    pub gmp_skip_padding: bool,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            hidden_dim: 32,
            gmp_skip_padding: false,
        }
    }
}

/// Full configuration of one transfer study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub weeks: Vec<u32>,
    pub folds: usize,
    pub source_students: usize,
    pub target_students: usize,
    pub source: SyntheticCourseSpec,
    /// Calibrate the source course to this graduation rate first.
    #[serde(default)]
    pub source_rate: Option<f64>,
    pub shift: ShiftSpec,
    #[serde(default)]
    pub model: ModelDims,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub adapt: AdaptConfig,
    /// Students simulated per calibration probe.
    #[serde(default = "default_probe")]
    pub calibration_probe: usize,
    /// Weeks over which the mean recovery rate is reported.
    #[serde(default)]
    pub arr_weeks: Vec<u32>,
    /// Logistic-regression settings `(l2, epochs, learning_rate)`.
    #[serde(default = "default_logreg")]
    pub logreg: (f64, usize, f64),
}

fn default_probe() -> usize {
    1500
}

fn default_logreg() -> (f64, usize, f64) {
    (1e-3, 400, 0.3)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![11, 12, 13],
            weeks: vec![1, 2, 3, 4],
            folds: 5,
            source_students: 1000,
            target_students: 1000,
            source: SyntheticCourseSpec::desk_default(),
            source_rate: Some(0.35),
            shift: ShiftSpec {
                delta_contents: 10,
                delta_quizzes: -6,
                delta_projects: 2,
                difficulty_mult: 1.15,
                pacing_mult: 0.8,
                target_rate: Some(0.22),
            },
            model: ModelDims::default(),
            train: TrainConfig {
                epochs: 16,
                ..TrainConfig::default()
            },
            adapt: AdaptConfig::default(),
            calibration_probe: default_probe(),
            arr_weeks: vec![1, 2, 3, 4],
            logreg: default_logreg(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(ExperimentError::InvalidConfig("no seeds".into()));
        }
        if self.weeks.is_empty() {
            return Err(ExperimentError::InvalidConfig("no weeks".into()));
        }
        if self.folds < 2 {
            return Err(ExperimentError::InvalidConfig("folds must be >= 2".into()));
        }
        if self.source_students < self.folds || self.target_students < self.folds {
            return Err(ExperimentError::InvalidConfig(
                "student counts must be at least the fold count".into(),
            ));
        }
        self.train.validate().map_err(ExperimentError::Train)?;
        self.adapt.validate().map_err(ExperimentError::Train)?;
        self.source.validate()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical TOML serialization.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    fn model_config(&self, schema: &CourseSchema, seed: u64) -> GritNetConfig {
        GritNetConfig {
            vocab_size: schema.vocab_size(),
            delta_buckets: schema.delta_buckets(),
            embedding_dim: self.model.embedding_dim,
            hidden_dim: self.model.hidden_dim,
            gmp_skip_padding: self.model.gmp_skip_padding,
            seed,
        }
    }
}

/// Per-threshold record in a fold report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaReport {
    pub theta: f64,
    pub degenerate: bool,
    pub selection_auc: Option<f64>,
    pub eval_auc: Option<f64>,
    pub pseudo_positive_fraction: Option<f64>,
    pub checkpoint_hash: Option<String>,
}

/// Per-fold record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub eval_students: usize,
    pub fit_students: usize,
    pub vanilla_auc: Option<f64>,
    pub gritnet_auc: Option<f64>,
    pub adapted_auc: Option<f64>,
    pub oracle_auc: Option<f64>,
    pub best_theta: Option<f64>,
    pub thetas: Vec<ThetaReport>,
    /// Frozen-stack hash shared by the fine-tuned models of this fold.
    pub frozen_stack_hash: String,
    pub oracle_checkpoint_hash: Option<String>,
}

/// Per-(seed, week) record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeekReport {
    pub week: u32,
    pub source_dropped: usize,
    pub target_dropped: usize,
    pub source_t_max: usize,
    pub source_best_epoch: usize,
    pub source_valid_auc: f64,
    pub source_checkpoint_hash: String,
    pub remapped: bool,
    pub folds: Vec<FoldReport>,
}

/// Per-seed record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub source_graduation_rate: f64,
    pub target_graduation_rate: f64,
    pub source_difficulty: f64,
    pub target_difficulty: f64,
    pub weeks: Vec<WeekReport>,
}

/// The run's structured report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub weeks: Vec<u32>,
    pub folds: usize,
    pub undefined_auc_folds: usize,
    pub per_seed: Vec<SeedReport>,
}

/// A named checkpoint produced by the run.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
    pub hash: String,
}

/// Everything a run produces.
pub struct ExperimentResult {
    pub curves: Vec<WeeklyCurve>,
    pub arr: ArrReport,
    pub report: RunReport,
    pub artifacts: Vec<Artifact>,
}

pub const SYSTEM_VANILLA: &str = "vanilla-baseline";
pub const SYSTEM_GRITNET: &str = "gritnet-baseline";
pub const SYSTEM_ADAPTED: &str = "domain-adaptation";
pub const SYSTEM_ORACLE: &str = "oracle";

struct SeedData {
    seed: u64,
    source_spec: SyntheticCourseSpec,
    target_spec: SyntheticCourseSpec,
    source: LabeledDataset,
    target: LabeledDataset,
    source_rate: f64,
    target_rate: f64,
    target_folds: train::FoldAssignment,
}

fn prepare_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedData, ExperimentError> {
    let source_spec = match config.source_rate {
        Some(rate) => synth::calibrate(
            &config.source,
            rate,
            config.calibration_probe,
            seeding::derive_seed(seed, &[tag("cal-source")]),
        )?,
        None => config.source.clone(),
    };
    let shifted = synth::shift(&source_spec, &config.shift)?;
    let target_spec = match config.shift.target_rate {
        Some(rate) => synth::calibrate(
            &shifted,
            rate,
            config.calibration_probe,
            seeding::derive_seed(seed, &[tag("cal-target")]),
        )?,
        None => shifted,
    };

    let (source_events, source_labels) = synth::generate(
        &source_spec,
        config.source_students,
        seeding::derive_seed(seed, &[tag("gen-source")]),
    )?;
    let (target_events, target_labels) = synth::generate(
        &target_spec,
        config.target_students,
        seeding::derive_seed(seed, &[tag("gen-target")]),
    )?;
    let source = events_io::build_dataset(&source_spec.schema, &source_events, &source_labels)?;
    let target = events_io::build_dataset(&target_spec.schema, &target_events, &target_labels)?;

    let rate = |labels: &[(String, bool)]| {
        labels.iter().filter(|(_, y)| *y).count() as f64 / labels.len() as f64
    };
    let target_folds = train::stratified_kfold(
        &target.labels(),
        config.folds,
        seeding::derive_seed(seed, &[tag("target-folds")]),
    )?;

    Ok(SeedData {
        seed,
        source_rate: rate(&source_labels),
        target_rate: rate(&target_labels),
        source_spec,
        target_spec,
        source,
        target,
        target_folds,
    })
}

struct WeekJobOutput {
    report: WeekReport,
    artifacts: Vec<Artifact>,
    /// (system, auc-or-error) per fold, in fold order.
    fold_aucs: Vec<[(&'static str, Result<f64, EvalError>); 4]>,
}

fn auc_or_err(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    crate::eval::auc(scores, labels)
}

fn run_week(
    config: &ExperimentConfig,
    data: &SeedData,
    week: u32,
) -> Result<WeekJobOutput, ExperimentError> {
    let seed = data.seed;
    let (source_week, source_dropped) = data.source.truncate_to_week(week);
    let (target_week, target_dropped) = data.target.truncate_to_week(week);
    if source_week.is_empty() || target_week.is_empty() {
        return Err(ExperimentError::InvalidConfig(format!(
            "week {week} leaves no usable students"
        )));
    }

    // source model for this (seed, week)
    let train_seed = seeding::derive_seed(seed, &[tag("source-train"), u64::from(week)]);
    let source_outcome = train::split_and_train(
        config.model_config(&data.source_spec.schema, 0),
        &source_week,
        &TrainConfig {
            seed: train_seed,
            ..config.train.clone()
        },
    )?;
    let source_net = &source_outcome.net;
    let source_hash = checkpoint_hash(source_net);

    // vanilla baseline trained on all source students of this week
    let (l2, lr_epochs, lr) = (config.logreg.0, config.logreg.1, config.logreg.2);
    let source_features: Vec<baseline::FeatureVector> = source_week
        .entries
        .iter()
        .map(|(s, _)| baseline::featurize(&data.source_spec.schema, s, week))
        .collect::<Result<_, _>>()?;
    let logreg = baseline::train_logreg(
        &source_features,
        &source_week.labels(),
        l2,
        lr_epochs,
        lr,
        seeding::derive_seed(seed, &[tag("vanilla"), u64::from(week)]),
    )?;

    // re-key the embedding once per week when schemas differ, then encode
    // every surviving target student with the frozen stack
    let remapped = data.source_spec.schema != data.target_spec.schema;
    let adapt_seed = seeding::derive_seed(seed, &[tag("adapt"), u64::from(week)]);
    let base_net = if remapped {
        train::remap_embedding(
            source_net,
            &data.source_spec.schema,
            &data.target_spec.schema,
            adapt_seed,
        )?
    } else {
        source_net.clone()
    };
    let target_refs: Vec<&TokenizedSequence> =
        target_week.entries.iter().map(|(s, _)| s).collect();
    let target_labels = target_week.labels();
    let encoding = train::encode_targets(&base_net, &target_refs)?;

    // fold membership by student id (truncation may drop students)
    let id_to_row: std::collections::HashMap<&str, usize> = target_week
        .entries
        .iter()
        .enumerate()
        .map(|(row, (s, _))| (s.student_id.as_str(), row))
        .collect();

    let mut artifacts = vec![Artifact {
        name: format!("seed{seed}_week{week}_source"),
        bytes: checkpoint_bytes(source_net),
        hash: source_hash.clone(),
    }];
    let mut fold_reports = Vec::with_capacity(config.folds);
    let mut fold_aucs = Vec::with_capacity(config.folds);

    for fold in 0..config.folds {
        let to_rows = |indices: Vec<usize>| -> Vec<usize> {
            indices
                .into_iter()
                .filter_map(|i| {
                    id_to_row
                        .get(data.target.entries[i].0.student_id.as_str())
                        .copied()
                })
                .collect()
        };
        let eval_rows = to_rows(data.target_folds.members(fold));
        let fit_rows = to_rows(data.target_folds.complement(fold));
        let eval_labels: Vec<bool> = eval_rows.iter().map(|&r| target_labels[r]).collect();
        let fit_labels: Vec<bool> = fit_rows.iter().map(|&r| target_labels[r]).collect();

        // vanilla on the eval fold
        let vanilla = {
            let feats: Vec<baseline::FeatureVector> = eval_rows
                .iter()
                .map(|&r| {
                    baseline::featurize(&data.target_spec.schema, &target_week.entries[r].0, week)
                })
                .collect::<Result<_, _>>()?;
            auc_or_err(&logreg.predict_all(&feats), &eval_labels)
        };

        // sequence-model baseline straight off the cached predictions
        let eval_preds: Vec<f64> = eval_rows.iter().map(|&r| encoding.predictions[r]).collect();
        let gritnet = auc_or_err(&eval_preds, &eval_labels);

        // fine-tuning sees only the fit rows of the encoding
        let sub_encoding = train::TargetEncoding {
            embeddings: {
                let mut t =
                    crate::numeric::Tensor::zeros(fit_rows.len(), encoding.embeddings.cols());
                for (r, &row) in fit_rows.iter().enumerate() {
                    t.row_mut(r).copy_from_slice(encoding.embeddings.row(row));
                }
                t
            },
            predictions: fit_rows.iter().map(|&r| encoding.predictions[r]).collect(),
            t_max: encoding.t_max,
        };
        let fold_adapt = AdaptConfig {
            seed: seeding::derive_seed(adapt_seed, &[tag("fold"), fold as u64]),
            ..config.adapt.clone()
        };
        let outcome =
            train::adapt::adapt_from_encoding(&base_net, &sub_encoding, &fold_adapt, remapped)?;

        let eval_with_head = |net: &GritNet<f32>| -> Vec<f64> {
            eval_rows
                .iter()
                .map(|&r| {
                    let z: f32 = encoding
                        .embeddings
                        .row(r)
                        .iter()
                        .zip(net.fc_weight.value.data())
                        .map(|(&e, &w)| e * w)
                        .sum::<f32>()
                        + net.fc_bias.value.item();
                    f64::from(crate::numeric::sigmoid(z).clamp(1e-7, 1.0 - 1e-7))
                })
                .collect()
        };

        let mut theta_reports = Vec::with_capacity(outcome.per_theta.len());
        for run in &outcome.per_theta {
            match &run.result {
                Ok(model) => {
                    let eval_auc = auc_or_err(&eval_with_head(&model.net), &eval_labels).ok();
                    theta_reports.push(ThetaReport {
                        theta: run.theta,
                        degenerate: false,
                        selection_auc: model.selection_auc,
                        eval_auc,
                        pseudo_positive_fraction: Some(model.pseudo_positive_fraction),
                        checkpoint_hash: Some(checkpoint_hash(&model.net)),
                    });
                }
                Err(_) => theta_reports.push(ThetaReport {
                    theta: run.theta,
                    degenerate: true,
                    selection_auc: None,
                    eval_auc: None,
                    pseudo_positive_fraction: None,
                    checkpoint_hash: None,
                }),
            }
        }

        let (best_theta, adapted) = match outcome.best {
            Some(idx) => {
                let model = outcome.per_theta[idx].result.as_ref().expect("best is Ok");
                let scores = eval_with_head(&model.net);
                artifacts.push(Artifact {
                    name: format!(
                        "seed{seed}_week{week}_fold{fold}_adapted_theta{:.2}",
                        outcome.per_theta[idx].theta
                    ),
                    bytes: checkpoint_bytes(&model.net),
                    hash: checkpoint_hash(&model.net),
                });
                (
                    Some(outcome.per_theta[idx].theta),
                    auc_or_err(&scores, &eval_labels),
                )
            }
            None => (
                None,
                Err(EvalError::UndefinedAuc(
                    "all thresholds degenerate".into(),
                )),
            ),
        };

        // oracle: true labels on the same fit rows, same seed and split
        let oracle = {
            let result = oracle_adapt_from_encoding(
                &base_net,
                &sub_encoding,
                &fit_labels,
                &fold_adapt,
            );
            match result {
                Ok(model) => {
                    let scores = eval_with_head(&model.net);
                    artifacts.push(Artifact {
                        name: format!("seed{seed}_week{week}_fold{fold}_oracle"),
                        bytes: checkpoint_bytes(&model.net),
                        hash: checkpoint_hash(&model.net),
                    });
                    (
                        Some(checkpoint_hash(&model.net)),
                        auc_or_err(&scores, &eval_labels),
                    )
                }
                Err(e) => {
                    log::warn!("seed {seed} week {week} fold {fold}: oracle failed: {e}");
                    (None, Err(EvalError::UndefinedAuc(e.to_string())))
                }
            }
        };

        fold_reports.push(FoldReport {
            fold,
            eval_students: eval_rows.len(),
            fit_students: fit_rows.len(),
            vanilla_auc: vanilla.clone().ok(),
            gritnet_auc: gritnet.clone().ok(),
            adapted_auc: adapted.clone().ok(),
            oracle_auc: oracle.1.clone().ok(),
            best_theta,
            thetas: theta_reports,
            frozen_stack_hash: outcome.frozen_stack_hash.clone(),
            oracle_checkpoint_hash: oracle.0,
        });
        fold_aucs.push([
            (SYSTEM_VANILLA, vanilla),
            (SYSTEM_GRITNET, gritnet),
            (SYSTEM_ADAPTED, adapted),
            (SYSTEM_ORACLE, oracle.1),
        ]);
    }

    Ok(WeekJobOutput {
        report: WeekReport {
            week,
            source_dropped,
            target_dropped,
            source_t_max: source_outcome.t_max,
            source_best_epoch: source_outcome.best_epoch,
            source_valid_auc: source_outcome
                .history
                .get(source_outcome.best_epoch)
                .map(|e| e.valid_auc)
                .unwrap_or(f64::NAN),
            source_checkpoint_hash: source_hash,
            remapped,
            folds: fold_reports,
        },
        artifacts,
        fold_aucs,
    })
}

/// Runs the full study. The heavy (seed, week) jobs run in parallel;
/// results are merged in deterministic (seed, week, fold) order.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    config.validate()?;
    let config_hash = config.config_hash();

    let seed_data: Vec<SeedData> = config
        .seeds
        .iter()
        .map(|&seed| prepare_seed(config, seed))
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(usize, u32)> = seed_data
        .iter()
        .enumerate()
        .flat_map(|(si, _)| config.weeks.iter().map(move |&w| (si, w)))
        .collect();
    let outputs: Vec<Result<WeekJobOutput, ExperimentError>> = jobs
        .par_iter()
        .map(|&(si, week)| run_week(config, &seed_data[si], week))
        .collect();

    let mut per_seed: Vec<SeedReport> = seed_data
        .iter()
        .map(|d| SeedReport {
            seed: d.seed,
            source_graduation_rate: d.source_rate,
            target_graduation_rate: d.target_rate,
            source_difficulty: d.source_spec.difficulty,
            target_difficulty: d.target_spec.difficulty,
            weeks: Vec::with_capacity(config.weeks.len()),
        })
        .collect();

    // per system: week -> fold AUC results across seeds
    let mut per_system: std::collections::BTreeMap<&'static str, Vec<(u32, Vec<Result<f64, EvalError>>)>> =
        std::collections::BTreeMap::new();
    for name in [SYSTEM_VANILLA, SYSTEM_GRITNET, SYSTEM_ADAPTED, SYSTEM_ORACLE] {
        per_system.insert(
            name,
            config.weeks.iter().map(|&w| (w, Vec::new())).collect(),
        );
    }

    let mut artifacts = Vec::new();
    for ((si, week), output) in jobs.into_iter().zip(outputs) {
        let output = output?;
        let week_slot = config
            .weeks
            .iter()
            .position(|&w| w == week)
            .expect("week from the job list");
        for fold_entry in &output.fold_aucs {
            for (system, result) in fold_entry {
                per_system.get_mut(system).expect("known system")[week_slot]
                    .1
                    .push(result.clone());
            }
        }
        per_seed[si].weeks.push(output.report);
        artifacts.extend(output.artifacts);
    }

    let mut undefined = 0;
    let curves: Vec<WeeklyCurve> = [SYSTEM_VANILLA, SYSTEM_GRITNET, SYSTEM_ADAPTED, SYSTEM_ORACLE]
        .iter()
        .map(|name| {
            let (curve, missing) = weekly_curve(*name, &per_system[name]);
            undefined += missing;
            curve
        })
        .collect();

    let arr_weeks = if config.arr_weeks.is_empty() {
        config.weeks.clone()
    } else {
        config.arr_weeks.clone()
    };
    let arr = arr_report(&curves[1], &curves[2], &curves[3], &arr_weeks);

    Ok(ExperimentResult {
        curves,
        arr,
        report: RunReport {
            config_hash,
            seeds: config.seeds.clone(),
            weeks: config.weeks.clone(),
            folds: config.folds,
            undefined_auc_folds: undefined,
            per_seed,
        },
        artifacts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let mut source = SyntheticCourseSpec::desk_default();
        source.term_days = 35;
        source.schema = crate::events::CourseSchema {
            num_contents: 16,
            num_quizzes: 5,
            num_projects: 2,
            delta_cap: 14,
        };
        ExperimentConfig {
            seeds: vec![5],
            weeks: vec![1, 2],
            folds: 3,
            source_students: 90,
            target_students: 90,
            source,
            source_rate: Some(0.4),
            shift: ShiftSpec {
                delta_contents: 4,
                delta_quizzes: -2,
                delta_projects: 1,
                difficulty_mult: 1.2,
                pacing_mult: 0.9,
                target_rate: None,
            },
            model: ModelDims {
                embedding_dim: 12,
                hidden_dim: 6,
                gmp_skip_padding: false,
            },
            train: TrainConfig {
                epochs: 8,
                batch_size: 32,
                learning_rate: 0.02,
                patience: 0,
                seed: 0,
            },
            adapt: AdaptConfig {
                epochs: 4,
                batch_size: 16,
                learning_rate: 0.01,
                seed: 0,
                ..AdaptConfig::default()
            },
            calibration_probe: 200,
            arr_weeks: vec![1, 2],
            logreg: (1e-3, 120, 0.3),
        }
    }

    #[test]
    fn tiny_experiment_produces_four_curves_and_report() {
        let config = tiny_config();
        let result = run(&config).unwrap();
        assert_eq!(result.curves.len(), 4);
        for curve in &result.curves {
            assert_eq!(curve.points.len(), 2, "{} curve", curve.system);
        }
        assert_eq!(result.report.per_seed.len(), 1);
        assert_eq!(result.report.per_seed[0].weeks.len(), 2);
        let week = &result.report.per_seed[0].weeks[0];
        assert_eq!(week.folds.len(), 3);
        assert!(week.remapped, "schemas differ after the shift");
        // one source artifact per (seed, week) at minimum
        assert!(result.artifacts.len() >= 2);
        // report serializes to TOML
        let text = toml::to_string_pretty(&result.report).unwrap();
        assert!(text.contains("config_hash"));
    }

    #[test]
    fn experiment_is_deterministic() {
        let config = tiny_config();
        let a = run(&config).unwrap();
        let b = run(&config).unwrap();
        assert_eq!(
            toml::to_string(&a.report).unwrap(),
            toml::to_string(&b.report).unwrap()
        );
        for (ca, cb) in a.curves.iter().zip(&b.curves) {
            assert_eq!(ca, cb);
        }
    }
}
