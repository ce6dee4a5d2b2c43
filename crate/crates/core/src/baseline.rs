//! The vanilla comparison system: schema-agnostic count features and an
//! L2-regularized logistic regression trained by full-batch gradient
//! descent in double precision.
//!
//! The seven features are counts over the week window, so the model
//! transfers across courses without any vocabulary mapping.

use thiserror::Error;

use crate::events::{decode_action, ActionRole, CourseSchema, EventError, TokenizedSequence};
use crate::numeric::sigmoid;
use crate::seeding;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("training set must contain both classes")]
    SingleClass,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// Count features of one student up to a week window.
pub const FEATURE_DIM: usize = 7;

/// `[contents, quiz_correct, quiz_incorrect, project_pass, project_fail,
/// distinct_active_days, total_events]`.
pub type FeatureVector = [f64; FEATURE_DIM];

/// Counts the week-truncated window of one sequence. The window rule is
/// the same per-student anchor used everywhere: day < first_day + 7*week.
pub fn featurize(
    schema: &CourseSchema,
    seq: &TokenizedSequence,
    week: u32,
) -> Result<FeatureVector, BaselineError> {
    let cut = crate::events::truncate_to_week(seq, week);
    let mut features = [0.0; FEATURE_DIM];
    let mut last_day = None;
    for token in &cut.tokens {
        match decode_action(schema, token.action)? {
            ActionRole::Content { .. } => features[0] += 1.0,
            ActionRole::Quiz { correct: true, .. } => features[1] += 1.0,
            ActionRole::Quiz { correct: false, .. } => features[2] += 1.0,
            ActionRole::Project { passed: true, .. } => features[3] += 1.0,
            ActionRole::Project { passed: false, .. } => features[4] += 1.0,
        }
        if last_day != Some(token.day) {
            features[5] += 1.0; // days are non-decreasing, so runs count once
            last_day = Some(token.day);
        }
        features[6] += 1.0;
    }
    Ok(features)
}

/// Trained weights plus the standardization constants captured from the
/// training set (applied identically at prediction time).
#[derive(Debug, Clone)]
pub struct LogRegModel {
    pub weights: [f64; FEATURE_DIM],
    pub bias: f64,
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

impl LogRegModel {
    fn standardize(&self, features: &FeatureVector) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            out[i] = (features[i] - self.mean[i]) / self.std[i];
        }
        out
    }

    /// Graduation probability for one feature vector.
    pub fn predict(&self, features: &FeatureVector) -> f64 {
        let x = self.standardize(features);
        let score: f64 = self
            .weights
            .iter()
            .zip(&x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.bias;
        sigmoid(score)
    }

    pub fn predict_all(&self, features: &[FeatureVector]) -> Vec<f64> {
        features.iter().map(|f| self.predict(f)).collect()
    }
}

/// Mean L2-regularized logistic loss and its gradient at `(weights, bias)`
/// over standardized features. The bias is not penalized.
fn loss_and_gradient(
    x: &[[f64; FEATURE_DIM]],
    labels: &[bool],
    weights: &[f64; FEATURE_DIM],
    bias: f64,
    l2: f64,
) -> (f64, [f64; FEATURE_DIM], f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = [0.0; FEATURE_DIM];
    let mut grad_b = 0.0;
    for (row, &label) in x.iter().zip(labels) {
        let z: f64 = weights.iter().zip(row).map(|(w, v)| w * v).sum::<f64>() + bias;
        let y = f64::from(u8::from(label));
        // stable logistic loss from the score
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        let residual = sigmoid(z) - y;
        for (g, v) in grad_w.iter_mut().zip(row) {
            *g += residual * v;
        }
        grad_b += residual;
    }
    loss /= n;
    grad_b /= n;
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    (loss, grad_w, grad_b)
}

/// Fits the regression by deterministic full-batch gradient descent.
pub fn train_logreg(
    features: &[FeatureVector],
    labels: &[bool],
    l2: f64,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<LogRegModel, BaselineError> {
    assert_eq!(features.len(), labels.len(), "one label per row");
    if epochs == 0 {
        return Err(BaselineError::InvalidConfig("epochs must be >= 1".into()));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(BaselineError::SingleClass);
    }

    // standardization constants from the training set; constant features
    // get unit scale so they standardize to zero
    let n = features.len() as f64;
    let mut mean = [0.0; FEATURE_DIM];
    for row in features {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = [0.0; FEATURE_DIM];
    for row in features {
        for i in 0..FEATURE_DIM {
            std[i] += (row[i] - mean[i]).powi(2);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }

    let x: Vec<[f64; FEATURE_DIM]> = features
        .iter()
        .map(|row| {
            let mut out = [0.0; FEATURE_DIM];
            for i in 0..FEATURE_DIM {
                out[i] = (row[i] - mean[i]) / std[i];
            }
            out
        })
        .collect();

    use rand::Rng;
    let mut rng = seeding::rng_for(seed, &[seeding::tag("logreg-init")]);
    let mut weights = [0.0; FEATURE_DIM];
    for w in &mut weights {
        *w = rng.gen_range(-0.01..0.01);
    }
    let mut bias = 0.0;

    for _ in 0..epochs {
        let (_, grad_w, grad_b) = loss_and_gradient(&x, labels, &weights, bias, l2);
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= learning_rate * g;
        }
        bias -= learning_rate * grad_b;
    }

    Ok(LogRegModel {
        weights,
        bias,
        mean,
        std,
    })
}
