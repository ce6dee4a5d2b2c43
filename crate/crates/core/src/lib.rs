//! Real-time student-outcome prediction from MOOC event logs.
//!
//! The crate covers the whole pipeline: ordinal tokenization of raw event
//! logs ([`events`]), a small reverse-mode tensor engine ([`numeric`]), the
//! GritNet sequence model — embedding, bidirectional LSTM, global max
//! pooling, sigmoid head — ([`model`]), supervised training plus
//! pseudo-label domain adaptation ([`train`]), AUC/ARR metrics and curve
//! emission ([`eval`], [`plot`]), a seeded synthetic course generator
//! ([`synth`]), a count-feature logistic-regression baseline ([`baseline`])
//! and the four-system transfer experiment harness ([`experiment`]).


pub mod baseline;
pub mod eval;
pub mod experiment;
pub mod events;

pub mod model;
pub mod numeric;
pub mod plot;
pub mod seeding;
pub mod synth;
pub mod train;



pub use events::{
    ActionRole, CourseSchema, EventKind, LabeledDataset, PaddedBatch, RawEvent, TokenizedSequence,
};
pub use model::{GritNet, GritNetConfig};
pub use synth::{ShiftSpec, SyntheticCourseSpec};
pub use train::{AdaptConfig, FoldAssignment, TrainConfig};
