//! Course schemas, raw event logs and their ordinal token encoding.
//!
//! A course exposes `i` contents, `j` quizzes and `k` projects. Contents
//! produce one action each; quizzes and projects produce two (answered
//! correctly/incorrectly, submitted and passed/failed), so the action
//! vocabulary has `L = i + 2j + 2k` entries. Each student's time-stamped
//! log becomes a sequence of `(action_token, delta_token)` pairs where the
//! delta token is the day gap to the previous event, clamped to the
//! schema's `delta_cap`.
//!
//! Token layout, frozen for checkpoint compatibility:
//!
//! ```text
//! [0, i)            content n            -> n - 1
//! [i, i+j)          quiz n correct       -> i + (n - 1)
//! [i+j, i+2j)       quiz n incorrect     -> i + j + (n - 1)
//! [i+2j, i+2j+k)    project n passed     -> i + 2j + (n - 1)
//! [i+2j+k, L)       project n failed     -> i + 2j + k + (n - 1)
//! ```

pub mod io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from schema validation, tokenization and batching.
#[derive(Debug, Error)]
pub enum EventError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("event does not fit schema: {0}")]
    SchemaMismatch(String),
    #[error("events out of order: day {cur} precedes day {prev}")]
    DayOrdering { prev: u32, cur: u32 },
    #[error("empty event list for student {0}")]
    EmptyInput(String),
    #[error("sequence for {student} has {len} tokens, longer than t_max {t_max}")]
    OverLength {
        student: String,
        len: usize,
        t_max: usize,
    },
    #[error("duplicate student id {0} in dataset")]
    DuplicateStudent(String),
    #[error("unknown action token {token} for vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: u32 },
}

/// Shape of a course's action vocabulary plus the delta-token cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseSchema {
    pub num_contents: u32,
    pub num_quizzes: u32,
    pub num_projects: u32,
    /// Day gaps are clamped to this value, so delta tokens live in
    /// `[0, delta_cap]` and the delta vocabulary has `delta_cap + 1` buckets.
    pub delta_cap: u32,
}

impl CourseSchema {
    pub fn new(
        num_contents: u32,
        num_quizzes: u32,
        num_projects: u32,
        delta_cap: u32,
    ) -> Result<Self, EventError> {
        if delta_cap == 0 {
            return Err(EventError::InvalidSchema("delta_cap must be >= 1".into()));
        }
        Ok(Self {
            num_contents,
            num_quizzes,
            num_projects,
            delta_cap,
        })
    }

    /// Number of distinct action tokens: `i + 2j + 2k`.
    pub fn vocab_size(&self) -> u32 {
        self.num_contents + 2 * self.num_quizzes + 2 * self.num_projects
    }

    /// Number of delta buckets: `delta_cap + 1` (gap 0 through the cap).
    pub fn delta_buckets(&self) -> u32 {
        self.delta_cap + 1
    }
}

/// Event kind within a course.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Content,
    Quiz,
    Project,
}

/// Outcome attached to quiz and project events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Correct,
    Incorrect,
    Pass,
    Fail,
}

/// One time-stamped student action as it appears in an event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvent {
    pub student_id: String,
    pub kind: EventKind,
    /// 1-based index within the event's kind.
    pub ordinal: u32,
    /// `None` for contents; correct/incorrect for quizzes; pass/fail for
    /// projects.
    pub outcome: Option<Outcome>,
    /// Integer day stamp from a global epoch.
    pub day: u32,
}

impl RawEvent {
    pub fn content(student_id: impl Into<String>, ordinal: u32, day: u32) -> Self {
        Self {
            student_id: student_id.into(),
            kind: EventKind::Content,
            ordinal,
            outcome: None,
            day,
        }
    }

    pub fn quiz(student_id: impl Into<String>, ordinal: u32, correct: bool, day: u32) -> Self {
        Self {
            student_id: student_id.into(),
            kind: EventKind::Quiz,
            ordinal,
            outcome: Some(if correct {
                Outcome::Correct
            } else {
                Outcome::Incorrect
            }),
            day,
        }
    }

    pub fn project(student_id: impl Into<String>, ordinal: u32, passed: bool, day: u32) -> Self {
        Self {
            student_id: student_id.into(),
            kind: EventKind::Project,
            ordinal,
            outcome: Some(if passed { Outcome::Pass } else { Outcome::Fail }),
            day,
        }
    }

    fn validate(&self, schema: &CourseSchema) -> Result<(), EventError> {
        let (bound, kind) = match self.kind {
            EventKind::Content => (schema.num_contents, "content"),
            EventKind::Quiz => (schema.num_quizzes, "quiz"),
            EventKind::Project => (schema.num_projects, "project"),
        };
        if self.ordinal == 0 || self.ordinal > bound {
            return Err(EventError::SchemaMismatch(format!(
                "{kind} ordinal {} out of bounds 1..={bound}",
                self.ordinal
            )));
        }
        match (self.kind, self.outcome) {
            (EventKind::Content, None) => Ok(()),
            (EventKind::Quiz, Some(Outcome::Correct | Outcome::Incorrect)) => Ok(()),
            (EventKind::Project, Some(Outcome::Pass | Outcome::Fail)) => Ok(()),
            _ => Err(EventError::SchemaMismatch(format!(
                "outcome {:?} does not match kind {kind}",
                self.outcome
            ))),
        }
    }
}

/// The role a token plays: kind, 1-based ordinal and outcome. Inverse view
/// of the token layout, used for cross-course embedding reuse and the
/// count-feature baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionRole {
    Content { ordinal: u32 },
    Quiz { ordinal: u32, correct: bool },
    Project { ordinal: u32, passed: bool },
}

/// Returns the number of distinct action tokens for a schema.
pub fn vocab_size(schema: &CourseSchema) -> u32 {
    schema.vocab_size()
}

/// Maps one event to its action token under the frozen layout.
pub fn action_token(schema: &CourseSchema, event: &RawEvent) -> Result<u32, EventError> {
    event.validate(schema)?;
    let i = schema.num_contents;
    let j = schema.num_quizzes;
    let k = schema.num_projects;
    let n = event.ordinal - 1;
    Ok(match (event.kind, event.outcome) {
        (EventKind::Content, _) => n,
        (EventKind::Quiz, Some(Outcome::Correct)) => i + n,
        (EventKind::Quiz, Some(Outcome::Incorrect)) => i + j + n,
        (EventKind::Project, Some(Outcome::Pass)) => i + 2 * j + n,
        (EventKind::Project, Some(Outcome::Fail)) => i + 2 * j + k + n,
        _ => unreachable!("validated above"),
    })
}

/// Recovers the role of an action token. Inverse of [`action_token`].
pub fn decode_action(schema: &CourseSchema, token: u32) -> Result<ActionRole, EventError> {
    let i = schema.num_contents;
    let j = schema.num_quizzes;
    let k = schema.num_projects;
    if token < i {
        return Ok(ActionRole::Content { ordinal: token + 1 });
    }
    let t = token - i;
    if t < j {
        return Ok(ActionRole::Quiz {
            ordinal: t + 1,
            correct: true,
        });
    }
    let t = t - j;
    if t < j {
        return Ok(ActionRole::Quiz {
            ordinal: t + 1,
            correct: false,
        });
    }
    let t = t - j;
    if t < k {
        return Ok(ActionRole::Project {
            ordinal: t + 1,
            passed: true,
        });
    }
    let t = t - k;
    if t < k {
        return Ok(ActionRole::Project {
            ordinal: t + 1,
            passed: false,
        });
    }
    Err(EventError::TokenOutOfRange {
        token,
        vocab: schema.vocab_size(),
    })
}

/// Maps a token role to an event payload (without student or day). Used
/// when re-keying an embedding onto another course's vocabulary.
pub fn role_token(schema: &CourseSchema, role: ActionRole) -> Option<u32> {
    let probe = match role {
        ActionRole::Content { ordinal } => RawEvent::content("", ordinal, 0),
        ActionRole::Quiz { ordinal, correct } => RawEvent::quiz("", ordinal, correct, 0),
        ActionRole::Project { ordinal, passed } => RawEvent::project("", ordinal, passed, 0),
    };
    action_token(schema, &probe).ok()
}

/// Delta token for an event at `cur_day` following one at `prev_day`.
///
/// The first event of a sequence has no predecessor and gets bucket 0;
/// later events get `min(cur - prev, delta_cap)`.
pub fn delta_token(prev_day: Option<u32>, cur_day: u32, delta_cap: u32) -> Result<u32, EventError> {
    match prev_day {
        None => Ok(0),
        Some(prev) if cur_day < prev => Err(EventError::DayOrdering {
            prev,
            cur: cur_day,
        }),
        Some(prev) => Ok((cur_day - prev).min(delta_cap)),
    }
}

/// One tokenized event: action token, delta token and the source day the
/// token came from (kept for week-window truncation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventToken {
    pub action: u32,
    pub delta: u32,
    pub day: u32,
}

/// A student's ordered token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSequence {
    pub student_id: String,
    pub tokens: Vec<EventToken>,
}

impl TokenizedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Tokenizes one student's events: stable sort by day, then the ordinal
/// action layout and clamped day gaps.
pub fn tokenize_student(
    schema: &CourseSchema,
    events: &[RawEvent],
) -> Result<TokenizedSequence, EventError> {
    let Some(first) = events.first() else {
        return Err(EventError::EmptyInput("<unknown>".into()));
    };
    let student_id = first.student_id.clone();
    if let Some(other) = events.iter().find(|e| e.student_id != student_id) {
        return Err(EventError::SchemaMismatch(format!(
            "mixed student ids {student_id} and {}",
            other.student_id
        )));
    }
    let mut ordered: Vec<&RawEvent> = events.iter().collect();
    ordered.sort_by_key(|e| e.day); // stable: ties keep input order
    let mut tokens = Vec::with_capacity(ordered.len());
    let mut prev_day = None;
    for event in ordered {
        let action = action_token(schema, event)?;
        let delta = delta_token(prev_day, event.day, schema.delta_cap)?;
        tokens.push(EventToken {
            action,
            delta,
            day: event.day,
        });
        prev_day = Some(event.day);
    }
    Ok(TokenizedSequence { student_id, tokens })
}

/// Keeps the events falling in the student's first `week` weeks, anchored
/// at that student's own first event day (day < first_day + 7*week).
///
/// Truncation removes a suffix only, so the remaining delta tokens are
/// unchanged. May return an empty sequence; callers drop such students for
/// the week and count them in the run report.
pub fn truncate_to_week(seq: &TokenizedSequence, week: u32) -> TokenizedSequence {
    assert!(week >= 1, "week windows are 1-based");
    let Some(first) = seq.tokens.first() else {
        return seq.clone();
    };
    let end = u64::from(first.day) + 7 * u64::from(week);
    let tokens = seq
        .tokens
        .iter()
        .take_while(|t| u64::from(t.day) < end)
        .copied()
        .collect();
    TokenizedSequence {
        student_id: seq.student_id.clone(),
        tokens,
    }
}

/// A slot in a padded batch row: a real token pair or the padding marker.
pub type Slot = Option<(u32, u32)>;

/// One padded row: the padding prefix is `None`, real tokens follow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedRow {
    pub student_id: String,
    pub slots: Vec<Slot>,
}

/// A batch of sequences pre-padded to a common length.
///
/// Padding slots carry the reserved marker (`None`), never a valid token;
/// the model embeds them as zero vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedBatch {
    pub t_max: usize,
    pub rows: Vec<PaddedRow>,
}

impl PaddedBatch {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Pre-pads each sequence to `t_max` with the padding marker.
///
/// Sequences longer than `t_max` keep their most recent `t_max` events
/// (this only arises when applying a trained model to longer target
/// sequences; the count of truncated rows is returned for reporting).
pub fn pad_batch(seqs: &[TokenizedSequence], t_max: usize) -> (PaddedBatch, usize) {
    let mut truncated = 0;
    let rows = seqs
        .iter()
        .map(|seq| {
            let mut slots: Vec<Slot> = Vec::with_capacity(t_max);
            if seq.tokens.len() > t_max {
                truncated += 1;
                log::debug!(
                    "sequence {} has {} events, keeping last {t_max}",
                    seq.student_id,
                    seq.tokens.len()
                );
            }
            let keep = seq.tokens.len().min(t_max);
            slots.resize(t_max - keep, None);
            slots.extend(
                seq.tokens[seq.tokens.len() - keep..]
                    .iter()
                    .map(|t| Some((t.action, t.delta))),
            );
            PaddedRow {
                student_id: seq.student_id.clone(),
                slots,
            }
        })
        .collect();
    (PaddedBatch { t_max, rows }, truncated)
}

/// Sequences paired with binary graduation labels (1 = graduated).
#[derive(Debug, Clone, Default)]
pub struct LabeledDataset {
    pub entries: Vec<(TokenizedSequence, bool)>,
}

impl LabeledDataset {
    /// Builds a dataset, enforcing unique student ids.
    pub fn new(entries: Vec<(TokenizedSequence, bool)>) -> Result<Self, EventError> {
        let mut seen = std::collections::HashSet::new();
        for (seq, _) in &entries {
            if !seen.insert(seq.student_id.clone()) {
                return Err(EventError::DuplicateStudent(seq.student_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.entries.iter().map(|(_, y)| *y).collect()
    }

    /// Longest sequence in the dataset, the padding length for training.
    pub fn max_len(&self) -> usize {
        self.entries.iter().map(|(s, _)| s.len()).max().unwrap_or(0)
    }

    /// Week-truncates every sequence, dropping students left with no
    /// events in the window. Returns the surviving set and the drop count.
    pub fn truncate_to_week(&self, week: u32) -> (LabeledDataset, usize) {
        let mut entries = Vec::with_capacity(self.entries.len());
        let mut dropped = 0;
        for (seq, label) in &self.entries {
            let cut = truncate_to_week(seq, week);
            if cut.is_empty() {
                dropped += 1;
            } else {
                entries.push((cut, *label));
            }
        }
        (LabeledDataset { entries }, dropped)
    }
}
