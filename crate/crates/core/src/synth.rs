//! Seeded synthetic MOOC courses.
//!
//! The generative model is a simple ability/hazard process — enough to
//! make the prediction task learnable and shiftable, with no claim to
//! demographic realism. Each student draws an ability `g ~ Beta(α, β)`;
//! on each day they may drop out permanently, otherwise they are active
//! with a probability that grows with ability. Active students take a few
//! actions along a fixed curriculum track (contents in order, quizzes and
//! projects interleaved at their ordinal positions). Quiz and project
//! outcomes succeed with probability `σ(sharpness · (g − difficulty))`;
//! failed quizzes are retried a couple of times then skipped, failed
//! projects block until passed. A student graduates when every project is
//! passed before the term ends, which makes the label mechanically
//! derivable from the log.
//!
//! Outcome draws are stateless hashes of `(seed, student, item, attempt)`,
//! so raising the difficulty multiplier can only flip successes to
//! failures: the graduation rate is monotone non-increasing in the
//! multiplier, which is what the calibration bisection relies on.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{CourseSchema, RawEvent};
use crate::seeding;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid course spec: {0}")]
    InvalidSpec(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
}

/// Parameters of one synthetic course.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCourseSpec {
    pub schema: CourseSchema,
    /// Calendar length of the cohort's term.
    pub term_days: u32,
    /// Ability distribution Beta(alpha, beta).
    pub ability_alpha: f64,
    pub ability_beta: f64,
    /// Base probability of being active on a given day; scaled per
    /// student by ability.
    pub daily_activity: f64,
    /// Probability of permanently dropping out, per day.
    pub daily_dropout: f64,
    /// Inclusive range of actions per active day.
    pub events_per_active_day: (u32, u32),
    /// Propensity to re-view an already seen content instead of
    /// advancing; scaled by (1 - ability), so struggling students revisit
    /// more. Revisits inflate raw event counts without inflating
    /// progress, which is what separates sequence readers from count
    /// features.
    #[serde(default = "default_revisit")]
    pub revisit_rate: f64,
    /// Global difficulty multiplier; [`calibrate`] tunes this.
    pub difficulty: f64,
    /// Quiz difficulty curve `(base, slope)` over the ordinal fraction.
    pub quiz_difficulty: (f64, f64),
    /// Project difficulty curve `(base, slope)`.
    pub project_difficulty: (f64, f64),
    /// Steepness of the success logistic.
    pub sharpness: f64,
    /// Default generation seed (the CLI uses it when no seed is given).
    pub seed: u64,
}

impl Default for SyntheticCourseSpec {
    fn default() -> Self {
        Self::desk_default()
    }
}

impl SyntheticCourseSpec {
    /// Small course for desk-scale experiments: 40 contents, 12 quizzes,
    /// 3 projects over an 8-week term.
    pub fn desk_default() -> Self {
        Self {
            schema: CourseSchema {
                num_contents: 40,
                num_quizzes: 12,
                num_projects: 3,
                delta_cap: 30,
            },
            term_days: 56,
            ability_alpha: 2.0,
            ability_beta: 2.0,
            daily_activity: 0.55,
            daily_dropout: 0.006,
            events_per_active_day: (2, 5),
            revisit_rate: 0.6,
            difficulty: 1.0,
            quiz_difficulty: (0.28, 0.25),
            project_difficulty: (0.35, 0.20),
            sharpness: 5.0,
            seed: 7,
        }
    }

    /// Course shaped like the 471/168/4 catalog row (21.4% graduation
    /// target).
    pub fn nd_a_like() -> Self {
        Self {
            schema: CourseSchema {
                num_contents: 471,
                num_quizzes: 168,
                num_projects: 4,
                delta_cap: 30,
            },
            term_days: 120,
            ..Self::desk_default()
        }
    }

    /// Course shaped like the 568/84/10 catalog row (39.4% target).
    pub fn nd_b_like() -> Self {
        Self {
            schema: CourseSchema {
                num_contents: 568,
                num_quizzes: 84,
                num_projects: 10,
                delta_cap: 30,
            },
            term_days: 120,
            ..Self::desk_default()
        }
    }

    /// Course shaped like the 346/50/5 catalog row (46.2% target).
    pub fn nd_c_like() -> Self {
        Self {
            schema: CourseSchema {
                num_contents: 346,
                num_quizzes: 50,
                num_projects: 5,
                delta_cap: 30,
            },
            term_days: 120,
            ..Self::desk_default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.term_days < 7 {
            return Err(SynthError::InvalidSpec("term_days must be >= 7".into()));
        }
        if !(self.daily_activity > 0.0 && self.daily_activity <= 1.0) {
            return Err(SynthError::InvalidSpec(
                "daily_activity must be in (0, 1]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.daily_dropout) {
            return Err(SynthError::InvalidSpec(
                "daily_dropout must be in [0, 1)".into(),
            ));
        }
        if self.events_per_active_day.0 == 0
            || self.events_per_active_day.0 > self.events_per_active_day.1
        {
            return Err(SynthError::InvalidSpec(
                "events_per_active_day must be a nonempty range starting at >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.revisit_rate) {
            return Err(SynthError::InvalidSpec(
                "revisit_rate must be in [0, 1]".into(),
            ));
        }
        if self.ability_alpha <= 0.0 || self.ability_beta <= 0.0 {
            return Err(SynthError::InvalidSpec(
                "ability Beta parameters must be positive".into(),
            ));
        }
        if self.difficulty < 0.0 {
            return Err(SynthError::InvalidSpec(
                "difficulty must be non-negative".into(),
            ));
        }
        if self.schema.delta_cap == 0 {
            return Err(SynthError::InvalidSpec("delta_cap must be >= 1".into()));
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SynthError::InvalidSpec(format!("{}: {e}", path.display())))?;
        let spec: Self = toml::from_str(&text)
            .map_err(|e| SynthError::InvalidSpec(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), SynthError> {
        let text = toml::to_string_pretty(self).expect("spec serializes");
        std::fs::write(path, text)
            .map_err(|e| SynthError::InvalidSpec(format!("{}: {e}", path.display())))
    }
}

/// Differences between a source course and its shifted target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftSpec {
    #[serde(default)]
    pub delta_contents: i64,
    #[serde(default)]
    pub delta_quizzes: i64,
    #[serde(default)]
    pub delta_projects: i64,
    /// Multiplies the global difficulty.
    #[serde(default = "one")]
    pub difficulty_mult: f64,
    /// Multiplies the daily activity hazard.
    #[serde(default = "one")]
    pub pacing_mult: f64,
    /// When set, the caller re-calibrates the shifted course to this
    /// graduation rate.
    #[serde(default)]
    pub target_rate: Option<f64>,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            delta_contents: 0,
            delta_quizzes: 0,
            delta_projects: 0,
            difficulty_mult: 1.0,
            pacing_mult: 1.0,
            target_rate: None,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_revisit() -> f64 {
    0.6
}

/// Applies schema deltas and parameter multipliers, yielding the target
/// course of a transfer scenario.
pub fn shift(spec: &SyntheticCourseSpec, shift: &ShiftSpec) -> Result<SyntheticCourseSpec, SynthError> {
    let apply = |base: u32, delta: i64, what: &str| -> Result<u32, SynthError> {
        let shifted = i64::from(base) + delta;
        u32::try_from(shifted)
            .map_err(|_| SynthError::InvalidSpec(format!("{what} would become {shifted}")))
    };
    let mut out = spec.clone();
    out.schema.num_contents = apply(spec.schema.num_contents, shift.delta_contents, "num_contents")?;
    out.schema.num_quizzes = apply(spec.schema.num_quizzes, shift.delta_quizzes, "num_quizzes")?;
    out.schema.num_projects = apply(spec.schema.num_projects, shift.delta_projects, "num_projects")?;
    out.difficulty = spec.difficulty * shift.difficulty_mult;
    out.daily_activity = (spec.daily_activity * shift.pacing_mult).clamp(1e-6, 1.0);
    out.validate()?;
    Ok(out)
}

/// One simulated student with the latent ability that produced the log.
#[derive(Debug, Clone)]
pub struct StudentRecord {
    pub student_id: String,
    pub ability: f64,
    pub events: Vec<RawEvent>,
    pub graduated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TrackItem {
    Content(u32),
    Quiz(u32),
    Project(u32),
}

/// Curriculum order: contents ascending, each quiz/project inserted after
/// its proportional content position.
fn build_track(schema: &CourseSchema) -> Vec<TrackItem> {
    let i = schema.num_contents as u64;
    let j = schema.num_quizzes as u64;
    let k = schema.num_projects as u64;
    // sort key: (content position, tier, ordinal)
    let mut keyed: Vec<((u64, u8, u32), TrackItem)> = Vec::new();
    for c in 1..=schema.num_contents {
        keyed.push(((u64::from(c), 0, c), TrackItem::Content(c)));
    }
    for q in 1..=schema.num_quizzes {
        let pos = (u64::from(q) * i).div_ceil(j.max(1));
        keyed.push(((pos, 1, q), TrackItem::Quiz(q)));
    }
    for p in 1..=schema.num_projects {
        let pos = (u64::from(p) * i).div_ceil(k.max(1));
        keyed.push(((pos, 2, p), TrackItem::Project(p)));
    }
    keyed.sort_by_key(|(key, _)| *key);
    keyed.into_iter().map(|(_, item)| item).collect()
}

const MAX_QUIZ_ATTEMPTS: u32 = 3;

// stream tags for the per-student stateless draws
const STREAM_DROPOUT: u64 = 1;
const STREAM_ACTIVITY: u64 = 2;
const STREAM_COUNT: u64 = 3;
const STREAM_OUTCOME: u64 = 4;
const STREAM_REVISIT: u64 = 5;
const STREAM_REVISIT_PICK: u64 = 6;

struct ItemDifficulty<'a> {
    spec: &'a SyntheticCourseSpec,
}

impl ItemDifficulty<'_> {
    fn quiz(&self, ordinal: u32) -> f64 {
        let (base, slope) = self.spec.quiz_difficulty;
        let frac = f64::from(ordinal) / f64::from(self.spec.schema.num_quizzes.max(1));
        self.spec.difficulty * (base + slope * frac)
    }

    fn project(&self, ordinal: u32) -> f64 {
        let (base, slope) = self.spec.project_difficulty;
        let frac = f64::from(ordinal) / f64::from(self.spec.schema.num_projects.max(1));
        self.spec.difficulty * (base + slope * frac)
    }
}

fn success(ability: f64, difficulty: f64, sharpness: f64, draw: f64) -> bool {
    let p = crate::numeric::sigmoid(sharpness * (ability - difficulty));
    draw < p
}

fn simulate_student(
    spec: &SyntheticCourseSpec,
    track: &[TrackItem],
    seed: u64,
    index: usize,
    id_width: usize,
) -> StudentRecord {
    use rand::Rng;
    let student_id = format!("s{index:0id_width$}");
    let student_tag = index as u64;
    let mut ability_rng = seeding::rng_for(seed, &[seeding::tag("ability"), student_tag]);
    let ability = {
        let dist = rand_distr::Beta::new(spec.ability_alpha, spec.ability_beta)
            .expect("validated Beta parameters");
        ability_rng.sample(dist)
    };
    let difficulty = ItemDifficulty { spec };
    let hazard = (spec.daily_activity * (0.6 + 0.8 * ability)).clamp(0.0, 1.0);
    let (min_apd, max_apd) = spec.events_per_active_day;

    let mut events = Vec::new();
    let mut position = 0usize;
    let mut contents_seen = 0u32;
    let revisit_prob = (spec.revisit_rate * (1.0 - ability)).clamp(0.0, 0.95);
    let mut quiz_attempts = vec![0u32; spec.schema.num_quizzes as usize];
    let mut project_attempts = vec![0u32; spec.schema.num_projects as usize];
    let mut projects_passed = vec![false; spec.schema.num_projects as usize];

    'days: for day in 0..spec.term_days {
        let day_tag = u64::from(day);
        if seeding::unit_from(seed, &[student_tag, STREAM_DROPOUT, day_tag]) < spec.daily_dropout {
            break;
        }
        if seeding::unit_from(seed, &[student_tag, STREAM_ACTIVITY, day_tag]) >= hazard {
            continue;
        }
        let span = f64::from(max_apd - min_apd + 1);
        let count = min_apd
            + (seeding::unit_from(seed, &[student_tag, STREAM_COUNT, day_tag]) * span) as u32;
        let count = count.min(max_apd);

        for action in 0..count {
            let action_tag = u64::from(action);
            // re-viewing consumes the action slot without advancing; the
            // decision stream is independent of difficulty so progression
            // stays pathwise monotone in the multiplier
            if contents_seen > 0
                && seeding::unit_from(seed, &[student_tag, STREAM_REVISIT, day_tag, action_tag])
                    < revisit_prob
            {
                let pick = seeding::unit_from(
                    seed,
                    &[student_tag, STREAM_REVISIT_PICK, day_tag, action_tag],
                );
                let ordinal = 1 + (pick * f64::from(contents_seen)) as u32;
                let ordinal = ordinal.min(contents_seen);
                events.push(RawEvent::content(student_id.clone(), ordinal, day));
                continue;
            }
            let Some(item) = track.get(position) else {
                break 'days; // curriculum finished
            };
            match *item {
                TrackItem::Content(ordinal) => {
                    events.push(RawEvent::content(student_id.clone(), ordinal, day));
                    contents_seen = contents_seen.max(ordinal);
                    position += 1;
                }
                TrackItem::Quiz(ordinal) => {
                    let slot = (ordinal - 1) as usize;
                    quiz_attempts[slot] += 1;
                    let draw = seeding::unit_from(
                        seed,
                        &[
                            student_tag,
                            STREAM_OUTCOME,
                            u64::from(ordinal) << 2,
                            u64::from(quiz_attempts[slot]),
                        ],
                    );
                    let correct =
                        success(ability, difficulty.quiz(ordinal), spec.sharpness, draw);
                    events.push(RawEvent::quiz(student_id.clone(), ordinal, correct, day));
                    if correct || quiz_attempts[slot] >= MAX_QUIZ_ATTEMPTS {
                        position += 1;
                    }
                }
                TrackItem::Project(ordinal) => {
                    let slot = (ordinal - 1) as usize;
                    project_attempts[slot] += 1;
                    let draw = seeding::unit_from(
                        seed,
                        &[
                            student_tag,
                            STREAM_OUTCOME,
                            (u64::from(ordinal) << 2) | 1,
                            u64::from(project_attempts[slot]),
                        ],
                    );
                    let passed =
                        success(ability, difficulty.project(ordinal), spec.sharpness, draw);
                    events.push(RawEvent::project(student_id.clone(), ordinal, passed, day));
                    if passed {
                        projects_passed[slot] = true;
                        position += 1;
                    }
                }
            }
        }
    }

    let graduated = !projects_passed.is_empty() && projects_passed.iter().all(|&p| p);
    StudentRecord {
        student_id,
        ability,
        events,
        graduated,
    }
}

/// Simulates `n_students` and returns the per-student records, abilities
/// included. Deterministic in `(spec, n_students, seed)`; per-student
/// draws are independent, so the simulation parallelizes over students.
pub fn generate_records(
    spec: &SyntheticCourseSpec,
    n_students: usize,
    seed: u64,
) -> Result<Vec<StudentRecord>, SynthError> {
    spec.validate()?;
    if n_students == 0 {
        return Err(SynthError::InvalidSpec("n_students must be >= 1".into()));
    }
    let track = build_track(&spec.schema);
    let id_width = n_students.to_string().len().max(5);
    Ok((0..n_students)
        .into_par_iter()
        .map(|index| simulate_student(spec, &track, seed, index, id_width))
        .collect())
}

/// Flat event log plus `(student_id, graduated)` labels, both in student
/// index order.
pub fn generate(
    spec: &SyntheticCourseSpec,
    n_students: usize,
    seed: u64,
) -> Result<(Vec<RawEvent>, Vec<(String, bool)>), SynthError> {
    let records = generate_records(spec, n_students, seed)?;
    let mut events = Vec::with_capacity(records.iter().map(|r| r.events.len()).sum());
    let mut labels = Vec::with_capacity(records.len());
    for record in records {
        events.extend(record.events);
        labels.push((record.student_id, record.graduated));
    }
    Ok((events, labels))
}

fn graduation_rate(records: &[StudentRecord]) -> f64 {
    records.iter().filter(|r| r.graduated).count() as f64 / records.len() as f64
}

/// Tolerance on the probe-sample graduation rate, in rate points.
pub const CALIBRATION_TOL: f64 = 0.01;

/// Bisects the global difficulty multiplier until the simulated
/// graduation rate on a probe sample is within ±1 point of `target_rate`.
pub fn calibrate(
    spec: &SyntheticCourseSpec,
    target_rate: f64,
    n_probe: usize,
    seed: u64,
) -> Result<SyntheticCourseSpec, SynthError> {
    spec.validate()?;
    if !(0.0..1.0).contains(&target_rate) || target_rate <= 0.0 {
        if (target_rate - 1.0).abs() < f64::EPSILON || target_rate >= 1.0 {
            return Err(SynthError::Calibration(format!(
                "target rate {target_rate} is unreachable: dropout keeps the rate below 1"
            )));
        }
        return Err(SynthError::Calibration(format!(
            "target rate {target_rate} outside (0, 1)"
        )));
    }
    let probe_seed = seeding::derive_seed(seed, &[seeding::tag("calibration-probe")]);
    let rate_at = |multiplier: f64| -> Result<f64, SynthError> {
        let mut probe = spec.clone();
        probe.difficulty = multiplier;
        Ok(graduation_rate(&generate_records(&probe, n_probe, probe_seed)?))
    };

    let mut lo = 1e-3;
    let rate_lo = rate_at(lo)?;
    if rate_lo + CALIBRATION_TOL < target_rate {
        return Err(SynthError::Calibration(format!(
            "target rate {target_rate:.3} exceeds the maximum achievable {rate_lo:.3} \
             (dropout and the term length bound it)"
        )));
    }
    let mut hi = spec.difficulty.max(1.0) * 2.0;
    let mut rate_hi = rate_at(hi)?;
    let mut expansions = 0;
    while rate_hi > target_rate && expansions < 24 {
        hi *= 2.0;
        rate_hi = rate_at(hi)?;
        expansions += 1;
    }
    if rate_hi > target_rate + CALIBRATION_TOL {
        return Err(SynthError::Calibration(format!(
            "could not push the rate down to {target_rate:.3}; floor ~{rate_hi:.3}"
        )));
    }

    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let rate = rate_at(mid)?;
        if (rate - target_rate).abs() <= CALIBRATION_TOL {
            let mut out = spec.clone();
            out.difficulty = mid;
            log::info!(
                "calibrated difficulty {mid:.4} for target {target_rate:.3} (probe rate {rate:.3})"
            );
            return Ok(out);
        }
        if rate > target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Err(SynthError::Calibration(format!(
        "bisection exhausted without reaching {target_rate:.3} ± {CALIBRATION_TOL}"
    )))
}
