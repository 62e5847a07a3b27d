//! Synthetic event-log generation for tests, demos, and baselines.
//!
//! Two families are supported: Markov chains with an explicit row-stochastic
//! transition matrix, and deterministic grammars with known optimal
//! predictors (useful as training oracles).

use std::collections::BTreeMap;

use chrono::{Duration, TimeZone, Utc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eventlog::{Event, EventLog, LogSchema, Trace};

/// Deterministic grammar identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrammarId {
    /// `[S_i, T_i, T_i, ...]`: the start symbol fixes the repeated tail, so
    /// every next activity is a function of the first event.
    FirstSymbolRepeat,
    /// `[S_i, F, F, ..., F, E_i]`: shared filler in the middle, final symbol
    /// determined by the first event only. Separates full-history windows
    /// from short fixed windows.
    LongRange,
}

impl GrammarId {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "first-symbol-repeat" => Some(GrammarId::FirstSymbolRepeat),
            "long-range" => Some(GrammarId::LongRange),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GrammarId::FirstSymbolRepeat => "first-symbol-repeat",
            GrammarId::LongRange => "long-range",
        }
    }
}

/// Trace generator: a Markov chain or a deterministic grammar.
#[derive(Clone, Debug, PartialEq)]
pub enum LogModel {
    Markov {
        /// Row-stochastic matrix; dimension is the alphabet size.
        transition: Vec<Vec<f64>>,
        /// Initial state distribution; uniform when absent.
        initial: Option<Vec<f64>>,
    },
    Grammar(GrammarId),
}

impl LogModel {
    /// Chain with uniform rows over `n` states.
    pub fn uniform_chain(n: usize) -> Self {
        LogModel::Markov {
            transition: vec![vec![1.0 / n as f64; n]; n],
            initial: None,
        }
    }

    /// Single-state self-loop: one observed transition pair, zero entropy.
    pub fn deterministic_chain() -> Self {
        LogModel::Markov {
            transition: vec![vec![1.0]],
            initial: None,
        }
    }
}

/// Trace length distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LengthDist {
    Fixed(usize),
    /// Inclusive bounds.
    Uniform(usize, usize),
}

impl LengthDist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match *self {
            LengthDist::Fixed(n) => n,
            LengthDist::Uniform(lo, hi) => rng.random_range(lo..=hi),
        }
    }

    fn min(&self) -> usize {
        match *self {
            LengthDist::Fixed(n) => n,
            LengthDist::Uniform(lo, _) => lo,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticLogSpec {
    /// Alphabet size: states for Markov chains, start-symbol count for
    /// grammars.
    pub alphabet: usize,
    pub model: LogModel,
    pub traces: usize,
    pub lengths: LengthDist,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// Build a trace from plain activity labels with synthetic timestamps.
pub fn trace_from_activities(case_id: &str, activities: &[&str]) -> Trace {
    let base = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    Trace {
        case_id: case_id.to_string(),
        events: activities
            .iter()
            .enumerate()
            .map(|(i, activity)| Event {
                case_id: case_id.to_string(),
                activity: activity.to_string(),
                timestamp: base + Duration::seconds(i as i64 * 60),
                extras: BTreeMap::new(),
            })
            .collect(),
    }
}

/// Generate a log from the spec; deterministic given the seed.
pub fn generate_synthetic_log(spec: &SyntheticLogSpec) -> Result<EventLog, SynthError> {
    if spec.traces == 0 {
        return Err(SynthError::InvalidSpec(
            "trace count must be positive".into(),
        ));
    }
    if spec.alphabet == 0 {
        return Err(SynthError::InvalidSpec("alphabet must be non-empty".into()));
    }
    match &spec.model {
        LogModel::Markov {
            transition,
            initial,
        } => {
            if transition.len() != spec.alphabet {
                return Err(SynthError::InvalidSpec(format!(
                    "transition matrix has {} rows for alphabet {}",
                    transition.len(),
                    spec.alphabet
                )));
            }
            for (i, row) in transition.iter().enumerate() {
                if row.len() != spec.alphabet {
                    return Err(SynthError::InvalidSpec(format!("row {i} has wrong width")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                    return Err(SynthError::InvalidSpec(format!(
                        "row {i} is not a probability distribution (sum {sum})"
                    )));
                }
            }
            if let Some(init) = initial {
                let sum: f64 = init.iter().sum();
                if init.len() != spec.alphabet || (sum - 1.0).abs() > 1e-9 {
                    return Err(SynthError::InvalidSpec(
                        "initial distribution does not match the alphabet".into(),
                    ));
                }
            }
            if spec.lengths.min() < 1 {
                return Err(SynthError::InvalidSpec("trace length must be >= 1".into()));
            }
        }
        LogModel::Grammar(GrammarId::FirstSymbolRepeat) => {
            if spec.lengths.min() < 2 {
                return Err(SynthError::InvalidSpec(
                    "first-symbol-repeat needs traces of length >= 2".into(),
                ));
            }
        }
        LogModel::Grammar(GrammarId::LongRange) => {
            if spec.lengths.min() < 3 {
                return Err(SynthError::InvalidSpec(
                    "long-range needs traces of length >= 3".into(),
                ));
            }
            if spec.alphabet < 2 {
                return Err(SynthError::InvalidSpec(
                    "long-range needs at least 2 start symbols".into(),
                ));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let width = (spec.traces.max(2) - 1).to_string().len();
    let mut traces = Vec::with_capacity(spec.traces);
    for t in 0..spec.traces {
        let length = spec.lengths.sample(&mut rng);
        let activities = match &spec.model {
            LogModel::Markov {
                transition,
                initial,
            } => sample_chain(
                spec.alphabet,
                transition,
                initial.as_deref(),
                length,
                &mut rng,
            ),
            LogModel::Grammar(GrammarId::FirstSymbolRepeat) => {
                let start = rng.random_range(0..spec.alphabet);
                let mut acts = vec![format!("S{start}")];
                acts.extend(std::iter::repeat_n(format!("T{start}"), length - 1));
                acts
            }
            LogModel::Grammar(GrammarId::LongRange) => {
                let start = rng.random_range(0..spec.alphabet);
                let mut acts = vec![format!("S{start}")];
                acts.extend(std::iter::repeat_n("F".to_string(), length - 2));
                acts.push(format!("E{start}"));
                acts
            }
        };
        let case_id = format!("case-{t:0width$}");
        let trace_base = base + Duration::seconds(t as i64 * 3600);
        let events = activities
            .into_iter()
            .enumerate()
            .map(|(i, activity)| Event {
                case_id: case_id.clone(),
                activity,
                // Strictly increasing inside each trace.
                timestamp: trace_base + Duration::seconds(i as i64 * 60),
                extras: BTreeMap::new(),
            })
            .collect();
        traces.push(Trace { case_id, events });
    }

    Ok(EventLog {
        traces,
        schema: LogSchema {
            case_column: "case_id".to_string(),
            activity_column: "activity".to_string(),
            timestamp_column: "timestamp".to_string(),
            extra_columns: vec![],
        },
        source: "synthetic".to_string(),
    })
}

fn sample_chain(
    alphabet: usize,
    transition: &[Vec<f64>],
    initial: Option<&[f64]>,
    length: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let width = (alphabet.max(2) - 1).to_string().len();
    let mut state = match initial {
        Some(dist) => sample_index(dist, rng),
        None => rng.random_range(0..alphabet),
    };
    let mut acts = Vec::with_capacity(length);
    acts.push(format!("a{state:0width$}"));
    for _ in 1..length {
        state = sample_index(&transition[state], rng);
        acts.push(format!("a{state:0width$}"));
    }
    acts
}

fn sample_index(dist: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let x: f64 = rng.random();
    let mut cumulative = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        cumulative += p;
        if x < cumulative {
            return i;
        }
    }
    dist.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{count_transitions, process_entropy, LogBase};

    #[test]
    fn deterministic_self_loop_has_zero_entropy() {
        let spec = SyntheticLogSpec {
            alphabet: 1,
            model: LogModel::deterministic_chain(),
            traces: 10,
            lengths: LengthDist::Fixed(5),
            seed: 1,
        };
        let log = generate_synthetic_log(&spec).unwrap();
        let model = count_transitions(&log).unwrap();
        let report = process_entropy(&model, LogBase::Two).unwrap();
        assert_eq!(report.entropy, 0.0);
    }

    #[test]
    fn uniform_two_state_chain_approaches_two_bits() {
        let spec = SyntheticLogSpec {
            alphabet: 2,
            model: LogModel::uniform_chain(2),
            traces: 200,
            lengths: LengthDist::Fixed(21),
            seed: 7,
        };
        let log = generate_synthetic_log(&spec).unwrap();
        let model = count_transitions(&log).unwrap();
        assert_eq!(model.counts.len(), 4);
        let report = process_entropy(&model, LogBase::Two).unwrap();
        // 4000 transitions drawn from the uniform pair distribution.
        assert!(
            (report.entropy - 2.0).abs() < 0.02,
            "H = {}",
            report.entropy
        );
    }

    #[test]
    fn same_seed_reproduces_the_log() {
        let spec = SyntheticLogSpec {
            alphabet: 3,
            model: LogModel::uniform_chain(3),
            traces: 25,
            lengths: LengthDist::Uniform(2, 9),
            seed: 42,
        };
        let a = generate_synthetic_log(&spec).unwrap();
        let b = generate_synthetic_log(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grammar_traces_follow_their_rules() {
        let spec = SyntheticLogSpec {
            alphabet: 3,
            model: LogModel::Grammar(GrammarId::FirstSymbolRepeat),
            traces: 20,
            lengths: LengthDist::Fixed(6),
            seed: 3,
        };
        let log = generate_synthetic_log(&spec).unwrap();
        for trace in &log.traces {
            let first = &trace.events[0].activity;
            let tail = first.replace('S', "T");
            assert!(trace.events.iter().skip(1).all(|e| e.activity == tail));
        }

        let spec = SyntheticLogSpec {
            alphabet: 2,
            model: LogModel::Grammar(GrammarId::LongRange),
            traces: 20,
            lengths: LengthDist::Fixed(8),
            seed: 3,
        };
        let log = generate_synthetic_log(&spec).unwrap();
        for trace in &log.traces {
            let first = &trace.events[0].activity;
            let last = &trace.events.last().unwrap().activity;
            assert_eq!(*last, first.replace('S', "E"));
            assert!(trace
                .events
                .iter()
                .skip(1)
                .take(trace.len() - 2)
                .all(|e| e.activity == "F"));
        }
    }

    #[test]
    fn bad_transition_rows_are_rejected() {
        let spec = SyntheticLogSpec {
            alphabet: 2,
            model: LogModel::Markov {
                transition: vec![vec![0.7, 0.7], vec![0.5, 0.5]],
                initial: None,
            },
            traces: 5,
            lengths: LengthDist::Fixed(3),
            seed: 0,
        };
        assert!(matches!(
            generate_synthetic_log(&spec),
            Err(SynthError::InvalidSpec(_))
        ));
    }

    #[test]
    fn timestamps_strictly_increase_within_traces() {
        let spec = SyntheticLogSpec {
            alphabet: 2,
            model: LogModel::uniform_chain(2),
            traces: 5,
            lengths: LengthDist::Fixed(10),
            seed: 11,
        };
        let log = generate_synthetic_log(&spec).unwrap();
        for trace in &log.traces {
            for pair in trace.events.windows(2) {
                assert!(pair[0].timestamp < pair[1].timestamp);
            }
        }
    }
}
