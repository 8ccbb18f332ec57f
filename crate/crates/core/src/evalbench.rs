//! Desk-scale retrieval benchmark: synthetic fixtures, ingestion under
//! ablation conditions, and recall_any@k scoring.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use chrono::{Duration, TimeZone, Utc};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aaak::{compress, serialize_aaak};
use crate::config::PalaceConfig;
use crate::embed::DistanceMetric;
use crate::error::{PalaceError, Result};
use crate::ingest::{self, exchanges_to_export, ConvoOptions, Exchange};
use crate::palace::Palace;
use crate::search::{SearchMode, SearchRequest};
use crate::text::is_stopword;
use crate::timestamp::format_timestamp;

pub const REPORT_KS: [usize; 3] = [1, 5, 10];
pub const FIXTURE_WINGS: usize = 5;
pub const EXCHANGES_PER_SESSION: usize = 3;
/// Label carried by every report; recall_any is the most lenient recall variant.
pub const METRIC_LABEL: &str = "recall_any (lenient: any top-k session hit counts)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuestion {
    pub question_id: String,
    pub query_text: String,
    pub answer_session_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wing_hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSession {
    pub session_id: String,
    pub exchanges: Vec<Exchange>,
    pub wing: String,
    pub room: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalFixture {
    pub questions: Vec<EvalQuestion>,
    pub sessions: Vec<EvalSession>,
}

impl EvalFixture {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for s in &self.sessions {
            if !ids.insert(s.session_id.as_str()) {
                return Err(PalaceError::Fixture(format!("duplicate session id {}", s.session_id)));
            }
            if s.exchanges.iter().any(|e| e.session_id != s.session_id) {
                return Err(PalaceError::Fixture(format!("session {} holds a foreign exchange", s.session_id)));
            }
        }
        for q in &self.questions {
            if q.answer_session_ids.is_empty() {
                return Err(PalaceError::Fixture(format!("question {} has no answer sessions", q.question_id)));
            }
            if let Some(missing) = q.answer_session_ids.iter().find(|a| !ids.contains(a.as_str())) {
                return Err(PalaceError::Fixture(format!(
                    "question {} references unknown session {missing}",
                    q.question_id
                )));
            }
            if q.query_text.trim().is_empty() {
                return Err(PalaceError::Fixture(format!("question {} has an empty query", q.question_id)));
            }
        }
        Ok(())
    }

    pub fn exchange_count(&self) -> usize {
        self.sessions.iter().map(|s| s.exchanges.len()).sum()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let fixture: EvalFixture = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| PalaceError::Fixture(format!("{}: {e}", path.display())))?;
        fixture.validate()?;
        Ok(fixture)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

const VOCAB: &[&str] = &[
    "budget", "deploy", "garden", "recipe", "travel", "meeting", "invoice", "server", "backup", "kitchen",
    "flight", "hotel", "schedule", "report", "coffee", "bicycle", "laptop", "printer", "contract", "dentist",
    "weekend", "concert", "library", "museum", "insurance", "mortgage", "tomatoes", "painting", "marathon",
    "podcast", "database", "migration", "release", "feedback", "roadmap", "sprint", "vacation", "birthday",
    "groceries", "workout", "playlist", "sandwich", "umbrella", "passport", "password", "network", "keyboard",
    "monitor", "camera", "battery",
];

const ROOMS: &[&str] = &["planning", "errands", "projects", "health", "leisure"];

const USER_TEMPLATES: &[&str] = &[
    "Can you help me sort out the {a} before the {b}?",
    "I keep forgetting about the {a} and the {b}.",
    "What should I do with the {a} this week?",
    "Remind me how the {a} relates to the {b}.",
    "I need a plan for the {a}, the {b} and maybe the {c}.",
];

const ASSISTANT_TEMPLATES: &[&str] = &[
    "Start with the {a}, then handle the {b} once the {c} is settled.",
    "The {a} can wait; the {b} matters more right now.",
    "Write the {a} down next to the {b} so it stays visible.",
    "Group the {a} with the {c} and review both on Friday.",
];

const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    let picks: Vec<&str> = VOCAB.choose_multiple(rng, 3).copied().collect();
    template.replace("{a}", picks[0]).replace("{b}", picks[1]).replace("{c}", picks[2])
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let mut w = String::new();
    for _ in 0..3 {
        w.push(*CONSONANTS.choose(rng).expect("non-empty"));
        w.push(*VOWELS.choose(rng).expect("non-empty"));
    }
    w.push(*CONSONANTS.choose(rng).expect("non-empty"));
    w
}

fn filler_exchange(session_id: &str, turn_index: u32, ts: &str, rng: &mut ChaCha8Rng) -> Exchange {
    Exchange {
        user_turn: fill(USER_TEMPLATES.choose(rng).expect("non-empty"), rng),
        assistant_turn: fill(ASSISTANT_TEMPLATES.choose(rng).expect("non-empty"), rng),
        session_id: session_id.to_string(),
        turn_index,
        ts: Some(ts.to_string()),
    }
}

/// Deterministic fixture: each question's answer session holds a unique
/// two-word keyphrase; distractor sessions reuse the shared vocabulary.
pub fn generate_fixture(n_questions: usize, n_distractor_sessions: usize, seed: u64) -> Result<EvalFixture> {
    if n_questions == 0 {
        return Err(PalaceError::invalid("n_questions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: HashSet<&str> = VOCAB.iter().copied().collect();
    let mut used = HashSet::new();
    let mut keyphrases = Vec::with_capacity(n_questions);
    while keyphrases.len() < n_questions {
        let (a, b) = (pseudo_word(&mut rng), pseudo_word(&mut rng));
        let fresh = |w: &String| !vocab.contains(w.as_str()) && !is_stopword(w) && !used.contains(w);
        if a != b && fresh(&a) && fresh(&b) {
            used.insert(a.clone());
            used.insert(b.clone());
            keyphrases.push(format!("{a} {b}"));
        }
    }

    // Slots 0..n_questions are answer sessions; the shuffle interleaves them
    // with distractors before ids and wings are assigned.
    let total = n_questions + n_distractor_sessions;
    let mut slots: Vec<usize> = (0..total).collect();
    slots.shuffle(&mut rng);

    let base = Utc.with_ymd_and_hms(2024, 1, 1, 9, 0, 0).single().expect("valid base time");
    let mut sessions = Vec::with_capacity(total);
    let mut answer_of = vec![(String::new(), String::new()); n_questions];
    for (pos, &slot) in slots.iter().enumerate() {
        let session_id = format!("s{pos:05}");
        let wing = format!("wing_{}", pos % FIXTURE_WINGS);
        let room = ROOMS.choose(&mut rng).expect("non-empty").to_string();
        let ts = format_timestamp(base + Duration::minutes(pos as i64));
        let mut exchanges: Vec<Exchange> = (0..EXCHANGES_PER_SESSION as u32)
            .map(|i| filler_exchange(&session_id, i, &ts, &mut rng))
            .collect();
        if slot < n_questions {
            let kp = &keyphrases[slot];
            let at = rng.random_range(0..exchanges.len());
            exchanges[at].user_turn = format!("Please remember that the {} is filed under {kp}.", VOCAB.choose(&mut rng).expect("non-empty"));
            exchanges[at].assistant_turn = format!("Got it, {kp} is noted.");
            answer_of[slot] = (session_id.clone(), wing.clone());
        }
        sessions.push(EvalSession {
            session_id,
            exchanges,
            wing,
            room,
        });
    }

    let questions = keyphrases
        .iter()
        .enumerate()
        .map(|(i, kp)| {
            let (sid, wing) = answer_of[i].clone();
            EvalQuestion {
                question_id: format!("q{i:04}"),
                query_text: format!("What did I file under {kp}?"),
                answer_session_ids: vec![sid],
                wing_hint: Some(wing),
            }
        })
        .collect();
    let fixture = EvalFixture { questions, sessions };
    fixture.validate()?;
    Ok(fixture)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Storage {
    #[default]
    Verbatim,
    /// AAAK records are indexed in place of the verbatim text.
    Aaak,
}

/// One cell of the ablation grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub storage: Storage,
    pub scoped: bool,
    pub metric: DistanceMetric,
}

impl Condition {
    pub fn name(&self) -> String {
        let storage = match self.storage {
            Storage::Verbatim => "verbatim",
            Storage::Aaak => "aaak",
        };
        let scope = if self.scoped { "scoped" } else { "unscoped" };
        format!("{storage}/{scope}/{}", self.metric.as_str())
    }

    pub fn grid() -> Vec<Condition> {
        let mut out = Vec::new();
        for storage in [Storage::Verbatim, Storage::Aaak] {
            for scoped in [false, true] {
                for metric in [DistanceMetric::Cosine, DistanceMetric::L2] {
                    out.push(Condition { storage, scoped, metric });
                }
            }
        }
        out
    }
}

/// Creates a palace at `palace_dir` configured for `condition` and mines
/// every fixture session into it.
pub fn ingest_fixture(fixture: &EvalFixture, palace_dir: &Path, condition: &Condition) -> Result<Palace> {
    fixture.validate()?;
    let config = PalaceConfig {
        distance_metric: condition.metric,
        ..PalaceConfig::default()
    };
    let palace = Palace::init(palace_dir, Some(config))?;
    if palace.config().distance_metric != condition.metric {
        return Err(PalaceError::Fixture(format!(
            "existing palace at {} uses a different metric",
            palace_dir.display()
        )));
    }
    let mut items = Vec::with_capacity(fixture.exchange_count());
    for s in &fixture.sessions {
        let opts = ConvoOptions {
            wing: Some(s.wing.clone()),
            room: Some(s.room.clone()),
        };
        let drawers = ingest::mine_conversation(&exchanges_to_export(&s.exchanges), &opts, palace.classifier())?;
        for d in drawers {
            let indexed = match condition.storage {
                Storage::Verbatim => None,
                Storage::Aaak => Some(serialize_aaak(&compress(&d.content))),
            };
            items.push((d, indexed));
        }
    }
    palace.add_drawers(items)?;
    Ok(palace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: String,
    pub mode: SearchMode,
    pub metric_label: String,
    pub questions: usize,
    pub drawer_count: usize,
    /// recall_any@k keyed by k.
    pub recall_any_at_k: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<u64>,
}

impl EvalReport {
    pub fn at(&self, k: usize) -> Option<f64> {
        self.recall_any_at_k.get(&k).copied()
    }
}

/// Scores recall_any at 1, 5, 10 and `k`. Each question is searched once
/// with the largest k and the shorter cutoffs are read off that ranking.
pub fn score_recall_any(
    palace: &Palace,
    fixture: &EvalFixture,
    k: usize,
    scoped: bool,
    mode: SearchMode,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(PalaceError::invalid("k must be at least 1"));
    }
    fixture.validate()?;
    let ks: BTreeSet<usize> = REPORT_KS.iter().copied().chain([k]).collect();
    let depth = *ks.last().expect("non-empty");

    // First rank (0-based) at which an answer session appears, per question.
    let first_hits = fixture
        .questions
        .par_iter()
        .map(|q| {
            let req = SearchRequest {
                wing: if scoped { q.wing_hint.clone() } else { None },
                n_results: depth,
                mode,
                ..SearchRequest::new(q.query_text.clone())
            };
            let results = palace.search(&req)?;
            Ok(results
                .iter()
                .position(|r| r.session_id.as_ref().is_some_and(|sid| q.answer_session_ids.contains(sid))))
        })
        .collect::<Result<Vec<Option<usize>>>>()?;

    let n = fixture.questions.len().max(1) as f64;
    let recall_any_at_k = ks
        .iter()
        .map(|&k| {
            let hits = first_hits.iter().filter(|h| h.is_some_and(|r| r < k)).count();
            (k, hits as f64 / n)
        })
        .collect();
    Ok(EvalReport {
        condition: String::new(),
        mode,
        metric_label: METRIC_LABEL.to_string(),
        questions: fixture.questions.len(),
        drawer_count: palace.drawer_count()?,
        recall_any_at_k,
        runtime_ms: None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub k: usize,
    pub mode: SearchMode,
    pub rows: Vec<EvalReport>,
    /// recall_any@k per condition name.
    pub breakdown: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<u64>,
}

impl AblationTable {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    /// Aligned-column rendering for terminals.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let width = self.rows.iter().map(|r| r.condition.len()).max().unwrap_or(9).max(9);
        let _ = write!(out, "{:<width$}  {:>7}", "condition", "drawers");
        for k in REPORT_KS {
            let _ = write!(out, "  {:>8}", format!("R@{k}"));
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<width$}  {:>7}", r.condition, r.drawer_count);
            for k in REPORT_KS {
                let _ = write!(out, "  {:>8.4}", r.at(k).unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "metric: {METRIC_LABEL}; mode: {}", self.mode);
        for c in &self.checks {
            let _ = writeln!(out, "{} {}", if c.holds { "ok  " } else { "FAIL" }, c.name);
        }
        out
    }
}

/// Runs every condition of [`Condition::grid`] on fresh palaces under
/// `work_dir` and checks the expected directions between them.
pub fn run_ablations(
    fixture: &EvalFixture,
    work_dir: &Path,
    k: usize,
    mode: SearchMode,
    timing: bool,
) -> Result<AblationTable> {
    fixture.validate()?;
    let started = Instant::now();
    let expected_drawers = fixture.exchange_count();

    // Scope only changes scoring, so one palace serves both scope settings.
    let ingest_keys: Vec<Condition> = Condition::grid().into_iter().filter(|c| !c.scoped).collect();
    let palaces = ingest_keys
        .par_iter()
        .map(|c| {
            let dir = work_dir.join(c.name().replace('/', "_"));
            if dir.exists() {
                std::fs::remove_dir_all(&dir)?;
            }
            let palace = ingest_fixture(fixture, &dir, c)?;
            let count = palace.drawer_count()?;
            if count != expected_drawers {
                return Err(PalaceError::Fixture(format!(
                    "condition {} holds {count} drawers, expected {expected_drawers}",
                    c.name()
                )));
            }
            Ok((c.storage, c.metric, palace))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for cond in Condition::grid() {
        let t = Instant::now();
        let (_, _, palace) = palaces
            .iter()
            .find(|(s, m, _)| *s == cond.storage && *m == cond.metric)
            .expect("palace for every storage/metric pair");
        let mut report = score_recall_any(palace, fixture, k, cond.scoped, mode)?;
        report.condition = cond.name();
        report.runtime_ms = timing.then(|| t.elapsed().as_millis() as u64);
        rows.push(report);
    }

    let breakdown: BTreeMap<String, f64> = rows.iter().map(|r| (r.condition.clone(), r.at(k).unwrap_or(0.0))).collect();
    let score = |storage, scoped, metric| {
        breakdown[&Condition { storage, scoped, metric }.name()]
    };
    let mut checks = Vec::new();
    for storage in [Storage::Verbatim, Storage::Aaak] {
        for scoped in [false, true] {
            let c = score(storage, scoped, DistanceMetric::Cosine);
            let l = score(storage, scoped, DistanceMetric::L2);
            checks.push(Check {
                name: format!("{} cosine == l2", Condition { storage, scoped, metric: DistanceMetric::Cosine }.name()),
                holds: c == l,
            });
        }
    }
    for metric in [DistanceMetric::Cosine, DistanceMetric::L2] {
        for scoped in [false, true] {
            checks.push(Check {
                name: format!("aaak <= verbatim ({}/{})", if scoped { "scoped" } else { "unscoped" }, metric.as_str()),
                holds: score(Storage::Aaak, scoped, metric) <= score(Storage::Verbatim, scoped, metric),
            });
        }
        for storage in [Storage::Verbatim, Storage::Aaak] {
            checks.push(Check {
                name: format!("scoped >= unscoped ({}/{})", if storage == Storage::Aaak { "aaak" } else { "verbatim" }, metric.as_str()),
                holds: score(storage, true, metric) >= score(storage, false, metric),
            });
        }
    }
    for r in &rows {
        let monotone = r.recall_any_at_k.values().collect::<Vec<_>>().windows(2).all(|w| w[0] <= w[1]);
        checks.push(Check {
            name: format!("{} monotone in k", r.condition),
            holds: monotone,
        });
    }

    Ok(AblationTable {
        k,
        mode,
        rows,
        breakdown,
        checks,
        runtime_ms: timing.then(|| started.elapsed().as_millis() as u64),
    })
}
