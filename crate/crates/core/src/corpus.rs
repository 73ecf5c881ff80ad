//! Canonical data types and serialized schemas shared by every stage:
//! utterances, skills, invocation patterns, weak samples, user profiles and
//! dataset splits.
//!
//! Files are JSON lines, UTF-8, one record per line, with a schema header
//! line such as `{"schema":"log/v1"}` so consumers can fail fast on the
//! wrong file kind.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::SplitMix64;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("log is empty")]
    EmptyLog,
    #[error("need at least 3 distinct users to split, got {0}")]
    TooFewUsers(usize),
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
}

/// Lowercases, strips punctuation except intra-word apostrophes, splits on
/// whitespace. The fixed normalization makes the minimum-token noise filter
/// unambiguous.
pub fn normalize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut cleaned = String::with_capacity(lower.len());
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cleaned.push(c);
        } else if c == '\''
            && i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_alphanumeric()
            && chars[i + 1].is_alphanumeric()
        {
            cleaned.push(c);
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// One raw log line. `tokens` is always the normalization of `text`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "UtteranceWire", into = "UtteranceWire")]
pub struct Utterance {
    pub user_id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub timestamp: i64,
}

#[derive(Serialize, Deserialize)]
struct UtteranceWire {
    user_id: String,
    text: String,
    timestamp: i64,
}

impl From<UtteranceWire> for Utterance {
    fn from(w: UtteranceWire) -> Self {
        let tokens = normalize(&w.text);
        Utterance {
            user_id: w.user_id,
            text: w.text,
            tokens,
            timestamp: w.timestamp,
        }
    }
}

impl From<Utterance> for UtteranceWire {
    fn from(u: Utterance) -> Self {
        UtteranceWire {
            user_id: u.user_id,
            text: u.text,
            timestamp: u.timestamp,
        }
    }
}

impl Utterance {
    pub fn new(user_id: &str, text: &str, timestamp: i64) -> Self {
        Utterance {
            user_id: user_id.to_string(),
            text: text.to_string(),
            tokens: normalize(text),
            timestamp,
        }
    }
}

/// A skill (domain): the classification label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    pub skill_id: String,
    pub aliases: Vec<String>,
    #[serde(default)]
    pub catch_all_pattern_ids: BTreeSet<String>,
    #[serde(default)]
    pub category: String,
}

/// A rigid invocation template with exactly one `{skill}` and one
/// `{command}` slot, e.g. `ask {skill} to {command}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPattern {
    pub pattern_id: String,
    pub template: String,
}

impl QueryPattern {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let skill_slots = self.template.matches("{skill}").count();
        let command_slots = self.template.matches("{command}").count();
        if skill_slots != 1 || command_slots != 1 {
            return Err(CorpusError::Invalid(format!(
                "pattern {} must contain exactly one {{skill}} and one {{command}} slot",
                self.pattern_id
            )));
        }
        Ok(())
    }
}

/// A latent command extracted from pattern matches, its target skill, the
/// pattern that produced it and how often it occurred.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeakSample {
    pub command_tokens: Vec<String>,
    pub skill_id: String,
    pub pattern_id: String,
    pub count: u64,
}

impl WeakSample {
    pub fn command_text(&self) -> String {
        self.command_tokens.join(" ")
    }
}

/// A user and the ordered list of skills they enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub enabled: Vec<String>,
}

impl UserProfile {
    pub fn validate(&self, registry: &SkillRegistry) -> Result<(), CorpusError> {
        let mut seen = BTreeSet::new();
        for id in &self.enabled {
            if !seen.insert(id) {
                return Err(CorpusError::Invalid(format!(
                    "profile {} enables {} twice",
                    self.user_id, id
                )));
            }
            if !registry.contains(id) {
                return Err(CorpusError::Invalid(format!(
                    "profile {} enables unknown skill {}",
                    self.user_id, id
                )));
            }
        }
        Ok(())
    }
}

/// The universe of skills plus the shared-intent phrase list, with an alias
/// index for pattern matching.
#[derive(Debug, Clone)]
pub struct SkillRegistry {
    skills: Vec<Skill>,
    by_id: BTreeMap<String, usize>,
    /// normalized alias text -> skill index; keys are space-joined tokens.
    alias_index: HashMap<String, usize>,
    max_alias_tokens: usize,
    pub shared_intents: BTreeSet<String>,
}

impl SkillRegistry {
    pub fn new(
        mut skills: Vec<Skill>,
        shared_intents: BTreeSet<String>,
    ) -> Result<Self, CorpusError> {
        skills.sort_by(|a, b| a.skill_id.cmp(&b.skill_id));
        let mut by_id = BTreeMap::new();
        let mut alias_index = HashMap::new();
        let mut max_alias_tokens = 1;
        for (i, s) in skills.iter().enumerate() {
            if s.aliases.is_empty() {
                return Err(CorpusError::Invalid(format!(
                    "skill {} has no aliases",
                    s.skill_id
                )));
            }
            if by_id.insert(s.skill_id.clone(), i).is_some() {
                return Err(CorpusError::Invalid(format!(
                    "duplicate skill id {}",
                    s.skill_id
                )));
            }
            for alias in &s.aliases {
                let tokens = normalize(alias);
                if tokens.is_empty() {
                    return Err(CorpusError::Invalid(format!(
                        "skill {} has an empty alias",
                        s.skill_id
                    )));
                }
                max_alias_tokens = max_alias_tokens.max(tokens.len());
                let key = tokens.join(" ");
                if let Some(prev) = alias_index.insert(key.clone(), i) {
                    if prev != i {
                        return Err(CorpusError::Invalid(format!(
                            "alias '{key}' is ambiguous between {} and {}",
                            skills[prev].skill_id, s.skill_id
                        )));
                    }
                }
            }
        }
        Ok(SkillRegistry {
            skills,
            by_id,
            alias_index,
            max_alias_tokens,
            shared_intents,
        })
    }

    pub fn skills(&self) -> &[Skill] {
        &self.skills
    }

    /// Skill ids in lexicographic order; this order also defines head
    /// indexing in checkpoints.
    pub fn skill_ids(&self) -> Vec<String> {
        self.skills.iter().map(|s| s.skill_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn contains(&self, skill_id: &str) -> bool {
        self.by_id.contains_key(skill_id)
    }

    pub fn get(&self, skill_id: &str) -> Option<&Skill> {
        self.by_id.get(skill_id).map(|&i| &self.skills[i])
    }

    pub fn max_alias_tokens(&self) -> usize {
        self.max_alias_tokens
    }

    /// Exact alias lookup over already-normalized tokens.
    pub fn skill_for_alias(&self, alias_tokens: &[String]) -> Option<&Skill> {
        let key = alias_tokens.join(" ");
        self.alias_index.get(&key).map(|&i| &self.skills[i])
    }

    pub fn is_catch_all(&self, skill_id: &str, pattern_id: &str) -> bool {
        self.get(skill_id)
            .map(|s| s.catch_all_pattern_ids.contains(pattern_id))
            .unwrap_or(false)
    }
}

/// Utterance-level user/time split; weak samples are derived per split
/// downstream so labels never cross the user boundary.
#[derive(Debug, Clone)]
pub struct LogSplit {
    pub train: Vec<Utterance>,
    pub validation: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub train_users: BTreeSet<String>,
    pub validation_users: BTreeSet<String>,
    pub test_users: BTreeSet<String>,
}

/// Weak-sample dataset split. The unit is one (sample, user) pair; `count`
/// inside each sample is the user's occurrence count within their window.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<(WeakSample, String)>,
    pub validation: Vec<(WeakSample, String)>,
    pub test: Vec<(WeakSample, String)>,
    pub split_policy: String,
}

impl DatasetSplit {
    /// Checks user-set disjointness across the three splits.
    pub fn check_disjoint(&self) -> Result<(), CorpusError> {
        let users = |part: &[(WeakSample, String)]| -> BTreeSet<String> {
            part.iter().map(|(_, u)| u.clone()).collect()
        };
        let (a, b, c) = (users(&self.train), users(&self.validation), users(&self.test));
        if a.intersection(&b).next().is_some()
            || a.intersection(&c).next().is_some()
            || b.intersection(&c).next().is_some()
        {
            return Err(CorpusError::Invalid(
                "dataset split user sets overlap".into(),
            ));
        }
        Ok(())
    }
}

/// Splits a log so that each user lands in exactly one of train/validation/
/// test, with user counts matching the ratios to within one user, and the
/// three time windows in strictly non-decreasing order.
pub fn split_by_user_time(
    log: &[Utterance],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<LogSplit, CorpusError> {
    if log.is_empty() {
        return Err(CorpusError::EmptyLog);
    }
    let (r1, r2, r3) = ratios;
    if r1 <= 0.0 || r2 <= 0.0 || r3 <= 0.0 || (r1 + r2 + r3 - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    let mut users: Vec<String> = log
        .iter()
        .map(|u| u.user_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if users.len() < 3 {
        return Err(CorpusError::TooFewUsers(users.len()));
    }
    let mut rng = SplitMix64::derive(seed, "user-split");
    rng.shuffle(&mut users);
    let n = users.len();
    let n1 = ((r1 * n as f64).round() as usize).clamp(1, n - 2);
    let n2 = (((r1 + r2) * n as f64).round() as usize - n1).clamp(1, n - n1 - 1);
    let train_users: BTreeSet<String> = users[..n1].iter().cloned().collect();
    let validation_users: BTreeSet<String> = users[n1..n1 + n2].iter().cloned().collect();
    let test_users: BTreeSet<String> = users[n1 + n2..].iter().cloned().collect();

    let mut timestamps: Vec<i64> = log.iter().map(|u| u.timestamp).collect();
    timestamps.sort_unstable();
    let quantile = |r: f64| -> i64 {
        let idx = ((r * timestamps.len() as f64) as usize).min(timestamps.len() - 1);
        timestamps[idx]
    };
    let t1 = quantile(r1);
    let t2 = quantile(r1 + r2);

    let mut split = LogSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        train_users,
        validation_users,
        test_users,
    };
    for u in log {
        if split.train_users.contains(&u.user_id) && u.timestamp < t1 {
            split.train.push(u.clone());
        } else if split.validation_users.contains(&u.user_id)
            && u.timestamp >= t1
            && u.timestamp < t2
        {
            split.validation.push(u.clone());
        } else if split.test_users.contains(&u.user_id) && u.timestamp >= t2 {
            split.test.push(u.clone());
        }
    }
    Ok(split)
}

// ---------------------------------------------------------------------------
// JSON-lines IO

fn header_line(schema: &str, provenance: Option<&serde_json::Value>) -> String {
    match provenance {
        Some(p) => format!(
            "{}",
            serde_json::json!({ "schema": schema, "provenance": p })
        ),
        None => format!("{}", serde_json::json!({ "schema": schema })),
    }
}

/// Writes a schema header line followed by one JSON record per line.
pub fn write_jsonl<T: Serialize, P: AsRef<Path>>(
    path: P,
    schema: &str,
    provenance: Option<&serde_json::Value>,
    records: impl IntoIterator<Item = T>,
) -> Result<(), CorpusError> {
    let path_str = path.as_ref().display().to_string();
    let io_err = |source| CorpusError::Io {
        path: path_str.clone(),
        source,
    };
    let file = File::create(path.as_ref()).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", header_line(schema, provenance)).map_err(io_err)?;
    for r in records {
        let line = serde_json::to_string(&r)
            .map_err(|e| CorpusError::Invalid(format!("serialize failure: {e}")))?;
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

#[derive(Deserialize)]
struct Header {
    schema: String,
    #[serde(default)]
    #[allow(dead_code)]
    provenance: Option<serde_json::Value>,
}

/// Reads a JSONL file, validating the schema header; errors carry file and
/// line number.
pub fn read_jsonl<T: DeserializeOwned, P: AsRef<Path>>(
    path: P,
    schema: &str,
) -> Result<Vec<T>, CorpusError> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|source| CorpusError::Io {
        path: path_str.clone(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path_str.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            let header: Header =
                serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
                    path: path_str.clone(),
                    line: 1,
                    message: format!("bad header: {e}"),
                })?;
            if header.schema != schema {
                return Err(CorpusError::Schema {
                    path: path_str.clone(),
                    line: 1,
                    message: format!("expected schema {schema}, found {}", header.schema),
                });
            }
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            path: path_str.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Reads `shared_intents.txt`: one normalized phrase per line, `#` comments
/// and blank lines skipped.
pub fn read_shared_intents<P: AsRef<Path>>(path: P) -> Result<BTreeSet<String>, CorpusError> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|source| CorpusError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut intents = BTreeSet::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path_str.clone(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        intents.insert(normalize(trimmed).join(" "));
    }
    Ok(intents)
}

pub fn write_shared_intents<P: AsRef<Path>>(
    path: P,
    intents: &BTreeSet<String>,
) -> Result<(), CorpusError> {
    let path_str = path.as_ref().display().to_string();
    let mut out = String::new();
    for i in intents {
        out.push_str(i);
        out.push('\n');
    }
    std::fs::write(path.as_ref(), out).map_err(|source| CorpusError::Io {
        path: path_str,
        source,
    })
}

pub mod schema {
    pub const LOG: &str = "log/v1";
    pub const SKILLS: &str = "skills/v1";
    pub const PATTERNS: &str = "patterns/v1";
    pub const WEAK: &str = "weak/v1";
    pub const PROFILES: &str = "profiles/v1";
    pub const GROUND_TRUTH: &str = "ground_truth/v1";
    pub const METRICS: &str = "metrics/v1";
    pub const SUGGESTIONS: &str = "suggestions/v1";
    pub const PARAPHRASE: &str = "paraphrase/v1";
}
