//! Weakly supervised training-data generation.
//!
//! Candidate generators recognize rigid invocation patterns in a raw log and
//! emit (latent command, target skill) pairs; noise detectors then discard
//! candidates that are unlikely to be well-formed commands. The end result
//! keeps `call me a cab` from `ask uber to call me a cab` and drops `boston`
//! from `ask accuweather for boston`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    normalize, CorpusError, QueryPattern, SkillRegistry, Utterance, WeakSample,
};

/// A generator hit: the extracted weak sample plus the utterance it came
/// from. `count` on the inner sample is 1 until aggregation.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub weak: WeakSample,
    pub source_utterance: Utterance,
}

/// How the catch-all detector decides that a (skill, pattern) source is
/// overly broad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CatchAllPolicy {
    /// Trust only registry flags (mirrors SDK knowledge of broad patterns).
    RegistryFlag,
    /// Registry flags plus a volume heuristic: discard a skill's samples
    /// from a pattern that carries more than `share_threshold` of the
    /// skill's distinct commands AND more than 100x the skill's median
    /// per-pattern distinct-command count.
    Heuristic { share_threshold: f64 },
}

/// Noise-detector parameters. Defaults follow the pipeline description:
/// commands shorter than 3 tokens and strings seen fewer than 2 times are
/// noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_tokens: usize,
    pub min_count: u64,
    pub catch_all_policy: CatchAllPolicy,
    pub shared_intents: BTreeSet<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_tokens: 3,
            min_count: 2,
            catch_all_policy: CatchAllPolicy::RegistryFlag,
            shared_intents: BTreeSet::new(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.min_tokens < 1 || self.min_count < 1 {
            return Err(CorpusError::Invalid(
                "min_tokens and min_count must be >= 1".into(),
            ));
        }
        if let CatchAllPolicy::Heuristic { share_threshold } = self.catch_all_policy {
            if !(share_threshold > 0.0 && share_threshold <= 1.0) {
                return Err(CorpusError::Invalid(format!(
                    "catch-all share threshold must be in (0, 1], got {share_threshold}"
                )));
            }
        }
        Ok(())
    }
}

/// Compiled template: literal token runs around the two slots.
#[derive(Debug, Clone)]
struct CompiledPattern {
    pattern_id: String,
    pre: Vec<String>,
    mid: Vec<String>,
    post: Vec<String>,
    skill_first: bool,
}

fn compile(pattern: &QueryPattern) -> Result<CompiledPattern, CorpusError> {
    pattern.validate()?;
    let mut pre = Vec::new();
    let mut mid = Vec::new();
    let mut post = Vec::new();
    let mut seen_slots = 0u8;
    let mut skill_first = true;
    for raw in pattern.template.split_whitespace() {
        if raw == "{skill}" || raw == "{command}" {
            if seen_slots == 0 {
                skill_first = raw == "{skill}";
            }
            seen_slots += 1;
            continue;
        }
        let toks = normalize(raw);
        let target = match seen_slots {
            0 => &mut pre,
            1 => &mut mid,
            _ => &mut post,
        };
        target.extend(toks);
    }
    if seen_slots != 2 {
        return Err(CorpusError::Invalid(format!(
            "pattern {} slots must appear as standalone tokens",
            pattern.pattern_id
        )));
    }
    Ok(CompiledPattern {
        pattern_id: pattern.pattern_id.clone(),
        pre,
        mid,
        post,
        skill_first,
    })
}

fn starts_with(tokens: &[String], prefix: &[String]) -> bool {
    tokens.len() >= prefix.len() && tokens[..prefix.len()] == *prefix
}

fn ends_with(tokens: &[String], suffix: &[String]) -> bool {
    tokens.len() >= suffix.len() && tokens[tokens.len() - suffix.len()..] == *suffix
}

impl CompiledPattern {
    /// Binds the skill slot against registry aliases (longest alias wins)
    /// and the command slot against the remaining tokens (at least one).
    fn try_match<'r>(
        &self,
        tokens: &[String],
        registry: &'r SkillRegistry,
    ) -> Option<(&'r str, Vec<String>)> {
        if !starts_with(tokens, &self.pre) || !ends_with(tokens, &self.post) {
            return None;
        }
        let inner = &tokens[self.pre.len()..tokens.len() - self.post.len()];
        let max_alias = registry.max_alias_tokens();
        if self.skill_first {
            // inner = [alias][mid][command...]
            for alias_len in (1..=max_alias.min(inner.len())).rev() {
                let alias = &inner[..alias_len];
                let Some(skill) = registry.skill_for_alias(alias) else {
                    continue;
                };
                let rest = &inner[alias_len..];
                if starts_with(rest, &self.mid) && rest.len() > self.mid.len() {
                    return Some((&skill.skill_id, rest[self.mid.len()..].to_vec()));
                }
            }
        } else {
            // inner = [command...][mid][alias]
            for alias_len in (1..=max_alias.min(inner.len())).rev() {
                let alias = &inner[inner.len() - alias_len..];
                let Some(skill) = registry.skill_for_alias(alias) else {
                    continue;
                };
                let rest = &inner[..inner.len() - alias_len];
                if ends_with(rest, &self.mid) && rest.len() > self.mid.len() {
                    return Some((
                        &skill.skill_id,
                        rest[..rest.len() - self.mid.len()].to_vec(),
                    ));
                }
            }
        }
        None
    }
}

/// Recognizes the first matching invocation pattern in an utterance and
/// extracts the (command, skill, pattern) triple. Returns `None` when no
/// template matches.
pub fn match_pattern(
    utterance: &Utterance,
    patterns: &[QueryPattern],
    registry: &SkillRegistry,
) -> Result<Option<Candidate>, CorpusError> {
    for p in patterns {
        let compiled = compile(p)?;
        if let Some((skill_id, command_tokens)) = compiled.try_match(&utterance.tokens, registry) {
            return Ok(Some(Candidate {
                weak: WeakSample {
                    command_tokens,
                    skill_id: skill_id.to_string(),
                    pattern_id: p.pattern_id.clone(),
                    count: 1,
                },
                source_utterance: utterance.clone(),
            }));
        }
    }
    Ok(None)
}

/// Runs pattern recognition over the log and aggregates counts per distinct
/// (command, skill, pattern). Aggregation across patterns is what encodes
/// the pattern-independence approximation: the same latent command counts
/// the same whichever template carried it.
pub fn generate_candidates(
    log: &[Utterance],
    patterns: &[QueryPattern],
    registry: &SkillRegistry,
) -> Result<Vec<WeakSample>, CorpusError> {
    let compiled: Vec<CompiledPattern> =
        patterns.iter().map(compile).collect::<Result<_, _>>()?;
    let mut counts: BTreeMap<(Vec<String>, String, String), u64> = BTreeMap::new();
    for u in log {
        for c in &compiled {
            if let Some((skill_id, command)) = c.try_match(&u.tokens, registry) {
                *counts
                    .entry((command, skill_id.to_string(), c.pattern_id.clone()))
                    .or_insert(0) += 1;
                break;
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|((command_tokens, skill_id, pattern_id), count)| WeakSample {
            command_tokens,
            skill_id,
            pattern_id,
            count,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub kept: usize,
    pub discarded: usize,
}

fn retain_counted<F: FnMut(&WeakSample) -> bool>(
    samples: Vec<WeakSample>,
    mut keep: F,
) -> (Vec<WeakSample>, StageCounts) {
    let before = samples.len();
    let kept: Vec<WeakSample> = samples.into_iter().filter(|s| keep(s)).collect();
    let counts = StageCounts {
        kept: kept.len(),
        discarded: before - kept.len(),
    };
    (kept, counts)
}

/// Noise detector 1: commands with fewer than `min_tokens` tokens carry too
/// little information to be actionable.
pub fn filter_min_tokens(
    samples: Vec<WeakSample>,
    cfg: &FilterConfig,
) -> (Vec<WeakSample>, StageCounts) {
    retain_counted(samples, |s| s.command_tokens.len() >= cfg.min_tokens)
}

/// Noise detector 2: strings observed fewer than `min_count` times are more
/// likely to be recognition errors than commands.
pub fn filter_min_count(
    samples: Vec<WeakSample>,
    cfg: &FilterConfig,
) -> (Vec<WeakSample>, StageCounts) {
    retain_counted(samples, |s| s.count >= cfg.min_count)
}

/// Noise detector 3: drops samples whose (skill, pattern) source is an
/// overly broad catch-all, by registry flag and optionally by the volume
/// heuristic. Statistics are computed over the input sample set, so run it
/// after the per-sample detectors.
pub fn filter_catch_all(
    samples: Vec<WeakSample>,
    registry: &SkillRegistry,
    cfg: &FilterConfig,
) -> (Vec<WeakSample>, StageCounts) {
    let mut heuristic_flagged: BTreeSet<(String, String)> = BTreeSet::new();
    if let CatchAllPolicy::Heuristic { share_threshold } = cfg.catch_all_policy {
        // distinct command counts per (skill, pattern)
        let mut distinct: BTreeMap<(String, String), BTreeSet<&[String]>> = BTreeMap::new();
        for s in &samples {
            distinct
                .entry((s.skill_id.clone(), s.pattern_id.clone()))
                .or_default()
                .insert(&s.command_tokens);
        }
        let mut per_skill: BTreeMap<&str, Vec<(&str, usize)>> = BTreeMap::new();
        for ((skill, pattern), cmds) in &distinct {
            per_skill
                .entry(skill.as_str())
                .or_default()
                .push((pattern.as_str(), cmds.len()));
        }
        for (skill, pattern_counts) in per_skill {
            let total: usize = pattern_counts.iter().map(|(_, n)| n).sum();
            let mut sizes: Vec<usize> = pattern_counts.iter().map(|&(_, n)| n).collect();
            sizes.sort_unstable();
            let median = sizes[sizes.len() / 2] as f64;
            for (pattern, n) in pattern_counts {
                let share = n as f64 / total as f64;
                if share > share_threshold && (n as f64) > 100.0 * median {
                    heuristic_flagged.insert((skill.to_string(), pattern.to_string()));
                }
            }
        }
    }
    retain_counted(samples, |s| {
        !registry.is_catch_all(&s.skill_id, &s.pattern_id)
            && !heuristic_flagged.contains(&(s.skill_id.clone(), s.pattern_id.clone()))
    })
}

/// Noise detector 4: drops commands that exactly match a shared built-in
/// intent phrase ("stop", "cancel", ...). Exact match only; substrings
/// would over-delete.
pub fn filter_shared_intents(
    samples: Vec<WeakSample>,
    cfg: &FilterConfig,
) -> (Vec<WeakSample>, StageCounts) {
    retain_counted(samples, |s| {
        !cfg.shared_intents.contains(&s.command_text())
    })
}

/// Per-stage retention accounting for the full pipeline.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PipelineReport {
    pub candidates: usize,
    pub stages: BTreeMap<String, StageCounts>,
    pub retained: usize,
}

/// A pluggable noise detector: keep-predicate plus a report name. The
/// built-in chain accepts extras (e.g. a language-model plausibility
/// filter) without modification.
pub type ExtraDetector<'a> = (&'a str, &'a dyn Fn(&WeakSample) -> bool);

/// Runs generation followed by the four noise detectors in order and
/// reports per-stage retention.
pub fn build_weak_dataset(
    log: &[Utterance],
    patterns: &[QueryPattern],
    registry: &SkillRegistry,
    cfg: &FilterConfig,
) -> Result<(Vec<WeakSample>, PipelineReport), CorpusError> {
    build_weak_dataset_with_detectors(log, patterns, registry, cfg, &[])
}

/// The full pipeline with additional plug-in detectors appended after the
/// built-in chain.
pub fn build_weak_dataset_with_detectors(
    log: &[Utterance],
    patterns: &[QueryPattern],
    registry: &SkillRegistry,
    cfg: &FilterConfig,
    extra: &[ExtraDetector<'_>],
) -> Result<(Vec<WeakSample>, PipelineReport), CorpusError> {
    cfg.validate()?;
    let candidates = generate_candidates(log, patterns, registry)?;
    let mut report = PipelineReport {
        candidates: candidates.len(),
        ..Default::default()
    };
    let (samples, c1) = filter_min_tokens(candidates, cfg);
    report.stages.insert("n1_min_tokens".into(), c1);
    let (samples, c2) = filter_min_count(samples, cfg);
    report.stages.insert("n2_min_count".into(), c2);
    let (samples, c3) = filter_catch_all(samples, registry, cfg);
    report.stages.insert("n3_catch_all".into(), c3);
    let (mut samples, c4) = filter_shared_intents(samples, cfg);
    report.stages.insert("n4_shared_intents".into(), c4);
    for (name, keep) in extra {
        let (kept, counts) = retain_counted(samples, |s| keep(s));
        report.stages.insert((*name).to_string(), counts);
        samples = kept;
    }
    report.retained = samples.len();
    Ok((samples, report))
}

/// Builds the per-user dataset split from an utterance-level split: every
/// log line whose extracted (command, skill, pattern) survived filtering
/// becomes one (weak sample, user) instance, counts aggregated within the
/// user's window.
pub fn make_dataset_split(
    split: &crate::corpus::LogSplit,
    patterns: &[QueryPattern],
    registry: &SkillRegistry,
    retained: &[WeakSample],
    policy: &str,
) -> Result<crate::corpus::DatasetSplit, CorpusError> {
    let retained_keys: BTreeSet<(&[String], &str, &str)> = retained
        .iter()
        .map(|s| {
            (
                s.command_tokens.as_slice(),
                s.skill_id.as_str(),
                s.pattern_id.as_str(),
            )
        })
        .collect();
    let compiled: Vec<CompiledPattern> =
        patterns.iter().map(compile).collect::<Result<_, _>>()?;
    let build = |part: &[Utterance]| -> Vec<(WeakSample, String)> {
        let mut counts: BTreeMap<(String, Vec<String>, String, String), u64> = BTreeMap::new();
        for u in part {
            for c in &compiled {
                if let Some((skill_id, command)) = c.try_match(&u.tokens, registry) {
                    let key = (
                        command.as_slice(),
                        skill_id,
                        c.pattern_id.as_str(),
                    );
                    if retained_keys.contains(&key) {
                        *counts
                            .entry((
                                u.user_id.clone(),
                                command,
                                skill_id.to_string(),
                                c.pattern_id.clone(),
                            ))
                            .or_insert(0) += 1;
                    }
                    break;
                }
            }
        }
        counts
            .into_iter()
            .map(|((user, command_tokens, skill_id, pattern_id), count)| {
                (
                    WeakSample {
                        command_tokens,
                        skill_id,
                        pattern_id,
                        count,
                    },
                    user,
                )
            })
            .collect()
    };
    let out = crate::corpus::DatasetSplit {
        train: build(&split.train),
        validation: build(&split.validation),
        test: build(&split.test),
        split_policy: policy.to_string(),
    };
    out.check_disjoint()?;
    Ok(out)
}
