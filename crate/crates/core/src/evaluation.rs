//! Evaluation protocols: top-N accuracy under full/enabled scope,
//! attention-weight ranking, the acceptance-rate correlation study with
//! exact binomial binarization, and the acceptance-rate histogram.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, SkillModel};

use crate::personalization::{self, Scope};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] crate::numeric::NumericError),
    #[error("empty evaluation input: {0}")]
    Empty(String),
    #[error("{0}")]
    Invalid(String),
}

/// One labeled evaluation item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSample {
    pub tokens: Vec<String>,
    pub skill_id: String,
    pub user_id: String,
}

impl EvalSample {
    pub fn from_weak(sample: &crate::corpus::WeakSample, user_id: &str) -> Self {
        EvalSample {
            tokens: sample.command_tokens.clone(),
            skill_id: sample.skill_id.clone(),
            user_id: user_id.to_string(),
        }
    }
}

/// user_id -> enabled skill list.
pub type ProfileMap = HashMap<String, Vec<String>>;

pub fn profile_map(profiles: &[crate::corpus::UserProfile]) -> ProfileMap {
    profiles
        .iter()
        .map(|p| (p.user_id.clone(), p.enabled.clone()))
        .collect()
}

/// Fraction of samples whose true skill appears in the model's top-N
/// ranking under the given scope, for each requested N.
pub fn top_n_accuracy(
    model: &SkillModel,
    samples: &[EvalSample],
    profiles: &ProfileMap,
    scope: Scope,
    ns: &[usize],
) -> Result<BTreeMap<usize, f64>, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty("top_n_accuracy samples".into()));
    }
    let empty: Vec<String> = Vec::new();
    let mut hits: BTreeMap<usize, usize> = ns.iter().map(|&n| (n, 0)).collect();
    for s in samples {
        let enabled = profiles.get(&s.user_id).unwrap_or(&empty);
        let ranked = personalization::score_all(model, &s.tokens, enabled, scope)?;
        let rank = ranked.iter().position(|(id, _)| id == &s.skill_id);
        if let Some(r) = rank {
            for (&n, count) in hits.iter_mut() {
                if r < n {
                    *count += 1;
                }
            }
        }
    }
    Ok(hits
        .into_iter()
        .map(|(n, c)| (n, c as f64 / samples.len() as f64))
        .collect())
}

/// Ranks skills by attention weight (not head scores) and reports top-N
/// accuracy, restricted to profiles with more than `min_enabled` enabled
/// skills. `scope` chooses whether attention runs over the enabled list or
/// the full skill set.
pub fn attention_top_n(
    model: &SkillModel,
    samples: &[EvalSample],
    profiles: &ProfileMap,
    scope: Scope,
    ns: &[usize],
    min_enabled: usize,
) -> Result<BTreeMap<usize, f64>, EvalError> {
    if !model.mode.uses_attention() {
        return Err(EvalError::Invalid(format!(
            "attention_top_n requires an attention mode, model is {}",
            model.mode
        )));
    }
    let empty: Vec<String> = Vec::new();
    let mut considered = 0usize;
    let mut hits: BTreeMap<usize, usize> = ns.iter().map(|&n| (n, 0)).collect();
    let params = model.encoder()?;
    let all_skills: Vec<String> = model.skills().to_vec();
    for s in samples {
        let enabled = profiles.get(&s.user_id).unwrap_or(&empty);
        if enabled.len() <= min_enabled {
            continue;
        }
        considered += 1;
        let candidates: &[String] = match scope {
            Scope::Enabled => enabled,
            Scope::Full => &all_skills,
        };
        let enc = crate::encoder::encode_utterance(
            &model.store,
            &params,
            &model.encoder_cfg,
            &model.vocab,
            &s.tokens,
        )?;
        let (weights, _) = personalization::attend(&enc.h_bar, candidates, model)?;
        let mut order: Vec<(usize, f64)> = weights
            .data()
            .iter()
            .cloned()
            .enumerate()
            .collect();
        order.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| candidates[a.0].cmp(&candidates[b.0]))
        });
        let rank = order
            .iter()
            .position(|(i, _)| candidates[*i] == s.skill_id);
        if let Some(r) = rank {
            for (&n, count) in hits.iter_mut() {
                if r < n {
                    *count += 1;
                }
            }
        }
    }
    if considered == 0 {
        return Err(EvalError::Empty(format!(
            "no profiles with more than {min_enabled} enabled skills"
        )));
    }
    Ok(hits
        .into_iter()
        .map(|(n, c)| (n, c as f64 / considered as f64))
        .collect())
}

// ---------------------------------------------------------------------------
// Acceptance-rate correlation study.

/// One suggestion interaction: the system proposed a skill for an utterance
/// and the user accepted or rejected it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuggestionRecord {
    pub utterance: String,
    pub skill_id: String,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizedRecord {
    pub utterance: String,
    pub skill_id: String,
    pub label: u8,
    pub n_trials: u64,
    pub n_accepts: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BinarizedSet {
    pub records: Vec<BinarizedRecord>,
    pub discarded: usize,
}

/// P(X <= s) for X ~ Binomial(n, p), exact linear-space sum.
pub fn binom_cdf_leq(n: u64, s: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    let mut pmf = q.powi(n as i32);
    let mut acc = 0.0;
    for i in 0..=n {
        if i <= s {
            acc += pmf;
        } else {
            break;
        }
        if i < n {
            pmf *= (n - i) as f64 / (i + 1) as f64 * (p / q);
        }
    }
    acc.min(1.0)
}

/// P(X >= s), summed upward so no 1-minus cancellation.
pub fn binom_tail_geq(n: u64, s: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    let mut pmf = q.powi(n as i32);
    let mut acc = 0.0;
    for i in 0..=n {
        if i >= s {
            acc += pmf;
        }
        if i < n {
            pmf *= (n - i) as f64 / (i + 1) as f64 * (p / q);
        }
    }
    acc.min(1.0)
}

/// Groups suggestion records by (utterance, skill) and binarizes each group
/// with a one-sided exact binomial test at the given confidence: label 0
/// when the data rejects acceptance rate >= p0, label 1 when it rejects
/// acceptance rate <= p0, discard when neither tail is significant.
pub fn binomial_binarize(
    log: &[SuggestionRecord],
    p0: f64,
    confidence: f64,
) -> Result<BinarizedSet, EvalError> {
    if log.is_empty() {
        return Err(EvalError::Empty("suggestion log".into()));
    }
    let alpha = 1.0 - confidence;
    let mut groups: BTreeMap<(String, String), (u64, u64)> = BTreeMap::new();
    for r in log {
        let e = groups
            .entry((r.utterance.clone(), r.skill_id.clone()))
            .or_insert((0, 0));
        e.0 += 1;
        if r.accepted {
            e.1 += 1;
        }
    }
    let mut out = BinarizedSet::default();
    for ((utterance, skill_id), (n, s)) in groups {
        if n == 0 {
            return Err(EvalError::Invalid("group with zero trials".into()));
        }
        let low = binom_cdf_leq(n, s, p0);
        let high = binom_tail_geq(n, s, p0);
        let label = if low < alpha {
            Some(0u8)
        } else if high < alpha {
            Some(1u8)
        } else {
            None
        };
        match label {
            Some(label) => out.records.push(BinarizedRecord {
                utterance,
                skill_id,
                label,
                n_trials: n,
                n_accepts: s,
            }),
            None => out.discarded += 1,
        }
    }
    Ok(out)
}

/// Sample Pearson correlation coefficient.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::Invalid(format!(
            "length mismatch {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(EvalError::Empty("pearson needs at least 2 points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::Invalid("zero variance input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Uniform bins over [0, 1]; the top edge is inclusive.
pub fn histogram(rates: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    for &r in rates {
        let idx = ((r * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
}

/// Plot-ready TSV: bin_low, bin_high, count.
pub fn histogram_tsv(counts: &[usize]) -> String {
    let bins = counts.len();
    let mut out = String::from("bin_low\tbin_high\tcount\n");
    for (i, c) in counts.iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            i as f64 / bins as f64,
            (i + 1) as f64 / bins as f64,
            c
        ));
    }
    out
}

/// Per-(utterance, skill) acceptance rates from a suggestion log.
pub fn acceptance_rates(log: &[SuggestionRecord]) -> Vec<f64> {
    let mut groups: BTreeMap<(&str, &str), (u64, u64)> = BTreeMap::new();
    for r in log {
        let e = groups
            .entry((r.utterance.as_str(), r.skill_id.as_str()))
            .or_insert((0, 0));
        e.0 += 1;
        if r.accepted {
            e.1 += 1;
        }
    }
    groups
        .values()
        .map(|&(n, s)| s as f64 / n as f64)
        .collect()
}
