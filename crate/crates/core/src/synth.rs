//! Deterministic synthetic world generator.
//!
//! Produces a skill registry with planted overlapping functionality, user
//! profiles with correlated enablement, an invocation-pattern log with
//! injected noise and ground-truth labels. This is the desk-scale stand-in
//! for proprietary assistant traffic.
//!
//! Structure that the models are meant to exploit:
//! - skills are grouped into categories; within a category a configurable
//!   fraction of each skill's commands comes from a shared pool, so content
//!   alone cannot separate them;
//! - every skill has a "brand" index; a user prefers one brand across
//!   categories, enables that brand's skills plus random extras, and mostly
//!   uses the preferred brand. A user's enabled set therefore predicts which
//!   of several co-enabled, same-category skills they actually use — the
//!   co-occurrence signal attention can learn and a single enabled bit
//!   cannot express.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    CorpusError, QueryPattern, Skill, SkillRegistry, UserProfile, Utterance,
};
use crate::numeric::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub num_skills: usize,
    pub num_categories: usize,
    /// Fraction of a skill's traffic drawn from its category's shared pool.
    pub overlap_factor: f64,
    pub num_users: usize,
    /// Mean number of enabled skills per user.
    pub enablement_mean: f64,
    pub utterances_per_skill: usize,
    pub char_corruption_rate: f64,
    pub short_command_rate: f64,
    pub shared_intent_rate: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            num_skills: 30,
            num_categories: 5,
            overlap_factor: 0.8,
            num_users: 200,
            enablement_mean: 8.0,
            utterances_per_skill: 3000,
            char_corruption_rate: 0.02,
            short_command_rate: 0.02,
            shared_intent_rate: 0.02,
            seed: 1,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.num_skills == 0
            || self.num_categories == 0
            || self.num_users == 0
            || self.utterances_per_skill == 0
        {
            return Err(CorpusError::Invalid("world counts must be positive".into()));
        }
        if self.num_categories > self.num_skills {
            return Err(CorpusError::Invalid(
                "more categories than skills".into(),
            ));
        }
        for (name, r) in [
            ("overlap_factor", self.overlap_factor),
            ("char_corruption_rate", self.char_corruption_rate),
            ("short_command_rate", self.short_command_rate),
            ("shared_intent_rate", self.shared_intent_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(CorpusError::Invalid(format!("{name} must be in [0,1], got {r}")));
            }
        }
        if self.enablement_mean <= 0.0 || self.enablement_mean > self.num_skills as f64 {
            return Err(CorpusError::Invalid(format!(
                "enablement_mean {} infeasible for {} skills",
                self.enablement_mean, self.num_skills
            )));
        }
        Ok(())
    }
}

/// Line-indexed truth for the emitted log plus the category map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub labels: BTreeMap<u64, String>,
    pub categories: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub utterance_index: u64,
    pub skill_id: String,
    pub category: String,
}

impl GroundTruth {
    pub fn records(&self) -> Vec<GroundTruthRecord> {
        self.labels
            .iter()
            .map(|(&idx, skill)| GroundTruthRecord {
                utterance_index: idx,
                skill_id: skill.clone(),
                category: self.categories.get(skill).cloned().unwrap_or_default(),
            })
            .collect()
    }

    pub fn from_records(records: Vec<GroundTruthRecord>) -> Self {
        let mut gt = GroundTruth::default();
        for r in records {
            gt.labels.insert(r.utterance_index, r.skill_id.clone());
            gt.categories.insert(r.skill_id, r.category);
        }
        gt
    }
}

/// Per-skill generation-time structure, kept so tests and the bootstrap
/// generator can introspect the planted world.
#[derive(Debug, Clone)]
pub struct SkillBlueprint {
    pub skill_id: String,
    pub category: usize,
    pub brand: usize,
    pub unique_commands: Vec<Vec<String>>,
    pub junk_word: String,
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub registry: SkillRegistry,
    pub patterns: Vec<QueryPattern>,
    pub profiles: Vec<UserProfile>,
    pub log: Vec<Utterance>,
    pub ground_truth: GroundTruth,
    pub blueprints: Vec<SkillBlueprint>,
    pub shared_pools: Vec<Vec<Vec<String>>>,
    /// brand index per user, parallel to `profiles`.
    pub user_brands: Vec<usize>,
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gl", "kr",
    "pl", "st", "tr", "sk",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "oo", "ea"];
const CODAS: &[&str] = &["", "n", "r", "s", "t", "l", "k", "m", "x"];

/// Shared intents; the multiword ones survive the length filter and are the
/// reason the shared-intent detector exists.
pub const SHARED_INTENTS: &[&str] = &[
    "stop",
    "cancel",
    "help",
    "turn the volume up",
    "turn the volume down",
    "go to the next one",
    "start over from the beginning",
];

/// Synonym table for the paraphrase generator.
pub const PARAPHRASE_SYNONYMS: &[(&str, &str)] = &[
    ("get", "grab"),
    ("find", "locate"),
    ("make", "prepare"),
    ("show", "display"),
    ("start", "begin"),
];

const ARTICLES: &[&str] = &["a", "the", "some", "my"];

fn synth_word(rng: &mut SplitMix64, used: &mut BTreeSet<String>) -> String {
    loop {
        let syllables = 2 + rng.below(2);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(rng.choose(ONSETS));
            w.push_str(rng.choose(VOWELS));
        }
        w.push_str(rng.choose(CODAS));
        if w.len() >= 4 && used.insert(w.clone()) {
            return w;
        }
    }
}

struct CategoryVocab {
    verbs: Vec<String>,
    nouns: Vec<String>,
    mods: Vec<String>,
}

fn command_from(rng: &mut SplitMix64, verb: &str, noun: &str, modifier: &str) -> Vec<String> {
    let frame = rng.below(5);
    let s = |x: &str| x.to_string();
    match frame {
        0 => vec![s(verb), s("the"), s(noun)],
        1 => vec![s(verb), s("me"), s("a"), s(noun)],
        2 => vec![s(verb), s("a"), s(modifier), s(noun)],
        3 => vec![s(verb), s("some"), s(modifier), s(noun)],
        _ => vec![s(verb), s("my"), s(noun), s("now")],
    }
}

pub fn invocation_patterns() -> Vec<QueryPattern> {
    let mk = |id: &str, template: &str| QueryPattern {
        pattern_id: id.into(),
        template: template.into(),
    };
    vec![
        mk("p_ask_to", "ask {skill} to {command}"),
        mk("p_ask_for", "ask {skill} for {command}"),
        mk("p_tell_to", "tell {skill} to {command}"),
        mk("p_open_and", "open {skill} and {command}"),
    ]
}

/// Wraps a command in an invocation pattern using the skill's primary alias.
fn wrap(pattern: &QueryPattern, alias: &str, command: &[String]) -> String {
    pattern
        .template
        .replace("{skill}", alias)
        .replace("{command}", &command.join(" "))
}

/// Deterministic world generation; a pure function of the config.
pub fn generate_world(cfg: &WorldConfig) -> Result<World, CorpusError> {
    cfg.validate()?;
    let mut rng = SplitMix64::derive(cfg.seed, "world");
    let mut used_words: BTreeSet<String> = BTreeSet::new();
    // Reserve function words so synthesized content never collides.
    for w in ["the", "a", "me", "my", "some", "now", "ask", "to", "for", "tell", "open", "and"] {
        used_words.insert(w.to_string());
    }
    for intent in SHARED_INTENTS {
        for t in intent.split_whitespace() {
            used_words.insert(t.to_string());
        }
    }

    // Category vocabularies: disjoint content words.
    let mut categories = Vec::new();
    for _ in 0..cfg.num_categories {
        categories.push(CategoryVocab {
            verbs: (0..3).map(|_| synth_word(&mut rng, &mut used_words)).collect(),
            nouns: (0..6).map(|_| synth_word(&mut rng, &mut used_words)).collect(),
            mods: (0..4).map(|_| synth_word(&mut rng, &mut used_words)).collect(),
        });
    }

    // Shared command pools per category.
    let pool_target = 60usize;
    let mut shared_pools: Vec<Vec<Vec<String>>> = Vec::new();
    for vocab in &categories {
        let mut pool: BTreeSet<Vec<String>> = BTreeSet::new();
        let mut attempts = 0;
        while pool.len() < pool_target && attempts < pool_target * 40 {
            attempts += 1;
            let verb = rng.choose(&vocab.verbs).clone();
            let noun = rng.choose(&vocab.nouns).clone();
            let modifier = rng.choose(&vocab.mods).clone();
            let cmd = command_from(&mut rng, &verb, &noun, &modifier);
            pool.insert(cmd);
        }
        shared_pools.push(pool.into_iter().collect());
    }

    // Skills: round-robin over categories; brand = index within category.
    let mut blueprints = Vec::new();
    let mut skills = Vec::new();
    let mut per_category: Vec<Vec<usize>> = vec![Vec::new(); cfg.num_categories];
    for k in 0..cfg.num_skills {
        let category = k % cfg.num_categories;
        let brand = per_category[category].len();
        per_category[category].push(k);
        let alias = synth_word(&mut rng, &mut used_words);
        let vocab = &categories[category];
        // Private nouns make unique commands attributable to one skill.
        let private: Vec<String> = (0..2).map(|_| synth_word(&mut rng, &mut used_words)).collect();
        let mut unique: BTreeSet<Vec<String>> = BTreeSet::new();
        let mut attempts = 0;
        while unique.len() < 6 && attempts < 400 {
            attempts += 1;
            let verb = rng.choose(&vocab.verbs).clone();
            let noun = rng.choose(&private).clone();
            let modifier = rng.choose(&vocab.mods).clone();
            unique.insert(command_from(&mut rng, &verb, &noun, &modifier));
        }
        let junk_word = synth_word(&mut rng, &mut used_words);
        let skill_id = format!("c{category}_{alias}");
        // Flag one catch-all source per category: brand 0 over the open
        // pattern carries junk traffic.
        let catch_all: BTreeSet<String> = if brand == 0 {
            ["p_open_and".to_string()].into_iter().collect()
        } else {
            BTreeSet::new()
        };
        let mut aliases = vec![alias.clone()];
        if brand % 3 == 2 {
            aliases.push(format!("the {alias} app"));
        }
        skills.push(Skill {
            skill_id: skill_id.clone(),
            aliases,
            catch_all_pattern_ids: catch_all,
            category: format!("cat{category}"),
        });
        blueprints.push(SkillBlueprint {
            skill_id,
            category,
            brand,
            unique_commands: unique.into_iter().collect(),
            junk_word,
        });
    }
    let shared_intents: BTreeSet<String> = SHARED_INTENTS.iter().map(|s| s.to_string()).collect();
    let registry = SkillRegistry::new(skills, shared_intents)?;
    // Blueprints in registry (lexicographic) order.
    blueprints.sort_by(|a, b| a.skill_id.cmp(&b.skill_id));
    let id_to_blueprint: BTreeMap<String, usize> = blueprints
        .iter()
        .enumerate()
        .map(|(i, b)| (b.skill_id.clone(), i))
        .collect();

    // Users: brand preference plus random extras, category-affine usage.
    let max_brand = per_category.iter().map(Vec::len).max().unwrap_or(1);
    let mut profiles = Vec::new();
    let mut user_brands = Vec::new();
    let mut rng_users = SplitMix64::derive(cfg.seed, "users");
    let p_own = 0.9f64;
    // Solve the per-category budget so expected enabled count matches.
    let per_cat_target = cfg.enablement_mean / cfg.num_categories as f64;
    for u in 0..cfg.num_users {
        let brand = rng_users.below(max_brand);
        let mut enabled = Vec::new();
        loop {
            enabled.clear();
            for (c, cat_skills) in per_category.iter().enumerate() {
                let own = brand % cat_skills.len();
                let others = cat_skills.len().saturating_sub(1);
                let p_cross = if others == 0 {
                    0.0
                } else {
                    ((per_cat_target - p_own) / others as f64).clamp(0.0, 1.0)
                };
                for (idx_in_cat, &skill_idx) in cat_skills.iter().enumerate() {
                    let p = if idx_in_cat == own { p_own } else { p_cross };
                    if rng_users.bernoulli(p) {
                        enabled.push(registry_skill_id(&blueprints, &id_to_blueprint, skill_idx, c, idx_in_cat));
                    }
                }
            }
            if !enabled.is_empty() {
                break;
            }
        }
        profiles.push(UserProfile {
            user_id: format!("u{u:04}"),
            enabled,
        });
        user_brands.push(brand);
    }

    // Log lines.
    let total_lines = cfg.num_skills * cfg.utterances_per_skill;
    let patterns = invocation_patterns();
    let mut rng_log = SplitMix64::derive(cfg.seed, "log");
    let mut log = Vec::with_capacity(total_lines);
    let mut ground_truth = GroundTruth::default();
    for b in &blueprints {
        ground_truth
            .categories
            .insert(b.skill_id.clone(), format!("cat{}", b.category));
    }
    // Per-user category affinity: one preferred category used more often.
    let preferred_category: Vec<usize> = (0..cfg.num_users)
        .map(|_| rng_log.below(cfg.num_categories))
        .collect();

    let mut emitted: u64 = 0;
    while (emitted as usize) < total_lines {
        let u = rng_log.below(cfg.num_users);
        let profile = &profiles[u];
        let brand = user_brands[u];
        // Pick a category with affinity, then a skill the user enabled.
        let cat = if rng_log.bernoulli(0.4) {
            preferred_category[u]
        } else {
            rng_log.below(cfg.num_categories)
        };
        let enabled_in_cat: Vec<&String> = profile
            .enabled
            .iter()
            .filter(|id| id_to_blueprint.get(*id).map(|&i| blueprints[i].category) == Some(cat))
            .collect();
        let skill_id = if enabled_in_cat.is_empty() {
            // No enabled skill there; fall back to any enabled skill.
            profile.enabled[rng_log.below(profile.enabled.len())].clone()
        } else {
            let own = enabled_in_cat
                .iter()
                .find(|id| {
                    let bp = &blueprints[id_to_blueprint[**id]];
                    bp.brand == brand % per_category[bp.category].len()
                })
                .cloned();
            match own {
                Some(own_id) if rng_log.bernoulli(0.9) => own_id.clone(),
                _ => enabled_in_cat[rng_log.below(enabled_in_cat.len())].clone(),
            }
        };
        let bp = &blueprints[id_to_blueprint[&skill_id]];
        let skill = registry.get(&skill_id).expect("registered");

        // Catch-all junk traffic for flagged sources.
        let is_catch_all_line =
            !skill.catch_all_pattern_ids.is_empty() && rng_log.bernoulli(0.1);
        let (pattern, mut command) = if is_catch_all_line {
            let mut junk = vec![bp.junk_word.clone()];
            for _ in 0..2 + rng_log.below(2) {
                let c = rng_log.below(cfg.num_categories);
                junk.push(rng_log.choose(&categories[c].nouns).clone());
            }
            (
                patterns.iter().find(|p| p.pattern_id == "p_open_and").unwrap(),
                junk,
            )
        } else {
            let pattern = &patterns[rng_log.below(3)];
            let command = if rng_log.bernoulli(cfg.overlap_factor) {
                rng_log.choose(&shared_pools[bp.category]).clone()
            } else {
                rng_log.choose(&bp.unique_commands).clone()
            };
            (pattern, command)
        };

        // Noise injection.
        if rng_log.bernoulli(cfg.short_command_rate) {
            command = vec![rng_log.choose(&categories[bp.category].nouns).clone()];
        } else if rng_log.bernoulli(cfg.shared_intent_rate) {
            command = SHARED_INTENTS[rng_log.below(SHARED_INTENTS.len())]
                .split_whitespace()
                .map(str::to_string)
                .collect();
        } else if rng_log.bernoulli(cfg.char_corruption_rate) {
            let mut joined: Vec<char> = command.join(" ").chars().collect();
            let pos = rng_log.below(joined.len());
            let sub = (b'a' + rng_log.below(26) as u8) as char;
            joined[pos] = sub;
            command = joined
                .into_iter()
                .collect::<String>()
                .split_whitespace()
                .map(str::to_string)
                .collect();
            if command.is_empty() {
                command = vec!["x".into()];
            }
        }

        let text = wrap(pattern, &skill.aliases[0], &command);
        let timestamp = rng_log.below(1_000_000) as i64;
        log.push(Utterance::new(&profile.user_id, &text, timestamp));
        ground_truth.labels.insert(emitted, skill_id.clone());
        emitted += 1;
    }

    Ok(World {
        config: cfg.clone(),
        registry,
        patterns,
        profiles,
        log,
        ground_truth,
        blueprints,
        shared_pools,
        user_brands,
    })
}

fn registry_skill_id(
    blueprints: &[SkillBlueprint],
    id_map: &BTreeMap<String, usize>,
    _skill_idx: usize,
    category: usize,
    brand: usize,
) -> String {
    // Blueprint lookup by (category, brand); ids were re-sorted after build.
    blueprints
        .iter()
        .find(|b| b.category == category && b.brand == brand)
        .map(|b| b.skill_id.clone())
        .unwrap_or_else(|| id_map.keys().next().cloned().unwrap_or_default())
}

/// One held-out skill for the bootstrap protocol, with weakly supervised
/// train/test instances, the raw logs they came from and dedicated users.
#[derive(Debug, Clone)]
pub struct NewSkillData {
    pub skill: Skill,
    pub train_pairs: Vec<(crate::corpus::WeakSample, String)>,
    pub test_pairs: Vec<(crate::corpus::WeakSample, String)>,
    pub train_log: Vec<Utterance>,
    pub test_log: Vec<Utterance>,
    pub profiles: Vec<UserProfile>,
}

/// Generates held-out skills that do not overlap the existing ones: novel
/// cross-category word combinations plus one genuinely new content word per
/// skill, keeping token-type coverage of the frozen vocabulary near 0.95.
/// Train and test users are disjoint; every user enables the new skill plus
/// a sample of existing ones.
pub fn generate_new_skills(
    world: &World,
    num_new: usize,
    train_instances: usize,
    test_instances: usize,
    seed: u64,
) -> Result<Vec<NewSkillData>, CorpusError> {
    let mut rng = SplitMix64::derive(seed, "new-skills");
    let mut used: BTreeSet<String> = BTreeSet::new();
    for u in &world.log {
        for t in &u.tokens {
            used.insert(t.clone());
        }
    }
    for s in world.registry.skills() {
        for a in &s.aliases {
            for t in crate::corpus::normalize(a) {
                used.insert(t);
            }
        }
    }
    // Existing content words to recombine across categories.
    let mut verbs = Vec::new();
    let mut nouns = Vec::new();
    let mut mods = Vec::new();
    for pool in &world.shared_pools {
        for cmd in pool.iter().take(12) {
            verbs.push(cmd[0].clone());
            if let Some(last) = cmd.last() {
                if last != "now" {
                    nouns.push(last.clone());
                }
            }
            if cmd.len() == 4 {
                mods.push(cmd[2].clone());
            }
        }
    }
    verbs.sort();
    verbs.dedup();
    nouns.sort();
    nouns.dedup();
    mods.sort();
    mods.dedup();

    let old_skills: Vec<String> = world.registry.skill_ids();
    let patterns = &world.patterns;
    let mut out = Vec::new();
    for n in 0..num_new {
        let alias = synth_word(&mut rng, &mut used);
        let novel_noun = synth_word(&mut rng, &mut used);
        let skill_id = format!("new_{alias}");
        // Pick a small cross-category palette for this skill.
        let mut my_verbs: Vec<String> = Vec::new();
        while my_verbs.len() < 4 {
            let v = rng.choose(&verbs).clone();
            if !my_verbs.contains(&v) {
                my_verbs.push(v);
            }
        }
        let mut my_nouns: Vec<String> = vec![novel_noun.clone()];
        while my_nouns.len() < 8 {
            let x = rng.choose(&nouns).clone();
            if !my_nouns.contains(&x) {
                my_nouns.push(x);
            }
        }
        let mut my_mods: Vec<String> = Vec::new();
        while my_mods.len() < 4 {
            let m = rng.choose(&mods).clone();
            if !my_mods.contains(&m) {
                my_mods.push(m);
            }
        }
        let mut commands: BTreeSet<Vec<String>> = BTreeSet::new();
        let mut attempts = 0;
        while commands.len() < 150 && attempts < 4000 {
            attempts += 1;
            let verb = rng.choose(&my_verbs).clone();
            // The novel word anchors a slice of the traffic; the rest are
            // novel cross-category recombinations of known words.
            let noun = if rng.bernoulli(0.2) {
                novel_noun.clone()
            } else {
                rng.choose(&my_nouns).clone()
            };
            let modifier = rng.choose(&my_mods).clone();
            commands.insert(command_from(&mut rng, &verb, &noun, &modifier));
        }
        let commands: Vec<Vec<String>> = commands.into_iter().collect();

        let skill = Skill {
            skill_id: skill_id.clone(),
            aliases: vec![alias.clone()],
            catch_all_pattern_ids: BTreeSet::new(),
            category: format!("newcat{n}"),
        };
        // Dedicated users, brand-correlated enablement of old skills.
        let mut profiles = Vec::new();
        let n_train_users = 60;
        let n_test_users = 20;
        for u in 0..(n_train_users + n_test_users) {
            let mut enabled = vec![skill_id.clone()];
            for old in &old_skills {
                if rng.bernoulli(0.18) {
                    enabled.push(old.clone());
                }
            }
            profiles.push(UserProfile {
                user_id: format!("nu{n}_{u:03}"),
                enabled,
            });
        }

        let emit = |users: std::ops::Range<usize>,
                        want: usize,
                        rng: &mut SplitMix64|
         -> (Vec<Utterance>, Vec<(crate::corpus::WeakSample, String)>) {
            let mut log = Vec::new();
            let mut counts: BTreeMap<(String, Vec<String>, String), u64> = BTreeMap::new();
            // Emit lines until enough distinct (user, command, pattern)
            // instances exist, then trim to the exact requested size.
            let mut guard = 0;
            while counts.len() < want + want / 10 && guard < want * 30 {
                guard += 1;
                let user = &profiles[users.start + rng.below(users.len())];
                let cmd = rng.choose(&commands).clone();
                let pattern = &patterns[rng.below(3)];
                let text = wrap(pattern, &alias, &cmd);
                log.push(Utterance::new(&user.user_id, &text, rng.below(1_000_000) as i64));
                *counts
                    .entry((user.user_id.clone(), cmd, pattern.pattern_id.clone()))
                    .or_insert(0) += 1;
            }
            let mut pairs: Vec<(crate::corpus::WeakSample, String)> = counts
                .into_iter()
                .map(|((user, command_tokens, pattern_id), count)| {
                    (
                        crate::corpus::WeakSample {
                            command_tokens,
                            skill_id: skill_id.clone(),
                            pattern_id,
                            count,
                        },
                        user,
                    )
                })
                .collect();
            let mut order: Vec<usize> = (0..pairs.len()).collect();
            rng.shuffle(&mut order);
            order.truncate(want);
            order.sort_unstable();
            let picked: Vec<_> = order.into_iter().map(|i| pairs[i].clone()).collect();
            pairs.clear();
            (log, picked)
        };
        let (train_log, train_pairs) = emit(0..n_train_users, train_instances, &mut rng);
        let (test_log, test_pairs) = emit(
            n_train_users..n_train_users + n_test_users,
            test_instances,
            &mut rng,
        );
        out.push(NewSkillData {
            skill,
            train_pairs,
            test_pairs,
            train_log,
            test_log,
            profiles,
        });
    }
    Ok(out)
}

/// A held-out natural-form item: a template-free paraphrase of a latent
/// command, labeled with the true skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseSample {
    pub user_id: String,
    pub text: String,
    pub skill_id: String,
    pub source_index: u64,
}

/// Emits template-free variants for a sampled fraction of ground-truth
/// commands: synonym substitution from a fixed table plus article dropping.
pub fn paraphrase_split(world: &World, rate: f64, seed: u64) -> Vec<ParaphraseSample> {
    paraphrase_with_table(world, rate, seed, PARAPHRASE_SYNONYMS)
}

pub fn paraphrase_with_table(
    world: &World,
    rate: f64,
    seed: u64,
    table: &[(&str, &str)],
) -> Vec<ParaphraseSample> {
    let mut rng = SplitMix64::derive(seed, "paraphrase");
    let mut out = Vec::new();
    for (idx, u) in world.log.iter().enumerate() {
        if !rng.bernoulli(rate) {
            continue;
        }
        let Ok(Some(candidate)) =
            crate::weaksup::match_pattern(u, &world.patterns, &world.registry)
        else {
            continue;
        };
        let mut tokens: Vec<String> = candidate
            .weak
            .command_tokens
            .iter()
            .filter(|t| !ARTICLES.contains(&t.as_str()))
            .cloned()
            .collect();
        for t in &mut tokens {
            if let Some((_, replacement)) = table.iter().find(|(from, _)| from == t) {
                *t = replacement.to_string();
            }
        }
        if tokens.is_empty() {
            continue;
        }
        let skill_id = world
            .ground_truth
            .labels
            .get(&(idx as u64))
            .cloned()
            .unwrap_or_else(|| candidate.weak.skill_id.clone());
        out.push(ParaphraseSample {
            user_id: u.user_id.clone(),
            text: tokens.join(" "),
            skill_id,
            source_index: idx as u64,
        });
    }
    out
}
