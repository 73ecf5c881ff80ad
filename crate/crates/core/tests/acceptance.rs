//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! The paper-scale numbers are not reproducible at desk scale; these
//! criteria reproduce each result's direction and mechanism on the
//! synthetic testbed: the personalization ladder, expand-vs-refresh
//! economics, enabled-vs-full scoping, the correlation-study machinery,
//! plus gradient, determinism and invariant suites.
//!
//! Trained models are cached across criteria (tests run single-threaded in
//! name order on one core; later criteria reuse the ladder models).

mod common;

use std::collections::BTreeMap;
use std::sync::{LazyLock, Mutex};
use std::time::Instant;

use skillrouter_core::bootstrap::{expand, refresh, ExpandConfig, NewDomain};
use skillrouter_core::checkpoint;
use skillrouter_core::corpus::{DatasetSplit, UserProfile};
use skillrouter_core::encoder::EncoderConfig;
use skillrouter_core::evaluation::{
    acceptance_rates, attention_top_n, binom_cdf_leq, binom_tail_geq, binomial_binarize,
    histogram, pearson_correlation, profile_map, top_n_accuracy, EvalSample, SuggestionRecord,
};
use skillrouter_core::model::{PersonalizationMode, SkillModel};
use skillrouter_core::numeric::{SplitMix64, Tensor};
use skillrouter_core::personalization::{attend, domain_probability, score_all, Scope};
use skillrouter_core::synth::generate_new_skills;
use skillrouter_core::training::{loss_breakdown, train, TrainConfig};

const SEEDS: [u64; 3] = [1, 2, 3];

fn criterion<F: FnOnce() -> Result<String, String>>(name: &str, f: F) {
    match f() {
        Ok(detail) => println!("ACCEPTANCE {name}: PASS — {detail}"),
        Err(msg) => {
            println!("ACCEPTANCE {name}: FAIL — {msg}");
            panic!("{name} failed: {msg}");
        }
    }
}

struct Cache {
    worlds: BTreeMap<u64, std::sync::Arc<common::WorldCtx>>,
    models: BTreeMap<(u64, String), std::sync::Arc<SkillModel>>,
}

static CACHE: LazyLock<Mutex<Cache>> = LazyLock::new(|| {
    Mutex::new(Cache {
        worlds: BTreeMap::new(),
        models: BTreeMap::new(),
    })
});

fn world_ctx(seed: u64) -> std::sync::Arc<common::WorldCtx> {
    let mut cache = CACHE.lock().unwrap();
    if let Some(w) = cache.worlds.get(&seed) {
        return w.clone();
    }
    let ctx = std::sync::Arc::new(common::build_world_ctx(seed));
    cache.worlds.insert(seed, ctx.clone());
    ctx
}

fn ladder_model(seed: u64, mode: PersonalizationMode) -> std::sync::Arc<SkillModel> {
    let key = (seed, format!("multitask.{mode}"));
    {
        let cache = CACHE.lock().unwrap();
        if let Some(m) = cache.models.get(&key) {
            return m.clone();
        }
    }
    let ctx = world_ctx(seed);
    let model = std::sync::Arc::new(common::train_ladder_variant(&ctx, mode, seed));
    CACHE.lock().unwrap().models.insert(key, model.clone());
    model
}

fn multiclass_model(seed: u64) -> std::sync::Arc<SkillModel> {
    let key = (seed, "multiclass".to_string());
    {
        let cache = CACHE.lock().unwrap();
        if let Some(m) = cache.models.get(&key) {
            return m.clone();
        }
    }
    let ctx = world_ctx(seed);
    let model = std::sync::Arc::new(common::train_multiclass_baseline(&ctx, seed));
    CACHE.lock().unwrap().models.insert(key, model.clone());
    model
}

fn top1(model: &SkillModel, ctx: &common::WorldCtx, scope: Scope) -> f64 {
    top_n_accuracy(model, &ctx.test_samples, &ctx.profiles, scope, &[1]).unwrap()[&1]
}

// -------------------------------------------------------------------------

#[test]
fn c1_gradient_suite() {
    criterion("C1 gradient-suite", || {
        let started = Instant::now();
        let mut worst: f64 = 0.0;
        for seed in 0..20 {
            worst = worst.max(common::gradcheck_multitask(seed));
            worst = worst.max(common::gradcheck_multiclass(seed));
            worst = worst.max(common::gradcheck_binary(seed));
            if worst >= 1e-4 {
                return Err(format!("seed {seed}: max rel err {worst:.3e} >= 1e-4"));
            }
        }
        let secs = started.elapsed().as_secs_f64();
        if secs >= 60.0 {
            return Err(format!("gradient suite took {secs:.1}s >= 60s"));
        }
        Ok(format!(
            "max rel err {worst:.3e} over 20 seeds x 3 losses in {secs:.1}s"
        ))
    });
}

#[test]
fn c2_weak_supervision_golden() {
    criterion("C2 weak-golden", || {
        use skillrouter_core::corpus::{
            read_jsonl, read_shared_intents, schema, write_jsonl, QueryPattern, Skill,
            SkillRegistry, Utterance, WeakSample,
        };
        use skillrouter_core::weaksup::{build_weak_dataset, FilterConfig};
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden");
        let log: Vec<Utterance> = read_jsonl(dir.join("log.jsonl"), schema::LOG).unwrap();
        let skills: Vec<Skill> = read_jsonl(dir.join("skills.jsonl"), schema::SKILLS).unwrap();
        let patterns: Vec<QueryPattern> =
            read_jsonl(dir.join("patterns.jsonl"), schema::PATTERNS).unwrap();
        let intents = read_shared_intents(dir.join("shared_intents.txt")).unwrap();
        let registry = SkillRegistry::new(skills, intents).unwrap();
        let cfg = FilterConfig {
            shared_intents: registry.shared_intents.clone(),
            ..Default::default()
        };
        let (retained, report) = build_weak_dataset(&log, &patterns, &registry, &cfg).unwrap();
        let expected: Vec<WeakSample> =
            read_jsonl(dir.join("expected_weak.jsonl"), schema::WEAK).unwrap();
        if retained != expected {
            return Err("retained set differs from hand enumeration".into());
        }
        let has = |cmd: &str| retained.iter().any(|s| s.command_text() == cmd);
        if !has("call me a cab") {
            return Err("'call me a cab' missing".into());
        }
        for (cmd, filter) in [
            ("boston", "n1"),
            ("call me a cvb", "n2"),
            ("whatever nonsense here", "n3"),
            ("stop", "n1/n4"),
            ("turn the volume up", "n4"),
        ] {
            if has(cmd) {
                return Err(format!("'{cmd}' should have been discarded by {filter}"));
            }
        }
        // Byte-identical output across runs.
        let tmp = tempfile::tempdir().unwrap();
        let mut bytes = Vec::new();
        for name in ["a.jsonl", "b.jsonl"] {
            let (r, _) = build_weak_dataset(&log, &patterns, &registry, &cfg).unwrap();
            let p = tmp.path().join(name);
            write_jsonl(&p, schema::WEAK, None, r).unwrap();
            bytes.push(std::fs::read(&p).unwrap());
        }
        if bytes[0] != bytes[1] {
            return Err("weak.jsonl differs across runs".into());
        }
        Ok(format!(
            "retained {} of {} candidates, byte-identical output",
            report.retained, report.candidates
        ))
    });
}

#[test]
fn c3_personalization_ladder() {
    criterion("C3 personalization-ladder", || {
        let mut lines = Vec::new();
        for seed in SEEDS {
            let started = Instant::now();
            let ctx = world_ctx(seed);
            let none = top1(&ladder_model(seed, PersonalizationMode::None), &ctx, Scope::Full);
            let one_bit = top1(&ladder_model(seed, PersonalizationMode::OneBit), &ctx, Scope::Full);
            let attention = top1(
                &ladder_model(seed, PersonalizationMode::Attention),
                &ctx,
                Scope::Full,
            );
            let combined = top1(
                &ladder_model(seed, PersonalizationMode::OneBitAndAttention),
                &ctx,
                Scope::Full,
            );
            let minutes = started.elapsed().as_secs_f64() / 60.0;
            let line = format!(
                "seed {seed}: multitask {none:.4} < 1-bit {one_bit:.4} < attention {attention:.4}, combined {combined:.4} ({} train inst, {minutes:.1} min)",
                ctx.dataset.train.len()
            );
            if !(none < one_bit && one_bit < attention) {
                return Err(format!("ladder ordering violated: {line}"));
            }
            if attention < none + 0.05 {
                return Err(format!("attention must exceed multitask by 5 points: {line}"));
            }
            if combined < one_bit.max(attention) - 0.005 {
                return Err(format!("combined fell below max - 0.5 points: {line}"));
            }
            if minutes >= 15.0 {
                return Err(format!("seed {seed} exceeded 15 minutes: {minutes:.1}"));
            }
            lines.push(line);
        }
        Ok(lines.join(" | "))
    });
}

#[test]
fn c4_bootstrap_expand_vs_refresh() {
    criterion("C4 bootstrap", || {
        let started = Instant::now();
        let seed = 1u64;
        let ctx = world_ctx(seed);
        let base = ladder_model(seed, PersonalizationMode::OneBitAndAttention);
        let new_skills = generate_new_skills(&ctx.world, 3, 3000, 1000, seed).unwrap();
        for d in &new_skills {
            if d.train_pairs.len() != 3000 || d.test_pairs.len() != 1000 {
                return Err(format!(
                    "{}: expected 3000/1000 instances, got {}/{}",
                    d.skill.skill_id,
                    d.train_pairs.len(),
                    d.test_pairs.len()
                ));
            }
        }
        let new_ids: Vec<String> = new_skills.iter().map(|d| d.skill.skill_id.clone()).collect();
        let mut all_profiles: Vec<UserProfile> = ctx.world.profiles.clone();
        for d in &new_skills {
            all_profiles.extend(d.profiles.iter().cloned());
        }
        let domains: Vec<NewDomain> = new_skills
            .iter()
            .map(|d| NewDomain {
                skill_id: d.skill.skill_id.clone(),
                train: d.train_pairs.clone(),
            })
            .collect();

        // Old-profile predictions before expansion.
        let pm_old = &ctx.profiles;
        let probe: Vec<&EvalSample> = ctx.test_samples.iter().take(150).collect();
        let empty: Vec<String> = Vec::new();
        let mut before = Vec::new();
        for s in &probe {
            let enabled = pm_old.get(&s.user_id).unwrap_or(&empty);
            before.push(score_all(&base, &s.tokens, enabled, Scope::Full).unwrap());
        }

        let ecfg = ExpandConfig {
            seed,
            ..Default::default()
        };
        let (expanded, report) =
            expand((*base).clone(), &domains, &all_profiles, &ecfg).unwrap();

        // Bitwise no-regression for profiles that do not enable new skills.
        for (s, old_scores) in probe.iter().zip(&before) {
            let enabled = pm_old.get(&s.user_id).unwrap_or(&empty);
            let after = score_all(&expanded, &s.tokens, enabled, Scope::Full).unwrap();
            let after_old: Vec<&(String, f64)> = after
                .iter()
                .filter(|(id, _)| !new_ids.contains(id))
                .collect();
            for ((ia, pa), (ib, pb)) in old_scores.iter().zip(after_old) {
                if ia != ib || pa.to_bits() != pb.to_bits() {
                    return Err(format!(
                        "existing score changed after expand: {ia} {pa} vs {ib} {pb}"
                    ));
                }
            }
        }

        let pm_all = profile_map(&all_profiles);
        let new_test: Vec<EvalSample> = new_skills
            .iter()
            .flat_map(|d| d.test_pairs.iter().map(|(w, u)| EvalSample::from_weak(w, u)))
            .collect();
        let expand_top1 =
            top_n_accuracy(&expanded, &new_test, &pm_all, Scope::Full, &[1]).unwrap()[&1];

        // Refresh baseline: full retraining on the union.
        let mut union = DatasetSplit {
            train: ctx.dataset.train.clone(),
            validation: Vec::new(),
            test: Vec::new(),
            split_policy: "refresh".into(),
        };
        for d in &new_skills {
            union.train.extend(d.train_pairs.iter().cloned());
        }
        let mut union_skills = ctx.skills.clone();
        union_skills.extend(new_ids.iter().cloned());
        let (refreshed, _, timing) = refresh(
            &union,
            &union_skills,
            &all_profiles,
            &EncoderConfig::default(),
            &common::ladder_train_config(
                skillrouter_core::model::ModelVariant::MultiTask,
                PersonalizationMode::OneBitAndAttention,
                seed,
            ),
        )
        .unwrap();
        let refresh_top1 =
            top_n_accuracy(&refreshed, &new_test, &pm_all, Scope::Full, &[1]).unwrap()[&1];

        let ratio = report.timing.seconds_per_epoch / timing.seconds_per_epoch;
        if ratio > 0.1 {
            return Err(format!(
                "expand/refresh per-epoch ratio {ratio:.4} > 0.1 ({:.3}s vs {:.1}s)",
                report.timing.seconds_per_epoch, timing.seconds_per_epoch
            ));
        }
        if expand_top1 < refresh_top1 - 0.02 {
            return Err(format!(
                "expand top-1 {expand_top1:.4} more than 2 points below refresh {refresh_top1:.4}"
            ));
        }
        let minutes = started.elapsed().as_secs_f64() / 60.0;
        if minutes >= 20.0 {
            return Err(format!("bootstrap protocol took {minutes:.1} min >= 20"));
        }
        Ok(format!(
            "expand {:.3}s/epoch vs refresh {:.1}s/epoch (ratio {ratio:.4}), top-1 {expand_top1:.4} vs {refresh_top1:.4}, old scores bitwise stable, {minutes:.1} min",
            report.timing.seconds_per_epoch, timing.seconds_per_epoch
        ))
    });
}

#[test]
fn c5_enabled_vs_full() {
    criterion("C5 enabled-vs-full", || {
        let mut lines = Vec::new();
        for seed in SEEDS {
            let ctx = world_ctx(seed);
            let attention = ladder_model(seed, PersonalizationMode::Attention);
            let min_enabled = 5usize;
            let att_enabled = attention_top_n(
                &attention,
                &ctx.test_samples,
                &ctx.profiles,
                Scope::Enabled,
                &[1],
                min_enabled,
            )
            .unwrap()[&1];
            let att_full = attention_top_n(
                &attention,
                &ctx.test_samples,
                &ctx.profiles,
                Scope::Full,
                &[1],
                min_enabled,
            )
            .unwrap()[&1];
            if att_enabled < att_full + 0.20 {
                return Err(format!(
                    "seed {seed}: attention-weight enabled top-1 {att_enabled:.4} does not exceed full {att_full:.4} by 20 points"
                ));
            }
            // Head-score scoping on the non-personalized model shows the
            // same direction.
            let multitask = ladder_model(seed, PersonalizationMode::None);
            let head_full = top1(&multitask, &ctx, Scope::Full);
            let head_enabled = top1(&multitask, &ctx, Scope::Enabled);
            if head_enabled < head_full + 0.20 {
                return Err(format!(
                    "seed {seed}: enabled-scope top-1 {head_enabled:.4} does not exceed full {head_full:.4} by 20 points"
                ));
            }
            // Attention-weight top-1 over enabled skills vs the random
            // 1/k baseline, over the profiles the table considers.
            let mut k_sum = 0.0;
            let mut k_count = 0.0;
            for s in &ctx.test_samples {
                if let Some(enabled) = ctx.profiles.get(&s.user_id) {
                    if enabled.len() > min_enabled {
                        k_sum += enabled.len() as f64;
                        k_count += 1.0;
                    }
                }
            }
            let random_baseline = k_count / k_sum.max(1.0);
            if att_enabled < 3.0 * random_baseline {
                return Err(format!(
                    "seed {seed}: attention top-1 {att_enabled:.4} below 3x random {random_baseline:.4}"
                ));
            }
            lines.push(format!(
                "seed {seed}: attention-weight enabled {att_enabled:.4} vs full {att_full:.4}; head-score enabled {head_enabled:.4} vs full {head_full:.4}; random 1/k {random_baseline:.4}"
            ));
        }
        Ok(lines.join(" | "))
    });
}

#[test]
fn c6_correlation_study() {
    criterion("C6 correlation", || {
        // Exact binomial binarization cases.
        let low = binom_cdf_leq(10, 0, 0.4);
        if (low - 0.00605).abs() > 1e-4 || low >= 0.05 {
            return Err(format!("P(X<=0|10,0.4) = {low:.6}, expected ~0.00605 rejecting"));
        }
        if binom_cdf_leq(10, 4, 0.4) < 0.05 || binom_tail_geq(10, 4, 0.4) < 0.05 {
            return Err("s=4/n=10 should be discarded (neither tail rejects)".into());
        }
        let high = binom_tail_geq(10, 9, 0.4);
        if (high - 0.00168).abs() > 1e-4 || high >= 0.05 {
            return Err(format!("P(X>=9|10,0.4) = {high:.6}, expected ~0.00168 rejecting"));
        }
        let mk = |n: u64, s: u64, utt: &str| -> Vec<SuggestionRecord> {
            (0..n)
                .map(|i| SuggestionRecord {
                    utterance: utt.into(),
                    skill_id: "sk".into(),
                    accepted: i < s,
                })
                .collect()
        };
        let mut log = mk(10, 0, "a");
        log.extend(mk(10, 4, "b"));
        log.extend(mk(10, 9, "c"));
        let set = binomial_binarize(&log, 0.4, 0.95).unwrap();
        if set.discarded != 1 || set.records.len() != 2 {
            return Err(format!(
                "binarization kept {} and discarded {}, expected 2/1",
                set.records.len(),
                set.discarded
            ));
        }

        // Synthetic suggestion log driven by the attention model's own
        // confidences plus noise; the attention model must correlate better
        // than the multiclass baseline (direction of 0.851 vs 0.312).
        let seed = 1u64;
        let ctx = world_ctx(seed);
        let att = ladder_model(seed, PersonalizationMode::Attention);
        let mc = multiclass_model(seed);
        let mut rng = SplitMix64::derive(seed, "suggestion-log");
        let mut records = Vec::new();
        let mut lookup: Vec<(String, String, f64, f64)> = Vec::new(); // utterance, skill, p_att, p_mc
        let empty: Vec<String> = Vec::new();
        for (i, s) in ctx.test_samples.iter().enumerate() {
            if i >= 400 {
                break;
            }
            let enabled = ctx.profiles.get(&s.user_id).unwrap_or(&empty);
            let ranked = score_all(&att, &s.tokens, enabled, Scope::Full).unwrap();
            let (suggested, p_att) = ranked[0].clone();
            let mc_scores = score_all(&mc, &s.tokens, enabled, Scope::Full).unwrap();
            let p_mc = mc_scores
                .iter()
                .find(|(id, _)| id == &suggested)
                .map(|(_, p)| *p)
                .unwrap_or(0.0);
            let utterance = s.tokens.join(" ");
            // Acceptance behavior: users accept confident suggestions,
            // reject unconfident ones, with noise; bimodal by construction.
            let accept_prob = if p_att > 0.6 { 0.92 } else { 0.08 };
            for _ in 0..12 {
                records.push(SuggestionRecord {
                    utterance: utterance.clone(),
                    skill_id: suggested.clone(),
                    accepted: rng.bernoulli(accept_prob),
                });
            }
            lookup.push((utterance, suggested, p_att, p_mc));
        }
        let binarized = binomial_binarize(&records, 0.4, 0.95).unwrap();
        if binarized.records.len() + binarized.discarded
            != records.len() / 12
        {
            return Err("binarization lost groups".into());
        }
        let mut att_conf = Vec::new();
        let mut mc_conf = Vec::new();
        let mut labels = Vec::new();
        for r in &binarized.records {
            if let Some((_, _, p_att, p_mc)) = lookup
                .iter()
                .find(|(u, sk, _, _)| u == &r.utterance && sk == &r.skill_id)
            {
                att_conf.push(*p_att);
                mc_conf.push(*p_mc);
                labels.push(r.label as f64);
            }
        }
        let r_att = pearson_correlation(&att_conf, &labels).unwrap();
        let r_mc = pearson_correlation(&mc_conf, &labels).unwrap();
        if r_att <= r_mc {
            return Err(format!(
                "attention r {r_att:.3} not above multiclass baseline r {r_mc:.3}"
            ));
        }
        // Histogram of acceptance rates is bimodal at the extremes.
        let rates = acceptance_rates(&records);
        let counts = histogram(&rates, 10);
        let extremes = counts[0] + counts[9];
        let total: usize = counts.iter().sum();
        if (extremes as f64) < 0.6 * total as f64 {
            return Err("acceptance-rate histogram is not bimodal at the extremes".into());
        }
        Ok(format!(
            "binomial cases exact; r_attention {r_att:.3} > r_multiclass {r_mc:.3} over {} labeled groups; histogram extremes {extremes}/{total}",
            labels.len()
        ))
    });
}

#[test]
fn c7_determinism_and_serialization() {
    criterion("C7 determinism", || {
        // Identical run config => identical checkpoint digest; small world
        // keeps this fast while exercising the full train path.
        let cfg = skillrouter_core::synth::WorldConfig {
            num_skills: 8,
            num_categories: 2,
            num_users: 30,
            enablement_mean: 4.0,
            utterances_per_skill: 250,
            seed: 11,
            ..Default::default()
        };
        let world = skillrouter_core::synth::generate_world(&cfg).unwrap();
        let fcfg = skillrouter_core::weaksup::FilterConfig {
            shared_intents: world.registry.shared_intents.clone(),
            ..Default::default()
        };
        let (retained, _) = skillrouter_core::weaksup::build_weak_dataset(
            &world.log,
            &world.patterns,
            &world.registry,
            &fcfg,
        )
        .unwrap();
        let split = skillrouter_core::corpus::split_by_user_time(&world.log, (0.6, 0.2, 0.2), 11)
            .unwrap();
        let dataset = skillrouter_core::weaksup::make_dataset_split(
            &split,
            &world.patterns,
            &world.registry,
            &retained,
            "det",
        )
        .unwrap();
        let tcfg = TrainConfig {
            personalization: PersonalizationMode::OneBitAndAttention,
            epochs: 2,
            seed: 11,
            ..Default::default()
        };
        let run = || {
            let (model, _) = train(
                &dataset,
                &world.registry.skill_ids(),
                &world.profiles,
                &EncoderConfig::default(),
                &tcfg,
            )
            .unwrap();
            checkpoint::save(&model, serde_json::json!({"run": "determinism"})).unwrap()
        };
        let bytes_a = run();
        let bytes_b = run();
        if checkpoint::sha256_hex(&bytes_a) != checkpoint::sha256_hex(&bytes_b) {
            return Err("identical configs produced different checkpoint digests".into());
        }
        // Round trip: save -> load -> save bitwise stable.
        let (loaded, header) = checkpoint::load(&bytes_a).unwrap();
        let bytes_c = checkpoint::save(&loaded, header.provenance.clone()).unwrap();
        if bytes_a != bytes_c {
            return Err("checkpoint round-trip not byte-stable".into());
        }
        // Inference reproducible across load cycles.
        let tokens: Vec<String> = world.log[0].tokens.clone();
        let enabled = world.profiles[0].enabled.clone();
        let (loaded2, _) = checkpoint::load(&bytes_c).unwrap();
        let a = score_all(&loaded, &tokens, &enabled, Scope::Full).unwrap();
        let b = score_all(&loaded2, &tokens, &enabled, Scope::Full).unwrap();
        for ((ia, pa), (ib, pb)) in a.iter().zip(&b) {
            if ia != ib || pa.to_bits() != pb.to_bits() {
                return Err("inference differs across load cycles".into());
            }
        }
        Ok(format!(
            "digest {} stable across runs, round trips and load cycles",
            &checkpoint::sha256_hex(&bytes_a)[..12]
        ))
    });
}

#[test]
fn c8_invariant_suites() {
    criterion("C8 invariants", || {
        let mut rng = SplitMix64::new(99);
        // Attention simplex, 1000 cases.
        let model = {
            let vocab = skillrouter_core::encoder::Vocabulary::build(
                ["alpha", "beta", "gamma"].map(String::from),
            );
            SkillModel::new(
                common::tiny_encoder(),
                vocab,
                skillrouter_core::model::ModelVariant::MultiTask,
                PersonalizationMode::OneBitAndAttention,
                (0..6).map(|i| format!("s{i}")).collect(),
                5,
            )
            .unwrap()
        };
        for case in 0..1000 {
            let mut h = Tensor::zeros(vec![model.embedding_dim()]);
            h.fill_uniform(&mut rng, -10.0, 10.0);
            let k = 1 + rng.below(6);
            let enabled: Vec<String> = (0..k).map(|i| format!("s{i}")).collect();
            let (w, _) = attend(&h, &enabled, &model).unwrap();
            let sum: f64 = w.data().iter().sum();
            if (sum - 1.0).abs() > 1e-9 || w.data().iter().any(|&x| x < 0.0) {
                return Err(format!("attention simplex violated at case {case}"));
            }
        }
        // Loss balancing identity at k = 2, 1000 cases.
        for case in 0..1000 {
            let p = (rng.next_f64() * (1.0 - 2e-9) + 1e-9).min(1.0 - 1e-12);
            let bd = loss_breakdown(p, &[p], 2).unwrap();
            if bd.positive.to_bits() != bd.negative.to_bits() {
                return Err(format!("loss balancing violated at case {case} (p={p})"));
            }
        }
        // Per-skill score independence under expansion, 1000 cases.
        let words = ["alpha", "beta", "gamma"];
        for case in 0..1000 {
            let mut m = model.clone();
            let tokens: Vec<String> = (0..1 + rng.below(3))
                .map(|_| rng.choose(&words).to_string())
                .collect();
            let k = rng.below(3);
            let enabled: Vec<String> = (0..k).map(|i| format!("s{i}")).collect();
            let before = score_all(&m, &tokens, &enabled, Scope::Full).unwrap();
            m.add_skill("zz_new", case as u64).unwrap();
            let after = score_all(&m, &tokens, &enabled, Scope::Full).unwrap();
            let after_old: Vec<&(String, f64)> =
                after.iter().filter(|(id, _)| id != "zz_new").collect();
            for ((ia, pa), (ib, pb)) in before.iter().zip(after_old) {
                if ia != ib || pa.to_bits() != pb.to_bits() {
                    return Err(format!("score independence violated at case {case}"));
                }
            }
        }
        // Projection optimality vs 1000 perturbations.
        {
            use skillrouter_core::bootstrap::{learn_projection, projection_residual};
            let m = 8;
            let mut pairs = Vec::new();
            for _ in 0..20 {
                let mut h = Tensor::zeros(vec![m]);
                let mut e = Tensor::zeros(vec![m]);
                h.fill_uniform(&mut rng, -1.0, 1.0);
                e.fill_uniform(&mut rng, -1.0, 1.0);
                pairs.push((h, e));
            }
            let proj = learn_projection(&pairs, 0.0).unwrap();
            let base = projection_residual(&proj.u, &pairs);
            for case in 0..1000 {
                let mut delta = vec![0.0; m * m];
                let mut norm = 0.0;
                for d in &mut delta {
                    *d = rng.uniform(-1.0, 1.0);
                    norm += *d * *d;
                }
                let norm = norm.sqrt();
                let mut u = proj.u.clone();
                for (x, d) in u.data_mut().iter_mut().zip(&delta) {
                    *x += d / norm * 1e-3;
                }
                if projection_residual(&u, &pairs) < base {
                    return Err(format!("perturbation {case} beat the projection"));
                }
            }
        }
        // Top-N monotonicity (and p in (0,1)), 1000 cases.
        for case in 0..1000 {
            let tokens: Vec<String> = (0..1 + rng.below(3))
                .map(|_| rng.choose(&words).to_string())
                .collect();
            let true_skill = format!("s{}", rng.below(6));
            let enabled = vec![true_skill.clone()];
            let samples = vec![EvalSample {
                tokens,
                skill_id: true_skill,
                user_id: "u".into(),
            }];
            let profiles = profile_map(&[UserProfile {
                user_id: "u".into(),
                enabled,
            }]);
            let table =
                top_n_accuracy(&model, &samples, &profiles, Scope::Full, &[1, 2, 4, 6]).unwrap();
            if !(table[&1] <= table[&2] && table[&2] <= table[&4] && table[&4] <= table[&6]) {
                return Err(format!("top-N monotonicity violated at case {case}"));
            }
            if table[&6] != 1.0 {
                return Err(format!("exhaustive top-N missed the label at case {case}"));
            }
            let enabled_acc =
                top_n_accuracy(&model, &samples, &profiles, Scope::Enabled, &[1]).unwrap();
            if enabled_acc[&1] < table[&1] {
                return Err(format!("enabled scope underperformed full at case {case}"));
            }
            let ranked = score_all(&model, &samples[0].tokens, &[], Scope::Full).unwrap();
            for (_, p) in ranked {
                if !(p > 0.0 && p < 1.0) {
                    return Err(format!("domain probability out of (0,1) at case {case}"));
                }
            }
            let _ = domain_probability(&Tensor::vector(vec![rng.uniform(-5.0, 5.0), 0.0]));
        }
        Ok("simplex, balancing, independence, projection, top-N: 1000 cases each".into())
    });
}
