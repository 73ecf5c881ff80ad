//! skillrouter: one binary orchestrating the whole pipeline.
//!
//! Subcommands: synth (generate a world), weakgen (weak supervision),
//! train, expand, refresh, eval, infer, bench. Every output artifact embeds
//! a provenance block (full config text, seed, input digests). Exit codes:
//! 0 success, 1 validation error, 2 runtime failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skillrouter_core::bootstrap::{self, NewDomain};
use skillrouter_core::checkpoint;
use skillrouter_core::corpus::{
    self, schema, read_jsonl, read_shared_intents, split_by_user_time, write_jsonl,
    DatasetSplit, QueryPattern, Skill, SkillRegistry, UserProfile, Utterance,
};
use skillrouter_core::evaluation::{self, EvalSample};
use skillrouter_core::model::SkillModel;
use skillrouter_core::personalization::{self, Scope};
use skillrouter_core::runconfig::RunConfig;
use skillrouter_core::synth;
use skillrouter_core::training;
use skillrouter_core::weaksup;

#[derive(Parser)]
#[command(
    name = "skillrouter",
    about = "Personalized skill classification pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file with dotted keys (train.lr=0.001); defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override single keys: --set train.epochs=3 (repeatable).
    /// Precedence: --set > SKILLROUTER_SEED env > config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world (skills, patterns, profiles, log, truth).
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run weak supervision over a log: weak.jsonl + retention report.
    Weakgen {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory with log.jsonl, skills.jsonl, patterns.jsonl,
        /// shared_intents.txt.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a data directory; writes checkpoint + metrics.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap new skills onto an existing checkpoint (frozen encoder).
    Expand {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory with the NEW skills' log.jsonl, skills.jsonl,
        /// patterns.jsonl, shared_intents.txt, profiles.jsonl.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain from scratch on a data directory (the expand baseline).
    Refresh {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: top-N tables, attention tables, embeddings,
    /// optional acceptance-rate correlation study.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Optional suggestions.jsonl for the correlation study.
        #[arg(long)]
        suggestions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank skills for one utterance.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Raw utterance text.
        text: String,
        /// Comma-separated enabled skill ids.
        #[arg(long, default_value = "")]
        profile: String,
        #[arg(long, default_value = "full")]
        scope: String,
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Optional patterns.jsonl; when a pattern matches, the latent
        /// command is classified instead of the raw text.
        #[arg(long)]
        patterns: Option<PathBuf>,
    },
    /// Measure single-thread inference latency and parameter footprint.
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        text: String,
        #[arg(long, default_value = "")]
        profile: String,
    },
}

/// Validation problems exit 1; runtime failures exit 2.
enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(1),
            CliError::Runtime(_) => ExitCode::from(2),
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).map_err(validation)?,
        None => RunConfig::default(),
    };
    if let Ok(seed) = std::env::var("SKILLROUTER_SEED") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| CliError::Validation(format!("bad SKILLROUTER_SEED '{seed}'")))?;
        cfg.seed = seed;
    }
    for kv in &args.set {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(CliError::Validation(format!(
                "--set expects KEY=VALUE, got '{kv}'"
            )));
        };
        cfg.apply(k.trim(), v.trim()).map_err(validation)?;
    }
    cfg.sync_seeds();
    Ok(cfg)
}

fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(checkpoint::sha256_hex(&bytes))
}

#[derive(PartialEq, Clone, Copy)]
enum Profiles {
    Skip,
    Validated,
    /// Loaded but validated by the caller (expand profiles reference both
    /// checkpoint skills and incoming skills).
    Deferred,
}

/// Loads the standard corpus files from a directory.
struct DataDir {
    log: Vec<Utterance>,
    registry: SkillRegistry,
    patterns: Vec<QueryPattern>,
    profiles: Vec<UserProfile>,
    digests: Vec<(&'static str, String)>,
}

fn load_data(dir: &Path, profiles_mode: Profiles) -> Result<DataDir, CliError> {
    let path = |name: &str| dir.join(name);
    let log: Vec<Utterance> = read_jsonl(path("log.jsonl"), schema::LOG).map_err(validation)?;
    let skills: Vec<Skill> = read_jsonl(path("skills.jsonl"), schema::SKILLS).map_err(validation)?;
    let patterns: Vec<QueryPattern> =
        read_jsonl(path("patterns.jsonl"), schema::PATTERNS).map_err(validation)?;
    let intents = read_shared_intents(path("shared_intents.txt")).map_err(validation)?;
    let registry = SkillRegistry::new(skills, intents).map_err(validation)?;
    let need_profiles = profiles_mode != Profiles::Skip;
    let profiles: Vec<UserProfile> = if need_profiles {
        let p: Vec<UserProfile> =
            read_jsonl(path("profiles.jsonl"), schema::PROFILES).map_err(validation)?;
        if profiles_mode == Profiles::Validated {
            for profile in &p {
                profile.validate(&registry).map_err(validation)?;
            }
        }
        p
    } else {
        Vec::new()
    };
    let mut digests = Vec::new();
    for name in [
        "log.jsonl",
        "skills.jsonl",
        "patterns.jsonl",
        "shared_intents.txt",
    ] {
        digests.push((
            match name {
                "log.jsonl" => "log",
                "skills.jsonl" => "skills",
                "patterns.jsonl" => "patterns",
                _ => "shared_intents",
            },
            file_digest(&path(name))?,
        ));
    }
    if need_profiles {
        digests.push(("profiles", file_digest(&path("profiles.jsonl"))?));
    }
    Ok(DataDir {
        log,
        registry,
        patterns,
        profiles,
        digests,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_synth(config: &ConfigArgs, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let world = synth::generate_world(&cfg.synth).map_err(validation)?;
    ensure_dir(out)?;
    let provenance = cfg.provenance(&[]);
    write_jsonl(
        out.join("log.jsonl"),
        schema::LOG,
        Some(&provenance),
        world.log.iter().cloned(),
    )
    .map_err(runtime)?;
    write_jsonl(
        out.join("skills.jsonl"),
        schema::SKILLS,
        Some(&provenance),
        world.registry.skills().iter().cloned(),
    )
    .map_err(runtime)?;
    write_jsonl(
        out.join("patterns.jsonl"),
        schema::PATTERNS,
        Some(&provenance),
        world.patterns.iter().cloned(),
    )
    .map_err(runtime)?;
    write_jsonl(
        out.join("profiles.jsonl"),
        schema::PROFILES,
        Some(&provenance),
        world.profiles.iter().cloned(),
    )
    .map_err(runtime)?;
    write_jsonl(
        out.join("ground_truth.jsonl"),
        schema::GROUND_TRUTH,
        Some(&provenance),
        world.ground_truth.records(),
    )
    .map_err(runtime)?;
    corpus::write_shared_intents(out.join("shared_intents.txt"), &world.registry.shared_intents)
        .map_err(runtime)?;
    eprintln!(
        "synth: {} skills, {} users, {} log lines -> {}",
        world.registry.len(),
        world.profiles.len(),
        world.log.len(),
        out.display()
    );
    Ok(())
}

fn cmd_weakgen(config: &ConfigArgs, data: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let d = load_data(data, Profiles::Skip)?;
    let fcfg = cfg.filter_config(d.registry.shared_intents.clone());
    let (retained, report) =
        weaksup::build_weak_dataset(&d.log, &d.patterns, &d.registry, &fcfg)
            .map_err(validation)?;
    ensure_dir(out)?;
    let digests: Vec<(&str, String)> = d.digests.iter().map(|(n, h)| (*n, h.clone())).collect();
    let provenance = cfg.provenance(&digests);
    write_jsonl(
        out.join("weak.jsonl"),
        schema::WEAK,
        Some(&provenance),
        retained.iter().cloned(),
    )
    .map_err(runtime)?;
    let report_value = serde_json::json!({
        "provenance": provenance,
        "candidates": report.candidates,
        "stages": report.stages,
        "retained": report.retained,
    });
    write_json(&out.join("weak_report.json"), &report_value)?;
    eprintln!(
        "weakgen: {} candidates -> {} retained -> {}",
        report.candidates,
        report.retained,
        out.display()
    );
    Ok(())
}

/// Shared train/refresh path: weak pipeline, user/time split, training.
fn run_training(
    cfg: &RunConfig,
    d: &DataDir,
    out: &Path,
    mode_name: &str,
) -> Result<(SkillModel, Vec<training::EpochMetrics>, DatasetSplit), CliError> {
    let fcfg = cfg.filter_config(d.registry.shared_intents.clone());
    let (retained, _) = weaksup::build_weak_dataset(&d.log, &d.patterns, &d.registry, &fcfg)
        .map_err(validation)?;
    let split = split_by_user_time(&d.log, cfg.split_ratios, cfg.seed).map_err(validation)?;
    let policy = format!(
        "user-and-time/v1;ratios={},{},{};seed={}",
        cfg.split_ratios.0, cfg.split_ratios.1, cfg.split_ratios.2, cfg.seed
    );
    let dataset = weaksup::make_dataset_split(&split, &d.patterns, &d.registry, &retained, &policy)
        .map_err(validation)?;
    if dataset.train.is_empty() {
        return Err(CliError::Validation(
            "weak pipeline produced an empty training split".into(),
        ));
    }
    let skills = d.registry.skill_ids();
    let (model, metrics) =
        training::train(&dataset, &skills, &d.profiles, &cfg.encoder, &cfg.train)
            .map_err(runtime)?;
    ensure_dir(out)?;
    let digests: Vec<(&str, String)> = d.digests.iter().map(|(n, h)| (*n, h.clone())).collect();
    let provenance = cfg.provenance(&digests);
    checkpoint::save_file(&out.join("checkpoint.bin"), &model, provenance.clone())
        .map_err(runtime)?;
    training::write_metrics(&out.join("metrics.jsonl"), &metrics, Some(&provenance))
        .map_err(runtime)?;
    model.vocab.save(out).map_err(runtime)?;
    eprintln!(
        "{mode_name}: {} train instances, {} epochs -> {}",
        dataset.train.len(),
        metrics.len(),
        out.display()
    );
    Ok((model, metrics, dataset))
}

fn cmd_train(config: &ConfigArgs, data: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let d = load_data(data, Profiles::Validated)?;
    run_training(&cfg, &d, out, "train")?;
    Ok(())
}

fn cmd_refresh(config: &ConfigArgs, data: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let d = load_data(data, Profiles::Validated)?;
    let (_, metrics, _) = run_training(&cfg, &d, out, "refresh")?;
    let seconds_per_epoch = if metrics.is_empty() {
        0.0
    } else {
        metrics.iter().map(|m| m.seconds).sum::<f64>() / metrics.len() as f64
    };
    let timing = bootstrap::TimingReport {
        mode: "refresh".into(),
        seconds_per_epoch,
        epochs: metrics.len(),
        final_top1: metrics.last().and_then(|m| m.val_top1),
    };
    write_json(
        &out.join("timing.json"),
        &serde_json::to_value(&timing).map_err(runtime)?,
    )?;
    Ok(())
}

fn cmd_expand(
    config: &ConfigArgs,
    checkpoint_path: &Path,
    data: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let (model, _) = checkpoint::load_file(checkpoint_path).map_err(validation)?;
    let d = load_data(data, Profiles::Deferred)?;
    // Profiles of incoming users may enable existing skills too; validate
    // against the union of checkpoint skills and incoming skills.
    for profile in &d.profiles {
        let mut seen = std::collections::BTreeSet::new();
        for id in &profile.enabled {
            if !seen.insert(id) {
                return Err(CliError::Validation(format!(
                    "profile {} enables {} twice",
                    profile.user_id, id
                )));
            }
            if !model.has_skill(id) && !d.registry.contains(id) {
                return Err(CliError::Validation(format!(
                    "profile {} enables unknown skill {}",
                    profile.user_id, id
                )));
            }
        }
    }
    let fcfg = cfg.filter_config(d.registry.shared_intents.clone());
    let (retained, _) = weaksup::build_weak_dataset(&d.log, &d.patterns, &d.registry, &fcfg)
        .map_err(validation)?;
    // Group per-user samples per new skill.
    let mut per_skill: BTreeMap<String, Vec<(corpus::WeakSample, String)>> = BTreeMap::new();
    let whole = corpus::LogSplit {
        train: d.log.clone(),
        validation: Vec::new(),
        test: Vec::new(),
        train_users: d.log.iter().map(|u| u.user_id.clone()).collect(),
        validation_users: Default::default(),
        test_users: Default::default(),
    };
    let dataset =
        weaksup::make_dataset_split(&whole, &d.patterns, &d.registry, &retained, "expand")
            .map_err(validation)?;
    for (w, user) in dataset.train {
        per_skill.entry(w.skill_id.clone()).or_default().push((w, user));
    }
    let new_domains: Vec<NewDomain> = per_skill
        .into_iter()
        .map(|(skill_id, train)| NewDomain { skill_id, train })
        .collect();
    if new_domains.is_empty() {
        return Err(CliError::Validation(
            "no weak samples extracted for any new skill".into(),
        ));
    }
    let (model, report) = bootstrap::expand(model, &new_domains, &d.profiles, &cfg.expand)
        .map_err(runtime)?;
    for w in report
        .coverage_warnings
        .iter()
        .chain(&report.zero_embedding_warnings)
    {
        eprintln!("warning: {w}");
    }
    ensure_dir(out)?;
    let mut digests: Vec<(&str, String)> =
        d.digests.iter().map(|(n, h)| (*n, h.clone())).collect();
    digests.push(("checkpoint", file_digest(checkpoint_path)?));
    let provenance = cfg.provenance(&digests);
    checkpoint::save_file(&out.join("checkpoint.bin"), &model, provenance.clone())
        .map_err(runtime)?;
    let mut report_value = serde_json::to_value(&report).map_err(runtime)?;
    report_value["provenance"] = provenance;
    write_json(&out.join("timing.json"), &report_value)?;
    eprintln!(
        "expand: {} new skills in {:.3}s/epoch -> {}",
        model.skill_count(),
        report.timing.seconds_per_epoch,
        out.display()
    );
    Ok(())
}

fn cmd_eval(
    config: &ConfigArgs,
    checkpoint_path: &Path,
    data: &Path,
    suggestions: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let (model, header) = checkpoint::load_file(checkpoint_path).map_err(validation)?;
    let d = load_data(data, Profiles::Validated)?;
    let fcfg = cfg.filter_config(d.registry.shared_intents.clone());
    let (retained, _) = weaksup::build_weak_dataset(&d.log, &d.patterns, &d.registry, &fcfg)
        .map_err(validation)?;
    let split = split_by_user_time(&d.log, cfg.split_ratios, cfg.seed).map_err(validation)?;
    let dataset = weaksup::make_dataset_split(&split, &d.patterns, &d.registry, &retained, "eval")
        .map_err(validation)?;
    let samples: Vec<EvalSample> = dataset
        .test
        .iter()
        .map(|(w, u)| EvalSample::from_weak(w, u))
        .collect();
    if samples.is_empty() {
        return Err(CliError::Validation("empty test split".into()));
    }
    let profiles = evaluation::profile_map(&d.profiles);
    let full = evaluation::top_n_accuracy(&model, &samples, &profiles, Scope::Full, &cfg.eval.top_ns)
        .map_err(runtime)?;
    let enabled =
        evaluation::top_n_accuracy(&model, &samples, &profiles, Scope::Enabled, &cfg.eval.top_ns)
            .map_err(runtime)?;
    let mut report = serde_json::json!({
        "checkpoint_skills": header.skills.len(),
        "test_samples": samples.len(),
        "top_n": { "full": full, "enabled": enabled },
    });
    if model.mode.uses_attention() {
        let att_enabled = evaluation::attention_top_n(
            &model,
            &samples,
            &profiles,
            Scope::Enabled,
            &cfg.eval.top_ns,
            cfg.eval.min_enabled,
        )
        .map_err(runtime)?;
        let att_full = evaluation::attention_top_n(
            &model,
            &samples,
            &profiles,
            Scope::Full,
            &cfg.eval.top_ns,
            cfg.eval.min_enabled,
        )
        .map_err(runtime)?;
        report["attention_top_n"] = serde_json::json!({
            "enabled": att_enabled,
            "full": att_full,
            "min_enabled": cfg.eval.min_enabled,
        });
        ensure_dir(out)?;
        std::fs::write(
            out.join("embeddings.tsv"),
            personalization::embeddings_tsv(&model).map_err(runtime)?,
        )
        .map_err(runtime)?;
    }
    ensure_dir(out)?;
    if let Some(sugg_path) = suggestions {
        let records: Vec<evaluation::SuggestionRecord> =
            read_jsonl(sugg_path, schema::SUGGESTIONS).map_err(validation)?;
        let binarized = evaluation::binomial_binarize(&records, 0.4, 0.95).map_err(runtime)?;
        // Correlate this model's confidence with the binary labels.
        let mut confidences = Vec::new();
        let mut labels = Vec::new();
        let empty: Vec<String> = Vec::new();
        for r in &binarized.records {
            let tokens = corpus::normalize(&r.utterance);
            if tokens.is_empty() || !model.has_skill(&r.skill_id) {
                continue;
            }
            let ranked = personalization::score_all(&model, &tokens, &empty, Scope::Full)
                .map_err(runtime)?;
            if let Some((_, p)) = ranked.iter().find(|(id, _)| id == &r.skill_id) {
                confidences.push(*p);
                labels.push(r.label as f64);
            }
        }
        let pearson = evaluation::pearson_correlation(&confidences, &labels).map_err(runtime)?;
        let rates = evaluation::acceptance_rates(&records);
        let counts = evaluation::histogram(&rates, cfg.eval.histogram_bins);
        std::fs::write(out.join("histogram.tsv"), evaluation::histogram_tsv(&counts))
            .map_err(runtime)?;
        let correlation = serde_json::json!({
            "pearson_r": pearson,
            "groups": binarized.records.len() + binarized.discarded,
            "labeled": binarized.records.len(),
            "discarded": binarized.discarded,
        });
        write_json(&out.join("correlation.json"), &correlation)?;
        report["correlation"] = correlation;
    }
    let digests: Vec<(&str, String)> = d.digests.iter().map(|(n, h)| (*n, h.clone())).collect();
    report["provenance"] = cfg.provenance(&digests);
    write_json(&out.join("eval_report.json"), &report)?;
    eprintln!("eval: report -> {}", out.join("eval_report.json").display());
    Ok(())
}

fn cmd_infer(
    checkpoint_path: &Path,
    text: &str,
    profile: &str,
    scope: &str,
    top: usize,
    patterns: Option<&Path>,
) -> Result<(), CliError> {
    let (model, _) = checkpoint::load_file(checkpoint_path).map_err(validation)?;
    let scope = match scope {
        "full" => Scope::Full,
        "enabled" => Scope::Enabled,
        other => {
            return Err(CliError::Validation(format!(
                "scope must be full or enabled, got '{other}'"
            )))
        }
    };
    let enabled: Vec<String> = profile
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    for id in &enabled {
        if !model.has_skill(id) {
            return Err(CliError::Validation(format!(
                "profile skill '{id}' not in checkpoint"
            )));
        }
    }
    let mut tokens = corpus::normalize(text);
    if let Some(patterns_path) = patterns {
        let patterns: Vec<QueryPattern> =
            read_jsonl(patterns_path, schema::PATTERNS).map_err(validation)?;
        // Pattern recognition runs against the checkpoint's skill list.
        let skills: Vec<Skill> = model
            .skills()
            .iter()
            .map(|id| Skill {
                skill_id: id.clone(),
                aliases: vec![id.clone()],
                catch_all_pattern_ids: Default::default(),
                category: String::new(),
            })
            .collect();
        if let Ok(registry) = SkillRegistry::new(skills, Default::default()) {
            let utterance = Utterance::new("infer", text, 0);
            if let Ok(Some(c)) = weaksup::match_pattern(&utterance, &patterns, &registry) {
                tokens = c.weak.command_tokens;
            }
        }
    }
    if tokens.is_empty() {
        return Err(CliError::Validation("utterance normalized to nothing".into()));
    }
    let ranked =
        personalization::classify(&model, &tokens, &enabled, scope, top).map_err(runtime)?;
    for (skill, score) in ranked {
        println!("{skill}\t{score:.6}");
    }
    Ok(())
}

fn cmd_bench(
    config: &ConfigArgs,
    checkpoint_path: &Path,
    text: &str,
    profile: &str,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let (model, _) = checkpoint::load_file(checkpoint_path).map_err(validation)?;
    let tokens = corpus::normalize(text);
    if tokens.is_empty() {
        return Err(CliError::Validation("utterance normalized to nothing".into()));
    }
    let enabled: Vec<String> = profile
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    for _ in 0..cfg.bench.warmup {
        personalization::classify(&model, &tokens, &enabled, Scope::Full, 5).map_err(runtime)?;
    }
    let mut samples_ns: Vec<u128> = Vec::with_capacity(cfg.bench.iterations);
    for _ in 0..cfg.bench.iterations {
        let t = std::time::Instant::now();
        let _ = personalization::classify(&model, &tokens, &enabled, Scope::Full, 5)
            .map_err(runtime)?;
        samples_ns.push(t.elapsed().as_nanos());
    }
    samples_ns.sort_unstable();
    let pick = |q: f64| samples_ns[((q * (samples_ns.len() - 1) as f64) as usize).min(samples_ns.len() - 1)];
    let report = serde_json::json!({
        "iterations": cfg.bench.iterations,
        "p50_ms": pick(0.50) as f64 / 1e6,
        "p99_ms": pick(0.99) as f64 / 1e6,
        "parameter_bytes": model.parameter_bytes(),
        "skills": model.skill_count(),
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
    Ok(())
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth { config, out } => cmd_synth(config, out),
        Command::Weakgen { config, data, out } => cmd_weakgen(config, data, out),
        Command::Train { config, data, out } => cmd_train(config, data, out),
        Command::Expand {
            config,
            checkpoint,
            data,
            out,
        } => cmd_expand(config, checkpoint, data, out),
        Command::Refresh { config, data, out } => cmd_refresh(config, data, out),
        Command::Eval {
            config,
            checkpoint,
            data,
            suggestions,
            out,
        } => cmd_eval(config, checkpoint, data, suggestions.as_deref(), out),
        Command::Infer {
            checkpoint,
            text,
            profile,
            scope,
            top,
            patterns,
        } => cmd_infer(checkpoint, text, profile, scope, *top, patterns.as_deref()),
        Command::Bench {
            config,
            checkpoint,
            text,
            profile,
        } => cmd_bench(config, checkpoint, text, profile),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}
