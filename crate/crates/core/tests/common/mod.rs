//! Shared helpers for the integration suites: finite-difference checks over
//! the real training losses and the synthetic-world training harness used
//! by the acceptance criteria.

#![allow(dead_code)]

use skillrouter_core::corpus::{split_by_user_time, DatasetSplit, UserProfile, WeakSample};
use skillrouter_core::encoder::{encode_utterance_tape, EncoderConfig, Vocabulary};
use skillrouter_core::evaluation::{profile_map, EvalSample, ProfileMap};
use skillrouter_core::model::{ModelVariant, PersonalizationMode, SkillModel, IND, OOD};
use skillrouter_core::numeric::check::max_relative_gradient_error;
use skillrouter_core::numeric::{NumericError, ParamStore, SplitMix64, Tape};
use skillrouter_core::synth::{generate_world, World, WorldConfig};
use skillrouter_core::training::{self, MultiTaskIds, NegativeSampling, TrainConfig};
use skillrouter_core::weaksup::{build_weak_dataset, make_dataset_split, FilterConfig};

pub const FD_EPS: f64 = 1e-5;

pub fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        char_emb_dim: 3,
        char_hidden: 2,
        word_emb_dim: 4,
        word_hidden: 3,
    }
}

fn gradcheck_words() -> Vec<String> {
    ["brew", "dark", "roast", "stream", "jazz", "mix", "dim", "light"]
        .map(String::from)
        .to_vec()
}

fn gradcheck_skills() -> Vec<String> {
    vec!["sk_a".into(), "sk_b".into(), "sk_c".into()]
}

fn gradcheck_pairs() -> Vec<(WeakSample, String)> {
    let mk = |cmd: &[&str], skill: &str, user: &str| {
        (
            WeakSample {
                command_tokens: cmd.iter().map(|s| s.to_string()).collect(),
                skill_id: skill.into(),
                pattern_id: "p".into(),
                count: 1,
            },
            user.to_string(),
        )
    };
    vec![
        mk(&["brew", "dark", "roast"], "sk_a", "u1"),
        mk(&["stream", "jazz", "mix"], "sk_b", "u2"),
        mk(&["dim", "light"], "sk_c", "u1"),
    ]
}

fn gradcheck_profiles() -> Vec<UserProfile> {
    vec![
        UserProfile {
            user_id: "u1".into(),
            enabled: vec!["sk_a".into(), "sk_c".into()],
        },
        UserProfile {
            user_id: "u2".into(),
            enabled: vec!["sk_b".into()],
        },
    ]
}

/// Tiny-init models concentrate SeLU pre-activations near zero, where a
/// central difference can straddle the kink. Moving head biases off zero
/// keeps the check on differentiable ground without touching the code under
/// test.
fn condition_head_biases(model: &mut SkillModel, seed: u64) {
    let mut rng = SplitMix64::derive(seed, "bias-conditioning");
    for id in model.store.ids() {
        let name = model.store.name(id).to_string();
        if name.ends_with("head.b") {
            for v in model.store.value_mut(id).data_mut() {
                *v += if rng.bernoulli(0.5) { 0.4 } else { -0.4 } + rng.uniform(-0.1, 0.1);
            }
        }
    }
}

/// Worst relative gradient error of the multitask loss (attention + flag
/// path) against central finite differences.
pub fn gradcheck_multitask(seed: u64) -> f64 {
    let vocab = Vocabulary::build(gradcheck_words());
    let mut model = SkillModel::new(
        tiny_encoder(),
        vocab,
        ModelVariant::MultiTask,
        PersonalizationMode::OneBitAndAttention,
        gradcheck_skills(),
        seed,
    )
    .unwrap();
    condition_head_biases(&mut model, seed);
    let data = training::prepare(&gradcheck_pairs(), &gradcheck_skills(), &gradcheck_profiles())
        .unwrap();

    let batch_loss = |view: &SkillModel,
                      data: &training::TrainData,
                      backward_into: Option<&mut ParamStore>|
     -> Result<f64, NumericError> {
        let enc = view.encoder().map_err(|_| NumericError::UnknownParam("enc".into()))?;
        let ids =
            MultiTaskIds::resolve(view).map_err(|_| NumericError::UnknownParam("ids".into()))?;
        let mut tape = Tape::new();
        let f0 = tape.scalar_input(0.0);
        let f1 = tape.scalar_input(1.0);
        let mut losses = Vec::new();
        for inst in &data.instances {
            let profile = &data.profiles[inst.profile_idx];
            let negatives: Vec<usize> = (0..view.skill_count())
                .filter(|&s| s != inst.skill_idx)
                .collect();
            let (_, _, total) = training::multitask_sample_loss(
                &mut tape, view, &enc, &ids, inst, profile, &negatives, f0, f1,
            )
            .map_err(|_| NumericError::UnknownParam("loss".into()))?;
            losses.push(total);
        }
        let sum = tape.add_n(&losses)?;
        let loss = tape.scale(sum, 1.0 / losses.len() as f64);
        let value = tape.value(loss).item();
        if let Some(store) = backward_into {
            tape.backward(loss, store)?;
        }
        Ok(value)
    };

    model.store.zero_grads();
    let mut grads_store = model.store.clone();
    batch_loss(&model, &data, Some(&mut grads_store)).unwrap();
    model.store = grads_store;
    let snapshot = model.clone();
    max_relative_gradient_error(
        &mut model.store,
        |store| {
            let mut view = snapshot.clone();
            view.store = store.clone();
            batch_loss(&view, &data, None)
        },
        FD_EPS,
    )
    .unwrap()
}

/// Worst relative gradient error of the multiclass softmax loss.
pub fn gradcheck_multiclass(seed: u64) -> f64 {
    let vocab = Vocabulary::build(gradcheck_words());
    let mut model = SkillModel::new(
        tiny_encoder(),
        vocab,
        ModelVariant::MultiClass,
        PersonalizationMode::None,
        gradcheck_skills(),
        seed,
    )
    .unwrap();
    let data = training::prepare(&gradcheck_pairs(), &gradcheck_skills(), &gradcheck_profiles())
        .unwrap();
    let batch_loss = |view: &SkillModel,
                      backward_into: Option<&mut ParamStore>|
     -> Result<f64, NumericError> {
        let enc = view.encoder().unwrap();
        let w = view.store.id("multiclass.w")?;
        let b = view.store.id("multiclass.b")?;
        let mut tape = Tape::new();
        let mut losses = Vec::new();
        for inst in &data.instances {
            let h = encode_utterance_tape(&mut tape, &view.store, &enc, &view.vocab, &inst.tokens)?;
            let logits = tape.affine(&view.store, w, b, h)?;
            losses.push(tape.neg_log_softmax_pick(logits, inst.skill_idx)?);
        }
        let sum = tape.add_n(&losses)?;
        let loss = tape.scale(sum, 1.0 / losses.len() as f64);
        let value = tape.value(loss).item();
        if let Some(store) = backward_into {
            tape.backward(loss, store)?;
        }
        Ok(value)
    };
    model.store.zero_grads();
    let mut grads_store = model.store.clone();
    batch_loss(&model, Some(&mut grads_store)).unwrap();
    model.store = grads_store;
    let snapshot = model.clone();
    max_relative_gradient_error(
        &mut model.store,
        |store| {
            let mut view = snapshot.clone();
            view.store = store.clone();
            batch_loss(&view, None)
        },
        FD_EPS,
    )
    .unwrap()
}

/// Worst relative gradient error of one binary classifier's cross-entropy.
pub fn gradcheck_binary(seed: u64) -> f64 {
    let vocab = Vocabulary::build(gradcheck_words());
    let skills = vec!["sk_a".to_string(), "sk_b".to_string()];
    let mut model = SkillModel::new(
        tiny_encoder(),
        vocab,
        ModelVariant::Binary,
        PersonalizationMode::None,
        skills.clone(),
        seed,
    )
    .unwrap();
    condition_head_biases(&mut model, seed);
    let data = training::prepare(&gradcheck_pairs()[..2], &skills, &gradcheck_profiles()).unwrap();
    let batch_loss = |view: &SkillModel,
                      backward_into: Option<&mut ParamStore>|
     -> Result<f64, NumericError> {
        let enc = view.binary_encoder("sk_a").unwrap();
        let (w, b) = view.head_ids("sk_a").unwrap();
        let mut tape = Tape::new();
        let mut losses = Vec::new();
        for (inst, label) in data.instances.iter().zip([IND, OOD]) {
            let h = encode_utterance_tape(&mut tape, &view.store, &enc, &view.vocab, &inst.tokens)?;
            let affine = tape.affine(&view.store, w, b, h)?;
            let act = tape.selu(affine);
            losses.push(tape.neg_log_softmax_pick(act, label)?);
        }
        let sum = tape.add_n(&losses)?;
        let loss = tape.scale(sum, 0.5);
        let value = tape.value(loss).item();
        if let Some(store) = backward_into {
            tape.backward(loss, store)?;
        }
        Ok(value)
    };
    model.store.zero_grads();
    let mut grads_store = model.store.clone();
    batch_loss(&model, Some(&mut grads_store)).unwrap();
    model.store = grads_store;
    let snapshot = model.clone();
    max_relative_gradient_error(
        &mut model.store,
        |store| {
            let mut view = snapshot.clone();
            view.store = store.clone();
            batch_loss(&view, None)
        },
        FD_EPS,
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// Synthetic-world training harness for the acceptance criteria.

pub struct WorldCtx {
    pub world: World,
    pub dataset: DatasetSplit,
    pub skills: Vec<String>,
    pub profiles: ProfileMap,
    pub test_samples: Vec<EvalSample>,
}

/// The acceptance world: 30 skills, 5 categories, overlap 0.8, 200 users,
/// and a log sized to land near 20k weak training instances.
pub fn acceptance_world_config(seed: u64) -> WorldConfig {
    WorldConfig {
        utterances_per_skill: 2500,
        seed,
        ..WorldConfig::default()
    }
}

pub fn build_world_ctx(seed: u64) -> WorldCtx {
    let world = generate_world(&acceptance_world_config(seed)).unwrap();
    let fcfg = FilterConfig {
        shared_intents: world.registry.shared_intents.clone(),
        ..Default::default()
    };
    let (retained, _) =
        build_weak_dataset(&world.log, &world.patterns, &world.registry, &fcfg).unwrap();
    let split = split_by_user_time(&world.log, (0.6, 0.2, 0.2), seed).unwrap();
    let dataset = make_dataset_split(
        &split,
        &world.patterns,
        &world.registry,
        &retained,
        "acceptance",
    )
    .unwrap();
    let skills = world.registry.skill_ids();
    let profiles = profile_map(&world.profiles);
    let test_samples = dataset
        .test
        .iter()
        .map(|(w, u)| EvalSample::from_weak(w, u))
        .collect();
    WorldCtx {
        world,
        dataset,
        skills,
        profiles,
        test_samples,
    }
}

pub fn ladder_train_config(
    variant: ModelVariant,
    mode: PersonalizationMode,
    seed: u64,
) -> TrainConfig {
    TrainConfig {
        variant,
        personalization: mode,
        epochs: 4,
        batch_size: 32,
        lr: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        negative_sampling: NegativeSampling::Exact,
        seed,
    }
}

pub fn train_ladder_variant(ctx: &WorldCtx, mode: PersonalizationMode, seed: u64) -> SkillModel {
    let cfg = ladder_train_config(ModelVariant::MultiTask, mode, seed);
    let (model, _) = training::train(
        &ctx.dataset,
        &ctx.skills,
        &ctx.world.profiles,
        &EncoderConfig::default(),
        &cfg,
    )
    .unwrap();
    model
}

pub fn train_multiclass_baseline(ctx: &WorldCtx, seed: u64) -> SkillModel {
    let cfg = ladder_train_config(ModelVariant::MultiClass, PersonalizationMode::None, seed);
    let (model, _) = training::train(
        &ctx.dataset,
        &ctx.skills,
        &ctx.world.profiles,
        &EncoderConfig::default(),
        &cfg,
    )
    .unwrap();
    model
}
