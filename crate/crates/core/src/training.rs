//! Loss construction, negative-domain selection, the model-variant ladder
//! (binary / multiclass / multitask x personalization) and the training
//! loop. Training is single-threaded and a pure function of its config and
//! inputs: identical seeds give bitwise-identical parameter stores.

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DatasetSplit, UserProfile};
use crate::encoder::{encode_utterance, encode_utterance_tape, EncoderConfig, Vocabulary};
use crate::evaluation::{self, EvalSample, ProfileMap};
use crate::model::{ModelError, ModelVariant, PersonalizationMode, SkillModel, IND, OOD};
use crate::numeric::{Adam, AdamConfig, NodeRef, NumericError, ParamId, SplitMix64, Tape, Tensor};
use crate::personalization::{attend_tape, features_tape};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
    #[error("invalid training input: {0}")]
    Invalid(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        epoch: usize,
        batch: usize,
        source: NumericError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSampling {
    /// Every other domain is a negative (the loss equation taken literally).
    Exact,
    /// q negatives per sample; half uniform, half from domains sharing a
    /// command token (one-sided selection: keep the informative negatives).
    Sampled { q: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: ModelVariant,
    pub personalization: PersonalizationMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub negative_sampling: NegativeSampling,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: ModelVariant::MultiTask,
            personalization: PersonalizationMode::None,
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            negative_sampling: NegativeSampling::Exact,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.personalization != PersonalizationMode::None
            && self.variant != ModelVariant::MultiTask
        {
            return Err(TrainError::Invalid(format!(
                "personalization {} requires the multitask variant",
                self.personalization
            )));
        }
        if let NegativeSampling::Sampled { q } = self.negative_sampling {
            if q < 1 {
                return Err(TrainError::Invalid("sampled q must be >= 1".into()));
            }
        }
        if self.batch_size == 0 {
            return Err(TrainError::Invalid("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub positive: f64,
    pub negative: f64,
    pub total: f64,
}

/// -log p for the true domain's IND probability.
pub fn positive_loss(p_ind_true: f64) -> Result<f64, TrainError> {
    if !(p_ind_true > 0.0 && p_ind_true < 1.0) {
        return Err(TrainError::Invalid(format!(
            "positive_loss needs p in (0,1), got {p_ind_true}"
        )));
    }
    Ok(-p_ind_true.ln())
}

/// -(1/(k-1)) sum of log OOD probabilities over the negative domains; the
/// k-1 divisor balances the positive and negative terms.
pub fn negative_loss(p_ood: &[f64], k: usize) -> Result<f64, TrainError> {
    if k < 2 {
        return Err(TrainError::Invalid("negative_loss needs k >= 2".into()));
    }
    if p_ood.is_empty() {
        return Err(TrainError::Invalid("negative_loss needs negatives".into()));
    }
    let mut sum = 0.0;
    for &p in p_ood {
        if !(p > 0.0 && p < 1.0) {
            return Err(TrainError::Invalid(format!(
                "negative_loss needs p in (0,1), got {p}"
            )));
        }
        sum += p.ln();
    }
    Ok(-sum / (k - 1) as f64)
}

/// Sampled-mode estimator: the mean of -log p over the drawn negatives,
/// unbiased for the exact mean when the draw is uniform.
pub fn negative_loss_sampled(p_ood: &[f64]) -> Result<f64, TrainError> {
    if p_ood.is_empty() {
        return Err(TrainError::Invalid("negative_loss needs negatives".into()));
    }
    let mut sum = 0.0;
    for &p in p_ood {
        if !(p > 0.0 && p < 1.0) {
            return Err(TrainError::Invalid(format!(
                "negative_loss needs p in (0,1), got {p}"
            )));
        }
        sum += p.ln();
    }
    Ok(-sum / p_ood.len() as f64)
}

pub fn loss_breakdown(p_true: f64, p_ood: &[f64], k: usize) -> Result<LossBreakdown, TrainError> {
    let positive = positive_loss(p_true)?;
    let negative = negative_loss(p_ood, k)?;
    Ok(LossBreakdown {
        positive,
        negative,
        total: positive + negative,
    })
}

/// One training item after profile resolution.
#[derive(Debug, Clone)]
pub struct Instance {
    pub tokens: Vec<String>,
    pub skill_idx: usize,
    pub profile_idx: usize,
    /// Skills sharing at least one command token with this instance
    /// (sorted, true skill excluded); the informative-negative pool.
    pub confusables: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PreppedProfile {
    pub user_id: String,
    pub enabled_ids: Vec<String>,
    pub enabled_idx: Vec<usize>,
    pub mask: Vec<bool>,
}

/// Training view of a dataset split: instances with resolved skill and
/// profile indices plus the confusable-negative pools.
pub struct TrainData {
    pub instances: Vec<Instance>,
    pub profiles: Vec<PreppedProfile>,
}

pub fn prepare(
    pairs: &[(crate::corpus::WeakSample, String)],
    model_skills: &[String],
    profiles: &[UserProfile],
) -> Result<TrainData, TrainError> {
    let skill_idx: HashMap<&str, usize> = model_skills
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut profile_index: HashMap<&str, usize> = HashMap::new();
    let mut prepped = Vec::new();
    for p in profiles {
        let enabled_idx: Vec<usize> = p
            .enabled
            .iter()
            .filter_map(|id| skill_idx.get(id.as_str()).copied())
            .collect();
        let mut mask = vec![false; model_skills.len()];
        for &i in &enabled_idx {
            mask[i] = true;
        }
        profile_index.insert(p.user_id.as_str(), prepped.len());
        prepped.push(PreppedProfile {
            user_id: p.user_id.clone(),
            enabled_ids: p.enabled.clone(),
            enabled_idx,
            mask,
        });
    }
    // Empty fallback profile for users without one.
    let fallback = prepped.len();
    prepped.push(PreppedProfile {
        user_id: String::new(),
        enabled_ids: Vec::new(),
        enabled_idx: Vec::new(),
        mask: vec![false; model_skills.len()],
    });

    // token -> skills that use it, for informative negatives.
    let mut token_skills: HashMap<&str, BTreeSet<usize>> = HashMap::new();
    for (w, _) in pairs {
        if let Some(&s) = skill_idx.get(w.skill_id.as_str()) {
            for t in &w.command_tokens {
                token_skills.entry(t.as_str()).or_default().insert(s);
            }
        }
    }
    let mut instances = Vec::with_capacity(pairs.len());
    for (w, user) in pairs {
        let Some(&sidx) = skill_idx.get(w.skill_id.as_str()) else {
            return Err(TrainError::Invalid(format!(
                "sample labeled with unknown skill {}",
                w.skill_id
            )));
        };
        let mut confusable: BTreeSet<usize> = BTreeSet::new();
        for t in &w.command_tokens {
            if let Some(set) = token_skills.get(t.as_str()) {
                confusable.extend(set.iter().copied());
            }
        }
        confusable.remove(&sidx);
        instances.push(Instance {
            tokens: w.command_tokens.clone(),
            skill_idx: sidx,
            profile_idx: *profile_index.get(user.as_str()).unwrap_or(&fallback),
            confusables: confusable.into_iter().collect(),
        });
    }
    Ok(TrainData {
        instances,
        profiles: prepped,
    })
}

/// Negative domain sets for a batch. Exact mode lists all other domains;
/// sampled mode draws without replacement, half uniform and half from the
/// instance's confusable pool.
pub fn build_batch(
    data: &TrainData,
    batch: &[usize],
    num_skills: usize,
    sampling: NegativeSampling,
    rng: &mut SplitMix64,
) -> Vec<Vec<usize>> {
    batch
        .iter()
        .map(|&i| {
            let inst = &data.instances[i];
            match sampling {
                NegativeSampling::Exact => (0..num_skills)
                    .filter(|&s| s != inst.skill_idx)
                    .collect(),
                NegativeSampling::Sampled { q } => {
                    let q = q.min(num_skills.saturating_sub(1));
                    let mut chosen: BTreeSet<usize> = BTreeSet::new();
                    let informative_quota = q / 2;
                    let mut pool = inst.confusables.clone();
                    while chosen.len() < informative_quota && !pool.is_empty() {
                        let j = rng.below(pool.len());
                        chosen.insert(pool.swap_remove(j));
                    }
                    while chosen.len() < q {
                        let s = rng.below(num_skills);
                        if s != inst.skill_idx {
                            chosen.insert(s);
                        }
                    }
                    chosen.into_iter().collect()
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_top1: Option<f64>,
    pub seconds: f64,
}

/// Resolved parameter handles for the hot loop.
pub struct MultiTaskIds {
    pub heads: Vec<(ParamId, ParamId)>,
    pub embs: Vec<Option<ParamId>>,
}

impl MultiTaskIds {
    pub fn resolve(model: &SkillModel) -> Result<Self, TrainError> {
        let mut heads = Vec::new();
        let mut embs = Vec::new();
        for s in model.skills() {
            heads.push(model.head_ids(s)?);
            embs.push(if model.mode.uses_attention() {
                Some(model.embedding_id(s)?)
            } else {
                None
            });
        }
        Ok(MultiTaskIds { heads, embs })
    }
}

/// Per-sample multitask loss on the tape. Returns (positive, negative,
/// total) nodes so callers can inspect the parts. Public so gradient
/// verification can differentiate the exact training loss.
#[allow(clippy::too_many_arguments)]
pub fn multitask_sample_loss(
    tape: &mut Tape,
    model: &SkillModel,
    enc_params: &crate::encoder::EncoderParams,
    ids: &MultiTaskIds,
    inst: &Instance,
    profile: &PreppedProfile,
    negatives: &[usize],
    flag_zero: NodeRef,
    flag_one: NodeRef,
) -> Result<(NodeRef, NodeRef, NodeRef), TrainError> {
    let h_bar = encode_utterance_tape(tape, &model.store, enc_params, &model.vocab, &inst.tokens)?;
    let mode = model.mode;
    let context = if mode.uses_attention() {
        if profile.enabled_idx.is_empty() {
            Some(tape.input(Tensor::zeros(vec![model.embedding_dim()])))
        } else {
            let emb_nodes: Vec<NodeRef> = profile
                .enabled_idx
                .iter()
                .map(|&i| tape.param(&model.store, ids.embs[i].expect("attention mode")))
                .collect();
            Some(attend_tape(tape, h_bar, &emb_nodes)?.1)
        }
    } else {
        None
    };
    // At most two distinct feature vectors per sample: candidate enabled or
    // not. Heads pick by membership.
    let z_on = features_tape(tape, h_bar, mode, context, Some(flag_one))?;
    let z_off = if mode.uses_flag() {
        features_tape(tape, h_bar, mode, context, Some(flag_zero))?
    } else {
        z_on
    };
    let features_for = |s: usize| if profile.mask[s] { z_on } else { z_off };

    let (w, b) = ids.heads[inst.skill_idx];
    let affine = tape.affine(&model.store, w, b, features_for(inst.skill_idx))?;
    let act = tape.selu(affine);
    let positive = tape.neg_log_softmax_pick(act, IND)?;

    let mut terms = Vec::with_capacity(negatives.len());
    for &n in negatives {
        let (w, b) = ids.heads[n];
        let affine = tape.affine(&model.store, w, b, features_for(n))?;
        let act = tape.selu(affine);
        terms.push(tape.neg_log_softmax_pick(act, OOD)?);
    }
    let divisor = match negatives.len() {
        0 => {
            return Err(TrainError::Invalid(
                "multitask loss needs at least one negative".into(),
            ))
        }
        n => n as f64,
    };
    let scale = match negatives.len() + 1 == model.skill_count() {
        // Exact mode: the 1/(k-1) balancing factor.
        true => 1.0 / (model.skill_count() - 1) as f64,
        false => 1.0 / divisor,
    };
    let neg_sum = tape.add_n(&terms)?;
    let negative = tape.scale(neg_sum, scale);
    let total = tape.add_n(&[positive, negative])?;
    Ok((positive, negative, total))
}

/// Deterministic training entry point. Builds the vocabulary from the
/// training split, initializes the model per config and optimizes. Returns
/// the model and per-epoch metrics (loss, validation top-1, wall seconds).
pub fn train(
    dataset: &DatasetSplit,
    skills: &[String],
    profiles: &[UserProfile],
    encoder_cfg: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<(SkillModel, Vec<EpochMetrics>), TrainError> {
    cfg.validate()?;
    if dataset.train.is_empty() {
        return Err(TrainError::Invalid("empty training split".into()));
    }
    let vocab = Vocabulary::build(
        dataset
            .train
            .iter()
            .flat_map(|(w, _)| w.command_tokens.iter().cloned()),
    );
    let model = SkillModel::new(
        *encoder_cfg,
        vocab,
        cfg.variant,
        cfg.personalization,
        skills.to_vec(),
        cfg.seed,
    )?;
    train_model(model, dataset, profiles, cfg)
}

/// Optimizes an already-initialized model (refresh reuses this; expand has
/// its own restricted loop in the bootstrap module).
pub fn train_model(
    mut model: SkillModel,
    dataset: &DatasetSplit,
    profiles: &[UserProfile],
    cfg: &TrainConfig,
) -> Result<(SkillModel, Vec<EpochMetrics>), TrainError> {
    cfg.validate()?;
    let data = prepare(&dataset.train, model.skills(), profiles)?;
    let profile_map = evaluation::profile_map(profiles);
    let val_samples: Vec<EvalSample> = dataset
        .validation
        .iter()
        .map(|(w, u)| EvalSample::from_weak(w, u))
        .collect();

    let metrics = match model.variant {
        ModelVariant::MultiTask => {
            train_multitask(&mut model, &data, &val_samples, &profile_map, cfg)?
        }
        ModelVariant::MultiClass => {
            train_multiclass(&mut model, &data, &val_samples, &profile_map, cfg)?
        }
        ModelVariant::Binary => train_binary(&mut model, &data, &val_samples, &profile_map, cfg)?,
    };
    if model.variant == ModelVariant::MultiTask {
        write_domain_buffers(&mut model, &data, cfg.seed)?;
    }
    Ok((model, metrics))
}

fn validation_top1(
    model: &SkillModel,
    val: &[EvalSample],
    profiles: &ProfileMap,
) -> Result<Option<f64>, TrainError> {
    if val.is_empty() {
        return Ok(None);
    }
    let table = evaluation::top_n_accuracy(
        model,
        val,
        profiles,
        crate::personalization::Scope::Full,
        &[1],
    )?;
    Ok(Some(table[&1]))
}

fn train_multitask(
    model: &mut SkillModel,
    data: &TrainData,
    val: &[EvalSample],
    profile_map: &ProfileMap,
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>, TrainError> {
    let enc_params = model.encoder()?;
    let ids = MultiTaskIds::resolve(model)?;
    let mut adam = Adam::new(cfg.adam(), &model.store);
    let mut shuffle_rng = SplitMix64::derive(cfg.seed, "shuffle");
    let mut negative_rng = SplitMix64::derive(cfg.seed, "negatives");
    let mut order: Vec<usize> = (0..data.instances.len()).collect();
    let mut metrics = Vec::new();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let negatives = build_batch(
                data,
                batch,
                model.skill_count(),
                cfg.negative_sampling,
                &mut negative_rng,
            );
            let mut tape = Tape::new();
            let flag_zero = tape.scalar_input(0.0);
            let flag_one = tape.scalar_input(1.0);
            let mut sample_losses = Vec::with_capacity(batch.len());
            for (j, &i) in batch.iter().enumerate() {
                let inst = &data.instances[i];
                let profile = &data.profiles[inst.profile_idx];
                let (_, _, total) = multitask_sample_loss(
                    &mut tape,
                    model,
                    &enc_params,
                    &ids,
                    inst,
                    profile,
                    &negatives[j],
                    flag_zero,
                    flag_one,
                )?;
                sample_losses.push(total);
            }
            let summed = tape.add_n(&sample_losses)?;
            let batch_loss = tape.scale(summed, 1.0 / batch.len() as f64);
            loss_sum += tape.value(batch_loss).item() * batch.len() as f64;
            tape.backward(batch_loss, &mut model.store)
                .map_err(|source| TrainError::Diverged {
                    epoch,
                    batch: batch_no,
                    source,
                })?;
            adam.step(&mut model.store)?;
        }
        let seconds = started.elapsed().as_secs_f64();
        metrics.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / data.instances.len() as f64,
            val_top1: validation_top1(model, val, profile_map)?,
            seconds,
        });
    }
    Ok(metrics)
}

fn train_multiclass(
    model: &mut SkillModel,
    data: &TrainData,
    val: &[EvalSample],
    profile_map: &ProfileMap,
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>, TrainError> {
    let enc_params = model.encoder()?;
    let w = model.store.id("multiclass.w")?;
    let b = model.store.id("multiclass.b")?;
    let mut adam = Adam::new(cfg.adam(), &model.store);
    let mut shuffle_rng = SplitMix64::derive(cfg.seed, "shuffle");
    let mut order: Vec<usize> = (0..data.instances.len()).collect();
    let mut metrics = Vec::new();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut tape = Tape::new();
            let mut sample_losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let inst = &data.instances[i];
                let h_bar = encode_utterance_tape(
                    &mut tape,
                    &model.store,
                    &enc_params,
                    &model.vocab,
                    &inst.tokens,
                )?;
                let logits = tape.affine(&model.store, w, b, h_bar)?;
                sample_losses.push(tape.neg_log_softmax_pick(logits, inst.skill_idx)?);
            }
            let summed = tape.add_n(&sample_losses)?;
            let batch_loss = tape.scale(summed, 1.0 / batch.len() as f64);
            loss_sum += tape.value(batch_loss).item() * batch.len() as f64;
            tape.backward(batch_loss, &mut model.store)
                .map_err(|source| TrainError::Diverged {
                    epoch,
                    batch: batch_no,
                    source,
                })?;
            adam.step(&mut model.store)?;
        }
        let seconds = started.elapsed().as_secs_f64();
        metrics.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / data.instances.len() as f64,
            val_top1: validation_top1(model, val, profile_map)?,
            seconds,
        });
    }
    Ok(metrics)
}

/// The binary baseline: an independent encoder and head per skill, trained
/// with per-skill binary cross-entropy over its positives plus an
/// equal-sized negative sample per epoch.
fn train_binary(
    model: &mut SkillModel,
    data: &TrainData,
    val: &[EvalSample],
    profile_map: &ProfileMap,
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>, TrainError> {
    let skills: Vec<String> = model.skills().to_vec();
    let mut per_skill_instances: Vec<Vec<usize>> = vec![Vec::new(); skills.len()];
    for (i, inst) in data.instances.iter().enumerate() {
        per_skill_instances[inst.skill_idx].push(i);
    }
    let mut metrics = vec![
        EpochMetrics {
            epoch: 0,
            train_loss: 0.0,
            val_top1: None,
            seconds: 0.0,
        };
        cfg.epochs
    ];
    for (sidx, skill) in skills.iter().enumerate() {
        let enc_params = model.binary_encoder(skill)?;
        let (w, b) = model.head_ids(skill)?;
        let subset = model.store.ids_with_prefix(&format!("binary.{skill}."));
        let mut adam = Adam::for_params(cfg.adam(), &model.store, &subset);
        let mut rng = SplitMix64::derive(cfg.seed, &format!("binary.{skill}"));
        let positives = &per_skill_instances[sidx];
        if positives.is_empty() {
            continue;
        }
        for epoch in 0..cfg.epochs {
            let started = Instant::now();
            // Positives plus an equal number of sampled negatives.
            let mut items: Vec<(usize, usize)> = positives.iter().map(|&i| (i, IND)).collect();
            for _ in 0..positives.len() {
                loop {
                    let j = rng.below(data.instances.len());
                    if data.instances[j].skill_idx != sidx {
                        items.push((j, OOD));
                        break;
                    }
                }
            }
            rng.shuffle(&mut items);
            let mut loss_sum = 0.0;
            for (batch_no, batch) in items.chunks(cfg.batch_size).enumerate() {
                let mut tape = Tape::new();
                let mut sample_losses = Vec::with_capacity(batch.len());
                for &(i, label) in batch {
                    let inst = &data.instances[i];
                    let h_bar = encode_utterance_tape(
                        &mut tape,
                        &model.store,
                        &enc_params,
                        &model.vocab,
                        &inst.tokens,
                    )?;
                    let affine = tape.affine(&model.store, w, b, h_bar)?;
                    let act = tape.selu(affine);
                    sample_losses.push(tape.neg_log_softmax_pick(act, label)?);
                }
                let summed = tape.add_n(&sample_losses)?;
                let batch_loss = tape.scale(summed, 1.0 / batch.len() as f64);
                loss_sum += tape.value(batch_loss).item() * batch.len() as f64;
                tape.backward(batch_loss, &mut model.store)
                    .map_err(|source| TrainError::Diverged {
                        epoch,
                        batch: batch_no,
                        source,
                    })?;
                adam.step(&mut model.store)?;
            }
            metrics[epoch].epoch = epoch;
            metrics[epoch].train_loss += loss_sum / items.len() as f64 / skills.len() as f64;
            metrics[epoch].seconds += started.elapsed().as_secs_f64();
        }
    }
    if !val.is_empty() {
        let last = metrics.len().saturating_sub(1);
        metrics[last].val_top1 = validation_top1(model, val, profile_map)?;
    }
    Ok(metrics)
}

/// Stores per-domain utterance averages and a fixed negative cache as model
/// buffers; the bootstrap projection and expand negatives read these, so a
/// checkpoint alone is enough to add skills later.
fn write_domain_buffers(
    model: &mut SkillModel,
    data: &TrainData,
    seed: u64,
) -> Result<(), TrainError> {
    let enc_params = model.encoder()?;
    let h = model.encoder_cfg.hidden_dim();
    let mut sums: Vec<Vec<f64>> = vec![vec![0.0; h]; model.skill_count()];
    let mut counts = vec![0usize; model.skill_count()];
    let mut encoded: Vec<Tensor> = Vec::with_capacity(data.instances.len());
    for inst in &data.instances {
        let enc = encode_utterance(
            &model.store,
            &enc_params,
            &model.encoder_cfg,
            &model.vocab,
            &inst.tokens,
        )?;
        for (acc, &v) in sums[inst.skill_idx].iter_mut().zip(enc.h_bar.data()) {
            *acc += v;
        }
        counts[inst.skill_idx] += 1;
        encoded.push(enc.h_bar);
    }
    let skills: Vec<String> = model.skills().to_vec();
    for (i, skill) in skills.iter().enumerate() {
        if counts[i] == 0 {
            continue;
        }
        let avg: Vec<f64> = sums[i].iter().map(|&s| s / counts[i] as f64).collect();
        model
            .buffers
            .insert(format!("havg.{skill}"), Tensor::vector(avg));
    }
    // Negative cache: encoded features of a fixed sample of training
    // utterances, with the attention context baked in (embeddings are
    // frozen from here on for expand).
    let mut rng = SplitMix64::derive(seed, "negcache");
    let cache_size = data.instances.len().min(512);
    let mut picks: Vec<usize> = (0..data.instances.len()).collect();
    rng.shuffle(&mut picks);
    picks.truncate(cache_size);
    picks.sort_unstable();
    let mut h_cache = Vec::with_capacity(cache_size * h);
    let mut s_cache = Vec::new();
    for &i in &picks {
        h_cache.extend_from_slice(encoded[i].data());
        if model.mode.uses_attention() {
            let profile = &data.profiles[data.instances[i].profile_idx];
            let context = if profile.enabled_ids.is_empty() {
                Tensor::zeros(vec![model.embedding_dim()])
            } else {
                crate::personalization::attend(&encoded[i], &profile.enabled_ids, model)?.1
            };
            s_cache.extend_from_slice(context.data());
        }
    }
    model.buffers.insert(
        "negcache.h".into(),
        Tensor::new(vec![cache_size, h], h_cache).map_err(TrainError::Numeric)?,
    );
    if model.mode.uses_attention() {
        model.buffers.insert(
            "negcache.s".into(),
            Tensor::new(vec![cache_size, model.embedding_dim()], s_cache)
                .map_err(TrainError::Numeric)?,
        );
    }
    Ok(())
}

/// Writes per-epoch metrics as metrics.jsonl.
pub fn write_metrics(
    path: &std::path::Path,
    metrics: &[EpochMetrics],
    provenance: Option<&serde_json::Value>,
) -> Result<(), crate::corpus::CorpusError> {
    crate::corpus::write_jsonl(
        path,
        crate::corpus::schema::METRICS,
        provenance,
        metrics.iter().cloned(),
    )
}
