//! Personalized attention over a user's enabled skills, the enabled-flag
//! feature, per-skill classification heads and the ranking entry point.
//!
//! Per-skill scores are deliberately independent: a skill's relevance
//! depends on the shared utterance representation, the user's profile and
//! that skill's own parameters, never on other heads. That independence is
//! what makes appending bootstrapped skills a no-op for existing scores.

use crate::model::{ModelError, ModelVariant, PersonalizationMode, SkillModel, IND, OOD};
use crate::numeric::{ops, NodeRef, ParamStore, Tape, Tensor};

/// Attention over enabled skills: dot-product scores against the utterance
/// representation, softmax weights, convex combination of embeddings.
pub fn attend(
    h_bar: &Tensor,
    enabled: &[String],
    model: &SkillModel,
) -> Result<(Tensor, Tensor), ModelError> {
    if enabled.is_empty() {
        return Err(ModelError::EmptyEnabled);
    }
    let m = model.embedding_dim();
    let mut scores = Vec::with_capacity(enabled.len());
    let mut rows: Vec<&[f64]> = Vec::with_capacity(enabled.len());
    for id in enabled {
        let emb = model.store.value(model.embedding_id(id)?);
        scores.push(ops::dot(h_bar.data(), emb.data()));
        rows.push(emb.data());
    }
    let mut weights = vec![0.0; scores.len()];
    ops::softmax_slice(&scores, &mut weights)?;
    let mut context = vec![0.0; m];
    for (w, row) in weights.iter().zip(&rows) {
        ops::axpy(*w, row, &mut context);
    }
    Ok((Tensor::vector(weights), Tensor::vector(context)))
}

/// Assembles the per-skill feature vector for the given mode:
/// none -> h̄; one_bit -> h̄ ⊕ flag; attention -> h̄ ⊕ S;
/// one_bit_and_attention -> h̄ ⊕ S ⊕ flag. The flag is 1.0 iff the
/// candidate skill is in the enabled list. An empty enabled list under
/// attention modes yields a zero context vector.
pub fn build_features(
    h_bar: &Tensor,
    mode: PersonalizationMode,
    enabled: &[String],
    model: &SkillModel,
    skill_id: &str,
) -> Result<Tensor, ModelError> {
    let context = if mode.uses_attention() {
        if enabled.is_empty() {
            Some(Tensor::zeros(vec![model.embedding_dim()]))
        } else {
            Some(attend(h_bar, enabled, model)?.1)
        }
    } else {
        None
    };
    Ok(compose_features(
        h_bar,
        mode,
        context.as_ref(),
        enabled.iter().any(|e| e == skill_id),
    ))
}

/// Feature concatenation with a precomputed context (classify computes the
/// attention context once per utterance and reuses it for every head).
pub fn compose_features(
    h_bar: &Tensor,
    mode: PersonalizationMode,
    context: Option<&Tensor>,
    enabled_flag: bool,
) -> Tensor {
    let mut data = h_bar.data().to_vec();
    if mode.uses_attention() {
        data.extend_from_slice(
            context
                .expect("attention mode requires a context vector")
                .data(),
        );
    }
    if mode.uses_flag() {
        data.push(if enabled_flag { 1.0 } else { 0.0 });
    }
    Tensor::vector(data)
}

/// SeLU-activated affine map to the (IND, OOD) pair.
pub fn head_forward(
    features: &Tensor,
    skill_id: &str,
    model: &SkillModel,
) -> Result<Tensor, ModelError> {
    let (w_id, b_id) = model.head_ids(skill_id)?;
    let w = model.store.value(w_id);
    if features.numel() != w.cols() {
        return Err(ModelError::Numeric(
            crate::numeric::NumericError::ShapeMismatch {
                context: format!("head {skill_id}"),
                expected: format!("{}", w.cols()),
                got: format!("{}", features.numel()),
            },
        ));
    }
    let mut out = model.store.value(b_id).data().to_vec();
    ops::matvec_add(w.data(), w.rows(), w.cols(), features.data(), &mut out);
    let mut act = vec![0.0; out.len()];
    ops::selu_slice(&out, &mut act);
    Ok(Tensor::vector(act))
}

/// Two-way exp-normalization of a head output: the skill's relevance score.
/// p_OOD is 1 - p_IND by definition. Clamped to the open interval so
/// extreme score gaps cannot saturate to exactly 0 or 1.
pub fn domain_probability(z: &Tensor) -> f64 {
    let d = z.data();
    let p = 1.0 / (1.0 + (d[OOD] - d[IND]).exp());
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Which candidate set a ranking considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Full,
    Enabled,
}

/// Scores every skill in scope with its own head over shared features and
/// returns the top `top_n` as (skill_id, p_IND), ties broken by id. With an
/// empty profile, enabled scope falls back to the full set.
pub fn classify(
    model: &SkillModel,
    tokens: &[String],
    enabled: &[String],
    scope: Scope,
    top_n: usize,
) -> Result<Vec<(String, f64)>, ModelError> {
    let mut ranked = score_all(model, tokens, enabled, scope)?;
    ranked.truncate(top_n);
    Ok(ranked)
}

/// Full ranked list (descending p, then lexicographic id).
pub fn score_all(
    model: &SkillModel,
    tokens: &[String],
    enabled: &[String],
    scope: Scope,
) -> Result<Vec<(String, f64)>, ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptyUtterance);
    }
    let candidates: Vec<&String> = match scope {
        Scope::Enabled if !enabled.is_empty() => enabled.iter().collect(),
        _ => model.skills().iter().collect(),
    };
    let mut scored = match model.variant {
        ModelVariant::MultiTask => {
            let params = model.encoder()?;
            let enc = crate::encoder::encode_utterance(
                &model.store,
                &params,
                &model.encoder_cfg,
                &model.vocab,
                tokens,
            )?;
            let context = if model.mode.uses_attention() && !enabled.is_empty() {
                Some(attend(&enc.h_bar, enabled, model)?.1)
            } else if model.mode.uses_attention() {
                Some(Tensor::zeros(vec![model.embedding_dim()]))
            } else {
                None
            };
            let mut out = Vec::with_capacity(candidates.len());
            for id in &candidates {
                let flag = enabled.iter().any(|e| &e == id);
                let features = compose_features(&enc.h_bar, model.mode, context.as_ref(), flag);
                let z = head_forward(&features, id, model)?;
                out.push(((*id).clone(), domain_probability(&z)));
            }
            out
        }
        ModelVariant::MultiClass => {
            let params = model.encoder()?;
            let enc = crate::encoder::encode_utterance(
                &model.store,
                &params,
                &model.encoder_cfg,
                &model.vocab,
                tokens,
            )?;
            let probs = multiclass_forward(&enc.h_bar, model)?;
            candidates
                .iter()
                .map(|id| {
                    let idx = model.skill_idx(id).expect("candidate from model");
                    ((*id).clone(), probs.data()[idx])
                })
                .collect()
        }
        ModelVariant::Binary => {
            let mut out = Vec::with_capacity(candidates.len());
            for id in &candidates {
                let params = model.binary_encoder(id)?;
                let enc = crate::encoder::encode_utterance(
                    &model.store,
                    &params,
                    &model.encoder_cfg,
                    &model.vocab,
                    tokens,
                )?;
                let z = head_forward(&enc.h_bar, id, model)?;
                out.push(((*id).clone(), domain_probability(&z)));
            }
            out
        }
    };
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(scored)
}

/// Softmax over the shared-encoder logits; the multiclass baseline head.
pub fn multiclass_forward(h_bar: &Tensor, model: &SkillModel) -> Result<Tensor, ModelError> {
    let w_id = model.store.id("multiclass.w")?;
    let b_id = model.store.id("multiclass.b")?;
    let w = model.store.value(w_id);
    let mut logits = model.store.value(b_id).data().to_vec();
    ops::matvec_add(w.data(), w.rows(), w.cols(), h_bar.data(), &mut logits);
    let mut probs = vec![0.0; logits.len()];
    ops::softmax_slice(&logits, &mut probs)?;
    Ok(Tensor::vector(probs))
}

// ---------------------------------------------------------------------------
// Tape-side builders used by training.

/// Attention on the tape; embedding nodes must already be recorded (as
/// params for trainable embeddings, as inputs for frozen ones).
pub fn attend_tape(
    tape: &mut Tape,
    h_bar: NodeRef,
    emb_nodes: &[NodeRef],
) -> Result<(NodeRef, NodeRef), ModelError> {
    if emb_nodes.is_empty() {
        return Err(ModelError::EmptyEnabled);
    }
    let scores: Vec<NodeRef> = emb_nodes
        .iter()
        .map(|&e| tape.dot(h_bar, e))
        .collect::<Result<_, _>>()?;
    let stacked = tape.concat(&scores)?;
    let weights = tape.softmax(stacked)?;
    let context = tape.weighted_sum(weights, emb_nodes)?;
    Ok((weights, context))
}

/// Records z̄ for one (utterance, candidate-flag) combination.
pub fn features_tape(
    tape: &mut Tape,
    h_bar: NodeRef,
    mode: PersonalizationMode,
    context: Option<NodeRef>,
    flag_node: Option<NodeRef>,
) -> Result<NodeRef, ModelError> {
    let mut parts = vec![h_bar];
    if mode.uses_attention() {
        parts.push(context.expect("attention mode requires context node"));
    }
    if mode.uses_flag() {
        parts.push(flag_node.expect("flag mode requires flag node"));
    }
    if parts.len() == 1 {
        return Ok(h_bar);
    }
    Ok(tape.concat(&parts)?)
}

/// Records head forward on the tape: selu(W z̄ + b).
pub fn head_tape(
    tape: &mut Tape,
    store: &ParamStore,
    model: &SkillModel,
    skill_id: &str,
    features: NodeRef,
) -> Result<NodeRef, ModelError> {
    let (w_id, b_id) = model.head_ids(skill_id)?;
    let affine = tape.affine(store, w_id, b_id, features)?;
    Ok(tape.selu(affine))
}

/// embeddings.tsv export for offline visualization: skill id followed by
/// the embedding components, tab-separated.
pub fn embeddings_tsv(model: &SkillModel) -> Result<String, ModelError> {
    let mut out = String::new();
    for id in model.skills() {
        let emb = model.store.value(model.embedding_id(id)?);
        out.push_str(id);
        for v in emb.data() {
            out.push('\t');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, Vocabulary};
    use crate::numeric::SplitMix64;

    fn tiny_model(mode: PersonalizationMode) -> SkillModel {
        let vocab = Vocabulary::build(["alpha", "beta", "gamma"].map(String::from));
        let cfg = EncoderConfig {
            char_emb_dim: 3,
            char_hidden: 2,
            word_emb_dim: 4,
            word_hidden: 3,
        };
        SkillModel::new(
            cfg,
            vocab,
            ModelVariant::MultiTask,
            mode,
            vec!["sk_a".into(), "sk_b".into(), "sk_c".into()],
            42,
        )
        .unwrap()
    }

    fn set_embedding(model: &mut SkillModel, skill: &str, value: &[f64]) {
        let id = model.embedding_id(skill).unwrap();
        model
            .store
            .value_mut(id)
            .data_mut()
            .copy_from_slice(value);
    }

    #[test]
    fn singleton_attention_is_identity() {
        let model = tiny_model(PersonalizationMode::Attention);
        let h = Tensor::vector(vec![0.3, -0.1, 0.5, 0.2, 0.0, -0.7]);
        let (w, s) = attend(&h, &["sk_b".to_string()], &model).unwrap();
        assert_eq!(w.data(), &[1.0]);
        let emb = model.store.value(model.embedding_id("sk_b").unwrap());
        assert_eq!(s.data(), emb.data());
    }

    #[test]
    fn identical_embeddings_get_uniform_weights() {
        let mut model = tiny_model(PersonalizationMode::Attention);
        let shared = vec![0.1, 0.2, -0.3, 0.4, 0.0, 0.6];
        for s in ["sk_a", "sk_b", "sk_c"] {
            set_embedding(&mut model, s, &shared);
        }
        let h = Tensor::vector(vec![1.0, -2.0, 0.5, 0.3, 0.9, -0.4]);
        let enabled: Vec<String> = ["sk_a", "sk_b", "sk_c"].map(String::from).to_vec();
        let (w, s) = attend(&h, &enabled, &model).unwrap();
        for &wi in w.data() {
            assert!((wi - 1.0 / 3.0).abs() < 1e-12);
        }
        for (a, b) in s.data().iter().zip(&shared) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_matches_hand_computed_softmax() {
        let mut model = tiny_model(PersonalizationMode::Attention);
        let mut rng = SplitMix64::new(11);
        let mut h = Tensor::zeros(vec![6]);
        h.fill_uniform(&mut rng, -1.0, 1.0);
        let enabled: Vec<String> = ["sk_a", "sk_b", "sk_c"].map(String::from).to_vec();
        let mut embs = Vec::new();
        for s in &enabled {
            let mut e = vec![0.0; 6];
            for v in &mut e {
                *v = rng.uniform(-1.0, 1.0);
            }
            set_embedding(&mut model, s, &e);
            embs.push(e);
        }
        let (w, s) = attend(&h, &enabled, &model).unwrap();
        // Closed form: softmax of dots.
        let dots: Vec<f64> = embs.iter().map(|e| ops::dot(h.data(), e)).collect();
        let mx = dots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = dots.iter().map(|d| (d - mx).exp()).collect();
        let z: f64 = exps.iter().sum();
        for (wi, ei) in w.data().iter().zip(&exps) {
            assert!((wi - ei / z).abs() < 1e-12);
        }
        let sum: f64 = w.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        for j in 0..6 {
            let expect: f64 = w
                .data()
                .iter()
                .zip(&embs)
                .map(|(wi, e)| wi * e[j])
                .sum();
            assert!((s.data()[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn attend_rejects_empty_and_unknown() {
        let model = tiny_model(PersonalizationMode::Attention);
        let h = Tensor::zeros(vec![6]);
        assert!(matches!(
            attend(&h, &[], &model),
            Err(ModelError::EmptyEnabled)
        ));
        assert!(attend(&h, &["nope".to_string()], &model).is_err());
    }

    #[test]
    fn features_per_mode() {
        let model = tiny_model(PersonalizationMode::None);
        let h = Tensor::vector(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let z = build_features(&h, PersonalizationMode::None, &[], &model, "sk_a").unwrap();
        assert_eq!(z.data(), h.data());

        let model = tiny_model(PersonalizationMode::OneBit);
        let enabled = vec!["sk_a".to_string()];
        let z = build_features(&h, PersonalizationMode::OneBit, &enabled, &model, "sk_a").unwrap();
        assert_eq!(z.numel(), 7);
        assert_eq!(z.data()[6], 1.0);
        let z = build_features(&h, PersonalizationMode::OneBit, &enabled, &model, "sk_b").unwrap();
        assert_eq!(z.data()[6], 0.0);

        let model = tiny_model(PersonalizationMode::OneBitAndAttention);
        let z = build_features(
            &h,
            PersonalizationMode::OneBitAndAttention,
            &enabled,
            &model,
            "sk_a",
        )
        .unwrap();
        // h (6) + context (6) + flag (1)
        assert_eq!(z.numel(), 13);
    }

    #[test]
    fn head_forward_closed_forms() {
        let mut model = tiny_model(PersonalizationMode::None);
        let (w_id, b_id) = model.head_ids("sk_a").unwrap();
        model.store.value_mut(w_id).data_mut().fill(0.0);
        model.store.value_mut(b_id).data_mut().fill(0.0);
        let h = Tensor::zeros(vec![6]);
        let z = head_forward(&h, "sk_a", &model).unwrap();
        assert_eq!(z.data(), &[0.0, 0.0]);

        model
            .store
            .value_mut(b_id)
            .data_mut()
            .copy_from_slice(&[1.0, -1.0]);
        let z = head_forward(&h, "sk_a", &model).unwrap();
        assert!((z.data()[IND] - crate::numeric::ops::selu_scalar(1.0)).abs() < 1e-15);
        assert!((z.data()[OOD] - crate::numeric::ops::selu_scalar(-1.0)).abs() < 1e-15);
    }

    #[test]
    fn domain_probability_closed_forms() {
        assert!((domain_probability(&Tensor::vector(vec![3.0, 3.0])) - 0.5).abs() < 1e-12);
        let p = domain_probability(&Tensor::vector(vec![3.0f64.ln(), 0.0]));
        assert!((p - 0.75).abs() < 1e-12);
        // Monotone in z_IND.
        let mut last = 0.0;
        for k in 0..10 {
            let p = domain_probability(&Tensor::vector(vec![k as f64 * 0.5, 1.0]));
            assert!(p > last);
            last = p;
        }
        // Complements sum to one exactly.
        let z = Tensor::vector(vec![0.73, -1.2]);
        let p = domain_probability(&z);
        let q = domain_probability(&Tensor::vector(vec![-1.2, 0.73]));
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(p + q, 1.0);
    }

    #[test]
    fn enabled_ranking_is_filtered_full_ranking() {
        let model = tiny_model(PersonalizationMode::OneBitAndAttention);
        let tokens: Vec<String> = vec!["alpha".into(), "beta".into()];
        let enabled = vec!["sk_c".to_string(), "sk_a".to_string()];
        let full = classify(&model, &tokens, &enabled, Scope::Full, 10).unwrap();
        let restricted = classify(&model, &tokens, &enabled, Scope::Enabled, 10).unwrap();
        let filtered: Vec<_> = full
            .iter()
            .filter(|(id, _)| enabled.contains(id))
            .cloned()
            .collect();
        assert_eq!(restricted, filtered);
    }

    #[test]
    fn empty_profile_falls_back_to_full_scope() {
        let model = tiny_model(PersonalizationMode::Attention);
        let tokens: Vec<String> = vec!["alpha".into()];
        let ranked = classify(&model, &tokens, &[], Scope::Enabled, 10).unwrap();
        assert_eq!(ranked.len(), 3);
    }

    #[test]
    fn multiclass_zero_weights_uniform() {
        let vocab = Vocabulary::build(["alpha"].map(String::from));
        let cfg = EncoderConfig {
            char_emb_dim: 3,
            char_hidden: 2,
            word_emb_dim: 4,
            word_hidden: 3,
        };
        let mut model = SkillModel::new(
            cfg,
            vocab,
            ModelVariant::MultiClass,
            PersonalizationMode::None,
            vec!["sk_a".into(), "sk_b".into(), "sk_c".into(), "sk_d".into()],
            3,
        )
        .unwrap();
        let w = model.store.id("multiclass.w").unwrap();
        model.store.value_mut(w).data_mut().fill(0.0);
        let h = Tensor::zeros(vec![6]);
        let probs = multiclass_forward(&h, &model).unwrap();
        for &p in probs.data() {
            assert!((p - 0.25).abs() < 1e-12);
        }
        // k = 1 degenerate case.
        let vocab = Vocabulary::build(["alpha"].map(String::from));
        let one = SkillModel::new(
            EncoderConfig {
                char_emb_dim: 3,
                char_hidden: 2,
                word_emb_dim: 4,
                word_hidden: 3,
            },
            vocab,
            ModelVariant::MultiClass,
            PersonalizationMode::None,
            vec!["only".into()],
            3,
        )
        .unwrap();
        let probs = multiclass_forward(&h, &one).unwrap();
        assert_eq!(probs.data(), &[1.0]);
    }

    #[test]
    fn tape_attention_matches_inference_attention() {
        let model = tiny_model(PersonalizationMode::Attention);
        let enabled: Vec<String> = ["sk_a", "sk_c"].map(String::from).to_vec();
        let mut rng = SplitMix64::new(4);
        let mut h = Tensor::zeros(vec![6]);
        h.fill_uniform(&mut rng, -1.0, 1.0);
        let (w_ref, s_ref) = attend(&h, &enabled, &model).unwrap();
        let mut tape = Tape::new();
        let h_node = tape.input(h);
        let emb_nodes: Vec<NodeRef> = enabled
            .iter()
            .map(|id| tape.param(&model.store, model.embedding_id(id).unwrap()))
            .collect();
        let (w_node, s_node) = attend_tape(&mut tape, h_node, &emb_nodes).unwrap();
        for (a, b) in tape.value(w_node).data().iter().zip(w_ref.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in tape.value(s_node).data().iter().zip(s_ref.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
