//! Rapid accommodation of new domains between full retrains.
//!
//! Expand: freeze the encoder, existing heads and existing embeddings;
//! initialize each new domain's embedding by projecting its average
//! utterance vector through a ridge least-squares map learned from existing
//! domains; then train only the new head (and optionally the new embedding)
//! against the new domain's data, with a fixed cached sample of old-domain
//! utterances as negatives. Refresh is the from-scratch baseline.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetSplit, UserProfile, WeakSample};
use crate::encoder::{encode_utterance, vocab_coverage, EncoderConfig};
use crate::model::{SkillModel, IND, OOD};
use crate::numeric::{
    linalg, Adam, NodeRef, NumericError, SplitMix64, Tape, Tensor,
};
use crate::personalization::{attend_tape, features_tape};
use crate::training::{EpochMetrics, TrainConfig, TrainError};

/// Ridge least-squares map from utterance-average space to embedding space.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    pub u: Tensor,
    pub ridge: f64,
    pub residual: f64,
}

/// Column-wise average of encoded utterance vectors for one domain.
pub fn domain_average(
    model: &SkillModel,
    samples: &[Vec<String>],
) -> Result<Tensor, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Invalid(
            "domain_average needs at least one sample".into(),
        ));
    }
    let params = model.encoder()?;
    let h = model.encoder_cfg.hidden_dim();
    let mut acc = vec![0.0; h];
    for tokens in samples {
        let enc = encode_utterance(
            &model.store,
            &params,
            &model.encoder_cfg,
            &model.vocab,
            tokens,
        )?;
        for (a, &v) in acc.iter_mut().zip(enc.h_bar.data()) {
            *a += v;
        }
    }
    for a in &mut acc {
        *a /= samples.len() as f64;
    }
    Ok(Tensor::vector(acc))
}

/// Frobenius-norm residual of a candidate projection on the fitting pairs.
pub fn projection_residual(u: &Tensor, pairs: &[(Tensor, Tensor)]) -> f64 {
    let m = u.rows();
    let mut sq = 0.0;
    for (h, e) in pairs {
        let mut uh = vec![0.0; m];
        crate::numeric::ops::matvec_add(u.data(), m, u.cols(), h.data(), &mut uh);
        for (a, b) in uh.iter().zip(e.data()) {
            sq += (a - b) * (a - b);
        }
    }
    sq.sqrt()
}

/// Solves min_U sum_j ||U h_j - e_j||^2 + ridge ||U||^2 in closed form.
///
/// With ridge > 0 the normal-equations system U (H H^T + rI) = E H^T is
/// symmetric positive definite. With ridge = 0 the solve needs a full-rank
/// system: the minimum-norm solution E (H^T H)^-1 H^T when there are fewer
/// pairs than dimensions, U = E H^T (H H^T)^-1 otherwise; rank-deficient
/// systems error out.
pub fn learn_projection(
    pairs: &[(Tensor, Tensor)],
    ridge: f64,
) -> Result<ProjectionMatrix, TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::Invalid(
            "learn_projection needs at least one pair".into(),
        ));
    }
    let m = pairs[0].0.numel();
    for (h, e) in pairs {
        if h.numel() != m || e.numel() != m {
            return Err(TrainError::Numeric(NumericError::ShapeMismatch {
                context: "learn_projection".into(),
                expected: format!("{m}"),
                got: format!("{}x{}", h.numel(), e.numel()),
            }));
        }
    }
    let p = pairs.len();
    let u = if ridge == 0.0 && p < m {
        // Minimum-norm interpolation: U = E (H^T H)^-1 H^T.
        let mut gram = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                gram[i * p + j] = crate::numeric::ops::dot(pairs[i].0.data(), pairs[j].0.data());
            }
        }
        let gram = Tensor::matrix(p, p, gram).map_err(TrainError::Numeric)?;
        let l = linalg::cholesky(&gram).map_err(|_| {
            TrainError::Numeric(NumericError::SingularSystem {
                context: "learn_projection with ridge = 0".into(),
            })
        })?;
        // C[j][r] solves Gram c = (E row r over pairs)? Work per output row:
        // row r of U = sum_j alpha_j(r) h_j^T with Gram alpha(r) = e_r over pairs.
        let mut u = vec![0.0; m * m];
        for r in 0..m {
            let rhs: Vec<f64> = pairs.iter().map(|(_, e)| e.data()[r]).collect();
            let alpha = linalg::cholesky_solve(&l, &rhs);
            for (j, (hj, _)) in pairs.iter().enumerate() {
                for (c, &hv) in hj.data().iter().enumerate() {
                    u[r * m + c] += alpha[j] * hv;
                }
            }
        }
        Tensor::matrix(m, m, u).map_err(TrainError::Numeric)?
    } else {
        // U (H H^T + ridge I) = E H^T, solved row by row.
        let mut a = vec![0.0; m * m];
        let mut bt = vec![0.0; m * m]; // E H^T
        for (h, e) in pairs {
            crate::numeric::ops::outer_add(h.data(), h.data(), &mut a);
            crate::numeric::ops::outer_add(e.data(), h.data(), &mut bt);
        }
        for i in 0..m {
            a[i * m + i] += ridge;
        }
        let a = Tensor::matrix(m, m, a).map_err(TrainError::Numeric)?;
        let l = linalg::cholesky(&a).map_err(|_| {
            TrainError::Numeric(NumericError::SingularSystem {
                context: "learn_projection with ridge = 0".into(),
            })
        })?;
        let mut u = vec![0.0; m * m];
        for r in 0..m {
            let rhs = &bt[r * m..(r + 1) * m];
            let row = linalg::cholesky_solve(&l, rhs);
            u[r * m..(r + 1) * m].copy_from_slice(&row);
        }
        Tensor::matrix(m, m, u).map_err(TrainError::Numeric)?
    };
    let residual = projection_residual(&u, pairs);
    Ok(ProjectionMatrix {
        u,
        ridge,
        residual,
    })
}

/// e_new = U* h̄_avg: a write-to-memory initialization for the new domain.
pub fn init_new_embedding(projection: &ProjectionMatrix, h_avg: &Tensor) -> Tensor {
    let m = projection.u.rows();
    let mut e = vec![0.0; m];
    crate::numeric::ops::matvec_add(projection.u.data(), m, m, h_avg.data(), &mut e);
    Tensor::vector(e)
}

/// The spec'd default ridge keeps the solve well-posed when there are far
/// fewer domains than embedding dimensions.
pub fn default_ridge(m: usize) -> f64 {
    1e-3 * m as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Cached old-domain negatives drawn per positive sample.
    pub negatives_per_positive: usize,
    /// Keep the projection-initialized embedding fixed during head training.
    pub freeze_new_embedding: bool,
    /// Ridge strength; None picks 1e-3 * m.
    pub ridge: Option<f64>,
    pub seed: u64,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        ExpandConfig {
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            negatives_per_positive: 8,
            freeze_new_embedding: false,
            ridge: None,
            seed: 1,
        }
    }
}

/// Table-2-style timing summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub mode: String,
    pub seconds_per_epoch: f64,
    pub epochs: usize,
    pub final_top1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpandReport {
    pub timing: TimingReport,
    /// Projection solve time, reported separately from head training.
    pub projection_seconds: f64,
    pub vocab_coverage: BTreeMap<String, f64>,
    pub coverage_warnings: Vec<String>,
    pub zero_embedding_warnings: Vec<String>,
}

/// One incoming domain with its weakly supervised training data.
#[derive(Debug, Clone)]
pub struct NewDomain {
    pub skill_id: String,
    pub train: Vec<(WeakSample, String)>,
}

/// Adds new domains to a trained multitask model without touching any
/// existing parameter: embedding initialized via the learned projection,
/// then the new head (and, unless frozen, the new embedding) trained on the
/// new domain's data with cached old-domain utterances as negatives.
pub fn expand(
    mut model: SkillModel,
    new_domains: &[NewDomain],
    profiles: &[UserProfile],
    cfg: &ExpandConfig,
) -> Result<(SkillModel, ExpandReport), TrainError> {
    if model.variant != crate::model::ModelVariant::MultiTask {
        return Err(TrainError::Invalid(
            "expand requires a multitask model".into(),
        ));
    }
    for d in new_domains {
        if model.has_skill(&d.skill_id) {
            return Err(TrainError::Invalid(format!(
                "new skill id {} collides with an existing skill",
                d.skill_id
            )));
        }
        if d.train.is_empty() {
            return Err(TrainError::Invalid(format!(
                "new skill {} has no training data",
                d.skill_id
            )));
        }
    }
    let mut report = ExpandReport {
        timing: TimingReport {
            mode: "expand".into(),
            seconds_per_epoch: 0.0,
            epochs: cfg.epochs,
            final_top1: None,
        },
        projection_seconds: 0.0,
        vocab_coverage: BTreeMap::new(),
        coverage_warnings: Vec::new(),
        zero_embedding_warnings: Vec::new(),
    };

    // Vocabulary gate (the encoder is frozen, so coverage of the new data
    // is what bounds representation quality).
    for d in new_domains {
        let coverage = vocab_coverage(
            d.train
                .iter()
                .flat_map(|(w, _)| w.command_tokens.iter().map(String::as_str)),
            &model.vocab,
        );
        report.vocab_coverage.insert(d.skill_id.clone(), coverage);
        if coverage < 0.95 {
            report.coverage_warnings.push(format!(
                "vocabulary coverage for {} is {coverage:.3}, below 0.95; consider a full refresh",
                d.skill_id
            ));
        }
    }

    // Projection from existing domains' average utterance vectors to their
    // learned embeddings (attention modes only).
    let projection = if model.mode.uses_attention() {
        let t0 = Instant::now();
        let mut pairs = Vec::new();
        for skill in model.skills() {
            let Some(avg) = model.buffers.get(&format!("havg.{skill}")) else {
                continue;
            };
            let emb = model.store.value(model.embedding_id(skill)?).clone();
            pairs.push((avg.clone(), emb));
        }
        if pairs.is_empty() {
            return Err(TrainError::Invalid(
                "expand needs domain-average buffers from training".into(),
            ));
        }
        let ridge = cfg.ridge.unwrap_or_else(|| default_ridge(model.embedding_dim()));
        let proj = learn_projection(&pairs, ridge)?;
        report.projection_seconds = t0.elapsed().as_secs_f64();
        Some(proj)
    } else {
        None
    };

    let mut train_seconds = 0.0;
    for d in new_domains {
        let h_avg = domain_average(
            &model,
            &d.train
                .iter()
                .map(|(w, _)| w.command_tokens.clone())
                .collect::<Vec<_>>(),
        )?;
        model.add_skill(&d.skill_id, cfg.seed)?;
        if let Some(proj) = &projection {
            let e_new = init_new_embedding(proj, &h_avg);
            if e_new.data().iter().all(|&x| x == 0.0) {
                report
                    .zero_embedding_warnings
                    .push(format!("projection produced a zero embedding for {}", d.skill_id));
            }
            let emb_id = model.embedding_id(&d.skill_id)?;
            model
                .store
                .value_mut(emb_id)
                .data_mut()
                .copy_from_slice(e_new.data());
        }
        model
            .buffers
            .insert(format!("havg.{}", d.skill_id), h_avg);
        train_seconds += train_new_head(&mut model, d, profiles, cfg)?;
    }
    report.timing.seconds_per_epoch = if cfg.epochs > 0 {
        train_seconds / cfg.epochs as f64
    } else {
        0.0
    };
    Ok((model, report))
}

/// Head-only training for one new domain. The encoder is frozen, so every
/// positive is encoded once up front; old embeddings enter the tape as
/// plain inputs so no gradient ever reaches them.
fn train_new_head(
    model: &mut SkillModel,
    domain: &NewDomain,
    profiles: &[UserProfile],
    cfg: &ExpandConfig,
) -> Result<f64, TrainError> {
    let mode = model.mode;
    let enc_params = model.encoder()?;
    let profile_of: BTreeMap<&str, &UserProfile> =
        profiles.iter().map(|p| (p.user_id.as_str(), p)).collect();

    struct Positive {
        h_bar: Tensor,
        enabled_old: Vec<Tensor>,
        includes_new: bool,
    }
    let mut positives = Vec::with_capacity(domain.train.len());
    for (w, user) in &domain.train {
        let enc = encode_utterance(
            &model.store,
            &enc_params,
            &model.encoder_cfg,
            &model.vocab,
            &w.command_tokens,
        )?;
        let mut enabled_old = Vec::new();
        let mut includes_new = false;
        if let Some(p) = profile_of.get(user.as_str()) {
            for id in &p.enabled {
                if id == &domain.skill_id {
                    includes_new = true;
                } else if mode.uses_attention() && model.has_skill(id) {
                    enabled_old.push(model.store.value(model.embedding_id(id)?).clone());
                }
            }
        }
        positives.push(Positive {
            h_bar: enc.h_bar,
            enabled_old,
            includes_new,
        });
    }

    let neg_h = model.buffers.get("negcache.h").cloned().ok_or_else(|| {
        TrainError::Invalid("expand needs the negcache buffers from training".into())
    })?;
    let neg_s = model.buffers.get("negcache.s").cloned();
    let cache_len = neg_h.rows();

    let (w_id, b_id) = model.head_ids(&domain.skill_id)?;
    let mut trained = vec![w_id, b_id];
    if mode.uses_attention() && !cfg.freeze_new_embedding {
        trained.push(model.embedding_id(&domain.skill_id)?);
    }
    let emb_id = if mode.uses_attention() {
        Some(model.embedding_id(&domain.skill_id)?)
    } else {
        None
    };
    let mut adam = Adam::for_params(
        crate::numeric::AdamConfig {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        },
        &model.store,
        &trained,
    );
    let mut shuffle_rng = SplitMix64::derive(cfg.seed, &format!("expand.{}", domain.skill_id));
    let mut order: Vec<usize> = (0..positives.len()).collect();

    let t0 = Instant::now();
    for epoch in 0..cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut tape = Tape::new();
            let flag_zero = tape.scalar_input(0.0);
            let flag_one = tape.scalar_input(1.0);
            let mut losses = Vec::new();
            for &i in batch {
                let pos = &positives[i];
                let h_node = tape.input(pos.h_bar.clone());
                let context = if mode.uses_attention() {
                    let mut emb_nodes: Vec<NodeRef> = pos
                        .enabled_old
                        .iter()
                        .map(|e| tape.input(e.clone()))
                        .collect();
                    if pos.includes_new {
                        emb_nodes.push(tape.param(&model.store, emb_id.expect("attention mode")));
                    }
                    if emb_nodes.is_empty() {
                        Some(tape.input(Tensor::zeros(vec![model.embedding_dim()])))
                    } else {
                        Some(attend_tape(&mut tape, h_node, &emb_nodes)?.1)
                    }
                } else {
                    None
                };
                let flag = if pos.includes_new { flag_one } else { flag_zero };
                let z = features_tape(&mut tape, h_node, mode, context, Some(flag))?;
                let affine = tape.affine(&model.store, w_id, b_id, z)?;
                let act = tape.selu(affine);
                losses.push(tape.neg_log_softmax_pick(act, IND)?);

                // Cached old-domain utterances as negatives; the new skill
                // is never enabled for them, so the flag is zero and the
                // attention context is the cached one.
                let mut terms = Vec::with_capacity(cfg.negatives_per_positive);
                for _ in 0..cfg.negatives_per_positive {
                    let row = shuffle_rng.below(cache_len);
                    let h_neg = tape.input(Tensor::vector(neg_h.row(row).to_vec()));
                    let ctx_neg = neg_s
                        .as_ref()
                        .map(|s| tape.input(Tensor::vector(s.row(row).to_vec())));
                    let z = features_tape(&mut tape, h_neg, mode, ctx_neg, Some(flag_zero))?;
                    let affine = tape.affine(&model.store, w_id, b_id, z)?;
                    let act = tape.selu(affine);
                    terms.push(tape.neg_log_softmax_pick(act, OOD)?);
                }
                let neg_sum = tape.add_n(&terms)?;
                losses.push(tape.scale(neg_sum, 1.0 / cfg.negatives_per_positive as f64));
            }
            let summed = tape.add_n(&losses)?;
            let batch_loss = tape.scale(summed, 1.0 / batch.len() as f64);
            tape.backward(batch_loss, &mut model.store)
                .map_err(|source| TrainError::Diverged {
                    epoch,
                    batch: batch_no,
                    source,
                })?;
            adam.step(&mut model.store)?;
            // Attention through enabled lists may have brushed frozen
            // embeddings; drop any stray accumulation.
            model.store.zero_grads();
        }
    }
    Ok(t0.elapsed().as_secs_f64())
}

/// Full retraining from scratch on the union of old and new data; the
/// baseline expand is compared against.
pub fn refresh(
    dataset: &DatasetSplit,
    skills: &[String],
    profiles: &[UserProfile],
    encoder_cfg: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<(SkillModel, Vec<EpochMetrics>, TimingReport), TrainError> {
    let (model, metrics) = crate::training::train(dataset, skills, profiles, encoder_cfg, cfg)?;
    let seconds_per_epoch = if metrics.is_empty() {
        0.0
    } else {
        metrics.iter().map(|m| m.seconds).sum::<f64>() / metrics.len() as f64
    };
    let timing = TimingReport {
        mode: "refresh".into(),
        seconds_per_epoch,
        epochs: metrics.len(),
        final_top1: metrics.last().and_then(|m| m.val_top1),
    };
    Ok((model, metrics, timing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Vocabulary;
    use crate::model::{ModelVariant, PersonalizationMode};

    fn tiny_model() -> SkillModel {
        let vocab = Vocabulary::build(["brew", "dark", "roast", "the"].map(String::from));
        SkillModel::new(
            EncoderConfig {
                char_emb_dim: 3,
                char_hidden: 2,
                word_emb_dim: 4,
                word_hidden: 3,
            },
            vocab,
            ModelVariant::MultiTask,
            PersonalizationMode::Attention,
            vec!["sk_a".into(), "sk_b".into()],
            5,
        )
        .unwrap()
    }

    #[test]
    fn domain_average_mean_properties() {
        let model = tiny_model();
        let utt: Vec<String> = vec!["brew".into(), "the".into(), "roast".into()];
        let single = domain_average(&model, &[utt.clone()]).unwrap();
        let params = model.encoder().unwrap();
        let direct = encode_utterance(
            &model.store,
            &params,
            &model.encoder_cfg,
            &model.vocab,
            &utt,
        )
        .unwrap();
        assert_eq!(single.data(), direct.h_bar.data());
        // Duplicating the same utterance leaves the mean unchanged.
        let dup = domain_average(&model, &vec![utt.clone(); 7]).unwrap();
        for (a, b) in dup.data().iter().zip(single.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Mean of three distinct utterances matches the elementwise average.
        let u2: Vec<String> = vec!["dark".into(), "roast".into()];
        let u3: Vec<String> = vec!["brew".into(), "dark".into()];
        let mean = domain_average(&model, &[utt.clone(), u2.clone(), u3.clone()]).unwrap();
        let e2 = encode_utterance(&model.store, &params, &model.encoder_cfg, &model.vocab, &u2)
            .unwrap();
        let e3 = encode_utterance(&model.store, &params, &model.encoder_cfg, &model.vocab, &u3)
            .unwrap();
        for i in 0..mean.numel() {
            let expect = (direct.h_bar.data()[i] + e2.h_bar.data()[i] + e3.h_bar.data()[i]) / 3.0;
            assert!((mean.data()[i] - expect).abs() < 1e-12);
        }
        assert!(domain_average(&model, &[]).is_err());
    }

    #[test]
    fn identity_fit_recovers_identity() {
        let m = 6;
        let mut rng = SplitMix64::new(9);
        let mut pairs = Vec::new();
        for _ in 0..12 {
            let mut h = Tensor::zeros(vec![m]);
            h.fill_uniform(&mut rng, -1.0, 1.0);
            pairs.push((h.clone(), h));
        }
        let proj = learn_projection(&pairs, 1e-10).unwrap();
        let mut frob = 0.0;
        for r in 0..m {
            for c in 0..m {
                let expect = if r == c { 1.0 } else { 0.0 };
                let d = proj.u.data()[r * m + c] - expect;
                frob += d * d;
            }
        }
        assert!(frob.sqrt() < 1e-6, "|U - I|_F = {}", frob.sqrt());
    }

    #[test]
    fn single_pair_rank_one_interpolates() {
        let h = Tensor::vector(vec![1.0, 2.0, -1.0, 0.5]);
        let e = Tensor::vector(vec![0.3, -0.6, 0.9, 0.0]);
        let proj = learn_projection(&[(h.clone(), e.clone())], 0.0).unwrap();
        assert!(proj.residual < 1e-10, "residual {}", proj.residual);
        let got = init_new_embedding(&proj, &h);
        for (a, b) in got.data().iter().zip(e.data()) {
            assert!((a - b).abs() < 1e-10);
        }
        // Closed-form rank-1 minimizer e h^T / (h^T h).
        let hh = crate::numeric::ops::dot(h.data(), h.data());
        for r in 0..4 {
            for c in 0..4 {
                let expect = e.data()[r] * h.data()[c] / hh;
                assert!((proj.u.data()[r * 4 + c] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_zero_ridge_errors() {
        // Two identical columns, ridge 0: the Gram matrix is singular.
        let h = Tensor::vector(vec![1.0, 1.0, 0.0]);
        let pairs = vec![
            (h.clone(), Tensor::vector(vec![1.0, 0.0, 0.0])),
            (h, Tensor::vector(vec![0.0, 1.0, 0.0])),
        ];
        assert!(learn_projection(&pairs, 0.0).is_err());
        // Ridge repairs it.
        let pairs2 = vec![
            (
                Tensor::vector(vec![1.0, 1.0, 0.0]),
                Tensor::vector(vec![1.0, 0.0, 0.0]),
            ),
            (
                Tensor::vector(vec![1.0, 1.0, 0.0]),
                Tensor::vector(vec![0.0, 1.0, 0.0]),
            ),
        ];
        assert!(learn_projection(&pairs2, 0.5).is_ok());
    }

    #[test]
    fn ridge_solution_matches_normal_equations_oracle() {
        // Independent oracle: Gaussian elimination with partial pivoting on
        // the same normal equations.
        fn gauss_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Vec<f64> {
            for col in 0..n {
                let piv = (col..n)
                    .max_by(|&x, &y| {
                        a[x * n + col]
                            .abs()
                            .partial_cmp(&a[y * n + col].abs())
                            .unwrap()
                    })
                    .unwrap();
                for k in 0..n {
                    a.swap(col * n + k, piv * n + k);
                }
                b.swap(col, piv);
                for row in col + 1..n {
                    let f = a[row * n + col] / a[col * n + col];
                    for k in col..n {
                        a[row * n + k] -= f * a[col * n + k];
                    }
                    b[row] -= f * b[col];
                }
            }
            let mut x = vec![0.0; n];
            for row in (0..n).rev() {
                let mut acc = b[row];
                for k in row + 1..n {
                    acc -= a[row * n + k] * x[k];
                }
                x[row] = acc / a[row * n + row];
            }
            x
        }

        let m = 5;
        let ridge = 0.01;
        let mut rng = SplitMix64::new(33);
        let mut pairs = Vec::new();
        for _ in 0..10 {
            let mut h = Tensor::zeros(vec![m]);
            let mut e = Tensor::zeros(vec![m]);
            h.fill_uniform(&mut rng, -1.0, 1.0);
            e.fill_uniform(&mut rng, -1.0, 1.0);
            pairs.push((h, e));
        }
        let proj = learn_projection(&pairs, ridge).unwrap();

        let mut a = vec![0.0; m * m];
        let mut bt = vec![0.0; m * m];
        for (h, e) in &pairs {
            crate::numeric::ops::outer_add(h.data(), h.data(), &mut a);
            crate::numeric::ops::outer_add(e.data(), h.data(), &mut bt);
        }
        for i in 0..m {
            a[i * m + i] += ridge;
        }
        let mut u_oracle = vec![0.0; m * m];
        for r in 0..m {
            let row = gauss_solve(a.clone(), bt[r * m..(r + 1) * m].to_vec(), m);
            u_oracle[r * m..(r + 1) * m].copy_from_slice(&row);
        }
        let oracle_res = projection_residual(
            &Tensor::matrix(m, m, u_oracle.clone()).unwrap(),
            &pairs,
        );
        assert!(
            (proj.residual - oracle_res).abs() < 1e-8,
            "residual {} vs oracle {}",
            proj.residual,
            oracle_res
        );
        for (a, b) in proj.u.data().iter().zip(&u_oracle) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn init_embedding_identity_zero_and_seed_cases() {
        let m = 4;
        let mut id = vec![0.0; m * m];
        for i in 0..m {
            id[i * m + i] = 1.0;
        }
        let proj = ProjectionMatrix {
            u: Tensor::matrix(m, m, id).unwrap(),
            ridge: 0.0,
            residual: 0.0,
        };
        let h = Tensor::vector(vec![0.1, -0.2, 0.3, 0.4]);
        assert_eq!(init_new_embedding(&proj, &h).data(), h.data());

        let zero = ProjectionMatrix {
            u: Tensor::matrix(m, m, vec![0.0; m * m]).unwrap(),
            ridge: 0.0,
            residual: 0.0,
        };
        assert!(init_new_embedding(&zero, &h).data().iter().all(|&x| x == 0.0));

        let mut rng = SplitMix64::new(2);
        let mut u = Tensor::zeros(vec![m, m]);
        u.fill_uniform(&mut rng, -1.0, 1.0);
        let proj = ProjectionMatrix {
            u: u.clone(),
            ridge: 0.0,
            residual: 0.0,
        };
        let got = init_new_embedding(&proj, &h);
        for r in 0..m {
            let expect: f64 = (0..m).map(|c| u.data()[r * m + c] * h.data()[c]).sum();
            assert!((got.data()[r] - expect).abs() < 1e-14);
        }
    }
}
