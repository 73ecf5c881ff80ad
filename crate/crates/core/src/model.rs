//! The trained model container: parameter store, vocabulary, skill list and
//! configuration, shared by training, bootstrap, evaluation and inference.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncoderConfig, EncoderParams, Vocabulary};
use crate::numeric::{NumericError, ParamId, ParamStore, SplitMix64, Tensor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("unknown skill id {0}")]
    UnknownSkill(String),
    #[error("skill id {0} already present")]
    DuplicateSkill(String),
    #[error("enabled skill list is empty")]
    EmptyEnabled,
    #[error("operation requires {required}, model is {actual}")]
    ModeMismatch { required: String, actual: String },
    #[error("empty utterance")]
    EmptyUtterance,
}

/// How user preference enters the per-skill feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonalizationMode {
    None,
    OneBit,
    Attention,
    OneBitAndAttention,
}

impl PersonalizationMode {
    pub fn uses_attention(&self) -> bool {
        matches!(self, Self::Attention | Self::OneBitAndAttention)
    }

    pub fn uses_flag(&self) -> bool {
        matches!(self, Self::OneBit | Self::OneBitAndAttention)
    }
}

impl fmt::Display for PersonalizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::None => "none",
            Self::OneBit => "one_bit",
            Self::Attention => "attention",
            Self::OneBitAndAttention => "one_bit_and_attention",
        };
        f.write_str(s)
    }
}

impl FromStr for PersonalizationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(Self::None),
            "one_bit" => Ok(Self::OneBit),
            "attention" => Ok(Self::Attention),
            "one_bit_and_attention" => Ok(Self::OneBitAndAttention),
            other => Err(format!("unknown personalization mode '{other}'")),
        }
    }
}

/// Output-layer structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Independent encoder + head per skill.
    Binary,
    /// Shared encoder, one k-way softmax.
    MultiClass,
    /// Shared encoder, per-skill two-way heads.
    MultiTask,
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Binary => "binary",
            Self::MultiClass => "multiclass",
            Self::MultiTask => "multitask",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "binary" => Ok(Self::Binary),
            "multiclass" => Ok(Self::MultiClass),
            "multitask" => Ok(Self::MultiTask),
            other => Err(format!("unknown model variant '{other}'")),
        }
    }
}

/// IND and OOD positions in every two-way head output.
pub const IND: usize = 0;
pub const OOD: usize = 1;

#[derive(Debug, Clone)]
pub struct SkillModel {
    pub store: ParamStore,
    pub encoder_cfg: EncoderConfig,
    pub vocab: Vocabulary,
    pub variant: ModelVariant,
    pub mode: PersonalizationMode,
    /// Skill order fixed at creation; bootstrapped skills append.
    skills: Vec<String>,
    skill_index: HashMap<String, usize>,
    /// Non-trained tensors carried with the model (per-domain utterance
    /// averages for the bootstrap projection).
    pub buffers: BTreeMap<String, Tensor>,
}

impl SkillModel {
    /// Initializes all parameters from a seeded generator: encoder first,
    /// then per-skill tensors in skill order.
    pub fn new(
        encoder_cfg: EncoderConfig,
        vocab: Vocabulary,
        variant: ModelVariant,
        mode: PersonalizationMode,
        skills: Vec<String>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if variant != ModelVariant::MultiTask && mode != PersonalizationMode::None {
            return Err(ModelError::ModeMismatch {
                required: "multitask variant for personalization".into(),
                actual: format!("{variant}+{mode}"),
            });
        }
        let mut store = ParamStore::new();
        let mut rng = SplitMix64::derive(seed, "model-init");
        match variant {
            ModelVariant::Binary => {
                // One encoder + head per skill; registered in skill order.
                for s in &skills {
                    EncoderParams::register_at(
                        &mut store,
                        &format!("binary.{s}"),
                        &encoder_cfg,
                        &vocab,
                        &mut rng,
                    )?;
                    store.register_uniform(
                        &format!("binary.{s}.head.w"),
                        vec![2, encoder_cfg.hidden_dim()],
                        &mut rng,
                        0.1,
                    )?;
                    store.register(&format!("binary.{s}.head.b"), Tensor::zeros(vec![2]))?;
                }
            }
            ModelVariant::MultiClass => {
                EncoderParams::register(&mut store, &encoder_cfg, &vocab, &mut rng)?;
                store.register_uniform(
                    "multiclass.w",
                    vec![skills.len(), encoder_cfg.hidden_dim()],
                    &mut rng,
                    0.1,
                )?;
                store.register("multiclass.b", Tensor::zeros(vec![skills.len()]))?;
            }
            ModelVariant::MultiTask => {
                EncoderParams::register(&mut store, &encoder_cfg, &vocab, &mut rng)?;
            }
        }
        let mut model = SkillModel {
            store,
            encoder_cfg,
            vocab,
            variant,
            mode,
            skills: Vec::new(),
            skill_index: HashMap::new(),
            buffers: BTreeMap::new(),
        };
        for s in &skills {
            if variant == ModelVariant::MultiTask {
                let mut srng = SplitMix64::derive(seed, &format!("skill-init.{s}"));
                model.register_skill_params(s, &mut srng)?;
            }
            let idx = model.skills.len();
            if model.skill_index.insert(s.clone(), idx).is_some() {
                return Err(ModelError::DuplicateSkill(s.clone()));
            }
            model.skills.push(s.clone());
        }
        Ok(model)
    }

    /// Empty container with no parameters; the checkpoint loader fills the
    /// store from records and adopts the header's skill order.
    pub(crate) fn shell(
        encoder_cfg: EncoderConfig,
        vocab: Vocabulary,
        variant: ModelVariant,
        mode: PersonalizationMode,
    ) -> Self {
        SkillModel {
            store: ParamStore::new(),
            encoder_cfg,
            vocab,
            variant,
            mode,
            skills: Vec::new(),
            skill_index: HashMap::new(),
            buffers: BTreeMap::new(),
        }
    }

    /// Extends the skill order without registering parameters (loader use).
    pub(crate) fn adopt_skill(&mut self, skill_id: &str) -> Result<(), ModelError> {
        if self.skill_index.contains_key(skill_id) {
            return Err(ModelError::DuplicateSkill(skill_id.to_string()));
        }
        self.skill_index
            .insert(skill_id.to_string(), self.skills.len());
        self.skills.push(skill_id.to_string());
        Ok(())
    }

    /// Registers the per-skill tensors for the multitask variant: a domain
    /// embedding (attention modes only) and a two-way head over the feature
    /// vector. Seeded per skill so bootstrap initialization is independent
    /// of what else exists.
    pub fn register_skill_params(
        &mut self,
        skill_id: &str,
        rng: &mut SplitMix64,
    ) -> Result<(), ModelError> {
        if self.mode.uses_attention() {
            self.store.register_uniform(
                &format!("domain.{skill_id}.emb"),
                vec![self.embedding_dim()],
                rng,
                0.1,
            )?;
        }
        self.store.register_uniform(
            &format!("head.{skill_id}.w"),
            vec![2, self.feature_dim()],
            rng,
            0.1,
        )?;
        self.store
            .register(&format!("head.{skill_id}.b"), Tensor::zeros(vec![2]))?;
        Ok(())
    }

    /// Appends a bootstrapped skill: registers its parameters and extends
    /// the skill order. Existing parameters and indices are untouched.
    pub fn add_skill(&mut self, skill_id: &str, seed: u64) -> Result<(), ModelError> {
        if self.skill_index.contains_key(skill_id) {
            return Err(ModelError::DuplicateSkill(skill_id.to_string()));
        }
        if self.variant != ModelVariant::MultiTask {
            return Err(ModelError::ModeMismatch {
                required: "multitask variant".into(),
                actual: self.variant.to_string(),
            });
        }
        let mut rng = SplitMix64::derive(seed, &format!("skill-init.{skill_id}"));
        self.register_skill_params(skill_id, &mut rng)?;
        self.skill_index
            .insert(skill_id.to_string(), self.skills.len());
        self.skills.push(skill_id.to_string());
        Ok(())
    }

    pub fn skills(&self) -> &[String] {
        &self.skills
    }

    pub fn skill_count(&self) -> usize {
        self.skills.len()
    }

    pub fn skill_idx(&self, skill_id: &str) -> Result<usize, ModelError> {
        self.skill_index
            .get(skill_id)
            .copied()
            .ok_or_else(|| ModelError::UnknownSkill(skill_id.to_string()))
    }

    pub fn has_skill(&self, skill_id: &str) -> bool {
        self.skill_index.contains_key(skill_id)
    }

    /// Domain embedding width m; matches the utterance representation so
    /// the attention dot product is defined without a projection.
    pub fn embedding_dim(&self) -> usize {
        self.encoder_cfg.hidden_dim()
    }

    /// Width of the per-skill feature vector under the current mode.
    pub fn feature_dim(&self) -> usize {
        let h = self.encoder_cfg.hidden_dim();
        let m = if self.mode.uses_attention() {
            self.embedding_dim()
        } else {
            0
        };
        let flag = usize::from(self.mode.uses_flag());
        h + m + flag
    }

    pub fn encoder(&self) -> Result<EncoderParams, ModelError> {
        Ok(EncoderParams::resolve(&self.store, &self.encoder_cfg)?)
    }

    pub fn binary_encoder(&self, skill_id: &str) -> Result<EncoderParams, ModelError> {
        Ok(EncoderParams::resolve_at(
            &self.store,
            &format!("binary.{skill_id}"),
            &self.encoder_cfg,
        )?)
    }

    pub fn embedding_id(&self, skill_id: &str) -> Result<ParamId, ModelError> {
        Ok(self.store.id(&format!("domain.{skill_id}.emb"))?)
    }

    pub fn head_ids(&self, skill_id: &str) -> Result<(ParamId, ParamId), ModelError> {
        let prefix = match self.variant {
            ModelVariant::Binary => format!("binary.{skill_id}.head"),
            _ => format!("head.{skill_id}"),
        };
        Ok((
            self.store.id(&format!("{prefix}.w"))?,
            self.store.id(&format!("{prefix}.b"))?,
        ))
    }

    /// Total resident parameter bytes (float64 payloads).
    pub fn parameter_bytes(&self) -> usize {
        self.store.numel() * std::mem::size_of::<f64>()
    }
}
