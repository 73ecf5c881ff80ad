//! Run configuration: a line-oriented `key=value` file with dotted keys
//! (e.g. `train.lr=0.001`), merged with command-line overrides. Unknown
//! keys are rejected, and the full configuration text is embedded in every
//! output's provenance block so any artifact can be regenerated.

use std::str::FromStr;

use thiserror::Error;

use crate::bootstrap::ExpandConfig;
use crate::encoder::EncoderConfig;
use crate::model::{ModelVariant, PersonalizationMode};
use crate::synth::WorldConfig;
use crate::training::{NegativeSampling, TrainConfig};
use crate::weaksup::{CatchAllPolicy, FilterConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value '{value}' for {key}: expected {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: String,
    },
    #[error("{path}:{line}: expected key=value")]
    BadLine { path: String, line: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub top_ns: Vec<usize>,
    pub min_enabled: usize,
    pub paraphrase_rate: f64,
    pub histogram_bins: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            top_ns: vec![1, 3, 5],
            min_enabled: 5,
            paraphrase_rate: 0.05,
            histogram_bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchParams {
    pub iterations: usize,
    pub warmup: usize,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            iterations: 200,
            warmup: 20,
        }
    }
}

/// Every stage's configuration in one place. Stage seeds are all derived
/// from the single global seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: WorldConfig,
    pub split_ratios: (f64, f64, f64),
    pub min_tokens: usize,
    pub min_count: u64,
    pub catch_all_policy: String,
    pub catch_all_share_threshold: f64,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub expand: ExpandConfig,
    pub eval: EvalParams,
    pub bench: BenchParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            synth: WorldConfig::default(),
            split_ratios: (0.6, 0.2, 0.2),
            min_tokens: 3,
            min_count: 2,
            catch_all_policy: "registry_flag".into(),
            catch_all_share_threshold: 0.5,
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            expand: ExpandConfig::default(),
            eval: EvalParams::default(),
            bench: BenchParams::default(),
        }
    }
}

fn parse_as<T: FromStr>(key: &str, value: &str, expected: &str) -> Result<T, ConfigError> {
    value.parse::<T>().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected: expected.to_string(),
    })
}

impl RunConfig {
    /// Applies one `key=value` assignment.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = parse_as(key, value, "u64")?,
            "synth.num_skills" => self.synth.num_skills = parse_as(key, value, "usize")?,
            "synth.num_categories" => self.synth.num_categories = parse_as(key, value, "usize")?,
            "synth.overlap_factor" => self.synth.overlap_factor = parse_as(key, value, "f64")?,
            "synth.num_users" => self.synth.num_users = parse_as(key, value, "usize")?,
            "synth.enablement_mean" => self.synth.enablement_mean = parse_as(key, value, "f64")?,
            "synth.utterances_per_skill" => {
                self.synth.utterances_per_skill = parse_as(key, value, "usize")?
            }
            "synth.char_corruption_rate" => {
                self.synth.char_corruption_rate = parse_as(key, value, "f64")?
            }
            "synth.short_command_rate" => {
                self.synth.short_command_rate = parse_as(key, value, "f64")?
            }
            "synth.shared_intent_rate" => {
                self.synth.shared_intent_rate = parse_as(key, value, "f64")?
            }
            "split.train_ratio" => self.split_ratios.0 = parse_as(key, value, "f64")?,
            "split.validation_ratio" => self.split_ratios.1 = parse_as(key, value, "f64")?,
            "split.test_ratio" => self.split_ratios.2 = parse_as(key, value, "f64")?,
            "weak.min_tokens" => self.min_tokens = parse_as(key, value, "usize")?,
            "weak.min_count" => self.min_count = parse_as(key, value, "u64")?,
            "weak.catch_all_policy" => match value {
                "registry_flag" | "heuristic" => self.catch_all_policy = value.to_string(),
                _ => {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                        expected: "registry_flag | heuristic".into(),
                    })
                }
            },
            "weak.catch_all_share_threshold" => {
                self.catch_all_share_threshold = parse_as(key, value, "f64")?
            }
            "encoder.char_emb_dim" => self.encoder.char_emb_dim = parse_as(key, value, "usize")?,
            "encoder.char_hidden" => self.encoder.char_hidden = parse_as(key, value, "usize")?,
            "encoder.word_emb_dim" => self.encoder.word_emb_dim = parse_as(key, value, "usize")?,
            "encoder.word_hidden" => self.encoder.word_hidden = parse_as(key, value, "usize")?,
            "train.variant" => {
                self.train.variant = ModelVariant::from_str(value).map_err(|e| {
                    ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                        expected: e,
                    }
                })?
            }
            "train.personalization" => {
                self.train.personalization =
                    PersonalizationMode::from_str(value).map_err(|e| ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                        expected: e,
                    })?
            }
            "train.epochs" => self.train.epochs = parse_as(key, value, "usize")?,
            "train.batch_size" => self.train.batch_size = parse_as(key, value, "usize")?,
            "train.lr" => self.train.lr = parse_as(key, value, "f64")?,
            "train.beta1" => self.train.beta1 = parse_as(key, value, "f64")?,
            "train.beta2" => self.train.beta2 = parse_as(key, value, "f64")?,
            "train.eps" => self.train.eps = parse_as(key, value, "f64")?,
            "train.negative_sampling" => match value {
                "exact" => self.train.negative_sampling = NegativeSampling::Exact,
                "sampled" => {
                    let q = match self.train.negative_sampling {
                        NegativeSampling::Sampled { q } => q,
                        _ => 8,
                    };
                    self.train.negative_sampling = NegativeSampling::Sampled { q };
                }
                _ => {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                        expected: "exact | sampled".into(),
                    })
                }
            },
            "train.negative_q" => {
                let q = parse_as(key, value, "usize")?;
                if let NegativeSampling::Sampled { .. } = self.train.negative_sampling {
                    self.train.negative_sampling = NegativeSampling::Sampled { q };
                } else {
                    self.train.negative_sampling = NegativeSampling::Sampled { q };
                }
            }
            "expand.epochs" => self.expand.epochs = parse_as(key, value, "usize")?,
            "expand.batch_size" => self.expand.batch_size = parse_as(key, value, "usize")?,
            "expand.lr" => self.expand.lr = parse_as(key, value, "f64")?,
            "expand.negatives_per_positive" => {
                self.expand.negatives_per_positive = parse_as(key, value, "usize")?
            }
            "expand.freeze_new_embedding" => {
                self.expand.freeze_new_embedding = parse_as(key, value, "bool")?
            }
            "expand.ridge" => {
                self.expand.ridge = if value == "auto" {
                    None
                } else {
                    Some(parse_as(key, value, "f64 or auto")?)
                }
            }
            "eval.top_ns" => {
                let mut ns = Vec::new();
                for part in value.split(',') {
                    ns.push(parse_as(key, part.trim(), "comma-separated usize list")?);
                }
                self.eval.top_ns = ns;
            }
            "eval.min_enabled" => self.eval.min_enabled = parse_as(key, value, "usize")?,
            "eval.paraphrase_rate" => self.eval.paraphrase_rate = parse_as(key, value, "f64")?,
            "eval.histogram_bins" => self.eval.histogram_bins = parse_as(key, value, "usize")?,
            "bench.iterations" => self.bench.iterations = parse_as(key, value, "usize")?,
            "bench.warmup" => self.bench.warmup = parse_as(key, value, "usize")?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parses config text: `key=value` lines, `#` comments, blank lines.
    pub fn parse(text: &str, path: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::BadLine {
                    path: path.to_string(),
                    line: i + 1,
                });
            };
            cfg.apply(key.trim(), value.trim())?;
        }
        cfg.sync_seeds();
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Propagates the global seed into every stage config.
    pub fn sync_seeds(&mut self) {
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
        self.expand.seed = self.seed;
    }

    /// Full serialization in canonical key order; parseable back into an
    /// identical config.
    pub fn to_text(&self) -> String {
        let (sampling, q) = match self.train.negative_sampling {
            NegativeSampling::Exact => ("exact", 8),
            NegativeSampling::Sampled { q } => ("sampled", q),
        };
        let ridge = match self.expand.ridge {
            None => "auto".to_string(),
            Some(r) => format!("{r}"),
        };
        let top_ns: Vec<String> = self.eval.top_ns.iter().map(|n| n.to_string()).collect();
        format!(
            "seed={}\n\
             synth.num_skills={}\nsynth.num_categories={}\nsynth.overlap_factor={}\n\
             synth.num_users={}\nsynth.enablement_mean={}\nsynth.utterances_per_skill={}\n\
             synth.char_corruption_rate={}\nsynth.short_command_rate={}\nsynth.shared_intent_rate={}\n\
             split.train_ratio={}\nsplit.validation_ratio={}\nsplit.test_ratio={}\n\
             weak.min_tokens={}\nweak.min_count={}\nweak.catch_all_policy={}\nweak.catch_all_share_threshold={}\n\
             encoder.char_emb_dim={}\nencoder.char_hidden={}\nencoder.word_emb_dim={}\nencoder.word_hidden={}\n\
             train.variant={}\ntrain.personalization={}\ntrain.epochs={}\ntrain.batch_size={}\n\
             train.lr={}\ntrain.beta1={}\ntrain.beta2={}\ntrain.eps={}\n\
             train.negative_sampling={}\ntrain.negative_q={}\n\
             expand.epochs={}\nexpand.batch_size={}\nexpand.lr={}\nexpand.negatives_per_positive={}\n\
             expand.freeze_new_embedding={}\nexpand.ridge={}\n\
             eval.top_ns={}\neval.min_enabled={}\neval.paraphrase_rate={}\neval.histogram_bins={}\n\
             bench.iterations={}\nbench.warmup={}\n",
            self.seed,
            self.synth.num_skills,
            self.synth.num_categories,
            self.synth.overlap_factor,
            self.synth.num_users,
            self.synth.enablement_mean,
            self.synth.utterances_per_skill,
            self.synth.char_corruption_rate,
            self.synth.short_command_rate,
            self.synth.shared_intent_rate,
            self.split_ratios.0,
            self.split_ratios.1,
            self.split_ratios.2,
            self.min_tokens,
            self.min_count,
            self.catch_all_policy,
            self.catch_all_share_threshold,
            self.encoder.char_emb_dim,
            self.encoder.char_hidden,
            self.encoder.word_emb_dim,
            self.encoder.word_hidden,
            self.train.variant,
            self.train.personalization,
            self.train.epochs,
            self.train.batch_size,
            self.train.lr,
            self.train.beta1,
            self.train.beta2,
            self.train.eps,
            sampling,
            q,
            self.expand.epochs,
            self.expand.batch_size,
            self.expand.lr,
            self.expand.negatives_per_positive,
            self.expand.freeze_new_embedding,
            ridge,
            top_ns.join(","),
            self.eval.min_enabled,
            self.eval.paraphrase_rate,
            self.eval.histogram_bins,
            self.bench.iterations,
            self.bench.warmup,
        )
    }

    /// Filter config with the shared-intent list resolved from a registry.
    pub fn filter_config(&self, shared_intents: std::collections::BTreeSet<String>) -> FilterConfig {
        FilterConfig {
            min_tokens: self.min_tokens,
            min_count: self.min_count,
            catch_all_policy: if self.catch_all_policy == "heuristic" {
                CatchAllPolicy::Heuristic {
                    share_threshold: self.catch_all_share_threshold,
                }
            } else {
                CatchAllPolicy::RegistryFlag
            },
            shared_intents,
        }
    }

    /// Provenance block embedded in output artifacts: the full config text,
    /// the seed, and digests of the command's inputs.
    pub fn provenance(&self, inputs: &[(&str, String)]) -> serde_json::Value {
        let mut input_map = serde_json::Map::new();
        for (name, digest) in inputs {
            input_map.insert(
                name.to_string(),
                serde_json::Value::String(digest.clone()),
            );
        }
        serde_json::json!({
            "config": self.to_text(),
            "seed": self.seed,
            "inputs": serde_json::Value::Object(input_map),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_identity() {
        let mut cfg = RunConfig::default();
        cfg.apply("seed", "42").unwrap();
        cfg.apply("train.personalization", "attention").unwrap();
        cfg.apply("train.negative_sampling", "sampled").unwrap();
        cfg.apply("train.negative_q", "6").unwrap();
        cfg.apply("expand.ridge", "0.25").unwrap();
        cfg.sync_seeds();
        let text = cfg.to_text();
        let back = RunConfig::parse(&text, "inline").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            RunConfig::parse("train.learning_rate=0.1\n", "inline"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::parse("garbage line\n", "inline"),
            Err(ConfigError::BadLine { line: 1, .. })
        ));
        assert!(RunConfig::parse("# comment\n\nseed=3\n", "inline").is_ok());
    }

    #[test]
    fn bad_values_name_the_key() {
        let err = RunConfig::parse("train.lr=fast\n", "inline").unwrap_err();
        match err {
            ConfigError::BadValue { key, .. } => assert_eq!(key, "train.lr"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn seed_propagates_to_stages() {
        let cfg = RunConfig::parse("seed=99\n", "inline").unwrap();
        assert_eq!(cfg.synth.seed, 99);
        assert_eq!(cfg.train.seed, 99);
        assert_eq!(cfg.expand.seed, 99);
    }
}
