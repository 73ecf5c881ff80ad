//! Shared orthography-sensitive hierarchical encoder.
//!
//! A character BiLSTM builds a spelling-sensitive word vector, which is
//! concatenated with a word embedding and fed to a word-level BiLSTM; the
//! utterance representation is the unnormalized sum of the contextual word
//! states. Out-of-vocabulary words fall back to a learned unknown embedding
//! while the character branch still sees the true spelling, so encoding
//! never fails on unseen words.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::corpus::CorpusError;
use crate::numeric::{
    ops, LstmParams, NodeRef, NumericError, ParamId, ParamStore, SplitMix64, Tape, Tensor,
};

pub const UNK: &str = "<unk>";

/// Encoder dimensions. The defaults give the 150-dim char-sensitive word
/// vectors and the 200-dim utterance states the rest of the model assumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub char_emb_dim: usize,
    pub char_hidden: usize,
    pub word_emb_dim: usize,
    pub word_hidden: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            char_emb_dim: 25,
            char_hidden: 25,
            word_emb_dim: 100,
            word_hidden: 100,
        }
    }
}

impl EncoderConfig {
    /// Dimension of the char-sensitive word representation v_i.
    pub fn word_vec_dim(&self) -> usize {
        2 * self.char_hidden + self.word_emb_dim
    }

    /// Dimension of the contextual word state h_i and of the utterance sum.
    pub fn hidden_dim(&self) -> usize {
        2 * self.word_hidden
    }
}

/// Character and word symbol tables. Index 0 is the unknown symbol in both;
/// file layout is one symbol per line, index = line number.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    chars: Vec<String>,
    char_index: HashMap<char, usize>,
    words: Vec<String>,
    word_index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Printable-ASCII character set plus UNK, word list from a training
    /// corpus (sorted, deduplicated) plus UNK.
    pub fn build(corpus_tokens: impl IntoIterator<Item = String>) -> Self {
        let mut words: Vec<String> = vec![UNK.to_string()];
        let set: BTreeSet<String> = corpus_tokens.into_iter().collect();
        words.extend(set);
        let mut chars: Vec<String> = vec![UNK.to_string()];
        chars.extend((0x21u8..=0x7e).map(|b| (b as char).to_string()));
        Self::from_lists(chars, words)
    }

    fn from_lists(chars: Vec<String>, words: Vec<String>) -> Self {
        let char_index = chars
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Some((c, i)),
                    _ => None,
                }
            })
            .collect();
        let word_index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary {
            chars,
            char_index,
            words,
            word_index,
        }
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn char_id(&self, c: char) -> usize {
        *self.char_index.get(&c).unwrap_or(&0)
    }

    pub fn word_id(&self, w: &str) -> usize {
        *self.word_index.get(w).unwrap_or(&0)
    }

    pub fn contains_word(&self, w: &str) -> bool {
        self.word_index.contains_key(w)
    }

    pub fn chars_file(&self) -> String {
        let mut s = String::new();
        for c in &self.chars {
            s.push_str(c);
            s.push('\n');
        }
        s
    }

    pub fn words_file(&self) -> String {
        let mut s = String::new();
        for w in &self.words {
            s.push_str(w);
            s.push('\n');
        }
        s
    }

    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        let write = |name: &str, content: String| {
            std::fs::write(dir.join(name), content).map_err(|source| CorpusError::Io {
                path: dir.join(name).display().to_string(),
                source,
            })
        };
        write("chars.txt", self.chars_file())?;
        write("words.txt", self.words_file())
    }

    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let read = |name: &str| -> Result<Vec<String>, CorpusError> {
            let path = dir.join(name);
            let content = std::fs::read_to_string(&path).map_err(|source| CorpusError::Io {
                path: path.display().to_string(),
                source,
            })?;
            Ok(content.lines().map(str::to_string).collect())
        };
        Ok(Self::from_lists(read("chars.txt")?, read("words.txt")?))
    }

    pub fn from_files(chars_file: &str, words_file: &str) -> Self {
        Self::from_lists(
            chars_file.lines().map(str::to_string).collect(),
            words_file.lines().map(str::to_string).collect(),
        )
    }
}

/// Parameter handles for the full encoder stack.
#[derive(Debug, Clone, Copy)]
pub struct EncoderParams {
    pub char_emb: ParamId,
    pub char_fwd: LstmParams,
    pub char_bwd: LstmParams,
    pub word_emb: ParamId,
    pub word_fwd: LstmParams,
    pub word_bwd: LstmParams,
}

impl EncoderParams {
    pub fn register(
        store: &mut ParamStore,
        cfg: &EncoderConfig,
        vocab: &Vocabulary,
        rng: &mut SplitMix64,
    ) -> Result<Self, NumericError> {
        Self::register_at(store, "encoder", cfg, vocab, rng)
    }

    /// Registers under an arbitrary prefix (the binary baseline owns one
    /// encoder per skill).
    pub fn register_at(
        store: &mut ParamStore,
        prefix: &str,
        cfg: &EncoderConfig,
        vocab: &Vocabulary,
        rng: &mut SplitMix64,
    ) -> Result<Self, NumericError> {
        let char_emb = store.register_uniform(
            &format!("{prefix}.char_emb"),
            vec![vocab.char_count(), cfg.char_emb_dim],
            rng,
            0.1,
        )?;
        let char_fwd = LstmParams::register(
            store,
            &format!("{prefix}.char_fwd"),
            cfg.char_emb_dim,
            cfg.char_hidden,
            rng,
        )?;
        let char_bwd = LstmParams::register(
            store,
            &format!("{prefix}.char_bwd"),
            cfg.char_emb_dim,
            cfg.char_hidden,
            rng,
        )?;
        let word_emb = store.register_uniform(
            &format!("{prefix}.word_emb"),
            vec![vocab.word_count(), cfg.word_emb_dim],
            rng,
            0.1,
        )?;
        let word_fwd = LstmParams::register(
            store,
            &format!("{prefix}.word_fwd"),
            cfg.word_vec_dim(),
            cfg.word_hidden,
            rng,
        )?;
        let word_bwd = LstmParams::register(
            store,
            &format!("{prefix}.word_bwd"),
            cfg.word_vec_dim(),
            cfg.word_hidden,
            rng,
        )?;
        Ok(EncoderParams {
            char_emb,
            char_fwd,
            char_bwd,
            word_emb,
            word_fwd,
            word_bwd,
        })
    }

    pub fn resolve(store: &ParamStore, cfg: &EncoderConfig) -> Result<Self, NumericError> {
        Self::resolve_at(store, "encoder", cfg)
    }

    pub fn resolve_at(
        store: &ParamStore,
        prefix: &str,
        cfg: &EncoderConfig,
    ) -> Result<Self, NumericError> {
        Ok(EncoderParams {
            char_emb: store.id(&format!("{prefix}.char_emb"))?,
            char_fwd: LstmParams::resolve(
                store,
                &format!("{prefix}.char_fwd"),
                cfg.char_emb_dim,
                cfg.char_hidden,
            )?,
            char_bwd: LstmParams::resolve(
                store,
                &format!("{prefix}.char_bwd"),
                cfg.char_emb_dim,
                cfg.char_hidden,
            )?,
            word_emb: store.id(&format!("{prefix}.word_emb"))?,
            word_fwd: LstmParams::resolve(
                store,
                &format!("{prefix}.word_fwd"),
                cfg.word_vec_dim(),
                cfg.word_hidden,
            )?,
            word_bwd: LstmParams::resolve(
                store,
                &format!("{prefix}.word_bwd"),
                cfg.word_vec_dim(),
                cfg.word_hidden,
            )?,
        })
    }
}

/// Records the char-sensitive word vector v = f_last ⊕ b_first ⊕ e_w on the
/// tape.
pub fn encode_word_tape(
    tape: &mut Tape,
    store: &ParamStore,
    params: &EncoderParams,
    vocab: &Vocabulary,
    token: &str,
) -> Result<NodeRef, NumericError> {
    if token.is_empty() {
        return Err(NumericError::EmptyInput {
            context: "encode_word".into(),
        });
    }
    let char_nodes: Vec<NodeRef> = token
        .chars()
        .map(|c| tape.row(store, params.char_emb, vocab.char_id(c)))
        .collect();
    let mut fwd_state: Option<(NodeRef, NodeRef)> = None;
    for &e in &char_nodes {
        let (h_prev, c_prev) = match fwd_state {
            Some((h, c)) => (Some(h), Some(c)),
            None => (None, None),
        };
        fwd_state = Some(tape.lstm_cell(store, &params.char_fwd, e, h_prev, c_prev)?);
    }
    let mut bwd_state: Option<(NodeRef, NodeRef)> = None;
    for &e in char_nodes.iter().rev() {
        let (h_prev, c_prev) = match bwd_state {
            Some((h, c)) => (Some(h), Some(c)),
            None => (None, None),
        };
        bwd_state = Some(tape.lstm_cell(store, &params.char_bwd, e, h_prev, c_prev)?);
    }
    let f_last = fwd_state.expect("non-empty token").0;
    let b_first = bwd_state.expect("non-empty token").0;
    let e_w = tape.row(store, params.word_emb, vocab.word_id(token));
    tape.concat(&[f_last, b_first, e_w])
}

/// Records the word BiLSTM over the token sequence and returns the summed
/// utterance representation h̄ = Σ h_i.
pub fn encode_utterance_tape(
    tape: &mut Tape,
    store: &ParamStore,
    params: &EncoderParams,
    vocab: &Vocabulary,
    tokens: &[String],
) -> Result<NodeRef, NumericError> {
    if tokens.is_empty() {
        return Err(NumericError::EmptyInput {
            context: "encode_utterance".into(),
        });
    }
    let word_vecs: Vec<NodeRef> = tokens
        .iter()
        .map(|t| encode_word_tape(tape, store, params, vocab, t))
        .collect::<Result<_, _>>()?;
    let mut fwd_states = Vec::with_capacity(word_vecs.len());
    let mut state: Option<(NodeRef, NodeRef)> = None;
    for &v in &word_vecs {
        let (h_prev, c_prev) = match state {
            Some((h, c)) => (Some(h), Some(c)),
            None => (None, None),
        };
        let next = tape.lstm_cell(store, &params.word_fwd, v, h_prev, c_prev)?;
        fwd_states.push(next.0);
        state = Some(next);
    }
    let mut bwd_states = Vec::with_capacity(word_vecs.len());
    let mut state: Option<(NodeRef, NodeRef)> = None;
    for &v in word_vecs.iter().rev() {
        let (h_prev, c_prev) = match state {
            Some((h, c)) => (Some(h), Some(c)),
            None => (None, None),
        };
        let next = tape.lstm_cell(store, &params.word_bwd, v, h_prev, c_prev)?;
        bwd_states.push(next.0);
        state = Some(next);
    }
    // h̄ = Σ (f_i ⊕ b_i) = (Σ f_i) ⊕ (Σ b_i).
    let f_sum = tape.add_n(&fwd_states)?;
    let b_sum = tape.add_n(&bwd_states)?;
    tape.concat(&[f_sum, b_sum])
}

/// Inference-path encoder state for one utterance.
pub struct EncodedUtterance {
    /// Contextual word states h_i, each of length hidden_dim().
    pub states: Vec<Tensor>,
    /// Unnormalized sum of the contextual states.
    pub h_bar: Tensor,
}

fn run_char_lstm(
    store: &ParamStore,
    params: &LstmParams,
    embeddings: &[&[f64]],
    reverse: bool,
) -> Vec<f64> {
    let h = params.hidden;
    let mut hs = vec![0.0; h];
    let mut cs = vec![0.0; h];
    let mut first = true;
    let mut run = |x: &[f64]| {
        let (hp, cp) = (hs.clone(), cs.clone());
        ops::lstm_cell_forward(
            x,
            if first { None } else { Some(&hp) },
            if first { None } else { Some(&cp) },
            store.value(params.wx).data(),
            store.value(params.wh).data(),
            store.value(params.b).data(),
            params.input_dim,
            h,
            &mut hs,
            &mut cs,
        );
        first = false;
    };
    if reverse {
        for x in embeddings.iter().rev() {
            run(x);
        }
    } else {
        for x in embeddings {
            run(x);
        }
    }
    hs
}

/// Char-sensitive word vector without tape recording.
pub fn encode_word(
    store: &ParamStore,
    params: &EncoderParams,
    vocab: &Vocabulary,
    token: &str,
) -> Result<Tensor, NumericError> {
    if token.is_empty() {
        return Err(NumericError::EmptyInput {
            context: "encode_word".into(),
        });
    }
    let emb = store.value(params.char_emb);
    let rows: Vec<&[f64]> = token.chars().map(|c| emb.row(vocab.char_id(c))).collect();
    let f_last = run_char_lstm(store, &params.char_fwd, &rows, false);
    let b_first = run_char_lstm(store, &params.char_bwd, &rows, true);
    let mut v = Vec::with_capacity(f_last.len() + b_first.len() + 100);
    v.extend_from_slice(&f_last);
    v.extend_from_slice(&b_first);
    v.extend_from_slice(store.value(params.word_emb).row(vocab.word_id(token)));
    Ok(Tensor::vector(v))
}

/// Full encoder forward without tape recording: contextual states plus h̄.
pub fn encode_utterance(
    store: &ParamStore,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    vocab: &Vocabulary,
    tokens: &[String],
) -> Result<EncodedUtterance, NumericError> {
    if tokens.is_empty() {
        return Err(NumericError::EmptyInput {
            context: "encode_utterance".into(),
        });
    }
    let n = tokens.len();
    let word_vecs: Vec<Tensor> = tokens
        .iter()
        .map(|t| encode_word(store, params, vocab, t))
        .collect::<Result<_, _>>()?;
    let h = cfg.word_hidden;
    let run_dir = |params: &LstmParams, reverse: bool| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; h]; n];
        let mut hs = vec![0.0; h];
        let mut cs = vec![0.0; h];
        let mut first = true;
        let order: Vec<usize> = if reverse {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        };
        for i in order {
            let (hp, cp) = (hs.clone(), cs.clone());
            ops::lstm_cell_forward(
                word_vecs[i].data(),
                if first { None } else { Some(&hp) },
                if first { None } else { Some(&cp) },
                store.value(params.wx).data(),
                store.value(params.wh).data(),
                store.value(params.b).data(),
                params.input_dim,
                h,
                &mut hs,
                &mut cs,
            );
            first = false;
            out[i] = hs.clone();
        }
        out
    };
    let fwd = run_dir(&params.word_fwd, false);
    let bwd = run_dir(&params.word_bwd, true);
    let mut states = Vec::with_capacity(n);
    let mut h_bar = vec![0.0; cfg.hidden_dim()];
    for i in 0..n {
        let mut hi = Vec::with_capacity(cfg.hidden_dim());
        hi.extend_from_slice(&fwd[i]);
        hi.extend_from_slice(&bwd[i]);
        for (acc, &v) in h_bar.iter_mut().zip(&hi) {
            *acc += v;
        }
        states.push(Tensor::vector(hi));
    }
    Ok(EncodedUtterance {
        states,
        h_bar: Tensor::vector(h_bar),
    })
}

/// Token-type coverage of a corpus against the word vocabulary; the
/// informational gate for bootstrap (callers warn below 0.95).
pub fn vocab_coverage<'a>(
    corpus_tokens: impl IntoIterator<Item = &'a str>,
    vocab: &Vocabulary,
) -> f64 {
    let types: BTreeSet<&str> = corpus_tokens.into_iter().collect();
    if types.is_empty() {
        return 1.0;
    }
    let covered = types.iter().filter(|t| vocab.contains_word(t)).count();
    covered as f64 / types.len() as f64
}
