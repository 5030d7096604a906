//! The word-level speaker classifiers NN1 (lexical only) and NN2
//! (lexical + acoustic score): a character-level CNN word embedding with
//! max-over-time pooling, one highway layer, a 2-layer LSTM consuming the
//! previous label (and the acoustic score for NN2) with a k-step output
//! delay, and a sigmoid readout giving P(Customer).

use std::collections::HashMap;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::neural::ops::{
    conv_bank_forward, conv_windows, highway_backward_batch, highway_forward_batch,
    lstm_step_batch, max_over_time, sigmoid_readout_batch, HighwayCache,
};
use crate::neural::Tensor;

pub mod beam;
pub mod checkpoint;
pub mod train;

/// Text of the end-of-sequence placeholder consumed during the last k
/// delay steps; encodes to start/end markers plus padding.
pub const EOS_WORD: &str = "";

/// Neutral acoustic score fed alongside placeholder words.
pub const NEUTRAL_SCORE: f64 = 0.5;

// ---------------------------------------------------------------------------
// Character vocabulary
// ---------------------------------------------------------------------------

pub const PAD_IDX: usize = 0;
pub const UNK_IDX: usize = 1;
pub const SOW_IDX: usize = 2;
pub const EOW_IDX: usize = 3;
const N_RESERVED: usize = 4;

/// Ordered character set with reserved padding, unknown, start-of-word and
/// end-of-word entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharVocab {
    /// Builds the vocabulary from training text; characters are NFC
    /// normalized and sorted for determinism.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> CharVocab {
        let mut set: Vec<char> = texts
            .into_iter()
            .flat_map(|t| t.nfc())
            .collect();
        set.sort_unstable();
        set.dedup();
        CharVocab::from_chars(set)
    }

    pub fn from_chars(chars: Vec<char>) -> CharVocab {
        let index = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + N_RESERVED))
            .collect();
        CharVocab { chars, index }
    }

    pub fn len(&self) -> usize {
        self.chars.len() + N_RESERVED
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Character indices of a word wrapped in start/end markers and padded
    /// to at least `min_len`. Unknown characters map to UNK.
    pub fn encode(&self, text: &str, min_len: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(text.len() + 2);
        idx.push(SOW_IDX);
        for c in text.nfc() {
            idx.push(*self.index.get(&c).unwrap_or(&UNK_IDX));
        }
        idx.push(EOW_IDX);
        while idx.len() < min_len {
            idx.push(PAD_IDX);
        }
        idx
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Hyperparameters of one tagger network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaggerConfig {
    pub filter_widths: Vec<usize>,
    pub filters_per_width: Vec<usize>,
    pub char_dim: usize,
    pub highway_layers: usize,
    pub lstm_layers: usize,
    pub lstm_size: usize,
    /// Output delay k: the label for word t is emitted after consuming
    /// word t+k.
    pub delay: usize,
    pub beam_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub bptt_steps: usize,
    pub dropout: f64,
    pub clip_norm: f64,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub plateau_threshold: f64,
    /// Scheduled sampling: teacher-forcing probability decays linearly
    /// from start to end across the epochs.
    pub teacher_forcing_start: f64,
    pub teacher_forcing_end: f64,
    pub validation_fraction: f64,
    /// false builds NN1, true builds NN2 with the extra score input.
    pub use_acoustic_score: bool,
    pub seed: u64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            filter_widths: vec![1, 2, 3, 4, 5, 6],
            filters_per_width: vec![25, 50, 75, 100, 100, 200],
            char_dim: 15,
            highway_layers: 1,
            lstm_layers: 2,
            lstm_size: 150,
            delay: 2,
            beam_width: 8,
            epochs: 14,
            batch_size: 20,
            bptt_steps: 35,
            dropout: 0.5,
            clip_norm: 5.0,
            learning_rate: 0.1,
            lr_decay_factor: 0.5,
            plateau_threshold: 1.0,
            teacher_forcing_start: 1.0,
            teacher_forcing_end: 0.7,
            validation_fraction: 0.1,
            use_acoustic_score: false,
            seed: 42,
        }
    }
}

impl TaggerConfig {
    /// Total number of CharCNN filters; also the word embedding size N.
    pub fn total_filters(&self) -> usize {
        self.filters_per_width.iter().sum()
    }

    pub fn max_filter_width(&self) -> usize {
        self.filter_widths.iter().copied().max().unwrap_or(1)
    }

    /// Input width of the first LSTM layer: embedding, previous label,
    /// and the acoustic score for NN2.
    pub fn lstm_input_dim(&self) -> usize {
        self.total_filters() + 1 + usize::from(self.use_acoustic_score)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.filter_widths.is_empty() || self.filter_widths.len() != self.filters_per_width.len()
        {
            return cfg(format!(
                "filter_widths ({}) and filters_per_width ({}) must be non-empty and equal length",
                self.filter_widths.len(),
                self.filters_per_width.len()
            ));
        }
        if self.filter_widths.iter().any(|&w| w == 0)
            || self.filters_per_width.iter().any(|&m| m == 0)
        {
            return cfg("filter widths and counts must be positive".into());
        }
        if self.char_dim == 0 || self.lstm_size == 0 {
            return cfg("char_dim and lstm_size must be positive".into());
        }
        if self.highway_layers != 1 {
            return cfg(format!(
                "only one highway layer is supported, got {}",
                self.highway_layers
            ));
        }
        if self.lstm_layers != 2 {
            return cfg(format!(
                "only two LSTM layers are supported, got {}",
                self.lstm_layers
            ));
        }
        if self.beam_width == 0 || self.epochs == 0 || self.batch_size == 0 || self.bptt_steps == 0
        {
            return cfg("beam_width, epochs, batch_size and bptt_steps must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return cfg(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        for (name, v) in [
            ("teacher_forcing_start", self.teacher_forcing_start),
            ("teacher_forcing_end", self.teacher_forcing_end),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return cfg(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return cfg(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return cfg("learning_rate and clip_norm must be positive".into());
        }
        Ok(())
    }

    /// Teacher-forcing probability for a 0-based epoch index.
    pub fn teacher_forcing_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.teacher_forcing_start;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.teacher_forcing_start + (self.teacher_forcing_end - self.teacher_forcing_start) * frac
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// One width group of CharCNN filters; each row of `filters` is a
/// row-major flattened d x width kernel.
#[derive(Debug, Clone)]
pub struct ConvGroup {
    pub width: usize,
    pub filters: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
}

impl LstmLayer {
    fn init(name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> LstmLayer {
        let wx = Tensor::uniform(format!("{name}.wx"), &[4 * hidden, input], 0.05, rng);
        let wh = Tensor::uniform(format!("{name}.wh"), &[4 * hidden, hidden], 0.05, rng);
        let mut b = Tensor::zeros(format!("{name}.b"), &[4 * hidden]);
        // Forget-gate bias +1 stabilizes early BPTT.
        for i in hidden..2 * hidden {
            b.value[[i]] = 1.0;
        }
        LstmLayer { wx, wh, b }
    }
}

/// All trainable parameters of one tagger network.
#[derive(Debug, Clone)]
pub struct TaggerModel {
    pub config: TaggerConfig,
    pub vocab: CharVocab,
    /// Character embedding table, |C| x d.
    pub char_embed: Tensor,
    pub conv: Vec<ConvGroup>,
    pub hw_w: Tensor,
    pub hw_b: Tensor,
    pub hw_wt: Tensor,
    pub hw_bt: Tensor,
    pub lstm1: LstmLayer,
    pub lstm2: LstmLayer,
    pub ro_w: Tensor,
    pub ro_b: Tensor,
}

impl TaggerModel {
    pub fn init(config: TaggerConfig, vocab: CharVocab, rng: &mut impl Rng) -> Result<TaggerModel> {
        config.validate()?;
        let d = config.char_dim;
        let n = config.total_filters();
        let hidden = config.lstm_size;
        let char_embed = Tensor::uniform("char_embed", &[vocab.len(), d], 0.05, rng);
        let conv = config
            .filter_widths
            .iter()
            .zip(&config.filters_per_width)
            .map(|(&width, &m)| ConvGroup {
                width,
                filters: Tensor::uniform(format!("conv_w{width}.filters"), &[m, d * width], 0.05, rng),
                bias: Tensor::zeros(format!("conv_w{width}.bias"), &[m]),
            })
            .collect();
        Ok(TaggerModel {
            char_embed,
            conv,
            hw_w: Tensor::uniform("highway.w", &[n, n], 0.05, rng),
            hw_b: Tensor::zeros("highway.b", &[n]),
            hw_wt: Tensor::uniform("highway.wt", &[n, n], 0.05, rng),
            hw_bt: Tensor::zeros("highway.bt", &[n]),
            lstm1: LstmLayer::init("lstm1", config.lstm_input_dim(), hidden, rng),
            lstm2: LstmLayer::init("lstm2", hidden, hidden, rng),
            ro_w: Tensor::uniform("readout.w", &[hidden], 0.05, rng),
            ro_b: Tensor::zeros("readout.b", &[1]),
            config,
            vocab,
        })
    }

    /// Parameters in canonical order (checkpoint and optimizer order).
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.char_embed];
        for g in &mut self.conv {
            out.push(&mut g.filters);
            out.push(&mut g.bias);
        }
        out.extend([
            &mut self.hw_w,
            &mut self.hw_b,
            &mut self.hw_wt,
            &mut self.hw_bt,
            &mut self.lstm1.wx,
            &mut self.lstm1.wh,
            &mut self.lstm1.b,
            &mut self.lstm2.wx,
            &mut self.lstm2.wh,
            &mut self.lstm2.b,
            &mut self.ro_w,
            &mut self.ro_b,
        ]);
        out
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.char_embed];
        for g in &self.conv {
            out.push(&g.filters);
            out.push(&g.bias);
        }
        out.extend([
            &self.hw_w,
            &self.hw_b,
            &self.hw_wt,
            &self.hw_bt,
            &self.lstm1.wx,
            &self.lstm1.wh,
            &self.lstm1.b,
            &self.lstm2.wx,
            &self.lstm2.wh,
            &self.lstm2.b,
            &self.ro_w,
            &self.ro_b,
        ]);
        out
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

// ---------------------------------------------------------------------------
// Word embedding (CharCNN + highway)
// ---------------------------------------------------------------------------

/// Activations of one word's embedding pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct WordForward {
    pub char_idx: Vec<usize>,
    /// Per width group: sliding windows, positions x (d*u).
    pub windows: Vec<Array2<f64>>,
    /// Per width group: tanh feature maps, positions x m.
    pub fmaps: Vec<Array2<f64>>,
    /// Per width group: pooled argmax position per filter.
    pub argmax: Vec<Vec<usize>>,
    pub y: Array1<f64>,
    pub hw_cache: HighwayCache,
    pub x: Array1<f64>,
}

impl TaggerModel {
    /// CharCNN + max-over-time + highway for one word, keeping every
    /// intermediate needed by [`TaggerModel::embed_word_backward`].
    pub fn embed_word_forward(&self, text: &str) -> Result<WordForward> {
        let d = self.config.char_dim;
        let char_idx = self
            .vocab
            .encode(text, self.config.max_filter_width());
        let l = char_idx.len();
        let embed = self.char_embed.v2();
        let mut cw = Array2::zeros((d, l));
        for (j, &ci) in char_idx.iter().enumerate() {
            cw.column_mut(j).assign(&embed.row(ci));
        }

        let n = self.config.total_filters();
        let mut y = Array1::zeros(n);
        let mut windows = Vec::with_capacity(self.conv.len());
        let mut fmaps = Vec::with_capacity(self.conv.len());
        let mut argmax = Vec::with_capacity(self.conv.len());
        let mut offset = 0;
        for group in &self.conv {
            let w = conv_windows(cw.view(), group.width)?;
            let fmap = conv_bank_forward(&w, group.filters.v2(), group.bias.v1());
            let m = fmap.ncols();
            let mut args = Vec::with_capacity(m);
            for fi in 0..m {
                let (best, arg) = max_over_time(fmap.column(fi))?;
                y[offset + fi] = best;
                args.push(arg);
            }
            offset += m;
            windows.push(w);
            fmaps.push(fmap);
            argmax.push(args);
        }

        let (x, hw_cache) = highway_forward_batch(
            y.view().insert_axis(Axis(0)),
            self.hw_w.v2(),
            self.hw_b.v1(),
            self.hw_wt.v2(),
            self.hw_bt.v1(),
        )?;
        Ok(WordForward {
            char_idx,
            windows,
            fmaps,
            argmax,
            y,
            hw_cache,
            x: x.row(0).to_owned(),
        })
    }

    /// The word embedding pair of the architecture: the pooled CharCNN
    /// vector y and its highway output x.
    pub fn embed_word(&self, text: &str) -> Result<(Array1<f64>, Array1<f64>)> {
        let fwd = self.embed_word_forward(text)?;
        Ok((fwd.y, fwd.x))
    }

    /// Accumulates parameter gradients of one word's embedding pass given
    /// the upstream gradient on x.
    pub fn embed_word_backward(&mut self, fwd: &WordForward, d_x: ndarray::ArrayView1<f64>) {
        let grads = highway_backward_batch(
            fwd.y.view().insert_axis(Axis(0)),
            self.hw_w.v2(),
            self.hw_wt.v2(),
            &fwd.hw_cache,
            d_x.insert_axis(Axis(0)),
        );
        {
            let mut g = self.hw_w.g2_mut();
            g += &grads.d_w;
        }
        {
            let mut g = self.hw_b.g1_mut();
            g += &grads.d_b;
        }
        {
            let mut g = self.hw_wt.g2_mut();
            g += &grads.d_w_t;
        }
        {
            let mut g = self.hw_bt.g1_mut();
            g += &grads.d_b_t;
        }
        let d_y = grads.d_y.row(0);

        let d = self.config.char_dim;
        let l = fwd.char_idx.len();
        let mut d_cw = Array2::<f64>::zeros((d, l));
        let mut offset = 0;
        for (gi, group) in self.conv.iter_mut().enumerate() {
            let u = group.width;
            let m = group.bias.value.len();
            let fval = group.filters.value.view().into_dimensionality::<ndarray::Ix2>().expect("2-d");
            let mut fgrad = group
                .filters
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix2>()
                .expect("2-d");
            for fi in 0..m {
                let dv = d_y[offset + fi];
                if dv == 0.0 {
                    continue;
                }
                let pos = fwd.argmax[gi][fi];
                let fv = fwd.fmaps[gi][(pos, fi)];
                let d_pre = dv * (1.0 - fv * fv);
                group.bias.grad[[fi]] += d_pre;
                let window = fwd.windows[gi].row(pos);
                for (k, &wv) in window.iter().enumerate() {
                    fgrad[(fi, k)] += d_pre * wv;
                }
                for r in 0..d {
                    for c in 0..u {
                        d_cw[(r, pos + c)] += d_pre * fval[(fi, r * u + c)];
                    }
                }
            }
            offset += m;
        }

        let mut eg = self.char_embed.g2_mut();
        for (j, &ci) in fwd.char_idx.iter().enumerate() {
            for r in 0..d {
                eg[(ci, r)] += d_cw[(r, j)];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Sequence forward (inference)
// ---------------------------------------------------------------------------

impl TaggerModel {
    /// Per-word Customer posteriors for one conversation, without dropout.
    ///
    /// The LSTM runs T+k input steps: at input step s it consumes word s
    /// (the EOS placeholder once s >= T), the previous label and, for NN2,
    /// the word's acoustic score; the posterior for word t is emitted at
    /// step t+k. The previous label is the teacher label when given,
    /// otherwise the model's previous hard decision.
    pub fn forward_sequence(
        &self,
        words: &[&str],
        scores: Option<&[f64]>,
        teacher: Option<&[u8]>,
    ) -> Result<Vec<f64>> {
        self.check_sequence_inputs(words.len(), scores.map(<[f64]>::len), teacher.map(<[u8]>::len))?;
        let t_len = words.len();
        let k = self.config.delay;
        let hidden = self.config.lstm_size;
        let in_dim = self.config.lstm_input_dim();
        let n = self.config.total_filters();

        let mut cache: HashMap<&str, Array1<f64>> = HashMap::new();
        for &w in words {
            if !cache.contains_key(w) {
                let (_, x) = self.embed_word(w)?;
                cache.insert(w, x);
            }
        }
        let (_, eos_x) = self.embed_word(EOS_WORD)?;

        let mut h1 = Array2::zeros((1, hidden));
        let mut c1 = Array2::zeros((1, hidden));
        let mut h2 = Array2::zeros((1, hidden));
        let mut c2 = Array2::zeros((1, hidden));
        let mut prev_label = 0.0f64;
        let mut posteriors = Vec::with_capacity(t_len);

        for s in 0..t_len + k {
            let x = if s < t_len { &cache[words[s]] } else { &eos_x };
            let mut input = Array2::zeros((1, in_dim));
            input.slice_mut(ndarray::s![0, 0..n]).assign(x);
            input[(0, n)] = prev_label;
            if let Some(scores) = scores {
                input[(0, n + 1)] = if s < t_len { scores[s] } else { NEUTRAL_SCORE };
            }
            let (h1n, c1n, _) = lstm_step_batch(
                input.view(),
                h1.view(),
                c1.view(),
                self.lstm1.wx.v2(),
                self.lstm1.wh.v2(),
                self.lstm1.b.v1(),
            )?;
            let (h2n, c2n, _) = lstm_step_batch(
                h1n.view(),
                h2.view(),
                c2.view(),
                self.lstm2.wx.v2(),
                self.lstm2.wh.v2(),
                self.lstm2.b.v1(),
            )?;
            h1 = h1n;
            c1 = c1n;
            h2 = h2n;
            c2 = c2n;

            if s >= k {
                let t = s - k;
                let p = sigmoid_readout_batch(h2.view(), self.ro_w.v1(), self.ro_b.scalar())?[0];
                posteriors.push(p);
                prev_label = match teacher {
                    Some(labels) => f64::from(labels[t]),
                    None => f64::from(p >= 0.5),
                };
            }
        }
        Ok(posteriors)
    }

    fn check_sequence_inputs(
        &self,
        n_words: usize,
        n_scores: Option<usize>,
        n_teacher: Option<usize>,
    ) -> Result<()> {
        match (self.config.use_acoustic_score, n_scores) {
            (true, None) => {
                return Err(Error::Validation(
                    "NN2 requires per-word acoustic scores".into(),
                ))
            }
            (false, Some(_)) => {
                return Err(Error::Validation(
                    "NN1 does not accept acoustic scores".into(),
                ))
            }
            (_, Some(ns)) if ns != n_words => {
                return Err(Error::Validation(format!(
                    "score count {ns} does not match word count {n_words}"
                )))
            }
            _ => {}
        }
        if let Some(nt) = n_teacher {
            if nt != n_words {
                return Err(Error::Validation(format!(
                    "teacher label count {nt} does not match word count {n_words}"
                )));
            }
        }
        Ok(())
    }
}
