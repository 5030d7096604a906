//! Beam search over the binary label alphabet.
//!
//! Each hypothesis carries its own decoder state; expanding a hypothesis
//! re-evaluates the step posterior conditioned on the hypothesis's last
//! label. Ties break toward label 0, then lexicographically.

use ndarray::{Array1, Array2};

use super::{TaggerModel, EOS_WORD, NEUTRAL_SCORE};
use crate::error::{Error, Result};
use crate::neural::ops::{lstm_step_batch, sigmoid_readout_batch};

/// Winning hypothesis of a decode.
#[derive(Debug, Clone)]
pub struct BeamResult {
    pub labels: Vec<u8>,
    /// Sum of per-step log posteriors of the chosen labels.
    pub log_prob: f64,
    /// P(Customer) emitted at each step along the winning hypothesis.
    pub posteriors: Vec<f64>,
}

#[derive(Clone)]
struct Hypothesis<S> {
    labels: Vec<u8>,
    log_prob: f64,
    posteriors: Vec<f64>,
    state: S,
}

fn better<S>(a: &Hypothesis<S>, b: &Hypothesis<S>) -> std::cmp::Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then_with(|| a.labels.cmp(&b.labels))
}

/// Generic beam search: `step(&state, last_label, t)` returns the
/// Customer posterior for step `t` and the successor state. `K = 1` is
/// greedy decoding.
pub fn beam_decode<S: Clone>(
    initial: S,
    mut step: impl FnMut(&S, u8, usize) -> (f64, S),
    t_len: usize,
    k: usize,
) -> Result<BeamResult> {
    if k == 0 {
        return Err(Error::Validation("beam width must be >= 1".into()));
    }
    let mut beam = vec![Hypothesis {
        labels: Vec::new(),
        log_prob: 0.0,
        posteriors: Vec::new(),
        state: initial,
    }];
    for t in 0..t_len {
        let mut candidates = Vec::with_capacity(beam.len() * 2);
        for hyp in &beam {
            let last = hyp.labels.last().copied().unwrap_or(0);
            let (p, next_state) = step(&hyp.state, last, t);
            for bit in [0u8, 1u8] {
                let mut labels = hyp.labels.clone();
                labels.push(bit);
                let mut posteriors = hyp.posteriors.clone();
                posteriors.push(p);
                let lp = if bit == 1 { p.ln() } else { (1.0 - p).ln() };
                candidates.push(Hypothesis {
                    labels,
                    log_prob: hyp.log_prob + lp,
                    posteriors,
                    state: next_state.clone(),
                });
            }
        }
        candidates.sort_by(better);
        candidates.truncate(k);
        beam = candidates;
    }
    let best = beam
        .into_iter()
        .next()
        .expect("beam always holds at least one hypothesis");
    Ok(BeamResult {
        labels: best.labels,
        log_prob: best.log_prob,
        posteriors: best.posteriors,
    })
}

/// LSTM state of one hypothesis.
#[derive(Debug, Clone)]
pub struct DecodeState {
    h1: Array1<f64>,
    c1: Array1<f64>,
    h2: Array1<f64>,
    c2: Array1<f64>,
}

impl TaggerModel {
    /// Beam-decodes one conversation. Word embeddings are computed once
    /// per distinct word; all live hypotheses advance through the LSTM as
    /// one batch per step.
    pub fn decode_words(
        &self,
        words: &[&str],
        scores: Option<&[f64]>,
        beam_width: usize,
    ) -> Result<BeamResult> {
        if beam_width == 0 {
            return Err(Error::Validation("beam width must be >= 1".into()));
        }
        self.check_sequence_inputs(words.len(), scores.map(<[f64]>::len), None)?;
        let t_len = words.len();
        if t_len == 0 {
            return Ok(BeamResult {
                labels: Vec::new(),
                log_prob: 0.0,
                posteriors: Vec::new(),
            });
        }
        let k = self.config.delay;
        let hidden = self.config.lstm_size;

        let mut embeds: std::collections::HashMap<&str, Array1<f64>> =
            std::collections::HashMap::new();
        for &w in words {
            if !embeds.contains_key(w) {
                embeds.insert(w, self.embed_word(w)?.1);
            }
        }
        let eos_x = self.embed_word(EOS_WORD)?.1;
        let x_at = |s: usize| -> &Array1<f64> {
            if s < t_len {
                &embeds[words[s]]
            } else {
                &eos_x
            }
        };
        let score_at = |s: usize| -> f64 {
            match scores {
                Some(sc) if s < t_len => sc[s],
                _ => NEUTRAL_SCORE,
            }
        };

        // Shared prefix: consume the first k words with prev label 0.
        let mut state = DecodeState {
            h1: Array1::zeros(hidden),
            c1: Array1::zeros(hidden),
            h2: Array1::zeros(hidden),
            c2: Array1::zeros(hidden),
        };
        for s in 0..k.min(t_len + k) {
            let (p_unused, next) = self.advance_batch(
                std::slice::from_ref(&state),
                &[0.0],
                x_at(s),
                score_at(s),
            )?;
            let _ = p_unused;
            state = next.into_iter().next().expect("one row");
        }

        let mut beam = vec![Hypothesis {
            labels: Vec::new(),
            log_prob: 0.0,
            posteriors: Vec::new(),
            state,
        }];
        for t in 0..t_len {
            let s = t + k;
            let states: Vec<DecodeState> = beam.iter().map(|h| h.state.clone()).collect();
            let prev: Vec<f64> = beam
                .iter()
                .map(|h| f64::from(h.labels.last().copied().unwrap_or(0)))
                .collect();
            let (posteriors, next_states) =
                self.advance_batch(&states, &prev, x_at(s), score_at(s))?;

            let mut candidates = Vec::with_capacity(beam.len() * 2);
            for (i, hyp) in beam.iter().enumerate() {
                let p = posteriors[i];
                for bit in [0u8, 1u8] {
                    let mut labels = hyp.labels.clone();
                    labels.push(bit);
                    let mut posts = hyp.posteriors.clone();
                    posts.push(p);
                    let lp = if bit == 1 { p.ln() } else { (1.0 - p).ln() };
                    candidates.push(Hypothesis {
                        labels,
                        log_prob: hyp.log_prob + lp,
                        posteriors: posts,
                        state: next_states[i].clone(),
                    });
                }
            }
            candidates.sort_by(better);
            candidates.truncate(beam_width);
            beam = candidates;
        }
        let best = beam.into_iter().next().expect("non-empty beam");
        Ok(BeamResult {
            labels: best.labels,
            log_prob: best.log_prob,
            posteriors: best.posteriors,
        })
    }

    /// Advances a batch of hypothesis states one input step; every row
    /// consumes the same word embedding and score but its own previous
    /// label.
    fn advance_batch(
        &self,
        states: &[DecodeState],
        prev_labels: &[f64],
        x: &Array1<f64>,
        score: f64,
    ) -> Result<(Vec<f64>, Vec<DecodeState>)> {
        let b = states.len();
        let hidden = self.config.lstm_size;
        let n = self.config.total_filters();
        let in_dim = self.config.lstm_input_dim();

        let mut input = Array2::zeros((b, in_dim));
        let mut h1 = Array2::zeros((b, hidden));
        let mut c1 = Array2::zeros((b, hidden));
        let mut h2 = Array2::zeros((b, hidden));
        let mut c2 = Array2::zeros((b, hidden));
        for (i, st) in states.iter().enumerate() {
            input.slice_mut(ndarray::s![i, 0..n]).assign(x);
            input[(i, n)] = prev_labels[i];
            if self.config.use_acoustic_score {
                input[(i, n + 1)] = score;
            }
            h1.row_mut(i).assign(&st.h1);
            c1.row_mut(i).assign(&st.c1);
            h2.row_mut(i).assign(&st.h2);
            c2.row_mut(i).assign(&st.c2);
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
        let p = sigmoid_readout_batch(h2n.view(), self.ro_w.v1(), self.ro_b.scalar())?;
        let next = (0..b)
            .map(|i| DecodeState {
                h1: h1n.row(i).to_owned(),
                c1: c1n.row(i).to_owned(),
                h2: h2n.row(i).to_owned(),
                c2: c2n.row(i).to_owned(),
            })
            .collect();
        Ok((p.to_vec(), next))
    }
}
