//! Truncated-BPTT training loop for NN1 and NN2.
//!
//! Conversations are shuffled each epoch and processed in batches of 20
//! parallel streams. Each stream runs T+k input steps (k end-of-sequence
//! placeholders); gradients are truncated at 35-step windows with hidden
//! state carried across window boundaries and reset between conversations.
//! Dropout applies to the input of the second LSTM layer and to the
//! readout input, never to the highway-to-LSTM connection. The previous
//! label fed at each step is the teacher label with the scheduled-sampling
//! probability, otherwise the model's previous hard decision; across
//! window boundaries the teacher label carries over.
//!
//! Distinct RNG streams (derived from the config seed) drive
//! initialization, the validation split, shuffling, dropout and the
//! sampling coins, so a schedule pinned at probability 1 is bit-exact
//! teacher forcing.

use std::collections::HashMap;

use ndarray::{s, Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CharVocab, TaggerConfig, TaggerModel, WordForward, EOS_WORD, NEUTRAL_SCORE};
use crate::corpus::Transcript;
use crate::error::{Error, Result};
use crate::neural::ops::{
    dropout_mask, lstm_step_backward_batch, lstm_step_batch, sigmoid_readout_batch, LstmCache,
};
use crate::neural::optim::{clip_global_norm, RmsProp};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    /// exp(mean validation binary cross-entropy).
    pub validation_perplexity: f64,
    pub learning_rate: f64,
    pub teacher_forcing: f64,
    pub lr_decayed: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
}

struct Example {
    words: Vec<String>,
    labels: Vec<u8>,
    scores: Option<Vec<f64>>,
}

/// Trains a tagger on labeled transcripts. `scores` maps conversation ids
/// to per-word acoustic scores and is required exactly when the config
/// requests NN2.
pub fn train_tagger(
    corpus: &[Transcript],
    scores: Option<&HashMap<String, Vec<f64>>>,
    config: &TaggerConfig,
) -> Result<(TaggerModel, TrainTrace)> {
    config.validate()?;
    if config.use_acoustic_score != scores.is_some() {
        return Err(Error::Validation(if config.use_acoustic_score {
            "NN2 training requires acoustic scores".into()
        } else {
            "NN1 training does not accept acoustic scores".to_string()
        }));
    }

    let mut examples = Vec::with_capacity(corpus.len());
    for t in corpus {
        if t.is_empty() {
            continue;
        }
        let labels = t.labels()?;
        let word_scores = match scores {
            Some(map) => {
                let sc = map.get(&t.conversation_id).ok_or_else(|| {
                    Error::Validation(format!(
                        "no acoustic scores for conversation {:?}",
                        t.conversation_id
                    ))
                })?;
                if sc.len() != t.len() {
                    return Err(Error::Validation(format!(
                        "conversation {:?} has {} words but {} scores",
                        t.conversation_id,
                        t.len(),
                        sc.len()
                    )));
                }
                Some(sc.clone())
            }
            None => None,
        };
        examples.push(Example {
            words: t.words.iter().map(|w| w.text.clone()).collect(),
            labels,
            scores: word_scores,
        });
    }
    if examples.is_empty() {
        return Err(Error::Validation("training corpus has no words".into()));
    }

    let seed = config.seed;
    let mut rng_init = ChaCha8Rng::seed_from_u64(seed);
    let mut rng_split = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut rng_shuffle = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut rng_dropout = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    let mut rng_sched = ChaCha8Rng::seed_from_u64(seed.wrapping_add(4));

    let vocab = CharVocab::build(
        corpus
            .iter()
            .flat_map(|t| t.words.iter().map(|w| w.text.as_str())),
    );
    let mut model = TaggerModel::init(config.clone(), vocab, &mut rng_init)?;

    // Seed-selected validation split over conversations.
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng_split);
    let mut n_val = (examples.len() as f64 * config.validation_fraction).round() as usize;
    if n_val >= examples.len() {
        n_val = examples.len() - 1;
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut optimizer = RmsProp::new(
        config.learning_rate,
        config.plateau_threshold,
        config.lr_decay_factor,
    );
    let mut trace = TrainTrace::default();

    for epoch in 0..config.epochs {
        let teacher_p = config.teacher_forcing_at(epoch);
        let lr_in_use = optimizer.learning_rate;
        train_idx.shuffle(&mut rng_shuffle);

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for chunk in train_idx.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let (sum, count) = train_batch(
                &mut model,
                &mut optimizer,
                &batch,
                teacher_p,
                &mut rng_dropout,
                &mut rng_sched,
            )?;
            loss_sum += sum;
            loss_count += count;
        }
        let train_loss = if loss_count > 0 {
            loss_sum / loss_count as f64
        } else {
            0.0
        };
        if !train_loss.is_finite() {
            return Err(Error::TrainingDiverged(format!(
                "training loss became {train_loss} in epoch {}",
                epoch + 1
            )));
        }

        let validation_loss = if val_idx.is_empty() {
            train_loss
        } else {
            validation_loss(&model, &examples, &val_idx)?
        };
        let ppl = validation_loss.exp();
        let decayed = optimizer.end_epoch(ppl);
        trace.epochs.push(EpochStats {
            epoch: epoch + 1,
            train_loss,
            validation_loss,
            validation_perplexity: ppl,
            learning_rate: lr_in_use,
            teacher_forcing: teacher_p,
            lr_decayed: decayed,
        });
    }
    Ok((model, trace))
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn validation_loss(model: &TaggerModel, examples: &[Example], idx: &[usize]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for &i in idx {
        let ex = &examples[i];
        let words: Vec<&str> = ex.words.iter().map(String::as_str).collect();
        let posteriors =
            model.forward_sequence(&words, ex.scores.as_deref(), Some(&ex.labels))?;
        for (p, &y) in posteriors.iter().zip(&ex.labels) {
            sum += bce(*p, f64::from(y));
            count += 1;
        }
    }
    Ok(if count > 0 { sum / count as f64 } else { 0.0 })
}

/// Activations of one input step kept for the backward pass.
struct StepRec<'a> {
    x: Array2<f64>,
    h1_prev: Array2<f64>,
    c1_prev: Array2<f64>,
    h2_prev: Array2<f64>,
    c2_prev: Array2<f64>,
    l1cache: LstmCache,
    l2cache: LstmCache,
    /// Dropout masks: layer-1 output -> layer-2 input, and readout input.
    m1: Array2<f64>,
    m2: Array2<f64>,
    l2_in: Array2<f64>,
    h2d: Array2<f64>,
    posteriors: Array1<f64>,
    out_mask: Vec<bool>,
    targets: Vec<f64>,
    consumed: Vec<Option<&'a str>>,
}

struct CachedWord {
    fwd: WordForward,
    d_x: Array1<f64>,
    touched: bool,
}

/// Recurrent state of a batch of streams between windows.
struct BatchState {
    h1: Array2<f64>,
    c1: Array2<f64>,
    h2: Array2<f64>,
    c2: Array2<f64>,
    prev_vals: Vec<f64>,
}

impl BatchState {
    fn new(b: usize, hidden: usize) -> BatchState {
        BatchState {
            h1: Array2::zeros((b, hidden)),
            c1: Array2::zeros((b, hidden)),
            h2: Array2::zeros((b, hidden)),
            c2: Array2::zeros((b, hidden)),
            prev_vals: vec![0.0; b],
        }
    }
}

/// One batch of conversations through all BPTT windows, updating the
/// model after each window. Returns (loss sum, output count).
fn train_batch(
    model: &mut TaggerModel,
    optimizer: &mut RmsProp,
    batch: &[&Example],
    teacher_p: f64,
    rng_dropout: &mut ChaCha8Rng,
    rng_sched: &mut ChaCha8Rng,
) -> Result<(f64, usize)> {
    let config = model.config.clone();
    let k = config.delay;
    let max_inputs = batch.iter().map(|e| e.words.len() + k).max().unwrap_or(0);
    let mut state = BatchState::new(batch.len(), config.lstm_size);

    let mut total_loss = 0.0;
    let mut total_count = 0usize;
    let mut window_start = 0;
    while window_start < max_inputs {
        let window_end = (window_start + config.bptt_steps).min(max_inputs);
        let (loss, count) = run_window(
            model,
            batch,
            &mut state,
            window_start..window_end,
            teacher_p,
            rng_dropout,
            rng_sched,
        )?;
        total_loss += loss;
        total_count += count;
        if count > 0 {
            let mut params = model.params_mut();
            clip_global_norm(&mut params, config.clip_norm)?;
            optimizer.step(&mut params)?;
        }
        model.zero_grads();
        window_start = window_end;
    }
    Ok((total_loss, total_count))
}

/// Forward and backward over one truncated window, accumulating parameter
/// gradients (scaled to the mean over the window's evaluated outputs) and
/// advancing the recurrent state. Returns (loss sum, output count).
fn run_window(
    model: &mut TaggerModel,
    batch: &[&Example],
    state: &mut BatchState,
    window: std::ops::Range<usize>,
    teacher_p: f64,
    rng_dropout: &mut ChaCha8Rng,
    rng_sched: &mut ChaCha8Rng,
) -> Result<(f64, usize)> {
    let config = model.config.clone();
    let b = batch.len();
    let k = config.delay;
    let hidden = config.lstm_size;
    let n = config.total_filters();
    let in_dim = config.lstm_input_dim();

    // Embed each distinct word consumed in this window once.
    let mut cache: HashMap<&str, CachedWord> = HashMap::new();
    for s in window.clone() {
        for ex in batch {
            if s < ex.words.len() + k {
                let text = if s < ex.words.len() {
                    ex.words[s].as_str()
                } else {
                    EOS_WORD
                };
                if !cache.contains_key(text) {
                    let fwd = model.embed_word_forward(text)?;
                    cache.insert(
                        text,
                        CachedWord {
                            fwd,
                            d_x: Array1::zeros(n),
                            touched: false,
                        },
                    );
                }
            }
        }
    }

    // Forward through the window.
    let mut recs: Vec<StepRec> = Vec::with_capacity(window.len());
    let mut total_loss = 0.0;
    let mut window_count = 0usize;
    for s in window.clone() {
        let mut x = Array2::zeros((b, in_dim));
        let mut consumed: Vec<Option<&str>> = vec![None; b];
        for (i, ex) in batch.iter().enumerate() {
            let t_len = ex.words.len();
            if s >= t_len + k {
                continue;
            }
            let text = if s < t_len {
                ex.words[s].as_str()
            } else {
                EOS_WORD
            };
            consumed[i] = Some(text);
            x.slice_mut(s![i, 0..n]).assign(&cache[text].fwd.x);
            x[(i, n)] = state.prev_vals[i];
            if config.use_acoustic_score {
                x[(i, n + 1)] = if s < t_len {
                    ex.scores.as_ref().expect("validated")[s]
                } else {
                    NEUTRAL_SCORE
                };
            }
        }

        let (h1n, c1n, l1cache) = lstm_step_batch(
            x.view(),
            state.h1.view(),
            state.c1.view(),
            model.lstm1.wx.v2(),
            model.lstm1.wh.v2(),
            model.lstm1.b.v1(),
        )?;
        let m1 = dropout_mask(b, hidden, config.dropout, rng_dropout)?;
        let l2_in = &h1n * &m1;
        let (h2n, c2n, l2cache) = lstm_step_batch(
            l2_in.view(),
            state.h2.view(),
            state.c2.view(),
            model.lstm2.wx.v2(),
            model.lstm2.wh.v2(),
            model.lstm2.b.v1(),
        )?;
        let m2 = dropout_mask(b, hidden, config.dropout, rng_dropout)?;
        let h2d = &h2n * &m2;
        let posteriors = sigmoid_readout_batch(h2d.view(), model.ro_w.v1(), model.ro_b.scalar())?;

        let mut out_mask = vec![false; b];
        let mut targets = vec![0.0f64; b];
        if s >= k {
            let t = s - k;
            for (i, ex) in batch.iter().enumerate() {
                if t < ex.labels.len() {
                    out_mask[i] = true;
                    let y = f64::from(ex.labels[t]);
                    targets[i] = y;
                    total_loss += bce(posteriors[i], y);
                    window_count += 1;
                    // Next step's previous-label input.
                    state.prev_vals[i] = if rng_sched.random::<f64>() < teacher_p {
                        y
                    } else {
                        f64::from(posteriors[i] >= 0.5)
                    };
                }
            }
        }

        recs.push(StepRec {
            x,
            h1_prev: std::mem::replace(&mut state.h1, h1n),
            c1_prev: std::mem::replace(&mut state.c1, c1n),
            h2_prev: std::mem::replace(&mut state.h2, h2n),
            c2_prev: std::mem::replace(&mut state.c2, c2n),
            l1cache,
            l2cache,
            m1,
            m2,
            l2_in,
            h2d,
            posteriors,
            out_mask,
            targets,
            consumed,
        });
    }
    if window_count == 0 {
        return Ok((0.0, 0));
    }
    let scale = 1.0 / window_count as f64;

    // Backward through the window, truncated at its start.
    let mut d_h1 = Array2::<f64>::zeros((b, hidden));
    let mut d_c1 = Array2::<f64>::zeros((b, hidden));
    let mut d_h2 = Array2::<f64>::zeros((b, hidden));
    let mut d_c2 = Array2::<f64>::zeros((b, hidden));
    for rec in recs.iter().rev() {
        let mut d_logit = Array1::<f64>::zeros(b);
        for i in 0..b {
            if rec.out_mask[i] {
                d_logit[i] = (rec.posteriors[i] - rec.targets[i]) * scale;
            }
        }
        {
            let mut g = model.ro_w.g1_mut();
            g += &rec.h2d.t().dot(&d_logit);
        }
        model.ro_b.grad[[0]] += d_logit.sum();

        // d(h2 dropped) via readout, then undo dropout.
        let ro_w = model.ro_w.v1();
        let mut d_h2_step = Array2::<f64>::zeros((b, hidden));
        for i in 0..b {
            if d_logit[i] != 0.0 {
                let mut row = d_h2_step.row_mut(i);
                row.assign(&ro_w);
                row *= d_logit[i];
            }
        }
        d_h2_step *= &rec.m2;
        d_h2_step += &d_h2;

        let g2 = lstm_step_backward_batch(
            rec.l2_in.view(),
            rec.h2_prev.view(),
            rec.c2_prev.view(),
            model.lstm2.wx.v2(),
            model.lstm2.wh.v2(),
            &rec.l2cache,
            d_h2_step.view(),
            d_c2.view(),
        );
        {
            let mut g = model.lstm2.wx.g2_mut();
            g += &g2.d_wx;
        }
        {
            let mut g = model.lstm2.wh.g2_mut();
            g += &g2.d_wh;
        }
        {
            let mut g = model.lstm2.b.g1_mut();
            g += &g2.d_b;
        }
        d_h2 = g2.d_h_prev;
        d_c2 = g2.d_c_prev;

        let mut d_h1_step = g2.d_x;
        d_h1_step *= &rec.m1;
        d_h1_step += &d_h1;

        let g1 = lstm_step_backward_batch(
            rec.x.view(),
            rec.h1_prev.view(),
            rec.c1_prev.view(),
            model.lstm1.wx.v2(),
            model.lstm1.wh.v2(),
            &rec.l1cache,
            d_h1_step.view(),
            d_c1.view(),
        );
        {
            let mut g = model.lstm1.wx.g2_mut();
            g += &g1.d_wx;
        }
        {
            let mut g = model.lstm1.wh.g2_mut();
            g += &g1.d_wh;
        }
        {
            let mut g = model.lstm1.b.g1_mut();
            g += &g1.d_b;
        }
        d_h1 = g1.d_h_prev;
        d_c1 = g1.d_c_prev;

        for (i, key) in rec.consumed.iter().enumerate() {
            if let Some(key) = key {
                let entry = cache.get_mut(key).expect("cached in this window");
                let d_row = g1.d_x.slice(s![i, 0..n]);
                entry.d_x += &d_row;
                entry.touched = true;
            }
        }
    }

    // Embedding path backward, once per distinct word, in a fixed order
    // so float accumulation is reproducible.
    let mut touched: Vec<(&str, CachedWord)> = cache.into_iter().collect();
    touched.sort_by(|a, b| a.0.cmp(b.0));
    for (_, cached) in touched {
        if cached.touched {
            model.embed_word_backward(&cached.fwd, cached.d_x.view());
        }
    }

    // The teacher label of the last emitted word carries across the
    // truncation boundary.
    if window.end > k {
        let t_boundary = window.end - 1 - k;
        for (i, ex) in batch.iter().enumerate() {
            if !ex.labels.is_empty() {
                state.prev_vals[i] = f64::from(ex.labels[t_boundary.min(ex.labels.len() - 1)]);
            }
        }
    }
    Ok((total_loss, window_count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{generate_synthetic_corpus, SyntheticCorpusSpec};
    use crate::corpus::Speaker;
    use crate::tagger::checkpoint;
    use crate::tagger::tests::tiny_config;

    fn toy_corpus() -> Vec<Transcript> {
        let spec = SyntheticCorpusSpec {
            n_train: 8,
            n_test: 0,
            turn_pairs_per_conversation: 4,
            shared_vocab_fraction: 0.0,
            seed: 5,
            ..SyntheticCorpusSpec::default()
        };
        generate_synthetic_corpus(&spec)
            .unwrap()
            .train
            .into_iter()
            .map(|c| c.transcript)
            .collect()
    }

    fn toy_config() -> TaggerConfig {
        TaggerConfig {
            epochs: 5,
            batch_size: 4,
            bptt_steps: 12,
            ..tiny_config(false)
        }
    }

    #[test]
    fn loss_decreases_over_training() {
        let corpus = toy_corpus();
        let (_, trace) = train_tagger(&corpus, None, &toy_config()).unwrap();
        let first = trace.epochs.first().unwrap().train_loss;
        let last = trace.epochs.last().unwrap().train_loss;
        assert!(
            last < first,
            "loss did not improve: {first} -> {last} ({:?})",
            trace
                .epochs
                .iter()
                .map(|e| e.train_loss)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn separable_corpus_trains_to_low_wder() {
        let corpus = toy_corpus();
        let (model, _) = train_tagger(&corpus, None, &toy_config()).unwrap();
        let mut errors = 0usize;
        let mut total = 0usize;
        for t in &corpus {
            let words: Vec<&str> = t.texts();
            let labels = t.labels().unwrap();
            let decoded = model.decode_words(&words, None, 3).unwrap();
            for (d, y) in decoded.labels.iter().zip(&labels) {
                total += 1;
                if d != y {
                    errors += 1;
                }
            }
        }
        let wder = 100.0 * errors as f64 / total as f64;
        assert!(wder < 5.0, "training WDER {wder}% on a separable corpus");
    }

    #[test]
    fn fixed_seed_training_is_bit_identical() {
        let corpus = toy_corpus();
        let config = toy_config();
        let (a, _) = train_tagger(&corpus, None, &config).unwrap();
        let (b, _) = train_tagger(&corpus, None, &config).unwrap();
        let ja = checkpoint::to_bytes(&a).unwrap();
        let jb = checkpoint::to_bytes(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn schedule_pinned_at_one_is_pure_teacher_forcing() {
        // Epoch 0 uses probability 1.0 under both schedules, so a one-epoch
        // run cannot depend on the schedule endpoint.
        let corpus = toy_corpus();
        let mut config = toy_config();
        config.epochs = 1;
        config.teacher_forcing_start = 1.0;
        config.teacher_forcing_end = 1.0;
        let (a, _) = train_tagger(&corpus, None, &config).unwrap();
        config.teacher_forcing_end = 0.7;
        let (b, _) = train_tagger(&corpus, None, &config).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.name, pb.name);
            for (x, y) in pa.value.iter().zip(pb.value.iter()) {
                assert_eq!(x.to_bits(), y.to_bits(), "parameter {} differs", pa.name);
            }
        }
    }

    #[test]
    fn nn2_requires_scores_and_nn1_rejects_them() {
        let corpus = toy_corpus();
        let mut config = toy_config();
        config.use_acoustic_score = true;
        assert!(train_tagger(&corpus, None, &config).is_err());

        let scores: HashMap<String, Vec<f64>> = corpus
            .iter()
            .map(|t| {
                let v: Vec<f64> = t
                    .words
                    .iter()
                    .map(|w| {
                        if w.speaker == Some(Speaker::Customer) {
                            0.9
                        } else {
                            0.1
                        }
                    })
                    .collect();
                (t.conversation_id.clone(), v)
            })
            .collect();
        let (model, _) = train_tagger(&corpus, Some(&scores), &config).unwrap();
        assert!(model.config.use_acoustic_score);

        config.use_acoustic_score = false;
        assert!(train_tagger(&corpus, Some(&scores), &config).is_err());
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let config = toy_config();
        assert!(train_tagger(&[], None, &config).is_err());
    }

    // End-to-end gradient check of the assembled window: with dropout off
    // and full teacher forcing, run_window's loss is a deterministic
    // function of the parameters, so its accumulated gradients must match
    // central finite differences.
    #[test]
    fn window_gradients_match_finite_differences() {
        use rand::SeedableRng;

        let mut config = tiny_config(true);
        config.dropout = 0.0;
        config.delay = 2;
        config.bptt_steps = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let vocab = CharVocab::build(["ab", "ba", "aab", "b"]);
        let mut model = TaggerModel::init(config, vocab, &mut rng).unwrap();

        let ex = Example {
            words: ["ab", "ba", "aab", "b", "ab"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            labels: vec![0, 1, 0, 0, 1],
            scores: Some(vec![0.2, 0.8, 0.3, 0.4, 0.9]),
        };
        let batch = [&ex];
        let window = 0..(ex.words.len() + 2);

        let loss_of = |model: &mut TaggerModel| -> f64 {
            let mut state = BatchState::new(1, model.config.lstm_size);
            let mut d1 = ChaCha8Rng::seed_from_u64(0);
            let mut d2 = ChaCha8Rng::seed_from_u64(0);
            let (loss, count) =
                run_window(model, &batch, &mut state, window.clone(), 1.0, &mut d1, &mut d2)
                    .unwrap();
            loss / count as f64
        };

        let base_loss = loss_of(&mut model);
        assert!(base_loss.is_finite());
        let grads: Vec<Vec<f64>> = model
            .params()
            .iter()
            .map(|p| p.grad.iter().copied().collect())
            .collect();
        model.zero_grads();

        let eps = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n_params = model.params().len();
        for pi in 0..n_params {
            let len = model.params()[pi].value.len();
            // Check a few random entries of every parameter array.
            for _ in 0..3.min(len) {
                let j = rng.random_range(0..len);
                let orig = model.params()[pi].value.as_slice().unwrap()[j];
                model.params_mut()[pi].value.as_slice_mut().unwrap()[j] = orig + eps;
                let up = loss_of(&mut model);
                model.zero_grads();
                model.params_mut()[pi].value.as_slice_mut().unwrap()[j] = orig - eps;
                let down = loss_of(&mut model);
                model.zero_grads();
                model.params_mut()[pi].value.as_slice_mut().unwrap()[j] = orig;

                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads[pi][j];
                let err = (analytic - numeric).abs()
                    / analytic.abs().max(numeric.abs()).max(1e-4);
                assert!(
                    err < 1e-4,
                    "param {pi} entry {j}: analytic {analytic} vs fd {numeric}"
                );
            }
        }
    }
}
