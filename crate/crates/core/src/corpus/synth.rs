//! Synthetic interview-corpus generator.
//!
//! Stands in for a real call-center database: each conversation alternates
//! interviewer question turns and customer answer turns drawn from template
//! pools, with contiguous word timing and per-word acoustic frames sampled
//! from per-speaker Gaussians. Turn lengths follow configurable
//! distributions over the same buckets used by the scorer (customer mass on
//! 1-5 words, interviewer mass on 6+ words).

use std::collections::BTreeMap;
use std::ops::Range;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Speaker, Transcript, WordToken};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FRAME_SHIFT_S, MFCC_DIM};
use crate::scoring::{LengthBucket, ALL_BUCKETS};

const MIN_WORD_DURATION_S: f64 = 0.15;
/// Steering activates once a split has this many words.
const STEER_WARMUP_WORDS: usize = 150;
/// Steering kicks in when the running fraction drifts this far from target.
const STEER_TOLERANCE: f64 = 0.02;

/// Configuration of the generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticCorpusSpec {
    pub n_train: usize,
    pub n_test: usize,
    /// Target fraction of interviewer words, strictly in (0, 1).
    pub interviewer_fraction: f64,
    pub question_templates: Vec<Vec<String>>,
    pub answer_templates: Vec<Vec<String>>,
    /// Probability that a word is replaced by a draw from the shared
    /// (union) vocabulary, degrading lexical separability.
    pub shared_vocab_fraction: f64,
    /// Per-speaker acoustic means, 20-dim each.
    pub interviewer_mean: Vec<f64>,
    pub customer_mean: Vec<f64>,
    pub acoustic_stddev: f64,
    pub words_per_second: f64,
    pub turn_pairs_per_conversation: usize,
    /// Turn-length distributions over the buckets 1, 2, 3-5, 6-10, 11-15,
    /// 16-20, >20.
    pub interviewer_turn_dist: Vec<f64>,
    pub customer_turn_dist: Vec<f64>,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            n_train: 240,
            n_test: 30,
            interviewer_fraction: 0.79,
            question_templates: default_question_templates(),
            answer_templates: default_answer_templates(),
            shared_vocab_fraction: 0.10,
            interviewer_mean: vec![0.5; MFCC_DIM],
            customer_mean: vec![-0.5; MFCC_DIM],
            acoustic_stddev: 1.0,
            words_per_second: 3.0,
            turn_pairs_per_conversation: 8,
            interviewer_turn_dist: vec![0.0, 0.0, 0.05, 0.45, 0.30, 0.13, 0.07],
            customer_turn_dist: vec![0.35, 0.30, 0.30, 0.05, 0.0, 0.0, 0.0],
            seed: 42,
        }
    }
}

fn templates(specs: &[&str]) -> Vec<Vec<String>> {
    specs
        .iter()
        .map(|s| s.split_whitespace().map(String::from).collect())
        .collect()
}

pub fn default_question_templates() -> Vec<Vec<String>> {
    templates(&[
        "why is that",
        "anything else to add",
        "could you explain that further",
        "how satisfied are you with our service",
        "did our technician arrive on time",
        "would you recommend our company to a friend",
        "how would you rate the waiting time today",
        "was the billing information clear to you",
        "did the agent resolve your issue completely",
        "how easy was it to reach our support line",
        "were you informed about the repair schedule in advance",
        "on a scale from one to ten how would you rate the call",
        "thinking about your last visit how satisfied were you with the staff",
        "compared with other providers how do you rate our internet speed",
        "is there anything about the installation process that we could improve",
        "how likely are you to renew your contract with us next year",
        "before we finish could you tell me in a few words what you liked most about the service you received",
        "taking into account the price the speed and the support how satisfied are you with the overall package",
        "when you called our support line last week how long did you wait before an agent answered your call",
        "thank you for your patience now thinking about everything we discussed today from the installation to the billing how satisfied are you overall with the company",
        "finally considering the technical visit the waiting time on the phone and the clarity of the invoice please tell me again how likely you are to recommend us",
    ])
}

pub fn default_answer_templates() -> Vec<Vec<String>> {
    templates(&[
        "yes",
        "no",
        "maybe",
        "five",
        "nine",
        "ten",
        "sure",
        "okay",
        "fine",
        "never",
        "not really",
        "of course",
        "very good",
        "too slow",
        "pretty bad",
        "no thanks",
        "it was fine",
        "i am not sure",
        "the agent was helpful",
        "everything worked very well",
        "it took far too long",
        "i would say eight",
        "mostly satisfied i think",
        "no complaints at all",
        "i had to wait a very long time",
        "the technician was polite and solved everything",
        "i am thinking about changing to another provider",
    ])
}

/// One speaker turn as a range of word indices into the transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnSpan {
    pub speaker: Speaker,
    pub words: Range<usize>,
}

/// A generated conversation: labeled transcript, acoustic frames and the
/// true turn structure.
#[derive(Debug, Clone)]
pub struct GeneratedConversation {
    pub transcript: Transcript,
    pub features: FeatureMatrix,
    pub turns: Vec<TurnSpan>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: Vec<GeneratedConversation>,
    pub test: Vec<GeneratedConversation>,
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if !(self.interviewer_fraction > 0.0 && self.interviewer_fraction < 1.0) {
            return cfg(format!(
                "interviewer_fraction must be in (0, 1), got {}",
                self.interviewer_fraction
            ));
        }
        if self.question_templates.is_empty() || self.answer_templates.is_empty() {
            return cfg("question and answer template lists must be non-empty".into());
        }
        for (name, set) in [
            ("question", &self.question_templates),
            ("answer", &self.answer_templates),
        ] {
            for t in set {
                if t.is_empty() {
                    return cfg(format!("{name} template with zero words"));
                }
                for w in t {
                    if w.trim().is_empty() || w.chars().any(char::is_whitespace) {
                        return cfg(format!("invalid {name} template word {w:?}"));
                    }
                }
            }
        }
        let avg = |set: &[Vec<String>]| {
            set.iter().map(Vec::len).sum::<usize>() as f64 / set.len() as f64
        };
        if avg(&self.question_templates) <= avg(&self.answer_templates) {
            return cfg("question templates must be longer than answer templates on average".into());
        }
        if !(0.0..=1.0).contains(&self.shared_vocab_fraction) {
            return cfg(format!(
                "shared_vocab_fraction must be in [0, 1], got {}",
                self.shared_vocab_fraction
            ));
        }
        for (name, mean) in [
            ("interviewer_mean", &self.interviewer_mean),
            ("customer_mean", &self.customer_mean),
        ] {
            if mean.len() != MFCC_DIM {
                return cfg(format!("{name} must have {MFCC_DIM} entries, got {}", mean.len()));
            }
        }
        if !(self.acoustic_stddev > 0.0) {
            return cfg("acoustic_stddev must be > 0".into());
        }
        if !(self.words_per_second > 0.0) {
            return cfg("words_per_second must be > 0".into());
        }
        if self.turn_pairs_per_conversation == 0 {
            return cfg("turn_pairs_per_conversation must be >= 1".into());
        }
        for (name, dist) in [
            ("interviewer_turn_dist", &self.interviewer_turn_dist),
            ("customer_turn_dist", &self.customer_turn_dist),
        ] {
            if dist.len() != ALL_BUCKETS.len() {
                return cfg(format!(
                    "{name} must have {} entries, got {}",
                    ALL_BUCKETS.len(),
                    dist.len()
                ));
            }
            if dist.iter().any(|p| !(*p >= 0.0)) || dist.iter().sum::<f64>() <= 0.0 {
                return cfg(format!("{name} must be non-negative with positive mass"));
            }
        }

        // The target fraction must be reachable with the extreme template
        // choices, otherwise steering cannot hold the band.
        let lens = |set: &[Vec<String>]| {
            let min = set.iter().map(Vec::len).min().unwrap() as f64;
            let max = set.iter().map(Vec::len).max().unwrap() as f64;
            (min, max)
        };
        let (q_min, q_max) = lens(&self.question_templates);
        let (a_min, a_max) = lens(&self.answer_templates);
        let f_min = q_min / (q_min + a_max);
        let f_max = q_max / (q_max + a_min);
        if self.interviewer_fraction < f_min - 0.04 || self.interviewer_fraction > f_max + 0.04 {
            return cfg(format!(
                "interviewer_fraction {} is outside the achievable range [{f_min:.3}, {f_max:.3}] \
                 of the given templates",
                self.interviewer_fraction
            ));
        }
        Ok(())
    }
}

/// Template indices grouped by length bucket, with the distribution
/// restricted to non-empty buckets.
struct TemplatePool {
    by_bucket: BTreeMap<LengthBucket, Vec<usize>>,
    weights: Vec<(LengthBucket, f64)>,
    shortest: usize,
    longest: usize,
}

impl TemplatePool {
    fn new(templates: &[Vec<String>], dist: &[f64]) -> TemplatePool {
        let mut by_bucket: BTreeMap<LengthBucket, Vec<usize>> = BTreeMap::new();
        for (i, t) in templates.iter().enumerate() {
            by_bucket.entry(LengthBucket::of(t.len())).or_default().push(i);
        }
        let weights: Vec<(LengthBucket, f64)> = ALL_BUCKETS
            .iter()
            .zip(dist)
            .filter(|(b, p)| **p > 0.0 && by_bucket.contains_key(b))
            .map(|(b, p)| (*b, *p))
            .collect();
        let shortest = (0..templates.len())
            .min_by_key(|&i| templates[i].len())
            .unwrap();
        let longest = (0..templates.len())
            .max_by_key(|&i| templates[i].len())
            .unwrap();
        TemplatePool {
            by_bucket,
            weights,
            shortest,
            longest,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        if self.weights.is_empty() {
            // Distribution mass misses every populated bucket; fall back to
            // uniform over templates via bucket choice.
            let buckets: Vec<&Vec<usize>> = self.by_bucket.values().collect();
            let b = buckets[rng.random_range(0..buckets.len())];
            return b[rng.random_range(0..b.len())];
        }
        let total: f64 = self.weights.iter().map(|(_, p)| p).sum();
        let mut x = rng.random::<f64>() * total;
        let mut chosen = self.weights[self.weights.len() - 1].0;
        for &(b, p) in &self.weights {
            if x < p {
                chosen = b;
                break;
            }
            x -= p;
        }
        let ids = &self.by_bucket[&chosen];
        ids[rng.random_range(0..ids.len())]
    }
}

struct SplitState {
    interviewer_words: usize,
    customer_words: usize,
}

impl SplitState {
    fn fraction(&self) -> f64 {
        let total = self.interviewer_words + self.customer_words;
        if total == 0 {
            0.0
        } else {
            self.interviewer_words as f64 / total as f64
        }
    }
}

/// Generates train and test splits. Deterministic given the spec seed.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let union_vocab: Vec<&String> = {
        let mut v: Vec<&String> = spec
            .question_templates
            .iter()
            .chain(&spec.answer_templates)
            .flatten()
            .collect();
        v.sort();
        v.dedup();
        v
    };
    let avg_word_len = union_vocab
        .iter()
        .map(|w| w.chars().count())
        .sum::<usize>() as f64
        / union_vocab.len() as f64;

    let questions = TemplatePool::new(&spec.question_templates, &spec.interviewer_turn_dist);
    let answers = TemplatePool::new(&spec.answer_templates, &spec.customer_turn_dist);

    let generate_split = |prefix: &str, count: usize, rng: &mut ChaCha8Rng| -> Result<Vec<GeneratedConversation>> {
        let mut state = SplitState {
            interviewer_words: 0,
            customer_words: 0,
        };
        (0..count)
            .map(|i| {
                generate_conversation(
                    spec,
                    &format!("{prefix}_{i:03}"),
                    &questions,
                    &answers,
                    &union_vocab,
                    avg_word_len,
                    &mut state,
                    rng,
                )
            })
            .collect()
    };

    let train = generate_split("train", spec.n_train, &mut rng)?;
    let test = generate_split("test", spec.n_test, &mut rng)?;
    Ok(SyntheticCorpus { train, test })
}

#[allow(clippy::too_many_arguments)]
fn generate_conversation(
    spec: &SyntheticCorpusSpec,
    conv_id: &str,
    questions: &TemplatePool,
    answers: &TemplatePool,
    union_vocab: &[&String],
    avg_word_len: f64,
    state: &mut SplitState,
    rng: &mut ChaCha8Rng,
) -> Result<GeneratedConversation> {
    let mut words: Vec<WordToken> = Vec::new();
    let mut turns: Vec<TurnSpan> = Vec::new();
    let mut now = 0.0f64;

    for _ in 0..spec.turn_pairs_per_conversation {
        for speaker in [Speaker::Interviewer, Speaker::Customer] {
            let (pool, set) = match speaker {
                Speaker::Interviewer => (questions, &spec.question_templates),
                Speaker::Customer => (answers, &spec.answer_templates),
            };
            // Keep the interviewer word share on target: once past warmup,
            // drift beyond the tolerance forces the extreme template.
            let total = state.interviewer_words + state.customer_words;
            let drift = state.fraction() - spec.interviewer_fraction;
            let idx = if total >= STEER_WARMUP_WORDS && drift.abs() > STEER_TOLERANCE {
                let want_longer_interviewer = drift < 0.0;
                let longer = match speaker {
                    Speaker::Interviewer => want_longer_interviewer,
                    Speaker::Customer => !want_longer_interviewer,
                };
                if longer {
                    pool.longest
                } else {
                    pool.shortest
                }
            } else {
                pool.sample(rng)
            };

            let start_word = words.len();
            for template_word in &set[idx] {
                let text = if rng.random::<f64>() < spec.shared_vocab_fraction {
                    union_vocab[rng.random_range(0..union_vocab.len())].as_str()
                } else {
                    template_word.as_str()
                };
                let duration = (text.chars().count() as f64
                    / (spec.words_per_second * avg_word_len))
                    .max(MIN_WORD_DURATION_S);
                words.push(WordToken::new(
                    conv_id,
                    text,
                    now,
                    now + duration,
                    Some(speaker),
                    false,
                )?);
                now += duration;
            }
            turns.push(TurnSpan {
                speaker,
                words: start_word..words.len(),
            });
            match speaker {
                Speaker::Interviewer => state.interviewer_words += set[idx].len(),
                Speaker::Customer => state.customer_words += set[idx].len(),
            }
        }
    }

    let features = sample_features(spec, conv_id, &words, rng)?;
    Ok(GeneratedConversation {
        transcript: Transcript::new(conv_id, words)?,
        features,
        turns,
    })
}

/// Per-frame 20-dim draws from the Gaussian of the speaker owning the
/// frame's start time.
fn sample_features(
    spec: &SyntheticCorpusSpec,
    conv_id: &str,
    words: &[WordToken],
    rng: &mut ChaCha8Rng,
) -> Result<FeatureMatrix> {
    let end = words.last().map_or(0.0, |w| w.end);
    let n_frames = (end / FRAME_SHIFT_S - 1e-9).ceil().max(0.0) as usize;
    let mut frames = Array2::zeros((n_frames, MFCC_DIM));
    let mut word_idx = 0usize;
    for t in 0..n_frames {
        let time = t as f64 * FRAME_SHIFT_S;
        while word_idx + 1 < words.len() && words[word_idx].end <= time + 1e-12 {
            word_idx += 1;
        }
        let mean = match words[word_idx].speaker.expect("generated words are labeled") {
            Speaker::Interviewer => &spec.interviewer_mean,
            Speaker::Customer => &spec.customer_mean,
        };
        for d in 0..MFCC_DIM {
            let z: f64 = rng.sample(StandardNormal);
            frames[(t, d)] = mean[d] + spec.acoustic_stddev * z;
        }
    }
    FeatureMatrix::new(conv_id, frames)
}

/// Recovers labels from the turn structure alone: turns strictly
/// alternate starting with the interviewer.
pub fn turn_oracle_labels(conv: &GeneratedConversation) -> Vec<u8> {
    let mut labels = vec![0u8; conv.transcript.len()];
    for (i, turn) in conv.turns.iter().enumerate() {
        let bit = (i % 2 == 1) as u8;
        for l in &mut labels[turn.words.clone()] {
            *l = bit;
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticCorpusSpec {
        SyntheticCorpusSpec {
            n_train: 4,
            n_test: 4,
            turn_pairs_per_conversation: 5,
            seed: 7,
            ..SyntheticCorpusSpec::default()
        }
    }

    fn word_fraction(convs: &[GeneratedConversation]) -> f64 {
        let mut int = 0usize;
        let mut total = 0usize;
        for c in convs {
            for w in &c.transcript.words {
                total += 1;
                if w.speaker == Some(Speaker::Interviewer) {
                    int += 1;
                }
            }
        }
        int as f64 / total as f64
    }

    #[test]
    fn same_seed_generates_identical_corpora() {
        let spec = small_spec();
        let a = generate_synthetic_corpus(&spec).unwrap();
        let b = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(a.train.len(), b.train.len());
        for (x, y) in a.train.iter().zip(&b.train).chain(a.test.iter().zip(&b.test)) {
            assert_eq!(x.transcript, y.transcript);
            assert_eq!(x.features.frames, y.features.frames);
            assert_eq!(x.turns, y.turns);
        }
    }

    #[test]
    fn test_split_hits_the_interviewer_fraction_band() {
        let spec = SyntheticCorpusSpec {
            n_train: 0,
            n_test: 30,
            seed: 11,
            ..SyntheticCorpusSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        let f = word_fraction(&corpus.test);
        assert!((0.74..=0.84).contains(&f), "fraction {f} outside band");
    }

    #[test]
    fn customer_turns_bounded_by_answer_template_lengths() {
        let corpus = generate_synthetic_corpus(&small_spec()).unwrap();
        for conv in corpus.train.iter().chain(&corpus.test) {
            for turn in &conv.turns {
                if turn.speaker == Speaker::Customer {
                    assert!(turn.words.len() <= 10);
                }
            }
        }

        // With all answers 1-5 words and all questions >= 6, customer
        // turns can never exceed 5 words.
        let spec = SyntheticCorpusSpec {
            answer_templates: templates(&["yes", "not really", "it was fine ok"]),
            question_templates: templates(&[
                "how satisfied are you with our service",
                "would you recommend our company to a friend",
            ]),
            ..small_spec()
        };
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        for conv in corpus.train.iter().chain(&corpus.test) {
            for turn in &conv.turns {
                if turn.speaker == Speaker::Customer {
                    assert!(turn.words.len() <= 5);
                }
            }
        }
    }

    #[test]
    fn zero_templates_is_a_config_error() {
        let spec = SyntheticCorpusSpec {
            question_templates: vec![],
            ..small_spec()
        };
        assert!(matches!(
            generate_synthetic_corpus(&spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn questions_must_be_longer_than_answers_on_average() {
        let spec = SyntheticCorpusSpec {
            question_templates: templates(&["why"]),
            answer_templates: templates(&["i am really not sure about that"]),
            ..small_spec()
        };
        assert!(generate_synthetic_corpus(&spec).is_err());
    }

    #[test]
    fn generated_conversations_are_contiguous_and_labeled() {
        let corpus = generate_synthetic_corpus(&small_spec()).unwrap();
        for conv in corpus.train.iter().chain(&corpus.test) {
            let words = &conv.transcript.words;
            assert!(!words.is_empty());
            for w in words {
                assert!(w.speaker.is_some());
                assert!(w.end > w.start);
            }
            for pair in words.windows(2) {
                assert!((pair[1].start - pair[0].end).abs() < 1e-12);
            }
            // Frames cover the conversation.
            let expected = (words.last().unwrap().end / FRAME_SHIFT_S - 1e-9).ceil() as usize;
            assert_eq!(conv.features.n_frames(), expected);
        }
    }

    #[test]
    fn turn_oracle_recovers_all_labels() {
        let corpus = generate_synthetic_corpus(&small_spec()).unwrap();
        for conv in corpus.train.iter().chain(&corpus.test) {
            let oracle = turn_oracle_labels(conv);
            let truth = conv.transcript.labels().unwrap();
            assert_eq!(oracle, truth);
        }
    }
}
