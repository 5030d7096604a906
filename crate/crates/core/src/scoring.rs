//! Word-level evaluation: transfer of reference labels onto a hypothesis
//! word segmentation, frame-label to word-label mapping for frame-level
//! systems, and WDER with per-speaker and turn-length breakdowns.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Speaker, Transcript, WordToken};
use crate::error::{Error, Result};
use crate::features::frame_range;

pub mod report;

/// Turn-length buckets used for both the duration histogram of generated
/// corpora and the per-bucket WDER breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LengthBucket {
    One,
    Two,
    ThreeToFive,
    SixToTen,
    ElevenToFifteen,
    SixteenToTwenty,
    OverTwenty,
}

pub const ALL_BUCKETS: [LengthBucket; 7] = [
    LengthBucket::One,
    LengthBucket::Two,
    LengthBucket::ThreeToFive,
    LengthBucket::SixToTen,
    LengthBucket::ElevenToFifteen,
    LengthBucket::SixteenToTwenty,
    LengthBucket::OverTwenty,
];

impl LengthBucket {
    pub fn of(turn_len: usize) -> LengthBucket {
        match turn_len {
            0 | 1 => LengthBucket::One,
            2 => LengthBucket::Two,
            3..=5 => LengthBucket::ThreeToFive,
            6..=10 => LengthBucket::SixToTen,
            11..=15 => LengthBucket::ElevenToFifteen,
            16..=20 => LengthBucket::SixteenToTwenty,
            _ => LengthBucket::OverTwenty,
        }
    }

    /// Inclusive word-length range covered by this bucket; `None` is open.
    pub fn range(self) -> (usize, Option<usize>) {
        match self {
            LengthBucket::One => (1, Some(1)),
            LengthBucket::Two => (2, Some(2)),
            LengthBucket::ThreeToFive => (3, Some(5)),
            LengthBucket::SixToTen => (6, Some(10)),
            LengthBucket::ElevenToFifteen => (11, Some(15)),
            LengthBucket::SixteenToTwenty => (16, Some(20)),
            LengthBucket::OverTwenty => (21, None),
        }
    }
}

impl fmt::Display for LengthBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LengthBucket::One => "1",
            LengthBucket::Two => "2",
            LengthBucket::ThreeToFive => "3-5",
            LengthBucket::SixToTen => "6-10",
            LengthBucket::ElevenToFifteen => "11-15",
            LengthBucket::SixteenToTwenty => "16-20",
            LengthBucket::OverTwenty => ">20",
        };
        f.write_str(s)
    }
}

/// A hypothesis word with the reference label transferred onto it, or
/// `None` when it is not evaluated (condition 4).
#[derive(Debug, Clone)]
pub struct AlignedWord {
    pub hyp: WordToken,
    pub ref_label: Option<Speaker>,
    /// Index of the matched reference word, absent for unevaluated words.
    pub matched_ref: Option<usize>,
    /// Length of the reference turn the matched word belongs to.
    pub ref_turn_len: Option<usize>,
}

fn overlap(a: &WordToken, b: &WordToken) -> f64 {
    (a.end.min(b.end) - a.start.max(b.start)).max(0.0)
}

/// Lengths (in words) of maximal same-label runs, expanded back to one
/// entry per word.
fn turn_lengths(words: &[WordToken]) -> Vec<usize> {
    let mut lens = vec![0usize; words.len()];
    let mut i = 0;
    while i < words.len() {
        let mut j = i + 1;
        while j < words.len() && words[j].speaker == words[i].speaker {
            j += 1;
        }
        for l in lens.iter_mut().take(j).skip(i) {
            *l = j - i;
        }
        i = j;
    }
    lens
}

/// Transfers reference speaker labels onto the hypothesis word
/// segmentation using the direct-overlap criterion:
///
/// 1. assign if the overlap is bigger than half the hypothesis word
///    duration;
/// 2. otherwise assign if it is bigger than half the reference word
///    duration;
/// 3. with several overlapping reference words, test 1-2 on the one with
///    the maximum overlap (earliest start on equal overlap);
/// 4. otherwise the word is left unevaluated.
///
/// "Bigger than half" is strict. Every reference word must carry a label.
pub fn align_reference(hyp: &Transcript, reference: &Transcript) -> Result<Vec<AlignedWord>> {
    for w in &reference.words {
        if w.speaker.is_none() {
            return Err(Error::Validation(format!(
                "reference word {:?} at {:.3}s has no speaker label",
                w.text, w.start
            )));
        }
    }
    let ref_turns = turn_lengths(&reference.words);

    let mut aligned = Vec::with_capacity(hyp.words.len());
    for h in &hyp.words {
        let mut best: Option<(usize, f64)> = None;
        for (ri, r) in reference.words.iter().enumerate() {
            if r.start >= h.end {
                break;
            }
            let ov = overlap(h, r);
            if ov <= 0.0 {
                continue;
            }
            // Maximum overlap wins; ties go to the earliest-starting
            // reference word, which enumeration order already gives.
            match best {
                Some((_, best_ov)) if ov <= best_ov => {}
                _ => best = Some((ri, ov)),
            }
        }
        let assigned = best.and_then(|(ri, ov)| {
            let r = &reference.words[ri];
            if ov > 0.5 * h.duration() || ov > 0.5 * r.duration() {
                Some(ri)
            } else {
                None
            }
        });
        aligned.push(match assigned {
            Some(ri) => AlignedWord {
                hyp: h.clone(),
                ref_label: reference.words[ri].speaker,
                matched_ref: Some(ri),
                ref_turn_len: Some(ref_turns[ri]),
            },
            None => AlignedWord {
                hyp: h.clone(),
                ref_label: None,
                matched_ref: None,
                ref_turn_len: None,
            },
        });
    }
    Ok(aligned)
}

/// Maps a frame-level labelling onto words: each word takes the label of
/// the majority of its overlapped frames, ties going to Interviewer.
/// Words with no overlapped frames are unevaluated.
pub fn frames_to_word_labels(
    frame_labels: &[Speaker],
    words: &[WordToken],
    frame_shift: f64,
) -> Vec<Option<Speaker>> {
    words
        .iter()
        .map(|w| {
            let r = frame_range(frame_labels.len(), frame_shift, w.start, w.end);
            let mut int = 0usize;
            let mut cus = 0usize;
            for i in r {
                match frame_labels[i] {
                    Speaker::Interviewer => int += 1,
                    Speaker::Customer => cus += 1,
                }
            }
            if int + cus == 0 {
                None
            } else if cus > int {
                Some(Speaker::Customer)
            } else {
                Some(Speaker::Interviewer)
            }
        })
        .collect()
}

/// Per-bucket evaluation counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub evaluated: usize,
    pub errors: usize,
    pub wder: f64,
}

/// Word-level diarization error rates, as percentages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WderReport {
    pub total: f64,
    /// WDER over words whose reference label is Interviewer; absent when
    /// the reference contains none.
    pub interviewer: Option<f64>,
    pub customer: Option<f64>,
    pub evaluated_words: usize,
    pub unevaluated_words: usize,
    pub total_errors: usize,
    pub by_turn_length: BTreeMap<LengthBucket, BucketStat>,
}

/// Computes WDER from aligned words and hypothesis labels (parallel to
/// the aligned list). Unevaluated words are excluded everywhere.
pub fn compute_wder(aligned: &[AlignedWord], hyp_labels: &[Speaker]) -> Result<WderReport> {
    if aligned.len() != hyp_labels.len() {
        return Err(Error::Validation(format!(
            "aligned words ({}) and hypothesis labels ({}) differ in length",
            aligned.len(),
            hyp_labels.len()
        )));
    }
    let mut evaluated = 0usize;
    let mut errors = 0usize;
    let mut per_speaker: BTreeMap<Speaker, (usize, usize)> = BTreeMap::new();
    for (a, &hyp) in aligned.iter().zip(hyp_labels) {
        let Some(r) = a.ref_label else { continue };
        evaluated += 1;
        let entry = per_speaker.entry(r).or_insert((0, 0));
        entry.0 += 1;
        if hyp != r {
            errors += 1;
            entry.1 += 1;
        }
    }
    if evaluated == 0 {
        return Err(Error::UndefinedMetric(
            "no evaluated words; WDER is undefined".into(),
        ));
    }
    let pct = |err: usize, n: usize| 100.0 * err as f64 / n as f64;
    let speaker_pct = |s: Speaker| per_speaker.get(&s).map(|&(n, e)| pct(e, n));
    Ok(WderReport {
        total: pct(errors, evaluated),
        interviewer: speaker_pct(Speaker::Interviewer),
        customer: speaker_pct(Speaker::Customer),
        evaluated_words: evaluated,
        unevaluated_words: aligned.len() - evaluated,
        total_errors: errors,
        by_turn_length: wder_by_turn_length(aligned, hyp_labels),
    })
}

/// Per-bucket WDER keyed by the length of each evaluated word's reference
/// turn. Buckets with no evaluated words are absent.
pub fn wder_by_turn_length(
    aligned: &[AlignedWord],
    hyp_labels: &[Speaker],
) -> BTreeMap<LengthBucket, BucketStat> {
    let mut counts: BTreeMap<LengthBucket, (usize, usize)> = BTreeMap::new();
    for (a, &hyp) in aligned.iter().zip(hyp_labels) {
        let (Some(r), Some(len)) = (a.ref_label, a.ref_turn_len) else {
            continue;
        };
        let entry = counts.entry(LengthBucket::of(len)).or_insert((0, 0));
        entry.0 += 1;
        if hyp != r {
            entry.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(bucket, (n, e))| {
            (
                bucket,
                BucketStat {
                    evaluated: n,
                    errors: e,
                    wder: 100.0 * e as f64 / n as f64,
                },
            )
        })
        .collect()
}
