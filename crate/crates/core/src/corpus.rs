//! Time-stamped word transcripts: data model, word-file ingestion and
//! serialization, special-token handling.
//!
//! The word-file format is one word per line with tab-separated fields
//! `conversation_id  start  end  text  speaker_or_dash  special_flag`.
//! Times are printed with at least three decimals. Lines starting with `#`
//! are comments and are skipped by the parser.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub mod synth;

/// The two conversation roles. Customer maps to tagger output `1`,
/// Interviewer to `0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    Interviewer,
    Customer,
}

impl Speaker {
    pub fn as_bit(self) -> u8 {
        match self {
            Speaker::Interviewer => 0,
            Speaker::Customer => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Speaker {
        if bit == 0 {
            Speaker::Interviewer
        } else {
            Speaker::Customer
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Interviewer => "Interviewer",
            Speaker::Customer => "Customer",
        }
    }

    pub fn parse(s: &str) -> Option<Speaker> {
        match s {
            "Interviewer" => Some(Speaker::Interviewer),
            "Customer" => Some(Speaker::Customer),
            _ => None,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One recognized word with its time span and optional speaker label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordToken {
    pub conversation_id: String,
    pub text: String,
    pub start: f64,
    pub end: f64,
    pub speaker: Option<Speaker>,
    pub is_special: bool,
}

impl WordToken {
    /// Builds a token, normalizing text to NFC and checking the invariants
    /// `end > start` and non-empty text.
    pub fn new(
        conversation_id: impl Into<String>,
        text: impl AsRef<str>,
        start: f64,
        end: f64,
        speaker: Option<Speaker>,
        is_special: bool,
    ) -> Result<WordToken> {
        let conversation_id = conversation_id.into();
        let text: String = text.as_ref().trim().nfc().collect();
        if text.is_empty() {
            return Err(Error::Validation("word text is empty".into()));
        }
        if text.chars().any(char::is_whitespace) {
            return Err(Error::Validation(format!(
                "word text {text:?} contains whitespace"
            )));
        }
        if conversation_id.is_empty() || conversation_id.chars().any(char::is_whitespace) {
            return Err(Error::Validation(format!(
                "conversation id {conversation_id:?} must be non-empty without whitespace"
            )));
        }
        if !(start.is_finite() && end.is_finite()) || start < 0.0 {
            return Err(Error::Validation(format!(
                "word {text:?} has invalid time span [{start}, {end})"
            )));
        }
        if end <= start {
            return Err(Error::Validation(format!(
                "word {text:?} has end {end} <= start {start}"
            )));
        }
        Ok(WordToken {
            conversation_id,
            text,
            start,
            end,
            speaker,
            is_special,
        })
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// An ordered sequence of words from one conversation.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub conversation_id: String,
    pub words: Vec<WordToken>,
}

impl Transcript {
    /// Builds a transcript, sorting words by start time (ties by end time)
    /// and checking that all words share the conversation id.
    pub fn new(conversation_id: impl Into<String>, mut words: Vec<WordToken>) -> Result<Transcript> {
        let conversation_id = conversation_id.into();
        for w in &words {
            if w.conversation_id != conversation_id {
                return Err(Error::Validation(format!(
                    "word {:?} belongs to conversation {:?}, not {:?}",
                    w.text, w.conversation_id, conversation_id
                )));
            }
        }
        words.sort_by(|a, b| {
            a.start
                .total_cmp(&b.start)
                .then_with(|| a.end.total_cmp(&b.end))
        });
        Ok(Transcript {
            conversation_id,
            words,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.words.iter().map(|w| w.text.as_str()).collect()
    }

    /// Speaker labels as bits; errors if any word is unlabeled.
    pub fn labels(&self) -> Result<Vec<u8>> {
        self.words
            .iter()
            .map(|w| {
                w.speaker.map(Speaker::as_bit).ok_or_else(|| {
                    Error::Validation(format!(
                        "word {:?} at {:.3}s has no speaker label",
                        w.text, w.start
                    ))
                })
            })
            .collect()
    }

    /// Copy of this transcript with the given labels applied.
    pub fn with_labels(&self, labels: &[u8]) -> Result<Transcript> {
        if labels.len() != self.words.len() {
            return Err(Error::Validation(format!(
                "label count {} does not match word count {}",
                labels.len(),
                self.words.len()
            )));
        }
        let mut t = self.clone();
        for (w, &bit) in t.words.iter_mut().zip(labels) {
            w.speaker = Some(Speaker::from_bit(bit));
        }
        Ok(t)
    }
}

/// Removes all words flagged as special tokens, preserving order.
pub fn strip_special_tokens(t: &Transcript) -> Transcript {
    Transcript {
        conversation_id: t.conversation_id.clone(),
        words: t.words.iter().filter(|w| !w.is_special).cloned().collect(),
    }
}

/// Surface-form rule deciding which tokens count as special (noise,
/// overlap and similar markers). The default flags any token wrapped in
/// square brackets, e.g. `[noise]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecialTokenRule {
    pub markers: Vec<(String, String)>,
}

impl Default for SpecialTokenRule {
    fn default() -> Self {
        SpecialTokenRule {
            markers: vec![("[".into(), "]".into())],
        }
    }
}

impl SpecialTokenRule {
    pub fn is_special(&self, text: &str) -> bool {
        self.markers
            .iter()
            .any(|(open, close)| {
                text.len() > open.len() + close.len()
                    && text.starts_with(open.as_str())
                    && text.ends_with(close.as_str())
            })
    }

    /// Re-flags every word of the transcript according to this rule.
    pub fn mark(&self, t: &Transcript) -> Transcript {
        let mut t = t.clone();
        for w in &mut t.words {
            w.is_special = self.is_special(&w.text);
        }
        t
    }
}

/// Formats seconds with full round-trip precision and at least three
/// decimal places.
pub fn format_seconds(v: f64) -> String {
    let s = format!("{v}");
    match s.split_once('.') {
        Some((_, frac)) if frac.len() >= 3 => s,
        Some((int, frac)) => format!("{int}.{frac:0<3}"),
        None => format!("{s}.000"),
    }
}

fn parse_line(path: &str, lineno: usize, line: &str) -> Result<WordToken> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 6 {
        return Err(Error::Parse {
            path: path.into(),
            line: lineno,
            message: format!("expected 6 tab-separated fields, got {}", fields.len()),
        });
    }
    let parse_time = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::Parse {
            path: path.into(),
            line: lineno,
            message: format!("invalid {what} {s:?}"),
        })
    };
    let start = parse_time(fields[1], "start time")?;
    let end = parse_time(fields[2], "end time")?;
    let speaker = match fields[4] {
        "-" => None,
        s => Some(Speaker::parse(s).ok_or_else(|| Error::Parse {
            path: path.into(),
            line: lineno,
            message: format!("unknown speaker label {s:?}"),
        })?),
    };
    let is_special = match fields[5] {
        "0" => false,
        "1" => true,
        s => {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                message: format!("special flag must be 0 or 1, got {s:?}"),
            })
        }
    };
    WordToken::new(fields[0], fields[3], start, end, speaker, is_special).map_err(|e| {
        Error::Parse {
            path: path.into(),
            line: lineno,
            message: e.to_string(),
        }
    })
}

/// Parses a word file into one transcript per conversation id, ordered by
/// conversation id.
pub fn parse_word_file(path: impl AsRef<Path>) -> Result<Vec<Transcript>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_word_reader(BufReader::new(file), &path.display().to_string())
}

/// Same as [`parse_word_file`] over any buffered reader.
pub fn parse_word_reader(reader: impl BufRead, source: &str) -> Result<Vec<Transcript>> {
    let mut by_conv: BTreeMap<String, Vec<WordToken>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let word = parse_line(source, lineno, &line)?;
        by_conv.entry(word.conversation_id.clone()).or_default().push(word);
    }
    by_conv
        .into_iter()
        .map(|(id, words)| Transcript::new(id, words))
        .collect()
}

/// Serializes transcripts in word-file format. An optional `config_hash`
/// is recorded as a leading comment line.
pub fn write_word_reader(
    out: &mut impl Write,
    transcripts: &[Transcript],
    config_hash: Option<&str>,
) -> std::io::Result<()> {
    if let Some(hash) = config_hash {
        writeln!(out, "# config {hash}")?;
    }
    for t in transcripts {
        for w in &t.words {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                w.conversation_id,
                format_seconds(w.start),
                format_seconds(w.end),
                w.text,
                w.speaker.map_or("-", Speaker::as_str),
                u8::from(w.is_special),
            )?;
        }
    }
    Ok(())
}

pub fn write_word_file(
    path: impl AsRef<Path>,
    transcripts: &[Transcript],
    config_hash: Option<&str>,
) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_word_reader(&mut buf, transcripts, config_hash)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tok(conv: &str, text: &str, start: f64, end: f64, spk: Option<Speaker>) -> WordToken {
        WordToken::new(conv, text, start, end, spk, false).unwrap()
    }

    #[test]
    fn parses_two_words_into_one_transcript() {
        let input = "c1\t0.000\t0.500\thello\tInterviewer\t0\nc1\t0.500\t0.900\tworld\tCustomer\t0\n";
        let ts = parse_word_reader(input.as_bytes(), "mem").unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].conversation_id, "c1");
        assert_eq!(ts[0].words.len(), 2);
        assert_eq!(ts[0].words[0].text, "hello");
        assert_eq!(ts[0].words[1].speaker, Some(Speaker::Customer));
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let ts = parse_word_reader("".as_bytes(), "mem").unwrap();
        assert!(ts.is_empty());
    }

    #[test]
    fn end_before_start_errors_with_line_number() {
        let input = "c1\t0.000\t0.500\thello\t-\t0\nc1\t1.000\t0.900\tbad\t-\t0\n";
        let err = parse_word_reader(input.as_bytes(), "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("mem:2"), "missing line number: {msg}");
        assert!(msg.contains("end"), "unexpected message: {msg}");
    }

    #[test]
    fn malformed_line_errors_with_line_number() {
        let err = parse_word_reader("c1\t0.0\t0.5\thello\n".as_bytes(), "mem").unwrap_err();
        assert!(err.to_string().contains("mem:1"));
    }

    #[test]
    fn comment_lines_are_skipped() {
        let input = "# config deadbeef\nc1\t0.000\t0.500\thello\t-\t0\n";
        let ts = parse_word_reader(input.as_bytes(), "mem").unwrap();
        assert_eq!(ts[0].words.len(), 1);
    }

    #[test]
    fn strip_removes_only_specials() {
        let words = vec![
            tok("c", "w1", 0.0, 0.2, None),
            WordToken::new("c", "[noise]", 0.2, 0.4, None, true).unwrap(),
            tok("c", "w2", 0.4, 0.6, None),
        ];
        let t = Transcript::new("c", words).unwrap();
        let stripped = strip_special_tokens(&t);
        assert_eq!(stripped.texts(), vec!["w1", "w2"]);

        let no_special = strip_special_tokens(&stripped);
        assert_eq!(no_special, stripped);

        let all_special = Transcript::new(
            "c",
            vec![WordToken::new("c", "[x]", 0.0, 0.1, None, true).unwrap()],
        )
        .unwrap();
        assert!(strip_special_tokens(&all_special).is_empty());
    }

    #[test]
    fn default_special_rule_matches_bracketed_tokens() {
        let rule = SpecialTokenRule::default();
        assert!(rule.is_special("[noise]"));
        assert!(rule.is_special("[overlap]"));
        assert!(!rule.is_special("word"));
        assert!(!rule.is_special("[]"));
    }

    #[test]
    fn text_is_nfc_normalized() {
        // "café" with a combining acute accent normalizes to the composed form.
        let decomposed = "cafe\u{0301}";
        let w = tok("c", decomposed, 0.0, 0.1, None);
        assert_eq!(w.text, "café");
        assert_eq!(w.text.chars().count(), 4);
    }

    #[test]
    fn transcript_sorts_by_start_then_end() {
        let words = vec![
            tok("c", "b", 0.5, 0.8, None),
            tok("c", "a", 0.0, 0.4, None),
            tok("c", "c", 0.5, 0.6, None),
        ];
        let t = Transcript::new("c", words).unwrap();
        assert_eq!(t.texts(), vec!["a", "c", "b"]);
    }

    #[test]
    fn format_seconds_pads_to_three_decimals() {
        assert_eq!(format_seconds(0.15), "0.150");
        assert_eq!(format_seconds(2.0), "2.000");
        assert_eq!(format_seconds(0.1234567), "0.1234567");
    }

    prop_compose! {
        fn arb_transcript()(n in 0usize..20, conv in "[a-z]{1,6}")(
            conv in Just(conv),
            durs in prop::collection::vec((0.05f64..2.0, 0.0f64..0.5), n),
            texts in prop::collection::vec("[a-zñé]{1,8}", n),
            labels in prop::collection::vec(prop::option::of(prop::bool::ANY), n),
        ) -> Transcript {
            let mut t = 0.0;
            let mut words = Vec::new();
            for ((dur, gap), (text, label)) in durs.into_iter().zip(texts.into_iter().zip(labels)) {
                let start = t + gap;
                let end = start + dur;
                t = end;
                let spk = label.map(|b| if b { Speaker::Customer } else { Speaker::Interviewer });
                words.push(WordToken::new(conv.clone(), text, start, end, spk, false).unwrap());
            }
            Transcript::new(conv, words).unwrap()
        }
    }

    proptest! {
        // Round trip: parse(serialize(t)) == t for any valid transcript.
        #[test]
        fn serialize_parse_roundtrip(t in arb_transcript()) {
            let mut buf = Vec::new();
            write_word_reader(&mut buf, std::slice::from_ref(&t), None).unwrap();
            let parsed = parse_word_reader(buf.as_slice(), "mem").unwrap();
            if t.is_empty() {
                prop_assert!(parsed.is_empty());
            } else {
                prop_assert_eq!(parsed.len(), 1);
                prop_assert_eq!(&parsed[0], &t);
            }
        }
    }
}
