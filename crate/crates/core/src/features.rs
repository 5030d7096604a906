//! MFCC feature extraction and the mapping from word time spans to frame
//! index ranges.
//!
//! The recipe: pre-emphasis 0.97, 30 ms Hamming windows at 10 ms shift,
//! power spectrum over an FFT of the next power of two, 26 triangular mel
//! filters from 0 Hz to Nyquist, log with floor 1e-10, orthonormal DCT-II,
//! coefficients 0-19. The exact numbers are pinned by a golden file under
//! `tests/data/`.

use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use ndarray::{Array1, Array2};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::corpus::WordToken;
use crate::error::{Error, Result};

pub const MFCC_DIM: usize = 20;
pub const FRAME_SHIFT_S: f64 = 0.010;
pub const WINDOW_LENGTH_S: f64 = 0.030;

const PRE_EMPHASIS: f64 = 0.97;
const N_MEL_FILTERS: usize = 26;
const LOG_FLOOR: f64 = 1e-10;
const MIN_SAMPLE_RATE: u32 = 8000;

/// Per-conversation sequence of 20-dim MFCC frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub conversation_id: String,
    /// T x 20.
    pub frames: Array2<f64>,
    pub frame_shift: f64,
    pub window_length: f64,
}

impl FeatureMatrix {
    pub fn new(conversation_id: impl Into<String>, frames: Array2<f64>) -> Result<FeatureMatrix> {
        if frames.ncols() != MFCC_DIM {
            return Err(Error::Validation(format!(
                "feature matrix must have {MFCC_DIM} columns, got {}",
                frames.ncols()
            )));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("feature matrix has non-finite entries".into()));
        }
        Ok(FeatureMatrix {
            conversation_id: conversation_id.into(),
            frames,
            frame_shift: FRAME_SHIFT_S,
            window_length: WINDOW_LENGTH_S,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters as sparse (bin, weight) lists over the one-sided
/// power spectrum of an `fft_n`-point FFT.
fn mel_filter_bank(fft_n: usize, sample_rate: u32) -> Vec<Vec<(usize, f64)>> {
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let points: Vec<f64> = (0..N_MEL_FILTERS + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (N_MEL_FILTERS + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / fft_n as f64;
    let n_bins = fft_n / 2 + 1;

    let mut bank = Vec::with_capacity(N_MEL_FILTERS);
    for f in 0..N_MEL_FILTERS {
        let (left, center, right) = (points[f], points[f + 1], points[f + 2]);
        let mut taps = Vec::new();
        for bin in 0..n_bins {
            let freq = bin as f64 * bin_hz;
            let w = if freq < center {
                (freq - left) / (center - left)
            } else {
                (right - freq) / (right - center)
            };
            if w > 0.0 {
                taps.push((bin, w));
            }
        }
        bank.push(taps);
    }
    bank
}

/// Orthonormal DCT-II matrix taking `n_in` log energies to `n_out`
/// cepstral coefficients.
fn dct_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    let mut m = Array2::zeros((n_out, n_in));
    for k in 0..n_out {
        let scale = if k == 0 {
            (1.0 / n_in as f64).sqrt()
        } else {
            (2.0 / n_in as f64).sqrt()
        };
        for n in 0..n_in {
            m[(k, n)] = scale
                * (std::f64::consts::PI * k as f64 * (2.0 * n as f64 + 1.0) / (2.0 * n_in as f64))
                    .cos();
        }
    }
    m
}

/// Extracts 20 MFCCs per 10 ms frame from mono PCM samples.
pub fn extract_mfcc(
    conversation_id: impl Into<String>,
    samples: &[f64],
    sample_rate: u32,
) -> Result<FeatureMatrix> {
    if sample_rate < MIN_SAMPLE_RATE {
        return Err(Error::Validation(format!(
            "sample rate {sample_rate} below minimum {MIN_SAMPLE_RATE}"
        )));
    }
    let win = (WINDOW_LENGTH_S * sample_rate as f64).round() as usize;
    let shift = (FRAME_SHIFT_S * sample_rate as f64).round() as usize;
    if samples.len() < win {
        return Err(Error::EmptyFeatures(format!(
            "audio has {} samples, shorter than one {win}-sample window",
            samples.len()
        )));
    }
    let n_frames = (samples.len() - win) / shift + 1;

    let mut emphasized = Vec::with_capacity(samples.len());
    emphasized.push(samples[0]);
    for i in 1..samples.len() {
        emphasized.push(samples[i] - PRE_EMPHASIS * samples[i - 1]);
    }

    let hamming: Vec<f64> = (0..win)
        .map(|n| {
            0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (win as f64 - 1.0)).cos()
        })
        .collect();

    let fft_n = win.next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_n);
    let bank = mel_filter_bank(fft_n, sample_rate);
    let dct = dct_matrix(MFCC_DIM, N_MEL_FILTERS);

    let mut frames = Array2::zeros((n_frames, MFCC_DIM));
    let mut buf = vec![Complex::new(0.0, 0.0); fft_n];
    let mut log_energies = Array1::zeros(N_MEL_FILTERS);
    for t in 0..n_frames {
        let offset = t * shift;
        for i in 0..fft_n {
            let v = if i < win {
                emphasized[offset + i] * hamming[i]
            } else {
                0.0
            };
            buf[i] = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (f, taps) in bank.iter().enumerate() {
            let energy: f64 = taps.iter().map(|&(bin, w)| buf[bin].norm_sqr() * w).sum();
            log_energies[f] = energy.max(LOG_FLOOR).ln();
        }
        frames.row_mut(t).assign(&dct.dot(&log_energies));
    }
    FeatureMatrix::new(conversation_id, frames)
}

/// Frame indices whose start time falls in `[start, end)`, clamped to the
/// available frames. Tolerant to representation error at the boundaries.
pub fn frame_range(n_frames: usize, frame_shift: f64, start: f64, end: f64) -> Range<usize> {
    let to_index = |t: f64| -> usize {
        let idx = (t / frame_shift - 1e-9).ceil();
        if idx <= 0.0 {
            0
        } else {
            idx as usize
        }
    };
    let lo = to_index(start).min(n_frames);
    let hi = to_index(end).min(n_frames).max(lo);
    lo..hi
}

/// Frame index range covered by a word's time span.
pub fn frames_for_word(fm: &FeatureMatrix, w: &WordToken) -> Range<usize> {
    frame_range(fm.n_frames(), fm.frame_shift, w.start, w.end)
}

/// Writes the feature-file format: a header line
/// `conversation_id T 20 frame_shift window_length` followed by T rows of
/// 20 space-separated values, full round-trip precision.
pub fn write_feature_file(path: impl AsRef<Path>, fm: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let io_err = |e| Error::io(path.display().to_string(), e);
    writeln!(
        out,
        "{} {} {} {} {}",
        fm.conversation_id,
        fm.n_frames(),
        MFCC_DIM,
        fm.frame_shift,
        fm.window_length
    )
    .map_err(io_err)?;
    for row in fm.frames.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(" ")).map_err(io_err)?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(name.clone(), e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: name.clone(),
        line: 1,
        message: "missing header line".into(),
    })?;
    let header = header.map_err(|e| Error::io(name.clone(), e))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(Error::Parse {
            path: name.clone(),
            line: 1,
            message: format!("header must have 5 fields, got {}", fields.len()),
        });
    }
    let conv_id = fields[0].to_string();
    let t: usize = fields[1].parse().map_err(|_| Error::Parse {
        path: name.clone(),
        line: 1,
        message: format!("invalid frame count {:?}", fields[1]),
    })?;
    let dim: usize = fields[2].parse().unwrap_or(0);
    if dim != MFCC_DIM {
        return Err(Error::Parse {
            path: name.clone(),
            line: 1,
            message: format!("expected {MFCC_DIM} coefficients, header says {dim}"),
        });
    }

    let mut frames = Array2::zeros((t, MFCC_DIM));
    let mut filled = 0;
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(name.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        if filled >= t {
            return Err(Error::Parse {
                path: name.clone(),
                line: lineno,
                message: format!("more than {t} frame rows"),
            });
        }
        let values: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let values = values.map_err(|_| Error::Parse {
            path: name.clone(),
            line: lineno,
            message: "invalid coefficient".into(),
        })?;
        if values.len() != MFCC_DIM {
            return Err(Error::Parse {
                path: name.clone(),
                line: lineno,
                message: format!("expected {MFCC_DIM} values, got {}", values.len()),
            });
        }
        for (j, v) in values.into_iter().enumerate() {
            frames[(filled, j)] = v;
        }
        filled += 1;
    }
    if filled != t {
        return Err(Error::Parse {
            path: name,
            line: filled + 1,
            message: format!("header promised {t} frames, file has {filled}"),
        });
    }
    FeatureMatrix::new(conv_id, frames)
}
