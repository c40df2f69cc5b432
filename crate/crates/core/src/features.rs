//! Baseline audio aligners: additive synthesis of note lists, short-time
//! featurization (log-spectrogram, log-chromagram, pooled constant-Q) and
//! feature-space DTW.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentFn, WarpPath};
use crate::dtw::dtw;
use crate::error::{Error, Result};
use crate::pianoroll::{NoteEvent, NoteList, TimeAxis};

pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;
pub const HOP: usize = 512;
pub const SPECTROGRAM_WINDOW: usize = 2048;
/// The pooled constant-Q bands need finer frequency resolution than the
/// plain spectrogram to separate semitones in the lowest octaves.
pub const CQT_WINDOW: usize = 8192;
/// Chroma folds single spectrogram bins into pitch classes, so it uses the
/// same long window to keep a bin narrower than a semitone above ~100 Hz.
pub const CHROMA_WINDOW: usize = 8192;
/// `x ↦ log(1 + C·x)` compression constant.
pub const LOG_COMPRESSION: f64 = 100.0;

const HARMONICS: usize = 6;
const DECAY_SECONDS: f64 = 0.3;
const RAMP_SECONDS: f64 = 0.005;
const PEAK: f64 = 0.9;
const CHROMA_MIN_HZ: f64 = 27.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("waveform has non-finite samples".into()));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Length in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

pub fn midi_to_hz(pitch: f64) -> f64 {
    440.0 * 2f64.powf((pitch - 69.0) / 12.0)
}

/// Sum of the notes' additive-synthesis voices over `n_samples`, without
/// normalization. Each note is `Σ_h 0.5^(h−1)·sin(2π·h·f·t)` for harmonics
/// below Nyquist, shaped by an exponential decay from the onset and short
/// linear attack and release ramps; it is silent outside
/// `[onset, offset + release)`.
pub fn render_notes(notes: &[NoteEvent], sample_rate: u32, n_samples: usize) -> Vec<f64> {
    let sr = f64::from(sample_rate);
    let mut out = vec![0.0; n_samples];
    for note in notes {
        let f0 = midi_to_hz(f64::from(note.pitch));
        let harmonics: Vec<(f64, f64)> = (1..=HARMONICS)
            .map(|h| (h as f64 * f0, 0.5f64.powi(h as i32 - 1)))
            .filter(|&(f, _)| f < sr / 2.0)
            .collect();
        let first = (note.onset * sr).ceil().max(0.0) as usize;
        let end = (((note.offset + RAMP_SECONDS) * sr).ceil() as usize).min(n_samples);
        for (n, slot) in out.iter_mut().enumerate().take(end).skip(first) {
            let t = n as f64 / sr;
            let since = t - note.onset;
            let attack = (since / RAMP_SECONDS).min(1.0);
            let release = if t >= note.offset {
                (1.0 - (t - note.offset) / RAMP_SECONDS).max(0.0)
            } else {
                1.0
            };
            let env = attack * release * (-since / DECAY_SECONDS).exp();
            if env == 0.0 {
                continue;
            }
            let tone: f64 = harmonics
                .iter()
                .map(|&(f, a)| a * (std::f64::consts::TAU * f * since).sin())
                .sum();
            *slot += env * tone;
        }
    }
    out
}

/// Renders `notes` (performance axis) to a waveform long enough to hold the
/// last release, normalized to a peak magnitude of 0.9.
pub fn synthesize(notes: &NoteList, sample_rate: u32) -> Result<Waveform> {
    let end = notes.notes().iter().map(|n| n.offset).fold(0.0, f64::max) + RAMP_SECONDS;
    let n_samples = (end * f64::from(sample_rate)).ceil() as usize;
    synthesize_with_len(notes, sample_rate, n_samples)
}

/// Like [`synthesize`], truncated or padded to exactly `n_samples`.
pub fn synthesize_with_len(notes: &NoteList, sample_rate: u32, n_samples: usize) -> Result<Waveform> {
    if notes.is_empty() {
        return Err(Error::Empty("notes to synthesize"));
    }
    if notes.axis() != TimeAxis::PerformanceSeconds {
        return Err(Error::InvalidParameter(
            "synthesis needs notes in seconds".into(),
        ));
    }
    let mut samples = render_notes(notes.notes(), sample_rate, n_samples);
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        let gain = PEAK / peak;
        samples.iter_mut().for_each(|x| *x *= gain);
    }
    Waveform::new(samples, sample_rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    #[serde(rename = "spec")]
    LogSpectrogram,
    #[serde(rename = "chroma")]
    LogChroma,
    #[serde(rename = "cqt")]
    Cqt,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::LogSpectrogram, FeatureKind::LogChroma, FeatureKind::Cqt];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::LogSpectrogram => "spec",
            FeatureKind::LogChroma => "chroma",
            FeatureKind::Cqt => "cqt",
        }
    }

    /// Analysis window length in samples.
    pub fn window(self) -> usize {
        match self {
            FeatureKind::LogSpectrogram => SPECTROGRAM_WINDOW,
            FeatureKind::LogChroma => CHROMA_WINDOW,
            FeatureKind::Cqt => CQT_WINDOW,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spec" | "spectrogram" => Ok(FeatureKind::LogSpectrogram),
            "chroma" => Ok(FeatureKind::LogChroma),
            "cqt" => Ok(FeatureKind::Cqt),
            other => Err(Error::InvalidParameter(format!(
                "unknown feature kind {other:?} (expected spec, chroma or cqt)"
            ))),
        }
    }
}

/// A `D × F` feature matrix, stored frame by frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f64>,
    dim: usize,
    pub hop: usize,
    pub window: usize,
    pub sample_rate: u32,
    pub kind: FeatureKind,
}

impl FeatureSequence {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        &self.data[f * self.dim..(f + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Number of full frames: `floor((len − win)/hop) + 1`.
pub fn frame_total(len: usize, win: usize, hop: usize) -> usize {
    if len < win {
        0
    } else {
        (len - win) / hop + 1
    }
}

fn hann(win: usize) -> Vec<f64> {
    (0..win)
        .map(|n| 0.5 - 0.5 * (std::f64::consts::TAU * n as f64 / win as f64).cos())
        .collect()
}

/// STFT magnitudes, `win/2 + 1` bins per frame, frame-major.
fn stft_magnitude(w: &Waveform, win: usize, hop: usize) -> Result<Vec<f64>> {
    if win == 0 || hop == 0 {
        return Err(Error::InvalidParameter("window and hop must be positive".into()));
    }
    if w.len() < win {
        return Err(Error::TooShort {
            len: w.len(),
            needed: win,
        });
    }
    let n_frames = frame_total(w.len(), win, hop);
    let bins = win / 2 + 1;
    let window = hann(win);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(win);
    let mut out = vec![0.0; n_frames * bins];
    out.par_chunks_mut(bins).enumerate().for_each(|(f, dst)| {
        let src = &w.samples()[f * hop..f * hop + win];
        let mut buf: Vec<Complex<f64>> = src
            .iter()
            .zip(&window)
            .map(|(x, h)| Complex::new(x * h, 0.0))
            .collect();
        fft.process(&mut buf);
        for (d, c) in dst.iter_mut().zip(&buf) {
            *d = c.norm();
        }
    });
    Ok(out)
}

fn compress(x: f64) -> f64 {
    (LOG_COMPRESSION * x).ln_1p()
}

fn decompress(y: f64) -> f64 {
    y.exp_m1() / LOG_COMPRESSION
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// `log(1 + 100·|STFT|)` with a Hann window; `win/2 + 1` bins per frame.
pub fn log_spectrogram(w: &Waveform, win: usize, hop: usize) -> Result<FeatureSequence> {
    let mut data = stft_magnitude(w, win, hop)?;
    data.iter_mut().for_each(|x| *x = compress(*x));
    Ok(FeatureSequence {
        data,
        dim: win / 2 + 1,
        hop,
        window: win,
        sample_rate: w.sample_rate(),
        kind: FeatureKind::LogSpectrogram,
    })
}

/// Pitch class of a frequency, or `None` below the lowest piano key.
fn pitch_class(hz: f64) -> Option<usize> {
    if hz < CHROMA_MIN_HZ {
        return None;
    }
    let midi = (12.0 * (hz / 440.0).log2() + 69.0).round() as i64;
    Some(midi.rem_euclid(12) as usize)
}

/// Folds a log-spectrogram into 12 pitch classes (C = 0): bin energies
/// `|X|²` are recovered from the log magnitudes and summed per class, each
/// class magnitude is log-compressed again, and every frame is normalized
/// to unit L2 norm. Silent frames stay zero.
///
/// Summing the log values directly would let the window's sidelobes, which
/// compression lifts to within a few nats of the peak, outweigh the partials
/// themselves.
pub fn log_chromagram(spec: &FeatureSequence) -> Result<FeatureSequence> {
    if spec.kind != FeatureKind::LogSpectrogram {
        return Err(Error::WrongFeatureKind {
            expected: FeatureKind::LogSpectrogram.name(),
            got: spec.kind.name(),
        });
    }
    let bin_hz = f64::from(spec.sample_rate) / spec.window as f64;
    let classes: Vec<Option<usize>> = (0..spec.dim()).map(|b| pitch_class(b as f64 * bin_hz)).collect();
    let mut data = Vec::with_capacity(spec.n_frames() * 12);
    for frame in spec.frames() {
        let mut chroma = [0.0; 12];
        for (&y, class) in frame.iter().zip(&classes) {
            if let Some(c) = class {
                let mag = decompress(y);
                chroma[*c] += mag * mag;
            }
        }
        for x in &mut chroma {
            *x = compress(x.sqrt());
        }
        l2_normalize(&mut chroma);
        data.extend_from_slice(&chroma);
    }
    Ok(FeatureSequence {
        data,
        dim: 12,
        hop: spec.hop,
        window: spec.window,
        sample_rate: spec.sample_rate,
        kind: FeatureKind::LogChroma,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CqtParams {
    pub bins_per_octave: usize,
    pub fmin: f64,
    pub n_bins: usize,
    pub hop: usize,
    pub window: usize,
}

impl Default for CqtParams {
    fn default() -> Self {
        CqtParams {
            bins_per_octave: 12,
            fmin: 32.7,
            n_bins: 72,
            hop: HOP,
            window: CQT_WINDOW,
        }
    }
}

impl CqtParams {
    pub fn center(&self, k: isize) -> f64 {
        self.fmin * 2f64.powf(k as f64 / self.bins_per_octave as f64)
    }

    /// Sparse triangular weights `(stft_bin, weight)` for each band. A band's
    /// slopes are never narrower than one STFT bin, so every band sees at
    /// least one bin.
    fn filterbank(&self, sample_rate: u32) -> Vec<Vec<(usize, f64)>> {
        let bin_hz = f64::from(sample_rate) / self.window as f64;
        let n_stft = self.window / 2 + 1;
        (0..self.n_bins as isize)
            .map(|k| {
                let fc = self.center(k);
                let lower = (fc - self.center(k - 1)).max(bin_hz);
                let upper = (self.center(k + 1) - fc).max(bin_hz);
                let lo = ((fc - lower) / bin_hz).floor().max(0.0) as usize;
                let hi = (((fc + upper) / bin_hz).ceil() as usize).min(n_stft - 1);
                (lo..=hi)
                    .filter_map(|b| {
                        let f = b as f64 * bin_hz;
                        let w = if f <= fc {
                            1.0 - (fc - f) / lower
                        } else {
                            1.0 - (f - fc) / upper
                        };
                        (w > 0.0).then_some((b, w))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Constant-Q style features: STFT magnitudes pooled into triangular bands
/// centred at `fmin·2^(k/12)`, log-compressed and L2-normalized per frame.
pub fn cqt(w: &Waveform, params: &CqtParams) -> Result<FeatureSequence> {
    if params.n_bins == 0 || params.bins_per_octave == 0 || !(params.fmin.is_finite() && params.fmin > 0.0) {
        return Err(Error::InvalidParameter("invalid constant-Q parameters".into()));
    }
    let mag = stft_magnitude(w, params.window, params.hop)?;
    let bins = params.window / 2 + 1;
    let bank = params.filterbank(w.sample_rate());
    let mut data = Vec::with_capacity(mag.len() / bins * params.n_bins);
    for frame in mag.chunks_exact(bins) {
        let start = data.len();
        data.extend(bank.iter().map(|band| compress(band.iter().map(|&(b, wt)| wt * frame[b]).sum())));
        l2_normalize(&mut data[start..]);
    }
    Ok(FeatureSequence {
        data,
        dim: params.n_bins,
        hop: params.hop,
        window: params.window,
        sample_rate: w.sample_rate(),
        kind: FeatureKind::Cqt,
    })
}

/// Features of the given kind with the default parameters.
pub fn featurize(w: &Waveform, kind: FeatureKind) -> Result<FeatureSequence> {
    match kind {
        FeatureKind::LogSpectrogram => log_spectrogram(w, SPECTROGRAM_WINDOW, HOP),
        FeatureKind::LogChroma => log_chromagram(&log_spectrogram(w, CHROMA_WINDOW, HOP)?),
        FeatureKind::Cqt => cqt(w, &CqtParams::default()),
    }
}

/// Featurizes with `window/2` samples of silence on both sides, so that
/// frame `f` is centred on sample `f·hop` of the original signal.
pub fn featurize_centered(w: &Waveform, kind: FeatureKind) -> Result<FeatureSequence> {
    let pad = kind.window() / 2;
    let mut samples = vec![0.0; pad];
    samples.extend_from_slice(w.samples());
    samples.resize(samples.len() + pad, 0.0);
    featurize(&Waveform::new(samples, w.sample_rate())?, kind)
}

/// Pairwise `1 − cos` distances between two feature sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl CostMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch(data.len(), rows * cols));
        }
        Ok(CostMatrix { data, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn path_cost(&self, path: &WarpPath) -> f64 {
        path.steps().iter().map(|&(i, j)| self.get(i, j)).sum()
    }

    pub fn scaled(&self, factor: f64) -> CostMatrix {
        CostMatrix {
            data: self.data.iter().map(|x| x * factor).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }
}

fn cosine_cost(a: &[f64], b: &[f64], norm_a: f64, norm_b: f64) -> f64 {
    match (norm_a == 0.0, norm_b == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            (1.0 - dot / (norm_a * norm_b)).clamp(0.0, 2.0)
        }
    }
}

/// `C[i][j] = 1 − cos(a_i, b_j)`. A zero frame costs 1 against any nonzero
/// frame and 0 against another zero frame.
pub fn cost_matrix(a: &FeatureSequence, b: &FeatureSequence) -> Result<CostMatrix> {
    if a.kind != b.kind {
        return Err(Error::WrongFeatureKind {
            expected: a.kind.name(),
            got: b.kind.name(),
        });
    }
    if a.dim() != b.dim() {
        return Err(Error::LengthMismatch(a.dim(), b.dim()));
    }
    let norm = |f: &[f64]| f.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norms_b: Vec<f64> = b.frames().map(norm).collect();
    let (rows, cols) = (a.n_frames(), b.n_frames());
    let mut data = vec![0.0; rows * cols];
    if cols > 0 {
        data.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
            let fa = a.frame(i);
            let na = norm(fa);
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = cosine_cost(fa, b.frame(j), na, norms_b[j]);
            }
        });
    }
    Ok(CostMatrix { data, rows, cols })
}

/// Unconstrained DTW through a cost matrix (steps `(1,1)`, `(1,0)`,
/// `(0,1)`). The path is in frame units (`ds = dt = 1`).
pub fn feature_dtw(cost: &CostMatrix) -> Result<WarpPath> {
    if cost.rows == 0 || cost.cols == 0 {
        return Err(Error::Empty("cost matrix"));
    }
    let (steps, _) = dtw(cost.rows, cost.cols, |i, j| cost.get(i, j));
    WarpPath::new(steps, 1.0, 1.0)
}

/// Renders score notes (beats) at a uniform `seconds_per_beat`.
pub fn render_score(score_notes: &NoteList, seconds_per_beat: f64, sample_rate: u32) -> Result<Waveform> {
    let notes = score_notes
        .notes()
        .iter()
        .map(|n| NoteEvent::new(n.pitch, n.onset * seconds_per_beat, n.offset * seconds_per_beat))
        .collect();
    let duration = score_notes.duration() * seconds_per_beat;
    let secs = NoteList::new(notes, TimeAxis::PerformanceSeconds, duration)?;
    let n_samples = (duration * f64::from(sample_rate)).round() as usize;
    synthesize_with_len(&secs, sample_rate, n_samples)
}

/// Feature-DTW baseline: synthesizes the score at a uniform tempo,
/// featurizes the rendering and the performance identically, and converts
/// the DTW path into an alignment of the score against the performance.
pub fn align_baseline(
    score_notes: &NoteList,
    seconds_per_beat: f64,
    perf: &Waveform,
    kind: FeatureKind,
) -> Result<AlignmentFn> {
    if score_notes.is_empty() {
        return Err(Error::Empty("score"));
    }
    if score_notes.axis() != TimeAxis::ScoreBeats {
        return Err(Error::InvalidParameter("score notes must be in beats".into()));
    }
    if !(seconds_per_beat.is_finite() && seconds_per_beat > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "score tempo must be positive, got {seconds_per_beat}"
        )));
    }
    let rendered = render_score(score_notes, seconds_per_beat, perf.sample_rate())?;
    let a = featurize_centered(&rendered, kind)?;
    let b = featurize_centered(perf, kind)?;
    let frames = feature_dtw(&cost_matrix(&a, &b)?)?;
    let hop_seconds = a.hop as f64 / f64::from(perf.sample_rate());
    let path = WarpPath::new(frames.steps().to_vec(), hop_seconds / seconds_per_beat, hop_seconds)?;
    AlignmentFn::from_path_with_extent(&path, score_notes.duration(), perf.duration())
}
