//! Alignment evaluation metrics.
//!
//! Temporal metrics compare two alignment functions as functions: both are
//! linearized at the score's changepoints and the average absolute (or
//! squared) difference is integrated exactly over score time, up to the last
//! score onset. Note-based metrics compare lists of onset times.
//!
//! All metrics are reported in milliseconds.

use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentFn;
use crate::error::{Error, Result};
use crate::pianoroll::{NoteList, PianoRoll, TimeAxis};

/// Default onset-correspondence window, in milliseconds.
pub const DEFAULT_WINDOW_MS: f64 = 100.0;

/// Per-pair evaluation summary. Note metrics are NaN (`null` in JSON) when
/// no score note found a transcript note.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mad_ms: f64,
    pub rmse_ms: f64,
    #[serde(with = "nan_as_null")]
    pub note_mad_ms: f64,
    #[serde(with = "nan_as_null")]
    pub note_rmse_ms: f64,
    /// Fraction of matched onsets within [`MetricReport::recognition_threshold_ms`].
    #[serde(with = "nan_as_null")]
    pub recognition_rate: f64,
    pub recognition_threshold_ms: f64,
    /// Fraction of score notes that found a transcript note.
    pub matched_fraction: f64,
    pub n_notes: usize,
    pub n_matched: usize,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Candidate onsets `s` paired with ground-truth onsets `p`, in seconds.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct OnsetPairs {
    s: Vec<f64>,
    p: Vec<f64>,
}

impl OnsetPairs {
    pub fn new(s: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if s.len() != p.len() {
            return Err(Error::LengthMismatch(s.len(), p.len()));
        }
        Ok(OnsetPairs { s, p })
    }

    pub fn candidate(&self) -> &[f64] {
        &self.s
    }

    pub fn reference(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    fn deviations(&self) -> Result<impl Iterator<Item = f64> + '_> {
        if self.is_empty() {
            return Err(Error::Empty("onset pairs"));
        }
        Ok(self.s.iter().zip(&self.p).map(|(s, p)| s - p))
    }
}

/// `(S_onset, grid)`: the last score onset and the changepoints up to it.
fn integration_grid(score: &PianoRoll) -> Result<(f64, Vec<f64>)> {
    let end = score.last_onset();
    if end <= 0.0 {
        return Err(Error::NoOnsets);
    }
    let grid = score
        .changepoints()
        .iter()
        .copied()
        .take_while(|&c| c <= end)
        .collect();
    Ok((end, grid))
}

/// Differences `τ(c) − τ*(c)` at each grid point.
fn differences(tau: &AlignmentFn, gt: &AlignmentFn, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&c| Ok(tau.evaluate_at(c)? - gt.evaluate_at(c)?))
        .collect()
}

/// `∫|d|` over one piece of length `h` where `d` is linear from `d0` to `d1`.
fn abs_linear_integral(d0: f64, d1: f64, h: f64) -> f64 {
    if d0 * d1 >= 0.0 {
        0.5 * h * (d0.abs() + d1.abs())
    } else {
        // sign change at the root; two triangles
        0.5 * h * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
    }
}

/// `∫d²` over one piece where `d` is linear from `d0` to `d1`.
fn square_linear_integral(d0: f64, d1: f64, h: f64) -> f64 {
    h * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0
}

fn integrate(
    tau: &AlignmentFn,
    gt: &AlignmentFn,
    score: &PianoRoll,
    piece: fn(f64, f64, f64) -> f64,
) -> Result<f64> {
    check_domains(tau, gt, score)?;
    let (end, grid) = integration_grid(score)?;
    let d = differences(tau, gt, &grid)?;
    let total: f64 = grid
        .windows(2)
        .zip(d.windows(2))
        .map(|(c, d)| piece(d[0], d[1], c[1] - c[0]))
        .sum();
    Ok(total / end)
}

fn check_domains(tau: &AlignmentFn, gt: &AlignmentFn, score: &PianoRoll) -> Result<()> {
    for a in [tau, gt] {
        if a.score_len() < score.last_onset() {
            return Err(Error::DurationMismatch(a.score_len(), score.duration()));
        }
    }
    Ok(())
}

/// Temporal average error between a candidate `τ` and a ground truth `τ*`,
/// in milliseconds.
pub fn temporal_mad(tau: &AlignmentFn, gt: &AlignmentFn, score: &PianoRoll) -> Result<f64> {
    Ok(1000.0 * integrate(tau, gt, score, abs_linear_integral)?)
}

/// Temporal standard deviation (root mean squared error) between `τ` and
/// `τ*`, in milliseconds.
pub fn temporal_rmse(tau: &AlignmentFn, gt: &AlignmentFn, score: &PianoRoll) -> Result<f64> {
    Ok(1000.0 * integrate(tau, gt, score, square_linear_integral)?.sqrt())
}

/// Mean absolute onset deviation, in milliseconds.
pub fn note_mad(pairs: &OnsetPairs) -> Result<f64> {
    let n = pairs.len() as f64;
    Ok(1000.0 * pairs.deviations()?.map(f64::abs).sum::<f64>() / n)
}

/// Root mean squared onset deviation, in milliseconds.
pub fn note_rmse(pairs: &OnsetPairs) -> Result<f64> {
    let n = pairs.len() as f64;
    Ok(1000.0 * (pairs.deviations()?.map(|d| d * d).sum::<f64>() / n).sqrt())
}

/// Fraction of onsets within `threshold_ms` of the reference.
pub fn recognition_rate(pairs: &OnsetPairs, threshold_ms: f64) -> Result<f64> {
    if threshold_ms.is_nan() || threshold_ms <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "threshold must be positive, got {threshold_ms}"
        )));
    }
    let n = pairs.len() as f64;
    let threshold = threshold_ms / 1000.0;
    let hits = pairs.deviations()?.filter(|d| d.abs() <= threshold).count();
    Ok(hits as f64 / n)
}

/// A score note matched to a transcript note.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoteMatch {
    pub score_index: usize,
    pub transcript_index: usize,
}

/// Note correspondence derived from a ground-truth alignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondence {
    /// `s`: ground-truth-warped score onsets; `p`: matched transcript onsets.
    pub pairs: OnsetPairs,
    pub matches: Vec<NoteMatch>,
    pub unmatched: Vec<usize>,
    pub matched_fraction: f64,
}

impl Correspondence {
    pub fn n_matched(&self) -> usize {
        self.matches.len()
    }

    /// Onset pairs for a candidate alignment: each matched score note's
    /// onset warped by `candidate`, against its matched transcript onset.
    pub fn candidate_pairs(&self, candidate: &AlignmentFn, score_notes: &NoteList) -> Result<OnsetPairs> {
        let onsets = candidate.warp_onsets(score_notes)?;
        let s = self.matches.iter().map(|m| onsets[m.score_index]).collect();
        OnsetPairs::new(s, self.pairs.p.clone())
    }
}

/// Options for [`correspond_notes`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrespondenceOptions {
    pub window_ms: f64,
    /// Let several score notes match the same transcript note.
    pub allow_shared: bool,
}

impl Default for CorrespondenceOptions {
    fn default() -> Self {
        CorrespondenceOptions {
            window_ms: DEFAULT_WINDOW_MS,
            allow_shared: false,
        }
    }
}

/// Matches every score note to the transcript note of the same pitch whose
/// onset is closest to the note's ground-truth-warped onset `t`. Notes with
/// no candidate within `±window` of `t` are left unmatched. Score notes are
/// visited in score order and, unless `allow_shared`, a matched transcript
/// note is consumed.
pub fn correspond_notes(
    score_notes: &NoteList,
    gt: &AlignmentFn,
    transcript: &NoteList,
    opts: CorrespondenceOptions,
) -> Result<Correspondence> {
    if transcript.axis() != TimeAxis::PerformanceSeconds {
        return Err(Error::InvalidParameter(
            "transcript must be on the performance axis".into(),
        ));
    }
    let warped = gt.warp_onsets(score_notes)?;
    let window = opts.window_ms / 1000.0;

    let mut by_pitch: Vec<Vec<usize>> = vec![Vec::new(); 128];
    for (k, n) in transcript.notes().iter().enumerate() {
        by_pitch[n.pitch as usize].push(k);
    }
    let mut consumed = vec![false; transcript.len()];

    let mut s = Vec::new();
    let mut p = Vec::new();
    let mut matches = Vec::new();
    let mut unmatched = Vec::new();
    for (i, note) in score_notes.notes().iter().enumerate() {
        let t = warped[i];
        let best = by_pitch[note.pitch as usize]
            .iter()
            .copied()
            .filter(|&k| opts.allow_shared || !consumed[k])
            .map(|k| (k, (transcript.notes()[k].onset - t).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((k, dev)) if dev <= window => {
                consumed[k] = true;
                s.push(t);
                p.push(transcript.notes()[k].onset);
                matches.push(NoteMatch {
                    score_index: i,
                    transcript_index: k,
                });
            }
            _ => unmatched.push(i),
        }
    }
    let matched_fraction = if score_notes.is_empty() {
        0.0
    } else {
        matches.len() as f64 / score_notes.len() as f64
    };
    Ok(Correspondence {
        pairs: OnsetPairs { s, p },
        matches,
        unmatched,
        matched_fraction,
    })
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::Degenerate("correlation needs at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Everything [`MetricReport`] needs for one candidate against one ground
/// truth.
pub fn evaluate(
    candidate: &AlignmentFn,
    gt: &AlignmentFn,
    score_notes: &NoteList,
    transcript: &NoteList,
    recognition_threshold_ms: f64,
) -> Result<MetricReport> {
    let score = PianoRoll::from_notes(score_notes);
    let corr = correspond_notes(score_notes, gt, transcript, CorrespondenceOptions::default())?;
    let pairs = corr.candidate_pairs(candidate, score_notes)?;
    let (note_mad_ms, note_rmse_ms, recognition_rate) = if pairs.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            note_mad(&pairs)?,
            note_rmse(&pairs)?,
            recognition_rate(&pairs, recognition_threshold_ms)?,
        )
    };
    Ok(MetricReport {
        mad_ms: temporal_mad(candidate, gt, &score)?,
        rmse_ms: temporal_rmse(candidate, gt, &score)?,
        note_mad_ms,
        note_rmse_ms,
        recognition_rate,
        recognition_threshold_ms,
        matched_fraction: corr.matched_fraction,
        n_notes: score_notes.len(),
        n_matched: corr.n_matched(),
    })
}
