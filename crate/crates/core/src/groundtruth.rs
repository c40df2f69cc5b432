//! Approximate ground-truth alignments between a score and a symbolic
//! performance transcript.
//!
//! The target is the alignment `τ` minimizing
//!
//! ```text
//! d1(pscore_τ, transcript) + λ·R(τ),   R(τ) = (1/S)·∫(τ'(s) − T/S)² ds
//! ```
//!
//! subject to monotonicity, with `τ(0) = 0` and `τ(S) = T`. Because the mean
//! inverse tempo of any such `τ` is `T/S`, the regularizer decomposes over
//! the pieces of `τ` and the problem is solved exactly on a grid by a dynamic
//! program over (score changepoint, performance frame boundary) states.
//!
//! Between two score changepoints the score is constant, so the only thing
//! that matters about `τ` there is where the piece starts and ends; by
//! Jensen's inequality a straight piece minimizes the regularizer. The
//! program therefore places one knot per changepoint and connects them
//! linearly. A piece may have zero length in the performance (a flat stretch,
//! slope 0).
//!
//! The performance axis is cut into `J = round(T/dt)` frames of equal width
//! `T/J`; frame `k` takes the transcript's value at its left edge.

use rayon::prelude::*;

use crate::alignment::{AlignmentFn, Knot, WarpPath};
use crate::dtw::dtw;
use crate::error::{Error, Result};
use crate::pianoroll::{frame_count, PianoRoll, PitchSet};

/// Ground-truth construction parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtConfig {
    /// Regularization weight `λ`.
    pub lambda: f64,
    /// Score grid step in beats for [`classical_dtw`]. `None` uses the
    /// score's changepoints, which is what [`tempo_regularized_align`]
    /// always does.
    pub ds: Option<f64>,
    /// Target performance frame step in seconds.
    pub dt: f64,
    /// Half-width, in frames, of a band around the uniform-tempo diagonal
    /// outside of which states are pruned. Results may be suboptimal.
    pub band: Option<usize>,
}

impl Default for GtConfig {
    fn default() -> Self {
        GtConfig {
            lambda: 0.1,
            ds: None,
            dt: 0.01,
            band: None,
        }
    }
}

impl GtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be a non-negative number, got {}",
                self.lambda
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(ds) = self.ds {
            if !(ds.is_finite() && ds > 0.0) {
                return Err(Error::InvalidParameter(format!("ds must be positive, got {ds}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GtResult {
    pub alignment: AlignmentFn,
    /// The `d1` term on the frame grid.
    pub data_cost: f64,
    /// The `R(τ)` term.
    pub reg_cost: f64,
    /// `data_cost + λ·reg_cost`.
    pub total: f64,
    pub lambda: f64,
    /// Actual performance frame width `T/J`.
    pub frame_dt: f64,
    /// Whether band pruning was active.
    pub banded: bool,
}

/// Performance frames of equal width `T/J` with `J = max(1, round(T/dt))`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceGrid {
    pub frames: Vec<PitchSet>,
    pub frame_dt: f64,
    duration: f64,
}

/// `k·L/n`, rounded once, so grid points that are round decimals land
/// exactly on them.
fn grid_time(k: usize, n: usize, len: f64) -> f64 {
    if k == n {
        len
    } else {
        k as f64 * len / n as f64
    }
}

impl PerformanceGrid {
    pub fn new(transcript: &PianoRoll, dt: f64) -> Result<Self> {
        let t = transcript.duration();
        let n = ((t / dt).round() as usize).max(1);
        let frame_dt = t / n as f64;
        let frames = (0..n)
            .map(|k| transcript.sample(grid_time(k, n, t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(PerformanceGrid {
            frames,
            frame_dt,
            duration: t,
        })
    }

    /// Start time of frame `k` (`T` for `k = J`).
    pub fn time(&self, k: usize) -> f64 {
        grid_time(k, self.len(), self.duration)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Per-segment prefix sums of frame mismatch counts:
/// `count(i, j) = Σ_{k<j} ‖scoreSet_i − frame_k‖₁`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentPrefixTable {
    counts: Vec<u32>,
    n_segments: usize,
    n_frames: usize,
    frame_dt: f64,
}

impl SegmentPrefixTable {
    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    fn row(&self, i: usize) -> &[u32] {
        let w = self.n_frames + 1;
        &self.counts[i * w..(i + 1) * w]
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.row(i)[j]
    }

    /// `table[i][j] = Σ_{k<j} ‖scoreSet_i − frame_k‖₁ · dt`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        f64::from(self.count(i, j)) * self.frame_dt
    }

    /// Mismatch of segment `i` over frames `j..j2`, in pitch-seconds.
    pub fn mismatch(&self, i: usize, j: usize, j2: usize) -> f64 {
        f64::from(self.count(i, j2) - self.count(i, j)) * self.frame_dt
    }
}

/// Builds the `K × (J + 1)` prefix table for the score's segments against
/// `frames` of width `dt`.
pub fn segment_prefix_table(score: &PianoRoll, frames: &[PitchSet], dt: f64) -> SegmentPrefixTable {
    let n_frames = frames.len();
    let sets = score.segment_sets();
    let mut counts = Vec::with_capacity(sets.len() * (n_frames + 1));
    for &set in sets {
        let mut acc = 0u32;
        counts.push(0);
        for &frame in frames {
            acc += set.distance(frame);
            counts.push(acc);
        }
    }
    SegmentPrefixTable {
        counts,
        n_segments: sets.len(),
        n_frames,
        frame_dt: dt,
    }
}

/// Regularizer contribution of one piece: `(slope − ρ)²·len / S`.
#[inline]
fn tempo_penalty(frames: usize, frame_dt: f64, seg_len: f64, rho: f64, score_len: f64) -> f64 {
    let slope = frames as f64 * frame_dt / seg_len;
    let dev = slope - rho;
    dev * dev * seg_len / score_len
}

/// Exact minimizer of `d1 + λ·R` over alignments that are linear between the
/// score's changepoints, with knots on the performance frame grid.
/// Runs in `O(K·J²)` time and `O(K·J)` space for `K` score segments and `J`
/// performance frames.
pub fn tempo_regularized_align(score: &PianoRoll, transcript: &PianoRoll, cfg: &GtConfig) -> Result<GtResult> {
    cfg.validate()?;
    let grid = PerformanceGrid::new(transcript, cfg.dt)?;
    let n_frames = grid.len();
    let frame_dt = grid.frame_dt;
    let table = segment_prefix_table(score, &grid.frames, frame_dt);
    let k_segments = table.n_segments();
    if k_segments == 0 {
        return Err(Error::Empty("score changepoints"));
    }

    let score_len = score.duration();
    let perf_len = transcript.duration();
    let rho = perf_len / score_len;
    let lambda = cfg.lambda;
    let frames_f = n_frames as f64;
    let mut bounds: Vec<f64> = score.changepoints().to_vec();
    bounds.push(score_len);

    let width = n_frames + 1;
    let allowed = |i: usize| -> (usize, usize) {
        match cfg.band {
            None => (0, n_frames),
            Some(band) => {
                let center = (bounds[i] / score_len * frames_f).round() as usize;
                (center.saturating_sub(band), (center + band).min(n_frames))
            }
        }
    };

    let mut cost = vec![f64::INFINITY; width];
    cost[0] = 0.0;
    let mut back = vec![u32::MAX; k_segments * width];
    for i in 0..k_segments {
        let seg_len = bounds[i + 1] - bounds[i];
        let weighted_penalty: Vec<f64> = (0..=n_frames)
            .map(|d| lambda * tempo_penalty(d, frame_dt, seg_len, rho, score_len))
            .collect();
        let row = table.row(i);
        let (lo, hi) = allowed(i + 1);
        let (prev_lo, prev_hi) = allowed(i);
        let prev = &cost;
        let next: Vec<(f64, u32)> = (0..width)
            .into_par_iter()
            .map(|j2| {
                if j2 < lo || j2 > hi {
                    return (f64::INFINITY, u32::MAX);
                }
                let mut best = (f64::INFINITY, u32::MAX);
                for j in prev_lo..=j2.min(prev_hi) {
                    let base = prev[j];
                    if base == f64::INFINITY {
                        continue;
                    }
                    let data = f64::from(row[j2] - row[j]) / frames_f;
                    let acc = base + (data + weighted_penalty[j2 - j]);
                    if acc < best.0 {
                        best = (acc, j as u32);
                    }
                }
                best
            })
            .collect();
        for (j2, &(c, from)) in next.iter().enumerate() {
            cost[j2] = c;
            back[i * width + j2] = from;
        }
    }

    let total = cost[n_frames];
    if !total.is_finite() {
        return Err(Error::InvalidParameter(
            "band too narrow: no feasible alignment".into(),
        ));
    }

    let mut placement = vec![0usize; k_segments + 1];
    placement[k_segments] = n_frames;
    for i in (0..k_segments).rev() {
        placement[i] = back[i * width + placement[i + 1]] as usize;
    }

    let mut data_cost = 0.0;
    let mut reg_cost = 0.0;
    for i in 0..k_segments {
        let (j, j2) = (placement[i], placement[i + 1]);
        data_cost += f64::from(table.count(i, j2) - table.count(i, j)) / frames_f;
        reg_cost += tempo_penalty(j2 - j, frame_dt, bounds[i + 1] - bounds[i], rho, score_len);
    }

    let knots = bounds
        .iter()
        .zip(&placement)
        .map(|(&s, &j)| Knot::new(s, grid.time(j)))
        .collect();
    Ok(GtResult {
        alignment: AlignmentFn::new(knots, score_len, perf_len)?,
        data_cost,
        reg_cost,
        total,
        lambda,
        frame_dt,
        banded: cfg.band.is_some(),
    })
}

/// Unregularized frame-level DTW between the score (frames of width `ds`)
/// and the transcript, with local cost `‖scoreFrame_i − transcriptFrame_j‖₁`
/// weighted by the frame width. `cfg.lambda` must be 0.
pub fn classical_dtw(score: &PianoRoll, transcript: &PianoRoll, cfg: &GtConfig) -> Result<GtResult> {
    cfg.validate()?;
    if cfg.lambda != 0.0 {
        return Err(Error::InvalidParameter(
            "classical DTW is unregularized; set lambda = 0".into(),
        ));
    }
    let ds = cfg
        .ds
        .ok_or_else(|| Error::InvalidParameter("classical DTW needs a score grid step ds".into()))?;
    let score_len = score.duration();
    let n_score = frame_count(score_len, ds);
    let score_ds = score_len / n_score as f64;
    let score_frames = (0..n_score)
        .map(|i| score.sample(grid_time(i, n_score, score_len)))
        .collect::<Result<Vec<_>>>()?;
    let grid = PerformanceGrid::new(transcript, cfg.dt)?;
    let frames_f = grid.len() as f64;

    let (steps, path_cost) = dtw(n_score, grid.len(), |i, j| {
        f64::from(score_frames[i].distance(grid.frames[j]))
    });
    let path = WarpPath::new(steps, score_ds, grid.frame_dt)?;
    let alignment = AlignmentFn::from_path_with_extent(&path, score_len, transcript.duration())?;
    let data_cost = path_cost / frames_f;
    Ok(GtResult {
        reg_cost: alignment.inverse_tempo_variance(),
        alignment,
        data_cost,
        total: data_cost,
        lambda: 0.0,
        frame_dt: grid.frame_dt,
        banded: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pianoroll::{NoteEvent, NoteList, TimeAxis};

    fn roll(axis: TimeAxis, duration: f64, notes: &[(u8, f64, f64)]) -> PianoRoll {
        let notes = notes
            .iter()
            .map(|&(p, a, b)| NoteEvent::new(p, a, b))
            .collect();
        PianoRoll::from_notes(&NoteList::new(notes, axis, duration).unwrap())
    }

    fn toy_score() -> PianoRoll {
        roll(
            TimeAxis::ScoreBeats,
            4.0,
            &[(60, 0.0, 1.0), (64, 1.0, 2.0), (67, 2.0, 3.0), (72, 3.0, 4.0)],
        )
    }

    #[test]
    fn prefix_table_basics() {
        let score = toy_score();
        let frames: Vec<PitchSet> = [60u8, 60, 64, 67]
            .iter()
            .map(|&p| [p].into_iter().collect())
            .collect();
        let table = segment_prefix_table(&score, &frames, 0.5);
        assert_eq!(table.n_segments(), 4);
        for i in 0..4 {
            assert_eq!(table.get(i, 0), 0.0);
        }
        // segment 0 ({60}) against frames: 0, 0, 2, 2
        assert_eq!(table.count(0, 4), 4);
        assert_eq!(table.mismatch(0, 0, 2), 0.0);
        assert_eq!(table.mismatch(0, 2, 4), 2.0);
        // direct-sum oracle
        for i in 0..4 {
            for j in 0..=4 {
                for j2 in j..=4 {
                    let direct: u32 = (j..j2)
                        .map(|k| score.segment_sets()[i].distance(frames[k]))
                        .sum();
                    assert_eq!(table.count(i, j2) - table.count(i, j), direct);
                }
            }
        }
    }

    #[test]
    fn uniform_tempo_transcript_gives_straight_line() {
        let score = toy_score();
        // T/S = 0.5 s per beat, changepoints land on the 0.25 s grid
        let transcript = roll(
            TimeAxis::PerformanceSeconds,
            2.0,
            &[(60, 0.0, 0.5), (64, 0.5, 1.0), (67, 1.0, 1.5), (72, 1.5, 2.0)],
        );
        for lambda in [0.0, 0.1, 1.0, 100.0] {
            let cfg = GtConfig {
                lambda,
                dt: 0.25,
                ..Default::default()
            };
            let r = tempo_regularized_align(&score, &transcript, &cfg).unwrap();
            assert_eq!(r.data_cost, 0.0);
            assert!(r.reg_cost < 1e-20);
            for k in r.alignment.knots() {
                assert!((k.t - 0.5 * k.s).abs() < 1e-12, "lambda {lambda}: {k:?}");
            }
        }
    }

    #[test]
    fn huge_lambda_converges_to_uniform_tempo() {
        let score = toy_score();
        let transcript = roll(
            TimeAxis::PerformanceSeconds,
            2.0,
            &[(60, 0.0, 0.2), (64, 0.2, 1.4), (67, 1.4, 1.5), (72, 1.5, 2.0)],
        );
        let cfg = GtConfig {
            lambda: 1e9,
            dt: 0.1,
            ..Default::default()
        };
        let r = tempo_regularized_align(&score, &transcript, &cfg).unwrap();
        assert!(r.reg_cost < 1e-20);
        for k in r.alignment.knots() {
            assert!((k.t - 0.5 * k.s).abs() <= 0.1 + 1e-12);
        }
    }

    #[test]
    fn result_invariants() {
        let score = toy_score();
        let transcript = roll(
            TimeAxis::PerformanceSeconds,
            3.0,
            &[(60, 0.0, 0.3), (64, 0.3, 1.7), (67, 1.8, 2.2), (72, 2.2, 3.0)],
        );
        let r = tempo_regularized_align(&score, &transcript, &GtConfig { dt: 0.1, ..Default::default() }).unwrap();
        assert!((r.total - (r.data_cost + r.lambda * r.reg_cost)).abs() < 1e-9);
        let knots = r.alignment.knots();
        assert_eq!(knots[0], Knot::new(0.0, 0.0));
        assert_eq!(knots[knots.len() - 1], Knot::new(4.0, 3.0));
        assert!((r.alignment.mean_inverse_tempo() - 0.75).abs() < 1e-12);
        assert!((r.alignment.inverse_tempo_variance() - r.reg_cost).abs() < 1e-9);
        // changepoints of the transcript lie on the grid: d1 is exact
        let pscore = r.alignment.apply(&score).unwrap();
        let d1 = crate::pianoroll::l1_distance(&pscore, &transcript).unwrap();
        assert!((d1 - r.data_cost).abs() < 1e-9);
    }

    #[test]
    fn band_prunes_and_flags() {
        let score = toy_score();
        let transcript = roll(TimeAxis::PerformanceSeconds, 2.0, &[(60, 0.0, 2.0)]);
        let cfg = GtConfig {
            dt: 0.1,
            band: Some(2),
            ..Default::default()
        };
        let r = tempo_regularized_align(&score, &transcript, &cfg).unwrap();
        assert!(r.banded);
        for k in r.alignment.knots() {
            assert!((k.t - 0.5 * k.s).abs() <= 0.2 + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let score = toy_score();
        let bad = GtConfig {
            lambda: -1.0,
            ..Default::default()
        };
        assert!(tempo_regularized_align(&score, &score, &bad).is_err());
        let bad = GtConfig {
            dt: 0.0,
            ..Default::default()
        };
        assert!(tempo_regularized_align(&score, &score, &bad).is_err());
        let cfg = GtConfig {
            ds: Some(0.5),
            ..Default::default()
        };
        assert!(classical_dtw(&score, &score, &cfg).is_err(), "lambda must be zero");
        let cfg = GtConfig {
            lambda: 0.0,
            ..Default::default()
        };
        assert!(classical_dtw(&score, &score, &cfg).is_err(), "ds required");
    }

    #[test]
    fn classical_dtw_single_cell() {
        let score = toy_score();
        let transcript = roll(TimeAxis::PerformanceSeconds, 2.0, &[(60, 0.0, 2.0)]);
        let cfg = GtConfig {
            lambda: 0.0,
            ds: Some(4.0),
            dt: 2.0,
            band: None,
        };
        let r = classical_dtw(&score, &transcript, &cfg).unwrap();
        assert_eq!(r.alignment.knots(), &[Knot::new(0.0, 0.0), Knot::new(4.0, 2.0)]);
    }

    #[test]
    fn classical_dtw_self_alignment() {
        let score = roll(
            TimeAxis::ScoreBeats,
            4.0,
            &[(60, 0.0, 1.0), (64, 0.5, 2.0), (67, 2.0, 3.0), (72, 3.0, 3.5)],
        );
        let identity = AlignmentFn::linear(4.0, 4.0).unwrap();
        let transcript = identity.apply(&score).unwrap();
        let cfg = GtConfig {
            lambda: 0.0,
            ds: Some(0.05),
            dt: 0.05,
            band: None,
        };
        let r = classical_dtw(&score, &transcript, &cfg).unwrap();
        let mad = crate::metrics::temporal_mad(&r.alignment, &identity, &score).unwrap();
        assert!(mad <= 50.0, "mad {mad} ms");
        assert_eq!(r.data_cost, 0.0);
    }
}
