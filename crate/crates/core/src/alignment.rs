//! Monotone alignment functions from score position (beats) to performance
//! time (seconds).
//!
//! An [`AlignmentFn`] is stored as a list of knots and interpolated linearly
//! between them. Two knots with the same score position encode a jump; the
//! function is right-continuous, so at a jump it takes the later knot's time.
//! Two knots with the same time encode a flat stretch, where a span of the
//! score collapses onto one performance instant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pianoroll::{NoteList, PianoRoll, PitchSet, TimeAxis};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    /// Score position in beats.
    pub s: f64,
    /// Performance time in seconds.
    pub t: f64,
}

impl Knot {
    pub fn new(s: f64, t: f64) -> Self {
        Knot { s, t }
    }
}

impl From<(f64, f64)> for Knot {
    fn from((s, t): (f64, f64)) -> Self {
        Knot { s, t }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentFn {
    knots: Vec<Knot>,
    score_len: f64,
    perf_len: f64,
}

impl AlignmentFn {
    /// Validates and wraps a knot list for a score of `score_len` beats and a
    /// performance of `perf_len` seconds.
    pub fn new(knots: Vec<Knot>, score_len: f64, perf_len: f64) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidAlignment(msg));
        if !(score_len.is_finite() && score_len > 0.0) {
            return bad(format!("score length must be positive, got {score_len}"));
        }
        if !(perf_len.is_finite() && perf_len > 0.0) {
            return bad(format!("performance length must be positive, got {perf_len}"));
        }
        let (Some(first), Some(last)) = (knots.first(), knots.last()) else {
            return bad("no knots".into());
        };
        if first.s != 0.0 {
            return bad(format!("first knot must be at s = 0, got {}", first.s));
        }
        if last.s != score_len {
            return bad(format!(
                "last knot must be at s = {score_len}, got {}",
                last.s
            ));
        }
        for (k, knot) in knots.iter().enumerate() {
            if !(knot.s.is_finite() && knot.t.is_finite()) {
                return bad(format!("knot {k} is not finite"));
            }
            if !(0.0..=perf_len).contains(&knot.t) {
                return bad(format!(
                    "knot {k} maps to t = {} outside [0, {perf_len}]",
                    knot.t
                ));
            }
        }
        for (k, w) in knots.windows(2).enumerate() {
            if w[1].s < w[0].s {
                return bad(format!("score positions decrease at knot {}", k + 1));
            }
            if w[1].t < w[0].t {
                return bad(format!("performance times decrease at knot {}", k + 1));
            }
        }
        Ok(AlignmentFn {
            knots,
            score_len,
            perf_len,
        })
    }

    /// Uniform tempo: the straight line from `(0, 0)` to `(S, T)`.
    pub fn linear(score_len: f64, perf_len: f64) -> Result<Self> {
        Self::new(
            vec![Knot::new(0.0, 0.0), Knot::new(score_len, perf_len)],
            score_len,
            perf_len,
        )
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    /// `S`, in beats.
    pub fn score_len(&self) -> f64 {
        self.score_len
    }

    /// `T`, in seconds.
    pub fn perf_len(&self) -> f64 {
        self.perf_len
    }

    /// `τ(s)` for `s ∈ [0, S]`.
    pub fn evaluate_at(&self, s: f64) -> Result<f64> {
        if !(0.0..=self.score_len).contains(&s) {
            return Err(Error::OutOfDomain {
                value: s,
                lo: 0.0,
                hi: self.score_len,
                closed: true,
            });
        }
        Ok(self.eval_unchecked(s))
    }

    fn eval_unchecked(&self, s: f64) -> f64 {
        let i = self.knots.partition_point(|k| k.s <= s);
        if i == self.knots.len() {
            return self.knots[i - 1].t;
        }
        // knots[0].s == 0 <= s, so i >= 1 here
        let (lo, hi) = (self.knots[i - 1], self.knots[i]);
        let frac = (s - lo.s) / (hi.s - lo.s);
        (lo.t + frac * (hi.t - lo.t)).clamp(lo.t, hi.t)
    }

    /// Canonical linear representative: interpolates `τ` linearly between
    /// its values at `changepoints ∪ {0, S}`. Changepoints outside `[0, S]`
    /// are ignored.
    pub fn linearize(&self, changepoints: &[f64]) -> AlignmentFn {
        let mut grid: Vec<f64> = changepoints
            .iter()
            .copied()
            .filter(|c| (0.0..=self.score_len).contains(c))
            .chain([0.0, self.score_len])
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let knots = grid
            .into_iter()
            .map(|s| Knot::new(s, self.eval_unchecked(s)))
            .collect();
        AlignmentFn {
            knots,
            score_len: self.score_len,
            perf_len: self.perf_len,
        }
    }

    /// Mean inverse tempo `(τ(S) − τ(0)) / S`, accumulated over the knot
    /// increments.
    pub fn mean_inverse_tempo(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| w[1].t - w[0].t)
            .sum::<f64>()
            / self.score_len
    }

    /// Variance of the inverse tempo around `T/S`:
    /// `(1/S)·∫(τ'(s) − T/S)² ds` over the pieces of positive score length.
    /// Jumps carry no score length and are skipped.
    pub fn inverse_tempo_variance(&self) -> f64 {
        let rho = self.perf_len / self.score_len;
        self.knots
            .windows(2)
            .filter(|w| w[1].s > w[0].s)
            .map(|w| {
                let len = w[1].s - w[0].s;
                let slope = (w[1].t - w[0].t) / len;
                (slope - rho).powi(2) * len
            })
            .sum::<f64>()
            / self.score_len
    }

    /// Performance-aligned score: the roll on `[0, T)` whose value at `t` is
    /// the union of `score(s)` over all `s` with `τ(s) = t`.
    ///
    /// Times never reached by `τ` (before `τ(0)`, after `τ(S)`) are silent.
    /// Across a jump of `τ` at `s`, the roll holds the score's value just
    /// before `s`, as when a performer extends a chord while the score waits.
    /// A flat stretch of `τ` becomes an instant value carrying the union of
    /// the score over the collapsed span.
    pub fn apply(&self, score: &PianoRoll) -> Result<PianoRoll> {
        if score.duration() != self.score_len {
            return Err(Error::DurationMismatch(score.duration(), self.score_len));
        }
        let cps = score.changepoints();
        let sets = score.segment_sets();
        let mut pieces = vec![(0.0, PitchSet::EMPTY)];
        let mut instants = Vec::new();

        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.s < b.s && a.t < b.t {
                let map = |s: f64| (a.t + (s - a.s) * (b.t - a.t) / (b.s - a.s)).clamp(a.t, b.t);
                let mut k = score.segment_index(a.s);
                while k < cps.len() && cps[k] < b.s {
                    pieces.push((map(cps[k].max(a.s)), sets[k]));
                    k += 1;
                }
                for &(s, set) in score.instants() {
                    if s >= a.s && s < b.s {
                        instants.push((map(s), set));
                    }
                }
            } else if a.s == b.s && a.t < b.t {
                pieces.push((a.t, sets[score.left_segment_index(a.s)]));
            }
        }
        let last = self.knots[self.knots.len() - 1];
        pieces.push((last.t, PitchSet::EMPTY));

        let mut r0 = 0;
        while r0 < self.knots.len() {
            let t0 = self.knots[r0].t;
            let mut r1 = r0;
            while r1 + 1 < self.knots.len() && self.knots[r1 + 1].t == t0 {
                r1 += 1;
            }
            let (a, b) = (self.knots[r0].s, self.knots[r1].s);
            if b > a {
                let b_in_preimage = b < self.score_len
                    && self.knots.get(r1 + 1).is_none_or(|next| next.s > b);
                instants.push((t0, score.union_over(a, b, b_in_preimage)));
            }
            r0 = r1 + 1;
        }

        PianoRoll::with_instants(self.perf_len, score.n_pitches(), pieces, instants)
    }

    /// Maps each note onset through `τ` (linearized at the onsets themselves,
    /// which leaves the onset values unchanged).
    pub fn warp_onsets(&self, notes: &NoteList) -> Result<Vec<f64>> {
        if notes.axis() != TimeAxis::ScoreBeats {
            return Err(Error::InvalidParameter(
                "onsets to warp must be on the score axis".into(),
            ));
        }
        notes.onsets().map(|s| self.evaluate_at(s)).collect()
    }

    /// Converts a lattice warping path to a right-continuous alignment of a
    /// score of `(i_last + 1)·Δs` beats and a performance of
    /// `(j_last + 1)·Δt` seconds.
    pub fn from_path(path: &WarpPath) -> Result<Self> {
        let (i_last, j_last) = path.end();
        let score_len = (i_last + 1) as f64 * path.ds;
        let perf_len = (j_last + 1) as f64 * path.dt;
        Self::from_path_with_extent(path, score_len, perf_len)
    }

    /// Like [`AlignmentFn::from_path`] with explicit `S` and `T`. Knots past
    /// the extent are clamped onto it.
    pub fn from_path_with_extent(path: &WarpPath, score_len: f64, perf_len: f64) -> Result<Self> {
        let mut knots = Vec::new();
        let steps = &path.steps;
        let mut k = 0;
        while k < steps.len() {
            let i = steps[k].0;
            let j_first = steps[k].1;
            while k + 1 < steps.len() && steps[k + 1].0 == i {
                k += 1;
            }
            let j_last = steps[k].1;
            let s = (i as f64 * path.ds).min(score_len);
            knots.push(Knot::new(s, (j_first as f64 * path.dt).min(perf_len)));
            if j_last != j_first {
                knots.push(Knot::new(s, (j_last as f64 * path.dt).min(perf_len)));
            }
            k += 1;
        }
        knots.push(Knot::new(score_len, perf_len));
        Self::new(knots, score_len, perf_len)
    }
}

/// A monotone lattice path through a (score frame, performance frame) grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpPath {
    steps: Vec<(usize, usize)>,
    /// Beats per score frame.
    pub ds: f64,
    /// Seconds per performance frame.
    pub dt: f64,
}

impl WarpPath {
    pub fn new(steps: Vec<(usize, usize)>, ds: f64, dt: f64) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Empty("warping path"));
        }
        if steps[0] != (0, 0) {
            return Err(Error::InvalidParameter("path must start at (0, 0)".into()));
        }
        if steps.windows(2).any(|w| w[1].0 < w[0].0 || w[1].1 < w[0].1) {
            return Err(Error::InvalidParameter("path is not monotone".into()));
        }
        if !(ds > 0.0 && dt > 0.0) {
            return Err(Error::InvalidParameter("frame steps must be positive".into()));
        }
        Ok(WarpPath { steps, ds, dt })
    }

    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    pub fn end(&self) -> (usize, usize) {
        self.steps[self.steps.len() - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pianoroll::{NoteEvent, TimeAxis};

    fn tau(knots: &[(f64, f64)], s: f64, t: f64) -> AlignmentFn {
        AlignmentFn::new(knots.iter().map(|&k| k.into()).collect(), s, t).unwrap()
    }

    fn set(p: &[u8]) -> PitchSet {
        p.iter().copied().collect()
    }

    fn score(duration: f64, notes: &[(u8, f64, f64)]) -> PianoRoll {
        let notes = notes
            .iter()
            .map(|&(p, a, b)| NoteEvent::new(p, a, b))
            .collect();
        PianoRoll::from_notes(&NoteList::new(notes, TimeAxis::ScoreBeats, duration).unwrap())
    }

    #[test]
    fn evaluate_examples() {
        let a = tau(&[(0.0, 0.0), (4.0, 8.0)], 4.0, 8.0);
        assert_eq!(a.evaluate_at(1.0).unwrap(), 2.0);
        assert_eq!(a.evaluate_at(0.0).unwrap(), 0.0);
        assert_eq!(a.evaluate_at(4.0).unwrap(), 8.0);
        assert!(a.evaluate_at(4.5).is_err());
        assert!(a.evaluate_at(-0.5).is_err());

        let jump = tau(&[(0.0, 0.0), (2.0, 1.0), (2.0, 3.0), (4.0, 5.0)], 4.0, 5.0);
        assert_eq!(jump.evaluate_at(2.0).unwrap(), 3.0);
        assert_eq!(jump.evaluate_at(1.0).unwrap(), 0.5);
        assert_eq!(jump.evaluate_at(3.0).unwrap(), 4.0);
    }

    #[test]
    fn rejects_invalid_knots() {
        let mk = |k: &[(f64, f64)]| AlignmentFn::new(k.iter().map(|&k| k.into()).collect(), 4.0, 4.0);
        assert!(mk(&[]).is_err());
        assert!(mk(&[(0.0, 0.0), (2.0, 2.0), (1.0, 3.0), (4.0, 4.0)]).is_err());
        assert!(mk(&[(0.0, 0.0), (2.0, 2.0), (3.0, 1.0), (4.0, 4.0)]).is_err());
        assert!(mk(&[(1.0, 0.0), (4.0, 4.0)]).is_err());
        assert!(mk(&[(0.0, 0.0), (3.0, 4.0)]).is_err());
        assert!(mk(&[(0.0, 0.0), (4.0, 5.0)]).is_err());
    }

    #[test]
    fn apply_identity_relabels() {
        let sc = score(4.0, &[(60, 0.0, 1.0), (64, 1.0, 3.0), (67, 2.0, 4.0)]);
        let id = AlignmentFn::linear(4.0, 4.0).unwrap();
        let p = id.apply(&sc).unwrap();
        assert_eq!(p.changepoints(), sc.changepoints());
        assert_eq!(p.segment_sets(), sc.segment_sets());
        assert!(p.instants().is_empty());
    }

    #[test]
    fn apply_jump_holds_chord() {
        // triad on [0, 1), next note at beat 1; the performer holds the triad
        // from t = 1 to t = 3 before moving on
        let sc = score(2.0, &[(60, 0.0, 1.0), (64, 0.0, 1.0), (67, 0.0, 1.0), (72, 1.0, 2.0)]);
        let a = tau(&[(0.0, 0.0), (1.0, 1.0), (1.0, 3.0), (2.0, 4.0)], 2.0, 4.0);
        let p = a.apply(&sc).unwrap();
        let triad = set(&[60, 64, 67]);
        for t in [0.0, 0.5, 1.0, 2.0, 2.999] {
            assert_eq!(p.sample(t).unwrap(), triad, "t = {t}");
        }
        assert_eq!(p.sample(3.0).unwrap(), set(&[72]));
    }

    #[test]
    fn apply_flat_unions_collapsed_span() {
        let sc = score(3.0, &[(60, 0.0, 1.0), (62, 1.0, 1.5), (64, 1.5, 2.0), (65, 2.0, 3.0)]);
        let a = tau(&[(0.0, 0.0), (1.0, 1.0), (2.0, 1.0), (3.0, 2.0)], 3.0, 2.0);
        let p = a.apply(&sc).unwrap();
        // preimage of t = 1 is [1, 2]
        assert_eq!(p.sample(1.0).unwrap(), set(&[62, 64, 65]));
        assert_eq!(p.sample(0.999).unwrap(), set(&[60]));
        assert_eq!(p.sample(1.001).unwrap(), set(&[65]));
        // instants have zero measure
        let direct = PianoRoll::from_segments(2.0, 128, vec![(0.0, set(&[60])), (1.0, set(&[65]))]).unwrap();
        assert_eq!(crate::pianoroll::l1_distance(&p, &direct).unwrap(), 0.0);
    }

    #[test]
    fn apply_leaves_unreached_times_silent() {
        let sc = score(2.0, &[(60, 0.0, 2.0)]);
        let a = tau(&[(0.0, 1.0), (2.0, 3.0)], 2.0, 4.0);
        let p = a.apply(&sc).unwrap();
        assert_eq!(p.sample(0.5).unwrap(), PitchSet::EMPTY);
        assert_eq!(p.sample(2.0).unwrap(), set(&[60]));
        assert_eq!(p.sample(3.5).unwrap(), PitchSet::EMPTY);
        assert!(a.apply(&score(3.0, &[])).is_err());
    }

    #[test]
    fn linearize_examples() {
        let a = tau(&[(0.0, 0.0), (0.5, 2.0), (1.0, 2.0), (1.5, 2.5), (1.5, 3.0), (2.0, 4.0)], 2.0, 4.0);
        let lin = a.linearize(&[0.0, 1.0, 2.0]);
        assert_eq!(lin.knots(), &[Knot::new(0.0, 0.0), Knot::new(1.0, 2.0), Knot::new(2.0, 4.0)]);
        assert_eq!(lin.linearize(&[0.0, 1.0, 2.0]), lin);
        // the jump at 1.5 lies between changepoints and disappears
        assert_eq!(lin.evaluate_at(1.5).unwrap(), 3.0);
    }

    #[test]
    fn from_path_examples() {
        let p = WarpPath::new(vec![(0, 0), (1, 1), (2, 2)], 0.5, 0.25).unwrap();
        let a = AlignmentFn::from_path(&p).unwrap();
        assert_eq!(a.score_len(), 1.5);
        assert_eq!(a.perf_len(), 0.75);
        for k in 0..=30 {
            let s = 1.5 * k as f64 / 30.0;
            assert!((a.evaluate_at(s).unwrap() - 0.5 * s).abs() < 1e-12);
        }

        let p = WarpPath::new(vec![(0, 0), (0, 1), (1, 1)], 1.0, 0.5).unwrap();
        let a = AlignmentFn::from_path(&p).unwrap();
        assert_eq!(a.knots()[..2], [Knot::new(0.0, 0.0), Knot::new(0.0, 0.5)]);
        assert_eq!(a.evaluate_at(0.0).unwrap(), 0.5);

        let single = AlignmentFn::from_path(&WarpPath::new(vec![(0, 0)], 2.0, 3.0).unwrap()).unwrap();
        assert_eq!(single.knots(), &[Knot::new(0.0, 0.0), Knot::new(2.0, 3.0)]);

        assert!(WarpPath::new(vec![], 1.0, 1.0).is_err());
        assert!(WarpPath::new(vec![(0, 1)], 1.0, 1.0).is_err());
        assert!(WarpPath::new(vec![(0, 0), (1, 1), (0, 2)], 1.0, 1.0).is_err());
    }

    #[test]
    fn warp_onsets_examples() {
        let notes = NoteList::new(
            vec![NoteEvent::new(60, 1.0, 2.0), NoteEvent::new(62, 2.0, 3.0)],
            TimeAxis::ScoreBeats,
            4.0,
        )
        .unwrap();
        let id = AlignmentFn::linear(4.0, 4.0).unwrap();
        assert_eq!(id.warp_onsets(&notes).unwrap(), vec![1.0, 2.0]);
        let half = AlignmentFn::linear(4.0, 8.0).unwrap();
        assert_eq!(half.warp_onsets(&notes).unwrap(), vec![2.0, 4.0]);
        let jump = tau(&[(0.0, 0.0), (2.0, 1.0), (2.0, 3.0), (4.0, 5.0)], 4.0, 5.0);
        assert_eq!(jump.warp_onsets(&notes).unwrap()[1], 3.0);

        let perf = NoteList::new(vec![], TimeAxis::PerformanceSeconds, 1.0).unwrap();
        assert!(id.warp_onsets(&perf).is_err());
    }

    #[test]
    fn mean_inverse_tempo_is_endpoint_slope() {
        let a = tau(&[(0.0, 0.0), (1.0, 0.2), (1.0, 0.7), (3.0, 1.0), (4.0, 2.0)], 4.0, 2.0);
        assert!((a.mean_inverse_tempo() - 0.5).abs() < 1e-15);
        assert_eq!(AlignmentFn::linear(4.0, 2.0).unwrap().inverse_tempo_variance(), 0.0);
    }
}
