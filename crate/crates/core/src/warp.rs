//! Seeded synthetic alignments for tests and fixtures.
//!
//! Every generator returns a monotone alignment from `(0, 0)` to `(S, T)`.
//! Local tempo relative to the mean `T/S` stays within `[0.5, 2]` at full
//! severity.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alignment::{AlignmentFn, Knot};
use crate::error::{Error, Result};
use crate::pianoroll::{NoteEvent, NoteList, TimeAxis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WarpKind {
    /// A single straight line.
    Constant,
    /// Straight pieces with random tempi.
    Piecewise,
    /// Monotone cubic through random control points, densely sampled.
    SmoothRubato,
    /// Piecewise, plus one jump forward in performance time.
    WithJump,
}

impl WarpKind {
    pub const ALL: [WarpKind; 4] = [
        WarpKind::Constant,
        WarpKind::Piecewise,
        WarpKind::SmoothRubato,
        WarpKind::WithJump,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WarpKind::Constant => "constant",
            WarpKind::Piecewise => "piecewise",
            WarpKind::SmoothRubato => "smooth-rubato",
            WarpKind::WithJump => "with-jump",
        }
    }
}

impl fmt::Display for WarpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WarpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        let s = if s == "constant-tempo" { "constant" } else { s.as_str() };
        WarpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown warp kind {s:?}")))
    }
}

/// Largest raw tempo factor at severity 1. Pieces are drawn log-uniformly
/// in `[1/f, f]`, so after renormalization any two tempi differ by less
/// than `f²`.
const PIECE_FACTOR: f64 = 1.4;
/// Smaller for the cubic, whose derivative can overshoot its control
/// secants.
const RUBATO_FACTOR: f64 = 1.25;
const SAMPLES_PER_PIECE: usize = 32;
/// Share of `T` skipped by the jump.
const JUMP_SHARE: f64 = 0.05;

/// [`synthetic_warp_with_severity`] at full severity.
pub fn synthetic_warp(kind: WarpKind, seed: u64, score_len: f64, perf_len: f64) -> Result<AlignmentFn> {
    synthetic_warp_with_severity(kind, seed, score_len, perf_len, 1.0)
}

/// Deterministic in `seed`. `severity` in `[0, 1]` scales the spread of
/// local tempi; 0 gives a straight line for every kind except the jump.
pub fn synthetic_warp_with_severity(
    kind: WarpKind,
    seed: u64,
    score_len: f64,
    perf_len: f64,
    severity: f64,
) -> Result<AlignmentFn> {
    if !(score_len.is_finite() && score_len > 0.0 && perf_len.is_finite() && perf_len > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "warp extent must be positive, got S = {score_len}, T = {perf_len}"
        )));
    }
    if !(0.0..=1.0).contains(&severity) {
        return Err(Error::InvalidParameter(format!("severity must be in [0, 1], got {severity}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let knots = match kind {
        WarpKind::Constant => vec![Knot::new(0.0, 0.0), Knot::new(score_len, perf_len)],
        WarpKind::Piecewise => {
            let n = rng.random_range(3..=8);
            piecewise(&mut rng, n, score_len, perf_len, PIECE_FACTOR, severity)
        }
        WarpKind::SmoothRubato => {
            let n = rng.random_range(4..=10);
            let control = piecewise(&mut rng, n, score_len, perf_len, RUBATO_FACTOR, severity);
            pchip_samples(&control, SAMPLES_PER_PIECE)
        }
        WarpKind::WithJump => {
            let n = rng.random_range(3..=6);
            let jump = JUMP_SHARE * perf_len;
            let mut knots = piecewise(&mut rng, n, score_len, perf_len - jump, PIECE_FACTOR, severity);
            let at = rng.random_range(0.3..0.7) * score_len;
            insert_jump(&mut knots, at, jump);
            knots
        }
    };
    AlignmentFn::new(knots, score_len, perf_len)
}

/// `n` straight pieces at random breakpoints with tempo factors drawn
/// log-uniformly from `[1/f, f]^severity`, scaled to end at `(S, T)`.
fn piecewise(rng: &mut ChaCha8Rng, n: usize, score_len: f64, perf_len: f64, f: f64, severity: f64) -> Vec<Knot> {
    let mut cuts: Vec<f64> = (1..n).map(|_| rng.random_range(0.05..0.95)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut s: Vec<f64> = std::iter::once(0.0)
        .chain(cuts.iter().map(|c| c * score_len))
        .chain(std::iter::once(score_len))
        .collect();
    s.dedup();
    let spread = severity * f.ln();
    let dt: Vec<f64> = s
        .windows(2)
        .map(|w| (w[1] - w[0]) * (rng.random_range(-1.0..=1.0) * spread).exp())
        .collect();
    let total: f64 = dt.iter().sum();
    let mut knots = Vec::with_capacity(s.len());
    let mut t = 0.0;
    knots.push(Knot::new(0.0, 0.0));
    for (k, d) in dt.iter().enumerate() {
        t += d * perf_len / total;
        knots.push(Knot::new(s[k + 1], t));
    }
    knots.last_mut().unwrap().t = perf_len;
    knots
}

/// Samples the monotone piecewise-cubic Hermite interpolant of `control`
/// at `per_piece` evenly spaced points per control interval.
fn pchip_samples(control: &[Knot], per_piece: usize) -> Vec<Knot> {
    let n = control.len();
    let h: Vec<f64> = control.windows(2).map(|w| w[1].s - w[0].s).collect();
    let m: Vec<f64> = control.windows(2).zip(&h).map(|(w, h)| (w[1].t - w[0].t) / h).collect();
    let mut d = vec![0.0; n];
    d[0] = m[0];
    d[n - 1] = m[n - 2];
    for k in 1..n - 1 {
        if m[k - 1] * m[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
        }
    }
    let mut out = vec![control[0]];
    for k in 0..n - 1 {
        let (a, b) = (control[k], control[k + 1]);
        for q in 1..=per_piece {
            let u = q as f64 / per_piece as f64;
            let (u2, u3) = (u * u, u * u * u);
            let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
            let h10 = u3 - 2.0 * u2 + u;
            let h01 = -2.0 * u3 + 3.0 * u2;
            let h11 = u3 - u2;
            let t = h00 * a.t + h10 * h[k] * d[k] + h01 * b.t + h11 * h[k] * d[k + 1];
            let s = if q == per_piece { b.s } else { a.s + u * h[k] };
            let t = if q == per_piece { b.t } else { t };
            let prev = out.last().map_or(0.0, |p: &Knot| p.t);
            out.push(Knot::new(s, t.max(prev)));
        }
    }
    out
}

/// Splits the piece containing `at` and shifts everything from `at` on
/// forward by `jump`.
fn insert_jump(knots: &mut Vec<Knot>, at: f64, jump: f64) {
    let k = knots.partition_point(|p| p.s <= at);
    let (a, b) = (knots[k - 1], knots[k]);
    let mut tail: Vec<Knot> = knots.split_off(k);
    if a.s < at {
        let t = a.t + (b.t - a.t) * (at - a.s) / (b.s - a.s);
        knots.push(Knot::new(at, t));
    }
    let t = knots.last().unwrap().t;
    knots.push(Knot::new(at, t + jump));
    for p in &mut tail {
        p.t += jump;
    }
    knots.extend(tail);
}

/// Maps score notes (beats) through `tau` to performance notes (seconds).
/// Notes that collapse to zero length are dropped.
pub fn warp_notes(tau: &AlignmentFn, notes: &NoteList) -> Result<NoteList> {
    if notes.axis() != TimeAxis::ScoreBeats {
        return Err(Error::InvalidParameter("warp_notes expects score notes in beats".into()));
    }
    let mut out = Vec::with_capacity(notes.len());
    for n in notes.notes() {
        let on = tau.evaluate_at(n.onset)?;
        let off = tau.evaluate_at(n.offset.min(tau.score_len()))?;
        if off > on {
            out.push(NoteEvent::new(n.pitch, on, off));
        }
    }
    NoteList::new(out, TimeAxis::PerformanceSeconds, tau.perf_len())
}
