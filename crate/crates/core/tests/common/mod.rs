#![allow(dead_code)]

use align_eval::{AlignmentFn, Knot, NoteEvent, NoteList, PianoRoll, TimeAxis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Right-continuous piecewise-linear evaluation of raw knots, written
/// without the library's lookup.
pub fn eval_knots(knots: &[(f64, f64)], s: f64) -> f64 {
    let mut k = 0;
    for (i, &(ks, _)) in knots.iter().enumerate() {
        if ks <= s {
            k = i;
        }
    }
    if k + 1 == knots.len() {
        return knots[k].1;
    }
    let (s0, t0) = knots[k];
    let (s1, t1) = knots[k + 1];
    t0 + (t1 - t0) * (s - s0) / (s1 - s0)
}

pub fn raw_knots(a: &AlignmentFn) -> Vec<(f64, f64)> {
    a.knots().iter().map(|k| (k.s, k.t)).collect()
}

/// Random notes on a grid of `step`, so changepoints coincide often.
pub fn random_notes(r: &mut ChaCha8Rng, axis: TimeAxis, duration: f64, n: usize, step: f64, pitches: (u8, u8)) -> NoteList {
    let slots = (duration / step).round() as usize;
    let notes = (0..n)
        .map(|_| {
            let a = r.random_range(0..slots);
            let b = r.random_range(a + 1..=slots);
            NoteEvent::new(r.random_range(pitches.0..pitches.1), a as f64 * step, b as f64 * step)
        })
        .collect();
    NoteList::new(notes, axis, duration).unwrap()
}

pub fn random_roll(r: &mut ChaCha8Rng, duration: f64, n: usize) -> PianoRoll {
    let step = if r.random_bool(0.5) { 0.125 } else { 0.01 };
    PianoRoll::from_notes(&random_notes(r, TimeAxis::PerformanceSeconds, duration, n, step, (55, 75)))
}

/// Random monotone alignment with occasional jumps and flat stretches.
pub fn random_alignment(r: &mut ChaCha8Rng, score_len: f64, perf_len: f64, n: usize) -> AlignmentFn {
    let mut s: Vec<f64> = (0..n).map(|_| r.random_range(0.0..score_len)).collect();
    let mut t: Vec<f64> = (0..n).map(|_| r.random_range(0.0..perf_len)).collect();
    s.sort_by(f64::total_cmp);
    t.sort_by(f64::total_cmp);
    let mut knots = vec![Knot::new(0.0, 0.0)];
    for k in 0..n {
        let prev = *knots.last().unwrap();
        let kind = r.random_range(0..10);
        let (sk, tk) = match kind {
            0 => (prev.s, t[k].max(prev.t)), // jump
            1 => (s[k].max(prev.s), prev.t), // flat
            _ => (s[k].max(prev.s), t[k].max(prev.t)),
        };
        knots.push(Knot::new(sk, tk));
    }
    knots.push(Knot::new(score_len, perf_len));
    AlignmentFn::new(knots, score_len, perf_len).unwrap()
}

/// Midpoint-rule integral of `f` over `[0, end]` with step about `ds`.
pub fn midpoint(end: f64, ds: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = (end / ds).ceil() as usize;
    let h = end / n as f64;
    (0..n).map(|k| f((k as f64 + 0.5) * h)).sum::<f64>() * h
}
