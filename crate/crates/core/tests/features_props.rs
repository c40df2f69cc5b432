mod common;

use align_eval::features::{
    align_baseline, cost_matrix, feature_dtw, featurize, synthesize, CostMatrix,
    DEFAULT_SAMPLE_RATE,
};
use align_eval::fixtures::two_voice_score;
use align_eval::metrics::temporal_mad;
use align_eval::warp::{synthetic_warp, warp_notes};
use align_eval::{AlignmentFn, FeatureKind, NoteEvent, NoteList, PianoRoll, TimeAxis, WarpKind};
use common::*;
use rand::Rng;

const SR: u32 = DEFAULT_SAMPLE_RATE;

fn perf(notes: &NoteList) -> align_eval::Waveform {
    synthesize(notes, SR).unwrap()
}

fn in_seconds(score: &NoteList, spb: f64) -> NoteList {
    let notes = score.notes().iter().map(|n| NoteEvent::new(n.pitch, n.onset * spb, n.offset * spb)).collect();
    NoteList::new(notes, TimeAxis::PerformanceSeconds, score.duration() * spb).unwrap()
}

#[test]
fn featurization_is_deterministic() {
    let score = two_voice_score(4, 8.0).unwrap();
    let w = perf(&in_seconds(&score, 0.5));
    for kind in FeatureKind::ALL {
        let (a, b) = (featurize(&w, kind).unwrap(), featurize(&w, kind).unwrap());
        let bits = |f: &align_eval::features::FeatureSequence| f.frames().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b), "{kind}");
    }
    let a = align_baseline(&score, 0.5, &w, FeatureKind::LogChroma).unwrap();
    let b = align_baseline(&score, 0.5, &w, FeatureKind::LogChroma).unwrap();
    assert_eq!(a, b);
}

fn brute_min(c: &CostMatrix, i: usize, j: usize) -> f64 {
    let here = c.get(i, j);
    if (i, j) == (c.rows() - 1, c.cols() - 1) {
        return here;
    }
    let mut best = f64::INFINITY;
    if i + 1 < c.rows() && j + 1 < c.cols() {
        best = best.min(brute_min(c, i + 1, j + 1));
    }
    if i + 1 < c.rows() {
        best = best.min(brute_min(c, i + 1, j));
    }
    if j + 1 < c.cols() {
        best = best.min(brute_min(c, i, j + 1));
    }
    here + best
}

#[test]
fn dtw_is_optimal_and_scale_invariant() {
    let mut r = rng(31);
    for _ in 0..30 {
        let (n, m) = (r.random_range(1..=8), r.random_range(1..=8));
        let data: Vec<f64> = (0..n * m).map(|_| r.random_range(0.0..2.0)).collect();
        let c = CostMatrix::from_rows(n, m, data).unwrap();
        let path = feature_dtw(&c).unwrap();
        assert!((c.path_cost(&path) - brute_min(&c, 0, 0)).abs() < 1e-9);
        for k in [0.001, 0.5, 3.0, 1e6] {
            assert_eq!(feature_dtw(&c.scaled(k)).unwrap(), path);
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap()
}

// Bins are 5.4 Hz wide, so below about E2 a partial's main lobe straddles
// several semitones and the fold is no longer reliable.
#[test]
fn chroma_peaks_at_the_pitch_class_in_every_octave() {
    for pitch in 40u8..=96 {
        let notes = NoteList::new(vec![NoteEvent::new(pitch, 0.0, 1.0)], TimeAxis::PerformanceSeconds, 1.0).unwrap();
        let c = featurize(&perf(&notes), FeatureKind::LogChroma).unwrap();
        // frames whose window lies inside the note
        for f in 16..c.n_frames() - 20 {
            assert_eq!(argmax(c.frame(f)), usize::from(pitch % 12), "pitch {pitch} frame {f}");
            assert!((c.frame(f).iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn self_alignment_and_double_tempo() {
    let score = two_voice_score(5, 16.0).unwrap();
    let roll = PianoRoll::from_notes(&score);
    let same = perf(&in_seconds(&score, 0.5));
    let a = align_baseline(&score, 0.5, &same, FeatureKind::LogChroma).unwrap();
    let identity = AlignmentFn::linear(16.0, 8.0).unwrap();
    assert!(temporal_mad(&a, &identity, &roll).unwrap() <= 23.2);

    let fast = perf(&in_seconds(&score, 0.25));
    let a = align_baseline(&score, 0.5, &fast, FeatureKind::LogChroma).unwrap();
    let slope = (a.evaluate_at(12.0).unwrap() - a.evaluate_at(4.0).unwrap()) / 8.0 / 0.5;
    assert!((slope - 0.5).abs() <= 0.025, "slope ratio {slope}");
}

#[test]
fn chroma_recovers_a_known_piecewise_warp() {
    let score = two_voice_score(6, 60.0).unwrap();
    let tau = synthetic_warp(WarpKind::Piecewise, 6, 60.0, 30.0).unwrap();
    let w = perf(&warp_notes(&tau, &score).unwrap());
    let a = align_baseline(&score, 0.5, &w, FeatureKind::LogChroma).unwrap();
    let mad = temporal_mad(&a, &tau, &PianoRoll::from_notes(&score)).unwrap();
    assert!(mad <= 50.0, "MAD {mad} ms");
}

#[test]
fn cost_matrix_is_scale_free_in_features() {
    let score = two_voice_score(7, 4.0).unwrap();
    let w = perf(&in_seconds(&score, 0.5));
    let f = featurize(&w, FeatureKind::Cqt).unwrap();
    let c = cost_matrix(&f, &f).unwrap();
    for i in 0..c.rows() {
        assert!(c.get(i, i).abs() < 1e-9);
    }
}
