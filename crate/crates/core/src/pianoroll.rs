//! Continuous piano-rolls.
//!
//! A piano-roll is a piecewise-constant function from a half-open time
//! interval `[0, duration)` to sets of sounding pitches. It is stored by its
//! changepoints: segment `k` holds `segments[k]` on
//! `[changepoints[k], changepoints[k + 1])`, the last segment running to the
//! end of the roll. Adjacent segments always differ.
//!
//! Rolls produced by warping a score through an alignment can additionally
//! carry *instant values*: isolated times at which the roll takes a value
//! different from the surrounding segment (a stretch of score collapsed onto
//! a single performance instant). Instants have zero measure, so they never
//! contribute to [`l1_distance`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of pitches in the MIDI convention.
pub const MIDI_PITCHES: usize = 128;

/// A set of pitches, stored as a 128-bit mask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct PitchSet(u128);

impl PitchSet {
    pub const EMPTY: PitchSet = PitchSet(0);

    pub fn from_bits(bits: u128) -> Self {
        PitchSet(bits)
    }

    pub fn bits(self) -> u128 {
        self.0
    }

    pub fn insert(&mut self, pitch: u8) {
        debug_assert!((pitch as usize) < MIDI_PITCHES);
        self.0 |= 1u128 << pitch;
    }

    pub fn contains(self, pitch: u8) -> bool {
        (pitch as usize) < MIDI_PITCHES && self.0 & (1u128 << pitch) != 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: PitchSet) -> PitchSet {
        PitchSet(self.0 | other.0)
    }

    pub fn difference(self, other: PitchSet) -> PitchSet {
        PitchSet(self.0 & !other.0)
    }

    pub fn intersection(self, other: PitchSet) -> PitchSet {
        PitchSet(self.0 & other.0)
    }

    /// `‖a − b‖₁` for indicator vectors: the size of the symmetric difference.
    pub fn distance(self, other: PitchSet) -> u32 {
        (self.0 ^ other.0).count_ones()
    }

    /// Largest pitch in the set plus one, or 0 for the empty set.
    pub(crate) fn span(self) -> usize {
        MIDI_PITCHES - self.0.leading_zeros() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (0..MIDI_PITCHES as u8).filter(move |&p| self.contains(p))
    }
}

impl FromIterator<u8> for PitchSet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut set = PitchSet::EMPTY;
        for p in iter {
            set.insert(p);
        }
        set
    }
}

impl fmt::Debug for PitchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Which time axis a note list or roll lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeAxis {
    /// Score position, in beats.
    ScoreBeats,
    /// Performance time, in seconds.
    PerformanceSeconds,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset: f64,
    pub offset: f64,
}

impl NoteEvent {
    pub fn new(pitch: u8, onset: f64, offset: f64) -> Self {
        NoteEvent {
            pitch,
            onset,
            offset,
        }
    }
}

/// Note events on one time axis, sorted by `(onset, pitch)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoteList {
    notes: Vec<NoteEvent>,
    axis: TimeAxis,
    duration: f64,
}

impl NoteList {
    pub fn new(mut notes: Vec<NoteEvent>, axis: TimeAxis, duration: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "note list duration must be positive, got {duration}"
            )));
        }
        for (index, n) in notes.iter().enumerate() {
            let reason = if !(n.onset.is_finite() && n.offset.is_finite()) {
                "non-finite time"
            } else if (n.pitch as usize) >= MIDI_PITCHES {
                "pitch out of range"
            } else if n.onset < 0.0 {
                "negative onset"
            } else if n.onset >= n.offset {
                "onset not before offset"
            } else if n.onset >= duration {
                "onset at or after the end of the piece"
            } else {
                continue;
            };
            return Err(Error::InvalidNote {
                index,
                reason: reason.to_string(),
            });
        }
        notes.sort_by(|a, b| {
            a.onset
                .total_cmp(&b.onset)
                .then(a.pitch.cmp(&b.pitch))
                .then(a.offset.total_cmp(&b.offset))
        });
        Ok(NoteList {
            notes,
            axis,
            duration,
        })
    }

    /// Builds a list whose duration is the latest note offset.
    pub fn spanning(notes: Vec<NoteEvent>, axis: TimeAxis) -> Result<Self> {
        let end = notes.iter().map(|n| n.offset).fold(0.0, f64::max);
        if notes.is_empty() {
            return Err(Error::Empty("note list"));
        }
        NoteList::new(notes, axis, end)
    }

    pub fn notes(&self) -> &[NoteEvent] {
        &self.notes
    }

    pub fn axis(&self) -> TimeAxis {
        self.axis
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn onsets(&self) -> impl Iterator<Item = f64> + '_ {
        self.notes.iter().map(|n| n.onset)
    }

    /// Same notes and axis with some notes removed.
    pub fn without(&self, mut drop: impl FnMut(usize, &NoteEvent) -> bool) -> NoteList {
        let notes = self
            .notes
            .iter()
            .enumerate()
            .filter(|(i, n)| !drop(*i, n))
            .map(|(_, n)| *n)
            .collect();
        NoteList {
            notes,
            axis: self.axis,
            duration: self.duration,
        }
    }
}

/// One constant piece of a roll.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub pitches: PitchSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PianoRoll {
    duration: f64,
    n_pitches: usize,
    changepoints: Vec<f64>,
    segments: Vec<PitchSet>,
    instants: Vec<(f64, PitchSet)>,
}

impl PianoRoll {
    /// The roll that is silent everywhere.
    pub fn empty(duration: f64, n_pitches: usize) -> Result<Self> {
        Self::from_segments(duration, n_pitches, vec![(0.0, PitchSet::EMPTY)])
    }

    /// Builds a roll from `(start, pitches)` pairs. Starts must be
    /// non-decreasing and begin at 0; a later pair with the same start wins,
    /// pairs at or after `duration` are ignored, and equal neighbours merge.
    pub fn from_segments(
        duration: f64,
        n_pitches: usize,
        pieces: Vec<(f64, PitchSet)>,
    ) -> Result<Self> {
        Self::with_instants(duration, n_pitches, pieces, Vec::new())
    }

    pub(crate) fn with_instants(
        duration: f64,
        n_pitches: usize,
        pieces: Vec<(f64, PitchSet)>,
        instants: Vec<(f64, PitchSet)>,
    ) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "roll duration must be positive, got {duration}"
            )));
        }
        if n_pitches == 0 || n_pitches > MIDI_PITCHES {
            return Err(Error::InvalidParameter(format!(
                "pitch count must be in 1..={MIDI_PITCHES}, got {n_pitches}"
            )));
        }
        match pieces.first() {
            Some(&(0.0, _)) => {}
            _ => {
                return Err(Error::InvalidParameter(
                    "first segment must start at 0".into(),
                ))
            }
        }
        let mut changepoints: Vec<f64> = Vec::with_capacity(pieces.len());
        let mut segments: Vec<PitchSet> = Vec::with_capacity(pieces.len());
        for (start, set) in pieces {
            if set.span() > n_pitches {
                return Err(Error::InvalidParameter(format!(
                    "pitch set {set:?} exceeds {n_pitches} pitches"
                )));
            }
            if !start.is_finite() || start >= duration {
                continue;
            }
            if let Some(&last) = changepoints.last() {
                if start < last {
                    return Err(Error::InvalidParameter(format!(
                        "segment starts must be non-decreasing ({start} after {last})"
                    )));
                }
                if start == last {
                    segments.pop();
                    changepoints.pop();
                }
            }
            if segments.last() == Some(&set) {
                continue;
            }
            changepoints.push(start);
            segments.push(set);
        }

        let mut roll = PianoRoll {
            duration,
            n_pitches,
            changepoints,
            segments,
            instants: Vec::new(),
        };
        let mut instants: Vec<(f64, PitchSet)> = instants
            .into_iter()
            .filter(|&(t, _)| (0.0..duration).contains(&t))
            .collect();
        instants.sort_by(|a, b| a.0.total_cmp(&b.0));
        instants.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 = earlier.1.union(later.1);
                true
            } else {
                false
            }
        });
        instants.retain(|&(t, set)| roll.segments[roll.segment_index(t)] != set);
        roll.instants = instants;
        Ok(roll)
    }

    /// The roll of a note list: a pitch sounds on `[onset, offset)` of any of
    /// its notes. Overlapping notes of the same pitch merge; offsets past the
    /// end of the list are clipped.
    pub fn from_notes(notes: &NoteList) -> Self {
        Self::from_notes_with_pitches(notes, MIDI_PITCHES)
            .expect("validated note lists always form a roll")
    }

    pub fn from_notes_with_pitches(notes: &NoteList, n_pitches: usize) -> Result<Self> {
        if let Some(n) = notes.notes().iter().find(|n| n.pitch as usize >= n_pitches) {
            return Err(Error::InvalidParameter(format!(
                "pitch {} does not fit in {n_pitches} pitches",
                n.pitch
            )));
        }
        let duration = notes.duration();
        let mut events: Vec<(f64, u8, i32)> = Vec::with_capacity(2 * notes.len());
        for n in notes.notes() {
            events.push((n.onset, n.pitch, 1));
            if n.offset < duration {
                events.push((n.offset, n.pitch, -1));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut active = [0i32; MIDI_PITCHES];
        let mut pieces = vec![(0.0, PitchSet::EMPTY)];
        let mut i = 0;
        while i < events.len() {
            let time = events[i].0;
            while i < events.len() && events[i].0 == time {
                active[events[i].1 as usize] += events[i].2;
                i += 1;
            }
            let set = (0..MIDI_PITCHES as u8)
                .filter(|&p| active[p as usize] > 0)
                .collect();
            pieces.push((time, set));
        }
        Self::from_segments(duration, n_pitches, pieces)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn n_pitches(&self) -> usize {
        self.n_pitches
    }

    pub fn changepoints(&self) -> &[f64] {
        &self.changepoints
    }

    pub fn segment_sets(&self) -> &[PitchSet] {
        &self.segments
    }

    /// Isolated instant values, see the module docs.
    pub fn instants(&self) -> &[(f64, PitchSet)] {
        &self.instants
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.segments.iter().enumerate().map(move |(k, &pitches)| Segment {
            start: self.changepoints[k],
            end: self.segment_end(k),
            pitches,
        })
    }

    fn segment_end(&self, k: usize) -> f64 {
        self.changepoints
            .get(k + 1)
            .copied()
            .unwrap_or(self.duration)
    }

    /// Index of the segment containing `t` (clamped to the first segment).
    pub(crate) fn segment_index(&self, t: f64) -> usize {
        self.changepoints
            .partition_point(|&c| c <= t)
            .saturating_sub(1)
    }

    /// Index of the segment in force just before `t`.
    pub(crate) fn left_segment_index(&self, t: f64) -> usize {
        self.changepoints
            .partition_point(|&c| c < t)
            .saturating_sub(1)
    }

    /// The pitch set sounding at time `t ∈ [0, duration)`.
    pub fn sample(&self, t: f64) -> Result<PitchSet> {
        if !(0.0..self.duration).contains(&t) {
            return Err(Error::OutOfDomain {
                value: t,
                lo: 0.0,
                hi: self.duration,
                closed: false,
            });
        }
        if let Ok(k) = self.instants.binary_search_by(|(s, _)| s.total_cmp(&t)) {
            return Ok(self.instants[k].1);
        }
        Ok(self.segments[self.segment_index(t)])
    }

    /// Union of the roll over `[a, b)`, or `[a, b]` when `include_end`.
    pub(crate) fn union_over(&self, a: f64, b: f64, include_end: bool) -> PitchSet {
        let mut set = PitchSet::EMPTY;
        let first = self.segment_index(a);
        for k in first..self.segments.len() {
            let start = self.changepoints[k];
            if start > b || (start == b && !include_end) {
                break;
            }
            set = set.union(self.segments[k]);
        }
        for &(t, s) in &self.instants {
            if t >= a && (t < b || (include_end && t == b)) {
                set = set.union(s);
            }
        }
        set
    }

    /// Changepoints at which at least one pitch starts sounding.
    pub fn onset_times(&self) -> Vec<f64> {
        let mut prev = PitchSet::EMPTY;
        let mut out = Vec::new();
        for (k, &set) in self.segments.iter().enumerate() {
            if !set.difference(prev).is_empty() {
                out.push(self.changepoints[k]);
            }
            prev = set;
        }
        out
    }

    /// Time of the last onset, 0 for a silent roll.
    pub fn last_onset(&self) -> f64 {
        self.onset_times().last().copied().unwrap_or(0.0)
    }

    /// Frame-discretized roll: column `k` is the roll sampled at `k·dt`, for
    /// every `k` with `k·dt < duration`.
    pub fn frame_matrix(&self, dt: f64) -> Result<FrameMatrix> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "frame step must be positive, got {dt}"
            )));
        }
        let n_frames = frame_count(self.duration, dt);
        let columns = (0..n_frames)
            .map(|k| self.sample(k as f64 * dt))
            .collect::<Result<Vec<_>>>()?;
        Ok(FrameMatrix {
            n_pitches: self.n_pitches,
            dt,
            columns,
        })
    }
}

/// Number of frames `k ≥ 0` with `k·dt < duration`.
pub(crate) fn frame_count(duration: f64, dt: f64) -> usize {
    let mut n = (duration / dt).ceil().max(1.0) as usize;
    while n > 1 && (n - 1) as f64 * dt >= duration {
        n -= 1;
    }
    while (n as f64) * dt < duration {
        n += 1;
    }
    n
}

/// Binary `N × F` matrix of a frame-discretized roll.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMatrix {
    n_pitches: usize,
    dt: f64,
    columns: Vec<PitchSet>,
}

impl FrameMatrix {
    pub fn n_pitches(&self) -> usize {
        self.n_pitches
    }

    pub fn n_frames(&self) -> usize {
        self.columns.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn columns(&self) -> &[PitchSet] {
        &self.columns
    }

    pub fn get(&self, pitch: usize, frame: usize) -> bool {
        pitch < self.n_pitches && self.columns[frame].contains(pitch as u8)
    }
}

/// `∫₀ᵀ ‖a(t) − b(t)‖₁ dt`, unnormalized.
pub fn l1_integral(a: &PianoRoll, b: &PianoRoll) -> Result<f64> {
    if a.duration != b.duration {
        return Err(Error::DurationMismatch(a.duration, b.duration));
    }
    if a.n_pitches != b.n_pitches {
        return Err(Error::PitchCountMismatch(a.n_pitches, b.n_pitches));
    }
    let (mut i, mut j) = (0, 0);
    let mut t = 0.0;
    let mut total = 0.0;
    loop {
        let next_a = a.changepoints.get(i + 1).copied().unwrap_or(a.duration);
        let next_b = b.changepoints.get(j + 1).copied().unwrap_or(b.duration);
        let next = next_a.min(next_b);
        total += f64::from(a.segments[i].distance(b.segments[j])) * (next - t);
        if next >= a.duration {
            break;
        }
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
        t = next;
    }
    Ok(total)
}

/// Average number of differing pitches over the common duration `T`:
/// `(1/T)·∫₀ᵀ ‖a(t) − b(t)‖₁ dt`, computed exactly by sweeping both rolls'
/// changepoints.
pub fn l1_distance(a: &PianoRoll, b: &PianoRoll) -> Result<f64> {
    Ok(l1_integral(a, b)? / a.duration)
}
