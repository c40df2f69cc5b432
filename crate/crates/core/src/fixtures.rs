//! Deterministic synthetic scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pianoroll::{NoteEvent, NoteList, TimeAxis};

const MELODY_RANGE: (u8, u8) = (60, 84);
const BASS_RANGE: (u8, u8) = (36, 56);
const MELODY_DURATIONS: [f64; 5] = [0.5, 0.5, 1.0, 1.0, 1.5];
const BASS_DURATIONS: [f64; 3] = [1.0, 2.0, 2.0];

/// A two-voice score of `beats` beats: a melody over a slower bass line,
/// in disjoint registers. Within a voice a pitch never repeats within three
/// notes, so same-pitch onsets are at least a beat apart. Melody notes are
/// occasionally followed by a short rest.
pub fn two_voice_score(seed: u64, beats: f64) -> Result<NoteList> {
    if !(beats.is_finite() && beats >= 1.0) {
        return Err(Error::InvalidParameter(format!("fixture needs at least one beat, got {beats}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut notes = voice(&mut rng, beats, MELODY_RANGE, &MELODY_DURATIONS, 0.15);
    notes.extend(voice(&mut rng, beats, BASS_RANGE, &BASS_DURATIONS, 0.0));
    NoteList::new(notes, TimeAxis::ScoreBeats, beats)
}

fn voice(rng: &mut ChaCha8Rng, beats: f64, range: (u8, u8), durations: &[f64], rest_p: f64) -> Vec<NoteEvent> {
    let mut out = Vec::new();
    let mut recent: Vec<u8> = Vec::new();
    let mut pitch = rng.random_range(range.0..range.1);
    let mut t = 0.0;
    while t < beats {
        let d = durations[rng.random_range(0..durations.len())];
        let end = (t + d).min(beats);
        let rest = rng.random_bool(rest_p);
        // Keep the note at least a quarter beat long when there is a rest.
        let off = if rest && end - t > 0.5 { end - 0.25 } else { end };
        out.push(NoteEvent::new(pitch, t, off));
        recent.push(pitch);
        if recent.len() > 3 {
            recent.remove(0);
        }
        t = end;
        loop {
            let step: i16 = rng.random_range(-5..=5);
            let next = i16::from(pitch) + step;
            if (i16::from(range.0)..i16::from(range.1)).contains(&next) && !recent.contains(&(next as u8)) {
                pitch = next as u8;
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let a = two_voice_score(5, 40.0).unwrap();
        assert_eq!(a, two_voice_score(5, 40.0).unwrap());
        assert_ne!(a, two_voice_score(6, 40.0).unwrap());
        assert_eq!(a.duration(), 40.0);
        assert!(a.notes().iter().all(|n| n.offset <= 40.0 && n.onset < n.offset));
        assert!(a.len() > 40);
    }

    #[test]
    fn same_pitch_onsets_are_spaced() {
        for seed in 0..20 {
            let a = two_voice_score(seed, 60.0).unwrap();
            for p in 0..128u8 {
                let on: Vec<f64> = a.notes().iter().filter(|n| n.pitch == p).map(|n| n.onset).collect();
                assert!(on.windows(2).all(|w| w[1] - w[0] >= 1.0), "seed {seed} pitch {p}");
            }
        }
    }
}
