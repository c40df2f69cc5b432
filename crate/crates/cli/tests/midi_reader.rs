use std::path::PathBuf;

use align_eval::midi::{ingest_midi, parse_midi, MidiIngestConfig};
use align_eval::{NoteList, PianoRoll, PitchSet, TimeAxis};

/// A deliberately small standard MIDI file reader: notes as
/// `(pitch, on, off)` in beats or seconds.
struct MiniMidi {
    ppq: u32,
    tempos: Vec<(u64, u32)>,
    spans: Vec<(u8, u64, u64)>,
}

fn be(b: &[u8]) -> u32 {
    b.iter().fold(0, |acc, &x| (acc << 8) | u32::from(x))
}

fn vlq(b: &[u8], pos: &mut usize) -> u32 {
    let mut v = 0;
    loop {
        let byte = b[*pos];
        *pos += 1;
        v = (v << 7) | u32::from(byte & 0x7f);
        if byte & 0x80 == 0 {
            return v;
        }
    }
}

fn read(bytes: &[u8]) -> MiniMidi {
    assert_eq!(&bytes[0..4], b"MThd");
    let ntracks = be(&bytes[10..12]);
    let ppq = be(&bytes[12..14]);
    let mut pos = 8 + be(&bytes[4..8]) as usize;
    let mut tempos = Vec::new();
    let mut events: Vec<(u64, u8, u8, bool)> = Vec::new(); // tick, order, pitch, on
    let mut last = 0u64;
    for _ in 0..ntracks {
        assert_eq!(&bytes[pos..pos + 4], b"MTrk");
        let len = be(&bytes[pos + 4..pos + 8]) as usize;
        let end = pos + 8 + len;
        pos += 8;
        let (mut tick, mut status) = (0u64, 0u8);
        while pos < end {
            tick += u64::from(vlq(bytes, &mut pos));
            if bytes[pos] & 0x80 != 0 {
                status = bytes[pos];
                pos += 1;
            }
            match status {
                0xff => {
                    let kind = bytes[pos];
                    pos += 1;
                    let n = vlq(bytes, &mut pos) as usize;
                    if kind == 0x51 {
                        tempos.push((tick, be(&bytes[pos..pos + 3])));
                    }
                    pos += n;
                }
                0xf0 | 0xf7 => {
                    let n = vlq(bytes, &mut pos) as usize;
                    pos += n;
                }
                s => {
                    let (a, b) = (bytes[pos], bytes.get(pos + 1).copied().unwrap_or(0));
                    let two = !matches!(s & 0xf0, 0xc0 | 0xd0);
                    pos += if two { 2 } else { 1 };
                    match s & 0xf0 {
                        0x90 if b > 0 => events.push((tick, 1, a, true)),
                        0x90 | 0x80 => events.push((tick, 0, a, false)),
                        _ => {}
                    }
                }
            }
        }
        last = last.max(tick);
        pos = end;
    }
    events.sort_by_key(|e| (e.0, e.1));
    let mut open: Vec<Vec<u64>> = vec![Vec::new(); 128];
    let mut spans = Vec::new();
    for (tick, _, pitch, on) in events {
        let q = &mut open[pitch as usize];
        if on {
            q.push(tick);
        } else if !q.is_empty() {
            spans.push((pitch, q.remove(0), tick));
        }
    }
    for (p, q) in open.iter().enumerate() {
        spans.extend(q.iter().map(|&on| (p as u8, on, last)));
    }
    spans.retain(|s| s.2 > s.1);
    tempos.sort_by_key(|t| t.0);
    MiniMidi { ppq, tempos, spans }
}

impl MiniMidi {
    fn seconds(&self, tick: u64) -> f64 {
        let (mut t, mut at, mut us) = (0.0, 0u64, 500_000u32);
        for &(when, tempo) in self.tempos.iter().take_while(|x| x.0 <= tick) {
            t += (when - at) as f64 * f64::from(us) / 1e6 / f64::from(self.ppq);
            at = when;
            us = tempo;
        }
        t + (tick - at) as f64 * f64::from(us) / 1e6 / f64::from(self.ppq)
    }

    fn notes(&self, axis: TimeAxis) -> Vec<(u8, f64, f64)> {
        let time = |tick: u64| match axis {
            TimeAxis::ScoreBeats => tick as f64 / f64::from(self.ppq),
            TimeAxis::PerformanceSeconds => self.seconds(tick),
        };
        let mut v: Vec<_> = self.spans.iter().map(|&(p, a, b)| (p, time(a), time(b))).collect();
        v.sort_by(|x, y| (x.1, x.0, x.2).partial_cmp(&(y.1, y.0, y.2)).unwrap());
        v
    }
}

fn compare(list: &NoteList, mini: &MiniMidi, axis: TimeAxis) {
    let expected = mini.notes(axis);
    let mut got: Vec<_> = list.notes().iter().map(|n| (n.pitch, n.onset, n.offset)).collect();
    got.sort_by(|x, y| (x.1, x.0, x.2).partial_cmp(&(y.1, y.0, y.2)).unwrap());
    assert_eq!(got.len(), expected.len());
    for (g, e) in got.iter().zip(&expected) {
        assert_eq!(g.0, e.0);
        assert!((g.1 - e.1).abs() < 1e-9 && (g.2 - e.2).abs() < 1e-9, "{g:?} vs {e:?}");
    }
    // frame sampling at a step that avoids the tick grid
    let dt = 0.0137;
    let frames = PianoRoll::from_notes(list).frame_matrix(dt).unwrap();
    for (k, col) in frames.columns().iter().enumerate() {
        let t = k as f64 * dt;
        let oracle: PitchSet = expected.iter().filter(|n| n.1 <= t && t < n.2).map(|n| n.0).collect();
        assert_eq!(*col, oracle, "frame {k}");
    }
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[test]
fn bundled_fixtures_agree_with_minimal_reader() {
    for pair in ["pair_a", "pair_b"] {
        let dir = fixtures().join(pair);
        let score = dir.join("score.mid");
        let transcript = dir.join("transcript.mid");
        let mini = read(&std::fs::read(&score).unwrap());
        compare(&ingest_midi(&score, &MidiIngestConfig::score()).unwrap(), &mini, TimeAxis::ScoreBeats);
        let mini = read(&std::fs::read(&transcript).unwrap());
        compare(
            &ingest_midi(&transcript, &MidiIngestConfig::performance()).unwrap(),
            &mini,
            TimeAxis::PerformanceSeconds,
        );
    }
}

fn track(body: &[u8]) -> Vec<u8> {
    let mut t = b"MTrk".to_vec();
    t.extend((body.len() as u32).to_be_bytes());
    t.extend(body);
    t
}

#[test]
fn hand_assembled_file_agrees_with_minimal_reader() {
    let mut bytes = b"MThd".to_vec();
    bytes.extend([0, 0, 0, 6, 0, 1, 0, 2, 0, 96]);
    // tempo track: 0.5 s/beat, then 0.25 s/beat from tick 192
    bytes.extend(track(&[
        0x00, 0xff, 0x51, 0x03, 0x07, 0xa1, 0x20, //
        0x81, 0x40, 0xff, 0x51, 0x03, 0x03, 0xd0, 0x90, //
        0x00, 0xff, 0x2f, 0x00,
    ]));
    bytes.extend(track(&[
        0x00, 0xf0, 0x02, 0x7e, 0xf7, // sysex
        0x00, 0x90, 60, 90, // on
        0x00, 64, 80, // running status on
        0x60, 60, 0, // velocity-0 off
        0x30, 0x80, 64, 40, // explicit off
        0x00, 0xc0, 5, // program change
        0x00, 0x90, 67, 100, //
        0x81, 0x48, 67, 0, //
        0x10, 0x90, 72, 70, // left open
        0x20, 0xff, 0x2f, 0x00,
    ]));
    let mini = read(&bytes);
    assert_eq!(mini.spans.len(), 4);
    compare(&parse_midi(&bytes, &MidiIngestConfig::score()).unwrap(), &mini, TimeAxis::ScoreBeats);
    compare(
        &parse_midi(&bytes, &MidiIngestConfig::performance()).unwrap(),
        &mini,
        TimeAxis::PerformanceSeconds,
    );
}
