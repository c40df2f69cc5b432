//! Standard MIDI File ingestion and export.
//!
//! All tracks are merged into one note stream and channels are ignored.
//! Score files are read in beats (`ticks / PPQ`, tempo events ignored);
//! performance files are read in seconds through the tempo map.

use std::path::Path;

use midly::num::{u15, u24, u28, u4, u7};
use midly::{Format, Header, MetaMessage, MidiMessage, Smf, Timing, TrackEvent, TrackEventKind};

use crate::error::{Error, Result};
use crate::pianoroll::{NoteEvent, NoteList, TimeAxis};

/// Microseconds per quarter note before the first tempo event.
pub const DEFAULT_TEMPO_US: u32 = 500_000;

const SUSTAIN_CC: u8 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PedalMode {
    /// Sustain pedal events are dropped.
    #[default]
    Ignore,
    /// A note released while the sustain pedal is down keeps sounding until
    /// the pedal is lifted or the same key is struck again.
    Extend,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MidiIngestConfig {
    pub axis: TimeAxis,
    pub pedal_mode: PedalMode,
    /// Kept pitches, `low..high`.
    pub pitch_range: (u8, u8),
}

impl MidiIngestConfig {
    pub fn score() -> Self {
        MidiIngestConfig {
            axis: TimeAxis::ScoreBeats,
            pedal_mode: PedalMode::Ignore,
            pitch_range: (0, 128),
        }
    }

    pub fn performance() -> Self {
        MidiIngestConfig {
            axis: TimeAxis::PerformanceSeconds,
            ..Self::score()
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.pitch_range;
        if lo >= hi || hi > 128 {
            return Err(Error::InvalidParameter(format!("bad pitch range [{lo}, {hi})")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    // Order matters: at equal ticks, releases come before pedal changes,
    // which come before new notes.
    Off(u8),
    Pedal(bool),
    On(u8),
}

#[derive(Clone, Copy, Debug)]
struct Event {
    tick: u64,
    kind: Kind,
}

/// Piecewise-linear tick-to-seconds conversion.
#[derive(Clone, Debug)]
struct TempoMap {
    ppq: f64,
    // (tick, seconds at tick, microseconds per quarter from tick on)
    points: Vec<(u64, f64, u32)>,
}

impl TempoMap {
    fn new(ppq: u16, mut changes: Vec<(u64, u32)>) -> Self {
        changes.sort_by_key(|c| c.0);
        let ppq = f64::from(ppq);
        let mut points = vec![(0u64, 0.0, DEFAULT_TEMPO_US)];
        for (tick, tempo) in changes {
            let &(t0, sec0, us0) = points.last().unwrap();
            let sec = sec0 + (tick - t0) as f64 * f64::from(us0) / (1e6 * ppq);
            if tick == t0 {
                // A later event at the same tick wins.
                *points.last_mut().unwrap() = (tick, sec0, tempo);
            } else {
                points.push((tick, sec, tempo));
            }
        }
        TempoMap { ppq, points }
    }

    fn seconds(&self, tick: u64) -> f64 {
        let k = self.points.partition_point(|p| p.0 <= tick) - 1;
        let (t0, sec0, us) = self.points[k];
        sec0 + (tick - t0) as f64 * f64::from(us) / (1e6 * self.ppq)
    }
}

/// Reads a Standard MIDI File into a note list on `cfg.axis`. The list's
/// duration is the latest note offset.
pub fn ingest_midi(path: impl AsRef<Path>, cfg: &MidiIngestConfig) -> Result<NoteList> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_midi(&bytes, cfg)
}

/// [`ingest_midi`] on an in-memory file.
pub fn parse_midi(bytes: &[u8], cfg: &MidiIngestConfig) -> Result<NoteList> {
    cfg.validate()?;
    let smf = Smf::parse(bytes).map_err(|e| Error::Midi(e.to_string()))?;
    let ppq = match smf.header.timing {
        Timing::Metrical(t) => t.as_int(),
        Timing::Timecode(..) => return Err(Error::Midi("SMPTE time division is not supported".into())),
    };
    if ppq == 0 {
        return Err(Error::Midi("division of zero ticks per quarter".into()));
    }

    let mut events = Vec::new();
    let mut tempos = Vec::new();
    let mut last_tick = 0u64;
    for track in &smf.tracks {
        let mut tick = 0u64;
        for ev in track {
            tick += u64::from(ev.delta.as_int());
            let kind = match ev.kind {
                TrackEventKind::Meta(MetaMessage::Tempo(us)) => {
                    tempos.push((tick, us.as_int()));
                    continue;
                }
                TrackEventKind::Midi { message, .. } => match message {
                    MidiMessage::NoteOn { key, vel } if vel.as_int() > 0 => Kind::On(key.as_int()),
                    MidiMessage::NoteOn { key, .. } | MidiMessage::NoteOff { key, .. } => Kind::Off(key.as_int()),
                    MidiMessage::Controller { controller, value } if controller.as_int() == SUSTAIN_CC => {
                        Kind::Pedal(value.as_int() >= 64)
                    }
                    _ => continue,
                },
                _ => continue,
            };
            events.push(Event { tick, kind });
        }
        last_tick = last_tick.max(tick);
    }
    // Stable: equal (tick, kind) keep file order.
    events.sort_by_key(|e| (e.tick, e.kind));

    let tempo = TempoMap::new(ppq, tempos);
    let to_time = |tick: u64| match cfg.axis {
        TimeAxis::ScoreBeats => tick as f64 / f64::from(ppq),
        TimeAxis::PerformanceSeconds => tempo.seconds(tick),
    };

    let spans = note_spans(&events, cfg.pedal_mode, last_tick);
    let (lo, hi) = cfg.pitch_range;
    let notes: Vec<NoteEvent> = spans
        .into_iter()
        .filter(|&(pitch, on, off)| pitch >= lo && u16::from(pitch) < u16::from(hi) && off > on)
        .map(|(pitch, on, off)| NoteEvent::new(pitch, to_time(on), to_time(off)))
        .collect();
    if notes.is_empty() {
        return Err(Error::Empty("MIDI file has no notes"));
    }
    NoteList::spanning(notes, cfg.axis)
}

/// Pairs note-ons with releases, in ticks. A release closes the earliest
/// open note of its key. Notes still open at the end close at `end_tick`.
fn note_spans(events: &[Event], pedal: PedalMode, end_tick: u64) -> Vec<(u8, u64, u64)> {
    let mut open: Vec<Vec<u64>> = vec![Vec::new(); 128];
    let mut sustained: Vec<Vec<u64>> = vec![Vec::new(); 128];
    let mut pedal_down = false;
    let mut spans = Vec::new();
    for e in events {
        match e.kind {
            Kind::On(key) => {
                let k = key as usize;
                for on in sustained[k].drain(..) {
                    spans.push((key, on, e.tick));
                }
                open[k].push(e.tick);
            }
            Kind::Off(key) => {
                let k = key as usize;
                if open[k].is_empty() {
                    continue;
                }
                let on = open[k].remove(0);
                if pedal == PedalMode::Extend && pedal_down {
                    sustained[k].push(on);
                } else {
                    spans.push((key, on, e.tick));
                }
            }
            Kind::Pedal(down) => {
                if pedal_down && !down {
                    for (k, held) in sustained.iter_mut().enumerate() {
                        for on in held.drain(..) {
                            spans.push((k as u8, on, e.tick));
                        }
                    }
                }
                pedal_down = down;
            }
        }
    }
    for k in 0..128 {
        for &on in open[k].iter().chain(&sustained[k]) {
            spans.push((k as u8, on, end_tick));
        }
    }
    spans
}

/// Ticks per quarter note used when writing score files.
pub const SCORE_PPQ: u16 = 480;
/// Ticks per quarter note used when writing performance files; with a tempo
/// of one second per quarter, one tick is one millisecond.
pub const PERFORMANCE_PPQ: u16 = 1000;
const PERFORMANCE_TEMPO_US: u32 = 1_000_000;
const VELOCITY: u8 = 80;

/// Encodes notes as a single-track MIDI file. Score lists are quantized to
/// 1/480 beat, performance lists to 1 ms.
pub fn encode_midi(notes: &NoteList) -> Result<Vec<u8>> {
    let (ppq, tempo, scale) = match notes.axis() {
        TimeAxis::ScoreBeats => (SCORE_PPQ, DEFAULT_TEMPO_US, f64::from(SCORE_PPQ)),
        TimeAxis::PerformanceSeconds => (PERFORMANCE_PPQ, PERFORMANCE_TEMPO_US, f64::from(PERFORMANCE_PPQ)),
    };
    let to_tick = |x: f64| (x * scale).round() as u64;

    // (tick, is_on, key); offs sort before ons at the same tick.
    let mut raw: Vec<(u64, bool, u8)> = Vec::with_capacity(2 * notes.len());
    for n in notes.notes() {
        let (on, off) = (to_tick(n.onset), to_tick(n.offset));
        if off <= on {
            continue;
        }
        raw.push((on, true, n.pitch));
        raw.push((off, false, n.pitch));
    }
    raw.sort();

    let too_long = || Error::Midi("note list too long for a MIDI delta time".into());
    let mut track = vec![TrackEvent {
        delta: u28::new(0),
        kind: TrackEventKind::Meta(MetaMessage::Tempo(u24::new(tempo))),
    }];
    let mut prev = 0u64;
    for (tick, on, key) in raw {
        let delta = u32::try_from(tick - prev).ok().and_then(u28::try_from).ok_or_else(too_long)?;
        prev = tick;
        let message = if on {
            MidiMessage::NoteOn {
                key: u7::new(key),
                vel: u7::new(VELOCITY),
            }
        } else {
            MidiMessage::NoteOff {
                key: u7::new(key),
                vel: u7::new(0),
            }
        };
        track.push(TrackEvent {
            delta,
            kind: TrackEventKind::Midi {
                channel: u4::new(0),
                message,
            },
        });
    }
    track.push(TrackEvent {
        delta: u28::new(0),
        kind: TrackEventKind::Meta(MetaMessage::EndOfTrack),
    });

    let mut smf = Smf::new(Header::new(Format::SingleTrack, Timing::Metrical(u15::new(ppq))));
    smf.tracks.push(track);
    let mut out = Vec::new();
    smf.write_std(&mut out).map_err(|e| Error::Midi(e.to_string()))?;
    Ok(out)
}

/// Writes [`encode_midi`]'s output atomically.
pub fn write_midi(path: impl AsRef<Path>, notes: &NoteList) -> Result<()> {
    crate::io::write_atomic(path, &encode_midi(notes)?)
}
