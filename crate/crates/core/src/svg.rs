//! SVG renderings: stacked piano-roll comparisons and metric scatter plots.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::metrics::pearson;
use crate::pianoroll::PianoRoll;

const WIDTH: f64 = 960.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 16.0;
const PANEL_GAP: f64 = 36.0;
const PITCH_HEIGHT: f64 = 4.0;
const MIN_PANEL_HEIGHT: f64 = 96.0;

const NOTE_FILL: &str = "#3a5a8c";
const BOTH_FILL: &str = "#b8b8b8";
const PSCORE_ONLY_FILL: &str = "#d62728";
const TRANSCRIPT_ONLY_FILL: &str = "#f2c500";

/// Which rolls sound a pitch over a region of the difference panel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Presence {
    Both,
    PscoreOnly,
    TranscriptOnly,
}

impl Presence {
    fn class(self) -> &'static str {
        match self {
            Presence::Both => "both",
            Presence::PscoreOnly => "pscore-only",
            Presence::TranscriptOnly => "transcript-only",
        }
    }

    fn fill(self) -> &'static str {
        match self {
            Presence::Both => BOTH_FILL,
            Presence::PscoreOnly => PSCORE_ONLY_FILL,
            Presence::TranscriptOnly => TRANSCRIPT_ONLY_FILL,
        }
    }
}

/// A maximal time interval over which one pitch keeps the same presence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub pitch: u8,
    pub start: f64,
    pub end: f64,
    pub presence: Presence,
}

/// Sweeps both rolls' changepoints and returns, for every pitch, the
/// maximal intervals of constant nonempty presence. Zero-measure instants
/// are ignored.
pub fn difference_regions(pscore: &PianoRoll, transcript: &PianoRoll) -> Result<Vec<Region>> {
    if pscore.duration() != transcript.duration() {
        return Err(Error::DurationMismatch(pscore.duration(), transcript.duration()));
    }
    let mut cuts: Vec<f64> = pscore
        .changepoints()
        .iter()
        .chain(transcript.changepoints())
        .copied()
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let end = pscore.duration();

    let mut open: [Option<(f64, Presence)>; 128] = [None; 128];
    let mut regions = Vec::new();
    for &t in &cuts {
        let a = pscore.sample(t)?;
        let b = transcript.sample(t)?;
        for pitch in 0..128u8 {
            let now = match (a.contains(pitch), b.contains(pitch)) {
                (true, true) => Some(Presence::Both),
                (true, false) => Some(Presence::PscoreOnly),
                (false, true) => Some(Presence::TranscriptOnly),
                (false, false) => None,
            };
            let slot = &mut open[pitch as usize];
            if slot.map(|o| o.1) != now {
                if let Some((start, presence)) = slot.take() {
                    regions.push(Region {
                        pitch,
                        start,
                        end: t,
                        presence,
                    });
                }
                *slot = now.map(|p| (t, p));
            }
        }
    }
    for (pitch, slot) in open.iter().enumerate() {
        if let Some((start, presence)) = *slot {
            regions.push(Region {
                pitch: pitch as u8,
                start,
                end,
                presence,
            });
        }
    }
    regions.sort_by(|x, y| x.pitch.cmp(&y.pitch).then(x.start.total_cmp(&y.start)));
    Ok(regions)
}

/// Maximal `(pitch, start, end)` intervals of one roll.
fn note_regions(roll: &PianoRoll) -> Vec<(u8, f64, f64)> {
    let mut open: [Option<f64>; 128] = [None; 128];
    let mut out = Vec::new();
    for seg in roll.segments() {
        for pitch in 0..128u8 {
            let on = seg.pitches.contains(pitch);
            let slot = &mut open[pitch as usize];
            match (*slot, on) {
                (None, true) => *slot = Some(seg.start),
                (Some(start), false) => {
                    out.push((pitch, start, seg.start));
                    *slot = None;
                }
                _ => {}
            }
        }
    }
    for (pitch, slot) in open.iter().enumerate() {
        if let Some(start) = *slot {
            out.push((pitch as u8, start, roll.duration()));
        }
    }
    out
}

struct Panel {
    top: f64,
    height: f64,
    lo: u8,
    hi: u8,
    duration: f64,
}

impl Panel {
    fn x(&self, t: f64) -> f64 {
        MARGIN_LEFT + t / self.duration * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, pitch: u8) -> f64 {
        self.top + f64::from(self.hi - pitch) * PITCH_HEIGHT
    }

    fn rect(&self, svg: &mut String, class: &str, fill: &str, pitch: u8, start: f64, end: f64) {
        let (x0, x1) = (self.x(start), self.x(end));
        let _ = writeln!(
            svg,
            r#"<rect class="{class}" x="{x0:.3}" y="{:.3}" width="{:.3}" height="{PITCH_HEIGHT}" fill="{fill}"/>"#,
            self.y(pitch),
            (x1 - x0).max(0.5)
        );
    }

    fn frame(&self, svg: &mut String, title: &str) {
        let right = WIDTH - MARGIN_RIGHT;
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN_LEFT}" y="{:.1}" font-size="13">{}</text>"#,
            self.top - 6.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r##"<rect class="frame" x="{MARGIN_LEFT}" y="{:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="#444"/>"##,
            self.top,
            right - MARGIN_LEFT,
            self.height
        );
        // Pitch labels on every C.
        for pitch in self.lo..=self.hi {
            if pitch % 12 == 0 {
                let y = self.y(pitch) + PITCH_HEIGHT;
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.1}" y="{y:.1}" font-size="9" text-anchor="end">{pitch}</text>"#,
                    MARGIN_LEFT - 4.0
                );
                let _ = writeln!(
                    svg,
                    r##"<line x1="{MARGIN_LEFT}" y1="{y:.3}" x2="{right}" y2="{y:.3}" stroke="#eee"/>"##
                );
            }
        }
        let bottom = self.top + self.height;
        for t in ticks(self.duration) {
            let x = self.x(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.3}" y1="{bottom:.3}" x2="{x:.3}" y2="{:.3}" stroke="#444"/>"##,
                bottom + 4.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{x:.3}" y="{:.1}" font-size="9" text-anchor="middle">{}</text>"#,
                bottom + 14.0,
                fmt_tick(t)
            );
        }
    }
}

/// About six round tick positions covering `[0, len]`.
fn ticks(len: f64) -> Vec<f64> {
    if !(len.is_finite() && len > 0.0) {
        return vec![0.0];
    }
    let raw = len / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    (0..)
        .map(|k| k as f64 * step)
        .take_while(|t| *t <= len * (1.0 + 1e-9))
        .collect()
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Three stacked panels (transcript, pscore, difference) on a common time
/// axis in seconds. In the difference panel, regions sounded by both rolls
/// are grey, by the pscore only red, by the transcript only yellow.
pub fn comparison_svg(pscore: &PianoRoll, transcript: &PianoRoll) -> Result<String> {
    let regions = difference_regions(pscore, transcript)?;
    let (lo, hi) = regions
        .iter()
        .fold((u8::MAX, 0u8), |(lo, hi), r| (lo.min(r.pitch), hi.max(r.pitch)));
    let (lo, hi) = if regions.is_empty() {
        (60, 72)
    } else {
        (lo.saturating_sub(2), hi.saturating_add(2).min(127))
    };
    let height = (f64::from(hi - lo + 1) * PITCH_HEIGHT).max(MIN_PANEL_HEIGHT);
    let duration = pscore.duration();
    let panel = |k: usize| Panel {
        top: 28.0 + k as f64 * (height + PANEL_GAP),
        height,
        lo,
        hi: lo + ((height / PITCH_HEIGHT) as u8).saturating_sub(1).min(127 - lo),
        duration,
    };
    let total_height = 28.0 + 3.0 * (height + PANEL_GAP) + 8.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{total_height:.0}" viewBox="0 0 {WIDTH} {total_height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let p = panel(0);
    p.frame(&mut svg, "transcript");
    for (pitch, a, b) in note_regions(transcript) {
        p.rect(&mut svg, "note", NOTE_FILL, pitch, a, b);
    }
    let p = panel(1);
    p.frame(&mut svg, "performance-aligned score");
    for (pitch, a, b) in note_regions(pscore) {
        p.rect(&mut svg, "note", NOTE_FILL, pitch, a, b);
    }
    let p = panel(2);
    p.frame(&mut svg, "difference (red: score only, yellow: performed only)");
    for r in &regions {
        p.rect(&mut svg, r.presence.class(), r.presence.fill(), r.pitch, r.start, r.end);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">time (s)</text>"#,
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        total_height - 4.0
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_comparison_svg(pscore: &PianoRoll, transcript: &PianoRoll, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, comparison_svg(pscore, transcript)?.as_bytes())
}

/// Labels for a scatter plot.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterLabels {
    pub title: String,
    pub x: String,
    pub y: String,
}

impl Default for ScatterLabels {
    fn default() -> Self {
        ScatterLabels {
            title: String::new(),
            x: "x".into(),
            y: "y".into(),
        }
    }
}

const SCATTER_SIZE: f64 = 520.0;
const SCATTER_MARGIN: f64 = 60.0;

/// A square scatter plot with a dashed diagonal. The title carries the
/// Pearson correlation unless it is undefined (fewer than two points or
/// zero variance). `point_labels`, when non-empty, become marker tooltips.
pub fn scatter_svg(xs: &[f64], ys: &[f64], point_labels: &[String], labels: &ScatterLabels) -> Result<String> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if !point_labels.is_empty() && point_labels.len() != xs.len() {
        return Err(Error::LengthMismatch(xs.len(), point_labels.len()));
    }
    let finite = |v: &f64| v.is_finite();
    let lo = xs.iter().chain(ys).copied().filter(finite).fold(f64::INFINITY, f64::min);
    let hi = xs.iter().chain(ys).copied().filter(finite).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo.min(0.0), hi + 0.05 * (hi - lo.min(0.0)))
    } else if lo.is_finite() {
        (lo.min(0.0), lo.max(0.0) + 1.0)
    } else {
        (0.0, 1.0)
    };
    let plot = SCATTER_SIZE - 2.0 * SCATTER_MARGIN;
    let px = |v: f64| SCATTER_MARGIN + (v - lo) / (hi - lo) * plot;
    let py = |v: f64| SCATTER_SIZE - SCATTER_MARGIN - (v - lo) / (hi - lo) * plot;

    let title = match pearson(xs, ys) {
        Ok(r) if labels.title.is_empty() => format!("r = {r:.3}"),
        Ok(r) => format!("{} (r = {r:.3})", labels.title),
        Err(_) => labels.title.clone(),
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SCATTER_SIZE}" height="{SCATTER_SIZE}" viewBox="0 0 {SCATTER_SIZE} {SCATTER_SIZE}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text class="title" x="{:.1}" y="28" font-size="15" text-anchor="middle">{}</text>"#,
        SCATTER_SIZE / 2.0,
        escape(&title)
    );
    let (x0, x1, y0, y1) = (px(lo), px(hi), py(lo), py(hi));
    let _ = writeln!(
        svg,
        r##"<rect class="frame" x="{x0:.3}" y="{y1:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="#444"/>"##,
        x1 - x0,
        y0 - y1
    );
    let _ = writeln!(
        svg,
        r##"<line class="diagonal" x1="{x0:.3}" y1="{y0:.3}" x2="{x1:.3}" y2="{y1:.3}" stroke="#999" stroke-dasharray="4 4"/>"##
    );
    for t in ticks(hi).into_iter().filter(|t| *t >= lo) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.3}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            px(t),
            y0 + 14.0,
            fmt_tick(t)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.3}" font-size="10" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            py(t) + 3.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text class="x-label" x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
        SCATTER_SIZE / 2.0,
        SCATTER_SIZE - 18.0,
        escape(&labels.x)
    );
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="18" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        SCATTER_SIZE / 2.0,
        SCATTER_SIZE / 2.0,
        escape(&labels.y)
    );
    for (k, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        if !(x.is_finite() && y.is_finite()) {
            continue;
        }
        let _ = write!(
            svg,
            r##"<circle class="point" cx="{:.3}" cy="{:.3}" r="3" fill="#1f77b4" fill-opacity="0.7">"##,
            px(x),
            py(y)
        );
        if let Some(label) = point_labels.get(k) {
            let _ = write!(svg, "<title>{}</title>", escape(label));
        }
        svg.push_str("</circle>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn render_scatter_svg(
    xs: &[f64],
    ys: &[f64],
    point_labels: &[String],
    labels: &ScatterLabels,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_atomic(path, scatter_svg(xs, ys, point_labels, labels)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pianoroll::{NoteEvent, NoteList, TimeAxis};

    fn roll(duration: f64, notes: &[(u8, f64, f64)]) -> PianoRoll {
        let notes = notes.iter().map(|&(p, a, b)| NoteEvent::new(p, a, b)).collect();
        PianoRoll::from_notes(&NoteList::new(notes, TimeAxis::PerformanceSeconds, duration).unwrap())
    }

    fn count(svg: &str, class: &str) -> usize {
        svg.matches(&format!(r#"class="{class}""#)).count()
    }

    #[test]
    fn identical_rolls_have_no_colored_regions() {
        let a = roll(4.0, &[(60, 0.0, 1.0), (64, 0.5, 3.0), (67, 2.0, 4.0)]);
        let svg = comparison_svg(&a, &a).unwrap();
        assert_eq!(count(&svg, "pscore-only"), 0);
        assert_eq!(count(&svg, "transcript-only"), 0);
        assert_eq!(count(&svg, "both"), 3);
        assert_eq!(count(&svg, "note"), 6);
    }

    #[test]
    fn one_extra_note_on_each_side() {
        let base = [(60, 0.0, 1.0), (64, 0.5, 3.0)];
        let a = roll(4.0, &base);
        let mut extra = base.to_vec();
        extra.push((72, 1.0, 2.0));
        let b = roll(4.0, &extra);
        let svg = comparison_svg(&b, &a).unwrap();
        assert_eq!((count(&svg, "pscore-only"), count(&svg, "transcript-only")), (1, 0));
        let svg = comparison_svg(&a, &b).unwrap();
        assert_eq!((count(&svg, "pscore-only"), count(&svg, "transcript-only")), (0, 1));
    }

    #[test]
    fn partial_overlap_splits_regions() {
        let a = roll(3.0, &[(60, 0.0, 2.0)]);
        let b = roll(3.0, &[(60, 1.0, 3.0)]);
        let r = difference_regions(&a, &b).unwrap();
        let kinds: Vec<_> = r.iter().map(|r| (r.start, r.end, r.presence)).collect();
        assert_eq!(
            kinds,
            vec![
                (0.0, 1.0, Presence::PscoreOnly),
                (1.0, 2.0, Presence::Both),
                (2.0, 3.0, Presence::TranscriptOnly)
            ]
        );
    }

    #[test]
    fn duration_mismatch_is_an_error() {
        let a = roll(3.0, &[(60, 0.0, 2.0)]);
        let b = roll(4.0, &[(60, 0.0, 2.0)]);
        assert!(comparison_svg(&a, &b).is_err());
    }

    #[test]
    fn scatter_title_and_markers() {
        let xs: Vec<f64> = (0..193).map(|k| k as f64).collect();
        let svg = scatter_svg(&xs, &xs, &[], &ScatterLabels::default()).unwrap();
        assert!(svg.contains("r = 1.000"));
        assert_eq!(count(&svg, "point"), 193);

        let one = scatter_svg(&[3.0], &[4.0], &["p".into()], &ScatterLabels::default()).unwrap();
        assert!(!one.contains("r = "));
        assert_eq!(count(&one, "point"), 1);
        assert!(one.contains("<title>p</title>"));

        assert!(scatter_svg(&[1.0, 2.0], &[1.0], &[], &ScatterLabels::default()).is_err());
    }

    #[test]
    fn diagonal_points_sit_on_the_diagonal() {
        let xs = [10.0, 20.0, 35.0];
        let svg = scatter_svg(&xs, &xs, &[], &ScatterLabels::default()).unwrap();
        for line in svg.lines().filter(|l| l.contains(r#"class="point""#)) {
            let grab = |key: &str| -> f64 {
                let at = line.find(key).unwrap() + key.len();
                line[at..].split('"').next().unwrap().parse().unwrap()
            };
            let (cx, cy) = (grab("cx=\""), grab("cy=\""));
            assert!((cx - SCATTER_MARGIN + cy - (SCATTER_SIZE - SCATTER_MARGIN)).abs() < 1e-2);
        }
    }
}
