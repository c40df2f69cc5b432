use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use align_eval::features::{self, FeatureKind, DEFAULT_SAMPLE_RATE};
use align_eval::groundtruth::tempo_regularized_align;
use align_eval::io::{self, CostSummary, ManifestPair, ReportRecord, RunManifest};
use align_eval::metrics::evaluate as evaluate_metrics;
use align_eval::midi::{self, MidiIngestConfig, PedalMode};
use align_eval::svg;
use align_eval::warp::{self, WarpKind};
use align_eval::{fixtures, AlignmentFn, GtConfig, Knot, NoteList, PianoRoll, Waveform};

use crate::{
    AlignArgs, CompareArgs, EvaluateArgs, FixtureArgs, GroundTruthArgs, Pedal, RunArgs, TranscriptOpts, WarpArgs,
};

/// Onset recognition threshold used for reports and the CSV column.
pub const RECOGNITION_MS: f64 = 50.0;

/// Per-pair CSV row; column order is part of the file format.
#[derive(Debug, Serialize, Deserialize)]
pub struct CsvRow {
    pub pair_id: String,
    pub feature: String,
    pub mad_ms: f64,
    pub rmse_ms: f64,
    pub note_mad_ms: f64,
    pub note_rmse_ms: f64,
    pub recognition_rate_50ms: f64,
    pub matched_fraction: f64,
}

impl From<&ReportRecord> for CsvRow {
    fn from(r: &ReportRecord) -> Self {
        let m = &r.metrics;
        CsvRow {
            pair_id: r.pair_id.clone(),
            feature: r.feature.clone(),
            mad_ms: m.mad_ms,
            rmse_ms: m.rmse_ms,
            note_mad_ms: m.note_mad_ms,
            note_rmse_ms: m.note_rmse_ms,
            recognition_rate_50ms: m.recognition_rate,
            matched_fraction: m.matched_fraction,
        }
    }
}

fn read_score(path: &Path) -> Result<NoteList> {
    midi::ingest_midi(path, &MidiIngestConfig::score()).with_context(|| format!("reading score {}", path.display()))
}

fn read_transcript(path: &Path, opts: &TranscriptOpts) -> Result<NoteList> {
    let cfg = MidiIngestConfig {
        pedal_mode: match opts.pedal {
            Pedal::Ignore => PedalMode::Ignore,
            Pedal::Extend => PedalMode::Extend,
        },
        ..MidiIngestConfig::performance()
    };
    midi::ingest_midi(path, &cfg).with_context(|| format!("reading transcript {}", path.display()))
}

fn read_alignment(path: &Path) -> Result<AlignmentFn> {
    io::read_alignment(path).with_context(|| format!("reading alignment {}", path.display()))
}

fn parse_feature(name: &str) -> Result<FeatureKind> {
    name.parse::<FeatureKind>().map_err(|e| anyhow::anyhow!("{e} (expected spec, chroma or cqt)"))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn ground_truth_alignment(score: &NoteList, transcript: &NoteList, cfg: &GtConfig) -> Result<(AlignmentFn, CostSummary)> {
    let gt = tempo_regularized_align(&PianoRoll::from_notes(score), &PianoRoll::from_notes(transcript), cfg)?;
    let cost = CostSummary::from(&gt);
    Ok((gt.alignment, cost))
}

pub fn ground_truth(a: GroundTruthArgs) -> Result<()> {
    let score = read_score(&a.score)?;
    let transcript = read_transcript(&a.transcript, &a.transcript_opts)?;
    let cfg = GtConfig {
        lambda: a.lambda,
        dt: a.dt,
        band: a.band,
        ds: None,
    };
    let (alignment, cost) = ground_truth_alignment(&score, &transcript, &cfg)?;
    ensure_parent(&a.output)?;
    io::write_alignment(&a.output, &alignment, Some(cost))?;
    println!(
        "ground truth: {} knots, d1 = {:.6}, R = {:.6}, total = {:.6}",
        alignment.knots().len(),
        cost.data_cost,
        cost.reg_cost,
        cost.total
    );
    Ok(())
}

/// Renders a transcript to exactly its own duration, so alignments against
/// the rendering share the transcript's performance length.
fn render_transcript(transcript: &NoteList) -> Result<Waveform> {
    let n = (transcript.duration() * f64::from(DEFAULT_SAMPLE_RATE)).round() as usize;
    Ok(features::synthesize_with_len(transcript, DEFAULT_SAMPLE_RATE, n)?)
}

fn baseline(score: &NoteList, perf: &Waveform, kind: FeatureKind, score_tempo: Option<f64>) -> Result<AlignmentFn> {
    let tempo = score_tempo.unwrap_or(perf.duration() / score.duration());
    Ok(features::align_baseline(score, tempo, perf, kind)?)
}

pub fn align(a: AlignArgs) -> Result<()> {
    let kind = parse_feature(&a.features)?;
    let score = read_score(&a.score)?;
    let perf = match (&a.perf, &a.perf_midi) {
        (Some(wav), _) => io::read_wav(wav).with_context(|| format!("reading {}", wav.display()))?,
        (None, Some(mid)) => render_transcript(&read_transcript(mid, &TranscriptOpts { pedal: Pedal::Ignore })?)?,
        (None, None) => bail!("one of --perf or --perf-midi is required"),
    };
    let alignment = baseline(&score, &perf, kind, a.score_tempo)?;
    ensure_parent(&a.output)?;
    io::write_alignment(&a.output, &alignment, None)?;
    println!("{kind} baseline: {} knots", alignment.knots().len());
    Ok(())
}

fn evaluate_pair(
    score: &NoteList,
    transcript: &NoteList,
    gt: &AlignmentFn,
    cand: &AlignmentFn,
    pair_id: String,
    feature: String,
) -> Result<ReportRecord> {
    let metrics = evaluate_metrics(cand, gt, score, transcript, RECOGNITION_MS)?;
    Ok(ReportRecord {
        pair_id,
        feature,
        metrics,
    })
}

pub fn append_csv(path: &Path, row: &CsvRow) -> Result<()> {
    let has_header = fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().has_headers(!has_header).from_writer(file);
    w.serialize(row)?;
    w.flush()?;
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let score = read_score(&a.score)?;
    let transcript = read_transcript(&a.transcript, &a.transcript_opts)?;
    let gt = read_alignment(&a.gt)?;
    let cand = read_alignment(&a.cand)?;
    let record = evaluate_pair(
        &score,
        &transcript,
        &gt,
        &cand,
        a.pair_id.unwrap_or_else(|| stem(&a.score)),
        a.feature.unwrap_or_else(|| stem(&a.cand)),
    )?;
    ensure_parent(&a.output)?;
    io::write_report(&a.output, &record)?;
    if let Some(csv_path) = &a.csv {
        ensure_parent(csv_path)?;
        append_csv(csv_path, &CsvRow::from(&record))?;
    }
    let m = &record.metrics;
    println!(
        "MAD {:.2} ms, RMSE {:.2} ms, note MAD {:.2} ms, note RMSE {:.2} ms, recognized {:.3}, matched {:.3}",
        m.mad_ms, m.rmse_ms, m.note_mad_ms, m.note_rmse_ms, m.recognition_rate, m.matched_fraction
    );
    Ok(())
}

/// Audio-based alignments end at the recording's length, which can differ
/// slightly from the transcript's. Clamps or stretches the final piece so the
/// alignment ends at `perf_len`.
fn fit_perf_len(a: &AlignmentFn, perf_len: f64) -> Result<AlignmentFn> {
    if a.perf_len() == perf_len {
        return Ok(a.clone());
    }
    let gap = (a.perf_len() - perf_len).abs();
    if gap > 0.1 {
        eprintln!(
            "warning: alignment ends at {:.3} s but the transcript lasts {perf_len:.3} s; adjusting the final piece",
            a.perf_len()
        );
    }
    let mut knots: Vec<Knot> = a.knots().iter().map(|k| Knot::new(k.s, k.t.min(perf_len))).collect();
    if let Some(last) = knots.last_mut() {
        last.t = perf_len;
    }
    Ok(AlignmentFn::new(knots, a.score_len(), perf_len)?)
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let score = PianoRoll::from_notes(&read_score(&a.score)?);
    let transcript = PianoRoll::from_notes(&read_transcript(&a.transcript, &a.transcript_opts)?);
    let alignment = fit_perf_len(&read_alignment(&a.alignment)?, transcript.duration())?;
    let pscore = alignment.apply(&score)?;
    ensure_parent(&a.output)?;
    svg::render_comparison_svg(&pscore, &transcript, &a.output)?;
    Ok(())
}

pub fn warp(a: WarpArgs) -> Result<()> {
    let kind: WarpKind = a.kind.parse()?;
    let score = a.apply.as_deref().map(read_score).transpose()?;
    let score_len = match (&score, a.score_len) {
        (Some(s), _) => s.duration(),
        (None, Some(len)) => len,
        (None, None) => bail!("--score-len is required without --apply"),
    };
    let tau = warp::synthetic_warp_with_severity(kind, a.seed, score_len, a.perf_len, a.severity)?;
    ensure_parent(&a.output)?;
    io::write_alignment(&a.output, &tau, None)?;
    if let (Some(score), Some(out)) = (score, &a.apply_output) {
        ensure_parent(out)?;
        midi::write_midi(out, &warp::warp_notes(&tau, &score)?)?;
    }
    Ok(())
}

/// Paths written by [`write_fixture`].
pub struct FixturePaths {
    pub score: PathBuf,
    pub transcript: PathBuf,
    pub performance: Option<PathBuf>,
    pub warp: PathBuf,
}

pub fn write_fixture(a: &FixtureArgs) -> Result<FixturePaths> {
    let kind: WarpKind = a.warp.parse()?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let score = fixtures::two_voice_score(a.seed, a.beats)?;
    let tau = warp::synthetic_warp_with_severity(kind, a.seed, a.beats, a.seconds, a.severity)?;
    let transcript = warp::warp_notes(&tau, &score)?;
    let paths = FixturePaths {
        score: a.out_dir.join("score.mid"),
        transcript: a.out_dir.join("transcript.mid"),
        performance: (!a.no_audio).then(|| a.out_dir.join("performance.wav")),
        warp: a.out_dir.join("true_warp.json"),
    };
    midi::write_midi(&paths.score, &score)?;
    midi::write_midi(&paths.transcript, &transcript)?;
    io::write_alignment(&paths.warp, &tau, None)?;
    if let Some(wav) = &paths.performance {
        io::write_wav(wav, &render_transcript(&transcript)?)?;
    }
    Ok(paths)
}

pub fn fixture(a: FixtureArgs) -> Result<()> {
    let p = write_fixture(&a)?;
    println!("wrote {} and {}", p.score.display(), p.transcript.display());
    Ok(())
}

fn run_pair(pair: &ManifestPair, kinds: &[FeatureKind], cfg: &GtConfig, out: &Path) -> Result<()> {
    let score = read_score(&pair.score)?;
    let transcript = read_transcript(&pair.transcript, &TranscriptOpts { pedal: Pedal::Ignore })?;
    let dir = out.join(&pair.id);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let (gt, cost) = ground_truth_alignment(&score, &transcript, cfg)?;
    io::write_alignment(dir.join("gt.json"), &gt, Some(cost))?;
    let perf = match &pair.performance {
        Some(wav) => io::read_wav(wav).with_context(|| format!("reading {}", wav.display()))?,
        None => render_transcript(&transcript)?,
    };
    for &kind in kinds {
        let cand = baseline(&score, &perf, kind, None)?;
        io::write_alignment(dir.join(format!("cand_{kind}.json")), &cand, None)?;
        let record = evaluate_pair(&score, &transcript, &gt, &cand, pair.id.clone(), kind.to_string())?;
        io::write_report(dir.join(format!("report_{kind}.json")), &record)?;
    }
    Ok(())
}

pub fn run(a: RunArgs) -> Result<()> {
    let m = RunManifest::read(&a.manifest).with_context(|| format!("reading manifest {}", a.manifest.display()))?;
    m.check_inputs()?;
    let kinds = m.features.iter().map(|f| parse_feature(f)).collect::<Result<Vec<_>>>()?;
    let cfg = GtConfig::from(m.gt);
    cfg.validate()?;
    m.pairs
        .par_iter()
        .map(|pair| run_pair(pair, &kinds, &cfg, &m.output_dir).with_context(|| format!("pair {}", pair.id)))
        .collect::<Result<Vec<()>>>()?;
    println!("processed {} pairs into {}", m.pairs.len(), m.output_dir.display());
    Ok(())
}
