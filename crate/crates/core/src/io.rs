//! File formats: alignment JSON, metric report JSON, run manifests and
//! mono WAV. Every writer replaces its target atomically.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentFn, Knot};
use crate::error::{Error, Result};
use crate::features::Waveform;
use crate::groundtruth::{GtConfig, GtResult};
use crate::metrics::MetricReport;

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`. Readers never observe a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = temp_sibling(path)?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn temp_sibling(path: &Path) -> Result<tempfile::NamedTempFile> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o644));
    }
    builder.tempfile_in(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub score: String,
    pub performance: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            score: "beats".into(),
            performance: "seconds".into(),
        }
    }
}

/// Cost breakdown stored alongside a ground-truth alignment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub lambda: f64,
    pub data_cost: f64,
    pub reg_cost: f64,
    pub total: f64,
    pub frame_dt: f64,
}

impl From<&GtResult> for CostSummary {
    fn from(r: &GtResult) -> Self {
        CostSummary {
            lambda: r.lambda,
            data_cost: r.data_cost,
            reg_cost: r.reg_cost,
            total: r.total,
            frame_dt: r.frame_dt,
        }
    }
}

/// On-disk alignment document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentDoc {
    pub units: Units,
    #[serde(rename = "S")]
    pub score_len: f64,
    #[serde(rename = "T")]
    pub perf_len: f64,
    pub knots: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostSummary>,
}

impl AlignmentDoc {
    pub fn new(a: &AlignmentFn, cost: Option<CostSummary>) -> Self {
        AlignmentDoc {
            units: Units::default(),
            score_len: a.score_len(),
            perf_len: a.perf_len(),
            knots: a.knots().iter().map(|k| [k.s, k.t]).collect(),
            cost,
        }
    }

    /// Validates the document and builds the alignment.
    pub fn alignment(&self) -> Result<AlignmentFn> {
        if self.units != Units::default() {
            return Err(Error::InvalidAlignment(format!(
                "unsupported units {:?}/{:?}",
                self.units.score, self.units.performance
            )));
        }
        let knots = self.knots.iter().map(|&[s, t]| Knot::new(s, t)).collect();
        AlignmentFn::new(knots, self.score_len, self.perf_len)
    }
}

pub fn alignment_to_json(a: &AlignmentFn, cost: Option<CostSummary>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&AlignmentDoc::new(a, cost))?)
}

pub fn alignment_from_json(text: &str) -> Result<AlignmentFn> {
    serde_json::from_str::<AlignmentDoc>(text)?.alignment()
}

pub fn write_alignment(path: impl AsRef<Path>, a: &AlignmentFn, cost: Option<CostSummary>) -> Result<()> {
    let mut text = alignment_to_json(a, cost)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_alignment(path: impl AsRef<Path>) -> Result<AlignmentFn> {
    read_alignment_doc(path)?.alignment()
}

/// The raw document, including any cost summary.
pub fn read_alignment_doc(path: impl AsRef<Path>) -> Result<AlignmentDoc> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: AlignmentDoc = serde_json::from_str(&text)?;
    doc.alignment()?;
    Ok(doc)
}

/// A [`MetricReport`] tagged with the pair and baseline it describes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub pair_id: String,
    pub feature: String,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

pub fn write_report(path: impl AsRef<Path>, record: &ReportRecord) -> Result<()> {
    let mut text = serde_json::to_string_pretty(record)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportRecord> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Ground-truth parameters as stored in a manifest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GtParams {
    pub lambda: f64,
    pub dt: f64,
    pub band: Option<usize>,
}

impl Default for GtParams {
    fn default() -> Self {
        let d = GtConfig::default();
        GtParams {
            lambda: d.lambda,
            dt: d.dt,
            band: d.band,
        }
    }
}

impl From<GtParams> for GtConfig {
    fn from(p: GtParams) -> Self {
        GtConfig {
            lambda: p.lambda,
            dt: p.dt,
            band: p.band,
            ds: None,
        }
    }
}

/// One score/performance pair of a batch run. Relative paths are resolved
/// against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestPair {
    pub id: String,
    pub score: PathBuf,
    pub transcript: PathBuf,
    /// Performance audio; when absent the transcript is synthesized.
    #[serde(default)]
    pub performance: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub pairs: Vec<ManifestPair>,
    /// Baseline feature names.
    pub features: Vec<String>,
    #[serde(default)]
    pub gt: GtParams,
    /// Where per-pair alignments and reports go.
    pub output_dir: PathBuf,
}

impl RunManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: RunManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for pair in &mut m.pairs {
            resolve(&mut pair.score);
            resolve(&mut pair.transcript);
            if let Some(perf) = &mut pair.performance {
                resolve(perf);
            }
        }
        resolve(&mut m.output_dir);
        Ok(m)
    }

    /// Checks that every referenced input exists.
    pub fn check_inputs(&self) -> Result<()> {
        for pair in &self.pairs {
            let inputs = [Some(&pair.score), Some(&pair.transcript), pair.performance.as_ref()];
            for p in inputs.into_iter().flatten() {
                if !p.is_file() {
                    return Err(Error::io(p, std::io::ErrorKind::NotFound.into()));
                }
            }
        }
        Ok(())
    }
}

/// Reads a mono WAV file (integer PCM or 32-bit float) into samples in
/// `[-1, 1]`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::InvalidParameter(format!(
            "expected a mono WAV file, got {} channels",
            spec.channels
        )));
    }
    let samples = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 2f64.powi(i32::from(spec.bits_per_sample) - 1);
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<std::result::Result<Vec<_>, _>>()?
        }
    };
    Waveform::new(samples, spec.sample_rate)
}

/// Writes 16-bit mono PCM with the same `2^15` scale [`read_wav`] uses,
/// clipping to the sample range.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut tmp = temp_sibling(path)?;
    {
        let mut writer = hound::WavWriter::new(std::io::BufWriter::new(tmp.as_file_mut()), spec)?;
        for &x in w.samples() {
            let v = (x * 32768.0).round().clamp(f64::from(i16::MIN), f64::from(i16::MAX));
            writer.write_sample(v as i16)?;
        }
        writer.finalize()?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AlignmentFn {
        let knots = [(0.0, 0.0), (1.0 / 3.0, 0.1), (2.0, 0.1), (2.0, 0.7000000000000001), (4.0, 3.3)];
        AlignmentFn::new(knots.iter().map(|&k| k.into()).collect(), 4.0, 3.3).unwrap()
    }

    #[test]
    fn alignment_json_round_trip() {
        let a = sample();
        let text = alignment_to_json(&a, None).unwrap();
        assert!(text.contains("\"units\""));
        assert!(text.contains("\"beats\""));
        assert!(!text.contains("cost"));
        assert_eq!(alignment_from_json(&text).unwrap(), a);
    }

    #[test]
    fn alignment_file_round_trip_with_cost() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        let cost = CostSummary {
            lambda: 0.1,
            data_cost: 0.5,
            reg_cost: 0.25,
            total: 0.525,
            frame_dt: 0.01,
        };
        write_alignment(&path, &sample(), Some(cost)).unwrap();
        let doc = read_alignment_doc(&path).unwrap();
        assert_eq!(doc.cost, Some(cost));
        assert_eq!(read_alignment(&path).unwrap(), sample());
    }

    #[test]
    fn malformed_documents_are_rejected() {
        let units = r#""units":{"score":"beats","performance":"seconds"}"#;
        let decreasing = format!(r#"{{{units},"S":2,"T":2,"knots":[[0,0],[1,1.5],[2,1]]}}"#);
        assert!(alignment_from_json(&decreasing).is_err());
        let empty = format!(r#"{{{units},"S":2,"T":2,"knots":[]}}"#);
        assert!(alignment_from_json(&empty).is_err());
        let ok = format!(r#"{{{units},"S":2,"T":2,"knots":[[0,0],[2,2]]}}"#);
        assert!(alignment_from_json(&ok).is_ok());
        let bad_units = r#"{"units":{"score":"ticks","performance":"seconds"},"S":2,"T":2,"knots":[[0,0],[2,2]]}"#;
        assert!(alignment_from_json(bad_units).is_err());
        assert!(alignment_from_json("{").is_err());
    }

    #[test]
    fn wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let samples: Vec<f64> = (0..1000).map(|k| (k as f64 * 0.01).sin() * 0.8).collect();
        let w = Waveform::new(samples, 22050).unwrap();
        write_wav(&path, &w).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 22050);
        assert_eq!(back.len(), 1000);
        for (a, b) in back.samples().iter().zip(w.samples()) {
            assert!((a - b).abs() < 1.0 / 16384.0);
        }
    }

    #[test]
    fn stereo_wav_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(read_wav(&path).is_err());
    }

    #[test]
    fn manifest_paths_resolve_relative_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(
            &path,
            r#"{"pairs":[{"id":"p","score":"s.mid","transcript":"t.mid"}],"features":["chroma"],"output_dir":"out"}"#,
        )
        .unwrap();
        let m = RunManifest::read(&path).unwrap();
        assert_eq!(m.pairs[0].score, dir.path().join("s.mid"));
        assert_eq!(m.output_dir, dir.path().join("out"));
        assert_eq!(m.gt, GtParams::default());
        assert!(m.check_inputs().is_err());
    }
}
