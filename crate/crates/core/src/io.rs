//! File formats: model and graph JSON, sample-set CSV.
//!
//! A sample-set CSV starts with a header line `# n=<n> m=<m> seed=<seed>`
//! followed by one row of `n` comma-separated `±1` entries per point.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::PairwiseGraph;
use crate::model::{ModelJson, PbmParams, SampleSet};

pub fn model_to_json(model: &PbmParams<f64>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelJson::from(model))?)
}

pub fn model_from_json(text: &str) -> Result<PbmParams<f64>> {
    let raw: ModelJson = serde_json::from_str(text)?;
    PbmParams::try_from(raw)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<PbmParams<f64>> {
    model_from_json(&fs::read_to_string(path)?)
}

pub fn write_model(path: impl AsRef<Path>, model: &PbmParams<f64>) -> Result<()> {
    let mut text = model_to_json(model)?;
    text.push('\n');
    Ok(fs::write(path, text)?)
}

pub fn read_graph(path: impl AsRef<Path>) -> Result<PairwiseGraph> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Renders a sample set; weights, if any, are not part of the format.
pub fn samples_to_csv(s: &SampleSet, seed: u64) -> String {
    let mut out = format!("# n={} m={} seed={}\n", s.n(), s.len(), seed);
    for x in s.points() {
        for (i, &v) in x.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// Header fields of a sample-set CSV.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SampleHeader {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
}

fn parse_header(line: &str) -> Result<SampleHeader> {
    let mut h = SampleHeader::default();
    for field in line.trim_start_matches('#').split_whitespace() {
        let Some((key, value)) = field.split_once('=') else {
            continue;
        };
        let bad = || Error::Parse(format!("bad header field `{field}`"));
        match key {
            "n" => h.n = Some(value.parse().map_err(|_| bad())?),
            "m" => h.m = Some(value.parse().map_err(|_| bad())?),
            "seed" => h.seed = Some(value.parse().map_err(|_| bad())?),
            _ => {}
        }
    }
    Ok(h)
}

/// Parses a sample-set CSV. Without a header, `n` is taken from the first
/// row; with one, the row width and count must match it.
pub fn samples_from_csv(text: &str) -> Result<(SampleSet, SampleHeader)> {
    let mut header = SampleHeader::default();
    let mut rows: Vec<Vec<i8>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if lineno == 0 {
                header = parse_header(line)?;
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|v| match v.trim() {
                "1" | "+1" => Ok(1),
                "-1" => Ok(-1),
                other => Err(Error::Parse(format!("line {}: `{other}` is not ±1", lineno + 1))),
            })
            .collect::<Result<Vec<i8>>>()?;
        rows.push(row);
    }
    let n = header.n.or_else(|| rows.first().map(Vec::len)).unwrap_or(0);
    if let Some(m) = header.m {
        if m != rows.len() {
            return Err(Error::Parse(format!("header announces {m} rows, found {}", rows.len())));
        }
    }
    let set = SampleSet::from_points(n, rows).map_err(|e| Error::Parse(e.to_string()))?;
    Ok((set, header))
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<SampleSet> {
    samples_from_csv(&fs::read_to_string(path)?).map(|(s, _)| s)
}

pub fn write_samples(path: impl AsRef<Path>, s: &SampleSet, seed: u64) -> Result<()> {
    Ok(fs::write(path, samples_to_csv(s, seed))?)
}
