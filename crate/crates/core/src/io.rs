//! File formats: count tables, reference counts, Choi matrices and the
//! simulation config. All writers are atomic (temp file then rename).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gate_model::model_choi;
use crate::quantum::{ChoiMatrix, Operator, Probe, ProbePair, Setting, CHOI_DIM, SETTINGS};
use crate::simulator::{CountTable, DriftProfile, ExperimentConfig, ReferenceCounts};

/// Writes `bytes` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Trailing `#key=value` lines of a counts file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CountsMetadata {
    pub seed: Option<u64>,
    pub pair_rate: Option<f64>,
    pub visibility: Option<f64>,
}

/// Splits a CSV file into data text and `#key=value` metadata.
fn split_metadata(text: &str) -> Result<(String, BTreeMap<String, String>)> {
    let mut data = String::new();
    let mut meta = BTreeMap::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix('#') {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("malformed metadata line {trimmed:?}")))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
        } else if !trimmed.is_empty() {
            data.push_str(line);
            data.push('\n');
        }
    }
    Ok((data, meta))
}

fn parse_meta<T: std::str::FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    meta.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| Error::Parse(format!("bad #{key}= value {v:?}")))
        })
        .transpose()
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse(format!(
            "expected header {:?}, found {:?}",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<&str> {
    rec.get(i)
        .map(str::trim)
        .ok_or_else(|| Error::Parse(format!("line {line}: missing column {}", i + 1)))
}

fn parse_probe(s: &str, line: usize) -> Result<Probe> {
    Probe::from_label(s).map_err(|_| Error::Parse(format!("line {line}: unknown probe label {s:?}")))
}

fn parse_count(s: &str, line: usize) -> Result<f64> {
    let c: f64 = s
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: count {s:?} is not a number")))?;
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::Parse(format!(
            "line {line}: count {s:?} must be finite and nonnegative"
        )));
    }
    Ok(c)
}

/// Renders a counts file: header `j,k,l,m,count`, 1296 rows in setting order,
/// then metadata.
pub fn format_counts(counts: &CountTable, meta: &CountsMetadata) -> String {
    let mut out = String::from("j,k,l,m,count\n");
    for n in 0..SETTINGS {
        let s = Setting::from_index(n);
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.input.0,
            s.input.1,
            s.output.0,
            s.output.1,
            counts.values()[n]
        );
    }
    if let Some(seed) = meta.seed {
        let _ = writeln!(out, "#seed={seed}");
    }
    if let Some(n) = meta.pair_rate {
        let _ = writeln!(out, "#N={n}");
    }
    if let Some(v) = meta.visibility {
        let _ = writeln!(out, "#V={v}");
    }
    out
}

pub fn parse_counts(text: &str) -> Result<(CountTable, CountsMetadata)> {
    let (data, meta) = split_metadata(text)?;
    let mut reader = csv::ReaderBuilder::new().from_reader(data.as_bytes());
    check_header(&mut reader, &["j", "k", "l", "m", "count"])?;
    let mut values = vec![f64::NAN; SETTINGS];
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let input = ProbePair(
            parse_probe(field(&rec, 0, line)?, line)?,
            parse_probe(field(&rec, 1, line)?, line)?,
        );
        let output = ProbePair(
            parse_probe(field(&rec, 2, line)?, line)?,
            parse_probe(field(&rec, 3, line)?, line)?,
        );
        let n = Setting { input, output }.index();
        if !values[n].is_nan() {
            return Err(Error::Parse(format!("line {line}: duplicate setting {input},{output}")));
        }
        values[n] = parse_count(field(&rec, 4, line)?, line)?;
    }
    if let Some(n) = values.iter().position(|v| v.is_nan()) {
        let s = Setting::from_index(n);
        return Err(Error::Parse(format!(
            "counts file is missing setting {},{} (need all {SETTINGS})",
            s.input, s.output
        )));
    }
    let metadata = CountsMetadata {
        seed: parse_meta(&meta, "seed")?,
        pair_rate: parse_meta(&meta, "N")?,
        visibility: parse_meta(&meta, "V")?,
    };
    Ok((CountTable::from_values(values)?, metadata))
}

pub fn write_counts(path: &Path, counts: &CountTable, meta: &CountsMetadata) -> Result<()> {
    write_atomic(path, format_counts(counts, meta).as_bytes())
}

pub fn read_counts(path: &Path) -> Result<(CountTable, CountsMetadata)> {
    parse_counts(&fs::read_to_string(path)?)
}

/// Renders a references file: header `j,k,window,count`, one row per block.
pub fn format_references(refs: &ReferenceCounts) -> String {
    let mut out = String::from("j,k,window,count\n");
    for (i, (&count, &window)) in refs.counts().iter().zip(refs.windows()).enumerate() {
        let p = ProbePair::from_index(i);
        let _ = writeln!(out, "{},{},{window},{count}", p.0, p.1);
    }
    out
}

pub fn parse_references(text: &str) -> Result<ReferenceCounts> {
    let (data, _) = split_metadata(text)?;
    let mut reader = csv::ReaderBuilder::new().from_reader(data.as_bytes());
    check_header(&mut reader, &["j", "k", "window", "count"])?;
    let mut counts: Vec<Option<(u64, usize)>> = vec![None; 36];
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let pair = ProbePair(
            parse_probe(field(&rec, 0, line)?, line)?,
            parse_probe(field(&rec, 1, line)?, line)?,
        );
        let window: usize = field(&rec, 2, line)?
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: window must be a nonnegative integer")))?;
        let count: u64 = field(&rec, 3, line)?
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: reference count must be a nonnegative integer")))?;
        let slot = &mut counts[pair.index()];
        if slot.is_some() {
            return Err(Error::Parse(format!("line {line}: duplicate reference for {pair}")));
        }
        *slot = Some((count, window));
    }
    let mut c = Vec::with_capacity(36);
    let mut w = Vec::with_capacity(36);
    for (i, entry) in counts.into_iter().enumerate() {
        let (count, window) = entry
            .ok_or_else(|| Error::Parse(format!("references file is missing block {}", ProbePair::from_index(i))))?;
        c.push(count);
        w.push(window);
    }
    ReferenceCounts::new(c, w)
}

pub fn write_references(path: &Path, refs: &ReferenceCounts) -> Result<()> {
    write_atomic(path, format_references(refs).as_bytes())
}

pub fn read_references(path: &Path) -> Result<ReferenceCounts> {
    parse_references(&fs::read_to_string(path)?)
}

/// Renders a Choi matrix as `row,col,re,im` with a trailing `#trace=` line.
pub fn format_choi(chi: &ChoiMatrix) -> String {
    let mut out = String::from("row,col,re,im\n");
    let m = chi.matrix();
    for r in 0..CHOI_DIM {
        for c in 0..CHOI_DIM {
            let z = m[(r, c)];
            let _ = writeln!(out, "{r},{c},{:e},{:e}", z.re, z.im);
        }
    }
    let _ = writeln!(out, "#trace={:e}", chi.trace());
    out
}

pub fn parse_choi(text: &str) -> Result<ChoiMatrix> {
    let (data, meta) = split_metadata(text)?;
    let mut reader = csv::ReaderBuilder::new().from_reader(data.as_bytes());
    check_header(&mut reader, &["row", "col", "re", "im"])?;
    let mut m = Operator::zeros(CHOI_DIM, CHOI_DIM);
    let mut seen = [false; CHOI_DIM * CHOI_DIM];
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let parse_idx = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .ok()
                .filter(|&x| x < CHOI_DIM)
                .ok_or_else(|| Error::Parse(format!("line {line}: index {s:?} outside 0..16")))
        };
        let parse_f = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {line}: {s:?} is not a number")))
        };
        let r = parse_idx(field(&rec, 0, line)?)?;
        let c = parse_idx(field(&rec, 1, line)?)?;
        if std::mem::replace(&mut seen[CHOI_DIM * r + c], true) {
            return Err(Error::Parse(format!("line {line}: duplicate entry ({r},{c})")));
        }
        m[(r, c)] = Complex64::new(parse_f(field(&rec, 2, line)?)?, parse_f(field(&rec, 3, line)?)?);
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Parse("Choi file must list all 256 entries".into()));
    }
    let chi = ChoiMatrix::new(m)?;
    if let Some(t) = parse_meta::<f64>(&meta, "trace")? {
        if (t - chi.trace()).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(Error::Parse(format!(
                "#trace={t} disagrees with the matrix trace {}",
                chi.trace()
            )));
        }
    }
    Ok(chi)
}

pub fn write_choi(path: &Path, chi: &ChoiMatrix) -> Result<()> {
    write_atomic(path, format_choi(chi).as_bytes())
}

pub fn read_choi(path: &Path) -> Result<ChoiMatrix> {
    parse_choi(&fs::read_to_string(path)?)
}

/// JSON simulation config.
///
/// Exactly one of `visibility` and `choi_file` selects the simulated process;
/// a relative `choi_file` is resolved against the config's directory. A
/// missing `seed` is drawn from OS entropy and recorded in the echo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub pair_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choi_file: Option<PathBuf>,
    #[serde(default)]
    pub drift: DriftProfile,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub noise_admixture: f64,
}

/// Source rate of the default config; gives `ΔF_MC ≈ 2·10⁻³` at `V = 0.953`.
pub const DEFAULT_PAIR_RATE: f64 = 7e4;

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            pair_rate: DEFAULT_PAIR_RATE,
            visibility: Some(0.953),
            choi_file: None,
            drift: DriftProfile::default(),
            seed: None,
            noise_admixture: 0.0,
        }
    }
}

/// A config with every input resolved.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    /// Echo of the input with `seed` filled in.
    pub echo: SimulationConfig,
    pub experiment: ExperimentConfig,
    pub chi: ChoiMatrix,
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Validates the config, fixes the seed and loads the process.
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedConfig> {
        let chi = match (self.visibility, &self.choi_file) {
            (Some(v), None) => model_choi(v)?,
            (None, Some(file)) => read_choi(&base_dir.join(file))?,
            _ => return Err(invalid("config needs exactly one of `visibility` and `choi_file`")),
        };
        let seed = self.seed.unwrap_or_else(rand::random);
        let experiment = ExperimentConfig {
            pair_rate: self.pair_rate,
            drift: self.drift.clone(),
            seed,
            noise_admixture: self.noise_admixture,
        };
        experiment.validate()?;
        let mut echo = self.clone();
        echo.seed = Some(seed);
        Ok(ResolvedConfig { echo, experiment, chi })
    }
}
