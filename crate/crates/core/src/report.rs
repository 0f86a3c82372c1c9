//! Output records: the run manifest, CSV/JSON tables, and the on-disk cache of
//! expansion constants.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ConstantRow};
use crate::quadrature::QuadratureSpec;
use crate::tail::TailEstimate;

/// Environment variable naming the cache directory.
pub const CACHE_DIR_ENV: &str = "EULER_EXTREMES_CACHE_DIR";

const CACHE_FILE: &str = "constants.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: String,
    pub seed: Option<u64>,
    pub quadrature: Vec<QuadratureSpec>,
    pub constants: Vec<ConstantRow>,
    /// Omitted where output must be byte-identical across runs.
    pub wall_time: Option<Duration>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command_line: impl Into<String>) -> Self {
        RunManifest {
            command_line: command_line.into(),
            seed: None,
            quadrature: Vec::new(),
            constants: Vec::new(),
            wall_time: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One row of a method-comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub t: f64,
    pub y: f64,
    pub method: String,
    #[serde(rename = "J")]
    pub j: Option<usize>,
    pub log_value: f64,
    pub error_indicator: f64,
    pub seed: Option<u64>,
}

impl TableRow {
    pub fn from_estimate(e: &TailEstimate, seed: Option<u64>) -> Self {
        TableRow {
            t: e.t,
            y: e.y,
            method: e.method.name().to_string(),
            j: e.j,
            log_value: e.log_value,
            error_indicator: e.error_indicator,
            seed,
        }
    }
}

pub const CSV_HEADER: &str = "t,y,method,J,log_value,error_indicator,seed";

/// CSV with the manifest as a leading `#` comment line.
pub fn write_csv<W: Write>(mut out: W, manifest: &RunManifest, rows: &[TableRow]) -> Result<()> {
    writeln!(out, "# manifest: {}", manifest.to_json()?)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))
        .map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_csv`], returning the manifest too.
pub fn read_csv(text: &str) -> Result<(RunManifest, Vec<TableRow>)> {
    let (first, rest) = text
        .split_once('\n')
        .ok_or_else(|| Error::Internal("empty CSV".into()))?;
    let manifest = RunManifest::from_json(
        first
            .strip_prefix("# manifest: ")
            .ok_or_else(|| Error::Internal("CSV lacks a manifest line".into()))?,
    )?;
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<TableRow>, _>>().map_err(csv_error)?;
    Ok((manifest, rows))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Internal(format!("csv: {e}"))
}

#[derive(Serialize)]
struct JsonDoc<'a, T: Serialize> {
    manifest: &'a RunManifest,
    rows: &'a [T],
}

pub fn write_json<W: Write, T: Serialize>(mut out: W, manifest: &RunManifest, rows: &[T]) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &JsonDoc { manifest, rows })?;
    writeln!(out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub value: f64,
    pub abs_error_estimate: Option<f64>,
}

/// Expansion constants keyed by name, indices and quadrature fingerprint.
/// Deleting the file is always safe.
#[derive(Debug, Clone)]
pub struct ConstantsCache {
    path: PathBuf,
    entries: BTreeMap<String, CacheEntry>,
}

impl ConstantsCache {
    /// `$EULER_EXTREMES_CACHE_DIR`, else `$XDG_CACHE_HOME/euler-extremes`,
    /// else `$HOME/.cache/euler-extremes`, else the system temp dir.
    pub fn default_dir() -> PathBuf {
        if let Some(d) = std::env::var_os(CACHE_DIR_ENV) {
            return PathBuf::from(d);
        }
        if let Some(d) = std::env::var_os("XDG_CACHE_HOME") {
            return PathBuf::from(d).join("euler-extremes");
        }
        if let Some(d) = std::env::var_os("HOME") {
            return PathBuf::from(d).join(".cache").join("euler-extremes");
        }
        std::env::temp_dir().join("euler-extremes")
    }

    /// Opens the cache in `dir`. An unreadable or corrupt file gives an empty cache.
    pub fn open(dir: &Path) -> Self {
        let path = dir.join(CACHE_FILE);
        let entries = fs::read_to_string(&path)
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .unwrap_or_default();
        ConstantsCache { path, entries }
    }

    pub fn key(name: &str, j: usize, n: Option<u32>, quad: &QuadratureSpec) -> String {
        match n {
            Some(n) => format!("{name}:{j}:{n}:{}", quad.fingerprint()),
            None => format!("{name}:{j}:-:{}", quad.fingerprint()),
        }
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.entries.get(key).copied()
    }

    pub fn insert(&mut self, key: String, entry: CacheEntry) {
        self.entries.insert(key, entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&self) -> Result<()> {
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = self.path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&self.entries)?)?;
        fs::rename(&tmp, &self.path)?;
        Ok(())
    }

    /// Constant rows for `j_max`, from the cache when every row is present,
    /// otherwise computed and stored. Returns the rows and whether they came
    /// from the cache.
    pub fn coefficient_rows(&mut self, j_max: usize, quad: &QuadratureSpec) -> Result<(Vec<ConstantRow>, bool)> {
        let layout = row_layout(j_max);
        let cached: Option<Vec<ConstantRow>> = layout
            .iter()
            .map(|(name, j, n)| {
                self.get(&Self::key(name, *j, *n, quad)).map(|e| ConstantRow {
                    name: name.to_string(),
                    j: *j,
                    n: *n,
                    value: e.value,
                    abs_error_estimate: e.abs_error_estimate,
                })
            })
            .collect();
        if let Some(rows) = cached {
            return Ok((rows, true));
        }
        let rows = model::expansion_coefficients(j_max, quad)?.rows();
        for r in &rows {
            self.insert(
                Self::key(&r.name, r.j, r.n, quad),
                CacheEntry {
                    value: r.value,
                    abs_error_estimate: r.abs_error_estimate,
                },
            );
        }
        Ok((rows, false))
    }
}

fn row_layout(j_max: usize) -> Vec<(&'static str, usize, Option<u32>)> {
    let mut v = vec![("gamma0", 0, None)];
    for j in 1..=j_max + 1 {
        for n in 0..3 {
            v.push(("b", j, Some(n)));
        }
    }
    v.extend((1..=j_max).map(|j| ("a", j, None)));
    v.extend((1..=j_max).map(|j| ("gamma", j, None)));
    v.extend((1..=j_max.min(2)).map(|j| ("a_star", j, None)));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::Tail;
    use crate::tail::Method;

    fn sample_manifest() -> RunManifest {
        let mut m = RunManifest::new("euler-extremes tail --t 2 --y 50");
        m.seed = Some(42);
        m.quadrature.push(QuadratureSpec::default());
        m.constants.push(ConstantRow {
            name: "b".into(),
            j: 1,
            n: Some(2),
            value: 2.000000000000001,
            abs_error_estimate: Some(1e-13),
        });
        m.wall_time = Some(Duration::from_nanos(123_456_789));
        m
    }

    #[test]
    fn manifest_round_trip() {
        let m = sample_manifest();
        let back = RunManifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let est = TailEstimate {
            t: 2.0,
            y: 50.0,
            tail: Tail::Upper,
            log_value: -11.484_812_345_678_9,
            method: Method::SaddleGauss,
            error_indicator: 0.27067,
            j: None,
        };
        let rows = vec![TableRow::from_estimate(&est, None), TableRow { j: Some(2), seed: Some(7), ..TableRow::from_estimate(&est, None) }];
        let mut buf = Vec::new();
        write_csv(&mut buf, &sample_manifest(), &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), CSV_HEADER);
        let (m, back) = read_csv(&text).unwrap();
        assert_eq!(m, sample_manifest());
        assert_eq!(back, rows);
    }

    #[test]
    fn cache_hits_are_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let q = QuadratureSpec::default();
        let mut c = ConstantsCache::open(dir.path());
        let (first, hit) = c.coefficient_rows(2, &q).unwrap();
        assert!(!hit);
        c.save().unwrap();
        let mut c2 = ConstantsCache::open(dir.path());
        let (second, hit) = c2.coefficient_rows(2, &q).unwrap();
        assert!(hit);
        assert_eq!(first.len(), second.len());
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(a.value.to_bits(), b.value.to_bits(), "{}", a.name);
            assert_eq!(a.abs_error_estimate.map(f64::to_bits), b.abs_error_estimate.map(f64::to_bits));
        }
        fs::write(dir.path().join(CACHE_FILE), "not json").unwrap();
        assert!(ConstantsCache::open(dir.path()).is_empty());
    }
}
