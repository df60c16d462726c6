//! Output files and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Identity of the random generator behind every sample.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.3), one stream per sample chain, seeded by seed_from_u64";

pub const WARN_UNCERTIFIED: &str =
    "recurrence profile is empirical and uncertified: the base map is not minimal, so L(eps) was measured along typical orbits";
pub const WARN_SPLIT_HYPOTHESES: &str =
    "the base map is not both minimal and of positive entropy; those hypotheses are exercised on separate testbeds";
pub const WARN_CHART: &str =
    "the chart around the stopped point matches the metric balls only up to bi-Lipschitz distortion near seams";

pub fn warn_excluded(count: usize, label: &str) -> String {
    format!("{count} cloud points excluded from {label}: orbit within 1e-9 of the stopped point or clock failure")
}

/// A number with 17 significant digits, or `inf`, `-inf`, `nan`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Plain CSV text with a fixed header.
#[derive(Debug, Clone)]
pub struct Csv {
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { columns: header.len(), text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width differs from the header");
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DerivedSequences {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub betas: Vec<f64>,
    /// `(ε, L(ε))`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub l_values: Vec<(f64, u64)>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub l_sequence: Vec<f64>,
    /// Profile indices whose `β` was lowered to keep the sequence decreasing.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub adjusted_betas: Vec<usize>,
}

/// Written next to the outputs of every run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub rng: String,
    pub derived: DerivedSequences,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
    /// `complete`, or `failed: <error>` with the outputs written so far.
    pub status: String,
    /// Wall-clock seconds per stage; the only field that varies between runs.
    pub timings: BTreeMap<String, f64>,
}

/// Collects output files of one run and writes the manifest last.
#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
    pub manifest: RunManifest,
    started: Instant,
}

impl RunWriter {
    pub fn new(dir: &Path, command: &str, config: &ExperimentConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        // the manifest sits in the output directory, so the path is not recorded
        let config = ExperimentConfig { output_dir: None, ..config.clone() };
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                tool: "flowlab".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config,
                rng: RNG_ALGORITHM.into(),
                derived: DerivedSequences::default(),
                warnings: Vec::new(),
                outputs: Vec::new(),
                status: "running".into(),
                timings: BTreeMap::new(),
            },
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.into());
        }
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, csv: &Csv) -> Result<()> {
        self.write(name, csv.as_str())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, &text)
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let m = message.into();
        if !self.manifest.warnings.contains(&m) {
            self.manifest.warnings.push(m);
        }
    }

    /// Records the time since the previous mark under `stage`.
    pub fn mark(&mut self, stage: &str) {
        let now = Instant::now();
        self.manifest.timings.insert(stage.into(), (now - self.started).as_secs_f64());
        self.started = now;
    }

    /// Writes `manifest.json` with the final status.
    pub fn finish(mut self, error: Option<&Error>) -> Result<()> {
        self.manifest.status = match error {
            None => "complete".into(),
            Some(e) => format!("failed: {e}"),
        };
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

/// Manifest text with the `timings` object removed, for comparing runs.
pub fn manifest_without_timings(text: &str) -> Result<String> {
    let mut v: serde_json::Value = serde_json::from_str(text)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timings");
    }
    Ok(serde_json::to_string_pretty(&v)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 123456.789] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn manifest_lists_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RunWriter::new(dir.path(), "test", &ExperimentConfig::default()).unwrap();
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(&[num(1.0), num(2.0)]);
        w.write_csv("x.csv", &csv).unwrap();
        w.warn(WARN_UNCERTIFIED);
        w.mark("all");
        w.finish(None).unwrap();
        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["outputs"][0], "x.csv");
        assert_eq!(v["status"], "complete");
        assert_eq!(v["warnings"][0], WARN_UNCERTIFIED);
        assert!(!manifest_without_timings(&text).unwrap().contains("timings"));
    }
}
