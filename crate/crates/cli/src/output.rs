//! Output tables and the run manifest.
//!
//! Every CSV file starts with one comment line
//! `# covertime <version> command=<command> master_seed=<seed>` followed by
//! a header row. Numbers use the shortest representation that round-trips,
//! and empty fields mean "not defined" (a prediction below `N = 2`, say).
//!
//! | file          | columns |
//! |---------------|---------|
//! | `moments.csv` | `scenario_id,N,m,estimate,stderr,prediction,ratio,replicas,seed` |
//! | `samples.csv` | `scenario_id,N,replica,sigma,seed` |
//! | `summary.csv` | `scenario_id,N,replicas,mean,mean_stderr,cv,cv_stderr,trivially_covered,dt,seed` |
//! | `predict.csv` | `scenario_id,N,m,theorem1,theorem2,t_d,rescaling,log_n,conjecture,regime` |
//! | `regimes.csv` | `scenario_id,N,mean_single,rescaling,log_n,conjecture,regime,estimate,crossover_N` |
//! | `convergence.csv` | `scenario_id,N,level,dx,dt,ds,estimate,stderr,replicas,seed` |
//! | `lemma.csv`   | `case,k,max,inclusion_exclusion,rel_error,pass` |

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ScenarioConfig;

pub const MOMENTS_HEADER: &[&str] = &[
    "scenario_id",
    "N",
    "m",
    "estimate",
    "stderr",
    "prediction",
    "ratio",
    "replicas",
    "seed",
];
pub const SAMPLES_HEADER: &[&str] = &["scenario_id", "N", "replica", "sigma", "seed"];
pub const SUMMARY_HEADER: &[&str] = &[
    "scenario_id",
    "N",
    "replicas",
    "mean",
    "mean_stderr",
    "cv",
    "cv_stderr",
    "trivially_covered",
    "dt",
    "seed",
];
pub const PREDICT_HEADER: &[&str] = &[
    "scenario_id",
    "N",
    "m",
    "theorem1",
    "theorem2",
    "t_d",
    "rescaling",
    "log_n",
    "conjecture",
    "regime",
];
pub const REGIMES_HEADER: &[&str] = &[
    "scenario_id",
    "N",
    "mean_single",
    "rescaling",
    "log_n",
    "conjecture",
    "regime",
    "estimate",
    "crossover_N",
];
pub const CONVERGENCE_HEADER: &[&str] = &[
    "scenario_id",
    "N",
    "level",
    "dx",
    "dt",
    "ds",
    "estimate",
    "stderr",
    "replicas",
    "seed",
];
pub const LEMMA_HEADER: &[&str] = &[
    "case",
    "k",
    "max",
    "inclusion_exclusion",
    "rel_error",
    "pass",
];

/// A CSV table held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub comment: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, command: &str, seeds: &[u64], header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            comment: header_comment(command, seeds),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = format!("{}\n", self.comment).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.header).expect("in-memory write");
            for row in &self.rows {
                w.write_record(row).expect("in-memory write");
            }
            w.flush().expect("in-memory write");
        }
        buf
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(&self.name);
        fs::write(&path, self.to_bytes())?;
        Ok(path)
    }
}

pub fn header_comment(command: &str, seeds: &[u64]) -> String {
    let mut s: Vec<u64> = seeds.to_vec();
    s.sort_unstable();
    s.dedup();
    let seeds: Vec<String> = s.iter().map(u64::to_string).collect();
    format!(
        "# covertime {} command={command} master_seed={}",
        env!("CARGO_PKG_VERSION"),
        seeds.join(",")
    )
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Config echo, seeds and versions of one run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub master_seeds: Vec<u64>,
    pub threads: Option<usize>,
    pub files: Vec<String>,
    pub warnings: &'a [String],
    pub scenarios: &'a [ScenarioConfig],
}

impl<'a> Manifest<'a> {
    pub fn new(
        command: &'a str,
        scenarios: &'a [ScenarioConfig],
        warnings: &'a [String],
        threads: Option<usize>,
    ) -> Self {
        let mut seeds: Vec<u64> = scenarios.iter().map(|c| c.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        Self {
            tool: "covertime",
            version: env!("CARGO_PKG_VERSION"),
            command,
            master_seeds: seeds,
            threads,
            files: Vec::new(),
            warnings,
            scenarios,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
