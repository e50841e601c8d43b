//! Writes an [`ExperimentReport`] to disk: four CSV tables and a manifest.
//! Output depends only on the report, so reruns are byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::harness::ExperimentReport;
use crate::model::clock;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const SUMMARY_FILE: &str = "summary.csv";
pub const LEFT_BEHIND_FILE: &str = "left_behind.csv";
pub const BINS_FILE: &str = "bins.csv";
pub const TRAVEL_FILE: &str = "travel_time.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn seed_list(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
}

fn header(seeds: &[u64]) -> String {
    format!("# {TOOL_NAME} {TOOL_VERSION}\n# seeds: {}\n", seed_list(seeds))
}

fn table(seeds: &[u64], write: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = header(seeds).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        write(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn f3(v: f64) -> String {
    format!("{v:.3}")
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}%", 100.0 * x)).unwrap_or_else(|| "-".into())
}

fn mean_over<T>(cells: &[T], f: impl Fn(&T) -> f64) -> f64 {
    if cells.is_empty() {
        0.0
    } else {
        cells.iter().map(f).sum::<f64>() / cells.len() as f64
    }
}

pub fn summary_csv(r: &ExperimentReport) -> Result<Vec<u8>> {
    table(&r.seeds, |w| {
        w.write_record([
            "Strategy",
            "Average waiting time (min)",
            "Improvement to S1-N/S1",
            "Standard deviation",
            "Average waiting time seed std (min)",
            "Average travel time (min)",
            "Travel time standard deviation",
            "Left-behind passengers",
            "Spare capacity",
            "Total waiting time (pax-min)",
            "Third-train violation",
        ])?;
        for s in &r.summary {
            w.write_record([
                s.label.clone(),
                f3(s.average_wait),
                pct(s.improvement),
                format!("{:.2}", s.bin_wait_std),
                f3(s.average_wait_seed_std),
                f3(s.travel_time),
                f3(s.travel_time_std),
                format!("{:.2}", s.left_behind),
                format!("{:.2}", s.z1),
                format!("{:.2}", s.z2),
                format!("{:.2}", s.violation),
            ])?;
        }
        Ok(())
    })
}

/// Mean left-behind per (strategy, train, station) over seeds.
pub fn left_behind_csv(r: &ExperimentReport) -> Result<Vec<u8>> {
    table(&r.seeds, |w| {
        w.write_record(["strategy", "train", "station", "departure", "left_behind"])?;
        for (label, runs) in r.labels.iter().zip(&r.cells) {
            let Some(first) = runs.first() else { continue };
            for k in 0..first.left_behind.rows() {
                for i in 0..first.left_behind.cols() {
                    let dep = mean_over(runs, |c| c.departures[(k, i)]);
                    let lb = mean_over(runs, |c| c.left_behind[(k, i)]);
                    w.write_record([label.clone(), (k + 1).to_string(), (i + 1).to_string(), clock::format(dep), format!("{lb:.2}")])?;
                }
            }
        }
        Ok(())
    })
}

/// Mean per-bin hub demand, hub boarding and average wait over seeds.
pub fn bins_csv(r: &ExperimentReport) -> Result<Vec<u8>> {
    table(&r.seeds, |w| {
        w.write_record(["strategy", "bin_start", "hub_demand", "hub_boarded", "passengers", "average_wait"])?;
        for (label, runs) in r.labels.iter().zip(&r.cells) {
            let Some(first) = runs.first() else { continue };
            for (b, bin) in first.bins.iter().enumerate() {
                w.write_record([
                    label.clone(),
                    clock::format(bin.start),
                    format!("{:.2}", mean_over(runs, |c| c.bins[b].hub_demand)),
                    format!("{:.2}", mean_over(runs, |c| c.bins[b].hub_boarded)),
                    format!("{:.2}", mean_over(runs, |c| c.bins[b].passengers)),
                    f3(mean_over(runs, |c| c.bins[b].average_wait)),
                ])?;
            }
        }
        Ok(())
    })
}

/// Trip time of every train for every seed.
pub fn travel_csv(r: &ExperimentReport) -> Result<Vec<u8>> {
    table(&r.seeds, |w| {
        w.write_record(["strategy", "seed", "train", "travel_time"])?;
        for (label, runs) in r.labels.iter().zip(&r.cells) {
            for c in runs {
                for (k, t) in c.travel_times.iter().enumerate() {
                    w.write_record([label.clone(), c.seed.to_string(), (k + 1).to_string(), f3(*t)])?;
                }
            }
        }
        Ok(())
    })
}

#[derive(Debug, Serialize)]
struct FileEntry {
    name: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config_sha256: String,
    config: serde_json::Value,
    seeds: &'a [u64],
    warmup: f64,
    strategies: &'a [String],
    files: Vec<FileEntry>,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    config: serde_json::Value,
    inputs: Vec<FileEntry>,
    files: Vec<FileEntry>,
}

fn hash_files(paths: &[PathBuf], full_name: bool) -> Result<Vec<FileEntry>> {
    paths
        .iter()
        .map(|p| {
            let name = if full_name { p.display().to_string() } else { p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default() };
            Ok(FileEntry { name, sha256: sha256_hex(&fs::read(p)?) })
        })
        .collect()
}

/// Writes `manifest.json` for a single optimize or simulate run: the command,
/// seed, full config and hashes of the input files and of every file the run
/// produced.
pub fn write_run_manifest(dir: &Path, command: &str, seed: u64, config_json: &str, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<PathBuf> {
    let inputs = hash_files(inputs, true)?;
    let files = hash_files(outputs, false)?;
    let manifest = RunManifest {
        tool: TOOL_NAME,
        version: TOOL_VERSION,
        command,
        seed,
        config_sha256: sha256_hex(config_json.as_bytes()),
        config: serde_json::from_str(config_json)?,
        inputs,
        files,
    };
    let p = dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&p)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    Ok(p)
}

/// Writes the report under `dir` and returns the written paths. With no
/// strategies only the manifest is written.
pub fn emit_report(r: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut outputs: Vec<(&str, Vec<u8>)> = Vec::new();
    if !r.labels.is_empty() {
        outputs.push((SUMMARY_FILE, summary_csv(r)?));
        outputs.push((LEFT_BEHIND_FILE, left_behind_csv(r)?));
        outputs.push((BINS_FILE, bins_csv(r)?));
        outputs.push((TRAVEL_FILE, travel_csv(r)?));
    }
    let mut written = Vec::new();
    let mut files = Vec::new();
    for (name, bytes) in &outputs {
        let p = dir.join(name);
        fs::write(&p, bytes)?;
        files.push(FileEntry { name: name.to_string(), sha256: sha256_hex(bytes) });
        written.push(p);
    }
    let manifest = Manifest {
        tool: TOOL_NAME,
        version: TOOL_VERSION,
        config_sha256: sha256_hex(r.config_json.as_bytes()),
        config: serde_json::from_str(&r.config_json)?,
        seeds: &r.seeds,
        warmup: r.warmup,
        strategies: &r.labels,
        files,
    };
    let p = dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&p)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    written.push(p);
    Ok(written)
}
