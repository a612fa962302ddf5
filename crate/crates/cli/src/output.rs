//! File helpers and the report envelope shared by every command.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use geomatch_core::geo_io::{parse_geojson_with, CrsMode, FeatureSet};
use geomatch_core::pairs::{read_pairs, write_pairs, PairRecord};
use geomatch_core::report::SCHEMA_VERSION;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Header fields wrapped around every command's result.
#[derive(Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config_hash: String,
    pub seeds: BTreeMap<&'a str, u64>,
    /// sha256 of each input file, keyed by role.
    pub inputs: BTreeMap<&'a str, String>,
    pub result: T,
}

pub struct Reporter<'a> {
    command: &'a str,
    config_hash: String,
    seeds: BTreeMap<&'a str, u64>,
    inputs: BTreeMap<&'a str, String>,
}

impl<'a> Reporter<'a> {
    pub fn new(command: &'a str, cfg: &RunConfig) -> Self {
        Reporter {
            command,
            config_hash: cfg.hash(),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn seed(&mut self, name: &'a str, value: u64) -> &mut Self {
        self.seeds.insert(name, value);
        self
    }

    pub fn input(&mut self, role: &'a str, path: &Path) -> Result<&mut Self> {
        self.inputs.insert(role, file_sha256(path)?);
        Ok(self)
    }

    /// Writes the report to `path`, or to stdout when no path is given.
    pub fn emit<T: Serialize>(&self, result: T, path: Option<&Path>) -> Result<()> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            command: self.command,
            config_hash: self.config_hash.clone(),
            seeds: self.seeds.clone(),
            inputs: self.inputs.clone(),
            result,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        match path {
            Some(p) => std::fs::write(p, text).with_context(|| format!("writing report {}", p.display())),
            None => {
                std::io::stdout().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn read_geojson(path: &Path, crs: CrsMode) -> Result<FeatureSet> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_geojson_with(&bytes, crs).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_pair_file(path: &Path, crs: CrsMode) -> Result<Vec<PairRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_pairs(BufReader::new(f), crs).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_pair_file(path: &Path, pairs: &[PairRecord]) -> Result<()> {
    write_lines(path, |w| write_pairs(w, pairs))
}

pub fn read_jsonl_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    geomatch_core::synth::read_jsonl(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_jsonl_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_lines(path, |w| geomatch_core::synth::write_jsonl(w, rows))
}

pub fn write_lines(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
