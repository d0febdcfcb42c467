use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gwnet::MeasureNetwork;

use crate::{Common, OutFormat};

pub fn read_network(path: &Path) -> Result<MeasureNetwork> {
    MeasureNetwork::read_auto(path).with_context(|| format!("reading {}", path.display()))
}

/// Network files (`.json`, `.csv`) of a directory in name order, with
/// their file stems.
pub fn read_dir(dir: &Path) -> Result<(Vec<MeasureNetwork>, Vec<String>)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("json") || e.eq_ignore_ascii_case("csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .json or .csv network files in {}", dir.display());
    }
    let nets = paths.iter().map(|p| read_network(p)).collect::<Result<Vec<_>>>()?;
    let names = paths
        .iter()
        .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    Ok((nets, names))
}

/// Writes `bytes` to `--out`, or standard output.
pub fn emit(common: &Common, bytes: &[u8]) -> Result<()> {
    match &common.out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn network_bytes(net: &MeasureNetwork, format: OutFormat) -> Result<Vec<u8>> {
    Ok(match format {
        OutFormat::Json => {
            let mut s = net.to_json_string()?;
            s.push('\n');
            s.into_bytes()
        }
        OutFormat::Csv => {
            let mut buf = Vec::new();
            net.write_csv(&mut buf)?;
            buf
        }
    })
}

pub fn json_bytes(value: &serde_json::Value) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Directory for commands that write one file per network.
pub fn out_dir(common: &Common) -> Result<&Path> {
    let dir = common
        .out
        .as_deref()
        .context("--format csv writes one file per network and needs --out <dir>")?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}
