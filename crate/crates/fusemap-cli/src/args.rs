//! Flag parsing helpers shared by the subcommands: human-friendly units and
//! workload resolution.
//!
//! Sizes use binary suffixes (64MiB = 64 * 2^20 bytes); bandwidths and clock
//! rates use decimal ones (2GB/s = 2e9 B/s), matching datasheet convention.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use fusemap_core::costmodel::AcceleratorConfig;
use fusemap_core::workload::{builtin, builtin_names, Workload};

pub fn parse_bytes(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (digits, suffix) = s.split_at(split);
    if digits.is_empty() {
        return Err(format!("'{s}': expected a number with an optional KiB/MiB/GiB suffix"));
    }
    let value: u64 = digits.parse().map_err(|_| format!("'{digits}': not a whole number"))?;
    let scale: u64 = match suffix.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "kib" => 1 << 10,
        "mib" => 1 << 20,
        "gib" => 1 << 30,
        "kb" | "mb" | "gb" => {
            return Err(format!(
                "'{s}': sizes use binary suffixes (KiB, MiB, GiB) or plain bytes"
            ))
        }
        other => return Err(format!("'{s}': unknown size suffix '{other}'")),
    };
    value
        .checked_mul(scale)
        .ok_or_else(|| format!("'{s}': size overflows 64 bits"))
}

pub fn parse_bandwidth(s: &str) -> Result<f64, String> {
    parse_decimal(s, "B/s", &[("gb/s", 1e9), ("mb/s", 1e6), ("kb/s", 1e3), ("b/s", 1.0)])
}

pub fn parse_frequency(s: &str) -> Result<f64, String> {
    parse_decimal(s, "Hz", &[("ghz", 1e9), ("mhz", 1e6), ("khz", 1e3), ("hz", 1.0)])
}

fn parse_decimal(s: &str, unit: &str, scales: &[(&str, f64)]) -> Result<f64, String> {
    let s = s.trim();
    let split = s.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(s.len());
    let (digits, suffix) = s.split_at(split);
    let value: f64 = digits.parse().map_err(|_| format!("'{s}': expected a number"))?;
    let suffix = suffix.trim().to_ascii_lowercase();
    let scale = if suffix.is_empty() {
        1.0
    } else {
        scales
            .iter()
            .find(|(name, _)| *name == suffix)
            .map(|(_, scale)| *scale)
            .ok_or_else(|| format!("'{s}': unknown {unit} suffix '{suffix}'"))?
    };
    let out = value * scale;
    if !out.is_finite() || out <= 0.0 {
        return Err(format!("'{s}': must be a positive finite {unit} value"));
    }
    Ok(out)
}

/// Accelerator description, defaulting to an edge-class part where layer
/// fusion is bandwidth-bound and therefore visible. Pass datacenter-class
/// values (e.g. --offchip-bw 900GB/s --onchip-bw 9000GB/s) to model a part
/// that is compute-bound instead.
#[derive(Debug, Args)]
pub struct AccelArgs {
    /// Multiply-accumulate units.
    #[arg(long, default_value_t = 1024)]
    pub pes: u64,
    /// Core clock, e.g. 1GHz.
    #[arg(long, default_value = "1GHz", value_parser = parse_frequency)]
    pub frequency: f64,
    /// Off-chip (DRAM) bandwidth, e.g. 2GB/s.
    #[arg(long, default_value = "2GB/s", value_parser = parse_bandwidth)]
    pub offchip_bw: f64,
    /// On-chip buffer bandwidth, e.g. 20GB/s.
    #[arg(long, default_value = "20GB/s", value_parser = parse_bandwidth)]
    pub onchip_bw: f64,
    /// On-chip buffer capacity, e.g. 64MiB.
    #[arg(long, default_value = "64MiB", value_parser = parse_bytes)]
    pub buffer: u64,
}

impl AccelArgs {
    pub fn to_config(&self) -> AcceleratorConfig {
        AcceleratorConfig {
            pes: self.pes,
            frequency_hz: self.frequency,
            bw_offchip: self.offchip_bw,
            bw_onchip: self.onchip_bw,
            onchip_buffer: self.buffer,
        }
    }
}

/// Resolves a workload argument: a JSON file path, `builtin:NAME`, or a bare
/// builtin name. Returns the source path when the workload came from a file
/// so the manifest can hash it.
pub fn load_workload(spec: &str) -> Result<(Workload, Option<PathBuf>)> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let w = builtin(name)
            .with_context(|| format!("workload '{spec}' (builtins: {})", builtin_names().join(", ")))?;
        return Ok((w, None));
    }
    let path = PathBuf::from(spec);
    if path.exists() {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading workload file '{spec}'"))?;
        let w = Workload::from_json(&text)
            .with_context(|| format!("parsing workload file '{spec}'"))?;
        return Ok((w, Some(path)));
    }
    if builtin_names().contains(&spec) {
        return Ok((builtin(spec)?, None));
    }
    bail!(
        "workload '{spec}': no such file, and not a builtin (available: {})",
        builtin_names().join(", ")
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_sizes_use_binary_suffixes() {
        assert_eq!(parse_bytes("64MiB").unwrap(), 64 << 20);
        assert_eq!(parse_bytes("512KiB").unwrap(), 512 << 10);
        assert_eq!(parse_bytes("2GiB").unwrap(), 2 << 30);
        assert_eq!(parse_bytes("1000").unwrap(), 1000);
        assert_eq!(parse_bytes("128B").unwrap(), 128);
        assert_eq!(parse_bytes(" 16 MiB ").unwrap(), 16 << 20);
        assert!(parse_bytes("64MB").unwrap_err().contains("binary"));
        assert!(parse_bytes("fast").is_err());
        assert!(parse_bytes("1.5MiB").is_err());
    }

    #[test]
    fn bandwidth_and_frequency_are_decimal() {
        assert_eq!(parse_bandwidth("2GB/s").unwrap(), 2e9);
        assert_eq!(parse_bandwidth("900GB/s").unwrap(), 900e9);
        assert_eq!(parse_bandwidth("0.5GB/s").unwrap(), 0.5e9);
        assert_eq!(parse_bandwidth("1500").unwrap(), 1500.0);
        assert_eq!(parse_frequency("1GHz").unwrap(), 1e9);
        assert_eq!(parse_frequency("700MHz").unwrap(), 7e8);
        assert!(parse_bandwidth("-1GB/s").is_err());
        assert!(parse_frequency("0").is_err());
    }

    #[test]
    fn workloads_resolve_from_builtins_and_files() {
        assert_eq!(load_workload("builtin:vgg16").unwrap().0.name, "vgg16");
        assert_eq!(load_workload("resnet18").unwrap().0.name, "resnet18");
        assert!(load_workload("builtin:vgg19").is_err());
        assert!(load_workload("/no/such/file.json").is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let json = serde_json::to_string(&load_workload("vgg16").unwrap().0).unwrap();
        std::fs::write(&path, json).unwrap();
        let (w, src) = load_workload(path.to_str().unwrap()).unwrap();
        assert_eq!(w.name, "vgg16");
        assert_eq!(src.unwrap(), path);
    }
}
