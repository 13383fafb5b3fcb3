use std::process::ExitCode;

use anyhow::Result;
use fusemap_core::workload::{builtin, builtin_names};

pub fn run() -> Result<ExitCode> {
    println!("{:<14} {:>7} {:>16} {:>12}", "name", "layers", "macs_batch1", "weights_mib");
    for name in builtin_names() {
        let w = builtin(name)?;
        let macs: u64 = w.layers.iter().map(|l| l.macs(1)).sum();
        let weights: u64 = w.layers.iter().map(|l| l.weight_bytes(w.bytes_per_element)).sum();
        println!(
            "{:<14} {:>7} {:>16} {:>12.1}",
            name,
            w.num_layers(),
            macs,
            weights as f64 / (1 << 20) as f64
        );
    }
    Ok(ExitCode::SUCCESS)
}
