use std::process::ExitCode;

use anyhow::Result;
use fusemap_core::seqmodel::grad_check;

#[derive(Debug, clap::Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: &GradCheckArgs) -> Result<ExitCode> {
    let report = grad_check(args.seed);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
