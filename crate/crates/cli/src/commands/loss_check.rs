use std::path::PathBuf;

use anyhow::{bail, Result};
use panmix::losses::gradcheck::{check_all, REL_TOLERANCE};

use crate::files;
use crate::report::table;
use crate::Global;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Random instances per loss.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = REL_TOLERANCE)]
    tolerance: f64,
    /// Also write the results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

pub fn run(args: Args, g: &Global) -> Result<()> {
    if args.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let reports = check_all(args.trials, g.seed_or(0))?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.loss.clone(),
                r.trials.to_string(),
                r.parameters_checked.to_string(),
                format!("{:.2e}", r.max_rel_error),
                if r.passed(args.tolerance) { "PASS" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    print!("{}", table(&["loss", "trials", "parameters", "max_rel_error", "result"], &rows));
    if let Some(path) = &args.json {
        // Errors this small would round to zero at 4 decimals.
        let raw: Vec<_> = reports
            .iter()
            .map(|r| {
                serde_json::json!({
                    "loss": r.loss,
                    "trials": r.trials,
                    "parameters_checked": r.parameters_checked,
                    "max_rel_error": r.max_rel_error,
                    "passed": r.passed(args.tolerance),
                })
            })
            .collect();
        files::write_json(path, &serde_json::json!({"tolerance": args.tolerance, "losses": raw}))?;
    }
    let failed = reports.iter().filter(|r| !r.passed(args.tolerance)).count();
    if failed > 0 {
        bail!("{failed} loss gradients exceed tolerance {}", args.tolerance);
    }
    Ok(())
}
