// A TOML run configuration evaluated end to end, with the result table as CSV.

use std::path::Path;

use bypass_qkd::cli::{self, RunConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/sp_scan.toml");
    let config = RunConfig::load(&path)?;
    println!("{}: {} eta_AE values, eta_T {:?}", config.label(), config.sweep.eta_ae.len(), config.eta_t_values(0.5));
    let report = cli::run(&config)?;
    cli::write_csv(&report.rows, std::io::stdout().lock())?;
    for s in &report.scans {
        println!("eta_AE {}: minimum {:?} at eta_T {:?}", s.eta_ae, s.min_key_rate, s.argmin_eta_t);
    }
    println!("exit status {}", report.exit.code());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
