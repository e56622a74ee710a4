// Detector efficiency mismatch without noise: the certified rate agrees with the
// tilted-state closed form and does not depend on the bypass configuration.

use bypass_qkd::bounds::{self, PipelineOptions};
use bypass_qkd::protocol::{baseline, BypassParams, Scenario, SpNoiseModel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = SpNoiseModel::mismatched(0.0, 0.078, 1.0, 0.5);
    let tilted = baseline::tilted_rate(0.078, 1.0, 0.5);
    println!("tilted-state rate: {tilted:.7}");
    let opts = PipelineOptions { epsilon: Some(1e-10), ..Default::default() };
    for (eta_ae, eta_t) in [(1.0, 1.0), (0.5, 0.5), (0.8, 0.8), (0.8, 0.9)] {
        let s = Scenario::sp_mismatch(&model, BypassParams::new(eta_ae, eta_t)?)?;
        let p = bounds::evaluate(&s, &opts);
        match p.rate {
            Some(r) if p.status.has_rate() => println!(
                "eta_AE {eta_ae} eta_T {eta_t}: rate {:.7} (difference {:+.1e})",
                r.raw_key_rate,
                r.raw_key_rate - tilted
            ),
            _ => println!("eta_AE {eta_ae} eta_T {eta_t}: {}", p.status.name()),
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
