// Phase-randomised weak coherent pulses truncated to two photons: one certified point
// with its feasibility margin, Frank-Wolfe trace and the certificate breakdown.

use bypass_qkd::bounds::{self, MarginalConstraint, PipelineOptions};
use bypass_qkd::protocol::{BypassParams, Scenario, WcpModel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = WcpModel::new(0.5, 0.02, 0.5);
    let scenario = Scenario::wcp(&model, BypassParams::new(0.9, 1.0)?, 0.0)?;
    let spec = bounds::assemble_constraints(&scenario, MarginalConstraint::AliceAndF)?;
    println!(
        "state dimension {}, photon-layer blocks {:?}, {} constraint rows",
        scenario.dim(),
        spec.block_dims(),
        spec.template().constraints.len()
    );
    let p = bounds::evaluate(&scenario, &PipelineOptions { epsilon: Some(1e-11), ..Default::default() });
    println!(
        "status {}, feasibility margin {:?}, {} FW iterations ({}), {} ms",
        p.status.name(),
        p.margin,
        p.iterations,
        p.stop.map(|s| s.name()).unwrap_or("-"),
        p.wall_time_ms
    );
    if let Some(r) = p.rate {
        println!(
            "f_eps(rho*) {:.6}, lower bound {:.6}, zeta {:.1e}, EC {:.6}, key rate {:.6}",
            r.fw_value, r.lower_bound, r.zeta, r.ec_term, r.raw_key_rate
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
