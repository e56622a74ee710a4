// Lower edge of the feasible transmissivity band: a coarse scan followed by bisection
// on the feasibility program alone.

use bypass_qkd::bounds::{self, MarginalConstraint};
use bypass_qkd::protocol::{Scenario, SpNoiseModel};
use bypass_qkd::sdp::{self, Feasibility, Tolerances};
use bypass_qkd::protocol::BypassParams;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = SpNoiseModel::table_one();
    let build = |b| Ok(Scenario::sp_matched(&model, b)?);
    for eta_ae in [0.2, 0.5, 0.8] {
        let grid = bounds::default_grid(10);
        let mut mask = Vec::new();
        for &t in &grid {
            let spec = bounds::assemble_constraints(&build(BypassParams::new(eta_ae, t)?)?, MarginalConstraint::AliceAndF)?;
            mask.push(matches!(sdp::check_feasibility(spec.template(), &Tolerances::default())?, Feasibility::Feasible { .. }));
        }
        let Some(first) = mask.iter().position(|&f| f) else {
            println!("eta_AE {eta_ae}: nothing feasible");
            continue;
        };
        if first == 0 {
            println!("eta_AE {eta_ae}: feasible from eta_T = {}", grid[0]);
            continue;
        }
        let edge = bounds::refine_band_edge(build, eta_ae, grid[first - 1], grid[first], 1e-4)?;
        println!("eta_AE {eta_ae}: feasible for eta_T >= {edge:.4} (grid: {mask:?})");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
