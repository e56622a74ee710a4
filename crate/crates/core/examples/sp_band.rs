// Matched single-photon BB84 at the Table-I operating point: the certified rate over
// the feasible band of the second transmissivity, against the no-bypass closed form.

use bypass_qkd::bounds::{self, PipelineOptions};
use bypass_qkd::protocol::{self, baseline, QberFormula, Scenario, SpNoiseModel};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = SpNoiseModel::table_one();
    let (q, e) = protocol::sp_statistics(&model, QberFormula::Corrected)?;
    let normal = baseline::sp_normal(model.p_z, q, e);
    println!("Q = {q:.4e}, E = {e:.4e}, closed-form rate without bypass = {normal:.4e}");

    let opts = PipelineOptions { epsilon: Some(1e-10), ..Default::default() };
    let eta_ae = 0.5;
    let scan = bounds::scan_eta_t(|b| Ok(Scenario::sp_matched(&model, b)?), eta_ae, &bounds::default_grid(5), &opts)?;
    for p in &scan.points {
        match p.rate {
            Some(r) if p.status.has_rate() => println!(
                "eta_AE {eta_ae} eta_T {:.2}: rate {:.6e} (ratio {:.4}), {} FW iterations",
                p.bypass.eta_t,
                r.raw_key_rate,
                r.raw_key_rate / normal,
                p.iterations
            ),
            _ => println!("eta_AE {eta_ae} eta_T {:.2}: {}", p.bypass.eta_t, p.status.name()),
        }
    }
    if let (Some(r), Some(t)) = (scan.min_rate(), scan.argmin_eta_t()) {
        println!("minimum over eta_T: {r:.6e} at eta_T = {t}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
