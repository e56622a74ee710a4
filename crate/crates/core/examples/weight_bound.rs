// Weight outside the truncated space from the observed double-click rate, with the
// F-marginal tail added for weak coherent pulses.

use bypass_qkd::bounds;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    for n in 2..=5 {
        let r = bounds::weight_bound(1e-4, n, 0.5, 0.0)?;
        println!("N = {n}: lambda_min^{} = {:.6}, W_B = {:.4e}", n + 1, r.lambda, r.w_b);
    }
    let w_f = bounds::wcp_f_tail(0.8, 0.9, 2);
    let r = bounds::weight_bound(1e-6, 2, 0.5, w_f)?;
    println!("WCP (mu 0.8, eta_AE 0.9, N 2): W_B {:.3e} + W_F {:.3e} = W {:.3e}", r.w_b, r.w_f, r.w);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
