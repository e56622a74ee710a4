//! Every example runs to completion.

macro_rules! example {
    ($module:ident, $test:ident) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", stringify!($module), ".rs"));
        }

        #[test]
        fn $test() {
            $module::run_example().expect(concat!(stringify!($module), " example should run"));
        }
    };
}

example!(fock_basics, fock_basics_runs);
example!(bob_povm, bob_povm_runs);
example!(keyrate_objective, keyrate_objective_runs);
example!(sdp_solve, sdp_solve_runs);
example!(weight_bound, weight_bound_runs);
example!(sp_band, sp_band_runs);
example!(band_edge, band_edge_runs);
example!(mismatch_tilted, mismatch_tilted_runs);
example!(wcp_point, wcp_point_runs);
example!(run_config, run_config_runs);
example!(figure_data, figure_data_runs);
