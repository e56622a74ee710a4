use super::*;

const SP: &str = r#"
schema_version = 1
name = "sp"

[protocol]
kind = "sp"

[sweep]
eta_ae = [0.5]
eta_t = { mode = "scan", values = [0.3, 0.7, 1.0] }

[solver]
epsilon = 1e-10
"#;

fn config_error_path(text: &str) -> String {
    match RunConfig::from_toml_str(text) {
        Err(CliError::Config { path, .. }) => path,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn parses_and_round_trips() {
    let c = RunConfig::from_toml_str(SP).unwrap();
    assert_eq!(c.eta_t_values(0.5), vec![0.3, 0.7, 1.0]);
    assert_eq!(c.solver.max_iter, 300);
    let again = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
    assert_eq!(again, c);
}

#[test]
fn empty_eta_ae_is_rejected_with_its_path() {
    assert_eq!(config_error_path(&SP.replace("eta_ae = [0.5]", "eta_ae = []")), "sweep.eta_ae");
    assert_eq!(config_error_path(&SP.replace("eta_ae = [0.5]", "eta_ae = [0.5, 1.5]")), "sweep.eta_ae[1]");
    assert_eq!(config_error_path(&SP.replace("schema_version = 1", "schema_version = 9")), "schema_version");
    assert_eq!(config_error_path(&SP.replace("epsilon = 1e-10", "epsilon = 2.0")), "solver.epsilon");
}

#[test]
fn unknown_fields_are_schema_errors() {
    let err = RunConfig::from_toml_str(&SP.replace("[solver]", "[solver]\ntolerance = 1")).unwrap_err();
    assert!(matches!(err, CliError::Toml(_)));
    assert_eq!(err.exit_status(), ExitStatus::ConfigError);
    assert!(err.to_string().contains("tolerance"));
}

#[test]
fn double_click_weights_need_unit_eta_t() {
    let text = SP.replace(
        "[solver]",
        "weight = { mode = \"from_double_clicks\", q_dc = 1e-3, n = 2 }\n[solver]",
    );
    let text = text.replace("\n[sweep]", "\n[sweep]");
    assert_eq!(config_error_path(&text.replace("[solver]\nepsilon", "[solver]\nepsilon")), "sweep.eta_t");
    let fixed = text.replace(r#"{ mode = "scan", values = [0.3, 0.7, 1.0] }"#, r#"{ mode = "fixed", value = 1.0 }"#);
    let c = RunConfig::from_toml_str(&fixed).unwrap();
    assert!((c.weight(0.5).unwrap() - 4e-3).abs() < 1e-15);
}

#[test]
fn wcp_weight_includes_the_f_tail() {
    let text = r#"
schema_version = 1
[protocol]
kind = "wcp"
mu = 0.5
q = 0.02
[sweep]
eta_ae = [0.9]
eta_t = { mode = "fixed", value = 1.0 }
weight = { mode = "from_double_clicks", q_dc = 0.0, n = 2 }
"#;
    let c = RunConfig::from_toml_str(text).unwrap();
    assert_eq!(c.weight(0.9).unwrap(), crate::bounds::wcp_f_tail(0.5, 0.9, 2));
}

#[test]
fn sp_run_is_flat_and_deterministic() {
    let c = RunConfig::from_toml_str(SP).unwrap();
    let a = run(&c).unwrap();
    assert_eq!(a.exit, ExitStatus::Ok);
    assert_eq!(a.rows.len(), 3);
    assert!(!a.rows[0].feasible);
    assert_eq!(a.rows[0].status, "infeasible");
    assert!(a.rows[0].key_rate.is_nan());
    for r in &a.rows[1..] {
        assert!(r.feasible);
        assert!((r.key_rate - (r.lower_bound - r.ec_term)).abs() < 1e-15);
    }
    assert!((a.rows[1].key_rate - a.rows[2].key_rate).abs() < 1e-2 * a.rows[2].key_rate);
    assert_eq!(a.scans.len(), 1);
    assert_eq!(a.scans[0].feasible, vec![false, true, true]);

    let b = run(&c).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    write_csv(&a.rows, &mut x).unwrap();
    write_csv(&b.rows, &mut y).unwrap();
    assert_eq!(x, y);
    let header = String::from_utf8(x).unwrap().lines().next().unwrap().to_string();
    assert_eq!(
        header,
        "scenario_id,protocol,eta_ae,eta_t,W,fw_value,lower_bound,ec_term,key_rate,feasible,iterations,duality_gap,wall_time_ms,status"
    );
}

#[test]
fn infeasible_everywhere_has_its_own_exit_code() {
    let text = SP.replace("values = [0.3, 0.7, 1.0]", "values = [0.1, 0.2]");
    let report = run(&RunConfig::from_toml_str(&text).unwrap()).unwrap();
    assert_eq!(report.exit, ExitStatus::InfeasibleEverywhere);
    assert_eq!(report.exit.code(), 3);
}

#[test]
fn equal_mode_follows_eta_ae() {
    let text = SP.replace(r#"{ mode = "scan", values = [0.3, 0.7, 1.0] }"#, r#"{ mode = "equal_to_eta_ae" }"#);
    let c = RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(c.eta_t_values(0.5), vec![0.5]);
    assert!(!c.is_scan());
}

#[test]
fn figure_names() {
    for f in FigureName::ALL {
        assert_eq!(f.name().parse::<FigureName>().unwrap(), f);
    }
    assert!(matches!("fig9".parse::<FigureName>(), Err(CliError::UnknownFigure(_))));
}

#[test]
fn fig3_numerical_matches_normal_rate() {
    let fig = figure(FigureName::Fig3, &FigureOptions::default()).unwrap();
    let num = fig.values("sp", "numerical");
    let normal = fig.values("sp", "sp_normal");
    assert_eq!(num.len(), 10);
    for (a, b) in num.iter().zip(&normal) {
        assert!((a / b - 1.0).abs() < 0.01, "{a} vs {b}");
    }
    let svg = render_svg(&fig);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 3);
    let mut csv = Vec::new();
    fig.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 11);
}

#[test]
fn selftest_passes() {
    for c in selftest(7) {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}
