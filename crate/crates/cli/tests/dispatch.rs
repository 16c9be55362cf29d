use serde_json::{json, Value};
use survpower_cli::{dispatch, Command, ErrorClass};

fn run(command: Command, payload: Value) -> Value {
    dispatch(command, payload.to_string().as_bytes(), None)
        .unwrap_or_else(|e| panic!("{command}: {e}"))
        .body
}

fn fails(command: Command, payload: Value) -> survpower_cli::ApiError {
    dispatch(command, payload.to_string().as_bytes(), None).unwrap_err()
}

const Z95: f64 = 1.644_853_626_951_472_2;
const Z80: f64 = 0.841_621_233_572_914_3;

#[test]
fn rct_sizes_by_hand() {
    let body = run(
        Command::Rct,
        json!({"r": 0.5, "hr": 0.6, "d": 1, "alpha": 0.05, "power": 0.8}),
    );
    // Balanced trial: (λ1+λ0)²(λ1²+λ0²)/2 with λ1² = HR.
    let v = (0.6 + 1.0 / 0.6 + 2.0) * (0.6 + 1.0 / 0.6) / 2.0;
    let tau2 = 0.6f64.ln().powi(2);
    let z2 = (Z95 + Z80).powi(2);
    assert_eq!(body["n"], (z2 * v / tau2).ceil() as u64);
    assert_eq!(body["n"], 115);
    assert!((body["variance_units"].as_f64().unwrap() - v).abs() < 1e-12);
    // Schoenfeld's 4 events per unit of (z sum / tau)^2 at d = 1.
    assert_eq!(body["comparators"]["schoenfeld_n"], (z2 * 4.0 / tau2).ceil() as u64);
    assert_eq!(body["comparators"]["schoenfeld_n"], 95);
    assert!(body["comparators"].get("hsieh_lavori_n").is_none());
    assert_eq!(body["expected_events"], 115.0);
    assert_eq!(body["engine_version"], survpower_core::VERSION);
    assert!(body.get("seed").is_none());
    let p = body["achieved_power"].as_f64().unwrap();
    assert!((0.8..0.81).contains(&p));
}

#[test]
fn freedman_comparator_by_hand() {
    let body = run(Command::Rct, json!({"r": 0.3, "hr": 0.7, "d": 0.6}));
    let (r, hr) = (0.3f64, 0.7f64);
    let tau = hr.ln();
    let per_event = ((1.0 - r + r * hr) / (1.0 - hr)).powi(2) / (r * (1.0 - r)) * tau * tau;
    let events = (Z95 + Z80).powi(2) * per_event / (tau * tau);
    assert_eq!(body["comparators"]["freedman_n"], (events / 0.6).ceil() as u64);
}

#[test]
fn effect_and_rate_forms_agree() {
    let by_hr = run(Command::Rct, json!({"r": 0.4, "hr": 0.75, "d1": 0.6, "d0": 0.7}));
    let by_tau = run(
        Command::Rct,
        json!({"r": 0.4, "tau0": 0.75f64.ln(), "d1": 0.6, "d0": 0.7}),
    );
    assert_eq!(by_hr["n"], by_tau["n"]);
    // Arm-specific rates win over a combined one.
    let both = run(
        Command::Rct,
        json!({"r": 0.4, "hr": 0.75, "d": 0.2, "d1": 0.6, "d0": 0.7}),
    );
    assert_eq!(both["n"], by_hr["n"]);
    let combined = run(Command::Rct, json!({"r": 0.4, "hr": 0.75, "d": 0.65}));
    let equal = run(Command::Rct, json!({"r": 0.4, "hr": 0.75, "d1": 0.65, "d0": 0.65}));
    assert_eq!(combined["n"], equal["n"]);
}

#[test]
fn field_set_errors_name_the_field() {
    let cases = [
        (json!({"r": 0.5, "d": 1}), "hr"),
        (json!({"r": 0.5, "hr": 0.6, "tau0": -0.5, "d": 1}), "tau0"),
        (json!({"r": 0.5, "hr": 0.6}), "d"),
        (json!({"r": 0.5, "hr": 0.6, "d1": 0.5}), "d0"),
        (json!({"r": 0.5, "hr": 0.6, "d": 1, "extra": true}), "extra"),
        (json!({"hr": 0.6, "d": 1}), "r"),
        (json!({"r": "half", "hr": 0.6, "d": 1}), "r"),
    ];
    for (payload, field) in cases {
        let err = fails(Command::Rct, payload.clone());
        assert_eq!(err.class, ErrorClass::Validation, "{payload}");
        assert_eq!(err.doc.offending_field.as_deref(), Some(field), "{payload}");
    }
}

#[test]
fn domain_errors_are_numeric() {
    for (payload, field) in [
        (json!({"r": 1.5, "hr": 0.6, "d": 1}), "r"),
        (json!({"r": 0.5, "hr": -0.6, "d": 1}), "hr"),
        (json!({"r": 0.5, "hr": 0.6, "d": 1.2}), "d1"),
        (json!({"r": 0.5, "hr": 0.6, "d": 1, "alpha": 0}), "alpha"),
    ] {
        let err = fails(Command::Rct, payload);
        assert_eq!(err.class, ErrorClass::Numeric);
        assert_eq!(err.class.exit_code(), 3);
        assert_eq!(err.doc.code, "domain");
        assert_eq!(err.doc.offending_field.as_deref(), Some(field));
    }
    let null = fails(Command::Rct, json!({"r": 0.5, "hr": 1.0, "d": 1}));
    assert_eq!(
        (null.class, null.doc.code.as_str()),
        (ErrorClass::Numeric, "degenerate")
    );
}

#[test]
fn infeasible_overlap_names_minimum() {
    let err = fails(Command::Obs, json!({"r": 0.5, "hr": 0.6, "d": 0.8, "phi": 0.75}));
    assert_eq!(err.class.exit_code(), 3);
    assert_eq!(err.doc.code, "infinite-variance");
    assert_eq!(err.doc.offending_field.as_deref(), Some("phi"));
    // pi/4 at r = 1/2.
    assert!(err.doc.message.contains("0.7854"), "{}", err.doc.message);
}

#[test]
fn observational_report_contents() {
    let body = run(Command::Obs, json!({"r": 0.5, "hr": 0.6, "d": 0.8, "phi": 0.9}));
    let rct = run(Command::Rct, json!({"r": 0.5, "hr": 0.6, "d": 0.8}));
    let vif = body["vif"].as_f64().unwrap();
    let ratio = body["variance_units"].as_f64().unwrap() / rct["variance_units"].as_f64().unwrap();
    assert!((vif - ratio).abs() < 1e-12);
    assert!(body["n"].as_u64() > rct["n"].as_u64());
    assert!(body["comparators"]["hsieh_lavori_n"].is_u64());
    assert_eq!(body["overlap"]["category"], "moderate");
    assert!(body.get("sensitivity").is_none() && body.get("kappa").is_none());

    let ato = run(
        Command::Obs,
        json!({"r": 0.5, "hr": 0.6, "d": 0.8, "phi": 0.87, "scheme": "overlap", "draws": 200000}),
    );
    let ate = run(Command::Obs, json!({"r": 0.5, "hr": 0.6, "d": 0.8, "phi": 0.87}));
    assert!(ato["n"].as_u64() < ate["n"].as_u64());
    assert_eq!(ato["seed"], ato["kappa"]["seed"]);
    assert_eq!(ato["inputs"]["draws"], 200000);
}

#[test]
fn sensitivity_range_brackets_n() {
    let payload = json!({"r": 0.5, "hr": 0.6, "d": 0.8, "phi": 0.93, "sensitivity": {"rho1": 0.5, "rho0": 0.5}});
    let body = run(Command::Obs, payload);
    let s = &body["sensitivity"];
    let n = body["n"].as_u64().unwrap();
    assert!(s["n_low"].as_u64().unwrap() <= n && n <= s["n_high"].as_u64().unwrap());
    let bounds = run(Command::Bounds, json!({"r": 0.5, "hr": 0.6, "d": 0.8, "phi": 0.93}));
    assert_eq!(bounds["n_low"], s["n_low"]);
    assert_eq!(bounds["n_high"], s["n_high"]);
    let err = fails(
        Command::Obs,
        json!({"r": 0.5, "hr": 0.6, "d": 0.8, "phi": 0.93, "scheme": "treated", "sensitivity": {}}),
    );
    assert_eq!(err.doc.offending_field.as_deref(), Some("sensitivity"));
}

#[test]
fn vif_is_deterministic_and_matches_analytic_ipw() {
    let payload = json!({"r": 0.5, "phi": 0.9, "scheme": "overlap", "seed": 7});
    let a = dispatch(Command::Vif, payload.to_string().as_bytes(), None)
        .unwrap()
        .render(false);
    let b = dispatch(Command::Vif, payload.to_string().as_bytes(), None)
        .unwrap()
        .render(false);
    assert_eq!(a, b);
    let ipw = run(Command::Vif, json!({"r": 0.5, "phi": 0.95, "draws": 200000, "seed": 1}));
    let exact = ipw["kappa_ipw_analytic"].as_f64().unwrap();
    let se = ipw["mc_std_error"].as_f64().unwrap();
    assert!((ipw["kappa"].as_f64().unwrap() - exact).abs() < 4.0 * se);
}

#[test]
fn seed_override_is_echoed() {
    let out = dispatch(
        Command::Vif,
        br#"{"r": 0.5, "phi": 0.9, "draws": 20000, "seed": 1}"#,
        Some(99),
    )
    .unwrap();
    assert_eq!(out.body["seed"], 99);
    assert_eq!(out.body["inputs"]["seed"], 99);
}

#[test]
fn curve_over_overlap_is_monotone() {
    let body = run(
        Command::Curve,
        json!({"r": 0.5, "hr": 0.6, "d": 0.8, "sweep": "phi", "from": 0.85, "to": 0.99, "points": 15}),
    );
    let pts = body["points"].as_array().unwrap();
    assert_eq!(pts.len(), 15);
    let ns: Vec<u64> = pts.iter().map(|p| p["n"].as_u64().unwrap()).collect();
    assert!(ns.windows(2).all(|w| w[1] < w[0]), "{ns:?}");
    assert!(pts.iter().all(|p| p["power"].as_f64().unwrap() >= 0.8));
    // Each point agrees with a direct obs request at that overlap.
    let x = pts[5]["x"].as_f64().unwrap();
    let obs = run(Command::Obs, json!({"r": 0.5, "hr": 0.6, "d": 0.8, "phi": x}));
    assert_eq!(obs["n"], pts[5]["n"]);
}

#[test]
fn curve_over_n_crosses_target_at_reported_size() {
    let n = run(Command::Rct, json!({"r": 0.5, "hr": 0.6, "d": 0.8}))["n"]
        .as_u64()
        .unwrap();
    let body = run(
        Command::Curve,
        json!({"r": 0.5, "hr": 0.6, "d": 0.8, "sweep": "n", "from": 10, "to": 400, "points": 391}),
    );
    let pts = body["points"].as_array().unwrap();
    let power: Vec<f64> = pts.iter().map(|p| p["power"].as_f64().unwrap()).collect();
    assert!(power.windows(2).all(|w| w[1] > w[0]));
    let first = pts.iter().find(|p| p["power"].as_f64().unwrap() >= 0.8).unwrap();
    assert_eq!(first["n"].as_u64().unwrap(), n);
}

#[test]
fn curve_over_hazard_ratio_diverges_toward_one() {
    let body = run(
        Command::Curve,
        json!({"r": 0.5, "d": 0.8, "sweep": "hr", "from": 0.4, "to": 0.95, "points": 12}),
    );
    let ns: Vec<u64> = body["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["n"].as_u64().unwrap())
        .collect();
    assert!(ns.windows(2).all(|w| w[1] > w[0]), "{ns:?}");
    let flat = fails(
        Command::Curve,
        json!({"r": 0.5, "d": 0.8, "sweep": "n", "hr": 0.6, "from": 5, "to": 5}),
    );
    assert_eq!(flat.doc.offending_field.as_deref(), Some("to"));
}

#[test]
fn inputs_echo_replays_to_the_same_document() {
    let payloads = [
        (Command::Rct, json!({"r": 0.5, "hr": 0.6, "d": 1})),
        (
            Command::Obs,
            json!({"r": 0.4, "tau0": -0.4, "d1": 0.7, "d0": 0.8, "phi": 0.92, "sensitivity": {"gamma": 0.3}}),
        ),
        (
            Command::Obs,
            json!({"r": 0.5, "hr": 0.6, "d": 0.8, "phi": 0.9, "scheme": "treated", "draws": 50000}),
        ),
        (Command::Vif, json!({"r": 0.3, "phi": 0.9, "draws": 50000})),
        (Command::Bounds, json!({"r": 0.5, "hr": 0.6, "d": 0.8, "phi": 0.95})),
        (
            Command::Curve,
            json!({"r": 0.5, "hr": 0.7, "d": 0.8, "sweep": "n", "from": 50, "to": 100, "points": 6}),
        ),
        (
            Command::Simulate,
            json!({"hr": 0.6, "population": {"m": 10000}, "replicates": 100, "kappa_draws": 10000}),
        ),
    ];
    for (command, payload) in payloads {
        let first = dispatch(command, payload.to_string().as_bytes(), None).unwrap();
        let echo = first.body["inputs"].to_string();
        let again = dispatch(command, echo.as_bytes(), None).unwrap();
        assert_eq!(first.render(false), again.render(false), "{command}");
    }
}

#[test]
fn simulate_reports_partial_budget_runs() {
    let payload = json!({"hr": 0.6, "population": {"m": 10000}, "replicates": 5000, "budget_secs": 1e-6});
    let out = dispatch(Command::Simulate, payload.to_string().as_bytes(), Some(3)).unwrap();
    let power = &out.body["power"];
    assert_eq!(power["budget_exhausted"], true);
    assert_eq!(power["b_requested"], 5000);
    let achieved = power["b_replicates"].as_u64().unwrap() + power["failed"].as_u64().unwrap();
    assert!(achieved < 5000);
    assert_eq!(out.tau_hats.unwrap().len() as u64, achieved);
    assert_eq!(out.body["seed"], 3);
}

#[test]
fn non_object_payloads_are_rejected() {
    for body in [&b"[1, 2]"[..], b"3", b"", b"{\"r\": 0.5} trailing"] {
        let err = dispatch(Command::Rct, body, None).unwrap_err();
        assert_eq!(err.class, ErrorClass::Validation);
    }
    let err = dispatch(Command::Rct, br#"{"r": 0.5, "hr": }"#, None).unwrap_err();
    assert_eq!(err.doc.code, "invalid-json");
    assert_eq!(err.doc.offending_field.as_deref(), Some("hr"));
}

#[test]
fn fitting_failures_map_to_convergence_class() {
    let err: survpower_cli::ApiError = survpower_core::Error::Separation("all events in one arm".into()).into();
    assert_eq!((err.class.exit_code(), err.class.http_status()), (4, 422));
    assert_eq!(err.doc.code, "separation");
    let err: survpower_cli::ApiError = survpower_core::Error::Convergence {
        what: "newton",
        iterations: 50,
    }
    .into();
    assert_eq!(err.class, ErrorClass::Convergence);
}
