use cayley_core::experiments::*;
use proptest::prelude::*;

fn cfg_with(f: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    f(&mut c);
    c
}

#[test]
fn config_round_trips_and_validates() {
    let c = cfg_with(|c| {
        c.seed = 42;
        c.k = Some(3);
        c.ladder = Some(vec![4, 8]);
    });
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
    assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    assert!(ExperimentConfig::from_json(r#"{"grid": {"n": 3}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"tolerances": {"newton": 0}}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"k": 5}"#).is_err());
    assert!(ExperimentConfig::from_json(r#"{"unknown": 1}"#).is_err());
    assert_ne!(c.digest(), ExperimentConfig::default().digest());
    assert_eq!(c.digest().len(), 64);
}

#[test]
fn csv_quotes_special_fields() {
    let t = ResultTable {
        experiment: "x".into(),
        rows: vec![Row { criterion: 1, case: "a,\"b\"".into(), metric: "m".into(), value: 0.5, bound: Bound::Below(1.0), pass: true }],
        config_digest: String::new(),
        wall_time_s: 0.0,
    };
    let csv = t.to_csv().unwrap();
    assert_eq!(csv, "criterion,case,metric,value,bound,pass\n1,\"a,\"\"b\"\"\",m,5.000000e-1,< 1,true\n");
    let json: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
    assert_eq!(json[0]["case"], "a,\"b\"");
    assert_eq!(json[0]["bound"], "< 1");
}

#[test]
fn tables_are_identical_for_identical_seeds() {
    let c = cfg_with(|c| c.trials = Some(300));
    let a = cmd_identities(&c).unwrap().to_csv().unwrap();
    let b = cmd_identities(&c).unwrap().to_csv().unwrap();
    assert_eq!(a, b);
    let other = cmd_identities(&cfg_with(|c| {
        c.trials = Some(300);
        c.seed = 1;
    }))
    .unwrap()
    .to_csv()
    .unwrap();
    assert_ne!(a, other);
}

#[test]
fn failures_are_reported_not_raised() {
    let c = cfg_with(|c| {
        c.trials = Some(200);
        c.tolerances.algebra = 1e-20;
    });
    let t = cmd_identities(&c).unwrap();
    assert!(!t.passed());
    assert_eq!(t.criterion_passed(2), Some(false));
    assert_eq!(t.criterion_passed(7), None);
}

#[test]
fn unknown_suite_is_an_error() {
    assert!(run_suite("nope", &ExperimentConfig::default()).is_err());
}

#[test]
fn statistics_helpers() {
    let h = [0.1, 0.05, 0.025];
    let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
    assert!((fitted_order(&h, &e) - 2.0).abs() < 1e-12);
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
}

proptest! {
    #[test]
    fn spearman_ignores_monotone_transforms(x in prop::collection::vec(-10.0f64..10.0, 3..30)) {
        let y: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
        prop_assume!(x.iter().any(|v| *v != x[0]));
        prop_assert!((spearman(&x, &y) - 1.0).abs() < 1e-12);
    }
}
