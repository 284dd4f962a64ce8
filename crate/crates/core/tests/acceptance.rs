//! One pass/fail line per acceptance criterion, from the default
//! experiment configuration.

use std::process::ExitCode;

use cayley_core::experiments::{run_suite, ExperimentConfig, ResultTable};

const CRITERIA: [(u8, &str); 11] = [
    (1, "algebra suite"),
    (2, "spectral structure"),
    (3, "frame completion and calibration"),
    (4, "moduli dimension"),
    (5, "index-0 structure"),
    (6, "ellipticity"),
    (7, "Green's formula"),
    (8, "linearization consistency"),
    (9, "existence by Newton"),
    (10, "volume minimisation"),
    (11, "Bryant-Salamon local lemma"),
];

/// Wall-time limits in seconds, where the criterion states one.
fn time_limit(c: u8) -> Option<f64> {
    match c {
        1 => Some(10.0),
        2 => Some(1.0),
        4 => Some(300.0),
        _ => None,
    }
}

fn main() -> ExitCode {
    let cfg = ExperimentConfig::default();
    let mut tables: Vec<ResultTable> = Vec::new();
    for suite in ["identities", "moduli", "adjoint", "symbols", "greens", "linearization", "newton", "volume", "bsmetric"] {
        match run_suite(suite, &cfg) {
            Ok(mut t) => tables.append(&mut t),
            Err(e) => println!("suite {suite}: error: {e}"),
        }
    }
    let mut all = true;
    for (c, name) in CRITERIA {
        let rows: Vec<_> = tables.iter().flat_map(|t| t.rows.iter().filter(move |r| r.criterion == c).map(move |r| (t, r))).collect();
        let failed: Vec<String> = rows.iter().filter(|(_, r)| !r.pass).map(|(_, r)| format!("{} {} = {}", r.case, r.metric, r.value)).collect();
        let secs: f64 = {
            let mut seen: Vec<&str> = Vec::new();
            rows.iter()
                .filter(|(t, _)| {
                    let fresh = !seen.contains(&t.experiment.as_str());
                    seen.push(&t.experiment);
                    fresh
                })
                .map(|(t, _)| t.wall_time_s)
                .sum()
        };
        let in_time = time_limit(c).map_or(true, |l| secs <= l);
        let ok = !rows.is_empty() && failed.is_empty() && in_time;
        all &= ok;
        let status = if ok { "PASS" } else { "FAIL" };
        let mut line = format!("criterion {c:>2} {status} {name}: {} checks, suite time {secs:.2} s", rows.len());
        if !in_time {
            line += &format!(" (limit {} s)", time_limit(c).unwrap());
        }
        if !failed.is_empty() {
            line += &format!("; failing: {}", failed.join("; "));
        }
        println!("{line}");
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
