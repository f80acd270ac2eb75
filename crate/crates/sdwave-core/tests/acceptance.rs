// SPDX-License-Identifier: Apache-2.0

//! Runs every verification suite at the default configuration and reports
//! one line per acceptance criterion, followed by the individual checks.
//! Exits with a failure status if any criterion fails.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use sdwave_core::{Check, Suite, SuiteConfig};

/// Criteria and the checks that make them up.
const CRITERIA: [(&str, &[&str]); 10] = [
    ("kernel oracle", &["kernels.oracle_max_error", "kernels.oracle_error_ratio"]),
    ("series representation", &["kernels.series_max_error"]),
    ("two-route forward solve", &["forward.two_route_max_error", "forward.two_route_error_ratio"]),
    ("transformation fidelity", &["forward.wave_max_error"]),
    ("optimality", &["optimize.gradient_relative", "optimize.min_cost_increase"]),
    ("value consistency", &["optimize.value_vs_cost", "optimize.two_route_control"]),
    (
        "restart consistency",
        &[
            "bellman.tail_l2",
            "bellman.tail_l2_ratio",
            "bellman.telescoping",
            "bellman.telescoping_ratio",
        ],
    ),
    (
        "feedback law",
        &[
            "closed_loop.control_l2_mismatch",
            "closed_loop.gain_linearity",
            "closed_loop.gain_vs_open_loop_initial",
        ],
    ),
    (
        "dissipation",
        &[
            "dissipation.optimal_max_abs_r",
            "dissipation.min_r",
            "dissipation.controls_in_equality_band",
        ],
    ),
    (
        "riccati form",
        &["riccati.relative_residual", "riccati.chain_rule_closure", "riccati.terminal_form"],
    ),
];

fn main() -> ExitCode {
    let config = SuiteConfig::default();
    let mut checks: HashMap<String, Check> = HashMap::new();
    let mut lines = Vec::new();
    for suite in Suite::ALL {
        let start = Instant::now();
        match suite.run(&config) {
            Ok(report) => {
                lines.push(format!("suite {} finished in {:.1?}", suite.name(), start.elapsed()));
                for c in report.checks {
                    lines.push(format!("  {c}"));
                    checks.insert(c.name.clone(), c);
                }
            }
            Err(e) => lines.push(format!("suite {} failed to run: {e}", suite.name())),
        }
    }

    let mut all_passed = true;
    for (k, (title, names)) in CRITERIA.iter().enumerate() {
        let missing: Vec<&str> = names.iter().copied().filter(|n| !checks.contains_key(*n)).collect();
        let passed = missing.is_empty() && names.iter().all(|n| checks[*n].passed);
        all_passed &= passed;
        let status = if passed { "PASS" } else { "FAIL" };
        if missing.is_empty() {
            println!("{status} criterion {:>2}: {title}", k + 1);
        } else {
            println!("{status} criterion {:>2}: {title} (missing {})", k + 1, missing.join(", "));
        }
    }
    for line in &lines {
        println!("{line}");
    }
    if all_passed {
        println!("acceptance: all {} criteria passed", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
