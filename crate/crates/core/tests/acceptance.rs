//! Runs acceptance criteria 1 to 13 and prints one pass/fail line each.
//! Built without the libtest harness so the lines are never captured.

use std::process::ExitCode;

use nsfp1_core::harness::{run_criterion, Tolerances, CRITERIA};

fn main() -> ExitCode {
    let tol = Tolerances::default();
    let mut failed = Vec::new();
    for (id, _) in CRITERIA {
        let o = run_criterion(id, &tol);
        println!("{}  ({:.1} s)", o.line(), o.seconds);
        if !o.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
