//! Runs the equivariance certification for C4 and prints the report.

use equikit::harness::{verify_equivariance, VerifyOptions, LAYERS};

fn main() -> equikit::Result<()> {
    let opts = VerifyOptions {
        group: 4,
        trials: 5,
        size: 17,
        ..VerifyOptions::default()
    };
    let report = verify_equivariance(&opts, &LAYERS)?;
    for c in &report.checks {
        println!(
            "{:<18} {:>5.1}°  {:.2e}  {}",
            c.layer,
            c.angle_deg,
            c.error,
            if c.pass { "ok" } else { "FAIL" }
        );
    }
    println!(
        "overall: {} ({:.2} s)",
        if report.pass { "PASS" } else { "FAIL" },
        report.runtime_seconds
    );
    Ok(())
}
