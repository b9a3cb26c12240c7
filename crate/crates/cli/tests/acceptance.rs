//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or exceeds its time budget.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use symvi_cli::verify::{run_verify_all, Check, Verifier, PUSHFORWARD_TRIALS};

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: Runner,
}

type Runner = Box<dyn Fn(&Verifier) -> Vec<Check>>;

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn criteria() -> Vec<Criterion> {
    vec![
        Criterion {
            name: "sphere constants A, B, eta_c and c* at eta = 2",
            budget: secs(10),
            run: Box::new(|v| v.sphere_constants()),
        },
        Criterion {
            name: "closed-form d = 3 moments at 10 concentrations",
            budget: secs(1),
            run: Box::new(|v| v.closed_form_moments()),
        },
        Criterion {
            name: "phase transition over 20 eta values",
            budget: secs(30),
            run: Box::new(|v| v.phase_transition()),
        },
        Criterion {
            name: "pushforward invariance, 50 trials",
            budget: secs(60),
            run: Box::new(|v| v.pushforward_invariance(PUSHFORWARD_TRIALS)),
        },
        Criterion {
            name: "even-symmetry mean recovery (reverse KL, forward KL, chi-squared)",
            budget: secs(120),
            run: Box::new(|v| v.even_recovery(None)),
        },
        Criterion {
            name: "elliptical covariance up to scale and correlation",
            budget: secs(120),
            run: Box::new(|v| v.elliptical_recovery(None)),
        },
        Criterion {
            name: "rotated Gaussian correlation counterexample",
            budget: secs(1),
            run: Box::new(|v| v.counterexample()),
        },
        Criterion {
            name: "vMF sampler moments within 4 standard errors",
            budget: secs(30),
            run: Box::new(|v| v.sampler_moments()),
        },
        Criterion {
            name: "property suites and full verify-all run",
            budget: secs(180),
            run: Box::new(|v| {
                let mut checks = v.properties();
                let dir = tempfile::tempdir().expect("temporary directory");
                match run_verify_all(v.seed, None, dir.path()) {
                    Ok(report) => checks.extend(report.criteria.into_iter().flat_map(|c| c.checks)),
                    Err(e) => panic!("verify-all could not run: {e}"),
                }
                checks
            }),
        },
    ]
}

fn main() -> ExitCode {
    let v = Verifier::new(0, None);
    let mut failed = 0;
    for c in criteria() {
        let start = Instant::now();
        let checks = (c.run)(&v);
        let elapsed = start.elapsed();
        let bad: Vec<&Check> = checks.iter().filter(|k| !k.pass).collect();
        let in_time = elapsed <= c.budget;
        let ok = bad.is_empty() && in_time && !checks.is_empty();
        if !ok {
            failed += 1;
        }
        println!(
            "{} {} [{} checks, {:.2}s of {}s]",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            checks.len(),
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
        for k in &checks {
            let mark = if k.pass { "ok" } else { "FAILED" };
            println!(
                "    {mark:6} {} = {:e} (tolerance {:e}{})",
                k.name,
                k.measured,
                k.tolerance,
                k.expected
                    .map(|e| format!(", expected {e}"))
                    .unwrap_or_default()
            );
        }
        if !in_time {
            println!("    over time budget");
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
