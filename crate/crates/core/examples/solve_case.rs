//! Solves one benchmark case with the library API and prints the Newton
//! history and the certificate.
//!
//! `cargo run --release --example solve_case -- bb_case2 50`

use dmoc_core::optimal_control::certificate;
use dmoc_core::shooting::{solve, ShootingConfig};
use dmoc_core::systems::{benchmark_case, BENCHMARK_NAMES};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let name = args.get(1).map(String::as_str).unwrap_or("bb_case1");
    let segments = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100);
    let Some(problem) = benchmark_case::<f64>(name) else {
        eprintln!("unknown case {name}; expected one of {}", BENCHMARK_NAMES.join(", "));
        std::process::exit(2);
    };
    let config = ShootingConfig {
        segments,
        ..Default::default()
    };
    let sol = match solve(&problem, &config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(4);
        }
    };
    for it in &sol.history {
        println!(
            "stage {:.2}  iteration {:3}  residual {:.3e}  step {:.4}{}",
            it.stage,
            it.iteration,
            it.residual,
            it.step,
            if it.least_squares { "  (least squares)" } else { "" }
        );
    }
    for d in &sol.diagnostics {
        println!("note: {d}");
    }
    let cert = certificate(&problem, &sol.trajectory, &sol.multipliers).expect("well-formed solution");
    println!(
        "{name}: converged {}, cost {:.9}, {} iterations, {:.1} s",
        sol.converged, sol.cost, sol.newton_iters, sol.wall_time_s
    );
    for (family, v) in cert.family_norms() {
        println!("  {family:<13} {v:.3e}");
    }
}
