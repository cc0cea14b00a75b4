//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --release -p dmoc-cli --test acceptance`.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use dmoc_cli::{load_artifact, verify, Artifact};
use dmoc_core::systems::{
    ball_beam_model, ball_beam_problem, cart_pole_model, cart_pole_problem, BallBeamParams, CartPoleParams,
};
use support::*;

const CASE_TOL: f64 = 1e-6;
const CASE_WALL_S: f64 = 300.0;
const TABLE_TOL: f64 = 1e-5;
const TABLE_FLOOR: f64 = 1e-8;
const TABLE_WALL_S: f64 = 30.0;
const AD_TOL: f64 = 1e-6;
const DEXPINV_TOL: f64 = 1e-12;
const BCH_BOUND: f64 = 1.0 / 24.0;
const MOMENTUM_TOL: f64 = 1e-13;
const REVERSAL_TOL: f64 = 1e-6;
const ENERGY_FACTOR: f64 = 10.0;
const GRADIENT_TOL: f64 = 1e-5;
const BY_HAND_TOL: f64 = 1e-12;
const SEGMENT_TOL: f64 = 1e-6;
const VERIFY_TOL: f64 = 1e-12;

/// Outcome of one criterion: pass flag and a one-line summary of what was measured.
type Check = (bool, String);

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

struct Runner {
    scratch: tempfile::TempDir,
}

struct Run {
    dir: PathBuf,
    code: Option<i32>,
    wall_s: f64,
}

impl Runner {
    fn config(name: &str) -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("configs")
            .join(format!("{name}.toml"))
    }

    fn dmoc(args: &[&str]) -> (Option<i32>, String) {
        let out = Command::new(env!("CARGO_BIN_EXE_dmoc"))
            .args(args)
            .output()
            .expect("spawn dmoc");
        let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
        (out.status.code(), text)
    }

    fn optimize(&self, case: &str, tag: &str, extra: &[&str]) -> Run {
        let dir = self.scratch.path().join(tag);
        let config = Self::config(case);
        let mut args = vec![
            "optimize",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let start = Instant::now();
        let (code, _) = Self::dmoc(&args);
        Run {
            dir,
            code,
            wall_s: start.elapsed().as_secs_f64(),
        }
    }
}

/// Terminal mismatch of the stored end state against the configured target.
fn terminal_error(art: &Artifact) -> f64 {
    let last = art.rows.last().expect("nonempty trajectory");
    let t = &art.metadata.terminal;
    let dtheta =
        (last.theta - t.theta + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
    dtheta
        .abs()
        .max((last.xi - t.xi).abs())
        .max((last.mu_a - t.mu_a).abs())
        .max((last.mu_u - t.mu_u).abs())
}

fn case_check(run: &Run, case: &str) -> (bool, String) {
    let art = match load_artifact(&run.dir) {
        Ok(a) => a,
        Err(e) => return (false, format!("{case}: exit {:?}, no artifact ({e})", run.code)),
    };
    let Some(result) = art.metadata.result.clone() else {
        return (false, format!("{case}: no solver result in metadata"));
    };
    let cert = match verify(&run.dir) {
        Ok(v) => v.certificate,
        Err(e) => return (false, format!("{case}: verification failed ({e})")),
    };
    let term = terminal_error(&art);
    let ok =
        run.code == Some(0) && result.converged && term <= CASE_TOL && cert <= CASE_TOL && run.wall_s <= CASE_WALL_S;
    let homotopy = if result.homotopy_used {
        format!("homotopy {:?}", result.homotopy_stages)
    } else {
        "no homotopy".into()
    };
    (
        ok,
        format!(
            "{case}: exit {:?}, terminal {term:.1e}, certificate {cert:.1e}, cost {:.6}, {:.0} s, {homotopy}",
            run.code, result.cost, run.wall_s
        ),
    )
}

fn c1(r: &Runner) -> Check {
    let run = r.optimize("bb_case1", "bb_case1", &[]);
    case_check(&run, "bb_case1")
}

fn c2(r: &Runner) -> Check {
    let mut ok = true;
    let mut lines = Vec::new();
    for case in ["bb_case2", "cp_case1", "cp_case2"] {
        let run = r.optimize(case, case, &[]);
        let (pass, line) = case_check(&run, case);
        // the homotopy record must be present, whether or not it was needed
        let recorded = fs::read_to_string(run.dir.join("metadata.toml"))
            .map(|t| t.contains("homotopy_used") && t.contains("homotopy_stages"))
            .unwrap_or(false);
        ok &= pass && recorded;
        lines.push(line);
    }
    (ok, lines.join("; "))
}

fn c3() -> Check {
    let start = Instant::now();
    let bb = ball_beam_model(BallBeamParams::default());
    let cp = cart_pole_model(CartPoleParams::default());
    let (e_bb, n_bb) = table_error(&bb, Layout::AngleFirst, &mut rng(301), 100, TABLE_FLOOR);
    let (e_cp, n_cp) = table_error(&cp, Layout::LineFirst, &mut rng(302), 100, TABLE_FLOOR);
    let wall = start.elapsed().as_secs_f64();
    (
        e_bb <= TABLE_TOL && e_cp <= TABLE_TOL && wall <= TABLE_WALL_S,
        format!("ball-beam {e_bb:.1e} over {n_bb} entries, cart-pole {e_cp:.1e} over {n_cp}, {wall:.2} s"),
    )
}

fn c4() -> Check {
    let ad = ad_identity_errors(&mut rng(401), 100, 1e-6);
    let (series, closed) = dexpinv_errors(&mut rng(402), 200, 0.5);
    let bch = bch_worst_ratio(&mut rng(403), 500, 0.1, 1e-15);
    let ok = ad.iter().all(|&e| e <= AD_TOL) && series <= DEXPINV_TOL && closed <= DEXPINV_TOL && bch <= BCH_BOUND;
    (
        ok,
        format!(
            "Ad identities {:.1e}/{:.1e}/{:.1e}/{:.1e}, dexpinv vs series {series:.1e}, vs closed form {closed:.1e}, BCH ratio {bch:.3}",
            ad[0], ad[1], ad[2], ad[3]
        ),
    )
}

fn c5() -> Check {
    let momentum = cart_momentum_drift(10_000);
    let reversal = ball_beam_reversal_error(100);
    let (short, long) = energy_drift(100, 10_000);
    let ok = momentum <= MOMENTUM_TOL && reversal <= REVERSAL_TOL && long <= ENERGY_FACTOR * short;
    (
        ok,
        format!(
            "cart momentum drift {momentum:.1e}, reversal error {reversal:.1e}, energy deviation {long:.2e} (1e4 steps) vs {short:.2e} (1e2 steps)"
        ),
    )
}

fn c6() -> Check {
    let (worst, count) = toy_gradient_error(3, 0.1, 601, 10);
    (
        worst <= GRADIENT_TOL,
        format!("worst relative gap {worst:.1e} over {count} partial derivatives"),
    )
}

fn c7() -> Check {
    let bp = BallBeamParams::default();
    let cp = CartPoleParams::default();
    let bb = by_hand_mismatch(
        &ball_beam_problem("bb", bp, 10, 0.0, 0.5),
        Layout::AngleFirst,
        |s| ball_beam_by_hand(&bp, s),
        701,
        20,
    );
    let cc = by_hand_mismatch(
        &cart_pole_problem("cp", cp, 10, 2.0, 0.5),
        Layout::LineFirst,
        |s| cart_pole_by_hand(&cp, s),
        702,
        20,
    );
    match (bb, cc) {
        (Some(a), Some(b)) => (
            a <= BY_HAND_TOL && b <= BY_HAND_TOL,
            format!("ball-beam {a:.1e}, cart-pole {b:.1e} (scaled)"),
        ),
        _ => (false, "an equation is missing on one side".into()),
    }
}

fn c8(r: &Runner) -> Check {
    let mut ok = true;
    let mut notes = Vec::new();

    let mut costs = Vec::new();
    for k in [1usize, 2, 4, 10] {
        let ks = k.to_string();
        let run = r.optimize("bb_case1", &format!("segments_{k}"), &["--segments", &ks]);
        match load_artifact(&run.dir).ok().and_then(|a| a.metadata.result) {
            Some(res) if run.code == Some(0) && res.converged => costs.push(res.cost),
            _ => {
                ok = false;
                notes.push(format!("segments {k}: exit {:?}", run.code));
            }
        }
    }
    if let (Some(lo), Some(hi)) = (
        costs.iter().copied().reduce(f64::min),
        costs.iter().copied().reduce(f64::max),
    ) {
        let spread = (hi - lo) / lo.abs();
        ok &= spread <= SEGMENT_TOL && costs.len() == 4;
        notes.push(format!("cost spread over segments {{1,2,4,10}} {spread:.1e}"));
    }

    let first = r.scratch.path().join("bb_case1");
    let (code, _) = Runner::dmoc(&["verify", first.to_str().unwrap()]);
    match verify(&first) {
        Ok(v) => {
            let gap = (v.certificate - v.recorded).abs();
            ok &= code == Some(0) && gap <= VERIFY_TOL && v.res_state_mismatch <= VERIFY_TOL;
            notes.push(format!("verify exit {code:?}, certificate gap {gap:.1e}"));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("verify failed: {e}"));
        }
    }

    let again = r.optimize("bb_case1", "bb_case1_repeat", &[]);
    let identical = ["trajectory.csv", "multipliers.csv", "metadata.toml"].iter().all(|f| {
        let a = fs::read(first.join(f));
        let b = fs::read(again.dir.join(f));
        matches!((a, b), (Ok(a), Ok(b)) if a == b)
    });
    ok &= identical;
    notes.push(format!("repeated artifacts byte-identical: {identical}"));
    (ok, notes.join("; "))
}

fn main() -> ExitCode {
    let runner = Runner {
        scratch: tempfile::tempdir().expect("scratch directory"),
    };
    let criteria: Vec<Criterion> = vec![
        ("1 bb_case1 reproduction", Box::new(|| c1(&runner))),
        ("2 remaining benchmark cases", Box::new(|| c2(&runner))),
        ("3 derivative oracles", Box::new(c3)),
        ("4 Lie-group identities", Box::new(c4)),
        ("5 structure preservation", Box::new(c5)),
        ("6 variational consistency", Box::new(c6)),
        ("7 specialization identity", Box::new(c7)),
        ("8 solver robustness", Box::new(|| c8(&runner))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failed += 1;
        }
        println!("{} criterion {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
