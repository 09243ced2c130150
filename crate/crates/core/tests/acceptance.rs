//! Acceptance suite. Runs without the test harness so that every criterion
//! prints exactly one line; the process fails if any line is a FAIL.

mod common;

use std::time::{Duration, Instant};

use broadwell::characteristics::gamma;
use broadwell::operators::positivity_tolerance;
use broadwell::solver::{delta, lambda, march_step_bound, mu, solve_slab, SlabRecord};
use broadwell::verify::{conservation_balance, random_trig_field, refinement_study};
use broadwell::{
    apply_t, apply_t_sigma, check_hypotheses, compute_constants, global_march, norm_report, picard_solve, CheckMode,
    Field4, MarchOptions, PicardOptions, ProblemData, QuadratureSpec, SlabSolution, TimeSlab,
};
use common::{big_gaussian, grid, params, small_bump};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const R0: f64 = 0.0023;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    o.detail.push_str(&format!(", {:.1} s (limit {} s)", took.as_secs_f64(), limit.as_secs()));
    o.passed &= took <= limit;
    o
}

fn equilibrium() -> Outcome {
    let k = 0.25;
    let p = params();
    let data = ProblemData::constant(broadwell::Domain::unit(), 0.0, k);
    let g = grid(1.0, 33);
    let opts = PicardOptions::for_data_norm(k);
    match solve_slab(&p, &g, &data, &opts) {
        Ok(sol) => {
            let err = sol.field.components().iter().flatten().fold(0.0f64, |a, v| a.max((v - k).abs()));
            outcome(err <= 1e-12, format!("max |N - k| = {err:.2e} after {} iteration(s)", sol.iterations))
        }
        Err(e) => outcome(false, format!("solver error: {e}")),
    }
}

fn positivity() -> Outcome {
    let p = params();
    let g = grid(1.0, 17);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data_sets = [small_bump(), ProblemData::zero(broadwell::Domain::unit(), 0.0)];
    let mut worst = f64::INFINITY;
    for trial in 0..100 {
        let data = &data_sets[trial % 2];
        let scale = rng.gen_range(0.01..10.0);
        let m = random_trig_field(g, &mut rng, true).scaled(scale);
        let out = match apply_t_sigma(&p, data, &m, &QuadratureSpec::default()) {
            Ok(f) => f,
            Err(e) => return outcome(false, format!("trial {trial}: {e}")),
        };
        // measured against the tolerance of zero data, the strictest one
        worst = worst.min(out.min_value() / positivity_tolerance(0.0));
    }
    outcome(worst >= -1.0, format!("100 signed inputs, min output / tol = {worst:.3e}"))
}

fn contraction() -> Outcome {
    let p = params();
    let data = small_bump();
    let g = broadwell::SlabGrid::new(TimeSlab::new(0.0, 0.1).unwrap(), broadwell::Domain::unit(), 5, 17, 17).unwrap();
    let quad = QuadratureSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = random_trig_field(g, &mut rng, true).scaled(rng.gen_range(0.01..2.0));
        let n = random_trig_field(g, &mut rng, true).scaled(rng.gen_range(0.01..2.0));
        let tm = apply_t(&p, &data, &m, &quad).unwrap();
        let tn = apply_t(&p, &data, &n, &quad).unwrap();
        let bound = 0.2 * (m.sup_norm() + n.sup_norm()) * m.sup_distance(&n).unwrap();
        worst = worst.max(tm.sup_distance(&tn).unwrap() / bound);
    }
    outcome(worst <= 1.05, format!("100 pairs, max ||TM - TN|| / bound = {worst:.4}"))
}

fn uniqueness() -> Outcome {
    let p = params();
    let data = small_bump();
    let g = grid(1.0, 17);
    let mut opts = PicardOptions::for_data_norm(0.0);
    opts.tol_fix = 1e-10;
    // T(0) is the transport field, so the first pair shares every iterate
    // after one step; the random guess inside the ball is the real test.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let random = random_trig_field(g, &mut rng, false);
    let random = random.scaled(0.9 * R0 / norm_report(&random, p.c).unwrap().n_script);
    let runs = [
        picard_solve(&p, &data, Field4::zeros(g), &opts),
        solve_slab(&p, &g, &data, &opts),
        picard_solve(&p, &data, random, &opts),
    ];
    let sols: Vec<_> = match runs.into_iter().collect::<Result<Vec<_>, _>>() {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("solver error: {e}")),
    };
    let zero_vs_transport = sols[0].field.sup_distance(&sols[1].field).unwrap();
    let random_vs_transport = sols[2].field.sup_distance(&sols[1].field).unwrap();
    outcome(
        zero_vs_transport.max(random_vs_transport) <= 2e-10,
        format!(
            "sup gap zero/transport {zero_vs_transport:.2e}, random/transport {random_vs_transport:.2e} ({}, {}, {} iterations)",
            sols[0].iterations, sols[1].iterations, sols[2].iterations
        ),
    )
}

fn norm_growth() -> Outcome {
    let p = params();
    let data = small_bump();
    let g = grid(1.0, 17);
    let (consts, _) = compute_constants(&p, &g.slab, &data, R0, None, (17, 17, 17)).unwrap();
    let quad = QuadratureSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let r = 10f64.powf(rng.gen_range(-3.0..0.0));
        let m = random_trig_field(g, &mut rng, false);
        let m = m.scaled(r / norm_report(&m, p.c).unwrap().n_script);
        let tm = apply_t(&p, &data, &m, &quad).unwrap();
        let ntm = norm_report(&tm, p.c).unwrap().n_script;
        worst = worst.max(ntm / (consts.p * r * r + consts.q));
    }
    outcome(
        worst <= 1.05,
        format!("50 inputs with N(M) = R in [1e-3, 1], max N(TM) / (pR^2 + q) = {worst:.4}"),
    )
}

fn solution_bound() -> Outcome {
    let p = params();
    let data = small_bump();
    let g = grid(1.0, 17);
    let (consts, _) = compute_constants(&p, &g.slab, &data, R0, None, (17, 17, 17)).unwrap();
    let verdict = check_hypotheses(&consts, CheckMode::Bounded);
    let Some(bound) = consts.solution_bound() else {
        return outcome(false, "empty admissible interval".into());
    };
    let sol = solve_slab(&p, &g, &data, &PicardOptions::for_data_norm(consts.q)).unwrap();
    let n = sol.norm.n_script;
    outcome(
        verdict.passed && n <= 1.05 * bound,
        format!("hypotheses {}, N = {n:.4e} <= {bound:.4e}", if verdict.passed { "pass" } else { "fail" }),
    )
}

fn oracle() -> Outcome {
    let p = params();
    let data = small_bump();
    let study = refinement_study(&p, &data, &grid(1.0, 17), 2, 0.5, &PicardOptions::for_data_norm(1e-3)).unwrap();
    let ratio = study.ratios[0];
    outcome(
        (1.4..=2.6).contains(&ratio),
        format!("gap {:.3e} -> {:.3e}, ratio {ratio:.3}", study.gaps[0], study.gaps[1]),
    )
}

fn balance_gaps(data: &broadwell::Data, n: usize) -> (f64, [f64; 3]) {
    let p = params();
    let g = grid(0.5, n);
    let sol = solve_slab(&p, &g, data, &PicardOptions::for_data_norm(0.3)).unwrap();
    let b = conservation_balance(&p, &sol.field);
    (
        g.hx,
        [b.mass.max_cumulative_gap, b.momentum_x.max_cumulative_gap, b.momentum_y.max_cumulative_gap],
    )
}

fn conservation() -> Outcome {
    let mut passed = true;
    let mut detail = Vec::new();
    for (name, data) in [("small bump", small_bump()), ("gaussian", big_gaussian())] {
        let levels: Vec<_> = [9, 17, 33].iter().map(|&n| balance_gaps(&data, n)).collect();
        let mut worst = 0.0f64;
        for q in 0..3 {
            let c = levels[..2].iter().map(|(h, gaps)| gaps[q] / (h * h)).fold(0.0, f64::max);
            let (h, gaps) = levels[2];
            worst = worst.max(gaps[q] / (c * h * h));
        }
        passed &= worst <= 1.1;
        detail.push(format!("{name}: third level at {worst:.3} of C h^2"));
    }
    outcome(passed, format!("mass and momenta, {}", detail.join("; ")))
}

fn march() -> Outcome {
    let p = params();
    let data = small_bump();
    let t_end = 10.0 * march_step_bound(&p, R0);
    let opts = MarchOptions::new(R0, t_end, (17, 17, 17));
    let mut records: Vec<SlabRecord> = Vec::new();
    let mut sink = |r: &SlabRecord, _: &SlabSolution<f64>| {
        records.push(r.clone());
        Ok(())
    };
    let state = match global_march(&p, &data, &opts, &mut sink) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("march stopped: {e}")),
    };
    let q_ok = state.q.iter().all(|&q| q < state.gamma_r0);
    let n_ok = records.iter().all(|r| r.n_script <= R0);
    let uncapped: Vec<_> = records.iter().filter(|r| !r.capped).collect();
    let step_ok = uncapped.iter().all(|r| r.step >= state.step_floor);
    let reached = (state.reached() - t_end).abs() <= 1e-9 * t_end;
    let q_max = state.q.iter().fold(0.0f64, |a, &b| a.max(b));
    let n_max = records.iter().fold(0.0f64, |a, r| a.max(r.n_script));
    outcome(
        reached && q_ok && n_ok && step_ok && state.initial_verdict.as_ref().is_some_and(|v| v.passed),
        format!(
            "{} slabs to t = {:.2}, max q {q_max:.3e} < {:.3e}, max N {n_max:.3e}, {} uncapped step(s)",
            records.len(),
            state.reached(),
            state.gamma_r0,
            uncapped.len()
        ),
    )
}

fn constants() -> Outcome {
    let got = [mu(1.0), lambda(1.0), delta(1.0), gamma(1.0)];
    outcome(
        got == [20.0, 32.0, 16.0, 3.0],
        format!("mu {}, lambda {}, delta {}, gamma {}", got[0], got[1], got[2], got[3]),
    )
}

fn main() {
    let criteria: [(&str, Box<dyn FnOnce() -> Outcome>); 10] = [
        ("equilibrium invariance", Box::new(|| timed(Duration::from_secs(10), equilibrium))),
        ("positivity of relaxed operator", Box::new(|| timed(Duration::from_secs(60), positivity))),
        ("contraction bound", Box::new(contraction)),
        ("uniqueness", Box::new(uniqueness)),
        ("norm growth", Box::new(norm_growth)),
        ("solution bound", Box::new(solution_bound)),
        ("oracle refinement", Box::new(|| timed(Duration::from_secs(120), oracle))),
        ("conservation", Box::new(conservation)),
        ("global march", Box::new(|| timed(Duration::from_secs(300), march))),
        ("constants", Box::new(constants)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let o = run();
        println!("criterion {:>2} {:<32} {}  {}", i + 1, name, if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria pass");
}
