mod config;
mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use broadwell::characteristics::shifted_norm_bound;
use broadwell::io::{read_slab, slab_dir, write_slab, write_slice, GridFile};
use broadwell::operators::{apply_operator, transport};
use broadwell::solver::{
    check_hypotheses, compute_constants, g_of_q, global_march, restart_data, solve_slab, CheckMode, MarchOptions,
    PicardOptions, SlabRecord, SlabSolution, TheoremConstants,
};
use broadwell::verify::{
    conservation_balance, measure_constants, oracle_gap, oracle_grid, pde_residual, refinement_study, upwind_oracle,
};
use broadwell::{Error, Field, SlabGrid, TimeSlab};
use clap::{Args, Parser, Subcommand};

use config::{Mode, Run, SliceOutput};
use report::{CheckReport, SlabVerification, Summary, VerifyReport};

const EXIT_INVALID: u8 = 1;
const EXIT_FAIL: u8 = 2;
const EXIT_SOLVE: u8 = 3;

#[derive(Parser)]
#[command(name = "broadwell", version, about = "Fixed-point solver for the planar Broadwell model")]
struct Cli {
    /// Worker threads for the lattice maps.
    #[arg(long, global = true, env = "BROADWELL_WORKERS")]
    workers: Option<usize>,
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the constants and check the small-data hypotheses.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Solve one slab or march to the horizon.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run even when the hypotheses fail; results are marked uncertified.
        #[arg(long = "unsafe")]
        unsafe_: bool,
    },
    /// Check a solution written by `solve`.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Solution directory; defaults to the config output.
        #[arg(long, alias = "out")]
        solution: Option<PathBuf>,
        /// Also compare with the upwind scheme on this many refinement levels.
        #[arg(long)]
        refine: Option<usize>,
    },
    /// Time one operator application on several lattices.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Points per axis, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "9,17,33")]
        sizes: Vec<usize>,
    },
}

/// Outcome of a subcommand that maps onto an exit status.
enum Outcome {
    Pass,
    Fail,
}

/// Error with an exit status attached.
struct Exit(u8, anyhow::Error);

fn invalid(e: impl Into<anyhow::Error>) -> Exit {
    Exit(EXIT_INVALID, e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    }
    let result = match &cli.command {
        Command::Check { common } => load(common).and_then(|run| cmd_check(&run, cli.json)),
        Command::Solve { common, out, unsafe_ } => load(common).and_then(|run| cmd_solve(&run, out.as_deref(), *unsafe_, cli.json)),
        Command::Verify {
            common,
            solution,
            refine,
        } => load(common).and_then(|run| cmd_verify(&run, solution.as_deref(), *refine, cli.json)),
        Command::Bench { common, sizes } => load(common).and_then(|run| cmd_bench(&run, sizes, cli.json)),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(EXIT_FAIL),
        Err(Exit(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn load(common: &Common) -> Result<Run, Exit> {
    let mut run = Run::load(&common.config).map_err(invalid)?;
    if let Some(seed) = common.seed {
        run.config.seed = seed;
    }
    Ok(run)
}

/// Constants and verdict for the configured problem: the slab itself in
/// slab mode, the first march slab in march mode.
fn check(run: &Run) -> Result<CheckReport> {
    let params = &run.params;
    let data = &run.data;
    let r0 = run.config.r0;
    let (consts, bounds_hold, mode) = match run.config.mode {
        Mode::Slab => {
            let slab = run.slab()?;
            let (k, rep) = compute_constants(params, &slab, data, r0, None, run.resolution())?;
            (k, rep.bounds_hold, CheckMode::Bounded)
        }
        Mode::March => {
            let window = TimeSlab::new(data.t0, data.t0 + 1.0)?;
            let rep = shifted_norm_bound(data, params, &window, run.resolution())?;
            let g = g_of_q(params, r0, rep.q);
            let remaining = run.horizon() - data.t0;
            if !(remaining > 0.0) {
                bail!("the horizon must lie after t0");
            }
            let allowed = if g > 0.0 { g } else { f64::INFINITY };
            let len = allowed.min(1.0).min(remaining);
            let k = TheoremConstants::from_norms(params, len, r0, rep.q, rep.raw_max)?;
            (k, rep.bounds_hold, CheckMode::Global)
        }
    };
    let verdict = check_hypotheses(&consts, mode);
    let compatibility = run.data.check_compatibility(run.compat_tol);
    let horizon = match run.config.mode {
        Mode::Slab => run.slab()?.tau_prime,
        Mode::March => run.horizon(),
    };
    let data_min = run.data.min_sampled(horizon, 33);
    let passed = verdict.passed && compatibility.is_empty() && data_min >= 0.0;
    Ok(CheckReport {
        mode,
        constants: consts,
        shifted_bounds_hold: bounds_hold,
        compatibility,
        data_min,
        verdict,
        passed,
    })
}

fn cmd_check(run: &Run, json: bool) -> Result<Outcome, Exit> {
    let rep = check(run).map_err(invalid)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&rep).map_err(invalid)?);
    } else {
        print!("{}", rep.text());
    }
    Ok(if rep.passed { Outcome::Pass } else { Outcome::Fail })
}

fn solve_error(e: impl Into<anyhow::Error>) -> Exit {
    let e = e.into();
    let detail = match e.downcast_ref::<Error>() {
        Some(Error::NonConvergence { ratios, .. }) => format!("\ncontraction ratios: {ratios:?}"),
        _ => String::new(),
    };
    Exit(EXIT_SOLVE, anyhow!("{e:#}{detail}"))
}

fn write_output(dir: &Path, field: &Field, slices: SliceOutput) -> Result<()> {
    match slices {
        SliceOutput::All => write_slab(dir, field)?,
        SliceOutput::Terminal => {
            fs::create_dir_all(dir)?;
            let g = field.grid();
            fs::write(dir.join("grid.json"), serde_json::to_string_pretty(&GridFile::of(g))? + "\n")?;
            let k = g.nt - 1;
            let f = fs::File::create(dir.join(format!("slice_{k}.csv")))?;
            write_slice(std::io::BufWriter::new(f), field, k)?;
        }
        SliceOutput::None => {}
    }
    Ok(())
}

fn cmd_solve(run: &Run, out: Option<&Path>, unsafe_: bool, json: bool) -> Result<Outcome, Exit> {
    let rep = check(run).map_err(invalid)?;
    if !rep.passed && !unsafe_ {
        eprint!("{}", rep.text());
        eprintln!("refusing to solve: the hypotheses do not hold (use --unsafe to run uncertified)");
        return Ok(Outcome::Fail);
    }
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| run.config.output.clone())
        .ok_or_else(|| invalid(anyhow!("no output directory (set \"output\" or pass --out)")))?;
    fs::create_dir_all(&out).map_err(invalid)?;
    let mut log = fs::File::create(out.join("march.jsonl")).map_err(invalid)?;
    let slices = run.config.slices;
    let tol = &run.config.tolerances;

    let mut records: Vec<SlabRecord> = Vec::new();
    let mut emit = |record: &SlabRecord, solution: &SlabSolution<f64>| -> broadwell::Result<()> {
        write_output(&slab_dir(&out, record.n), &solution.field, slices).map_err(|e| Error::Config(format!("{e:#}")))?;
        let line = serde_json::to_string(record)?;
        writeln!(log, "{line}")?;
        if !json {
            eprintln!(
                "slab {:>4}  [{:.6}, {:.6}]  q = {:.3e}  iterations = {}  N = {:.3e}",
                record.n, record.tau, record.tau_prime, record.q, record.iterations, record.n_script
            );
        }
        records.push(record.clone());
        Ok(())
    };

    let (reached, step_floor) = match run.config.mode {
        Mode::Slab => {
            let grid = run.slab_grid().map_err(invalid)?;
            let q = rep.constants.q;
            let mut opts = PicardOptions::for_data_norm(q).with_kind(run.config.operator);
            opts.tol_fix = tol.tol_fix.unwrap_or(opts.tol_fix);
            opts.max_iter = tol.max_iter.unwrap_or(opts.max_iter);
            opts.quad = run.quad();
            let solution = solve_slab(&run.params, &grid, &run.data, &opts).map_err(solve_error)?;
            let k = &rep.constants;
            let record = SlabRecord {
                n: 0,
                tau: grid.slab.tau,
                tau_prime: grid.slab.tau_prime,
                s_n: grid.slab.tau_prime,
                q,
                g: k.g_q.is_finite().then_some(k.g_q),
                step: grid.slab.len(),
                capped: grid.slab.len() < k.g_q,
                iterations: solution.iterations,
                final_delta: solution.final_delta,
                n_script: solution.norm.n_script,
                step_identity_residual: None,
                max_contraction: solution.contraction_estimates.iter().fold(0.0, |a: f64, &r| a.max(r)),
                certified: rep.passed,
            };
            emit(&record, &solution).map_err(solve_error)?;
            (grid.slab.tau_prime, None)
        }
        Mode::March => {
            let mut opts = MarchOptions::new(run.config.r0, run.horizon(), run.resolution());
            opts.kind = run.config.operator;
            opts.tol_fix = tol.tol_fix;
            opts.max_iter = tol.max_iter.unwrap_or(opts.max_iter);
            opts.quad = run.quad();
            opts.enforce = !unsafe_;
            let state = global_march(&run.params, &run.data, &opts, &mut emit).map_err(solve_error)?;
            (state.reached(), Some(state.step_floor))
        }
    };
    drop(emit);
    let summary = Summary::new(run, rep.passed, reached, step_floor, &records);
    let text = serde_json::to_string_pretty(&summary).map_err(invalid)? + "\n";
    fs::write(out.join("summary.json"), &text).map_err(invalid)?;
    if json {
        print!("{text}");
    } else {
        print!("{}", summary.text());
    }
    Ok(Outcome::Pass)
}

/// Slab directories `slab_0, slab_1, ...` present under `dir`.
fn slab_dirs(dir: &Path) -> Vec<PathBuf> {
    (0..).map(|n| slab_dir(dir, n)).take_while(|p| p.is_dir()).collect()
}

fn cmd_verify(run: &Run, solution: Option<&Path>, refine: Option<usize>, json: bool) -> Result<Outcome, Exit> {
    let dir = solution
        .map(Path::to_path_buf)
        .or_else(|| run.config.output.clone())
        .ok_or_else(|| invalid(anyhow!("no solution directory (pass --solution)")))?;
    let dirs = slab_dirs(&dir);
    if dirs.is_empty() {
        return Err(invalid(anyhow!("no slab directories under {}", dir.display())));
    }
    let spec = &run.config.verify;
    let (nt, nx, ny) = run.resolution();
    let mut data = run.data.clone();
    let mut slabs = Vec::with_capacity(dirs.len());
    let mut first: Option<Field> = None;
    for (n, d) in dirs.iter().enumerate() {
        let field: Field = read_slab(d).with_context(|| format!("reading {}", d.display())).map_err(invalid)?;
        let g = *field.grid();
        if (g.nt, g.nx, g.ny) != (nt, nx, ny) || g.domain != data.domain {
            return Err(invalid(anyhow!("{} does not match the configured lattice", d.display())));
        }
        if (g.slab.tau - data.t0).abs() > 1e-12 * (1.0 + data.t0.abs()) {
            return Err(invalid(anyhow!("{} starts at {} but its data start at {}", d.display(), g.slab.tau, data.t0)));
        }
        let residual = pde_residual(&run.params, &field).map_err(invalid)?;
        let balance = conservation_balance(&run.params, &field);
        let oracle_grid = oracle_grid(&run.params, &g, spec.courant).map_err(invalid)?;
        let oracle = upwind_oracle(&run.params, &data, &oracle_grid).map_err(invalid)?;
        let gap = oracle_gap(&field, &oracle).map_err(invalid)?;
        slabs.push(SlabVerification::new(n, &residual, &balance, gap));
        let next = restart_data(&data, &field).map_err(invalid)?;
        if n == 0 {
            first = Some(field);
        }
        data = next;
    }

    let constants = match (spec.trials, &first) {
        (0, _) | (_, None) => None,
        (trials, Some(f)) => {
            let g = f.grid();
            let rep = shifted_norm_bound(&run.data, &run.params, &g.slab, run.resolution()).map_err(invalid)?;
            Some(
                measure_constants(&run.params, &run.data, g, rep.q, run.config.r0, trials, run.config.seed)
                    .map_err(invalid)?,
            )
        }
    };
    let refinement = match refine {
        Some(levels) if levels >= 2 => {
            let grid = match run.config.mode {
                Mode::Slab => run.slab_grid().map_err(invalid)?,
                Mode::March => *first.as_ref().expect("at least one slab").grid(),
            };
            let q = shifted_norm_bound(&run.data, &run.params, &grid.slab, run.resolution())
                .map_err(invalid)?
                .q;
            let mut opts = PicardOptions::for_data_norm(q).with_kind(run.config.operator);
            opts.quad = run.quad();
            Some(refinement_study(&run.params, &run.data, &grid, levels, spec.courant, &opts).map_err(solve_error)?)
        }
        Some(_) => return Err(invalid(anyhow!("--refine needs at least 2 levels"))),
        None => None,
    };
    let report = VerifyReport::new(spec.clone(), slabs, constants, refinement);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(invalid)?);
    } else {
        print!("{}", report.text());
    }
    Ok(if report.passed { Outcome::Pass } else { Outcome::Fail })
}

fn cmd_bench(run: &Run, sizes: &[usize], json: bool) -> Result<Outcome, Exit> {
    let t0 = run.data.t0;
    let slab = match run.config.mode {
        Mode::Slab => run.slab().map_err(invalid)?,
        Mode::March => TimeSlab::new(t0, t0 + 1.0).map_err(invalid)?,
    };
    let mut rows = Vec::new();
    for &n in sizes {
        let grid = SlabGrid::new(slab, run.data.domain, n, n, n).map_err(invalid)?;
        let guess = transport(&run.params, &grid, &run.data).map_err(solve_error)?;
        let start = Instant::now();
        apply_operator(run.config.operator, &run.params, &run.data, &guess, &run.quad()).map_err(solve_error)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        rows.push(serde_json::json!({ "points": n, "nodes": grid.len(), "milliseconds": ms }));
        if !json {
            println!("{n:>4}^3  {:>9} nodes  {ms:>10.2} ms", grid.len());
        }
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&rows).map_err(invalid)?);
    }
    Ok(Outcome::Pass)
}
