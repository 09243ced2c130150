//! Slab constants and hypothesis checks, Picard iteration on one slab, and
//! the global march that chains slabs in time.

use serde::Serialize;

use crate::characteristics::{gamma, shifted_norm_bound, ShiftedNormReport};
use crate::data::{ProblemData, Surface, Table2};
use crate::error::{Error, Result};
use crate::field::Field4;
use crate::grid::{Direction, ModelParams, RectDomain, SlabGrid, TimeSlab};
use crate::norms::{norm_report, NormReport};
use crate::operators::{apply_operator, positivity_tolerance, transport, OperatorKind, QuadratureSpec};
use crate::scalar::Scalar;

/// Constants of the slab estimates for one slab length and one `R0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremConstants<T> {
    pub c: T,
    pub s: T,
    pub sigma: T,
    pub r0: T,
    pub slab_len: T,
    /// `8 + 4/c + 8c`
    pub mu: T,
    /// `16 + 16c`
    pub lambda: T,
    /// `4/c + 8 + 4c`
    pub delta: T,
    /// `1 + c + 1/c`
    pub gamma: T,
    /// Largest `||.||_1` of the shifted data.
    pub q: T,
    /// Largest `||.||_1` of the raw data.
    pub raw_max: T,
    pub q_sigma: T,
    pub p: T,
    pub p_sigma: T,
    /// `f(R0) = 1 / (4 mu (1 + delta sigma R0)(sigma + cS))`
    pub f_r0: T,
    /// `g(q)`; infinite for `q = 0`.
    pub g_q: T,
    /// Upper bound on `R0` for the global construction.
    pub r0_cap: T,
}

impl<T: Scalar> TheoremConstants<T> {
    /// Evaluates every closed form for a known data norm `q`.
    pub fn from_norms(params: &ModelParams<T>, slab_len: T, r0: T, q: T, raw_max: T) -> Result<Self> {
        if slab_len > T::one() {
            return Err(Error::Precondition(format!("slab length {slab_len} exceeds 1")));
        }
        if !(r0 > T::zero()) {
            return Err(Error::Precondition(format!("R0 must be positive, got {r0}")));
        }
        let c = params.c;
        let s = params.s;
        let sigma = params.sigma;
        let (mu, lambda, delta) = (mu(c), lambda(c), delta(c));
        let cs = c * s;
        let q_sigma = q * (T::one() + delta * sigma * r0);
        let p = cs * (T::lit(8.0) + T::lit(4.0) / c + (T::lit(8.0) + T::lit(8.0) * c) * slab_len);
        let p_sigma = (mu + lambda * sigma * r0 * slab_len) * (sigma + cs);
        Ok(Self {
            c,
            s,
            sigma,
            r0,
            slab_len,
            mu,
            lambda,
            delta,
            gamma: gamma(c),
            q,
            raw_max,
            q_sigma,
            p,
            p_sigma,
            f_r0: f_of_r0(params, r0),
            g_q: g_of_q(params, r0, q),
            r0_cap: r0_cap(params),
        })
    }

    pub fn unbounded_step(&self) -> bool {
        self.g_q.is_infinite()
    }

    pub fn p_sigma_q_sigma(&self) -> T {
        self.p_sigma * self.q_sigma
    }

    /// `[(1 - sqrt(1 - 4 p_s q_s)) / 2p_s, min{R0, (1 + sqrt(..)) / 2p_s}]`,
    /// or `None` when the discriminant is negative or the interval empty.
    pub fn r_interval(&self) -> Option<(T, T)> {
        let disc = T::one() - T::lit(4.0) * self.p_sigma_q_sigma();
        if disc < T::zero() {
            return None;
        }
        let root = disc.sqrt();
        let two_p = self.p_sigma + self.p_sigma;
        let lo = (T::one() - root) / two_p;
        let hi = self.r0.min((T::one() + root) / two_p);
        (lo <= hi).then_some((lo, hi))
    }

    /// `min{R0, (1 + sqrt(1 - 4 p_s q_s)) / 2p_s}`, the bound on the slab solution.
    pub fn solution_bound(&self) -> Option<T> {
        self.r_interval().map(|r| r.1)
    }
}

pub fn mu<T: Scalar>(c: T) -> T {
    T::lit(8.0) + T::lit(4.0) / c + T::lit(8.0) * c
}

pub fn lambda<T: Scalar>(c: T) -> T {
    T::lit(16.0) + T::lit(16.0) * c
}

pub fn delta<T: Scalar>(c: T) -> T {
    T::lit(4.0) / c + T::lit(8.0) + T::lit(4.0) * c
}

pub fn f_of_r0<T: Scalar>(params: &ModelParams<T>, r0: T) -> T {
    let c = params.c;
    let denom = T::lit(4.0) * mu(c) * (T::one() + delta(c) * params.sigma * r0) * (params.sigma + c * params.s);
    T::one() / denom
}

/// Largest slab length allowed by a data norm `q`.
pub fn g_of_q<T: Scalar>(params: &ModelParams<T>, r0: T, q: T) -> T {
    if q <= T::zero() {
        return T::infinity();
    }
    let c = params.c;
    let m = mu(c);
    (f_of_r0(params, r0) * m / q - m) / (lambda(c) * params.sigma * r0)
}

/// `(-1 + sqrt(1 + delta sigma / (mu (sigma + cS) gamma))) / (2 delta sigma)`.
pub fn r0_cap<T: Scalar>(params: &ModelParams<T>) -> T {
    let c = params.c;
    let ds = delta(c) * params.sigma;
    let inner = T::one() + ds / (mu(c) * (params.sigma + c * params.s) * gamma(c));
    (inner.sqrt() - T::one()) / (ds + ds)
}

/// Step-size floor of a global march: `g(gamma R0)`.
pub fn march_step_bound<T: Scalar>(params: &ModelParams<T>, r0: T) -> T {
    g_of_q(params, r0, gamma(params.c) * r0)
}

/// Computes the constants of `slab` for `data`, with the data norms taken on
/// a `resolution` lattice over `window` (the slab itself when `None`).
pub fn compute_constants<T: Scalar>(
    params: &ModelParams<T>,
    slab: &TimeSlab<T>,
    data: &ProblemData<T>,
    r0: T,
    window: Option<&TimeSlab<T>>,
    resolution: (usize, usize, usize),
) -> Result<(TheoremConstants<T>, ShiftedNormReport<T>)> {
    slab.require_unit_bounded()?;
    let report = shifted_norm_bound(data, params, window.unwrap_or(slab), resolution)?;
    let consts = TheoremConstants::from_norms(params, slab.len(), r0, report.q, report.raw_max)?;
    Ok((consts, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    /// One slab of prescribed length.
    Bounded,
    /// The slab conditions plus the global-in-time conditions.
    Global,
}

/// One inequality `lhs <= rhs` (or `<` when strict).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub strict: bool,
    /// `rhs / lhs - 1`: infinite when `lhs = 0`, negative on failure.
    pub margin: f64,
    pub passed: bool,
}

impl Condition {
    fn new(name: &'static str, lhs: f64, rhs: f64, strict: bool) -> Self {
        let passed = if strict { lhs < rhs } else { lhs <= rhs };
        let margin = if lhs == 0.0 {
            if rhs > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            rhs / lhs - 1.0
        };
        Self {
            name,
            lhs,
            rhs,
            strict,
            margin,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub mode: CheckMode,
    pub passed: bool,
    pub conditions: Vec<Condition>,
    pub p_sigma_q_sigma: f64,
    pub r_interval: Option<(f64, f64)>,
    pub r0_cap: f64,
}

impl Verdict {
    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(|c| !c.passed)
    }
}

pub fn check_hypotheses<T: Scalar>(consts: &TheoremConstants<T>, mode: CheckMode) -> Verdict {
    let k = consts;
    let mut conditions = vec![
        Condition::new("q <= f(R0)", k.q.as_f64(), k.f_r0.as_f64(), false),
        Condition::new("slab length <= 1", k.slab_len.as_f64(), 1.0, false),
        Condition::new("slab length <= g(q)", k.slab_len.as_f64(), k.g_q.as_f64(), false),
        Condition::new("p_sigma q_sigma <= 1/4", k.p_sigma_q_sigma().as_f64(), 0.25, false),
    ];
    if mode == CheckMode::Global {
        conditions.push(Condition::new("q < f(R0)", k.q.as_f64(), k.f_r0.as_f64(), true));
        conditions.push(Condition::new("R0 < cap", k.r0.as_f64(), k.r0_cap.as_f64(), true));
        conditions.push(Condition::new("raw data norm <= R0", k.raw_max.as_f64(), k.r0.as_f64(), false));
    }
    Verdict {
        mode,
        passed: conditions.iter().all(|c| c.passed),
        conditions,
        p_sigma_q_sigma: k.p_sigma_q_sigma().as_f64(),
        r_interval: k.r_interval().map(|(a, b)| (a.as_f64(), b.as_f64())),
        r0_cap: k.r0_cap.as_f64(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardOptions<T> {
    pub kind: OperatorKind,
    pub tol_fix: T,
    pub max_iter: usize,
    pub quad: QuadratureSpec<T>,
}

impl<T: Scalar> PicardOptions<T> {
    /// Defaults for data of norm `q`: `tol_fix = 1e-10 (1 + q)`, 200 iterations.
    pub fn for_data_norm(q: T) -> Self {
        Self {
            kind: OperatorKind::Plain,
            tol_fix: default_tol_fix(q),
            max_iter: 200,
            quad: QuadratureSpec::default(),
        }
    }

    pub fn with_kind(mut self, kind: OperatorKind) -> Self {
        self.kind = kind;
        self
    }
}

pub fn default_tol_fix<T: Scalar>(q: T) -> T {
    T::lit(1e-10) * (T::one() + q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlabSolution<T> {
    pub field: Field4<T>,
    pub iterations: usize,
    pub final_delta: T,
    /// `||dM_{k+1}|| / ||dM_k||` per iteration after the first.
    pub contraction_estimates: Vec<T>,
    pub norm: NormReport<T>,
}

/// Iterates the selected operator from `guess` until the sup-norm update
/// drops to `tol_fix`.
pub fn picard_solve<T: Scalar>(
    params: &ModelParams<T>,
    data: &ProblemData<T>,
    guess: Field4<T>,
    opts: &PicardOptions<T>,
) -> Result<SlabSolution<T>> {
    if !guess.is_finite() {
        return Err(Error::Numeric("initial guess is not finite".into()));
    }
    let mut current = guess;
    let mut ratios = Vec::new();
    let mut prev: Option<T> = None;
    for it in 1..=opts.max_iter {
        let next = apply_operator(opts.kind, params, data, &current, &opts.quad)?;
        let delta = next.sup_distance(&current)?;
        if !delta.is_finite() {
            return Err(Error::Numeric(format!("update is not finite at iteration {it}")));
        }
        if let Some(p) = prev {
            ratios.push(if p > T::zero() { delta / p } else { T::zero() });
        }
        prev = Some(delta);
        current = next;
        if delta <= opts.tol_fix {
            let mut field = current;
            let tol = positivity_tolerance(field.sup_norm());
            field.certify_non_negative(tol)?;
            let norm = norm_report(&field, params.c)?;
            return Ok(SlabSolution {
                field,
                iterations: it,
                final_delta: delta,
                contraction_estimates: ratios,
                norm,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        last_delta: prev.map_or(f64::NAN, |d| d.as_f64()),
        ratios: ratios.iter().map(|r| r.as_f64()).collect(),
    })
}

/// Picard iteration started from the transported data.
pub fn solve_slab<T: Scalar>(
    params: &ModelParams<T>,
    grid: &SlabGrid<T>,
    data: &ProblemData<T>,
    opts: &PicardOptions<T>,
) -> Result<SlabSolution<T>> {
    let guess = transport(params, grid, data)?;
    picard_solve(params, data, guess, opts)
}

/// Progress record of one marched slab.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlabRecord {
    pub n: usize,
    pub tau: f64,
    pub tau_prime: f64,
    /// `S_n`, the end of the slab.
    pub s_n: f64,
    pub q: f64,
    /// `None` for an unbounded step.
    pub g: Option<f64>,
    pub step: f64,
    /// The step is shorter than `g(q)`.
    pub capped: bool,
    pub iterations: usize,
    pub final_delta: f64,
    pub n_script: f64,
    /// Relative residual of `q = mu f(R0) / (mu + lambda sigma R0 g(q))` on
    /// uncapped slabs.
    pub step_identity_residual: Option<f64>,
    pub max_contraction: f64,
    /// The slab passed its hypothesis check and bounds.
    pub certified: bool,
}

/// Receives every slab of a march as soon as it is solved.
pub trait SlabSink<T> {
    fn accept(&mut self, record: &SlabRecord, solution: &SlabSolution<T>) -> Result<()>;
}

impl<T, F> SlabSink<T> for F
where
    F: FnMut(&SlabRecord, &SlabSolution<T>) -> Result<()>,
{
    fn accept(&mut self, record: &SlabRecord, solution: &SlabSolution<T>) -> Result<()> {
        self(record, solution)
    }
}

/// Keeps every slab in memory.
#[derive(Debug, Default)]
pub struct MemorySink<T> {
    pub slabs: Vec<(SlabRecord, SlabSolution<T>)>,
}

impl<T: Clone> SlabSink<T> for MemorySink<T> {
    fn accept(&mut self, record: &SlabRecord, solution: &SlabSolution<T>) -> Result<()> {
        self.slabs.push((record.clone(), solution.clone()));
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarchOptions<T> {
    pub r0: T,
    pub t_end: T,
    /// Lattice points per slab.
    pub resolution: (usize, usize, usize),
    pub kind: OperatorKind,
    /// `None` picks `1e-10 (1 + q)` per slab.
    pub tol_fix: Option<T>,
    pub max_iter: usize,
    pub quad: QuadratureSpec<T>,
    pub compat_tol: T,
    /// Stop at the first slab whose hypotheses or bounds fail. When off, the
    /// march runs on and every record carries its verdict.
    pub enforce: bool,
}

impl<T: Scalar> MarchOptions<T> {
    pub fn new(r0: T, t_end: T, resolution: (usize, usize, usize)) -> Self {
        Self {
            r0,
            t_end,
            resolution,
            kind: OperatorKind::Plain,
            tol_fix: None,
            max_iter: 200,
            quad: QuadratureSpec::default(),
            compat_tol: T::lit(1e-6),
            enforce: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarchState<T> {
    /// Number of slabs solved.
    pub n: usize,
    /// Slab boundaries `S_0 < S_1 < ...`, starting at the data time.
    pub times: Vec<T>,
    /// Data norm of every slab.
    pub q: Vec<T>,
    pub records: Vec<SlabRecord>,
    /// `g(gamma R0)`, a lower bound of every uncapped step.
    pub step_floor: T,
    pub gamma_r0: T,
    /// Global-mode verdict of the first slab.
    pub initial_verdict: Option<Verdict>,
}

impl<T: Scalar> MarchState<T> {
    pub fn reached(&self) -> T {
        *self.times.last().expect("march starts with S_0")
    }
}

/// Terminal slice of a slab solution as initial data of the next slab.
pub fn restart_data<T: Scalar>(previous: &ProblemData<T>, solution: &Field4<T>) -> Result<ProblemData<T>> {
    let g = solution.grid();
    let slice = solution.slice(g.nt - 1);
    let dom: RectDomain<T> = g.domain;
    let initial = slice
        .map(|values| Table2::new(dom.a1, dom.b1, dom.a2, dom.b2, g.nx, g.ny, values).map(Surface::Table));
    let [a, b, c, d] = initial;
    Ok(ProblemData {
        domain: previous.domain,
        t0: g.slab.tau_prime,
        initial: [a?, b?, c?, d?],
        inflow: previous.inflow.clone(),
    })
}

fn march_error(index: usize, reason: impl Into<String>) -> Error {
    Error::March {
        index,
        reason: reason.into(),
    }
}

/// Marches from `data.t0` to `opts.t_end` in slabs of length
/// `min{g(q_n), 1, remaining}`, restarting each slab from the terminal
/// slice of the previous one.
pub fn global_march<T: Scalar>(
    params: &ModelParams<T>,
    data: &ProblemData<T>,
    opts: &MarchOptions<T>,
    sink: &mut dyn SlabSink<T>,
) -> Result<MarchState<T>> {
    let r0 = opts.r0;
    let gamma_r0 = gamma(params.c) * r0;
    let (nt, nx, ny) = opts.resolution;
    let unit = |t: T| TimeSlab::new(t, t + T::one());

    let mut state = MarchState {
        n: 0,
        times: vec![data.t0],
        q: Vec::new(),
        records: Vec::new(),
        step_floor: march_step_bound(params, r0),
        gamma_r0,
        initial_verdict: None,
    };

    let mut current = data.clone();
    let tiny = (T::one() + opts.t_end.abs()) * T::lit(1e-12);
    while opts.t_end - state.reached() > tiny {
        let n = state.n;
        let tau = state.reached();
        let fail = |e: Error| march_error(n, e.to_string());
        let mut problems: Vec<String> = Vec::new();
        if n > 0 {
            if let Some(v) = current.check_compatibility(opts.compat_tol).first() {
                return Err(march_error(n, format!("restart incompatible at {} (gap {:e})", v.edge, v.gap.as_f64())));
            }
        }
        let window = unit(tau).map_err(fail)?;
        let report = shifted_norm_bound(&current, params, &window, opts.resolution).map_err(fail)?;
        let q = report.q;
        if !(q < gamma_r0) {
            problems.push(format!("data norm {q} is not below gamma R0 = {gamma_r0}"));
        }
        let g = g_of_q(params, r0, q);
        let remaining = opts.t_end - tau;
        // a non-positive g only occurs outside the hypotheses
        let allowed = if g > T::zero() { g } else { T::infinity() };
        let step = allowed.min(T::one()).min(remaining);
        let capped = step < g;
        let slab = TimeSlab::new(tau, tau + step).map_err(fail)?;
        let consts = TheoremConstants::from_norms(params, step, r0, q, report.raw_max).map_err(fail)?;
        // the global conditions concern the original data only
        let mode = if n == 0 { CheckMode::Global } else { CheckMode::Bounded };
        let verdict = check_hypotheses(&consts, mode);
        if !verdict.passed {
            let names: Vec<&str> = verdict.failures().map(|c| c.name).collect();
            problems.push(format!("hypotheses fail: {}", names.join(", ")));
        }
        if n == 0 {
            state.initial_verdict = Some(verdict);
        }
        if opts.enforce && !problems.is_empty() {
            return Err(march_error(n, problems.join("; ")));
        }

        let grid = SlabGrid::new(slab, current.domain, nt, nx, ny).map_err(fail)?;
        let mut popts = PicardOptions::for_data_norm(q).with_kind(opts.kind);
        popts.tol_fix = opts.tol_fix.unwrap_or(popts.tol_fix);
        popts.max_iter = opts.max_iter;
        popts.quad = opts.quad;
        let solution = solve_slab(params, &grid, &current, &popts).map_err(fail)?;
        let n_script = solution.norm.n_script;
        if n_script > r0 {
            problems.push(format!("solution norm {n_script} exceeds R0 = {r0}"));
            if opts.enforce {
                return Err(march_error(n, problems.join("; ")));
            }
        }

        let identity = (!capped).then(|| {
            let k = &consts;
            let rhs = k.mu * k.f_r0 / (k.mu + k.lambda * k.sigma * r0 * g);
            ((q - rhs) / q).abs().as_f64()
        });
        let record = SlabRecord {
            n,
            tau: tau.as_f64(),
            tau_prime: slab.tau_prime.as_f64(),
            s_n: slab.tau_prime.as_f64(),
            q: q.as_f64(),
            g: g.is_finite().then(|| g.as_f64()),
            step: step.as_f64(),
            capped,
            iterations: solution.iterations,
            final_delta: solution.final_delta.as_f64(),
            n_script: n_script.as_f64(),
            step_identity_residual: identity,
            max_contraction: solution
                .contraction_estimates
                .iter()
                .fold(0.0, |a: f64, r| a.max(r.as_f64())),
            certified: problems.is_empty(),
        };
        sink.accept(&record, &solution)?;
        current = restart_data(&current, &solution.field).map_err(fail)?;
        state.times.push(slab.tau_prime);
        state.q.push(q);
        state.records.push(record);
        state.n += 1;
    }
    Ok(state)
}

/// Component values of `field` on the inflow face of `d` at time index `k`,
/// paired with the edge coordinate.
pub fn inflow_trace<T: Scalar>(field: &Field4<T>, d: Direction, k: usize) -> Vec<(T, T)> {
    let g = field.grid();
    match d {
        Direction::East => (0..g.ny).map(|l| (g.y(l), field.at(d, k, 0, l))).collect(),
        Direction::West => (0..g.ny).map(|l| (g.y(l), field.at(d, k, g.nx - 1, l))).collect(),
        Direction::North => (0..g.nx).map(|j| (g.x(j), field.at(d, k, j, 0))).collect(),
        Direction::South => (0..g.nx).map(|j| (g.x(j), field.at(d, k, j, g.ny - 1))).collect(),
    }
}
