//! Independent checks of a computed field: PDE residuals, balances of the
//! collision invariants, an explicit upwind scheme to compare against, and
//! Monte-Carlo measurements of the operator estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{DataSelector, ProblemData};
use crate::error::{Error, Result};
use crate::field::Field4;
use crate::grid::{Direction, ModelParams, SlabGrid};
use crate::norms::{norm_report, CharPlanes};
use crate::operators::{apply_t, collision_q, QuadratureSpec};
use crate::scalar::Scalar;
use crate::solver::{solve_slab, PicardOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual<T> {
    /// `sup |residual_i|` over the checked interior nodes.
    pub sup: [T; 4],
    /// Residual lattices; zero wherever the node was not checked.
    #[serde(skip)]
    pub field: Field4<T>,
    /// Interior nodes skipped because a stencil crossed a characteristic plane.
    pub skipped: usize,
}

impl<T: Scalar> Residual<T> {
    pub fn max(&self) -> T {
        self.sup.iter().fold(T::zero(), |a, &b| a.max_nan(b))
    }
}

/// `d_t N_i + v_i . grad N_i - omega_i Q(N)` by central differences at the
/// interior nodes.
pub fn pde_residual<T: Scalar>(params: &ModelParams<T>, field: &Field4<T>) -> Result<Residual<T>> {
    let g = *field.grid();
    if g.nt < 3 || g.nx < 3 || g.ny < 3 {
        return Err(Error::GridSize(format!(
            "residual needs >= 3 points per axis, got {}x{}x{}",
            g.nt, g.nx, g.ny
        )));
    }
    let c = params.c;
    let planes = CharPlanes::new(&g, c);
    let point = |k: usize, j: usize, l: usize| (g.t(k), g.x(j), g.y(l));
    let two = T::lit(2.0);
    let per_node: Vec<Option<[T; 4]>> = (0..g.len())
        .into_par_iter()
        .map(|n| {
            let (k, j, l) = g.coords(n);
            if k == 0 || j == 0 || l == 0 || k + 1 == g.nt || j + 1 == g.nx || l + 1 == g.ny {
                return Some([T::zero(); 4]);
            }
            let crosses = planes.straddles(point(k - 1, j, l), point(k + 1, j, l))
                || planes.straddles(point(k, j - 1, l), point(k, j + 1, l))
                || planes.straddles(point(k, j, l - 1), point(k, j, l + 1));
            if crosses {
                return None;
            }
            let q = collision_q(params, &field.node(n));
            Some(Direction::ALL.map(|d| {
                let dt = (field.at(d, k + 1, j, l) - field.at(d, k - 1, j, l)) / (two * g.ht);
                let dx = (field.at(d, k, j + 1, l) - field.at(d, k, j - 1, l)) / (two * g.hx);
                let dy = (field.at(d, k, j, l + 1) - field.at(d, k, j, l - 1)) / (two * g.hy);
                let (vx, vy) = d.velocity::<T>();
                dt + vx * dx + vy * dy - d.omega::<T>() * q
            }))
        })
        .collect();
    let mut values = [vec![T::zero(); g.len()], vec![T::zero(); g.len()], vec![T::zero(); g.len()], vec![T::zero(); g.len()]];
    let mut sup = [T::zero(); 4];
    let mut skipped = 0;
    for (n, r) in per_node.into_iter().enumerate() {
        match r {
            Some(r) => {
                for c in 0..4 {
                    values[c][n] = r[c];
                    sup[c] = sup[c].max_nan(r[c].abs());
                }
            }
            None => skipped += 1,
        }
    }
    Ok(Residual {
        sup,
        field: Field4::from_components(g, values)?,
        skipped,
    })
}

/// Budget of one conserved density over the slab.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Balance<T> {
    /// `integral(t_k)` of the density over the rectangle.
    pub content: Vec<T>,
    /// `content(t_{k+1}) - content(t_k) + integral of the net outflow over the step`.
    pub step_gap: Vec<T>,
    /// Running sum of `step_gap`.
    pub cumulative_gap: Vec<T>,
    pub max_step_gap: T,
    pub max_cumulative_gap: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport<T> {
    pub mass: Balance<T>,
    pub momentum_x: Balance<T>,
    pub momentum_y: Balance<T>,
}

impl<T: Scalar> ConservationReport<T> {
    pub fn max_cumulative_gap(&self) -> T {
        self.mass
            .max_cumulative_gap
            .max_nan(self.momentum_x.max_cumulative_gap)
            .max_nan(self.momentum_y.max_cumulative_gap)
    }
}

fn trapezoid_weights<T: Scalar>(n: usize, h: T) -> Vec<T> {
    let mut w = vec![h; n];
    w[0] = h * T::lit(0.5);
    w[n - 1] = h * T::lit(0.5);
    w
}

fn balance<T: Scalar>(
    field: &Field4<T>,
    density: impl Fn([T; 4]) -> T,
    // outward flux densities through x = b1 (minus x = a1) and y = b2 (minus y = a2)
    flux_x: impl Fn([T; 4]) -> T,
    flux_y: impl Fn([T; 4]) -> T,
) -> Balance<T> {
    let g = field.grid();
    let wx = trapezoid_weights(g.nx, g.hx);
    let wy = trapezoid_weights(g.ny, g.hy);
    let node = |k, j, l| field.node(g.idx(k, j, l));
    let content: Vec<T> = (0..g.nt)
        .map(|k| {
            let mut acc = T::zero();
            for l in 0..g.ny {
                for j in 0..g.nx {
                    acc = acc + wx[j] * wy[l] * density(node(k, j, l));
                }
            }
            acc
        })
        .collect();
    let outflow: Vec<T> = (0..g.nt)
        .map(|k| {
            let mut acc = T::zero();
            for l in 0..g.ny {
                acc = acc + wy[l] * (flux_x(node(k, g.nx - 1, l)) - flux_x(node(k, 0, l)));
            }
            for j in 0..g.nx {
                acc = acc + wx[j] * (flux_y(node(k, j, g.ny - 1)) - flux_y(node(k, j, 0)));
            }
            acc
        })
        .collect();
    let half = T::lit(0.5);
    let step_gap: Vec<T> = (0..g.nt - 1)
        .map(|k| content[k + 1] - content[k] + g.ht * half * (outflow[k] + outflow[k + 1]))
        .collect();
    let mut cumulative_gap = Vec::with_capacity(step_gap.len());
    let mut run = T::zero();
    for &s in &step_gap {
        run = run + s;
        cumulative_gap.push(run);
    }
    let fold = |v: &[T]| v.iter().fold(T::zero(), |a, &b| a.max_nan(b.abs()));
    Balance {
        max_step_gap: fold(&step_gap),
        max_cumulative_gap: fold(&cumulative_gap),
        content,
        step_gap,
        cumulative_gap,
    }
}

/// Mass, x-momentum and y-momentum budgets by trapezoid quadrature.
pub fn conservation_balance<T: Scalar>(params: &ModelParams<T>, field: &Field4<T>) -> ConservationReport<T> {
    let c = params.c;
    let c2 = c * c;
    ConservationReport {
        mass: balance(field, |n| n[0] + n[1] + n[2] + n[3], |n| c * (n[0] - n[3]), |n| c * (n[1] - n[2])),
        momentum_x: balance(field, |n| c * (n[0] - n[3]), |n| c2 * (n[0] + n[3]), |_| T::zero()),
        momentum_y: balance(field, |n| c * (n[1] - n[2]), |_| T::zero(), |n| c2 * (n[1] + n[2])),
    }
}

/// First-order explicit upwind scheme on `grid` with the collision term
/// taken explicitly at the old time level. Inflow faces are overwritten with
/// the inflow data after every step.
pub fn upwind_oracle<T: Scalar>(params: &ModelParams<T>, data: &ProblemData<T>, grid: &SlabGrid<T>) -> Result<Field4<T>> {
    if !grid.cfl_ok(params.c) {
        return Err(Error::Config(format!(
            "upwind scheme needs c ht <= min(hx, hy); c ht = {}, hx = {}, hy = {}",
            params.c * grid.ht,
            grid.hx,
            grid.hy
        )));
    }
    let g = *grid;
    let (nx, ny) = (g.nx, g.ny);
    let eval = |which, p| data.evaluate(which, p);
    let mut field = Field4::zeros(g);
    let mut slice: [Vec<T>; 4] = [vec![T::zero(); nx * ny], vec![T::zero(); nx * ny], vec![T::zero(); nx * ny], vec![T::zero(); nx * ny]];
    for d in Direction::ALL {
        for l in 0..ny {
            for j in 0..nx {
                slice[d.index()][l * nx + j] = eval(DataSelector::Initial(d), (g.x(j), g.y(l)))?;
            }
        }
    }
    field.set_slice(0, &slice)?;
    let nu_x = params.c * g.ht / g.hx;
    let nu_y = params.c * g.ht / g.hy;
    for k in 1..g.nt {
        let t = g.t(k);
        let old = &slice;
        let q: Vec<T> = (0..nx * ny)
            .map(|n| collision_q(params, &[old[0][n], old[1][n], old[2][n], old[3][n]]))
            .collect();
        let mut next: [Vec<T>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for d in Direction::ALL {
            let u = &old[d.index()];
            let w = d.omega::<T>();
            let mut out: Vec<T> = (0..nx * ny)
                .into_par_iter()
                .map(|n| {
                    let (j, l) = (n % nx, n / nx);
                    let upstream = match d {
                        Direction::East if j > 0 => Some((u[n - 1], nu_x)),
                        Direction::West if j + 1 < nx => Some((u[n + 1], nu_x)),
                        Direction::North if l > 0 => Some((u[n - nx], nu_y)),
                        Direction::South if l + 1 < ny => Some((u[n + nx], nu_y)),
                        _ => None,
                    };
                    match upstream {
                        Some((v, nu)) => u[n] - nu * (u[n] - v) + g.ht * w * q[n],
                        // overwritten by the inflow datum below
                        None => T::zero(),
                    }
                })
                .collect();
            match d {
                Direction::East => {
                    for l in 0..ny {
                        out[l * nx] = eval(DataSelector::Inflow(d), (t, g.y(l)))?;
                    }
                }
                Direction::West => {
                    for l in 0..ny {
                        out[l * nx + nx - 1] = eval(DataSelector::Inflow(d), (t, g.y(l)))?;
                    }
                }
                Direction::North => {
                    for j in 0..nx {
                        out[j] = eval(DataSelector::Inflow(d), (t, g.x(j)))?;
                    }
                }
                Direction::South => {
                    for j in 0..nx {
                        out[(ny - 1) * nx + j] = eval(DataSelector::Inflow(d), (t, g.x(j)))?;
                    }
                }
            }
            next[d.index()] = out;
        }
        slice = next;
        field.set_slice(k, &slice)?;
    }
    if !field.is_finite() {
        return Err(Error::Numeric("upwind scheme produced a non-finite value".into()));
    }
    Ok(field)
}

/// A grid for the upwind scheme sharing the spatial nodes of `grid` and
/// refining its time step by the smallest integer factor that brings the
/// Courant number down to `courant`.
pub fn oracle_grid<T: Scalar>(params: &ModelParams<T>, grid: &SlabGrid<T>, courant: T) -> Result<SlabGrid<T>> {
    let nu = params.c * grid.ht / grid.hx.min(grid.hy);
    let factor = (nu / courant).ceil().to_usize().unwrap_or(1).max(1);
    SlabGrid::new(grid.slab, grid.domain, (grid.nt - 1) * factor + 1, grid.nx, grid.ny)
}

/// `sup |solution - oracle|` over the nodes of `solution`; the oracle lattice
/// must contain them (same space nodes, time step an integer fraction).
pub fn oracle_gap<T: Scalar>(solution: &Field4<T>, oracle: &Field4<T>) -> Result<T> {
    let gs = solution.grid();
    let go = oracle.grid();
    let aligned = gs.nx == go.nx
        && gs.ny == go.ny
        && gs.slab == go.slab
        && gs.domain == go.domain
        && (go.nt - 1) % (gs.nt - 1) == 0;
    if !aligned {
        return Err(Error::Shape("oracle lattice does not contain the solution lattice".into()));
    }
    let factor = (go.nt - 1) / (gs.nt - 1);
    let mut gap = T::zero();
    for d in Direction::ALL {
        for k in 0..gs.nt {
            for l in 0..gs.ny {
                for j in 0..gs.nx {
                    gap = gap.max_nan((solution.at(d, k, j, l) - oracle.at(d, k * factor, j, l)).abs());
                }
            }
        }
    }
    Ok(gap)
}

/// Gaps between Picard solutions and the upwind scheme on a sequence of
/// lattices, each halving the spacings of the previous one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementStudy {
    /// Points per axis of each level.
    pub points: Vec<usize>,
    pub gaps: Vec<f64>,
    /// `gap[i] / gap[i + 1]`.
    pub ratios: Vec<f64>,
}

pub fn refinement_study<T: Scalar>(
    params: &ModelParams<T>,
    data: &ProblemData<T>,
    base: &SlabGrid<T>,
    levels: usize,
    courant: T,
    opts: &PicardOptions<T>,
) -> Result<RefinementStudy> {
    let mut points = Vec::with_capacity(levels);
    let mut gaps = Vec::with_capacity(levels);
    let (mut nt, mut nx, mut ny) = (base.nt, base.nx, base.ny);
    for _ in 0..levels {
        let grid = SlabGrid::new(base.slab, base.domain, nt, nx, ny)?;
        let solution = solve_slab(params, &grid, data, opts)?;
        let oracle = upwind_oracle(params, data, &oracle_grid(params, &grid, courant)?)?;
        gaps.push(oracle_gap(&solution.field, &oracle)?.as_f64());
        points.push(nx);
        (nt, nx, ny) = (2 * nt - 1, 2 * nx - 1, 2 * ny - 1);
    }
    let ratios = gaps.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(RefinementStudy { points, gaps, ratios })
}

/// A smooth random field `a_i + b_i sin(.) sin(.) sin(.)` per component.
pub fn random_trig_field<T: Scalar>(grid: SlabGrid<T>, rng: &mut ChaCha8Rng, signed: bool) -> Field4<T> {
    let mut coeffs = [[0.0f64; 8]; 4];
    for c in coeffs.iter_mut() {
        c[0] = if signed { rng.gen_range(-1.0..1.0) } else { rng.gen_range(0.0..1.0) };
        c[1] = rng.gen_range(-1.0..1.0);
        for v in c.iter_mut().skip(2).take(3) {
            *v = rng.gen_range(0.5..std::f64::consts::PI);
        }
        for v in c.iter_mut().skip(5) {
            *v = rng.gen_range(0.0..std::f64::consts::TAU);
        }
    }
    Field4::from_fn(grid, |d, t, x, y| {
        let c = coeffs[d.index()];
        let (t, x, y) = (t.as_f64(), x.as_f64(), y.as_f64());
        let mut v = c[1] * (c[2] * t + c[5]).sin() * (c[3] * x + c[6]).sin() * (c[4] * y + c[7]).sin();
        v += c[0];
        if !signed {
            v = v.abs();
        }
        T::lit(v)
    })
}

/// Monte-Carlo measurement of the contraction and norm-growth estimates of
/// the plain operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub trials: usize,
    /// Largest `||TM - TN|| / ((||M|| + ||N||) ||M - N||)`.
    pub contraction: f64,
    /// `4cS (tau' - tau)`.
    pub contraction_bound: f64,
    /// Largest `(N(TM) - q) / N(M)^2`.
    pub growth: f64,
    /// `p = cS (8 + 4/c + (8 + 8c)(tau' - tau))`.
    pub p: f64,
    pub q: f64,
    /// Both ratios below their bounds with the relative slack.
    pub within_bounds: bool,
    pub slack: f64,
}

/// Draws `trials` random pairs with `N <= radius` on `grid` and measures both
/// estimates against `data`. `q` is the data norm entering the growth bound.
pub fn measure_constants<T: Scalar>(
    params: &ModelParams<T>,
    data: &ProblemData<T>,
    grid: &SlabGrid<T>,
    q: T,
    radius: T,
    trials: usize,
    seed: u64,
) -> Result<ConstantsReport> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is needed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quad = QuadratureSpec::default();
    let c = params.c.as_f64();
    let s = params.s.as_f64();
    let len = grid.slab.len().as_f64();
    let contraction_bound = 4.0 * c * s * len;
    let p = c * s * (8.0 + 4.0 / c + (8.0 + 8.0 * c) * len);
    let mut contraction: f64 = 0.0;
    let mut growth: f64 = 0.0;
    for _ in 0..trials {
        let mut pair = Vec::with_capacity(2);
        for _ in 0..2 {
            let f = random_trig_field(*grid, &mut rng, true);
            let n = norm_report(&f, params.c)?.n_script;
            let scale = radius * T::lit(rng.gen_range(0.1..1.0)) / n;
            pair.push(f.scaled(scale));
        }
        let (m, n) = (&pair[0], &pair[1]);
        let tm = apply_t(params, data, m, &quad)?;
        let tn = apply_t(params, data, n, &quad)?;
        let dist = m.sup_distance(n)?.as_f64();
        if dist > 0.0 {
            let num = tm.sup_distance(&tn)?.as_f64();
            let den = (m.sup_norm().as_f64() + n.sup_norm().as_f64()) * dist;
            contraction = contraction.max(num / den);
        }
        let nm = norm_report(m, params.c)?.n_script.as_f64();
        let ntm = norm_report(&tm, params.c)?.n_script.as_f64();
        growth = growth.max((ntm - q.as_f64()) / (nm * nm));
    }
    let slack = 0.05;
    Ok(ConstantsReport {
        trials,
        contraction,
        contraction_bound,
        growth,
        p,
        q: q.as_f64(),
        within_bounds: contraction <= contraction_bound * (1.0 + slack) && growth <= p * (1.0 + slack),
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Surface;
    use crate::grid::{RectDomain, TimeSlab};

    fn params() -> ModelParams<f64> {
        ModelParams::with_default_sigma(1.0, 0.5).unwrap()
    }

    fn grid(n: usize) -> SlabGrid<f64> {
        SlabGrid::new(TimeSlab::new(0.0, 0.5).unwrap(), RectDomain::unit(), n, n, n).unwrap()
    }

    #[test]
    fn equilibrium_has_zero_residual_and_balance() {
        let f = Field4::constant(grid(9), 0.25);
        let r = pde_residual(&params(), &f).unwrap();
        assert_eq!(r.max(), 0.0);
        let b = conservation_balance(&params(), &f);
        assert!(b.max_cumulative_gap() < 1e-15);
    }

    #[test]
    fn residual_of_a_non_solution() {
        let f = Field4::from_fn(grid(9), |_, t, x, _| t * x);
        let r = pde_residual(&params(), &f).unwrap();
        assert!(r.max() > 0.1);
    }

    #[test]
    fn upwind_is_exact_for_linear_transport_at_unit_courant() {
        let p = ModelParams::new(1.0, 0.0, 0.0).unwrap();
        // N1 = 1 + 2 (x - t) travels east; inflow at x = 0 matches
        let mut data = ProblemData::constant(RectDomain::unit(), 0.0, 1.0);
        data.initial[0] = Surface::Affine { value: 1.0, du: 2.0, dv: 0.0 };
        data.inflow[0] = Surface::Affine { value: 1.0, du: -2.0, dv: 0.0 };
        let g = SlabGrid::new(TimeSlab::new(0.0, 0.5).unwrap(), RectDomain::unit(), 5, 9, 9).unwrap();
        let f = upwind_oracle(&p, &data, &g).unwrap();
        for k in 0..g.nt {
            for j in 0..g.nx {
                let exact: f64 = 1.0 + 2.0 * (g.x(j) - g.t(k));
                assert!((f.at(Direction::East, k, j, 3) - exact).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn upwind_rejects_cfl_violation() {
        let g = SlabGrid::new(TimeSlab::new(0.0, 1.0).unwrap(), RectDomain::unit(), 3, 17, 17).unwrap();
        let data = ProblemData::constant(RectDomain::unit(), 0.0, 0.25);
        assert!(matches!(upwind_oracle(&params(), &data, &g), Err(Error::Config(_))));
    }

    #[test]
    fn oracle_grid_reaches_requested_courant() {
        let g = SlabGrid::new(TimeSlab::new(0.0, 1.0).unwrap(), RectDomain::unit(), 9, 9, 9).unwrap();
        let o = oracle_grid(&params(), &g, 0.5).unwrap();
        assert_eq!(o.nt, 17);
        assert!(params().c * o.ht / o.hx <= 0.5 + 1e-12);
    }

    #[test]
    fn constant_pair_difference_matches_closed_form() {
        // constant M and N: the collision terms are constants Q(M), Q(N), so
        // T_i M - T_i N = omega_i (Q(M) - Q(N)) (t - foot time)
        let p = params();
        let g = grid(5);
        let data = ProblemData::constant(RectDomain::unit(), 0.0, 0.1);
        let m = Field4::from_fn(g, |d, _, _, _| [0.1, 0.2, 0.3, 0.4][d.index()]);
        let n = Field4::from_fn(g, |d, _, _, _| [0.2, 0.1, 0.1, 0.3][d.index()]);
        let quad = QuadratureSpec::default();
        let tm = apply_t(&p, &data, &m, &quad).unwrap();
        let tn = apply_t(&p, &data, &n, &quad).unwrap();
        // Q(M) = 0.02, Q(N) = -0.05; the node (t = 0.5, x = 1) has foot time 0
        let got = tm.at(Direction::East, 4, 4, 2) - tn.at(Direction::East, 4, 4, 2);
        assert!((got - 0.07 * 0.5).abs() < 1e-12);
        let got = tm.at(Direction::North, 4, 2, 4) - tn.at(Direction::North, 4, 2, 4);
        assert!((got + 0.07 * 0.5).abs() < 1e-12);
        assert!((tm.sup_distance(&tn).unwrap() - 0.035).abs() < 1e-12);
    }
}
