//! Collision terms and the two slab operators, evaluated by quadrature along
//! backward characteristics.
//!
//! `T(M)_i` integrates `omega_i Q(M)` from the foot of the characteristic to
//! the lattice point and adds the datum read at the foot. The relaxed
//! `T^sigma(M)_i` solves the same transport problem with the linear damping
//! `sigma rho(|M|) N_i` moved to the left, which makes every term of its
//! integrand non-negative once `sigma > 2cS`.
//!
//! Off-lattice values of `M` are linear in time and bilinear in space; the
//! path is split at the lattice time planes so each piece sits inside one
//! time cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{foot_value, require_same_start, trace, CharFoot};
use crate::data::ProblemData;
use crate::error::{Error, Result};
use crate::field::Field4;
use crate::grid::{Direction, ModelParams, SlabGrid};
use crate::scalar::Scalar;

/// `rho(N) = N1 + N2 + N3 + N4`.
#[inline]
pub fn rho<T: Scalar>(n: &[T; 4]) -> T {
    n[0] + n[1] + n[2] + n[3]
}

/// `Q(N) = 2cS (N2 N3 - N1 N4)`.
#[inline]
pub fn collision_q<T: Scalar>(params: &ModelParams<T>, n: &[T; 4]) -> T {
    params.two_cs() * (n[1] * n[2] - n[0] * n[3])
}

/// `Q_i^sigma(|N|) = sigma rho(|N|) |N_i| + omega_i Q(|N|)`.
pub fn relaxed_q<T: Scalar>(params: &ModelParams<T>, n: &[T; 4], d: Direction) -> T {
    let a = n.map(|v| v.abs());
    params.sigma * rho(&a) * a[d.index()] + d.omega::<T>() * collision_q(params, &a)
}

/// The same quantity regrouped so that every term is a product of
/// non-negative factors when `sigma >= 2cS`; used inside the relaxed
/// operator so positivity survives rounding.
#[inline]
fn relaxed_q_expanded<T: Scalar>(params: &ModelParams<T>, a: &[T; 4], d: Direction) -> T {
    let s = params.sigma;
    let k = params.two_cs();
    let gap = s - k;
    match d {
        Direction::East => s * (a[0] + a[1] + a[2]) * a[0] + k * a[1] * a[2] + gap * a[0] * a[3],
        Direction::North => s * (a[0] + a[1] + a[3]) * a[1] + k * a[0] * a[3] + gap * a[1] * a[2],
        Direction::South => s * (a[0] + a[2] + a[3]) * a[2] + k * a[0] * a[3] + gap * a[1] * a[2],
        Direction::West => s * (a[1] + a[2] + a[3]) * a[3] + k * a[1] * a[2] + gap * a[0] * a[3],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    #[default]
    Trapezoid,
    Simpson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec<T> {
    pub rule: QuadratureRule,
    /// Integration step along the characteristic; `None` means the lattice
    /// time step.
    pub substep: Option<T>,
}

impl<T: Scalar> Default for QuadratureSpec<T> {
    fn default() -> Self {
        Self {
            rule: QuadratureRule::Trapezoid,
            substep: None,
        }
    }
}

impl<T: Scalar> QuadratureSpec<T> {
    pub fn simpson() -> Self {
        Self {
            rule: QuadratureRule::Simpson,
            substep: None,
        }
    }

    fn step(&self, grid: &SlabGrid<T>) -> Result<T> {
        let h = self.substep.unwrap_or(grid.ht);
        if !(h > T::zero()) || !h.is_finite() {
            return Err(Error::Config(format!("quadrature substep must be > 0, got {h}")));
        }
        Ok(h)
    }
}

/// Quadrature nodes along `[foot_time, t_k]`, split at the lattice time
/// planes. `segments` holds `(first, last)` node indices per piece so the
/// Simpson rule can work segment by segment.
struct PathNodes<T> {
    s: Vec<T>,
    segments: Vec<(usize, usize)>,
}

fn path_nodes<T: Scalar>(grid: &SlabGrid<T>, foot_time: T, k: usize, step: T, rule: QuadratureRule, out: &mut PathNodes<T>) {
    out.s.clear();
    out.segments.clear();
    let t = grid.t(k);
    let tiny = grid.ht * T::lit(1e-12);
    if t - foot_time <= tiny {
        return;
    }
    let mut breaks: Vec<T> = Vec::with_capacity(k + 2);
    breaks.push(foot_time);
    for m in 0..k {
        let tm = grid.t(m);
        if tm > foot_time + tiny {
            breaks.push(tm);
        }
    }
    breaks.push(t);
    out.s.push(foot_time);
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        let mut pieces = (len / step).ceil().to_usize().unwrap_or(1).max(1);
        if rule == QuadratureRule::Simpson && pieces % 2 == 1 {
            pieces += 1;
        }
        let first = out.s.len() - 1;
        let h = len / T::from_usize_lossy(pieces);
        for p in 1..pieces {
            out.s.push(a + h * T::from_usize_lossy(p));
        }
        out.s.push(b);
        out.segments.push((first, out.s.len() - 1));
    }
}

/// `integral of f` over the nodes with the selected rule.
fn integrate<T: Scalar>(nodes: &PathNodes<T>, f: &[T], rule: QuadratureRule) -> T {
    let mut total = T::zero();
    let half = T::lit(0.5);
    for &(a, b) in &nodes.segments {
        match rule {
            QuadratureRule::Trapezoid => {
                for n in a..b {
                    total = total + (nodes.s[n + 1] - nodes.s[n]) * (f[n] + f[n + 1]) * half;
                }
            }
            QuadratureRule::Simpson => {
                let h = (nodes.s[b] - nodes.s[a]) / T::from_usize_lossy(b - a);
                let mut acc = T::zero();
                let mut n = a;
                while n + 2 <= b {
                    acc = acc + f[n] + T::lit(4.0) * f[n + 1] + f[n + 2];
                    n += 2;
                }
                total = total + acc * h / T::lit(3.0);
            }
        }
    }
    total
}

/// Running integrals `I_n = integral of g from s_0 to s_n`.
fn cumulative<T: Scalar>(nodes: &PathNodes<T>, g: &[T], rule: QuadratureRule, out: &mut Vec<T>) {
    out.clear();
    if nodes.s.is_empty() {
        return;
    }
    out.resize(nodes.s.len(), T::zero());
    let half = T::lit(0.5);
    for &(a, b) in &nodes.segments {
        match rule {
            QuadratureRule::Trapezoid => {
                for n in a..b {
                    out[n + 1] = out[n] + (nodes.s[n + 1] - nodes.s[n]) * (g[n] + g[n + 1]) * half;
                }
            }
            QuadratureRule::Simpson => {
                let h = (nodes.s[b] - nodes.s[a]) / T::from_usize_lossy(b - a);
                let mut n = a;
                while n + 2 <= b {
                    // third-order partial panel for the midpoint, Simpson for the pair
                    out[n + 1] = out[n] + h * (T::lit(5.0) * g[n] + T::lit(8.0) * g[n + 1] - g[n + 2]) / T::lit(12.0);
                    out[n + 2] = out[n] + h * (g[n] + T::lit(4.0) * g[n + 1] + g[n + 2]) / T::lit(3.0);
                    n += 2;
                }
            }
        }
    }
}

/// Weights `(w0, w1)` with `integral over [0,h] of (Q0 (1-u) + Q1 u) e^{L(s)} ds
/// = h (w0 Q0 + w1 Q1)` for `L` linear from `l0` to `l1` (both `<= 0` in use).
#[inline]
fn exp_linear_weights<T: Scalar>(l0: T, l1: T) -> (T, T) {
    let d = l1 - l0;
    let e0 = l0.exp();
    if d.abs() < T::lit(0.1) {
        // series of (e^d - 1 - d)/d^2 and (e^d (d - 1) + 1)/d^2
        let mut w0 = T::zero();
        let mut w1 = T::zero();
        let mut pow = T::one();
        let mut fact = T::lit(2.0);
        for n in 0..12 {
            w0 = w0 + pow / fact;
            w1 = w1 + pow * T::from_usize_lossy(n + 1) / fact;
            pow = pow * d;
            fact = fact * T::from_usize_lossy(n + 3);
        }
        (e0 * w0, e0 * w1)
    } else {
        let e1 = l1.exp();
        let d2 = d * d;
        ((e1 - e0 - d * e0) / d2, (e1 * (d - T::one()) + e0) / d2)
    }
}

/// Which of the two slab operators to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    #[default]
    Plain,
    Relaxed,
}

struct Workspace<T> {
    nodes: PathNodes<T>,
    f: Vec<T>,
    g: Vec<T>,
    cum: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    fn new() -> Self {
        Self {
            nodes: PathNodes {
                s: Vec::new(),
                segments: Vec::new(),
            },
            f: Vec::new(),
            g: Vec::new(),
            cum: Vec::new(),
        }
    }
}

enum Integrand<'a, T> {
    /// `T(M)` with the given collision field, or pure transport when `None`.
    Plain(Option<&'a Field4<T>>),
    Relaxed(&'a Field4<T>),
}

fn check_inputs<T: Scalar>(grid: &SlabGrid<T>, data: &ProblemData<T>, m: Option<&Field4<T>>) -> Result<()> {
    require_same_start(data, &grid.slab)?;
    if let Some(m) = m {
        if !m.grid().same_shape(grid) || m.grid().slab != grid.slab {
            return Err(Error::Shape("operand field does not live on the slab grid".into()));
        }
    }
    Ok(())
}

/// Evaluates one component of an operator at lattice node `n`.
fn point_value<T: Scalar>(
    params: &ModelParams<T>,
    grid: &SlabGrid<T>,
    data: &ProblemData<T>,
    integrand: &Integrand<'_, T>,
    quad: &QuadratureSpec<T>,
    step: T,
    d: Direction,
    n: usize,
    ws: &mut Workspace<T>,
) -> Result<(T, T)> {
    let (k, j, l) = grid.coords(n);
    let p = (grid.t(k), grid.x(j), grid.y(l));
    let foot = trace(params, &grid.slab, &grid.domain, d, p);
    let datum = foot_value(data, params, &foot, p)?;
    let field = match integrand {
        Integrand::Plain(None) => return Ok((datum, datum)),
        Integrand::Plain(Some(m)) | Integrand::Relaxed(m) => *m,
    };
    path_nodes(grid, foot.foot_time, k, step, quad.rule, &mut ws.nodes);
    if ws.nodes.s.is_empty() {
        return Ok((datum, datum));
    }
    ws.f.clear();
    ws.g.clear();
    for &s in &ws.nodes.s {
        let (x, y) = CharFoot::path(params.c, d, p, s);
        let v = field.sample(s, x, y);
        match integrand {
            Integrand::Plain(_) => ws.f.push(d.omega::<T>() * collision_q(params, &v)),
            Integrand::Relaxed(_) => {
                let a = v.map(|u| u.abs());
                ws.f.push(relaxed_q_expanded(params, &a, d));
                ws.g.push(params.sigma * rho(&a));
            }
        }
    }
    let value = match integrand {
        Integrand::Plain(_) => integrate(&ws.nodes, &ws.f, quad.rule) + datum,
        Integrand::Relaxed(_) => {
            cumulative(&ws.nodes, &ws.g, quad.rule, &mut ws.cum);
            let total = *ws.cum.last().expect("non-empty path");
            // exponents relative to the endpoint, all <= 0 up to rounding
            let integral = match quad.rule {
                QuadratureRule::Trapezoid => {
                    let mut acc = T::zero();
                    for &(a, b) in &ws.nodes.segments {
                        for i in a..b {
                            let h = ws.nodes.s[i + 1] - ws.nodes.s[i];
                            let (w0, w1) = exp_linear_weights(ws.cum[i] - total, ws.cum[i + 1] - total);
                            acc = acc + h * (w0 * ws.f[i] + w1 * ws.f[i + 1]);
                        }
                    }
                    acc
                }
                QuadratureRule::Simpson => {
                    for i in 0..ws.f.len() {
                        ws.f[i] = ws.f[i] * (ws.cum[i] - total).exp();
                    }
                    integrate(&ws.nodes, &ws.f, quad.rule)
                }
            };
            integral + datum * (-total).exp()
        }
    };
    Ok((value, datum))
}

fn apply<T: Scalar>(
    params: &ModelParams<T>,
    grid: &SlabGrid<T>,
    data: &ProblemData<T>,
    integrand: Integrand<'_, T>,
    quad: &QuadratureSpec<T>,
) -> Result<(Field4<T>, T)> {
    let step = quad.step(grid)?;
    let mut comps: Vec<Vec<T>> = Vec::with_capacity(4);
    let mut data_sup = T::zero();
    for d in Direction::ALL {
        // one result per node, collected in lattice order: bitwise
        // independent of the number of workers
        let results: Result<Vec<(T, T)>> = (0..grid.len())
            .into_par_iter()
            .map_init(Workspace::new, |ws, n| point_value(params, grid, data, &integrand, quad, step, d, n, ws))
            .collect();
        let results = results?;
        data_sup = results.iter().fold(data_sup, |a, r| a.max_nan(r.1.abs()));
        comps.push(results.into_iter().map(|r| r.0).collect());
    }
    let values: [Vec<T>; 4] = comps.try_into().expect("four components");
    let field = Field4::from_components(*grid, values)?;
    if !field.is_finite() {
        return Err(Error::Numeric("operator produced a non-finite value".into()));
    }
    Ok((field, data_sup))
}

/// The data advected along characteristics, i.e. `T` with `Q = 0`.
pub fn transport<T: Scalar>(params: &ModelParams<T>, grid: &SlabGrid<T>, data: &ProblemData<T>) -> Result<Field4<T>> {
    check_inputs(grid, data, None)?;
    apply(params, grid, data, Integrand::Plain(None), &QuadratureSpec::default()).map(|r| r.0)
}

/// `T(M)` on the lattice of `m`.
pub fn apply_t<T: Scalar>(params: &ModelParams<T>, data: &ProblemData<T>, m: &Field4<T>, quad: &QuadratureSpec<T>) -> Result<Field4<T>> {
    let grid = *m.grid();
    check_inputs(&grid, data, Some(m))?;
    apply(params, &grid, data, Integrand::Plain(Some(m)), quad).map(|r| r.0)
}

/// `T^sigma(M)` on the lattice of `m`; the result is certified
/// non-negative up to `tol_pos = 1e-12 (1 + ||data||)`.
pub fn apply_t_sigma<T: Scalar>(
    params: &ModelParams<T>,
    data: &ProblemData<T>,
    m: &Field4<T>,
    quad: &QuadratureSpec<T>,
) -> Result<Field4<T>> {
    params.require_relaxation()?;
    let grid = *m.grid();
    check_inputs(&grid, data, Some(m))?;
    let (mut field, data_sup) = apply(params, &grid, data, Integrand::Relaxed(m), quad)?;
    field.certify_non_negative(positivity_tolerance(data_sup))?;
    Ok(field)
}

/// Applies the selected operator.
pub fn apply_operator<T: Scalar>(
    kind: OperatorKind,
    params: &ModelParams<T>,
    data: &ProblemData<T>,
    m: &Field4<T>,
    quad: &QuadratureSpec<T>,
) -> Result<Field4<T>> {
    match kind {
        OperatorKind::Plain => apply_t(params, data, m, quad),
        OperatorKind::Relaxed => apply_t_sigma(params, data, m, quad),
    }
}

/// `1e-12 (1 + ||data||)`.
pub fn positivity_tolerance<T: Scalar>(data_sup: T) -> T {
    T::lit(1e-12) * (T::one() + data_sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Surface;
    use crate::grid::{RectDomain, TimeSlab};

    fn params(sigma: f64) -> ModelParams<f64> {
        ModelParams::new(1.0, 0.5, sigma).unwrap()
    }

    fn grid(n: usize, len: f64) -> SlabGrid<f64> {
        SlabGrid::new(TimeSlab::new(0.0, len).unwrap(), RectDomain::unit(), n, n, n).unwrap()
    }

    #[test]
    fn rho_and_collision_arithmetic() {
        let n = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(rho(&n), 10.0);
        assert_eq!(rho(&[0.2; 4]), 0.8);
        assert_eq!(collision_q(&params(0.0), &n), 2.0);
        assert_eq!(collision_q(&params(0.0), &[0.3; 4]), 0.0);
        let no_collisions = ModelParams::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(collision_q(&no_collisions, &n), 0.0);
    }

    #[test]
    fn relaxed_q_examples() {
        // equilibrium: Q = 0, result sigma * 4k * k
        let k = 0.7;
        let p = params(3.0);
        let v = relaxed_q(&p, &[k; 4], Direction::North);
        assert!((v - 12.0 * k * k).abs() < 1e-14);
        assert_eq!(relaxed_q(&p, &[0.0; 4], Direction::East), 0.0);
        // sigma = 2, N = (1,2,3,4), i = 1: 2*10*1 + 2 = 22
        let p = params(2.0);
        let n = [1.0, 2.0, 3.0, 4.0];
        assert!((relaxed_q(&p, &n, Direction::East) - 22.0).abs() < 1e-14);
        for d in Direction::ALL {
            let a = relaxed_q(&p, &n, d);
            let b = relaxed_q_expanded(&p, &n, d);
            assert!((a - b).abs() < 1e-13, "{d:?}: {a} vs {b}");
        }
    }

    #[test]
    fn exp_weights_match_quadrature() {
        for &(l0, l1) in &[(-0.3, -0.1), (-2.0, 0.0), (-1e-9, 0.0), (-0.05, -0.01), (0.0, 0.0)] {
            let (w0, w1) = exp_linear_weights(l0, l1);
            // fine midpoint rule for both basis integrals
            let n = 20000;
            let (mut r0, mut r1) = (0.0, 0.0);
            for i in 0..n {
                let u = (i as f64 + 0.5) / n as f64;
                let e = (l0 + (l1 - l0) * u).exp();
                r0 += (1.0 - u) * e / n as f64;
                r1 += u * e / n as f64;
            }
            assert!((w0 - r0).abs() < 1e-9 && (w1 - r1).abs() < 1e-9, "{l0} {l1}");
        }
    }

    #[test]
    fn equilibrium_is_fixed_by_both_operators() {
        let g = grid(9, 1.0);
        let k = 0.25;
        let data = ProblemData::constant(g.domain, 0.0, k);
        let m = Field4::constant(g, k);
        let t = apply_t(&params(1.05), &data, &m, &QuadratureSpec::default()).unwrap();
        assert!(t.sup_distance(&m).unwrap() < 1e-14);
        let ts = apply_t_sigma(&params(1.05), &data, &m, &QuadratureSpec::default()).unwrap();
        assert!(ts.sup_distance(&m).unwrap() < 1e-13);
        assert!(ts.is_physical());
    }

    #[test]
    fn zero_field_zero_data() {
        let g = grid(5, 0.5);
        let data = ProblemData::zero(g.domain, 0.0);
        let t = apply_t(&params(1.05), &data, &Field4::zeros(g), &QuadratureSpec::default()).unwrap();
        assert_eq!(t.sup_norm(), 0.0);
        let ts = apply_t_sigma(&params(1.05), &data, &Field4::zeros(g), &QuadratureSpec::default()).unwrap();
        assert_eq!(ts.sup_norm(), 0.0);
    }

    #[test]
    fn relaxed_on_zero_field_returns_data() {
        let g = grid(5, 0.5);
        let data = ProblemData::constant(g.domain, 0.0, 0.4);
        let ts = apply_t_sigma(&params(1.05), &data, &Field4::zeros(g), &QuadratureSpec::default()).unwrap();
        assert!(ts.sup_distance(&Field4::constant(g, 0.4)).unwrap() < 1e-15);
    }

    #[test]
    fn constant_collision_integrates_exactly() {
        // M = (1, 0.5, 0.5, 0): Q = 2cS * 0.25 = 0.25 everywhere
        let g = grid(9, 0.8);
        let m = Field4::from_fn(g, |d, _, _, _| [1.0, 0.5, 0.5, 0.0][d.index()]);
        let mut data = ProblemData::zero(g.domain, 0.0);
        data.initial[0] = Surface::Affine { value: 0.1, du: 1.0, dv: 0.0 };
        data.inflow[0] = Surface::Affine { value: 0.1, du: -1.0, dv: 0.0 };
        let t = apply_t(&params(0.0), &data, &m, &QuadratureSpec::default()).unwrap();
        let (k, j, l) = (4, 7, 3);
        let (tt, x) = (g.t(k), g.x(j));
        // region A: x - t >= 0
        assert!(x - tt >= 0.0);
        let expected = 0.25 * tt + 0.1 + (x - tt);
        assert!((t.at(Direction::East, k, j, l) - expected).abs() < 1e-13);
        // region B for N1 at the same time but small x: integral from the foot only
        let j = 1;
        let x = g.x(j);
        let foot = tt - x;
        let expected_b = 0.25 * (tt - foot) + 0.1 - foot;
        assert!((t.at(Direction::East, k, j, l) - expected_b).abs() < 1e-13);
        // N2 carries -Q
        let (k, j, l) = (8, 2, 8);
        let yy = g.y(l);
        let expected_n2 = -0.25 * g.t(k);
        assert!(yy - g.t(k) >= 0.0);
        assert!((t.at(Direction::North, k, j, l) - expected_n2).abs() < 1e-13);
    }

    #[test]
    fn simpson_matches_trapezoid_on_smooth_problem() {
        let g = grid(9, 0.5);
        let m = Field4::from_fn(g, |d, t, x, y| 0.3 + 0.1 * (d.index() as f64) * (x + y * t).sin());
        let data = ProblemData::constant(g.domain, 0.0, 0.3);
        let a = apply_t(&params(1.05), &data, &m, &QuadratureSpec::default()).unwrap();
        let b = apply_t(&params(1.05), &data, &m, &QuadratureSpec::simpson()).unwrap();
        assert!(a.sup_distance(&b).unwrap() < 1e-3);
        let a = apply_t_sigma(&params(1.05), &data, &m, &QuadratureSpec::default()).unwrap();
        let b = apply_t_sigma(&params(1.05), &data, &m, &QuadratureSpec::simpson()).unwrap();
        assert!(a.sup_distance(&b).unwrap() < 1e-3);
    }

    #[test]
    fn invalid_inputs() {
        let g = grid(5, 0.5);
        let data = ProblemData::zero(g.domain, 0.0);
        let m = Field4::zeros(g);
        let bad = QuadratureSpec { rule: QuadratureRule::Trapezoid, substep: Some(0.0) };
        assert!(matches!(apply_t(&params(1.05), &data, &m, &bad), Err(Error::Config(_))));
        assert!(matches!(
            apply_t_sigma(&params(1.0), &data, &m, &QuadratureSpec::default()),
            Err(Error::Precondition(_))
        ));
        let late = ProblemData::zero(g.domain, 0.1);
        assert!(apply_t(&params(1.05), &late, &m, &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn transport_reads_data_at_feet() {
        let g = grid(9, 0.5);
        let mut data = ProblemData::zero(g.domain, 0.0);
        data.initial[3] = Surface::Affine { value: 0.0, du: 1.0, dv: 0.0 };
        data.inflow[3] = Surface::Affine { value: 1.0, du: 1.0, dv: 0.0 };
        let f = transport(&params(0.0), &g, &data).unwrap();
        for n in 0..g.len() {
            let (k, j, _) = g.coords(n);
            let (t, x) = (g.t(k), g.x(j));
            let expected = if x + t <= 1.0 { x + t } else { 1.0 + t - (1.0 - x) };
            assert!((f.component(Direction::West)[n] - expected).abs() < 1e-14);
        }
    }
}
