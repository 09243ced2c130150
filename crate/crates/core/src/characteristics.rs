//! Backward characteristics, the A/B partition of the slab and the shifted
//! data read along characteristics.
//!
//! Component `i` is transported with velocity `v_i`. Followed backwards from
//! `(t, x, y)` its characteristic either reaches the initial plane `t = tau`
//! inside the rectangle (region A) or leaves through the inflow face of that
//! component at some time `foot_time >= tau` (region B).

use serde::Serialize;

use crate::data::{DataSelector, ProblemData};
use crate::error::{Error, Result};
use crate::grid::{Direction, ModelParams, RectDomain, SlabGrid, TimeSlab};
use crate::norms::{lattice_norm1, Axes, Norm1};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    /// The foot lies on the initial plane.
    A,
    /// The foot lies on the inflow face.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharFoot<T> {
    pub direction: Direction,
    pub region: Region,
    pub foot_time: T,
    /// `(t, x, y)` of the foot.
    pub foot_point: (T, T, T),
}

impl<T: Scalar> CharFoot<T> {
    /// Position on the characteristic through `(t, x, y)` at time `s`.
    #[inline]
    pub fn path(c: T, d: Direction, (t, x, y): (T, T, T), s: T) -> (T, T) {
        let shift = c * (s - t);
        match d {
            Direction::East => (x + shift, y),
            Direction::North => (x, y + shift),
            Direction::South => (x, y - shift),
            Direction::West => (x - shift, y),
        }
    }
}

/// Traces the characteristic of direction `d` back from `point` to its foot.
/// Points on the dividing plane are assigned to region A.
pub fn trace<T: Scalar>(
    params: &ModelParams<T>,
    slab: &TimeSlab<T>,
    domain: &RectDomain<T>,
    d: Direction,
    point: (T, T, T),
) -> CharFoot<T> {
    let (t, x, y) = point;
    let c = params.c;
    let tau = slab.tau;
    let travel = c * (t - tau);
    // distance to the inflow face measured against the flow
    let (upstream, face_gap) = match d {
        Direction::East => (x - travel, x - domain.a1),
        Direction::North => (y - travel, y - domain.a2),
        Direction::South => (y + travel, domain.b2 - y),
        Direction::West => (x + travel, domain.b1 - x),
    };
    let in_a = match d {
        Direction::East => upstream >= domain.a1,
        Direction::North => upstream >= domain.a2,
        Direction::South => upstream <= domain.b2,
        Direction::West => upstream <= domain.b1,
    };
    if in_a {
        let foot_point = match d {
            Direction::East | Direction::West => (tau, upstream, y),
            Direction::North | Direction::South => (tau, x, upstream),
        };
        CharFoot {
            direction: d,
            region: Region::A,
            foot_time: tau,
            foot_point,
        }
    } else {
        let foot_time = (t - face_gap / c).max(tau).min(t);
        let foot_point = match d {
            Direction::East => (foot_time, domain.a1, y),
            Direction::North => (foot_time, x, domain.a2),
            Direction::South => (foot_time, x, domain.b2),
            Direction::West => (foot_time, domain.b1, y),
        };
        CharFoot {
            direction: d,
            region: Region::B,
            foot_time,
            foot_point,
        }
    }
}

/// Argument at which the source datum of a shifted datum is read.
fn shifted_argument<T: Scalar>(
    c: T,
    tau: T,
    domain: &RectDomain<T>,
    which: DataSelector,
    (t, x, y): (T, T, T),
) -> (T, T) {
    let travel = c * (t - tau);
    match which {
        DataSelector::Initial(Direction::East) => (x - travel, y),
        DataSelector::Initial(Direction::North) => (x, y - travel),
        DataSelector::Initial(Direction::South) => (x, y + travel),
        // direction 4 moves with -c, so its initial datum is read upstream at x + c(t - tau)
        DataSelector::Initial(Direction::West) => (x + travel, y),
        DataSelector::Inflow(Direction::East) => (t - (x - domain.a1) / c, y),
        DataSelector::Inflow(Direction::North) => (t - (y - domain.a2) / c, x),
        DataSelector::Inflow(Direction::South) => (t - (domain.b2 - y) / c, x),
        DataSelector::Inflow(Direction::West) => (t - (domain.b1 - x) / c, y),
    }
}

fn snap<T: Scalar>(v: T, lo: T, hi: T, eps: T) -> T {
    if v < lo && v >= lo - eps {
        lo
    } else if v > hi && v <= hi + eps {
        hi
    } else {
        v
    }
}

/// Evaluates a shifted datum at `(t, x, y)`; the initial time is
/// `data.t0`. Errors when the shift leaves the source datum's domain.
pub fn shifted_eval<T: Scalar>(
    data: &ProblemData<T>,
    params: &ModelParams<T>,
    which: DataSelector,
    point: (T, T, T),
) -> Result<T> {
    let dom = &data.domain;
    let (mut u, mut v) = shifted_argument(params.c, data.t0, dom, which, point);
    let eps = (dom.width() + dom.height() + (point.0 - data.t0).abs() * params.c) * T::lit(1e-12);
    match which {
        DataSelector::Initial(_) => {
            u = snap(u, dom.a1, dom.b1, eps);
            v = snap(v, dom.a2, dom.b2, eps);
        }
        DataSelector::Inflow(_) => {
            let teps = eps / params.c + (T::one() + data.t0.abs()) * T::lit(1e-12);
            if u < data.t0 && u >= data.t0 - teps {
                u = data.t0;
            }
        }
    }
    data.evaluate(which, (u, v))
}

/// Datum value at the foot of a traced characteristic.
pub fn foot_value<T: Scalar>(data: &ProblemData<T>, params: &ModelParams<T>, foot: &CharFoot<T>, point: (T, T, T)) -> Result<T> {
    let which = match foot.region {
        Region::A => DataSelector::Initial(foot.direction),
        Region::B => DataSelector::Inflow(foot.direction),
    };
    shifted_eval(data, params, which, point)
}

/// Finite-difference norms of the raw and shifted data over one window.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftedNormReport<T> {
    /// `||N_i^tau||_1` over the rectangle, by direction index.
    pub raw_initial: [Norm1<T>; 4],
    /// `||N-||_1`, `||N+||_1` over the window times the edge.
    pub raw_inflow: [Norm1<T>; 4],
    /// `||shifted N_i^tau||_1` where defined in the window.
    pub shifted_initial: [Norm1<T>; 4],
    pub shifted_inflow: [Norm1<T>; 4],
    /// `q`, the largest shifted norm.
    pub q: T,
    /// Largest raw norm.
    pub raw_max: T,
    pub gamma: T,
    /// `||shifted initial|| <= (1+c) ||raw||` and
    /// `||shifted inflow|| <= (1+1/c) ||raw||`, up to the finite-difference slack.
    pub bounds_hold: bool,
}

/// Relative allowance for comparing finite-difference estimates taken at
/// different step sizes.
pub const FD_SLACK: f64 = 0.05;

/// Estimates every `||N-bar||_1` on the lattice `(nt, nx, ny)` over `window`
/// and checks the shift bounds with `gamma = 1 + c + 1/c`.
pub fn shifted_norm_bound<T: Scalar>(
    data: &ProblemData<T>,
    params: &ModelParams<T>,
    window: &TimeSlab<T>,
    resolution: (usize, usize, usize),
) -> Result<ShiftedNormReport<T>> {
    let (nt, nx, ny) = resolution;
    require_same_start(data, window)?;
    let grid = SlabGrid::new(*window, data.domain, nt, nx, ny)?;
    let c = params.c;
    let dom = data.domain;

    let raw_initial = Direction::ALL.map(|d| {
        let axes = Axes {
            n: [1, nx, ny],
            h: [T::one(), grid.hx, grid.hy],
        };
        lattice_norm1(
            axes,
            |n| data.evaluate(DataSelector::Initial(d), (grid.x(n % nx), grid.y(n / nx))).ok(),
            |_, _| false,
        )
    });
    let raw_inflow = Direction::ALL.map(|d| {
        let (lo, hi) = data.edge_range(d);
        let ns = match d {
            Direction::East | Direction::West => ny,
            _ => nx,
        };
        let hs = (hi - lo) / T::from_usize_lossy(ns - 1);
        // axis 0 is time, axis 1 the edge coordinate
        let axes = Axes {
            n: [nt, ns, 1],
            h: [grid.ht, hs, T::one()],
        };
        lattice_norm1(
            axes,
            |n| {
                let s = if n % ns + 1 == ns { hi } else { lo + T::from_usize_lossy(n % ns) * hs };
                data.evaluate(DataSelector::Inflow(d), (grid.t(n / ns), s)).ok()
            },
            |_, _| false,
        )
    });

    let axes = Axes {
        n: [nt, nx, ny],
        h: [grid.ht, grid.hx, grid.hy],
    };
    let shifted = |which: DataSelector, d: Direction| {
        lattice_norm1(
            axes,
            |n| {
                let (k, j, l) = grid.coords(n);
                let p = (grid.t(k), grid.x(j), grid.y(l));
                let foot = trace(params, window, &dom, d, p);
                let defined = match which {
                    DataSelector::Initial(_) => foot.region == Region::A,
                    DataSelector::Inflow(_) => {
                        foot.region == Region::B || is_on_plane(params, window, &dom, d, p)
                    }
                };
                if defined {
                    shifted_eval(data, params, which, p).ok()
                } else {
                    None
                }
            },
            |_, _| false,
        )
    };
    let shifted_initial = Direction::ALL.map(|d| shifted(DataSelector::Initial(d), d));
    let shifted_inflow = Direction::ALL.map(|d| shifted(DataSelector::Inflow(d), d));

    let fold = |xs: &[Norm1<T>]| xs.iter().fold(T::zero(), |a, n| a.max_nan(n.value()));
    let q = fold(&shifted_initial).max_nan(fold(&shifted_inflow));
    let raw_max = fold(&raw_initial).max_nan(fold(&raw_inflow));
    let slack = T::one() + T::lit(FD_SLACK);
    let tiny = T::lit(1e-14);
    let init_factor = T::one() + c;
    let inflow_factor = T::one() + T::one() / c;
    let bounds_hold = (0..4).all(|i| {
        shifted_initial[i].value() <= init_factor * raw_initial[i].value() * slack + tiny
            && shifted_inflow[i].value() <= inflow_factor * raw_inflow[i].value() * slack + tiny
    });
    if !q.is_finite() {
        return Err(Error::Numeric("data norm is not finite".into()));
    }
    Ok(ShiftedNormReport {
        raw_initial,
        raw_inflow,
        shifted_initial,
        shifted_inflow,
        q,
        raw_max,
        gamma: gamma(c),
        bounds_hold,
    })
}

/// Whether `p` lies on the dividing plane of direction `d`.
fn is_on_plane<T: Scalar>(params: &ModelParams<T>, slab: &TimeSlab<T>, dom: &RectDomain<T>, d: Direction, p: (T, T, T)) -> bool {
    let travel = params.c * (p.0 - slab.tau);
    let gap = match d {
        Direction::East => p.1 - travel - dom.a1,
        Direction::North => p.2 - travel - dom.a2,
        Direction::South => dom.b2 - p.2 - travel,
        Direction::West => dom.b1 - p.1 - travel,
    };
    gap.abs() <= (dom.width() + dom.height()) * T::lit(1e-12)
}

/// The shifted initial data are read from `data.t0`, which must be the
/// start of the slab.
pub(crate) fn require_same_start<T: Scalar>(data: &ProblemData<T>, slab: &TimeSlab<T>) -> Result<()> {
    let tol = (T::one() + slab.tau.abs()) * T::lit(1e-12);
    if (data.t0 - slab.tau).abs() <= tol {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "data are prescribed at t = {} but the slab starts at {}",
            data.t0, slab.tau
        )))
    }
}

/// `gamma = 1 + c + 1/c`.
pub fn gamma<T: Scalar>(c: T) -> T {
    T::one() + c + T::one() / c
}
