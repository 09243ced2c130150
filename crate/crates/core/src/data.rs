//! Initial and inflow data of the slab problem.
//!
//! Every datum is a function of two variables. Initial data `N_i^tau(x, y)`
//! live on the rectangle; inflow data are functions of time and the edge
//! coordinate: `N1-(t, y)`, `N2-(t, x)`, `N3+(t, x)`, `N4+(t, y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Direction, RectDomain};
use crate::scalar::Scalar;

/// Uniform lattice of values over `[u0, u1] x [v0, v1]`, bilinearly
/// interpolated. Values are stored row-major with `v` as the outer index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2<T> {
    pub u0: T,
    pub u1: T,
    pub v0: T,
    pub v1: T,
    pub nu: usize,
    pub nv: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> Table2<T> {
    pub fn new(u0: T, u1: T, v0: T, v1: T, nu: usize, nv: usize, values: Vec<T>) -> Result<Self> {
        if nu < 2 || nv < 2 {
            return Err(Error::GridSize(format!("table needs >= 2 nodes per axis, got {nu}x{nv}")));
        }
        if !(u0 < u1) || !(v0 < v1) {
            return Err(Error::Config("table axes must be increasing".into()));
        }
        if values.len() != nu * nv {
            return Err(Error::Shape(format!(
                "table of {nu}x{nv} nodes needs {} values, got {}",
                nu * nv,
                values.len()
            )));
        }
        Ok(Self { u0, u1, v0, v1, nu, nv, values })
    }

    pub fn hu(&self) -> T {
        (self.u1 - self.u0) / T::from_usize_lossy(self.nu - 1)
    }

    pub fn hv(&self) -> T {
        (self.v1 - self.v0) / T::from_usize_lossy(self.nv - 1)
    }

    pub fn u_node(&self, i: usize) -> T {
        if i + 1 == self.nu {
            self.u1
        } else {
            self.u0 + T::from_usize_lossy(i) * self.hu()
        }
    }

    pub fn v_node(&self, i: usize) -> T {
        if i + 1 == self.nv {
            self.v1
        } else {
            self.v0 + T::from_usize_lossy(i) * self.hv()
        }
    }

    fn covers(&self, u: T, v: T) -> bool {
        let eu = (self.u1 - self.u0) * T::lit(1e-12);
        let ev = (self.v1 - self.v0) * T::lit(1e-12);
        u >= self.u0 - eu && u <= self.u1 + eu && v >= self.v0 - ev && v <= self.v1 + ev
    }

    /// Bilinear interpolation; exact at the nodes. `None` off the table.
    pub fn eval(&self, u: T, v: T) -> Option<T> {
        if !self.covers(u, v) {
            return None;
        }
        let (i, fu) = crate::grid::SlabGrid::locate(self.u0, self.hu(), self.nu, u);
        let (j, fv) = crate::grid::SlabGrid::locate(self.v0, self.hv(), self.nv, v);
        let at = |a: usize, b: usize| self.values[b * self.nu + a];
        let one = T::one();
        let lo = at(i, j) * (one - fu) + at(i + 1, j) * fu;
        let hi = at(i, j + 1) * (one - fu) + at(i + 1, j + 1) * fu;
        Some(lo * (one - fv) + hi * fv)
    }
}

/// A datum given in closed form or as a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Surface<T> {
    Constant {
        value: T,
    },
    /// `value + du * u + dv * v`.
    Affine {
        value: T,
        du: T,
        dv: T,
    },
    /// `base + amplitude * exp(-((u-u0)^2 + (v-v0)^2) / width^2)`.
    Gaussian {
        base: T,
        amplitude: T,
        u0: T,
        v0: T,
        width: T,
    },
    /// `base + amplitude * sin(ku u + phase_u) * sin(kv v + phase_v)`.
    Trig {
        base: T,
        amplitude: T,
        ku: T,
        kv: T,
        phase_u: T,
        phase_v: T,
    },
    /// `base + amplitude * sin^2(pi (u-u0)/lu) * sin^2(pi (v-v0)/lv)`. With
    /// `compact` the bump is cut off outside `[u0, u0+lu] x [v0, v0+lv]`,
    /// which keeps it continuously differentiable.
    SinSquared {
        #[serde(default)]
        base: T,
        amplitude: T,
        u0: T,
        lu: T,
        v0: T,
        lv: T,
        #[serde(default)]
        compact: bool,
    },
    Table(Table2<T>),
}

impl<T: Scalar> Surface<T> {
    pub fn constant(value: T) -> Self {
        Surface::Constant { value }
    }

    pub fn zero() -> Self {
        Self::constant(T::zero())
    }

    /// Value at `(u, v)`; `None` when a table does not cover the point.
    pub fn eval(&self, u: T, v: T) -> Option<T> {
        let val = match self {
            Surface::Constant { value } => *value,
            Surface::Affine { value, du, dv } => *value + *du * u + *dv * v,
            Surface::Gaussian {
                base,
                amplitude,
                u0,
                v0,
                width,
            } => {
                let r2 = (u - *u0).powi(2) + (v - *v0).powi(2);
                *base + *amplitude * (-r2 / (*width * *width)).exp()
            }
            Surface::Trig {
                base,
                amplitude,
                ku,
                kv,
                phase_u,
                phase_v,
            } => *base + *amplitude * (*ku * u + *phase_u).sin() * (*kv * v + *phase_v).sin(),
            Surface::SinSquared {
                base,
                amplitude,
                u0,
                lu,
                v0,
                lv,
                compact,
            } => {
                let su = (u - *u0) / *lu;
                let sv = (v - *v0) / *lv;
                let outside = su < T::zero() || su > T::one() || sv < T::zero() || sv > T::one();
                if *compact && outside {
                    *base
                } else {
                    let pi = T::PI();
                    *base + *amplitude * (pi * su).sin().powi(2) * (pi * sv).sin().powi(2)
                }
            }
            Surface::Table(t) => return t.eval(u, v),
        };
        Some(val)
    }

    pub fn as_table(&self) -> Option<&Table2<T>> {
        match self {
            Surface::Table(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_tabulated(&self) -> bool {
        self.as_table().is_some()
    }
}

/// Names one of the eight data functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataSelector {
    /// `N_i^tau(x, y)`.
    Initial(Direction),
    /// The inflow datum of the component entering through its face.
    Inflow(Direction),
}

/// Initial data at `t0` plus the four inflow data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + Default"))]
pub struct ProblemData<T> {
    pub domain: RectDomain<T>,
    /// Time at which the initial data are prescribed.
    pub t0: T,
    /// Indexed by [`Direction::index`].
    pub initial: [Surface<T>; 4],
    /// `[N1-, N2-, N3+, N4+]`.
    pub inflow: [Surface<T>; 4],
}

/// Largest mismatch of one compatibility identity along its edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeViolation<T> {
    pub direction: Direction,
    /// e.g. `"x=a1"`.
    pub edge: &'static str,
    /// Edge coordinate of the worst sample.
    pub at: T,
    pub gap: T,
}

const EDGE_SAMPLES: usize = 65;

impl<T: Scalar> ProblemData<T> {
    /// Every datum equal to `k`: the constant equilibrium.
    pub fn constant(domain: RectDomain<T>, t0: T, k: T) -> Self {
        let s = Surface::constant(k);
        Self {
            domain,
            t0,
            initial: [s.clone(), s.clone(), s.clone(), s.clone()],
            inflow: [s.clone(), s.clone(), s.clone(), s],
        }
    }

    pub fn zero(domain: RectDomain<T>, t0: T) -> Self {
        Self::constant(domain, t0, T::zero())
    }

    pub fn surface(&self, which: DataSelector) -> &Surface<T> {
        match which {
            DataSelector::Initial(d) => &self.initial[d.index()],
            DataSelector::Inflow(d) => &self.inflow[d.index()],
        }
    }

    /// Range of the edge coordinate for the inflow datum of `d`.
    pub fn edge_range(&self, d: Direction) -> (T, T) {
        match d {
            Direction::East | Direction::West => (self.domain.a2, self.domain.b2),
            Direction::North | Direction::South => (self.domain.a1, self.domain.b1),
        }
    }

    /// Evaluates a datum. For initial data `point = (x, y)`; for inflow data
    /// `point = (t, s)` with `s` the edge coordinate.
    pub fn evaluate(&self, which: DataSelector, point: (T, T)) -> Result<T> {
        let (u, v) = point;
        let dom = &self.domain;
        let eps = (dom.width() + dom.height()) * T::lit(1e-12);
        let inside = match which {
            DataSelector::Initial(_) => dom.contains(u, v, eps),
            DataSelector::Inflow(d) => {
                let (lo, hi) = self.edge_range(d);
                let teps = (T::one() + self.t0.abs()) * T::lit(1e-12);
                u >= self.t0 - teps && v >= lo - eps && v <= hi + eps
            }
        };
        let out_of_domain = || Error::Domain {
            what: format!("{which:?}"),
            point: vec![u.as_f64(), v.as_f64()],
        };
        if !inside || !u.is_finite() || !v.is_finite() {
            return Err(out_of_domain());
        }
        self.surface(which).eval(u, v).ok_or_else(out_of_domain)
    }

    /// Checks the four edge identities at `t0`; returns the worst mismatch of
    /// each edge whose gap exceeds `tol`.
    pub fn check_compatibility(&self, tol: T) -> Vec<EdgeViolation<T>> {
        let mut out = Vec::new();
        for d in Direction::ALL {
            let (lo, hi) = self.edge_range(d);
            let (edge, fixed) = match d {
                Direction::East => ("x=a1", self.domain.a1),
                Direction::North => ("y=a2", self.domain.a2),
                Direction::South => ("y=b2", self.domain.b2),
                Direction::West => ("x=b1", self.domain.b1),
            };
            let mut samples: Vec<T> = (0..EDGE_SAMPLES)
                .map(|i| lo + (hi - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(EDGE_SAMPLES - 1))
                .collect();
            if let Some(t) = self.initial[d.index()].as_table() {
                // tabulated restarts agree with the inflow only at their nodes
                samples = match d {
                    Direction::East | Direction::West => (0..t.nv).map(|i| t.v_node(i)).collect(),
                    _ => (0..t.nu).map(|i| t.u_node(i)).collect(),
                };
            }
            let mut worst: Option<(T, T)> = None;
            for s in samples {
                let xy = match d {
                    Direction::East | Direction::West => (fixed, s),
                    _ => (s, fixed),
                };
                let a = self.evaluate(DataSelector::Initial(d), xy);
                let b = self.evaluate(DataSelector::Inflow(d), (self.t0, s));
                let gap = match (a, b) {
                    (Ok(a), Ok(b)) => (a - b).abs(),
                    _ => T::infinity(),
                };
                if worst.map_or(true, |(_, g)| gap > g || gap.is_nan()) {
                    worst = Some((s, gap));
                }
            }
            if let Some((at, gap)) = worst {
                if !(gap <= tol) {
                    out.push(EdgeViolation {
                        direction: d,
                        edge,
                        at,
                        gap,
                    });
                }
            }
        }
        out
    }

    /// Smallest value found on a sampling lattice of every datum; used to
    /// reject negative data.
    pub fn min_sampled(&self, t_end: T, n: usize) -> T {
        let mut m = T::infinity();
        let dom = self.domain;
        let step = |lo: T, hi: T, i: usize| lo + (hi - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1);
        for d in Direction::ALL {
            let (lo, hi) = self.edge_range(d);
            for i in 0..n {
                for j in 0..n {
                    if let Ok(v) = self.evaluate(DataSelector::Initial(d), (step(dom.a1, dom.b1, i), step(dom.a2, dom.b2, j))) {
                        m = m.min(v);
                    }
                    if let Ok(v) = self.evaluate(DataSelector::Inflow(d), (step(self.t0, t_end, i), step(lo, hi, j))) {
                        m = m.min(v);
                    }
                }
            }
        }
        m
    }
}
