//! Lattice estimates of `||.||_inf`, `||.||_1` and the four-tuple norm `N`.
//!
//! Partial derivatives come from finite differences: central in the
//! interior, one-sided at the faces. Difference stencils that cross one of
//! the four characteristic planes are skipped because the derivatives of
//! an operator image may jump there.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field4;
use crate::grid::{Direction, SlabGrid};
use crate::scalar::Scalar;

/// `max(sup|g|, sup|g_t|, sup|g_x|, sup|g_y|)` with its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norm1<T> {
    pub sup: T,
    pub dt: T,
    pub dx: T,
    pub dy: T,
}

impl<T: Scalar> Norm1<T> {
    pub fn zero() -> Self {
        Self {
            sup: T::zero(),
            dt: T::zero(),
            dx: T::zero(),
            dy: T::zero(),
        }
    }

    pub fn value(&self) -> T {
        self.sup.max_nan(self.dt).max_nan(self.dx).max_nan(self.dy)
    }

    pub fn max_derivative(&self) -> T {
        self.dt.max_nan(self.dx).max_nan(self.dy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport<T> {
    pub sup: [T; 4],
    pub dt: [T; 4],
    pub dx: [T; 4],
    pub dy: [T; 4],
    /// `||N_i||_1` per component.
    pub n1: [T; 4],
    /// `max_i ||N_i||_1`.
    pub n_script: T,
}

/// Signed distances of a node to the four characteristic planes through the
/// inflow faces at `t = tau`.
#[derive(Debug, Clone, Copy)]
pub struct CharPlanes<T> {
    c: T,
    tau: T,
    a1: T,
    b1: T,
    a2: T,
    b2: T,
    eps: T,
}

impl<T: Scalar> CharPlanes<T> {
    pub fn new(grid: &SlabGrid<T>, c: T) -> Self {
        let d = grid.domain;
        let scale = d.width().abs() + d.height().abs() + c * grid.slab.len();
        Self {
            c,
            tau: grid.slab.tau,
            a1: d.a1,
            b1: d.b1,
            a2: d.a2,
            b2: d.b2,
            eps: scale * T::lit(1e-12),
        }
    }

    fn phis(&self, t: T, x: T, y: T) -> [T; 4] {
        let ct = self.c * (t - self.tau);
        [x - ct - self.a1, y - ct - self.a2, y + ct - self.b2, x + ct - self.b1]
    }

    fn sign(&self, v: T) -> i8 {
        if v > self.eps {
            1
        } else if v < -self.eps {
            -1
        } else {
            0
        }
    }

    /// Whether the segment between two points crosses a plane strictly.
    pub fn straddles(&self, p: (T, T, T), q: (T, T, T)) -> bool {
        let a = self.phis(p.0, p.1, p.2);
        let b = self.phis(q.0, q.1, q.2);
        a.iter().zip(b.iter()).any(|(&u, &v)| self.sign(u) * self.sign(v) < 0)
    }
}

/// Lattice shape and spacing for the generic estimator. An axis with a
/// single point carries no derivative.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Axes<T> {
    pub n: [usize; 3],
    pub h: [T; 3],
}

impl<T: Scalar> Axes<T> {
    #[inline]
    fn idx(&self, i: [usize; 3]) -> usize {
        (i[0] * self.n[2] + i[2]) * self.n[1] + i[1]
    }
}

/// Norm of a (possibly partially defined) lattice function.
///
/// `values[n]` is `None` where the function is undefined; `skip(a, b)` vetoes
/// the difference between nodes `a` and `b`. Nodes whose central stencil
/// touches an undefined neighbour fall back to the defined side.
pub(crate) fn lattice_norm1<T: Scalar>(
    axes: Axes<T>,
    value: impl Fn(usize) -> Option<T>,
    skip: impl Fn(usize, usize) -> bool,
) -> Norm1<T> {
    let mut sup = T::zero();
    let mut d = [T::zero(); 3];
    let total = axes.n[0] * axes.n[1] * axes.n[2];
    for n in 0..total {
        let j = n % axes.n[1];
        let rest = n / axes.n[1];
        let pos = [rest / axes.n[2], j, rest % axes.n[2]];
        let Some(v) = value(n) else { continue };
        sup = sup.max_nan(v.abs());
        for a in 0..3 {
            let len = axes.n[a];
            if len < 2 {
                continue;
            }
            let neighbour = |offset: isize| -> Option<(usize, T)> {
                let p = pos[a] as isize + offset;
                if p < 0 || p >= len as isize {
                    return None;
                }
                let mut q = pos;
                q[a] = p as usize;
                let m = axes.idx(q);
                value(m).map(|val| (m, val))
            };
            let lo = neighbour(-1);
            let hi = neighbour(1);
            let h = axes.h[a];
            let est = match (lo, hi) {
                (Some((ml, vl)), Some((mh, vh))) => {
                    if skip(ml, mh) {
                        None
                    } else {
                        Some((vh - vl) / (h + h))
                    }
                }
                (Some((ml, vl)), None) if !skip(ml, n) => Some((v - vl) / h),
                (None, Some((mh, vh))) if !skip(n, mh) => Some((vh - v) / h),
                _ => None,
            };
            if let Some(e) = est {
                d[a] = d[a].max_nan(e.abs());
            }
        }
    }
    Norm1 {
        sup,
        dt: d[0],
        dx: d[1],
        dy: d[2],
    }
}

/// `||.||_1` of one component lattice, skipping stencils across the
/// characteristic planes.
pub fn component_norm1<T: Scalar>(field: &Field4<T>, d: Direction, c: T) -> Norm1<T> {
    let g = field.grid();
    let planes = CharPlanes::new(g, c);
    let axes = Axes {
        n: [g.nt, g.nx, g.ny],
        h: [g.ht, g.hx, g.hy],
    };
    let vals = field.component(d);
    let point = |n: usize| {
        let (k, j, l) = g.coords(n);
        (g.t(k), g.x(j), g.y(l))
    };
    lattice_norm1(axes, |n| Some(vals[n]), |a, b| planes.straddles(point(a), point(b)))
}

/// Full norm report of a field. `c` fixes the characteristic planes.
pub fn norm_report<T: Scalar>(field: &Field4<T>, c: T) -> Result<NormReport<T>> {
    let g = field.grid();
    if g.nt < 3 || g.nx < 3 || g.ny < 3 {
        return Err(Error::GridSize(format!(
            "norm report needs >= 3 points per axis, got {}x{}x{}",
            g.nt, g.nx, g.ny
        )));
    }
    let parts = Direction::ALL.map(|d| component_norm1(field, d, c));
    let n1 = parts.map(|p| p.value());
    Ok(NormReport {
        sup: parts.map(|p| p.sup),
        dt: parts.map(|p| p.dt),
        dx: parts.map(|p| p.dx),
        dy: parts.map(|p| p.dy),
        n1,
        n_script: n1.iter().fold(T::zero(), |a, &b| a.max_nan(b)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{RectDomain, TimeSlab};

    fn grid(n: usize) -> SlabGrid<f64> {
        SlabGrid::new(TimeSlab::new(0.0, 0.5).unwrap(), RectDomain::unit(), n, n, n).unwrap()
    }

    #[test]
    fn constant_field() {
        let r = norm_report(&Field4::constant(grid(9), 0.4), 1.0).unwrap();
        assert_eq!(r.n_script, 0.4);
        assert_eq!(r.dx, [0.0; 4]);
        assert_eq!(r.dt, [0.0; 4]);
    }

    #[test]
    fn zero_field() {
        let r = norm_report(&Field4::zeros(grid(5)), 1.0).unwrap();
        assert_eq!(r.n_script, 0.0);
        assert_eq!(r.n1, [0.0; 4]);
    }

    #[test]
    fn linear_profile_has_unit_slope() {
        // N1 = x, others zero; x-differences are exact for linear data
        let f = Field4::from_fn(grid(9), |d, _, x, _| if d == Direction::East { x } else { 0.0 });
        let r = norm_report(&f, 1.0).unwrap();
        assert!((r.dx[0] - 1.0).abs() < 1e-12);
        assert!((r.sup[0] - 1.0).abs() < 1e-15);
        assert!((r.n_script - 1.0).abs() < 1e-12);
        assert_eq!(r.n1[1], 0.0);
    }

    #[test]
    fn kink_on_characteristic_plane_is_ignored() {
        // |x - t - 0.25| has a kink on the plane x - c(t - tau) = 0.25, which is
        // not one of the four faces; shift the domain so it is: a1 = 0.25.
        let dom = RectDomain::new(0.25, 1.25, 0.0, 1.0).unwrap();
        let g = SlabGrid::new(TimeSlab::new(0.0, 0.5).unwrap(), dom, 9, 9, 9).unwrap();
        // continuous, slope 0 on one side and 3 on the other
        let f = Field4::from_fn(g, |_, t: f64, x: f64, _| 3.0 * (x - t - 0.25).min(0.0));
        let r = norm_report(&f, 1.0).unwrap();
        // without the exclusion a straddling central stencil would report 1.5
        // somewhere between; both sides are linear so only 0 or 3 can appear
        for &v in r.dx.iter().chain(r.dt.iter()) {
            assert!(v.abs() < 1e-9 || (v - 3.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn too_small_grid() {
        let g = SlabGrid::new(TimeSlab::new(0.0, 1.0).unwrap(), RectDomain::unit(), 2, 5, 5).unwrap();
        assert!(matches!(norm_report(&Field4::zeros(g), 1.0), Err(Error::GridSize(_))));
    }

    #[test]
    fn partially_defined_lattice() {
        let axes = Axes { n: [1, 5, 1], h: [1.0, 0.25, 1.0] };
        // defined on the first three nodes, slope 2
        let n = lattice_norm1(axes, |i| if i < 3 { Some(2.0 * 0.25 * i as f64) } else { None }, |_, _| false);
        assert!((n.dx - 2.0).abs() < 1e-15);
        assert!((n.sup - 1.0).abs() < 1e-15);
        assert_eq!(n.dt, 0.0);
    }
}
