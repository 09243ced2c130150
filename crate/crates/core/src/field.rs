//! The four densities `N1..N4` sampled on a slab lattice.

use crate::error::{Error, Result};
use crate::grid::{Direction, SlabGrid};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Field4<T> {
    grid: SlabGrid<T>,
    values: [Vec<T>; 4],
    physical: bool,
}

impl<T: Scalar> Field4<T> {
    pub fn zeros(grid: SlabGrid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: SlabGrid<T>, k: T) -> Self {
        let v = vec![k; grid.len()];
        Self {
            grid,
            values: [v.clone(), v.clone(), v.clone(), v],
            physical: false,
        }
    }

    /// Builds a field from `f(direction, t, x, y)` evaluated at every node.
    pub fn from_fn(grid: SlabGrid<T>, f: impl Fn(Direction, T, T, T) -> T) -> Self {
        let values = Direction::ALL.map(|d| {
            (0..grid.len())
                .map(|n| {
                    let (k, j, l) = grid.coords(n);
                    f(d, grid.t(k), grid.x(j), grid.y(l))
                })
                .collect::<Vec<_>>()
        });
        Self {
            grid,
            values,
            physical: false,
        }
    }

    pub fn from_components(grid: SlabGrid<T>, values: [Vec<T>; 4]) -> Result<Self> {
        if values.iter().any(|v| v.len() != grid.len()) {
            return Err(Error::Shape(format!(
                "component lattices must have {} values",
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            physical: false,
        })
    }

    pub fn grid(&self) -> &SlabGrid<T> {
        &self.grid
    }

    pub fn component(&self, d: Direction) -> &[T] {
        &self.values[d.index()]
    }

    pub fn component_mut(&mut self, d: Direction) -> &mut [T] {
        self.physical = false;
        &mut self.values[d.index()]
    }

    pub fn components(&self) -> &[Vec<T>; 4] {
        &self.values
    }

    pub fn into_components(self) -> [Vec<T>; 4] {
        self.values
    }

    #[inline]
    pub fn at(&self, d: Direction, k: usize, j: usize, l: usize) -> T {
        self.values[d.index()][self.grid.idx(k, j, l)]
    }

    /// All four densities at lattice node `n`.
    #[inline]
    pub fn node(&self, n: usize) -> [T; 4] {
        [
            self.values[0][n],
            self.values[1][n],
            self.values[2][n],
            self.values[3][n],
        ]
    }

    pub fn is_physical(&self) -> bool {
        self.physical
    }

    /// Flags the field physical when every value is `>= -tol`. Returns the
    /// most negative value and its location otherwise.
    pub fn certify_non_negative(&mut self, tol: T) -> Result<()> {
        if let Some((d, n, v)) = self.most_negative() {
            if v < -tol {
                let (k, j, l) = self.grid.coords(n);
                return Err(Error::Positivity {
                    value: v.as_f64(),
                    tol: tol.as_f64(),
                    location: format!("N{} at (k={k}, j={j}, l={l})", d.index() + 1),
                });
            }
        }
        self.physical = true;
        Ok(())
    }

    fn most_negative(&self) -> Option<(Direction, usize, T)> {
        let mut worst: Option<(Direction, usize, T)> = None;
        for d in Direction::ALL {
            for (n, &v) in self.values[d.index()].iter().enumerate() {
                if worst.map_or(true, |(_, _, w)| v < w) {
                    worst = Some((d, n, v));
                }
            }
        }
        worst
    }

    pub fn min_value(&self) -> T {
        self.values
            .iter()
            .flat_map(|v| v.iter().copied())
            .fold(T::infinity(), |a, b| a.min(b))
    }

    /// `max_i sup |N_i|`, the norm `||.||` on four-tuples.
    pub fn sup_norm(&self) -> T {
        self.values
            .iter()
            .flat_map(|v| v.iter().copied())
            .fold(T::zero(), |a, b| a.max_nan(b.abs()))
    }

    /// `||self - other||` over the lattice.
    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        if !self.grid.same_shape(&other.grid) {
            return Err(Error::Shape("fields live on different lattices".into()));
        }
        let mut m = T::zero();
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            for (&u, &v) in a.iter().zip(b.iter()) {
                m = m.max_nan((u - v).abs());
            }
        }
        Ok(m)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn scaled(&self, alpha: T) -> Self {
        let values = self.values.clone().map(|v| v.into_iter().map(|x| x * alpha).collect());
        Self {
            grid: self.grid,
            values,
            physical: false,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let values = self.values.clone().map(|v| v.into_iter().map(&f).collect());
        Self {
            grid: self.grid,
            values,
            physical: false,
        }
    }

    /// Densities at an arbitrary point of the slab: linear in time,
    /// bilinear in space.
    #[inline]
    pub fn sample(&self, t: T, x: T, y: T) -> [T; 4] {
        let g = &self.grid;
        let (k, ft) = g.locate_t(t);
        let (j, fx) = g.locate_x(x);
        let (l, fy) = g.locate_y(y);
        let one = T::one();
        let w = [
            (one - fx) * (one - fy),
            fx * (one - fy),
            (one - fx) * fy,
            fx * fy,
        ];
        let mut out = [T::zero(); 4];
        for (kk, wt) in [(k, one - ft), (k + 1, ft)] {
            if wt == T::zero() {
                continue;
            }
            let n00 = g.idx(kk, j, l);
            let n10 = n00 + 1;
            let n01 = n00 + g.nx;
            let n11 = n01 + 1;
            for (c, vals) in self.values.iter().enumerate() {
                let s = w[0] * vals[n00] + w[1] * vals[n10] + w[2] * vals[n01] + w[3] * vals[n11];
                out[c] = out[c] + wt * s;
            }
        }
        out
    }

    /// Copies time slice `k` as four `ny x nx` row-major lattices.
    pub fn slice(&self, k: usize) -> [Vec<T>; 4] {
        let start = self.grid.idx(k, 0, 0);
        let end = start + self.grid.slice_len();
        [0, 1, 2, 3].map(|c| self.values[c][start..end].to_vec())
    }

    /// Overwrites time slice `k`.
    pub fn set_slice(&mut self, k: usize, slice: &[Vec<T>; 4]) -> Result<()> {
        let len = self.grid.slice_len();
        if slice.iter().any(|s| s.len() != len) {
            return Err(Error::Shape(format!("slice must hold {len} values")));
        }
        let start = self.grid.idx(k, 0, 0);
        for c in 0..4 {
            self.values[c][start..start + len].copy_from_slice(&slice[c]);
        }
        self.physical = false;
        Ok(())
    }
}
