//! Model parameters, the rectangle, time slabs and their uniform lattices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One of the four planar velocities `(+c,0), (0,+c), (0,-c), (-c,0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// `N1`, moving towards `+x`, fed through the face `x = a1`.
    East,
    /// `N2`, moving towards `+y`, fed through the face `y = a2`.
    North,
    /// `N3`, moving towards `-y`, fed through the face `y = b2`.
    South,
    /// `N4`, moving towards `-x`, fed through the face `x = b1`.
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::East,
        Direction::North,
        Direction::South,
        Direction::West,
    ];

    /// Zero-based component index (`N1` is 0).
    pub fn index(self) -> usize {
        match self {
            Direction::East => 0,
            Direction::North => 1,
            Direction::South => 2,
            Direction::West => 3,
        }
    }

    /// Direction for the one-based component number used in the literature.
    pub fn from_component(i: usize) -> Option<Direction> {
        match i {
            1 => Some(Direction::East),
            2 => Some(Direction::North),
            3 => Some(Direction::South),
            4 => Some(Direction::West),
            _ => None,
        }
    }

    /// Sign of the collision term in this component's equation.
    pub fn omega<T: Scalar>(self) -> T {
        match self {
            Direction::East | Direction::West => T::one(),
            Direction::North | Direction::South => -T::one(),
        }
    }

    /// Velocity in units of `c`.
    pub fn velocity<T: Scalar>(self) -> (T, T) {
        let (o, z) = (T::one(), T::zero());
        match self {
            Direction::East => (o, z),
            Direction::North => (z, o),
            Direction::South => (z, -o),
            Direction::West => (-o, z),
        }
    }
}

/// Particle speed `c`, cross-section `S` and relaxation constant `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub c: T,
    #[serde(rename = "S")]
    pub s: T,
    pub sigma: T,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(c: T, s: T, sigma: T) -> Result<Self> {
        if !(c > T::zero()) || !c.is_finite() {
            return Err(Error::Config(format!("particle speed c must be > 0, got {c}")));
        }
        if !(s >= T::zero()) || !s.is_finite() {
            return Err(Error::Config(format!(
                "cross-section S must be >= 0, got {s}"
            )));
        }
        if !(sigma >= T::zero()) || !sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self { c, s, sigma })
    }

    /// Parameters with the default relaxation `sigma = 1.05 * 2cS`.
    pub fn with_default_sigma(c: T, s: T) -> Result<Self> {
        Self::new(c, s, Self::default_sigma(c, s))
    }

    pub fn default_sigma(c: T, s: T) -> T {
        T::lit(2.0 * 1.05) * c * s
    }

    /// `2cS`, the collision prefactor and the relaxation threshold.
    pub fn two_cs(&self) -> T {
        T::lit(2.0) * self.c * self.s
    }

    /// The relaxed operator is non-negative only for `sigma > 2cS`.
    pub fn require_relaxation(&self) -> Result<()> {
        if self.sigma > self.two_cs() {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "relaxed operator needs sigma > 2cS = {}, got sigma = {}",
                self.two_cs(),
                self.sigma
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectDomain<T> {
    pub a1: T,
    pub b1: T,
    pub a2: T,
    pub b2: T,
}

impl<T: Scalar> RectDomain<T> {
    pub fn new(a1: T, b1: T, a2: T, b2: T) -> Result<Self> {
        if !(a1 < b1) || !(a2 < b2) {
            return Err(Error::Config(format!(
                "rectangle needs a1 < b1 and a2 < b2, got [{a1}, {b1}] x [{a2}, {b2}]"
            )));
        }
        Ok(Self { a1, b1, a2, b2 })
    }

    pub fn unit() -> Self {
        Self {
            a1: T::zero(),
            b1: T::one(),
            a2: T::zero(),
            b2: T::one(),
        }
    }

    pub fn width(&self) -> T {
        self.b1 - self.a1
    }

    pub fn height(&self) -> T {
        self.b2 - self.a2
    }

    pub fn contains(&self, x: T, y: T, eps: T) -> bool {
        x >= self.a1 - eps && x <= self.b1 + eps && y >= self.a2 - eps && y <= self.b2 + eps
    }
}

/// The time interval `[tau, tau']` of one slab.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSlab<T> {
    pub tau: T,
    pub tau_prime: T,
}

impl<T: Scalar> TimeSlab<T> {
    pub fn new(tau: T, tau_prime: T) -> Result<Self> {
        if !(tau < tau_prime) || !tau.is_finite() || !tau_prime.is_finite() {
            return Err(Error::Config(format!(
                "time slab needs tau < tau', got [{tau}, {tau_prime}]"
            )));
        }
        Ok(Self { tau, tau_prime })
    }

    pub fn len(&self) -> T {
        self.tau_prime - self.tau
    }

    /// The slab estimates behind the constants assume `tau' - tau <= 1`.
    pub fn require_unit_bounded(&self) -> Result<()> {
        if self.len() <= T::one() {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "slab length {} exceeds 1",
                self.len()
            )))
        }
    }
}

/// Uniform lattice over `[tau, tau'] x [a1, b1] x [a2, b2]`.
///
/// Values are stored with `x` fastest, then `y`, then `t`, so one time slice
/// is a contiguous `ny * nx` block ordered by rows of constant `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabGrid<T> {
    pub slab: TimeSlab<T>,
    pub domain: RectDomain<T>,
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
    pub ht: T,
    pub hx: T,
    pub hy: T,
}

impl<T: Scalar> SlabGrid<T> {
    pub fn new(slab: TimeSlab<T>, domain: RectDomain<T>, nt: usize, nx: usize, ny: usize) -> Result<Self> {
        if nt < 2 || nx < 2 || ny < 2 {
            return Err(Error::GridSize(format!(
                "need at least 2 points per axis, got nt={nt}, nx={nx}, ny={ny}"
            )));
        }
        let ht = slab.len() / T::from_usize_lossy(nt - 1);
        let hx = domain.width() / T::from_usize_lossy(nx - 1);
        let hy = domain.height() / T::from_usize_lossy(ny - 1);
        Ok(Self {
            slab,
            domain,
            nt,
            nx,
            ny,
            ht,
            hx,
            hy,
        })
    }

    pub fn len(&self) -> usize {
        self.nt * self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice_len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn idx(&self, k: usize, j: usize, l: usize) -> usize {
        (k * self.ny + l) * self.nx + j
    }

    /// Inverse of [`SlabGrid::idx`]: `(k, j, l)`.
    #[inline]
    pub fn coords(&self, n: usize) -> (usize, usize, usize) {
        let j = n % self.nx;
        let rest = n / self.nx;
        (rest / self.ny, j, rest % self.ny)
    }

    #[inline]
    pub fn t(&self, k: usize) -> T {
        if k + 1 == self.nt {
            self.slab.tau_prime
        } else {
            self.slab.tau + T::from_usize_lossy(k) * self.ht
        }
    }

    #[inline]
    pub fn x(&self, j: usize) -> T {
        if j + 1 == self.nx {
            self.domain.b1
        } else {
            self.domain.a1 + T::from_usize_lossy(j) * self.hx
        }
    }

    #[inline]
    pub fn y(&self, l: usize) -> T {
        if l + 1 == self.ny {
            self.domain.b2
        } else {
            self.domain.a2 + T::from_usize_lossy(l) * self.hy
        }
    }

    /// Whether `c * ht <= min(hx, hy)`, the stability condition of the
    /// explicit upwind oracle.
    pub fn cfl_ok(&self, c: T) -> bool {
        c * self.ht <= self.hx.min(self.hy) * (T::one() + T::lit(1e-12))
    }

    /// Same spatial lattice over a different slab with the same number of
    /// time points.
    pub fn with_slab(&self, slab: TimeSlab<T>) -> Result<Self> {
        Self::new(slab, self.domain, self.nt, self.nx, self.ny)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.nt == other.nt && self.nx == other.nx && self.ny == other.ny
    }

    /// Locates `value` in the uniform axis `lo + i * h`, returning the cell
    /// index and the fractional offset in `[0, 1]`.
    #[inline]
    pub(crate) fn locate(lo: T, h: T, n: usize, value: T) -> (usize, T) {
        let u = (value - lo) / h;
        let last = n - 2;
        if !(u > T::zero()) {
            return (0, T::zero());
        }
        let cell = u.floor().to_usize().unwrap_or(usize::MAX).min(last);
        let frac = (u - T::from_usize_lossy(cell)).min(T::one()).max(T::zero());
        (cell, frac)
    }

    #[inline]
    pub(crate) fn locate_t(&self, t: T) -> (usize, T) {
        Self::locate(self.slab.tau, self.ht, self.nt, t)
    }

    #[inline]
    pub(crate) fn locate_x(&self, x: T) -> (usize, T) {
        Self::locate(self.domain.a1, self.hx, self.nx, x)
    }

    #[inline]
    pub(crate) fn locate_y(&self, y: T) -> (usize, T) {
        Self::locate(self.domain.a2, self.hy, self.ny, y)
    }
}
