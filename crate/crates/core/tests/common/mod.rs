#![allow(dead_code)]

use broadwell::{Data, Domain, Grid, Params, ProblemData, SlabGrid, Surface, TimeSlab};
use std::f64::consts::PI;

pub fn params() -> Params {
    Params::with_default_sigma(1.0, 0.5).unwrap()
}

fn bump(amplitude: f64) -> Surface<f64> {
    Surface::SinSquared {
        base: 5e-4,
        amplitude,
        u0: 0.0,
        lu: 1.0,
        v0: 0.0,
        lv: 1.0,
        compact: true,
    }
}

fn wave(amplitude: f64) -> Surface<f64> {
    Surface::Trig {
        base: 5e-4,
        amplitude,
        ku: PI,
        kv: PI,
        phase_u: 0.0,
        phase_v: 0.0,
    }
}

/// Same data as the shipped `small-bump.json`.
pub fn small_bump() -> Data {
    ProblemData {
        domain: Domain::unit(),
        t0: 0.0,
        initial: [bump(3e-4), bump(2e-4), bump(2.5e-4), bump(1.5e-4)],
        inflow: [wave(2e-4), wave(1e-4), wave(1.5e-4), wave(2.5e-4)],
    }
}

/// A strongly nonlinear case: background 0.25 with a narrow Gaussian on top.
pub fn big_gaussian() -> Data {
    let g = |amplitude| Surface::Gaussian {
        base: 0.25,
        amplitude,
        u0: 0.5,
        v0: 0.5,
        width: 0.1,
    };
    ProblemData {
        domain: Domain::unit(),
        t0: 0.0,
        initial: [g(0.05), g(0.03), g(0.04), g(0.02)],
        inflow: [
            Surface::constant(0.25),
            Surface::constant(0.25),
            Surface::constant(0.25),
            Surface::constant(0.25),
        ],
    }
}

pub fn grid(tau_prime: f64, n: usize) -> Grid {
    SlabGrid::new(TimeSlab::new(0.0, tau_prime).unwrap(), Domain::unit(), n, n, n).unwrap()
}
