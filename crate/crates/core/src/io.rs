//! CSV exchange of time slices and tabulated data.
//!
//! A slice file has the header `x,y,N1,N2,N3,N4` and one row per spatial
//! node, `y` outer and `x` inner, numbers written with 17 significant
//! digits. A slab directory holds `slice_<k>.csv` for every time level and
//! `grid.json` describing the lattice.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Table2;
use crate::error::{Error, Result};
use crate::field::Field4;
use crate::grid::{RectDomain, SlabGrid, TimeSlab};
use crate::scalar::Scalar;

const SLICE_HEADER: [&str; 6] = ["x", "y", "N1", "N2", "N3", "N4"];

fn parse_err(file: &str, msg: impl ToString) -> Error {
    Error::Parse {
        file: file.to_string(),
        msg: msg.to_string(),
    }
}

fn number(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes time level `k` of `field`.
pub fn write_slice<T: Scalar, W: Write>(out: W, field: &Field4<T>, k: usize) -> Result<()> {
    let g = field.grid();
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| parse_err("slice output", e);
    w.write_record(SLICE_HEADER).map_err(csv_err)?;
    for l in 0..g.ny {
        for j in 0..g.nx {
            let n = g.idx(k, j, l);
            let v = field.node(n);
            let mut row = vec![number(g.x(j).as_f64()), number(g.y(l).as_f64())];
            row.extend(v.iter().map(|x| number(x.as_f64())));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads one slice written by [`write_slice`] for a lattice of `nx * ny`
/// nodes; the node coordinates must match `grid` to `1e-12` relative.
pub fn read_slice<T: Scalar, R: Read>(input: R, grid: &SlabGrid<T>, name: &str) -> Result<[Vec<T>; 4]> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(|e| parse_err(name, e))?.clone();
    if header.iter().collect::<Vec<_>>() != SLICE_HEADER {
        return Err(parse_err(name, format!("expected header {SLICE_HEADER:?}")));
    }
    let len = grid.slice_len();
    let mut out: [Vec<T>; 4] = [Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len)];
    let scale = grid.domain.width().abs().as_f64() + grid.domain.height().abs().as_f64();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(name, e))?;
        if n >= len {
            return Err(Error::Shape(format!("{name}: more than {len} rows")));
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| parse_err(name, format!("row {}: {e}", n + 2))))
            .collect::<Result<_>>()?;
        if vals.len() != 6 {
            return Err(parse_err(name, format!("row {} has {} columns", n + 2, vals.len())));
        }
        let (j, l) = (n % grid.nx, n / grid.nx);
        let off = (vals[0] - grid.x(j).as_f64()).abs().max((vals[1] - grid.y(l).as_f64()).abs());
        if off > 1e-12 * scale {
            return Err(Error::Shape(format!("{name}: row {} is not at node ({j}, {l})", n + 2)));
        }
        for c in 0..4 {
            out[c].push(T::lit(vals[2 + c]));
        }
    }
    if out[0].len() != len {
        return Err(Error::Shape(format!("{name}: expected {len} rows, found {}", out[0].len())));
    }
    Ok(out)
}

/// Lattice description stored next to the slices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub tau: f64,
    pub tau_prime: f64,
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
}

impl GridFile {
    pub fn of<T: Scalar>(g: &SlabGrid<T>) -> Self {
        Self {
            tau: g.slab.tau.as_f64(),
            tau_prime: g.slab.tau_prime.as_f64(),
            a1: g.domain.a1.as_f64(),
            b1: g.domain.b1.as_f64(),
            a2: g.domain.a2.as_f64(),
            b2: g.domain.b2.as_f64(),
            nt: g.nt,
            nx: g.nx,
            ny: g.ny,
        }
    }

    pub fn grid<T: Scalar>(&self) -> Result<SlabGrid<T>> {
        let slab = TimeSlab::new(T::lit(self.tau), T::lit(self.tau_prime))?;
        let dom = RectDomain::new(T::lit(self.a1), T::lit(self.b1), T::lit(self.a2), T::lit(self.b2))?;
        SlabGrid::new(slab, dom, self.nt, self.nx, self.ny)
    }
}

pub fn slab_dir(out: &Path, n: usize) -> PathBuf {
    out.join(format!("slab_{n}"))
}

/// Writes every time level of `field` plus `grid.json` into `dir`.
pub fn write_slab<T: Scalar>(dir: &Path, field: &Field4<T>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let g = field.grid();
    let meta = serde_json::to_string_pretty(&GridFile::of(g))?;
    fs::write(dir.join("grid.json"), meta + "\n")?;
    for k in 0..g.nt {
        let f = fs::File::create(dir.join(format!("slice_{k}.csv")))?;
        write_slice(std::io::BufWriter::new(f), field, k)?;
    }
    Ok(())
}

/// Reads a slab directory written by [`write_slab`].
pub fn read_slab<T: Scalar>(dir: &Path) -> Result<Field4<T>> {
    let meta_path = dir.join("grid.json");
    let meta: GridFile = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
    let grid = meta.grid::<T>()?;
    let mut field = Field4::zeros(grid);
    for k in 0..grid.nt {
        let path = dir.join(format!("slice_{k}.csv"));
        let f = fs::File::open(&path)?;
        let slice = read_slice(f, &grid, &path.display().to_string())?;
        field.set_slice(k, &slice)?;
    }
    Ok(field)
}

/// Reads a table with header `u,v,value` whose rows cover a regular
/// `nu x nv` lattice in any order.
pub fn read_table<T: Scalar, R: Read>(input: R, name: &str) -> Result<Table2<T>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(|e| parse_err(name, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["u", "v", "value"] {
        return Err(parse_err(name, "expected header u,v,value"));
    }
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(name, e))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| parse_err(name, format!("row {}: {e}", i + 2))))
            .collect::<Result<_>>()?;
        if vals.len() != 3 {
            return Err(parse_err(name, format!("row {} has {} columns", i + 2, vals.len())));
        }
        rows.push((vals[0], vals[1], vals[2]));
    }
    let axis = |pick: fn(&(f64, f64, f64)) -> f64| {
        let mut v: Vec<f64> = rows.iter().map(pick).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let us = axis(|r| r.0);
    let vs = axis(|r| r.1);
    if us.len() < 2 || vs.len() < 2 || us.len() * vs.len() != rows.len() {
        return Err(parse_err(name, "rows do not form a full lattice with >= 2 nodes per axis"));
    }
    let (nu, nv) = (us.len(), vs.len());
    let (u0, u1, v0, v1) = (us[0], us[nu - 1], vs[0], vs[nv - 1]);
    let hu = (u1 - u0) / (nu - 1) as f64;
    let hv = (v1 - v0) / (nv - 1) as f64;
    let index = |x: f64, lo: f64, h: f64, n: usize| -> Option<usize> {
        let i = ((x - lo) / h).round();
        let ok = i >= 0.0 && (i as usize) < n && (lo + i * h - x).abs() <= 1e-9 * h;
        ok.then_some(i as usize)
    };
    let mut values = vec![f64::NAN; nu * nv];
    for &(u, v, val) in &rows {
        match (index(u, u0, hu, nu), index(v, v0, hv, nv)) {
            (Some(i), Some(j)) => values[j * nu + i] = val,
            _ => return Err(parse_err(name, format!("node ({u}, {v}) is off the uniform lattice"))),
        }
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(parse_err(name, "duplicate or missing lattice nodes"));
    }
    Table2::new(T::lit(u0), T::lit(u1), T::lit(v0), T::lit(v1), nu, nv, values.into_iter().map(T::lit).collect())
}
