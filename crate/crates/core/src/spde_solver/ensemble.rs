use std::io::{self, Write};

use serde::Serialize;

use crate::curve_space::CurveFamily;
use crate::grid::Grid;

/// State of one path at a recorded time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub spots: Vec<f64>,
    /// `η^i_t(0)` per index.
    pub short_ends: Vec<f64>,
    pub numeraire: f64,
    pub deflator: f64,
    /// `B^i(t, T_k)` as `bonds[i][k]`; NaN when `T_k < t`.
    pub bonds: Vec<Vec<f64>>,
    pub family: Option<CurveFamily>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEnsemble {
    pub grid: Grid,
    pub m: usize,
    pub maturities: Vec<f64>,
    pub record_steps: Vec<usize>,
    pub paths: Vec<PathRecord>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.record_steps.iter().map(|k| self.grid.time(*k)).collect()
    }

    /// Position of time `t` among the recorded times.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let k = self.grid.index_of(t)?;
        self.record_steps.iter().position(|s| *s == k)
    }

    pub fn maturity_index(&self, maturity: f64) -> Option<usize> {
        self.maturities.iter().position(|m| (m - maturity).abs() <= 1e-9 * maturity.abs().max(1.0))
    }

    /// Long-format curve dump: `path,t,index,xi,value`, every `stride`-th node.
    pub fn write_curves_csv<W: Write>(&self, mut w: W, stride: usize) -> io::Result<()> {
        writeln!(w, "path,t,index,xi,value")?;
        let stride = stride.max(1);
        let dx = self.grid.step();
        for (p, rec) in self.paths.iter().enumerate() {
            for s in &rec.snapshots {
                let Some(f) = &s.family else { continue };
                for (i, c) in f.curves().iter().enumerate() {
                    let v = c.node_values();
                    for k in (0..v.len()).step_by(stride) {
                        writeln!(w, "{p},{},{i},{},{}", s.t, dx * k as f64, v[k])?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Recorded steps: every `every` steps, always including 0 and the last.
pub fn record_steps(n_t: usize, every: usize) -> Vec<usize> {
    let mut v: Vec<usize> = if every == 0 { vec![0] } else { (0..=n_t).step_by(every).collect() };
    if v.last() != Some(&n_t) {
        v.push(n_t);
    }
    v
}
