//! Per-path random streams.
//!
//! Every path owns a ChaCha8 stream seeded with the run seed and switched to
//! stream number `path`, so results do not depend on how paths are spread
//! over threads. Within a path, draws are consumed step by step in a fixed
//! order: `d` normals, then the Poisson count, then the marks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::model_spec::JumpMeasure;

/// Noise realized over one step `(t, t + Δt]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInputs {
    /// Brownian increments, variance `Δt` each.
    pub dw: Vec<f64>,
    /// Marks of the jumps in the step, one entry per jump.
    pub jumps: Vec<f64>,
}

impl StepInputs {
    pub fn quiet(factors: usize) -> Self {
        StepInputs { dw: vec![0.0; factors], jumps: Vec::new() }
    }

    /// Jumps grouped as `(mark, count)`, sorted by mark.
    pub fn jump_counts(&self) -> Vec<(f64, usize)> {
        let mut v = self.jumps.clone();
        v.sort_by(f64::total_cmp);
        let mut out: Vec<(f64, usize)> = Vec::new();
        for x in v {
            match out.last_mut() {
                Some((y, n)) if *y == x => *n += 1,
                _ => out.push((x, 1)),
            }
        }
        out
    }
}

/// Source of step inputs for one path.
pub trait Noise: Send {
    fn draw(&mut self, step: usize, out: &mut StepInputs);
}

/// The stream for `(seed, path)`.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

pub struct StreamNoise {
    rng: ChaCha8Rng,
    sqrt_dt: f64,
    factors: usize,
    poisson: Option<Poisson<f64>>,
    jumps: JumpMeasure,
}

impl StreamNoise {
    pub fn new(seed: u64, path: usize, factors: usize, dt: f64, jumps: &JumpMeasure) -> Self {
        let mean = jumps.intensity() * dt;
        StreamNoise {
            rng: path_rng(seed, path),
            sqrt_dt: dt.sqrt(),
            factors,
            poisson: (mean > 0.0).then(|| Poisson::new(mean).expect("positive Poisson mean")),
            jumps: jumps.clone(),
        }
    }
}

impl Noise for StreamNoise {
    fn draw(&mut self, _step: usize, out: &mut StepInputs) {
        out.dw.clear();
        for _ in 0..self.factors {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            out.dw.push(z * self.sqrt_dt);
        }
        out.jumps.clear();
        if let Some(p) = &self.poisson {
            let n = p.sample(&mut self.rng) as usize;
            for _ in 0..n {
                out.jumps.push(self.jumps.sample_mark(&mut self.rng));
            }
        }
    }
}

/// Replays prescribed Brownian increments (no jumps).
pub struct ReplayNoise {
    pub dw: Vec<Vec<f64>>,
}

impl Noise for ReplayNoise {
    fn draw(&mut self, step: usize, out: &mut StepInputs) {
        out.dw.clear();
        out.dw.extend_from_slice(&self.dw[step]);
        out.jumps.clear();
    }
}

/// Brownian increments of one path on `n` steps of size `dt`, drawn from the
/// path stream.
pub fn brownian_increments(seed: u64, path: usize, n: usize, dt: f64, factors: usize) -> Vec<Vec<f64>> {
    let mut rng = path_rng(seed, path);
    let s = dt.sqrt();
    (0..n)
        .map(|_| {
            (0..factors)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * s
                })
                .collect()
        })
        .collect()
}

/// Sums consecutive blocks of `k` increments.
pub fn coarsen(dw: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    dw.chunks(k)
        .map(|c| {
            let mut s = vec![0.0; c[0].len()];
            for row in c {
                for (a, b) in s.iter_mut().zip(row) {
                    *a += b;
                }
            }
            s
        })
        .collect()
}
