//! Reproducible Brownian increments.
//!
//! Every standard normal is addressed by `(seed, path_index, step,
//! component)`: the ChaCha8 key comes from `seed`, the stream id is
//! `path_index`, and the variate for `counter = step * (d + k) + component`
//! is built by Box–Muller from the two 64-bit words at word position
//! `4 * counter`. Draws therefore never depend on which thread produced
//! them or in which order paths were simulated.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::Dimensions;

/// Gaussian increments of `W` (d components) and `W'` (k components),
/// one row per grid interval.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub grid: TimeGrid,
    /// steps × d.
    pub dw: DMatrix<f64>,
    /// steps × k.
    pub dwp: DMatrix<f64>,
}

fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

fn unit_closed_open(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn box_muller(a: u64, b: u64) -> f64 {
    let radius = (-2.0 * unit_open(a).ln()).sqrt();
    radius * (std::f64::consts::TAU * unit_closed_open(b)).cos()
}

fn stream(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// The standard normal at `counter` of stream `(seed, path_index)`.
pub fn standard_normal_at(seed: u64, path_index: u64, counter: u64) -> f64 {
    let mut rng = stream(seed, path_index);
    rng.set_word_pos(4 * counter as u128);
    let a = rng.next_u64();
    let b = rng.next_u64();
    box_muller(a, b)
}

/// Increments for path `path_index`, scaled to variance `h = T/steps`.
pub fn draw_noise(seed: u64, path_index: u64, grid: &TimeGrid, dims: &Dimensions) -> NoiseDraw {
    let steps = grid.steps();
    let (d, k) = (dims.d, dims.k);
    let scale = grid.step_size().sqrt();
    let mut rng = stream(seed, path_index);
    let mut dw = DMatrix::zeros(steps, d);
    let mut dwp = DMatrix::zeros(steps, k);
    // sequential reads visit counters 0, 1, 2, ... in exactly the layout
    // described in the module docs
    for i in 0..steps {
        for j in 0..d + k {
            let a = rng.next_u64();
            let b = rng.next_u64();
            let z = scale * box_muller(a, b);
            if j < d {
                dw[(i, j)] = z;
            } else {
                dwp[(i, j - d)] = z;
            }
        }
    }
    NoiseDraw {
        grid: *grid,
        dw,
        dwp,
    }
}

impl NoiseDraw {
    pub fn zeros(grid: &TimeGrid, dims: &Dimensions) -> Self {
        Self {
            grid: *grid,
            dw: DMatrix::zeros(grid.steps(), dims.d),
            dwp: DMatrix::zeros(grid.steps(), dims.k),
        }
    }

    /// Increments of `W` over interval `i`.
    pub fn dw_at(&self, i: usize) -> DVector<f64> {
        self.dw.row(i).transpose()
    }

    /// Increments of `W'` over interval `i`.
    pub fn dwp_at(&self, i: usize) -> DVector<f64> {
        self.dwp.row(i).transpose()
    }

    /// The same Brownian paths seen on a grid with `factor` times fewer
    /// intervals: consecutive increments are summed.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let steps = self.grid.steps();
        if factor == 0 || !steps.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen {steps} steps by a factor of {factor}"
            )));
        }
        let coarse = steps / factor;
        let sum_rows = |m: &DMatrix<f64>| {
            DMatrix::from_fn(coarse, m.ncols(), |i, j| {
                (0..factor).map(|s| m[(i * factor + s, j)]).sum()
            })
        };
        Ok(Self {
            grid: TimeGrid::new(self.grid.horizon(), coarse)?,
            dw: sum_rows(&self.dw),
            dwp: sum_rows(&self.dwp),
        })
    }
}
