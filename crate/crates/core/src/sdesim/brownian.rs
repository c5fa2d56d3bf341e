use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Brownian motion sampled on a uniform grid, reproducible from
/// `(master_seed, path_index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianPath {
    pub dt: f64,
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub master_seed: u64,
    pub path_index: u64,
}

/// Standard normal draw for grid step `step`. The ChaCha stream is selected
/// by the path index and the word position by the step, so every increment
/// is addressable on its own.
fn gaussian(rng: &mut ChaCha20Rng, step: u64) -> f64 {
    rng.set_word_pos(u128::from(step) * 4);
    let u1 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    // 1 - u1 lies in (0, 1], keeping the logarithm finite
    (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Number of grid steps covering `[0, horizon]` with spacing `dt`.
pub(crate) fn step_count(dt: f64, horizon: f64) -> Result<usize, SimError> {
    if !(dt > 0.0 && dt.is_finite() && horizon.is_finite() && horizon >= dt) {
        return Err(SimError::Invalid(format!(
            "need 0 < dt ≤ horizon, got dt = {dt}, horizon = {horizon}"
        )));
    }
    let n = (horizon / dt - 1e-9).ceil();
    if n > 1e9 {
        return Err(SimError::Invalid(format!("{n} steps is too many")));
    }
    Ok(n as usize)
}

pub fn brownian_path(
    dt: f64,
    horizon: f64,
    master_seed: u64,
    path_index: u64,
) -> Result<BrownianPath, SimError> {
    let n = step_count(dt, horizon)?;
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    let sqrt_dt = dt.sqrt();
    let mut w = Vec::with_capacity(n + 1);
    w.push(0.0);
    let mut acc = 0.0;
    for step in 0..n as u64 {
        acc += sqrt_dt * gaussian(&mut rng, step);
        w.push(acc);
    }
    Ok(BrownianPath {
        dt,
        times: (0..=n).map(|i| i as f64 * dt).collect(),
        w,
        master_seed,
        path_index,
    })
}

impl BrownianPath {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("path has at least one node")
    }

    /// Linear interpolation of `W` between grid nodes.
    pub fn at(&self, t: f64) -> f64 {
        let (i, frac) = self.locate(t);
        if frac == 0.0 {
            self.w[i]
        } else {
            self.w[i] + frac * (self.w[i + 1] - self.w[i])
        }
    }

    /// Grid cell containing `t` and the fractional position inside it.
    pub(crate) fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.steps();
        if t <= 0.0 || n == 0 {
            return (0, 0.0);
        }
        let u = t / self.dt;
        let i = (u.floor() as usize).min(n - 1);
        let frac = (u - i as f64).clamp(0.0, 1.0);
        if frac >= 1.0 {
            (i + 1, 0.0)
        } else {
            (i, frac)
        }
    }

    /// The same path observed every `factor` steps.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianPath, SimError> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(SimError::Invalid(format!(
                "cannot coarsen {} steps by {factor}",
                self.steps()
            )));
        }
        Ok(BrownianPath {
            dt: self.dt * factor as f64,
            times: self.times.iter().step_by(factor).copied().collect(),
            w: self.w.iter().step_by(factor).copied().collect(),
            master_seed: self.master_seed,
            path_index: self.path_index,
        })
    }
}
