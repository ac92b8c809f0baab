//! Grid level-set solution of the reachability variational inequality.
//!
//! The solver marches backward from `V(x, T) = l(x)`:
//!
//! ```text
//! V(x, t − dt) = min( V(x, t) + dt · Ĥ(x, p⁻, p⁺),  l(x) )
//! Ĥ            = H(x, (p⁺ + p⁻) / 2) + Σ_d α_d (p⁺_d − p⁻_d) / 2
//! H(x, p)      = max_u ⟨p, f(x, u)⟩   (avoid)
//!              = min_u ⟨p, f(x, u)⟩   (reach)
//! ```
//!
//! `p⁻`, `p⁺` are one-sided differences and `α_d` bounds `|∂H/∂p_d|` over the
//! domain, which makes the scheme monotone under `dt · Σ α_d / h_d ≤ 1`.
//! Both modes freeze with `min(·, l)`: the cost is the trajectory minimum of `l`
//! in either case, only the optimizing control flips. Consequently `V ≤ l`
//! holds at every node and time for reach and avoid alike.

mod io;
mod solver;

pub use io::{read_grid_file, write_grid_file, write_slice_csv};
pub use solver::{solve_hjb_vi, solve_hjb_vi_with, SolverOptions};

use crate::dynamics::{wrap_into, Mode, SystemModel};
use crate::error::{Error, Result};

/// Maximum state dimension handled by the grid solver.
pub const MAX_GRID_DIM: usize = 4;

/// Rectangular grid, row-major with the last dimension fastest.
///
/// Non-periodic dimensions place nodes on both bounds; periodic dimensions
/// place `count` nodes on `[lower, upper)` and identify `upper` with `lower`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
    periodic: Vec<bool>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>, periodic: Vec<bool>) -> Result<Self> {
        let n = lower.len();
        if n == 0 || upper.len() != n || counts.len() != n || periodic.len() != n {
            return Err(Error::InvalidParameter(
                "grid bounds, counts and periodic flags must have equal non-zero length".into(),
            ));
        }
        for d in 0..n {
            if counts[d] < 3 {
                return Err(Error::InvalidParameter(format!(
                    "grid needs at least 3 nodes per dimension, dimension {d} has {}",
                    counts[d]
                )));
            }
            if !(lower[d].is_finite() && upper[d].is_finite() && lower[d] < upper[d]) {
                return Err(Error::InvalidParameter(format!(
                    "grid bounds in dimension {d} must satisfy lower < upper"
                )));
            }
        }
        let mut strides = vec![1; n];
        for d in (0..n - 1).rev() {
            strides[d] = strides[d + 1] * counts[d + 1];
        }
        Ok(Self {
            lower,
            upper,
            counts,
            periodic,
            strides,
        })
    }

    /// Grid spanning the system's state box with its periodic flags.
    pub fn for_system(system: &SystemModel, counts: &[usize]) -> Result<Self> {
        if counts.len() != system.state_dim() {
            return Err(Error::InvalidParameter(format!(
                "{} grid counts given for a {}-dimensional system",
                counts.len(),
                system.state_dim()
            )));
        }
        Self::new(
            system.state_lower().to_vec(),
            system.state_upper().to_vec(),
            counts.to_vec(),
            (0..system.state_dim()).map(|d| system.is_periodic(d)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_periodic(&self, d: usize) -> bool {
        self.periodic[d]
    }

    pub fn node_count(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn spacing(&self, d: usize) -> f64 {
        let width = self.upper[d] - self.lower[d];
        if self.periodic[d] {
            width / self.counts[d] as f64
        } else {
            width / (self.counts[d] - 1) as f64
        }
    }

    #[inline]
    pub fn coord(&self, d: usize, i: usize) -> f64 {
        self.lower[d] + i as f64 * self.spacing(d)
    }

    pub fn stride(&self, d: usize) -> usize {
        self.strides[d]
    }

    /// Flat node index to multi-index.
    #[inline]
    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for d in 0..self.dim() {
            out[d] = flat / self.strides[d];
            flat %= self.strides[d];
        }
    }

    /// Coordinates of the node with flat index `flat`.
    pub fn node(&self, flat: usize, out: &mut [f64]) {
        let mut idx = [0usize; MAX_GRID_DIM];
        let mut rem = flat;
        for d in 0..self.dim() {
            idx[d] = rem / self.strides[d];
            rem %= self.strides[d];
            out[d] = self.coord(d, idx[d]);
        }
    }

    /// Largest stable time step `1 / Σ_d α_d / h_d` for the given dissipation.
    pub fn cfl_limit(&self, dissipation: &[f64]) -> f64 {
        let rate: f64 = (0..self.dim()).map(|d| dissipation[d] / self.spacing(d)).sum();
        if rate > 0.0 {
            1.0 / rate
        } else {
            f64::INFINITY
        }
    }

    /// Lower cell index and fractional offset of `x` in dimension `d`.
    fn locate(&self, d: usize, x: f64) -> Result<(usize, f64)> {
        let n = self.counts[d];
        let h = self.spacing(d);
        if self.periodic[d] {
            let w = wrap_into(x, self.lower[d], self.upper[d]);
            let s = (w - self.lower[d]) / h;
            let i0 = (s.floor() as usize).min(n - 1);
            Ok((i0, (s - i0 as f64).clamp(0.0, 1.0)))
        } else {
            let tol = 1e-9 * (self.upper[d] - self.lower[d]);
            if !(x >= self.lower[d] - tol && x <= self.upper[d] + tol) {
                return Err(Error::OutOfDomain {
                    dim: d,
                    coord: "state",
                    value: x,
                    lower: self.lower[d],
                    upper: self.upper[d],
                });
            }
            let s = ((x - self.lower[d]) / h).clamp(0.0, (n - 1) as f64);
            let i0 = (s.floor() as usize).min(n - 2);
            Ok((i0, s - i0 as f64))
        }
    }

    /// Neighbour index `i + off` in dimension `d`, wrapped or clamped.
    #[inline]
    fn shift(&self, d: usize, i: usize, off: isize) -> usize {
        let n = self.counts[d] as isize;
        let j = i as isize + off;
        if self.periodic[d] {
            j.rem_euclid(n) as usize
        } else {
            j.clamp(0, n - 1) as usize
        }
    }
}

/// Value function sampled on a grid at a set of stored times.
#[derive(Clone, Debug, PartialEq)]
pub struct GridValueFunction {
    grid: Grid,
    mode: Mode,
    times: Vec<f64>,
    values: Vec<f64>,
    terminal: bool,
}

impl GridValueFunction {
    /// Assembles a grid function from raw slices (time-major, then grid row-major).
    pub fn from_parts(grid: Grid, mode: Mode, times: Vec<f64>, values: Vec<f64>, terminal: bool) -> Result<Self> {
        if times.is_empty() || times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "time stamps must be non-empty and strictly ascending".into(),
            ));
        }
        if values.len() != times.len() * grid.node_count() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                times.len() * grid.node_count(),
                values.len()
            )));
        }
        Ok(Self {
            grid,
            mode,
            times,
            values,
            terminal,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Whether the last slice is the terminal condition `V(·, T) = l`.
    pub fn has_terminal_condition(&self) -> bool {
        self.terminal
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Node values of stored slice `k`.
    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.node_count();
        &self.values[k * n..(k + 1) * n]
    }

    fn time_weights(&self, t: f64) -> Result<(usize, f64)> {
        let first = self.times[0];
        let last = *self.times.last().unwrap();
        let tol = 1e-9 * (1.0 + last.abs());
        if !(t >= first - tol && t <= last + tol) {
            return Err(Error::OutOfDomain {
                dim: 0,
                coord: "time",
                value: t,
                lower: first,
                upper: last,
            });
        }
        if self.times.len() == 1 {
            return Ok((0, 0.0));
        }
        let t = t.clamp(first, last);
        let k = match self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(k) => return Ok((k, 0.0)),
            Err(k) => k - 1,
        };
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        Ok((k, w))
    }

    fn cell(&self, x: &[f64]) -> Result<([usize; MAX_GRID_DIM], [f64; MAX_GRID_DIM])> {
        if x.len() != self.grid.dim() {
            return Err(Error::InvalidParameter(format!(
                "state has {} coordinates, grid has {}",
                x.len(),
                self.grid.dim()
            )));
        }
        let mut base = [0usize; MAX_GRID_DIM];
        let mut frac = [0.0; MAX_GRID_DIM];
        for d in 0..self.grid.dim() {
            let (i, f) = self.grid.locate(d, x[d])?;
            base[d] = i;
            frac[d] = f;
        }
        Ok((base, frac))
    }

    fn interp_slice(&self, k: usize, base: &[usize], frac: &[f64]) -> f64 {
        let dim = self.grid.dim();
        let slice = self.slice(k);
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut flat = 0;
            for d in 0..dim {
                let up = (corner >> d) & 1 == 1;
                w *= if up { frac[d] } else { 1.0 - frac[d] };
                let i = if up { self.grid.shift(d, base[d], 1) } else { base[d] };
                flat += i * self.grid.stride(d);
            }
            if w != 0.0 {
                acc += w * slice[flat];
            }
        }
        acc
    }

    /// Multilinear interpolation in space, linear in time between stored slices.
    pub fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        let (k, wt) = self.time_weights(t)?;
        let (base, frac) = self.cell(x)?;
        let dim = self.grid.dim();
        let a = self.interp_slice(k, &base[..dim], &frac[..dim]);
        if wt == 0.0 {
            return Ok(a);
        }
        let b = self.interp_slice(k + 1, &base[..dim], &frac[..dim]);
        Ok((1.0 - wt) * a + wt * b)
    }

    /// Central-difference gradient at a node of slice `k` (one-sided on
    /// non-periodic boundaries).
    fn node_gradient(&self, k: usize, idx: &[usize], out: &mut [f64]) {
        let dim = self.grid.dim();
        let slice = self.slice(k);
        let flat: usize = (0..dim).map(|d| idx[d] * self.grid.stride(d)).sum();
        for d in 0..dim {
            let h = self.grid.spacing(d);
            let n = self.grid.counts[d];
            let s = self.grid.stride(d);
            let i = idx[d];
            let (lo, hi, span) = if self.grid.periodic[d] {
                (self.grid.shift(d, i, -1), self.grid.shift(d, i, 1), 2.0)
            } else if i == 0 {
                (0, 1, 1.0)
            } else if i == n - 1 {
                (n - 2, n - 1, 1.0)
            } else {
                (i - 1, i + 1, 2.0)
            };
            let base = flat - i * s;
            out[d] = (slice[base + hi * s] - slice[base + lo * s]) / (span * h);
        }
    }

    fn interp_gradient_slice(&self, k: usize, base: &[usize], frac: &[f64], out: &mut [f64]) {
        let dim = self.grid.dim();
        out.iter_mut().for_each(|g| *g = 0.0);
        let mut idx = [0usize; MAX_GRID_DIM];
        let mut g = [0.0; MAX_GRID_DIM];
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            for d in 0..dim {
                let up = (corner >> d) & 1 == 1;
                w *= if up { frac[d] } else { 1.0 - frac[d] };
                idx[d] = if up { self.grid.shift(d, base[d], 1) } else { base[d] };
            }
            if w == 0.0 {
                continue;
            }
            self.node_gradient(k, &idx[..dim], &mut g[..dim]);
            for d in 0..dim {
                out[d] += w * g[d];
            }
        }
    }

    /// Spatial gradient: node central differences, interpolated like the values.
    pub fn gradient(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let (k, wt) = self.time_weights(t)?;
        let (base, frac) = self.cell(x)?;
        let dim = self.grid.dim();
        self.interp_gradient_slice(k, &base[..dim], &frac[..dim], out);
        if wt != 0.0 {
            let mut other = [0.0; MAX_GRID_DIM];
            self.interp_gradient_slice(k + 1, &base[..dim], &frac[..dim], &mut other[..dim]);
            for d in 0..dim {
                out[d] = (1.0 - wt) * out[d] + wt * other[d];
            }
        }
        Ok(())
    }

    /// True when the nodes of the cell containing `x`, widened by one node on
    /// every side, carry values of both signs at the slice nearest `t`: the
    /// point lies within one grid cell of the zero level set.
    pub fn within_cell_of_zero_level(&self, x: &[f64], t: f64) -> Result<bool> {
        let (k, wt) = self.time_weights(t)?;
        let k = if wt > 0.5 { k + 1 } else { k };
        let (base, _) = self.cell(x)?;
        let dim = self.grid.dim();
        let slice = self.slice(k);
        let (mut any_neg, mut any_pos) = (false, false);
        let span = 4usize.pow(dim as u32);
        for combo in 0..span {
            let mut flat = 0;
            let mut c = combo;
            for d in 0..dim {
                let off = (c % 4) as isize - 1;
                c /= 4;
                flat += self.grid.shift(d, base[d], off) * self.grid.stride(d);
            }
            if slice[flat] <= 0.0 {
                any_neg = true;
            } else {
                any_pos = true;
            }
            if any_neg && any_pos {
                return Ok(true);
            }
        }
        Ok(false)
    }
}
