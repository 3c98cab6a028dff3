//! Seeded Brownian paths on dyadic grids.
//!
//! Increment `j` of a path is a pure function of `(seed, stream_id, j)`: the
//! ChaCha8 keystream for `(seed, stream_id)` is addressed at a word position
//! derived from `j`, so any window (including indices before the grid origin)
//! can be produced without generating predecessors.
//!
//! A path stores prefix sums of its increments. Every increment the integrators
//! consume is the difference of two stored prefix sums, which makes coarsening,
//! shifting and endpoint values exact: the coarse increments are differences of
//! the same stored numbers, and a shift only moves the origin index.

use std::io::{Read, Write};
use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Default cap on the prefix-sum storage of one path.
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 31;

/// Largest supported number of dyadic levels.
pub const MAX_LEVELS: u32 = 40;

/// Offset that maps signed increment indices into the keystream.
const KEY_OFFSET: i64 = 1 << 40;

/// Relative tolerance used when snapping a time onto the grid.
const GRID_SNAP: f64 = 1e-9;

/// Dyadic partition of `[t0, t0 + span]` into `2^levels` steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub t0: f64,
    pub span: f64,
    pub levels: u32,
}

impl GridSpec {
    pub fn new(t0: f64, span: f64, levels: u32) -> Result<Self> {
        if !(span > 0.0 && span.is_finite() && t0.is_finite()) {
            return Err(Error::invalid(format!("grid span {span} must be positive and finite")));
        }
        if levels > MAX_LEVELS {
            return Err(Error::invalid(format!("levels = {levels} exceeds {MAX_LEVELS}")));
        }
        Ok(Self { t0, span, levels })
    }

    /// Smallest dyadic grid with step `h` starting at `t0` that has at least `min_steps` steps.
    pub fn with_step(t0: f64, h: f64, min_steps: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("step {h} must be positive")));
        }
        let levels = min_steps.max(1).next_power_of_two().trailing_zeros();
        Self::new(t0, h * (1u64 << levels) as f64, levels)
    }

    pub fn steps(&self) -> usize {
        1usize << self.levels
    }

    pub fn h_fine(&self) -> f64 {
        self.span / self.steps() as f64
    }

    /// Time of node `j`, computed from the index alone.
    pub fn time(&self, j: i64) -> f64 {
        self.t0 + j as f64 * self.h_fine()
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.span
    }

    /// Index of the node at time `t`; fails unless `t` lies on the (extended) grid.
    pub fn node_of(&self, t: f64) -> Result<i64> {
        let x = (t - self.t0) / self.h_fine();
        let r = x.round();
        if (x - r).abs() > GRID_SNAP * r.abs().max(1.0) {
            return Err(Error::invalid(format!(
                "time {t} is not a node of the grid with origin {} and step {}",
                self.t0,
                self.h_fine()
            )));
        }
        Ok(r as i64)
    }

    /// Number of fine steps in a duration that must be a whole multiple of `h_fine`.
    pub fn steps_in(&self, duration: f64) -> Result<i64> {
        let x = duration / self.h_fine();
        let r = x.round();
        if (x - r).abs() > GRID_SNAP * r.abs().max(1.0) {
            return Err(Error::invalid(format!(
                "duration {duration} is not a multiple of the grid step {}",
                self.h_fine()
            )));
        }
        Ok(r as i64)
    }

    /// Ratio `h / h_fine` as a power of two.
    pub fn factor_for(&self, h: f64) -> Result<usize> {
        let r = self.steps_in(h)?;
        if r <= 0 || (r as u64).count_ones() != 1 {
            return Err(Error::invalid(format!(
                "step {h} is not h_fine * 2^r for h_fine = {}",
                self.h_fine()
            )));
        }
        Ok(r as usize)
    }
}

/// Standard normal quantile.
#[inline]
pub fn standard_normal(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Uniform in the open interval (0, 1) from the top 53 bits.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// A window of a Wiener path sampled on a dyadic grid.
#[derive(Clone, Debug)]
pub struct BrownianPath {
    grid: GridSpec,
    noise_dim: usize,
    seed: u64,
    stream_id: u64,
    /// Prefix sums, row-major `(node, component)`, over all materialized nodes.
    cum: Arc<Vec<f64>>,
    /// Materialized node index of grid node 0.
    origin: usize,
}

/// Generates the path on `grid` with no extra nodes.
pub fn generate(grid: GridSpec, noise_dim: usize, seed: u64, stream_id: u64) -> Result<BrownianPath> {
    generate_window(grid, noise_dim, seed, stream_id, 0, 0, DEFAULT_MEMORY_BUDGET)
}

/// Generates the path on `grid` plus `lead` increments before the origin and
/// `trail` increments past the end, so that shifts within that margin stay on
/// materialized data.
pub fn generate_window(
    grid: GridSpec,
    noise_dim: usize,
    seed: u64,
    stream_id: u64,
    lead: usize,
    trail: usize,
    budget: usize,
) -> Result<BrownianPath> {
    if noise_dim == 0 {
        return Err(Error::invalid("noise_dim must be positive"));
    }
    let increments = grid
        .steps()
        .checked_add(lead)
        .and_then(|n| n.checked_add(trail))
        .ok_or_else(|| Error::invalid("path window overflows"))?;
    let requested = (increments + 1)
        .checked_mul(noise_dim * std::mem::size_of::<f64>())
        .ok_or_else(|| Error::invalid("path window overflows"))?;
    if requested > budget {
        return Err(Error::Resource { requested, budget });
    }
    if lead as i64 >= KEY_OFFSET || (grid.steps() + trail) as i64 >= KEY_OFFSET {
        return Err(Error::invalid("path window exceeds the generator key range"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    let first_key = (KEY_OFFSET - lead as i64) as u128;
    // two 32-bit words per variate
    rng.set_word_pos(first_key * noise_dim as u128 * 2);

    let scale = grid.h_fine().sqrt();
    let mut cum = Vec::with_capacity((increments + 1) * noise_dim);
    cum.extend(std::iter::repeat_n(0.0, noise_dim));
    for i in 0..increments {
        for c in 0..noise_dim {
            let z = standard_normal(open_unit(rng.next_u64()));
            let prev = cum[i * noise_dim + c];
            cum.push(prev + scale * z);
        }
    }
    Ok(BrownianPath {
        grid,
        noise_dim,
        seed,
        stream_id,
        cum: Arc::new(cum),
        origin: lead,
    })
}

impl BrownianPath {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of increments in the visible window.
    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    fn materialized_nodes(&self) -> usize {
        self.cum.len() / self.noise_dim
    }

    /// Materialized increments available before grid node 0.
    pub fn lead(&self) -> usize {
        self.origin
    }

    /// Materialized increments available after the last grid node.
    pub fn trail(&self) -> usize {
        self.materialized_nodes() - 1 - self.origin - self.steps()
    }

    #[inline]
    fn row(&self, idx: usize) -> &[f64] {
        &self.cum[idx * self.noise_dim..(idx + 1) * self.noise_dim]
    }

    fn materialized(&self, node: i64) -> Result<usize> {
        let idx = self.origin as i64 + node;
        if idx < 0 || idx as usize >= self.materialized_nodes() {
            return Err(Error::OutOfRange {
                index: node,
                len: self.steps() + 1,
            });
        }
        Ok(idx as usize)
    }

    /// `W(t0 + j h_fine) - W(t0)`; node `j` may lie in the lead/trail margin.
    pub fn value_at(&self, node: i64) -> Result<Vec<f64>> {
        let idx = self.materialized(node)?;
        let base = self.row(self.origin);
        Ok(self.row(idx).iter().zip(base).map(|(a, b)| a - b).collect())
    }

    pub fn terminal_value(&self) -> Vec<f64> {
        let end = self.row(self.origin + self.steps());
        let base = self.row(self.origin);
        end.iter().zip(base).map(|(a, b)| a - b).collect()
    }

    /// `W(node1) - W(node0)` written into `out`.
    pub fn increment_between(&self, node0: i64, node1: i64, out: &mut [f64]) -> Result<()> {
        let a = self.materialized(node0)?;
        let b = self.materialized(node1)?;
        let (ra, rb) = (self.row(a), self.row(b));
        for ((o, x), y) in out.iter_mut().zip(rb).zip(ra) {
            *o = x - y;
        }
        Ok(())
    }

    /// Increment `coarse_index` of the path coarsened by `factor`.
    pub fn increment_at(&self, coarse_index: usize, factor: usize) -> Result<Vec<f64>> {
        check_factor(factor, self.steps())?;
        if coarse_index >= self.steps() / factor {
            return Err(Error::OutOfRange {
                index: coarse_index as i64,
                len: self.steps() / factor,
            });
        }
        let mut out = vec![0.0; self.noise_dim];
        let j = (coarse_index * factor) as i64;
        self.increment_between(j, j + factor as i64, &mut out)?;
        Ok(out)
    }

    /// The same path on the grid with step `factor * h_fine`.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianPath> {
        check_factor(factor, self.steps())?;
        if factor == 1 {
            return Ok(self.clone());
        }
        let m = self.noise_dim;
        let first = self.origin % factor;
        let nodes = (self.materialized_nodes() - 1 - first) / factor + 1;
        let mut cum = Vec::with_capacity(nodes * m);
        for k in 0..nodes {
            cum.extend_from_slice(self.row(first + k * factor));
        }
        Ok(BrownianPath {
            grid: GridSpec {
                t0: self.grid.t0,
                span: self.grid.span,
                levels: self.grid.levels - factor.trailing_zeros(),
            },
            noise_dim: m,
            seed: self.seed,
            stream_id: self.stream_id,
            cum: Arc::new(cum),
            origin: self.origin / factor,
        })
    }

    /// Wiener shift: the path `W'(t) = W(t + D) - W(t0 + D)` on the same grid,
    /// `D = delta_nodes * h_fine`. Increments are re-indexed exactly.
    pub fn shift(&self, delta_nodes: i64) -> Result<BrownianPath> {
        let start = self.origin as i64 + delta_nodes;
        let end = start + self.steps() as i64;
        if start < 0 || end >= self.materialized_nodes() as i64 {
            return Err(Error::invalid(format!(
                "shift by {delta_nodes} nodes leaves the generated window (lead {}, trail {}); \
                 generate with a wider margin",
                self.lead(),
                self.trail()
            )));
        }
        Ok(BrownianPath {
            origin: start as usize,
            cum: Arc::clone(&self.cum),
            ..self.clone()
        })
    }

    /// Writes the visible increments in the debug dump format.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        let header = DumpHeader {
            levels: self.grid.levels as u16,
            noise_dim: self.noise_dim as u16,
            t0: self.grid.t0,
            span: self.grid.span,
            seed: self.seed,
            stream_id: self.stream_id,
        };
        w.write_all(&header.to_bytes())?;
        let mut inc = vec![0.0; self.noise_dim];
        for j in 0..self.steps() as i64 {
            self.increment_between(j, j + 1, &mut inc)?;
            for v in &inc {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

fn check_factor(factor: usize, steps: usize) -> Result<()> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::invalid(format!(
            "coarsening factor {factor} is not a power of two"
        )));
    }
    if factor > steps {
        return Err(Error::invalid(format!(
            "coarsening factor {factor} exceeds the {steps} steps of the path"
        )));
    }
    Ok(())
}

pub const DUMP_MAGIC: [u8; 4] = *b"RPSW";
pub const DUMP_HEADER_LEN: usize = 40;

/// Header of a path dump. Layout (little endian): magic `RPSW`, levels `u16`,
/// noise_dim `u16`, t0 `f64`, span `f64`, seed `u64`, stream_id `u64`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DumpHeader {
    pub levels: u16,
    pub noise_dim: u16,
    pub t0: f64,
    pub span: f64,
    pub seed: u64,
    pub stream_id: u64,
}

impl DumpHeader {
    pub fn to_bytes(&self) -> [u8; DUMP_HEADER_LEN] {
        let mut b = [0u8; DUMP_HEADER_LEN];
        b[0..4].copy_from_slice(&DUMP_MAGIC);
        b[4..6].copy_from_slice(&self.levels.to_le_bytes());
        b[6..8].copy_from_slice(&self.noise_dim.to_le_bytes());
        b[8..16].copy_from_slice(&self.t0.to_le_bytes());
        b[16..24].copy_from_slice(&self.span.to_le_bytes());
        b[24..32].copy_from_slice(&self.seed.to_le_bytes());
        b[32..40].copy_from_slice(&self.stream_id.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; DUMP_HEADER_LEN]) -> Result<Self> {
        if b[0..4] != DUMP_MAGIC {
            return Err(Error::invalid("not a path dump (bad magic)"));
        }
        let u16_at = |i: usize| u16::from_le_bytes([b[i], b[i + 1]]);
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        Ok(Self {
            levels: u16_at(4),
            noise_dim: u16_at(6),
            t0: f64::from_bits(u64_at(8)),
            span: f64::from_bits(u64_at(16)),
            seed: u64_at(24),
            stream_id: u64_at(32),
        })
    }
}

/// Reads a dump written by [`BrownianPath::write_dump`]: header and flat increments.
pub fn read_dump<R: Read>(mut r: R) -> Result<(DumpHeader, Vec<f64>)> {
    let mut hb = [0u8; DUMP_HEADER_LEN];
    r.read_exact(&mut hb)?;
    let header = DumpHeader::from_bytes(&hb)?;
    let count = (1usize << header.levels) * header.noise_dim as usize;
    let mut data = vec![0u8; count * 8];
    r.read_exact(&mut data)?;
    let inc = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, inc))
}
