//! Closed-form transfer counts for tiled MATMUL over a memory / register
//! file / buffer / FPU hierarchy, and the metrics derived from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{KernelKind, ProblemShape, SubTileConfig, TileConfig};
use crate::ledger::{Terms, TransferLedger};

/// How long an output sub-tile stays in the near-FPU buffer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufResidency {
    /// Fetched and written back around every sub-tile update.
    #[default]
    None,
    /// Kept across the `k` dimension of one register-file tile.
    TileK,
    /// Kept across the whole `K` reduction; needs `m = m'` and `n = n'`.
    FullK,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BufferingOptions {
    /// Output tile stays in the register file for the whole `K` loop.
    pub interk_vrf: bool,
    pub interk_buf: BufResidency,
    /// C is zero: accumulators are reset instead of loaded.
    pub c_is_zero: bool,
}

impl BufferingOptions {
    /// What both generated kernels do: register-resident accumulators that
    /// start from zero, no buffer residency.
    pub const KERNEL: BufferingOptions =
        BufferingOptions { interk_vrf: true, interk_buf: BufResidency::None, c_is_zero: true };
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("baseline algorithm consumes A as scalars and requires tile k = 1 (got {0})")]
    BaselineRequiresKEquals1(usize),
}

/// `num / den` for counts that are integral by construction.
fn ratio(num: u128, den: u128) -> u64 {
    debug_assert!(den > 0 && num.is_multiple_of(den), "{num} / {den} is not integral");
    (num / den) as u64
}

fn mn(p: &ProblemShape) -> u128 {
    (p.m * p.n) as u128
}

fn mnk(p: &ProblemShape) -> u128 {
    (p.m * p.n * p.k) as u128
}

/// Memory ↔ register-file terms for a `(m, n, k)` tiling.
pub fn mem_vrf_transfers(p: &ProblemShape, t: &TileConfig, opts: &BufferingOptions) -> Terms {
    let a = ratio(mnk(p), t.n as u128);
    let b = ratio(mnk(p), t.m as u128);
    let per_k = ratio(p.k as u128 * mn(p), t.k as u128);
    let mn = mn(p) as u64;
    let (cd, d) = match (opts.interk_vrf, opts.c_is_zero) {
        (true, true) => (0, mn),
        (true, false) => (mn, mn),
        (false, true) => (per_k - mn, per_k),
        (false, false) => (per_k, per_k),
    };
    Terms::new(a, b, cd, d)
}

/// Register-file ↔ buffer terms for sub-tiles `(m', n', k')` of a tile.
pub fn vrf_buf_transfers(p: &ProblemShape, t: &TileConfig, sub: &SubTileConfig, opts: &BufferingOptions) -> Terms {
    let a = ratio(mnk(p), sub.n as u128);
    let b = ratio(mnk(p), sub.m as u128);
    let fetches = match opts.interk_buf {
        BufResidency::None => ratio(p.k as u128, sub.k as u128),
        BufResidency::TileK => ratio(p.k as u128, t.k as u128),
        BufResidency::FullK => 1,
    };
    let skipped = u64::from(opts.c_is_zero && opts.interk_buf != BufResidency::None);
    let mn = mn(p) as u64;
    Terms::new(a, b, (fetches - skipped) * mn, fetches * mn)
}

/// Buffer ↔ FPU terms when `t_a` / `t_b` FPUs share each fetched A / B element.
pub fn buf_fpu_transfers(p: &ProblemShape, t_a: usize, t_b: usize) -> Terms {
    let full = mnk(p) as u64;
    Terms::new(ratio(mnk(p), t_b as u128), ratio(mnk(p), t_a as u128), full, full)
}

/// FPUs that one fetched operand reaches inside a sub-tile of extent `extent`.
pub fn operand_reach(extent: usize, fpus: usize) -> usize {
    extent / extent.div_ceil(fpus)
}

/// Ledgers of the scalar-vector baseline: A as scalars through the scalar
/// register file, B rows as vectors, accumulators resident in the VRF.
pub fn baseline_transfers(p: &ProblemShape, t: &TileConfig, fpus: usize) -> Result<TransferLedger, CostError> {
    if t.k != 1 {
        return Err(CostError::BaselineRequiresKEquals1(t.k));
    }
    let full = mnk(p) as u64;
    let vl = t.n.min(p.n);
    let fmaccs = ratio(mnk(p), vl as u128);
    Ok(TransferLedger {
        mem_vrf: mem_vrf_transfers(p, t, &BufferingOptions::KERNEL),
        vrf_fpu: Terms::new(0, full, full, full),
        srf_fpu: Terms::new(fmaccs * vl.div_ceil(fpus) as u64, 0, 0, 0),
        ..Default::default()
    })
}

/// Ledgers of the matrix-extension kernel with `n = B·n'`, `m = m'`, `k = k'`.
pub fn mx_transfers(p: &ProblemShape, t: &TileConfig, sub: &SubTileConfig, fpus: usize) -> TransferLedger {
    let wide = TileConfig::new(sub.m, sub.bcast * sub.n, t.k);
    TransferLedger {
        mem_vrf: mem_vrf_transfers(p, &wide, &BufferingOptions::KERNEL),
        vrf_buf: vrf_buf_transfers(p, t, sub, &BufferingOptions::default()),
        buf_fpu: buf_fpu_transfers(p, operand_reach(sub.m, fpus), operand_reach(sub.n, fpus)),
        ..Default::default()
    }
}

/// FLOP per byte moved between memory and the core; one MAC is two FLOP.
pub fn arithmetic_intensity(p: &ProblemShape, mem_vrf_elements: u64, element_bytes: usize) -> f64 {
    2.0 * p.macs() as f64 / (mem_vrf_elements as f64 * element_bytes as f64)
}

/// MACs amortized by one computational instruction.
pub fn predicted_simd_ratio(kind: KernelKind, tile: &TileConfig, sub: Option<&SubTileConfig>) -> f64 {
    match (kind, sub) {
        (KernelKind::Mx, Some(s)) => s.macs() as f64,
        _ => tile.n as f64,
    }
}

/// Relative energy per element crossing each boundary, plus a cost per
/// retired instruction. Units are arbitrary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyCoefficients {
    pub e_mem: f64,
    pub e_vrf: f64,
    pub e_buf: f64,
    /// Added to every element that arrives at an FPU, whatever its source.
    pub e_fpu: f64,
    pub e_srf: f64,
    pub e_insn: f64,
}

impl Default for EnergyCoefficients {
    fn default() -> Self {
        Self { e_mem: 10.0, e_vrf: 3.0, e_buf: 1.0, e_fpu: 0.0, e_srf: 1.0, e_insn: 2.0 }
    }
}

impl EnergyCoefficients {
    pub const ZERO: EnergyCoefficients =
        EnergyCoefficients { e_mem: 0.0, e_vrf: 0.0, e_buf: 0.0, e_fpu: 0.0, e_srf: 0.0, e_insn: 0.0 };
}

pub fn energy_estimate(ledger: &TransferLedger, instructions: u64, c: &EnergyCoefficients) -> f64 {
    let t = |terms: &Terms| terms.total() as f64;
    t(&ledger.mem_vrf) * c.e_mem
        + t(&ledger.vrf_buf) * c.e_vrf
        + t(&ledger.vrf_fpu) * (c.e_vrf + c.e_fpu)
        + t(&ledger.buf_fpu) * (c.e_buf + c.e_fpu)
        + t(&ledger.srf_fpu) * (c.e_srf + c.e_fpu)
        + instructions as f64 * c.e_insn
}
