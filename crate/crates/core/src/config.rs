//! Problem, tile and machine configuration records plus their validation.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scalar element type of the matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementType {
    F64,
    F32,
    I32,
}

impl ElementType {
    pub const fn width_bytes(self) -> usize {
        match self {
            ElementType::F64 => 8,
            ElementType::F32 | ElementType::I32 => 4,
        }
    }

    pub const fn sew_bits(self) -> usize {
        self.width_bytes() * 8
    }

    pub const fn is_float(self) -> bool {
        !matches!(self, ElementType::I32)
    }

    /// Float type for a given element width, as selected by `--ew`.
    pub fn float_of_width(bytes: usize) -> Option<Self> {
        match bytes {
            8 => Some(ElementType::F64),
            4 => Some(ElementType::F32),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementType::F64 => "f64",
            ElementType::F32 => "f32",
            ElementType::I32 => "i32",
        }
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ElementType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f64" => Ok(ElementType::F64),
            "f32" => Ok(ElementType::F32),
            "i32" => Ok(ElementType::I32),
            other => Err(format!("unknown element type `{other}`")),
        }
    }
}

/// `D[M×N] = A[M×K] · B[K×N] + C[M×N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProblemShape {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl ProblemShape {
    pub const fn new(m: usize, n: usize, k: usize) -> Self {
        Self { m, n, k }
    }

    pub const fn cube(size: usize) -> Self {
        Self::new(size, size, size)
    }

    pub fn macs(&self) -> u64 {
        (self.m * self.n * self.k) as u64
    }
}

impl fmt::Display for ProblemShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.m, self.n, self.k)
    }
}

/// Output tile held in the vector register file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl TileConfig {
    pub const fn new(m: usize, n: usize, k: usize) -> Self {
        Self { m, n, k }
    }
}

impl fmt::Display for TileConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.m, self.n, self.k)
    }
}

/// Sub-tile processed by one matrix instruction, plus the broadcast factor
/// `bcast` with `tile.n = bcast × n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubTileConfig {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    #[serde(alias = "b")]
    pub bcast: usize,
}

impl SubTileConfig {
    pub const fn new(m: usize, n: usize, k: usize, bcast: usize) -> Self {
        Self { m, n, k, bcast }
    }

    pub fn macs(&self) -> u64 {
        (self.m * self.n * self.k) as u64
    }
}

impl fmt::Display for SubTileConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{} B={}", self.m, self.n, self.k, self.bcast)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MachineConfig {
    pub vrf_bytes: usize,
    pub vreg_bits: usize,
    pub num_vregs: usize,
    pub fpus: usize,
    pub mem_ports: usize,
    pub buffer_bytes: usize,
    pub cores: usize,
    pub element: ElementType,
    pub strict_subtile_sizes: bool,
    pub buffer_resident_accumulation: bool,
    pub lmul_max: usize,
    /// Fraction of memory-instruction cycles allowed to hide behind compute.
    pub overlap: f64,
    /// Abort a run after this many retired instructions.
    pub max_steps: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        Self {
            vrf_bytes: 2048,
            vreg_bits: 512,
            num_vregs: 32,
            fpus: 4,
            mem_ports: 4,
            buffer_bytes: 256,
            cores: 1,
            element: ElementType::F64,
            strict_subtile_sizes: true,
            buffer_resident_accumulation: false,
            lmul_max: 8,
            overlap: 1.0,
            max_steps: 2_000_000_000,
        }
    }
}

impl MachineConfig {
    /// Two 64-bit cores, four double-precision FPUs each.
    pub fn dual_core() -> Self {
        Self { cores: 2, ..Self::default() }
    }

    /// 64 single-precision cores.
    pub fn many_core() -> Self {
        Self { cores: 64, element: ElementType::F32, ..Self::default() }
    }

    pub fn with_element(mut self, element: ElementType) -> Self {
        self.element = element;
        self
    }

    pub fn vlenb(&self) -> usize {
        self.vreg_bits / 8
    }

    /// Elements held by one vector register at the configured width.
    pub fn elems_per_vreg(&self) -> usize {
        self.vlenb() / self.element.width_bytes()
    }

    /// Longest vector reachable with `lmul_max` grouping.
    pub fn vlmax(&self) -> usize {
        self.elems_per_vreg() * self.lmul_max
    }

    /// Register-group size (a power of two) needed to hold `elems` elements.
    pub fn group_regs(&self, elems: usize) -> usize {
        let bytes = elems * self.element.width_bytes();
        bytes.div_ceil(self.vlenb()).max(1).next_power_of_two()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dim {
    M,
    N,
    K,
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dim::M => "m",
            Dim::N => "n",
            Dim::K => "k",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{0} must be at least 1")]
    ZeroDimension(Dim),
    #[error("tile {0} does not divide the problem dimension")]
    NonDivisible(Dim),
    #[error("sub-tile {dim} = {value} outside the supported set")]
    SubTileOutOfRange { dim: Dim, value: usize },
    #[error("broadcast factor {0} outside the supported set")]
    BroadcastOutOfRange(usize),
    #[error("sub-tile {0} does not match the tile (need m'=m, k'=k, n=B·n')")]
    SubTileMismatch(Dim),
    #[error("accumulator sub-tile needs {needed} B, buffer holds {available} B")]
    BufferOverflow { needed: usize, available: usize },
    #[error("vector length {requested} exceeds VLMAX {vlmax}")]
    VlMismatch { requested: usize, vlmax: usize },
    #[error("baseline kernel requires tile k = 1, got {0}")]
    BaselineRequiresKEquals1(usize),
    #[error("kernel needs {needed} vector registers, machine has {available}")]
    RegisterPressure { needed: usize, available: usize },
    #[error("invalid machine: {0}")]
    Machine(String),
}

/// Which kernel family a validated configuration targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Baseline,
    Mx,
}

/// A configuration that passed [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Validated {
    pub problem: ProblemShape,
    pub tile: TileConfig,
    pub sub: Option<SubTileConfig>,
    pub machine: MachineConfig,
}

impl Validated {
    pub fn kind(&self) -> KernelKind {
        if self.sub.is_some() {
            KernelKind::Mx
        } else {
            KernelKind::Baseline
        }
    }

    /// Tile actually executed by the kernels: a tile dimension larger than
    /// the problem shrinks to the problem size.
    pub fn effective_tile(&self) -> TileConfig {
        TileConfig {
            m: self.tile.m.min(self.problem.m),
            n: self.tile.n.min(self.problem.n),
            k: self.tile.k.min(self.problem.k),
        }
    }
}

fn check_machine(cfg: &MachineConfig, errors: &mut Vec<ConfigError>) {
    if cfg.vreg_bits * cfg.num_vregs != 8 * cfg.vrf_bytes {
        errors.push(ConfigError::Machine(format!(
            "{} registers of {} bits do not make a {} B register file",
            cfg.num_vregs, cfg.vreg_bits, cfg.vrf_bytes
        )));
    }
    if !cfg.vreg_bits.is_multiple_of(cfg.element.sew_bits()) || cfg.vreg_bits == 0 {
        errors.push(ConfigError::Machine("vector register width must hold whole elements".into()));
    }
    if !cfg.fpus.is_power_of_two() {
        errors.push(ConfigError::Machine("FPU count must be a power of two".into()));
    }
    if cfg.mem_ports == 0 {
        errors.push(ConfigError::Machine("at least one memory port is required".into()));
    }
    if cfg.cores == 0 {
        errors.push(ConfigError::Machine("at least one core is required".into()));
    }
    if !cfg.lmul_max.is_power_of_two() || cfg.lmul_max > 8 {
        errors.push(ConfigError::Machine("lmul_max must be 1, 2, 4 or 8".into()));
    }
    if cfg.strict_subtile_sizes && cfg.buffer_bytes > cfg.vrf_bytes / 8 {
        errors.push(ConfigError::Machine(format!("buffer of {} B exceeds 1/8 of the register file", cfg.buffer_bytes)));
    }
    if !(0.0..=1.0).contains(&cfg.overlap) {
        errors.push(ConfigError::Machine("overlap fraction must lie in [0, 1]".into()));
    }
}

/// A tile dimension either divides the problem dimension or is a multiple of
/// it whose ratio still divides the other two problem dimensions' product, so
/// every closed-form term stays integral.
fn tile_dim_ok(tile: usize, prob: usize, others: usize) -> bool {
    if tile <= prob {
        prob.is_multiple_of(tile)
    } else {
        tile.is_multiple_of(prob) && others.is_multiple_of(tile / prob)
    }
}

fn sub_dim_ok(value: usize, strict: bool) -> bool {
    if strict {
        matches!(value, 4 | 8)
    } else {
        value >= 2 && value.is_power_of_two()
    }
}

/// Checks every divisibility and size invariant, returning all violations.
pub fn validate(
    problem: ProblemShape,
    tile: TileConfig,
    sub: Option<SubTileConfig>,
    cfg: &MachineConfig,
) -> Result<Validated, Vec<ConfigError>> {
    let mut errors = Vec::new();
    check_machine(cfg, &mut errors);

    let dims = [(Dim::M, problem.m, tile.m), (Dim::N, problem.n, tile.n), (Dim::K, problem.k, tile.k)];
    for (dim, p, t) in dims {
        if p == 0 || t == 0 {
            errors.push(ConfigError::ZeroDimension(dim));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let w = cfg.element.width_bytes();
    match sub {
        None => {
            let others = [problem.n * problem.k, problem.m * problem.k, problem.m * problem.n];
            for ((dim, p, t), other) in dims.into_iter().zip(others) {
                if !tile_dim_ok(t, p, other) {
                    errors.push(ConfigError::NonDivisible(dim));
                }
            }
            if tile.k != 1 {
                errors.push(ConfigError::BaselineRequiresKEquals1(tile.k));
            }
            let n_eff = tile.n.min(problem.n);
            if n_eff > cfg.vlmax() {
                errors.push(ConfigError::VlMismatch { requested: n_eff, vlmax: cfg.vlmax() });
            } else if errors.is_empty() {
                let group = cfg.group_regs(n_eff);
                let needed = group * (tile.m.min(problem.m) + 1);
                if needed > cfg.num_vregs {
                    errors.push(ConfigError::RegisterPressure { needed, available: cfg.num_vregs });
                }
            }
        }
        Some(s) => {
            for (dim, p, t) in dims {
                if p % t != 0 {
                    errors.push(ConfigError::NonDivisible(dim));
                }
            }
            let strict = cfg.strict_subtile_sizes;
            for (dim, v) in [(Dim::M, s.m), (Dim::N, s.n), (Dim::K, s.k)] {
                if !sub_dim_ok(v, strict) {
                    errors.push(ConfigError::SubTileOutOfRange { dim, value: v });
                }
            }
            let bcast_ok =
                if strict { matches!(s.bcast, 1 | 2 | 4 | 8) } else { s.bcast >= 1 && s.bcast.is_power_of_two() };
            if !bcast_ok {
                errors.push(ConfigError::BroadcastOutOfRange(s.bcast));
            }
            if s.m != tile.m {
                errors.push(ConfigError::SubTileMismatch(Dim::M));
            }
            if s.k != tile.k {
                errors.push(ConfigError::SubTileMismatch(Dim::K));
            }
            if s.n * s.bcast != tile.n {
                errors.push(ConfigError::SubTileMismatch(Dim::N));
            }
            let vl = s.m * s.k;
            if vl > cfg.vlmax() {
                errors.push(ConfigError::VlMismatch { requested: vl, vlmax: cfg.vlmax() });
            }
            if s.m * s.n > vl {
                errors.push(ConfigError::VlMismatch { requested: s.m * s.n, vlmax: vl });
            }
            let needed = s.m * s.n * w;
            if needed > cfg.buffer_bytes {
                errors.push(ConfigError::BufferOverflow { needed, available: cfg.buffer_bytes });
            }
            if errors.is_empty() {
                let regs = cfg.group_regs(vl) + cfg.group_regs(s.k * s.n) + s.bcast * cfg.group_regs(s.m * s.n);
                if regs > cfg.num_vregs {
                    errors.push(ConfigError::RegisterPressure { needed: regs, available: cfg.num_vregs });
                }
            }
        }
    }

    if errors.is_empty() {
        Ok(Validated { problem, tile, sub, machine: *cfg })
    } else {
        Err(errors)
    }
}
