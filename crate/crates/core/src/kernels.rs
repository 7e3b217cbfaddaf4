//! MATMUL program generators for the baseline and matrix-extension kernels,
//! data layout helpers and the golden reference.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Dim, ElementType, KernelKind, ProblemShape, Validated};
use crate::isa::{FReg, Instruction, Mnemonic, Program, ProgramBuilder, Sew, TileLen, VReg, XReg};
use crate::machine::lane::Lane;
use crate::machine::{InstructionCensus, Memory};

const T0: XReg = XReg(5);
const T1: XReg = XReg(6);
const T2: XReg = XReg(7);
const S0: XReg = XReg(8);
const S1: XReg = XReg(9);
const A0: XReg = XReg(10);
const A1: XReg = XReg(11);
const A2: XReg = XReg(12);
const T3: XReg = XReg(28);
const T4: XReg = XReg(29);
const T5: XReg = XReg(30);
const T6: XReg = XReg(31);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("element type mismatch: expected {expected}, got {found}")]
    ElementMismatch { expected: ElementType, found: ElementType },
}

/// Row-major matrix of raw element bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub element: ElementType,
    pub data: Vec<u64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize, element: ElementType) -> Self {
        Self { rows, cols, element, data: vec![0; rows * cols] }
    }

    /// Converts each value to `element` (rounding for f32, truncating for i32).
    pub fn from_f64(rows: usize, cols: usize, element: ElementType, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols, "value count");
        Self { rows, cols, element, data: values.iter().map(|&v| encode(element, v)).collect() }
    }

    pub fn identity(n: usize, element: ElementType) -> Self {
        let v: Vec<f64> = (0..n * n).map(|i| if i / n == i % n { 1.0 } else { 0.0 }).collect();
        Self::from_f64(n, n, element, &v)
    }

    /// Floats uniform in [-1, 1); integers uniform in [-8, 8).
    pub fn random(rows: usize, cols: usize, element: ElementType, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| match element {
                ElementType::I32 => encode(element, rng.gen_range(-8i32..8) as f64),
                _ => encode(element, rng.gen_range(-1.0..1.0)),
            })
            .collect();
        Self { rows, cols, element, data }
    }

    pub fn bits(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        decode(self.element, self.bits(i, j))
    }

    pub fn values(&self) -> Vec<f64> {
        self.data.iter().map(|&b| decode(self.element, b)).collect()
    }
}

fn encode(element: ElementType, v: f64) -> u64 {
    match element {
        ElementType::F64 => v.to_bits(),
        ElementType::F32 => (v as f32).to_bits() as u64,
        ElementType::I32 => v as i32 as u32 as u64,
    }
}

fn decode(element: ElementType, bits: u64) -> f64 {
    match element {
        ElementType::F64 => f64::from_bits(bits),
        ElementType::F32 => f32::from_bits(bits as u32) as f64,
        ElementType::I32 => bits as u32 as i32 as f64,
    }
}

/// Summation order of [`golden_matmul`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SumOrder {
    /// The machine's order: one fused multiply-add per `k`, ascending,
    /// starting from C.
    Defined,
    /// Separate multiply and add per `k`, ascending.
    Free,
}

/// `D = A·B + C` by the naive triple loop.
pub fn golden_matmul(a: &Matrix, b: &Matrix, c: &Matrix, order: SumOrder) -> Result<Matrix, KernelError> {
    if a.cols != b.rows || c.rows != a.rows || c.cols != b.cols {
        return Err(KernelError::ShapeMismatch(format!(
            "A {}x{}, B {}x{}, C {}x{}",
            a.rows, a.cols, b.rows, b.cols, c.rows, c.cols
        )));
    }
    for m in [b, c] {
        if m.element != a.element {
            return Err(KernelError::ElementMismatch { expected: a.element, found: m.element });
        }
    }
    Ok(match a.element {
        ElementType::F64 => golden_typed::<f64>(a, b, c, order, |x, y, acc| acc + x * y),
        ElementType::F32 => golden_typed::<f32>(a, b, c, order, |x, y, acc| acc + x * y),
        ElementType::I32 => golden_typed::<i32>(a, b, c, order, |x, y, acc| acc.wrapping_add(x.wrapping_mul(y))),
    })
}

fn golden_typed<T: Lane>(a: &Matrix, b: &Matrix, c: &Matrix, order: SumOrder, unfused: fn(T, T, T) -> T) -> Matrix {
    let mut d = c.clone();
    for i in 0..a.rows {
        for j in 0..b.cols {
            let mut acc = T::from_bits(c.bits(i, j));
            for p in 0..a.cols {
                let (x, y) = (T::from_bits(a.bits(i, p)), T::from_bits(b.bits(p, j)));
                acc = match order {
                    SumOrder::Defined => T::mac(x, y, acc),
                    SumOrder::Free => unfused(x, y, acc),
                };
            }
            d.data[i * d.cols + j] = acc.to_bits();
        }
    }
    d
}

/// Largest componentwise error `|D - R| / (Σ|a·b| + |c|)`; zero when the
/// scale is zero and the values agree.
pub fn max_relative_error(d: &Matrix, reference: &Matrix, a: &Matrix, b: &Matrix, c: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..d.rows {
        for j in 0..d.cols {
            let scale: f64 =
                (0..a.cols).map(|p| (a.value(i, p) * b.value(p, j)).abs()).sum::<f64>() + c.value(i, j).abs();
            let diff = (d.value(i, j) - reference.value(i, j)).abs();
            let err = if diff == 0.0 { 0.0 } else { diff / scale.max(f64::MIN_POSITIVE) };
            worst = worst.max(err);
        }
    }
    worst
}

/// Tolerance of [`max_relative_error`] against the order-free result.
pub fn relative_tolerance(element: ElementType) -> f64 {
    match element {
        ElementType::F64 => 1e-12,
        ElementType::F32 => 1e-5,
        ElementType::I32 => 0.0,
    }
}

/// Byte addresses of row-major A, B and D, each 64-byte aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Layout {
    pub problem: ProblemShape,
    pub element: ElementType,
    pub a: usize,
    pub b: usize,
    pub d: usize,
    pub bytes: usize,
}

impl Layout {
    pub fn new(problem: ProblemShape, element: ElementType) -> Self {
        let w = element.width_bytes();
        let align = |x: usize| x.div_ceil(64) * 64;
        let a = 0;
        let b = align(a + problem.m * problem.k * w);
        let d = align(b + problem.k * problem.n * w);
        let bytes = align(d + problem.m * problem.n * w);
        Self { problem, element, a, b, d, bytes }
    }

    fn width(&self) -> usize {
        self.element.width_bytes()
    }

    /// Memory image holding A and B with D zeroed.
    pub fn image(&self, a: &Matrix, b: &Matrix) -> Result<Memory, KernelError> {
        let p = self.problem;
        if (a.rows, a.cols) != (p.m, p.k) || (b.rows, b.cols) != (p.k, p.n) {
            return Err(KernelError::ShapeMismatch(format!(
                "problem {p} given A {}x{} and B {}x{}",
                a.rows, a.cols, b.rows, b.cols
            )));
        }
        for m in [a, b] {
            if m.element != self.element {
                return Err(KernelError::ElementMismatch { expected: self.element, found: m.element });
            }
        }
        let w = self.width();
        let mut bytes = vec![0u8; self.bytes];
        for (base, m) in [(self.a, a), (self.b, b)] {
            for (i, &v) in m.data.iter().enumerate() {
                let at = base + i * w;
                bytes[at..at + w].copy_from_slice(&v.to_le_bytes()[..w]);
            }
        }
        Ok(Memory::from_bytes(bytes))
    }

    pub fn read_d(&self, memory: &Memory) -> Matrix {
        let w = self.width();
        let p = self.problem;
        let mut d = Matrix::zeros(p.m, p.n, self.element);
        let raw = memory.as_bytes();
        for (i, slot) in d.data.iter_mut().enumerate() {
            let at = self.d + i * w;
            let mut buf = [0u8; 8];
            buf[..w].copy_from_slice(&raw[at..at + w]);
            *slot = u64::from_le_bytes(buf);
        }
        d
    }
}

/// Output tiling shared by generator, census and partitioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    /// Rows of D per output tile.
    pub rows: usize,
    /// Columns of D per output tile.
    pub cols: usize,
    pub tiles_m: usize,
    pub tiles_n: usize,
}

impl TileGrid {
    pub fn of(v: &Validated) -> Self {
        let p = v.problem;
        let (rows, cols) = match v.sub {
            Some(s) => (s.m, s.bcast * s.n),
            None => {
                let t = v.effective_tile();
                (t.m, t.n)
            }
        };
        Self { rows, cols, tiles_m: p.m / rows, tiles_n: p.n / cols }
    }

    pub fn count(&self) -> usize {
        self.tiles_m * self.tiles_n
    }

    /// Row-major tile index to (tile row, tile column).
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.tiles_n, idx % self.tiles_n)
    }
}

/// Splits `tiles` output tiles into `cores` contiguous, balanced ranges.
pub fn partition(tiles: usize, cores: usize) -> Vec<Range<usize>> {
    let cores = cores.max(1);
    (0..cores).map(|c| c * tiles / cores..(c + 1) * tiles / cores).collect()
}

fn sew(v: &Validated) -> Sew {
    Sew::of(v.machine.element)
}

fn build(b: ProgramBuilder) -> Program {
    b.build().expect("generated labels resolve")
}

/// Program for every output tile on one core.
pub fn gen_kernel(v: &Validated) -> Program {
    gen_kernel_tiles(v, 0..TileGrid::of(v).count())
}

/// Program covering the output tiles in `tiles`; empty when the range is.
pub fn gen_kernel_tiles(v: &Validated, tiles: Range<usize>) -> Program {
    match v.kind() {
        KernelKind::Baseline => gen_baseline(v, tiles),
        KernelKind::Mx => gen_mx(v, tiles),
    }
}

/// Scalar-vector kernel: per output tile, `m` accumulator vectors of length
/// `n`; each K step loads one B row and broadcasts `m` scalars of A.
pub fn gen_baseline(v: &Validated, tiles: Range<usize>) -> Program {
    let elem = v.machine.element;
    let mut b = ProgramBuilder::new(Some(elem));
    if tiles.is_empty() {
        return build(b);
    }
    let p = v.problem;
    let grid = TileGrid::of(v);
    let layout = Layout::new(p, elem);
    let w = elem.width_bytes() as i64;
    let (m, n) = (grid.rows, grid.cols);
    let lmul = v.machine.group_regs(n);
    let brow = VReg((lmul * m) as u8);
    let acc = |r: usize| VReg((lmul * r) as u8);

    b.push(Instruction::Li { rd: T0, imm: n as i64 });
    b.push(Instruction::Vsetvli { rd: T1, avl: T0, sew: sew(v), lmul: lmul as u8 });
    for idx in tiles {
        let (ti, tj) = grid.coords(idx);
        let label = format!("k{idx}");
        b.push(Instruction::Li { rd: A0, imm: (layout.a + ti * m * p.k * w as usize) as i64 });
        b.push(Instruction::Li { rd: A1, imm: (layout.b + tj * n * w as usize) as i64 });
        b.push(Instruction::Li { rd: T2, imm: 0 });
        b.push(Instruction::Li { rd: T3, imm: p.k as i64 });
        for r in 0..m {
            b.push(Instruction::VmvZero { vd: acc(r) });
        }
        b.label(label.clone());
        b.push(Instruction::Vle { vd: brow, base: A1 });
        for r in 0..m {
            let offset = (r * p.k) as i64 * w;
            match elem {
                ElementType::F64 | ElementType::F32 => {
                    let fd = FReg(10 + (r % 8) as u8);
                    b.push(if elem == ElementType::F64 {
                        Instruction::Fld { fd, base: A0, offset }
                    } else {
                        Instruction::Flw { fd, base: A0, offset }
                    });
                    b.push(Instruction::VfmaccVf { vd: acc(r), fs1: fd, vs2: brow });
                }
                ElementType::I32 => {
                    b.push(Instruction::Lw { rd: T4, base: A0, offset });
                    b.push(Instruction::VmaccVx { vd: acc(r), rs1: T4, vs2: brow });
                }
            }
        }
        b.push(Instruction::Addi { rd: A0, rs1: A0, imm: w });
        b.push(Instruction::Addi { rd: A1, rs1: A1, imm: p.n as i64 * w });
        b.push(Instruction::Addi { rd: T2, rs1: T2, imm: 1 });
        b.push(Instruction::Blt { rs1: T2, rs2: T3, target: label });
        for r in 0..m {
            let addr = layout.d + ((ti * m + r) * p.n + tj * n) * w as usize;
            b.push(Instruction::Li { rd: A2, imm: addr as i64 });
            b.push(Instruction::Vse { vs3: acc(r), base: A2 });
        }
    }
    build(b)
}

/// Vector registers used by the MX kernel: accumulators, A tile, B tile.
struct MxRegs {
    acc: Vec<VReg>,
    a: VReg,
    b: VReg,
    acc_lmul: usize,
    a_lmul: usize,
}

fn mx_regs(v: &Validated) -> MxRegs {
    let s = v.sub.expect("mx configuration");
    let cfg = &v.machine;
    let (acc_lmul, a_lmul, b_lmul) = (cfg.group_regs(s.m * s.n), cfg.group_regs(s.m * s.k), cfg.group_regs(s.k * s.n));
    let align = |x: usize, g: usize| x.div_ceil(g) * g;
    let acc = (0..s.bcast).map(|i| VReg((i * acc_lmul) as u8)).collect();
    let a = align(s.bcast * acc_lmul, a_lmul);
    let b = align(a + a_lmul, b_lmul);
    MxRegs { acc, a: VReg(a as u8), b: VReg(b as u8), acc_lmul, a_lmul }
}

/// Matrix-extension kernel: per output tile of `m'×(B·n')`, B accumulator
/// sub-tiles; each k'-chunk loads one A sub-tile and reuses it for B
/// sub-tiles of B.
pub fn gen_mx(v: &Validated, tiles: Range<usize>) -> Program {
    let elem = v.machine.element;
    let mut b = ProgramBuilder::new(Some(elem));
    if tiles.is_empty() {
        return build(b);
    }
    let s = v.sub.expect("mx configuration");
    let p = v.problem;
    let grid = TileGrid::of(v);
    let layout = Layout::new(p, elem);
    let w = elem.width_bytes();
    let regs = mx_regs(v);
    let mac = |vd, vs1, vs2| match elem {
        ElementType::I32 => Instruction::Mxmacc { vd, vs1, vs2 },
        _ => Instruction::Mxfmacc { vd, vs1, vs2 },
    };

    for (dim, len) in [(Dim::M, s.m), (Dim::N, s.n), (Dim::K, s.k)] {
        b.push(Instruction::MsetTile { dim, rd: T0, len: TileLen::Imm(len as u64) });
    }
    b.push(Instruction::Li { rd: S0, imm: (p.k * w) as i64 });
    b.push(Instruction::Li { rd: S1, imm: (p.n * w) as i64 });
    b.push(Instruction::Li { rd: T5, imm: (s.m * s.n) as i64 });
    b.push(Instruction::Li { rd: T6, imm: (s.m * s.k) as i64 });
    for idx in tiles {
        let (ti, tj) = grid.coords(idx);
        let label = format!("k{idx}");
        b.push(Instruction::Li { rd: A0, imm: (layout.a + ti * s.m * p.k * w) as i64 });
        b.push(Instruction::Li { rd: A1, imm: (layout.b + tj * grid.cols * w) as i64 });
        b.push(Instruction::Li { rd: T2, imm: 0 });
        b.push(Instruction::Li { rd: T3, imm: (p.k / s.k) as i64 });
        b.push(Instruction::Vsetvli { rd: T1, avl: T5, sew: sew(v), lmul: regs.acc_lmul as u8 });
        for &acc in &regs.acc {
            b.push(Instruction::VmvZero { vd: acc });
        }
        b.push(Instruction::Vsetvli { rd: T1, avl: T6, sew: sew(v), lmul: regs.a_lmul as u8 });
        b.label(label.clone());
        b.push(Instruction::MldA { vd: regs.a, base: A0, stride: S0 });
        for (i, &acc) in regs.acc.iter().enumerate() {
            let base = if i == 0 {
                A1
            } else {
                b.push(Instruction::Addi { rd: A2, rs1: A1, imm: (i * s.n * w) as i64 });
                A2
            };
            b.push(Instruction::MldB { vd: regs.b, base, stride: S1 });
            b.push(mac(acc, regs.a, regs.b));
        }
        b.push(Instruction::Addi { rd: A0, rs1: A0, imm: (s.k * w) as i64 });
        b.push(Instruction::Addi { rd: A1, rs1: A1, imm: (s.k * p.n * w) as i64 });
        b.push(Instruction::Addi { rd: T2, rs1: T2, imm: 1 });
        b.push(Instruction::Blt { rs1: T2, rs2: T3, target: label });
        for (i, &acc) in regs.acc.iter().enumerate() {
            let addr = layout.d + (ti * s.m * p.n + tj * grid.cols + i * s.n) * w;
            b.push(Instruction::Li { rd: A2, imm: addr as i64 });
            b.push(Instruction::MstC { vs3: acc, base: A2, stride: S1 });
        }
    }
    build(b)
}

/// Dynamic instruction counts of [`gen_kernel_tiles`] over `tiles` tiles,
/// without running it.
pub fn analytic_census(v: &Validated, tiles: usize) -> InstructionCensus {
    let mut c = InstructionCensus::default();
    if tiles == 0 {
        return c;
    }
    let t = tiles as u64;
    let p = v.problem;
    let elem = v.machine.element;
    match v.sub {
        None => {
            let m = TileGrid::of(v).rows as u64;
            let k = p.k as u64;
            let (load, mac) = match elem {
                ElementType::F64 => (Mnemonic::Fld, Mnemonic::VfmaccVf),
                ElementType::F32 => (Mnemonic::Flw, Mnemonic::VfmaccVf),
                ElementType::I32 => (Mnemonic::Lw, Mnemonic::VmaccVx),
            };
            c.add(Mnemonic::Li, 1 + t * (4 + m));
            c.add(Mnemonic::Vsetvli, 1);
            c.add(Mnemonic::VmvZero, t * m);
            c.add(Mnemonic::Vle, t * k);
            c.add(load, t * k * m);
            c.add(mac, t * k * m);
            c.add(Mnemonic::Addi, t * k * 3);
            c.add(Mnemonic::Blt, t * k);
            c.add(Mnemonic::Vse, t * m);
        }
        Some(s) => {
            let bc = s.bcast as u64;
            let chunks = (p.k / s.k) as u64;
            let mac = if elem == ElementType::I32 { Mnemonic::Mxmacc } else { Mnemonic::Mxfmacc };
            c.add(Mnemonic::MsetTileM, 1);
            c.add(Mnemonic::MsetTileN, 1);
            c.add(Mnemonic::MsetTileK, 1);
            c.add(Mnemonic::Li, 4 + t * (4 + bc));
            c.add(Mnemonic::Vsetvli, 2 * t);
            c.add(Mnemonic::VmvZero, t * bc);
            c.add(Mnemonic::MldA, t * chunks);
            c.add(Mnemonic::MldB, t * chunks * bc);
            c.add(mac, t * chunks * bc);
            c.add(Mnemonic::Addi, t * chunks * (bc - 1 + 3));
            c.add(Mnemonic::Blt, t * chunks);
            c.add(Mnemonic::MstC, t * bc);
        }
    }
    c
}

/// Census of the whole kernel split over `v.machine.cores` cores.
pub fn analytic_census_all(v: &Validated) -> InstructionCensus {
    let mut total = InstructionCensus::default();
    for r in partition(TileGrid::of(v).count(), v.machine.cores) {
        total.merge(&analytic_census(v, r.len()));
    }
    total
}

/// Negative control: swaps the operand registers of every multiply-accumulate
/// (`vd`/`vs2` for vector forms, `vs1`/`vs2` for matrix forms).
pub fn swap_mac_operands(program: &Program) -> Program {
    program
        .map_instructions(|insn| match insn.clone() {
            Instruction::VfmaccVf { vd, fs1, vs2 } => Instruction::VfmaccVf { vd: vs2, fs1, vs2: vd },
            Instruction::VmaccVx { vd, rs1, vs2 } => Instruction::VmaccVx { vd: vs2, rs1, vs2: vd },
            Instruction::Mxfmacc { vd, vs1, vs2 } => Instruction::Mxfmacc { vd, vs1: vs2, vs2: vs1 },
            Instruction::Mxmacc { vd, vs1, vs2 } => Instruction::Mxmacc { vd, vs1: vs2, vs2: vs1 },
            other => other,
        })
        .expect("labels unchanged")
}
