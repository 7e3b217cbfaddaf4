//! Functional interpreter with exact per-boundary transfer accounting and a
//! coarse occupancy timing model.

pub(crate) mod lane;
mod memory;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::config::MachineConfig;
use crate::isa::{FReg, InsnClass, Instruction, Mnemonic, MxCsrState, Program, Sew, TileLen, VReg, XReg};
use crate::ledger::TransferLedger;

use lane::Lane;
pub use memory::Memory;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimErrorKind {
    #[error("access to {addr:#x} is out of bounds")]
    OutOfBoundsAccess { addr: i64 },
    #[error("access to {addr:#x} is misaligned")]
    MisalignedAccess { addr: i64 },
    #[error("store row stride {stride} B is smaller than the {row_bytes} B row")]
    OverlappingStore { stride: i64, row_bytes: usize },
    #[error("vector length not configured")]
    VlUnset,
    #[error("matrix tile sizes not configured")]
    CsrUnset,
    #[error("vl = {vl} but the sub-tile needs m'·k' = {expected}")]
    VlMismatch { vl: usize, expected: usize },
    #[error("accumulator sub-tile needs {needed} B, buffer holds {available} B")]
    BufferOverflow { needed: usize, available: usize },
    #[error("register group v{reg} of {regs} registers is misaligned or out of range")]
    BadRegisterGroup { reg: u8, regs: usize },
    #[error("LMUL {lmul} exceeds the machine limit {max}")]
    LmulTooLarge { lmul: u8, max: usize },
    #[error("step limit of {0} instructions reached")]
    StepLimit(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at pc {pc} (step {step}): {kind}")]
pub struct SimError {
    pub pc: usize,
    pub step: u64,
    pub kind: SimErrorKind,
}

/// Dynamic instruction counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct InstructionCensus {
    pub total: u64,
    pub scalar: u64,
    /// Everything issued to the vector unit, matrix instructions included.
    pub vector: u64,
    pub computational: u64,
    pub memory: u64,
    pub config: u64,
    pub by_mnemonic: BTreeMap<Mnemonic, u64>,
}

impl InstructionCensus {
    pub fn count(&self, m: Mnemonic) -> u64 {
        self.by_mnemonic.get(&m).copied().unwrap_or(0)
    }

    pub fn add(&mut self, m: Mnemonic, n: u64) {
        if n == 0 {
            return;
        }
        self.total += n;
        let class = m.class();
        if class == InsnClass::Scalar {
            self.scalar += n;
        } else {
            self.vector += n;
        }
        if class.is_computational() {
            self.computational += n;
        }
        if class.is_memory() {
            self.memory += n;
        }
        if matches!(class, InsnClass::VectorConfig | InsnClass::MatrixConfig) {
            self.config += n;
        }
        *self.by_mnemonic.entry(m).or_default() += n;
    }

    pub fn merge(&mut self, other: &InstructionCensus) {
        for (&m, &n) in &other.by_mnemonic {
            self.add(m, n);
        }
    }
}

/// Cycle buckets of the occupancy model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Timing {
    pub compute: u64,
    /// Memory cycles that may hide behind compute.
    pub overlappable: u64,
    /// Tile start-up loads and drain stores that never overlap.
    pub exposed: u64,
    pub other: u64,
}

impl Timing {
    pub fn total(&self, overlap: f64) -> u64 {
        let hidden_budget = self.overlappable.saturating_sub(self.compute) as f64;
        let mem = (1.0 - overlap) * self.overlappable as f64 + overlap * hidden_budget;
        self.compute + self.other + self.exposed + mem.round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Loading,
    Computing,
    Storing,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Counters {
    pub ledger: TransferLedger,
    pub census: InstructionCensus,
    pub macs: u64,
    pub timing: Timing,
    pub buffer_peak_bytes: usize,
}

/// Summary of one run, or of several cores merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub ledgers: TransferLedger,
    pub macs: u64,
    pub insns: InstructionCensus,
    pub cycles: u64,
    pub utilization: f64,
    /// MACs per computational instruction.
    pub simd_ratio_comp: f64,
    /// FLOP (two per MAC) per vector-unit instruction of any kind.
    pub simd_ratio_all: f64,
    pub buffer_peak_bytes: usize,
    pub cores: usize,
}

impl RunReport {
    pub fn from_counters(c: &Counters, cfg: &MachineConfig) -> RunReport {
        Self::assemble(c, c.timing.total(cfg.overlap), 1, cfg.fpus)
    }

    fn assemble(c: &Counters, cycles: u64, cores: usize, fpus: usize) -> RunReport {
        let ratio = |num: f64, den: u64| if den == 0 { 0.0 } else { num / den as f64 };
        RunReport {
            ledgers: c.ledger,
            macs: c.macs,
            insns: c.census.clone(),
            cycles,
            utilization: ratio(c.macs as f64 / (fpus * cores) as f64, cycles),
            simd_ratio_comp: ratio(c.macs as f64, c.census.computational),
            simd_ratio_all: ratio(2.0 * c.macs as f64, c.census.vector),
            buffer_peak_bytes: c.buffer_peak_bytes,
            cores,
        }
    }

    /// Combines per-core reports: counters add up, cycles are the slowest core.
    pub fn combine(parts: &[(Counters, u64)], cores: usize, fpus: usize) -> RunReport {
        let mut total = Counters::default();
        let mut cycles = 0;
        for (c, cyc) in parts {
            total.ledger += c.ledger;
            total.census.merge(&c.census);
            total.macs += c.macs;
            total.buffer_peak_bytes = total.buffer_peak_bytes.max(c.buffer_peak_bytes);
            cycles = cycles.max(*cyc);
        }
        Self::assemble(&total, cycles, cores.max(1), fpus)
    }
}

#[derive(Debug, Clone, Copy)]
struct VectorCsrs {
    vl: Option<usize>,
    sew: Sew,
    lmul: u8,
}

/// Near-FPU accumulator buffer holding at most one output sub-tile.
#[derive(Debug, Clone, Default)]
struct TileBuffer {
    resident: Option<VReg>,
    elems: usize,
    width: usize,
    data: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixOperand {
    A,
    B,
}

enum Flow {
    Next,
    Jump,
}

#[derive(Debug, Clone)]
pub struct MachineState {
    pub memory: Memory,
    cfg: MachineConfig,
    x: [i64; 32],
    f: [u64; 32],
    vrf: Vec<u8>,
    vcsr: VectorCsrs,
    mx: MxCsrState,
    buffer: TileBuffer,
    broadcast: u64,
    phase: Phase,
    pending_store: u64,
    counters: Counters,
}

impl MachineState {
    pub fn new(cfg: MachineConfig, memory: Memory) -> Self {
        Self {
            memory,
            vrf: vec![0; cfg.num_vregs * cfg.vlenb()],
            cfg,
            x: [0; 32],
            f: [0; 32],
            vcsr: VectorCsrs { vl: None, sew: Sew::E64, lmul: 1 },
            mx: MxCsrState::default(),
            buffer: TileBuffer::default(),
            broadcast: 0,
            phase: Phase::Idle,
            pending_store: 0,
            counters: Counters::default(),
        }
    }

    pub fn config(&self) -> &MachineConfig {
        &self.cfg
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn mx_csrs(&self) -> MxCsrState {
        self.mx
    }

    pub fn vl(&self) -> Option<usize> {
        self.vcsr.vl
    }

    pub fn x(&self, r: XReg) -> i64 {
        self.x[r.0 as usize]
    }

    pub fn set_x(&mut self, r: XReg, v: i64) {
        if r.0 != 0 {
            self.x[r.0 as usize] = v;
        }
    }

    pub fn f_bits(&self, r: FReg) -> u64 {
        self.f[r.0 as usize]
    }

    pub fn set_f_bits(&mut self, r: FReg, bits: u64) {
        self.f[r.0 as usize] = bits;
    }

    /// The last A element routed through the broadcast register.
    pub fn broadcast_bits(&self) -> u64 {
        self.broadcast
    }

    /// Reads `count` elements of `width` bytes starting at register `v`.
    pub fn vreg_elements(&self, v: VReg, count: usize, width: usize) -> Vec<u64> {
        (0..count).map(|i| self.vrf_get(v, i, width)).collect()
    }

    pub fn set_vreg_elements(&mut self, v: VReg, width: usize, values: &[u64]) {
        for (i, &bits) in values.iter().enumerate() {
            self.vrf_set(v, i, width, bits);
        }
    }

    /// Runs `program` to completion from pc 0.
    pub fn run(&mut self, program: &Program) -> Result<RunReport, SimError> {
        let mut pc = 0;
        let mut step = 0u64;
        while pc < program.len() {
            if step >= self.cfg.max_steps {
                return Err(SimError { pc, step, kind: SimErrorKind::StepLimit(self.cfg.max_steps) });
            }
            let insn = &program.instructions()[pc];
            match self.step(insn) {
                Ok(Flow::Next) => pc += 1,
                Ok(Flow::Jump) => pc = program.target(pc),
                Err(kind) => return Err(SimError { pc, step, kind }),
            }
            step += 1;
        }
        self.finish();
        Ok(RunReport::from_counters(&self.counters, &self.cfg))
    }

    /// Writes back a resident accumulator and closes any open store phase.
    pub fn finish(&mut self) {
        self.flush_buffer();
        self.close_store_phase();
    }

    fn step(&mut self, insn: &Instruction) -> Result<Flow, SimErrorKind> {
        use Instruction as I;
        let class = insn.class();
        let keeps_buffer =
            matches!(insn, Instruction::MldA { .. } | Instruction::MldB { .. }) || class == InsnClass::MatrixCompute;
        if class.is_vector_unit() && !keeps_buffer {
            self.flush_buffer();
        }
        let mut flow = Flow::Next;
        match insn {
            I::Li { rd, imm } => self.set_x(*rd, *imm),
            I::Add { rd, rs1, rs2 } => self.set_x(*rd, self.x(*rs1).wrapping_add(self.x(*rs2))),
            I::Addi { rd, rs1, imm } => self.set_x(*rd, self.x(*rs1).wrapping_add(*imm)),
            I::Fld { fd, base, offset } => {
                let bits = self.memory.read(self.x(*base) + offset, 8)?;
                self.f[fd.0 as usize] = bits;
                self.counters.ledger.mem_vrf.a_down += 1;
            }
            I::Flw { fd, base, offset } => {
                let bits = self.memory.read(self.x(*base) + offset, 4)?;
                self.f[fd.0 as usize] = bits;
                self.counters.ledger.mem_vrf.a_down += 1;
            }
            I::Lw { rd, base, offset } => {
                let bits = self.memory.read(self.x(*base) + offset, 4)?;
                self.set_x(*rd, bits as u32 as i32 as i64);
                self.counters.ledger.mem_vrf.a_down += 1;
            }
            I::Blt { rs1, rs2, .. } => {
                if self.x(*rs1) < self.x(*rs2) {
                    flow = Flow::Jump;
                }
            }
            I::Bne { rs1, rs2, .. } => {
                if self.x(*rs1) != self.x(*rs2) {
                    flow = Flow::Jump;
                }
            }
            I::J { .. } => flow = Flow::Jump,
            I::Vsetvli { rd, avl, sew, lmul } => {
                if *lmul as usize > self.cfg.lmul_max {
                    return Err(SimErrorKind::LmulTooLarge { lmul: *lmul, max: self.cfg.lmul_max });
                }
                let vlmax = *lmul as usize * self.cfg.vlenb() / sew.bytes();
                let vl = (self.x(*avl).max(0) as usize).min(vlmax);
                self.vcsr = VectorCsrs { vl: Some(vl), sew: *sew, lmul: *lmul };
                self.set_x(*rd, vl as i64);
                self.counters.timing.other += 1;
            }
            I::Vle { vd, base } => {
                let vl = self.vl_checked()?;
                self.vector_load(*vd, self.x(*base), self.vcsr.sew.bytes() as i64, vl)?;
            }
            I::Vlse { vd, base, stride } => {
                let vl = self.vl_checked()?;
                self.vector_load(*vd, self.x(*base), self.x(*stride), vl)?;
            }
            I::Vse { vs3, base } => self.exec_vse(*vs3, self.x(*base))?,
            I::VfmaccVf { vd, fs1, vs2 } => {
                let scalar = self.f[fs1.0 as usize];
                match self.vcsr.sew {
                    Sew::E64 => self.vector_mac::<f64>(*vd, scalar, *vs2)?,
                    Sew::E32 => self.vector_mac::<f32>(*vd, scalar, *vs2)?,
                }
            }
            I::VmaccVx { vd, rs1, vs2 } => {
                let scalar = self.x(*rs1) as u64;
                match self.vcsr.sew {
                    Sew::E64 => self.vector_mac::<i64>(*vd, scalar, *vs2)?,
                    Sew::E32 => self.vector_mac::<i32>(*vd, scalar, *vs2)?,
                }
            }
            I::VmvZero { vd } => {
                let vl = self.vl_checked()?;
                self.check_group(*vd, self.vcsr.lmul as usize)?;
                let w = self.vcsr.sew.bytes();
                for i in 0..vl {
                    self.vrf_set(*vd, i, w, 0);
                }
                self.counters.timing.other += vl.div_ceil(self.cfg.fpus) as u64;
            }
            I::MsetTile { dim, rd, len } => {
                let requested = match len {
                    TileLen::Imm(v) => *v,
                    TileLen::Reg(r) => self.x(*r).max(0) as u64,
                };
                let granted = crate::isa::grant_tile_dim(requested, &self.cfg);
                self.mx.set(*dim, granted);
                self.set_x(*rd, granted as i64);
                self.counters.timing.other += 1;
            }
            I::MldA { vd, base, stride } => self.exec_mld(MatrixOperand::A, *vd, self.x(*base), self.x(*stride))?,
            I::MldB { vd, base, stride } => self.exec_mld(MatrixOperand::B, *vd, self.x(*base), self.x(*stride))?,
            I::MstC { vs3, base, stride } => self.exec_mst_c(*vs3, self.x(*base), self.x(*stride))?,
            I::Mxfmacc { vd, vs1, vs2 } => self.exec_mxfmacc(*vd, *vs1, *vs2, true)?,
            I::Mxmacc { vd, vs1, vs2 } => self.exec_mxfmacc(*vd, *vs1, *vs2, false)?,
        }
        self.counters.census.add(insn.mnemonic(), 1);
        Ok(flow)
    }

    fn vl_checked(&self) -> Result<usize, SimErrorKind> {
        self.vcsr.vl.ok_or(SimErrorKind::VlUnset)
    }

    fn check_group(&self, v: VReg, regs: usize) -> Result<(), SimErrorKind> {
        let r = v.0 as usize;
        if !r.is_multiple_of(regs) || r + regs > self.cfg.num_vregs {
            return Err(SimErrorKind::BadRegisterGroup { reg: v.0, regs });
        }
        Ok(())
    }

    fn vrf_offset(&self, v: VReg, idx: usize, width: usize) -> usize {
        v.0 as usize * self.cfg.vlenb() + idx * width
    }

    fn vrf_get(&self, v: VReg, idx: usize, width: usize) -> u64 {
        let o = self.vrf_offset(v, idx, width);
        match width {
            8 => u64::from_le_bytes(self.vrf[o..o + 8].try_into().unwrap()),
            _ => u32::from_le_bytes(self.vrf[o..o + 4].try_into().unwrap()) as u64,
        }
    }

    fn vrf_set(&mut self, v: VReg, idx: usize, width: usize, bits: u64) {
        let o = self.vrf_offset(v, idx, width);
        match width {
            8 => self.vrf[o..o + 8].copy_from_slice(&bits.to_le_bytes()),
            _ => self.vrf[o..o + 4].copy_from_slice(&(bits as u32).to_le_bytes()),
        }
    }

    fn mem_cycles(&self, elems: usize) -> u64 {
        elems.div_ceil(self.cfg.mem_ports) as u64
    }

    fn close_store_phase(&mut self) {
        self.counters.timing.exposed += std::mem::take(&mut self.pending_store);
    }

    fn account_load(&mut self, elems: usize) {
        let cycles = self.mem_cycles(elems);
        match self.phase {
            Phase::Idle | Phase::Storing => {
                self.close_store_phase();
                self.counters.timing.exposed += cycles;
            }
            Phase::Loading | Phase::Computing => self.counters.timing.overlappable += cycles,
        }
        self.phase = Phase::Loading;
    }

    fn account_store(&mut self, elems: usize) {
        let cycles = self.mem_cycles(elems);
        self.counters.timing.overlappable += std::mem::replace(&mut self.pending_store, cycles);
        self.phase = Phase::Storing;
    }

    fn account_compute(&mut self, cycles: u64) {
        if self.phase == Phase::Storing {
            self.close_store_phase();
        }
        self.counters.timing.compute += cycles;
        self.phase = Phase::Computing;
    }

    fn vector_load(&mut self, vd: VReg, base: i64, stride: i64, vl: usize) -> Result<(), SimErrorKind> {
        self.check_group(vd, self.vcsr.lmul as usize)?;
        let w = self.vcsr.sew.bytes();
        for i in 0..vl {
            let bits = self.memory.read(base + i as i64 * stride, w)?;
            self.vrf_set(vd, i, w, bits);
        }
        self.counters.ledger.mem_vrf.b_down += vl as u64;
        self.account_load(vl);
        Ok(())
    }

    fn exec_vse(&mut self, vs: VReg, base: i64) -> Result<(), SimErrorKind> {
        let vl = self.vl_checked()?;
        self.check_group(vs, self.vcsr.lmul as usize)?;
        let w = self.vcsr.sew.bytes();
        for i in 0..vl {
            self.memory.write(base + (i * w) as i64, w, self.vrf_get(vs, i, w))?;
        }
        self.counters.ledger.mem_vrf.d_up += vl as u64;
        self.account_store(vl);
        Ok(())
    }

    /// `vd[i] += scalar · vs2[i]` for `i < vl`; the scalar is re-fetched from
    /// the scalar register file once per FPU-wide issue group.
    fn vector_mac<T: Lane>(&mut self, vd: VReg, scalar: u64, vs2: VReg) -> Result<(), SimErrorKind> {
        let vl = self.vl_checked()?;
        let lmul = self.vcsr.lmul as usize;
        self.check_group(vd, lmul)?;
        self.check_group(vs2, lmul)?;
        let s = T::from_bits(scalar);
        for i in 0..vl {
            let acc = T::from_bits(self.vrf_get(vd, i, T::BYTES));
            let b = T::from_bits(self.vrf_get(vs2, i, T::BYTES));
            self.vrf_set(vd, i, T::BYTES, T::mac(s, b, acc).to_bits());
        }
        let groups = vl.div_ceil(self.cfg.fpus) as u64;
        let ledger = &mut self.counters.ledger;
        ledger.vrf_fpu.b_down += vl as u64;
        ledger.vrf_fpu.cd_down += vl as u64;
        ledger.vrf_fpu.d_up += vl as u64;
        ledger.srf_fpu.a_down += groups;
        self.counters.macs += vl as u64;
        self.account_compute(groups);
        Ok(())
    }

    fn tile_dims(&self) -> Result<(usize, usize, usize), SimErrorKind> {
        if !self.mx.is_set() {
            return Err(SimErrorKind::CsrUnset);
        }
        Ok((self.mx.tile_m, self.mx.tile_n, self.mx.tile_k))
    }

    /// Loads an `m'×k'` (A) or `k'×n'` (B) sub-tile, one row per `row_stride`
    /// bytes, packed row-major into the register group at `vd`.
    pub fn exec_mld(&mut self, kind: MatrixOperand, vd: VReg, base: i64, row_stride: i64) -> Result<(), SimErrorKind> {
        let (m, n, k) = self.tile_dims()?;
        let (rows, cols) = match kind {
            MatrixOperand::A => (m, k),
            MatrixOperand::B => (k, n),
        };
        let w = self.vcsr.sew.bytes();
        let regs = self.cfg.group_regs_bytes(rows * cols * w);
        self.check_group(vd, regs)?;
        if let Some(res) = self.buffer.resident {
            let held = self.cfg.group_regs_bytes(self.buffer.elems * self.buffer.width);
            let (lo, hi) = (res.0 as usize, res.0 as usize + held);
            if (vd.0 as usize) < hi && lo < vd.0 as usize + regs {
                self.flush_buffer();
            }
        }
        for r in 0..rows {
            let row = base + r as i64 * row_stride;
            for c in 0..cols {
                let bits = self.memory.read(row + (c * w) as i64, w)?;
                self.vrf_set(vd, r * cols + c, w, bits);
            }
        }
        let elems = (rows * cols) as u64;
        match kind {
            MatrixOperand::A => self.counters.ledger.mem_vrf.a_down += elems,
            MatrixOperand::B => self.counters.ledger.mem_vrf.b_down += elems,
        }
        self.account_load(rows * cols);
        Ok(())
    }

    /// Stores the `m'×n'` sub-tile held at `vs` row by row.
    pub fn exec_mst_c(&mut self, vs: VReg, base: i64, row_stride: i64) -> Result<(), SimErrorKind> {
        self.flush_buffer();
        let (m, n, _) = self.tile_dims()?;
        let w = self.vcsr.sew.bytes();
        let row_bytes = n * w;
        if m > 1 && row_stride.unsigned_abs() < row_bytes as u64 {
            return Err(SimErrorKind::OverlappingStore { stride: row_stride, row_bytes });
        }
        self.check_group(vs, self.cfg.group_regs_bytes(m * n * w))?;
        for r in 0..m {
            let row = base + r as i64 * row_stride;
            for c in 0..n {
                self.memory.write(row + (c * w) as i64, w, self.vrf_get(vs, r * n + c, w))?;
            }
        }
        self.counters.ledger.mem_vrf.d_up += (m * n) as u64;
        self.account_store(m * n);
        Ok(())
    }

    /// `D[m'×n'] += A[m'×k'] · B[k'×n']` with A from `vs1`, B from `vs2` and
    /// the accumulator from `vd`, through the near-FPU buffer.
    pub fn exec_mxfmacc(&mut self, vd: VReg, vs1: VReg, vs2: VReg, float: bool) -> Result<(), SimErrorKind> {
        match (float, self.vcsr.sew) {
            (true, Sew::E64) => self.matrix_mac::<f64>(vd, vs1, vs2),
            (true, Sew::E32) => self.matrix_mac::<f32>(vd, vs1, vs2),
            (false, Sew::E64) => self.matrix_mac::<i64>(vd, vs1, vs2),
            (false, Sew::E32) => self.matrix_mac::<i32>(vd, vs1, vs2),
        }
    }

    fn matrix_mac<T: Lane>(&mut self, vd: VReg, vs1: VReg, vs2: VReg) -> Result<(), SimErrorKind> {
        let (m, n, k) = self.tile_dims()?;
        let vl = self.vl_checked()?;
        if vl != m * k {
            return Err(SimErrorKind::VlMismatch { vl, expected: m * k });
        }
        let w = T::BYTES;
        let needed = m * n * w;
        if needed > self.cfg.buffer_bytes {
            return Err(SimErrorKind::BufferOverflow { needed, available: self.cfg.buffer_bytes });
        }
        self.check_group(vs1, self.cfg.group_regs_bytes(m * k * w))?;
        self.check_group(vs2, self.cfg.group_regs_bytes(k * n * w))?;
        self.check_group(vd, self.cfg.group_regs_bytes(needed))?;

        let a: Vec<T> = (0..m * k).map(|i| T::from_bits(self.vrf_get(vs1, i, w))).collect();
        let b: Vec<T> = (0..k * n).map(|i| T::from_bits(self.vrf_get(vs2, i, w))).collect();

        let resident = self.cfg.buffer_resident_accumulation
            && self.buffer.resident == Some(vd)
            && self.buffer.elems == m * n
            && self.buffer.width == w;
        if !resident {
            self.flush_buffer();
            let data: Vec<u64> = (0..m * n).map(|i| self.vrf_get(vd, i, w)).collect();
            self.buffer.data = data;
            self.buffer.elems = m * n;
            self.buffer.width = w;
            self.counters.ledger.vrf_buf.cd_down += (m * n) as u64;
        }
        self.counters.buffer_peak_bytes = self.counters.buffer_peak_bytes.max(needed);

        // p innermost, then j, then i
        for i in 0..m {
            for j in 0..n {
                let slot = &mut self.buffer.data[i * n + j];
                let mut acc = T::from_bits(*slot);
                for p in 0..k {
                    acc = T::mac(a[i * k + p], b[p * n + j], acc);
                }
                *slot = acc.to_bits();
            }
        }
        self.broadcast = a[m * k - 1].to_bits();

        if self.cfg.buffer_resident_accumulation {
            self.buffer.resident = Some(vd);
        } else {
            self.buffer.resident = Some(vd);
            self.flush_buffer();
        }

        let f = self.cfg.fpus;
        let ledger = &mut self.counters.ledger;
        ledger.vrf_buf.a_down += (m * k) as u64;
        ledger.vrf_buf.b_down += (k * n) as u64;
        ledger.buf_fpu.a_down += (m * k * n.div_ceil(f)) as u64;
        ledger.buf_fpu.b_down += (k * n * m.div_ceil(f)) as u64;
        let macs = (m * n * k) as u64;
        ledger.buf_fpu.cd_down += macs;
        ledger.buf_fpu.d_up += macs;
        self.counters.macs += macs;
        self.account_compute(macs.div_ceil(f as u64));
        Ok(())
    }

    fn flush_buffer(&mut self) {
        if let Some(vd) = self.buffer.resident.take() {
            let w = self.buffer.width;
            for i in 0..self.buffer.elems {
                let bits = self.buffer.data[i];
                self.vrf_set(vd, i, w, bits);
            }
            self.counters.ledger.vrf_buf.d_up += self.buffer.elems as u64;
        }
    }
}

impl MachineConfig {
    /// Register-group size (a power of two) needed for `bytes` bytes.
    pub fn group_regs_bytes(&self, bytes: usize) -> usize {
        bytes.div_ceil(self.vlenb()).max(1).next_power_of_two()
    }
}
