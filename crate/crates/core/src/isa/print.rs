use std::fmt;

use super::{FReg, Instruction, Program, Sew, TileLen, VReg, XReg};

pub(super) const X_ABI: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "s2",
    "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
];

pub(super) const F_ABI: [&str; 32] = [
    "ft0", "ft1", "ft2", "ft3", "ft4", "ft5", "ft6", "ft7", "fs0", "fs1", "fa0", "fa1", "fa2", "fa3", "fa4", "fa5",
    "fa6", "fa7", "fs2", "fs3", "fs4", "fs5", "fs6", "fs7", "fs8", "fs9", "fs10", "fs11", "ft8", "ft9", "ft10", "ft11",
];

impl fmt::Display for XReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(X_ABI[self.0 as usize])
    }
}

impl fmt::Display for FReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(F_ABI[self.0 as usize])
    }
}

impl fmt::Display for VReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for Sew {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.bits())
    }
}

impl fmt::Display for TileLen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TileLen::Imm(v) => write!(f, "{v}"),
            TileLen::Reg(r) => write!(f, "{r}"),
        }
    }
}

struct Mem(XReg, i64);

impl fmt::Display for Mem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.1 == 0 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}({})", self.1, self.0)
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Instruction::*;
        let m = self.mnemonic().as_str();
        match self {
            Li { rd, imm } => write!(f, "{m} {rd}, {imm}"),
            Add { rd, rs1, rs2 } => write!(f, "{m} {rd}, {rs1}, {rs2}"),
            Addi { rd, rs1, imm } => write!(f, "{m} {rd}, {rs1}, {imm}"),
            Fld { fd, base, offset } | Flw { fd, base, offset } => write!(f, "{m} {fd}, {}", Mem(*base, *offset)),
            Lw { rd, base, offset } => write!(f, "{m} {rd}, {}", Mem(*base, *offset)),
            Blt { rs1, rs2, target } | Bne { rs1, rs2, target } => write!(f, "{m} {rs1}, {rs2}, {target}"),
            J { target } => write!(f, "{m} {target}"),
            Vsetvli { rd, avl, sew, lmul } => write!(f, "{m} {rd}, {avl}, {sew}, m{lmul}"),
            Vle { vd, base } => write!(f, "{m} {vd}, ({base})"),
            Vse { vs3, base } => write!(f, "{m} {vs3}, ({base})"),
            Vlse { vd, base, stride } => write!(f, "{m} {vd}, ({base}), {stride}"),
            VfmaccVf { vd, fs1, vs2 } => write!(f, "{m} {vd}, {fs1}, {vs2}"),
            VmaccVx { vd, rs1, vs2 } => write!(f, "{m} {vd}, {rs1}, {vs2}"),
            VmvZero { vd } => write!(f, "{m} {vd}, 0"),
            MsetTile { rd, len, .. } => write!(f, "{m} {rd}, {len}"),
            MldA { vd, base, stride } | MldB { vd, base, stride } => write!(f, "{m} {vd}, ({base}), {stride}"),
            MstC { vs3, base, stride } => write!(f, "{m} {vs3}, ({base}), {stride}"),
            Mxfmacc { vd, vs1, vs2 } | Mxmacc { vd, vs1, vs2 } => write!(f, "{m} {vd}, {vs1}, {vs2}"),
        }
    }
}

/// Assembly text that [`super::parse_assembly`] reads back unchanged.
impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(e) = self.element {
            writeln!(f, ".element {e}")?;
        }
        let mut by_pos: Vec<(usize, &str)> = self.labels.iter().map(|(n, &p)| (p, n.as_str())).collect();
        by_pos.sort();
        let mut labels = by_pos.into_iter().peekable();
        for (pc, insn) in self.insns.iter().enumerate() {
            while let Some((_, name)) = labels.next_if(|(p, _)| *p == pc) {
                writeln!(f, "{name}:")?;
            }
            writeln!(f, "    {insn}")?;
        }
        for (_, name) in labels {
            writeln!(f, "{name}:")?;
        }
        Ok(())
    }
}
