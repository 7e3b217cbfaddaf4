//! Instruction set: a small RVV-style vector subset, the matrix extension
//! (`msettile[m,n,k]`, `mld.[a,b]`, `mst.c`, `mx[f]macc`) and enough scalar
//! instructions to write self-contained loop nests.

mod parse;
mod print;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Dim, ElementType, MachineConfig};

pub use parse::parse_assembly;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct XReg(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FReg(pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VReg(pub u8);

impl XReg {
    pub const ZERO: XReg = XReg(0);
}

/// Selected element width of `vsetvli`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sew {
    E32,
    E64,
}

impl Sew {
    pub fn bits(self) -> usize {
        match self {
            Sew::E32 => 32,
            Sew::E64 => 64,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() / 8
    }

    pub fn of(element: ElementType) -> Sew {
        match element.width_bytes() {
            8 => Sew::E64,
            _ => Sew::E32,
        }
    }
}

/// Requested sub-tile length: an immediate or a scalar register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TileLen {
    Imm(u64),
    Reg(XReg),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instruction {
    Li {
        rd: XReg,
        imm: i64,
    },
    Add {
        rd: XReg,
        rs1: XReg,
        rs2: XReg,
    },
    Addi {
        rd: XReg,
        rs1: XReg,
        imm: i64,
    },
    Fld {
        fd: FReg,
        base: XReg,
        offset: i64,
    },
    Flw {
        fd: FReg,
        base: XReg,
        offset: i64,
    },
    Lw {
        rd: XReg,
        base: XReg,
        offset: i64,
    },
    Blt {
        rs1: XReg,
        rs2: XReg,
        target: String,
    },
    Bne {
        rs1: XReg,
        rs2: XReg,
        target: String,
    },
    J {
        target: String,
    },

    Vsetvli {
        rd: XReg,
        avl: XReg,
        sew: Sew,
        lmul: u8,
    },
    Vle {
        vd: VReg,
        base: XReg,
    },
    Vse {
        vs3: VReg,
        base: XReg,
    },
    Vlse {
        vd: VReg,
        base: XReg,
        stride: XReg,
    },
    VfmaccVf {
        vd: VReg,
        fs1: FReg,
        vs2: VReg,
    },
    VmaccVx {
        vd: VReg,
        rs1: XReg,
        vs2: VReg,
    },
    /// `vmv.v.i vd, 0`
    VmvZero {
        vd: VReg,
    },

    MsetTile {
        dim: Dim,
        rd: XReg,
        len: TileLen,
    },
    MldA {
        vd: VReg,
        base: XReg,
        stride: XReg,
    },
    MldB {
        vd: VReg,
        base: XReg,
        stride: XReg,
    },
    MstC {
        vs3: VReg,
        base: XReg,
        stride: XReg,
    },
    Mxfmacc {
        vd: VReg,
        vs1: VReg,
        vs2: VReg,
    },
    Mxmacc {
        vd: VReg,
        vs1: VReg,
        vs2: VReg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mnemonic {
    #[serde(rename = "li")]
    Li,
    #[serde(rename = "add")]
    Add,
    #[serde(rename = "addi")]
    Addi,
    #[serde(rename = "fld")]
    Fld,
    #[serde(rename = "flw")]
    Flw,
    #[serde(rename = "lw")]
    Lw,
    #[serde(rename = "blt")]
    Blt,
    #[serde(rename = "bne")]
    Bne,
    #[serde(rename = "j")]
    J,
    #[serde(rename = "vsetvli")]
    Vsetvli,
    #[serde(rename = "vle.v")]
    Vle,
    #[serde(rename = "vse.v")]
    Vse,
    #[serde(rename = "vlse.v")]
    Vlse,
    #[serde(rename = "vfmacc.vf")]
    VfmaccVf,
    #[serde(rename = "vmacc.vx")]
    VmaccVx,
    #[serde(rename = "vmv.v.i")]
    VmvZero,
    #[serde(rename = "msettilem")]
    MsetTileM,
    #[serde(rename = "msettilen")]
    MsetTileN,
    #[serde(rename = "msettilek")]
    MsetTileK,
    #[serde(rename = "mld.a")]
    MldA,
    #[serde(rename = "mld.b")]
    MldB,
    #[serde(rename = "mst.c")]
    MstC,
    #[serde(rename = "mxfmacc")]
    Mxfmacc,
    #[serde(rename = "mxmacc")]
    Mxmacc,
}

impl Mnemonic {
    pub const ALL: [Mnemonic; 24] = [
        Mnemonic::Li,
        Mnemonic::Add,
        Mnemonic::Addi,
        Mnemonic::Fld,
        Mnemonic::Flw,
        Mnemonic::Lw,
        Mnemonic::Blt,
        Mnemonic::Bne,
        Mnemonic::J,
        Mnemonic::Vsetvli,
        Mnemonic::Vle,
        Mnemonic::Vse,
        Mnemonic::Vlse,
        Mnemonic::VfmaccVf,
        Mnemonic::VmaccVx,
        Mnemonic::VmvZero,
        Mnemonic::MsetTileM,
        Mnemonic::MsetTileN,
        Mnemonic::MsetTileK,
        Mnemonic::MldA,
        Mnemonic::MldB,
        Mnemonic::MstC,
        Mnemonic::Mxfmacc,
        Mnemonic::Mxmacc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mnemonic::Li => "li",
            Mnemonic::Add => "add",
            Mnemonic::Addi => "addi",
            Mnemonic::Fld => "fld",
            Mnemonic::Flw => "flw",
            Mnemonic::Lw => "lw",
            Mnemonic::Blt => "blt",
            Mnemonic::Bne => "bne",
            Mnemonic::J => "j",
            Mnemonic::Vsetvli => "vsetvli",
            Mnemonic::Vle => "vle.v",
            Mnemonic::Vse => "vse.v",
            Mnemonic::Vlse => "vlse.v",
            Mnemonic::VfmaccVf => "vfmacc.vf",
            Mnemonic::VmaccVx => "vmacc.vx",
            Mnemonic::VmvZero => "vmv.v.i",
            Mnemonic::MsetTileM => "msettilem",
            Mnemonic::MsetTileN => "msettilen",
            Mnemonic::MsetTileK => "msettilek",
            Mnemonic::MldA => "mld.a",
            Mnemonic::MldB => "mld.b",
            Mnemonic::MstC => "mst.c",
            Mnemonic::Mxfmacc => "mxfmacc",
            Mnemonic::Mxmacc => "mxmacc",
        }
    }

    pub fn from_name(name: &str) -> Option<Mnemonic> {
        Mnemonic::ALL.into_iter().find(|m| m.as_str() == name)
    }

    /// Number of comma-separated operands in the assembly form.
    pub fn arity(self) -> usize {
        match self {
            Mnemonic::J => 1,
            Mnemonic::Li
            | Mnemonic::Fld
            | Mnemonic::Flw
            | Mnemonic::Lw
            | Mnemonic::Vle
            | Mnemonic::Vse
            | Mnemonic::VmvZero
            | Mnemonic::MsetTileM
            | Mnemonic::MsetTileN
            | Mnemonic::MsetTileK => 2,
            Mnemonic::Vsetvli => 4,
            _ => 3,
        }
    }

    pub fn class(self) -> InsnClass {
        use Mnemonic::*;
        match self {
            Li | Add | Addi | Fld | Flw | Lw | Blt | Bne | J => InsnClass::Scalar,
            Vsetvli => InsnClass::VectorConfig,
            Vle | Vse | Vlse => InsnClass::VectorMemory,
            VfmaccVf | VmaccVx => InsnClass::VectorCompute,
            VmvZero => InsnClass::VectorMove,
            MsetTileM | MsetTileN | MsetTileK => InsnClass::MatrixConfig,
            MldA | MldB | MstC => InsnClass::MatrixMemory,
            Mxfmacc | Mxmacc => InsnClass::MatrixCompute,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InsnClass {
    Scalar,
    VectorConfig,
    VectorMemory,
    VectorCompute,
    VectorMove,
    MatrixConfig,
    MatrixMemory,
    MatrixCompute,
}

impl InsnClass {
    /// Executed by the vector unit (everything but the scalar subset).
    pub fn is_vector_unit(self) -> bool {
        self != InsnClass::Scalar
    }

    pub fn is_computational(self) -> bool {
        matches!(self, InsnClass::VectorCompute | InsnClass::MatrixCompute)
    }

    pub fn is_memory(self) -> bool {
        matches!(self, InsnClass::VectorMemory | InsnClass::MatrixMemory)
    }
}

impl Instruction {
    pub fn mnemonic(&self) -> Mnemonic {
        use Instruction::*;
        match self {
            Li { .. } => Mnemonic::Li,
            Add { .. } => Mnemonic::Add,
            Addi { .. } => Mnemonic::Addi,
            Fld { .. } => Mnemonic::Fld,
            Flw { .. } => Mnemonic::Flw,
            Lw { .. } => Mnemonic::Lw,
            Blt { .. } => Mnemonic::Blt,
            Bne { .. } => Mnemonic::Bne,
            J { .. } => Mnemonic::J,
            Vsetvli { .. } => Mnemonic::Vsetvli,
            Vle { .. } => Mnemonic::Vle,
            Vse { .. } => Mnemonic::Vse,
            Vlse { .. } => Mnemonic::Vlse,
            VfmaccVf { .. } => Mnemonic::VfmaccVf,
            VmaccVx { .. } => Mnemonic::VmaccVx,
            VmvZero { .. } => Mnemonic::VmvZero,
            MsetTile { dim: Dim::M, .. } => Mnemonic::MsetTileM,
            MsetTile { dim: Dim::N, .. } => Mnemonic::MsetTileN,
            MsetTile { dim: Dim::K, .. } => Mnemonic::MsetTileK,
            MldA { .. } => Mnemonic::MldA,
            MldB { .. } => Mnemonic::MldB,
            MstC { .. } => Mnemonic::MstC,
            Mxfmacc { .. } => Mnemonic::Mxfmacc,
            Mxmacc { .. } => Mnemonic::Mxmacc,
        }
    }

    pub fn class(&self) -> InsnClass {
        self.mnemonic().class()
    }

    pub fn branch_target(&self) -> Option<&str> {
        match self {
            Instruction::Blt { target, .. } | Instruction::Bne { target, .. } | Instruction::J { target } => {
                Some(target)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("unresolved label `{0}`")]
    UnresolvedLabel(String),
    #[error("label `{0}` points past the end of the program")]
    LabelOutOfRange(String),
}

/// An assembled instruction sequence with resolved branch targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    insns: Vec<Instruction>,
    labels: BTreeMap<String, usize>,
    element: Option<ElementType>,
    targets: Vec<usize>,
}

impl Program {
    /// Labels map to the index of the instruction they precede; a label
    /// equal to `insns.len()` marks the end of the program.
    pub fn new(
        insns: Vec<Instruction>,
        labels: BTreeMap<String, usize>,
        element: Option<ElementType>,
    ) -> Result<Program, ProgramError> {
        if let Some((name, _)) = labels.iter().find(|(_, &at)| at > insns.len()) {
            return Err(ProgramError::LabelOutOfRange(name.clone()));
        }
        let targets = insns
            .iter()
            .map(|insn| match insn.branch_target() {
                Some(t) => labels.get(t).copied().ok_or_else(|| ProgramError::UnresolvedLabel(t.to_string())),
                None => Ok(usize::MAX),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Program { insns, labels, element, targets })
    }

    pub fn empty() -> Program {
        Program { insns: Vec::new(), labels: BTreeMap::new(), element: None, targets: Vec::new() }
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.insns
    }

    pub fn labels(&self) -> &BTreeMap<String, usize> {
        &self.labels
    }

    pub fn element(&self) -> Option<ElementType> {
        self.element
    }

    pub fn len(&self) -> usize {
        self.insns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insns.is_empty()
    }

    /// Resolved jump target of the branch at `pc`.
    pub fn target(&self, pc: usize) -> usize {
        self.targets[pc]
    }

    /// Applies `f` to every instruction and rebuilds the program.
    pub fn map_instructions(&self, f: impl FnMut(&Instruction) -> Instruction) -> Result<Program, ProgramError> {
        Program::new(self.insns.iter().map(f).collect(), self.labels.clone(), self.element)
    }
}

/// Sets up incremental construction of a [`Program`] with labels.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    insns: Vec<Instruction>,
    labels: BTreeMap<String, usize>,
    element: Option<ElementType>,
}

impl ProgramBuilder {
    pub fn new(element: Option<ElementType>) -> Self {
        Self { element, ..Self::default() }
    }

    pub fn push(&mut self, insn: Instruction) -> &mut Self {
        self.insns.push(insn);
        self
    }

    pub fn label(&mut self, name: impl Into<String>) -> &mut Self {
        self.labels.insert(name.into(), self.insns.len());
        self
    }

    pub fn build(self) -> Result<Program, ProgramError> {
        Program::new(self.insns, self.labels, self.element)
    }
}

/// Matrix-extension control registers: the granted sub-tile sizes.
/// Zero means the dimension has not been configured yet.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MxCsrState {
    pub tile_m: usize,
    pub tile_n: usize,
    pub tile_k: usize,
}

impl MxCsrState {
    pub fn is_set(&self) -> bool {
        self.tile_m > 0 && self.tile_n > 0 && self.tile_k > 0
    }

    pub fn set(&mut self, dim: Dim, value: usize) {
        match dim {
            Dim::M => self.tile_m = value,
            Dim::N => self.tile_n = value,
            Dim::K => self.tile_k = value,
        }
    }
}

/// Sub-tile length granted for a request, `vsetvl`-style: the largest
/// supported value not above the request. Strict machines support {4, 8}
/// and never grant less than 4; relaxed ones grant any power of two.
pub fn grant_tile_dim(requested: u64, cfg: &MachineConfig) -> usize {
    let requested = requested.max(1);
    if cfg.strict_subtile_sizes {
        if requested >= 8 {
            8
        } else {
            4
        }
    } else {
        let cap = cfg.vlmax() as u64;
        let r = requested.min(cap.max(1));
        1usize << (63 - r.leading_zeros())
    }
}
