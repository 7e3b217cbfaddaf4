//! Line-oriented assembler: `mnemonic op1, op2, ...`, `off(reg)` memory
//! operands, `#` comments, `label:` definitions and an optional
//! `.element <type>` directive.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::print::{F_ABI, X_ABI};
use super::{FReg, Instruction, Mnemonic, Program, ProgramError, Sew, TileLen, VReg, XReg};
use crate::config::{Dim, ElementType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("`{mnemonic}` takes {expected} operands, found {found}")]
    ArityMismatch { mnemonic: String, expected: usize, found: usize },
    #[error("bad register `{0}`")]
    BadRegister(String),
    #[error("bad operand `{0}`")]
    BadOperand(String),
    #[error("unresolved label `{0}`")]
    UnresolvedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("bad directive `{0}`")]
    BadDirective(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    /// 1-based source line.
    pub line: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.kind)
    }
}

type Res<T> = Result<T, ParseErrorKind>;

fn xreg(s: &str) -> Res<XReg> {
    let idx = match s {
        "fp" => Some(8),
        _ => X_ABI.iter().position(|n| *n == s).or_else(|| numbered(s, 'x')),
    };
    idx.map(|i| XReg(i as u8)).ok_or_else(|| ParseErrorKind::BadRegister(s.into()))
}

fn freg(s: &str) -> Res<FReg> {
    F_ABI
        .iter()
        .position(|n| *n == s)
        .or_else(|| numbered(s, 'f'))
        .map(|i| FReg(i as u8))
        .ok_or_else(|| ParseErrorKind::BadRegister(s.into()))
}

fn vreg(s: &str) -> Res<VReg> {
    numbered(s, 'v').map(|i| VReg(i as u8)).ok_or_else(|| ParseErrorKind::BadRegister(s.into()))
}

fn numbered(s: &str, prefix: char) -> Option<usize> {
    let digits = s.strip_prefix(prefix)?;
    if digits.is_empty() || (digits.len() > 1 && digits.starts_with('0')) {
        return None;
    }
    digits.parse::<usize>().ok().filter(|&i| i < 32)
}

fn imm(s: &str) -> Res<i64> {
    let bad = || ParseErrorKind::BadOperand(s.into());
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = match body.strip_prefix("0x") {
        Some(hex) => i64::from_str_radix(hex, 16).map_err(|_| bad())?,
        None => body.parse::<i64>().map_err(|_| bad())?,
    };
    Ok(if neg { -v } else { v })
}

/// `(reg)` or `off(reg)`.
fn mem(s: &str) -> Res<(XReg, i64)> {
    let bad = || ParseErrorKind::BadOperand(s.into());
    let open = s.find('(').ok_or_else(bad)?;
    let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
    let offset = if open == 0 { 0 } else { imm(s[..open].trim())? };
    Ok((xreg(inner.trim())?, offset))
}

fn plain_mem(s: &str) -> Res<XReg> {
    match mem(s)? {
        (r, 0) => Ok(r),
        _ => Err(ParseErrorKind::BadOperand(s.into())),
    }
}

fn label_name(s: &str) -> Res<String> {
    if is_label(s) {
        Ok(s.to_string())
    } else {
        Err(ParseErrorKind::BadOperand(s.into()))
    }
}

fn is_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn sew(s: &str) -> Res<Sew> {
    match s {
        "e32" => Ok(Sew::E32),
        "e64" => Ok(Sew::E64),
        _ => Err(ParseErrorKind::BadOperand(s.into())),
    }
}

fn lmul(s: &str) -> Res<u8> {
    match s {
        "m1" => Ok(1),
        "m2" => Ok(2),
        "m4" => Ok(4),
        "m8" => Ok(8),
        _ => Err(ParseErrorKind::BadOperand(s.into())),
    }
}

fn tile_len(s: &str) -> Res<TileLen> {
    match imm(s) {
        Ok(v) if v >= 0 => Ok(TileLen::Imm(v as u64)),
        Ok(_) => Err(ParseErrorKind::BadOperand(s.into())),
        Err(_) => xreg(s).map(TileLen::Reg),
    }
}

fn instruction(m: Mnemonic, ops: &[&str]) -> Res<Instruction> {
    use Instruction as I;
    Ok(match m {
        Mnemonic::Li => I::Li { rd: xreg(ops[0])?, imm: imm(ops[1])? },
        Mnemonic::Add => I::Add { rd: xreg(ops[0])?, rs1: xreg(ops[1])?, rs2: xreg(ops[2])? },
        Mnemonic::Addi => I::Addi { rd: xreg(ops[0])?, rs1: xreg(ops[1])?, imm: imm(ops[2])? },
        Mnemonic::Fld => {
            let (base, offset) = mem(ops[1])?;
            I::Fld { fd: freg(ops[0])?, base, offset }
        }
        Mnemonic::Flw => {
            let (base, offset) = mem(ops[1])?;
            I::Flw { fd: freg(ops[0])?, base, offset }
        }
        Mnemonic::Lw => {
            let (base, offset) = mem(ops[1])?;
            I::Lw { rd: xreg(ops[0])?, base, offset }
        }
        Mnemonic::Blt => I::Blt { rs1: xreg(ops[0])?, rs2: xreg(ops[1])?, target: label_name(ops[2])? },
        Mnemonic::Bne => I::Bne { rs1: xreg(ops[0])?, rs2: xreg(ops[1])?, target: label_name(ops[2])? },
        Mnemonic::J => I::J { target: label_name(ops[0])? },
        Mnemonic::Vsetvli => {
            I::Vsetvli { rd: xreg(ops[0])?, avl: xreg(ops[1])?, sew: sew(ops[2])?, lmul: lmul(ops[3])? }
        }
        Mnemonic::Vle => I::Vle { vd: vreg(ops[0])?, base: plain_mem(ops[1])? },
        Mnemonic::Vse => I::Vse { vs3: vreg(ops[0])?, base: plain_mem(ops[1])? },
        Mnemonic::Vlse => I::Vlse { vd: vreg(ops[0])?, base: plain_mem(ops[1])?, stride: xreg(ops[2])? },
        Mnemonic::VfmaccVf => I::VfmaccVf { vd: vreg(ops[0])?, fs1: freg(ops[1])?, vs2: vreg(ops[2])? },
        Mnemonic::VmaccVx => I::VmaccVx { vd: vreg(ops[0])?, rs1: xreg(ops[1])?, vs2: vreg(ops[2])? },
        Mnemonic::VmvZero => {
            let vd = vreg(ops[0])?;
            if imm(ops[1])? != 0 {
                return Err(ParseErrorKind::BadOperand(ops[1].into()));
            }
            I::VmvZero { vd }
        }
        Mnemonic::MsetTileM | Mnemonic::MsetTileN | Mnemonic::MsetTileK => {
            let dim = match m {
                Mnemonic::MsetTileM => Dim::M,
                Mnemonic::MsetTileN => Dim::N,
                _ => Dim::K,
            };
            I::MsetTile { dim, rd: xreg(ops[0])?, len: tile_len(ops[1])? }
        }
        Mnemonic::MldA => I::MldA { vd: vreg(ops[0])?, base: plain_mem(ops[1])?, stride: xreg(ops[2])? },
        Mnemonic::MldB => I::MldB { vd: vreg(ops[0])?, base: plain_mem(ops[1])?, stride: xreg(ops[2])? },
        Mnemonic::MstC => I::MstC { vs3: vreg(ops[0])?, base: plain_mem(ops[1])?, stride: xreg(ops[2])? },
        Mnemonic::Mxfmacc => I::Mxfmacc { vd: vreg(ops[0])?, vs1: vreg(ops[1])?, vs2: vreg(ops[2])? },
        Mnemonic::Mxmacc => I::Mxmacc { vd: vreg(ops[0])?, vs1: vreg(ops[1])?, vs2: vreg(ops[2])? },
    })
}

fn parse_line(body: &str) -> Res<Instruction> {
    let (name, rest) = match body.find(char::is_whitespace) {
        Some(i) => (&body[..i], body[i..].trim()),
        None => (body, ""),
    };
    let mnemonic = Mnemonic::from_name(name).ok_or_else(|| ParseErrorKind::UnknownMnemonic(name.into()))?;
    let ops: Vec<&str> = if rest.is_empty() { Vec::new() } else { rest.split(',').map(str::trim).collect() };
    if ops.len() != mnemonic.arity() || ops.iter().any(|o| o.is_empty()) {
        return Err(ParseErrorKind::ArityMismatch {
            mnemonic: name.into(),
            expected: mnemonic.arity(),
            found: ops.iter().filter(|o| !o.is_empty()).count(),
        });
    }
    instruction(mnemonic, &ops)
}

/// Assembles `text` into a [`Program`], reporting every bad line.
pub fn parse_assembly(text: &str) -> Result<Program, Vec<ParseError>> {
    let mut insns = Vec::new();
    let mut lines_of = Vec::new();
    let mut labels = BTreeMap::new();
    let mut element = None;
    let mut errors = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut body = raw.split('#').next().unwrap_or("").trim();
        if let Some(directive) = body.strip_prefix(".element") {
            match directive.trim().parse::<ElementType>() {
                Ok(e) => element = Some(e),
                Err(_) => errors.push(ParseError { line, kind: ParseErrorKind::BadDirective(body.into()) }),
            }
            continue;
        }
        while let Some(colon) = body.find(':') {
            let name = body[..colon].trim();
            if !is_label(name) {
                break;
            }
            if labels.insert(name.to_string(), insns.len()).is_some() {
                errors.push(ParseError { line, kind: ParseErrorKind::DuplicateLabel(name.into()) });
            }
            body = body[colon + 1..].trim();
        }
        if body.is_empty() {
            continue;
        }
        match parse_line(body) {
            Ok(insn) => {
                insns.push(insn);
                lines_of.push(line);
            }
            Err(kind) => errors.push(ParseError { line, kind }),
        }
    }

    for (pc, insn) in insns.iter().enumerate() {
        if let Some(t) = insn.branch_target() {
            if !labels.contains_key(t) {
                errors.push(ParseError { line: lines_of[pc], kind: ParseErrorKind::UnresolvedLabel(t.into()) });
            }
        }
    }
    if !errors.is_empty() {
        errors.sort_by_key(|e| e.line);
        return Err(errors);
    }
    Program::new(insns, labels, element).map_err(|e| {
        let name = match e {
            ProgramError::UnresolvedLabel(n) | ProgramError::LabelOutOfRange(n) => n,
        };
        vec![ParseError { line: 0, kind: ParseErrorKind::UnresolvedLabel(name) }]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(text: &str) -> Instruction {
        parse_assembly(text).unwrap().instructions()[0].clone()
    }

    #[test]
    fn msettile_immediate() {
        assert_eq!(one("msettilem t0, 8"), Instruction::MsetTile { dim: Dim::M, rd: XReg(5), len: TileLen::Imm(8) });
    }

    #[test]
    fn matrix_load_with_stride() {
        assert_eq!(one("mld.a v0, (a0), a1"), Instruction::MldA { vd: VReg(0), base: XReg(10), stride: XReg(11) });
    }

    #[test]
    fn mxfmacc_operand_roles() {
        assert_eq!(one("mxfmacc v8, v0, v4"), Instruction::Mxfmacc { vd: VReg(8), vs1: VReg(0), vs2: VReg(4) });
    }

    #[test]
    fn errors_carry_lines() {
        let errs = parse_assembly("li t0, 1\nfoo t0\nmld.a v0, (a0)\nvle.v v40, (a0)\nj missing\n").unwrap_err();
        let kinds: Vec<_> = errs.iter().map(|e| (e.line, e.kind.clone())).collect();
        assert_eq!(kinds[0], (2, ParseErrorKind::UnknownMnemonic("foo".into())));
        assert!(matches!(kinds[1], (3, ParseErrorKind::ArityMismatch { expected: 3, found: 2, .. })));
        assert_eq!(kinds[2], (4, ParseErrorKind::BadRegister("v40".into())));
        assert_eq!(kinds[3], (5, ParseErrorKind::UnresolvedLabel("missing".into())));
    }

    #[test]
    fn matrix_instructions_need_full_operands() {
        for text in ["mxfmacc v8, v0", "mst.c v8, (a0)", "msettilek t0", "mld.b v0"] {
            assert!(parse_assembly(text).is_err(), "{text}");
        }
    }

    #[test]
    fn comments_labels_and_offsets() {
        let p = parse_assembly(".element f64\nloop: fld fa0, 16(a0) # A\n  blt t0, t1, loop\nend:\n").unwrap();
        assert_eq!(p.element(), Some(ElementType::F64));
        assert_eq!(p.labels()["loop"], 0);
        assert_eq!(p.labels()["end"], 2);
        assert_eq!(p.instructions()[0], Instruction::Fld { fd: FReg(10), base: XReg(10), offset: 16 });
        assert_eq!(p.target(1), 0);
    }

    fn xr() -> impl Strategy<Value = XReg> {
        (0u8..32).prop_map(XReg)
    }
    fn fr() -> impl Strategy<Value = FReg> {
        (0u8..32).prop_map(FReg)
    }
    fn vr() -> impl Strategy<Value = VReg> {
        (0u8..32).prop_map(VReg)
    }

    fn insn() -> impl Strategy<Value = Instruction> {
        use Instruction as I;
        let target = prop_oneof![Just("l0".to_string()), Just("l1".to_string())];
        prop_oneof![
            (xr(), any::<i32>()).prop_map(|(rd, imm)| I::Li { rd, imm: imm as i64 }),
            (xr(), xr(), xr()).prop_map(|(rd, rs1, rs2)| I::Add { rd, rs1, rs2 }),
            (xr(), xr(), -4096i64..4096).prop_map(|(rd, rs1, imm)| I::Addi { rd, rs1, imm }),
            (fr(), xr(), -512i64..512).prop_map(|(fd, base, offset)| I::Fld { fd, base, offset }),
            (fr(), xr(), -512i64..512).prop_map(|(fd, base, offset)| I::Flw { fd, base, offset }),
            (xr(), xr(), 0i64..512).prop_map(|(rd, base, offset)| I::Lw { rd, base, offset }),
            (xr(), xr(), target.clone()).prop_map(|(rs1, rs2, target)| I::Blt { rs1, rs2, target }),
            (xr(), xr(), target.clone()).prop_map(|(rs1, rs2, target)| I::Bne { rs1, rs2, target }),
            target.prop_map(|target| I::J { target }),
            (
                xr(),
                xr(),
                prop_oneof![Just(Sew::E32), Just(Sew::E64)],
                prop_oneof![Just(1u8), Just(2), Just(4), Just(8)]
            )
                .prop_map(|(rd, avl, sew, lmul)| I::Vsetvli { rd, avl, sew, lmul }),
            (vr(), xr()).prop_map(|(vd, base)| I::Vle { vd, base }),
            (vr(), xr()).prop_map(|(vs3, base)| I::Vse { vs3, base }),
            (vr(), xr(), xr()).prop_map(|(vd, base, stride)| I::Vlse { vd, base, stride }),
            (vr(), fr(), vr()).prop_map(|(vd, fs1, vs2)| I::VfmaccVf { vd, fs1, vs2 }),
            (vr(), xr(), vr()).prop_map(|(vd, rs1, vs2)| I::VmaccVx { vd, rs1, vs2 }),
            vr().prop_map(|vd| I::VmvZero { vd }),
            (
                prop_oneof![Just(Dim::M), Just(Dim::N), Just(Dim::K)],
                xr(),
                prop_oneof![(0u64..64).prop_map(TileLen::Imm), xr().prop_map(TileLen::Reg)]
            )
                .prop_map(|(dim, rd, len)| I::MsetTile { dim, rd, len }),
            (vr(), xr(), xr()).prop_map(|(vd, base, stride)| I::MldA { vd, base, stride }),
            (vr(), xr(), xr()).prop_map(|(vd, base, stride)| I::MldB { vd, base, stride }),
            (vr(), xr(), xr()).prop_map(|(vs3, base, stride)| I::MstC { vs3, base, stride }),
            (vr(), vr(), vr()).prop_map(|(vd, vs1, vs2)| I::Mxfmacc { vd, vs1, vs2 }),
            (vr(), vr(), vr()).prop_map(|(vd, vs1, vs2)| I::Mxmacc { vd, vs1, vs2 }),
        ]
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(
            insns in proptest::collection::vec(insn(), 0..40),
            l0 in 0usize..40, l1 in 0usize..40,
            element in proptest::option::of(prop_oneof![Just(ElementType::F64), Just(ElementType::F32), Just(ElementType::I32)]),
        ) {
            let len = insns.len();
            let labels = BTreeMap::from([("l0".to_string(), l0.min(len)), ("l1".to_string(), l1.min(len))]);
            let program = Program::new(insns, labels, element).unwrap();
            let text = program.to_string();
            let back = parse_assembly(&text).unwrap();
            prop_assert_eq!(back, program);
        }
    }
}
