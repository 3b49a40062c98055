//! The mini intermediate representation: programs, functions, basic blocks,
//! instructions, and the machine configuration that fixes bitvector width and
//! the policy for resolving `undef` reads.
//!
//! Programs are straight-line/branch/loop integer-and-array code with a single
//! flat memory array. Values are `bit_width`-wide bitvectors with wrap-around
//! arithmetic and two's-complement signed comparisons.

mod interp;
mod parse;
mod print;

pub use interp::{interpret, ExecError, ExecResult, TraceStep};
pub use parse::{parse_ir, ParseError};
pub use print::print_ir;

use std::collections::BTreeSet;
use thiserror::Error;

/// A whole translation unit. v1 supports exactly one function named `main`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub functions: Vec<Function>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub label: String,
    pub instrs: Vec<Instr>,
}

/// Stable identity of one instruction: (block index, instruction index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstrId {
    pub block: usize,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rel {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Rel {
    /// Structural negation: the relation that holds exactly when `self` does not.
    pub fn negated(self) -> Rel {
        match self {
            Rel::Lt => Rel::Ge,
            Rel::Le => Rel::Gt,
            Rel::Gt => Rel::Le,
            Rel::Ge => Rel::Lt,
            Rel::Eq => Rel::Ne,
            Rel::Ne => Rel::Eq,
        }
    }
}

/// An instruction operand: a variable reference, a literal, or the
/// distinguished non-deterministic `undef` token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    Var(String),
    Lit(i64),
    Undef,
}

impl Operand {
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Operand::Var(n) => Some(n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    /// `dest = <literal|undef>`
    Assign { dest: String, value: Operand },
    /// `dest = lhs (+|-|*) rhs`
    Binop { dest: String, op: BinOp, lhs: Operand, rhs: Operand },
    /// `dest = lhs (<|<=|>|>=|==|!=) rhs`, producing 1 or 0
    Compare { dest: String, rel: Rel, lhs: Operand, rhs: Operand },
    /// `dest = load addr`
    Load { dest: String, addr: Operand },
    /// `store addr, value`
    Store { addr: Operand, value: Operand },
    /// `dest = phi [label: operand, ...]`; only at block heads, only in SSA form
    Phi { dest: String, incomings: Vec<(String, Operand)> },
    /// `print value`
    Print { value: Operand },
    /// `br cond, then_label, else_label`; taken when cond != 0
    Branch { cond: Operand, then_label: String, else_label: String },
    /// `jmp target`
    Jump { target: String },
    /// `ret value`
    Return { value: Operand },
}

impl Instr {
    pub fn is_terminator(&self) -> bool {
        matches!(self, Instr::Branch { .. } | Instr::Jump { .. } | Instr::Return { .. })
    }

    /// The SSA name this instruction defines, if any.
    pub fn dest(&self) -> Option<&str> {
        match self {
            Instr::Assign { dest, .. }
            | Instr::Binop { dest, .. }
            | Instr::Compare { dest, .. }
            | Instr::Load { dest, .. }
            | Instr::Phi { dest, .. } => Some(dest),
            _ => None,
        }
    }

    /// All operands read by this instruction, phi incomings included.
    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Instr::Assign { value, .. } => vec![value],
            Instr::Binop { lhs, rhs, .. } | Instr::Compare { lhs, rhs, .. } => vec![lhs, rhs],
            Instr::Load { addr, .. } => vec![addr],
            Instr::Store { addr, value } => vec![addr, value],
            Instr::Phi { incomings, .. } => incomings.iter().map(|(_, op)| op).collect(),
            Instr::Print { value } => vec![value],
            Instr::Branch { cond, .. } => vec![cond],
            Instr::Jump { .. } => vec![],
            Instr::Return { value } => vec![value],
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            Instr::Assign { value, .. } => vec![value],
            Instr::Binop { lhs, rhs, .. } | Instr::Compare { lhs, rhs, .. } => vec![lhs, rhs],
            Instr::Load { addr, .. } => vec![addr],
            Instr::Store { addr, value } => vec![addr, value],
            Instr::Phi { incomings, .. } => incomings.iter_mut().map(|(_, op)| op).collect(),
            Instr::Print { value } => vec![value],
            Instr::Branch { cond, .. } => vec![cond],
            Instr::Jump { .. } => vec![],
            Instr::Return { value } => vec![value],
        }
    }

    /// Labels this instruction may transfer control to.
    pub fn targets(&self) -> Vec<&str> {
        match self {
            Instr::Branch { then_label, else_label, .. } => vec![then_label, else_label],
            Instr::Jump { target } => vec![target],
            _ => vec![],
        }
    }
}

/// How an `undef` read resolves under the concrete interpreter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UndefPolicy {
    /// Every `undef` read yields this value (masked to the word width).
    Fixed(u64),
    /// Reads draw from a deterministic stream seeded with this value.
    SeededRandom(u64),
}

/// Word width and undef policy for all bitvector semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineConfig {
    pub bit_width: u32,
    pub undef_policy: UndefPolicy,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig { bit_width: 32, undef_policy: UndefPolicy::Fixed(0) }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("bit width {0} out of range (2..=64)")]
    BadWidth(u32),
}

impl MachineConfig {
    pub fn with_width(bit_width: u32) -> Result<Self, ConfigError> {
        let cfg = MachineConfig { bit_width, ..Default::default() };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !(2..=64).contains(&self.bit_width) {
            return Err(ConfigError::BadWidth(self.bit_width));
        }
        Ok(())
    }

    pub fn mask(&self) -> u64 {
        if self.bit_width == 64 {
            u64::MAX
        } else {
            (1u64 << self.bit_width) - 1
        }
    }

    /// Truncate a literal to the word width (two's complement wrap).
    pub fn truncate(&self, v: i64) -> u64 {
        (v as u64) & self.mask()
    }

    /// Reinterpret a word as a signed integer.
    pub fn to_signed(&self, v: u64) -> i64 {
        let w = self.bit_width;
        if w == 64 {
            v as i64
        } else {
            let sign = 1u64 << (w - 1);
            if v & sign != 0 {
                (v | !self.mask()) as i64
            } else {
                v as i64
            }
        }
    }
}

/// Arithmetic over masked words.
pub fn eval_binop(op: BinOp, lhs: u64, rhs: u64, cfg: &MachineConfig) -> u64 {
    let r = match op {
        BinOp::Add => lhs.wrapping_add(rhs),
        BinOp::Sub => lhs.wrapping_sub(rhs),
        BinOp::Mul => lhs.wrapping_mul(rhs),
    };
    r & cfg.mask()
}

/// Signed two's-complement comparison over masked words.
pub fn eval_rel(rel: Rel, lhs: u64, rhs: u64, cfg: &MachineConfig) -> bool {
    let (a, b) = (cfg.to_signed(lhs), cfg.to_signed(rhs));
    match rel {
        Rel::Lt => a < b,
        Rel::Le => a <= b,
        Rel::Gt => a > b,
        Rel::Ge => a >= b,
        Rel::Eq => a == b,
        Rel::Ne => a != b,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidateError {
    #[error("program must contain exactly one function")]
    FunctionCount,
    #[error("function must be named 'main', found '{0}'")]
    NotMain(String),
    #[error("duplicate parameter '{0}'")]
    DuplicateParam(String),
    #[error("duplicate label '{0}'")]
    DuplicateLabel(String),
    #[error("block '{0}': missing terminator")]
    MissingTerminator(String),
    #[error("block '{0}': terminator before end of block")]
    EarlyTerminator(String),
    #[error("block '{0}': undefined label '{1}'")]
    UndefinedLabel(String, String),
    #[error("block '{0}': phi outside block head")]
    PhiNotAtHead(String),
}

impl Program {
    pub fn main(&self) -> &Function {
        &self.functions[0]
    }

    pub fn main_mut(&mut self) -> &mut Function {
        &mut self.functions[0]
    }

    /// Structural validity: one `main`, unique labels, exactly one terminator
    /// as the last instruction of each block, referenced labels resolve, phis
    /// only at block heads.
    pub fn validate(&self) -> Result<(), ValidateError> {
        if self.functions.len() != 1 {
            return Err(ValidateError::FunctionCount);
        }
        let f = &self.functions[0];
        if f.name != "main" {
            return Err(ValidateError::NotMain(f.name.clone()));
        }
        let mut params = BTreeSet::new();
        for p in &f.params {
            if !params.insert(p.clone()) {
                return Err(ValidateError::DuplicateParam(p.clone()));
            }
        }
        let mut labels = BTreeSet::new();
        for b in &f.blocks {
            if !labels.insert(b.label.clone()) {
                return Err(ValidateError::DuplicateLabel(b.label.clone()));
            }
        }
        if f.blocks.is_empty() {
            return Err(ValidateError::MissingTerminator("<entry>".into()));
        }
        for b in &f.blocks {
            match b.instrs.last() {
                Some(i) if i.is_terminator() => {}
                _ => return Err(ValidateError::MissingTerminator(b.label.clone())),
            }
            for (idx, i) in b.instrs.iter().enumerate() {
                if i.is_terminator() && idx + 1 != b.instrs.len() {
                    return Err(ValidateError::EarlyTerminator(b.label.clone()));
                }
                if matches!(i, Instr::Phi { .. }) {
                    let head = b.instrs[..idx].iter().all(|p| matches!(p, Instr::Phi { .. }));
                    if !head {
                        return Err(ValidateError::PhiNotAtHead(b.label.clone()));
                    }
                }
                for t in i.targets() {
                    if !labels.contains(t) {
                        return Err(ValidateError::UndefinedLabel(b.label.clone(), t.to_string()));
                    }
                }
                if let Instr::Phi { incomings, .. } = i {
                    for (lbl, _) in incomings {
                        if !labels.contains(lbl.as_str()) {
                            return Err(ValidateError::UndefinedLabel(b.label.clone(), lbl.clone()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn entry_label(&self) -> &str {
        &self.main().blocks[0].label
    }

    pub fn block(&self, label: &str) -> Option<&Block> {
        self.main().blocks.iter().find(|b| b.label == label)
    }

    pub fn block_index(&self, label: &str) -> Option<usize> {
        self.main().blocks.iter().position(|b| b.label == label)
    }

    pub fn instr(&self, id: InstrId) -> &Instr {
        &self.main().blocks[id.block].instrs[id.index]
    }

    /// All instruction ids in program order.
    pub fn instr_ids(&self) -> Vec<InstrId> {
        let mut out = Vec::new();
        for (bi, b) in self.main().blocks.iter().enumerate() {
            for ii in 0..b.instrs.len() {
                out.push(InstrId { block: bi, index: ii });
            }
        }
        out
    }

    /// Every variable name mentioned anywhere (defs, uses, params).
    pub fn variables(&self) -> BTreeSet<String> {
        let f = self.main();
        let mut out: BTreeSet<String> = f.params.iter().cloned().collect();
        for b in &f.blocks {
            for i in &b.instrs {
                if let Some(d) = i.dest() {
                    out.insert(d.to_string());
                }
                for op in i.operands() {
                    if let Operand::Var(n) = op {
                        out.insert(n.clone());
                    }
                }
            }
        }
        out
    }

    /// Predecessor labels per block label.
    pub fn predecessors(&self) -> std::collections::BTreeMap<String, Vec<String>> {
        let mut preds: std::collections::BTreeMap<String, Vec<String>> = self
            .main()
            .blocks
            .iter()
            .map(|b| (b.label.clone(), Vec::new()))
            .collect();
        for b in &self.main().blocks {
            if let Some(t) = b.instrs.last() {
                for tgt in t.targets() {
                    let v = preds.get_mut(tgt).expect("validated label");
                    if !v.contains(&b.label) {
                        v.push(b.label.clone());
                    }
                }
            }
        }
        preds
    }

    /// Labels of blocks reachable from entry.
    pub fn reachable_blocks(&self) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.entry_label().to_string()];
        while let Some(l) = stack.pop() {
            if !seen.insert(l.clone()) {
                continue;
            }
            if let Some(b) = self.block(&l) {
                if let Some(t) = b.instrs.last() {
                    for tgt in t.targets() {
                        stack.push(tgt.to_string());
                    }
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fixture_parses_to_four_blocks_fourteen_instrs() {
        let p = parse_ir(fixtures::PAPER_EXAMPLE).unwrap();
        let f = p.main();
        assert_eq!(f.blocks.len(), 4);
        let total: usize = f.blocks.iter().map(|b| b.instrs.len()).sum();
        assert_eq!(total, 14);
        // entry: 4 const-assigns + jump
        assert_eq!(f.blocks[0].label, "entry");
        assert_eq!(f.blocks[0].instrs.len(), 5);
        assert!(matches!(f.blocks[0].instrs[4], Instr::Jump { .. }));
        // L: 3 binops + compare + branch
        assert_eq!(f.blocks[1].instrs.len(), 5);
        assert!(matches!(f.blocks[1].instrs[3], Instr::Compare { .. }));
        assert!(matches!(f.blocks[1].instrs[4], Instr::Branch { .. }));
        // ret_bb: return; else_bb: binop + print + jump
        assert_eq!(f.blocks[2].instrs.len(), 1);
        assert_eq!(f.blocks[3].instrs.len(), 3);
    }

    #[test]
    fn missing_terminator_is_rejected() {
        let err = parse_ir("func main() {\nentry:\n  i = 1\n}\n").unwrap_err();
        assert!(err.to_string().contains("missing terminator"), "{err}");
    }

    #[test]
    fn empty_body_is_rejected() {
        let err = parse_ir("func main() {\n}\n").unwrap_err();
        assert!(err.to_string().contains("missing terminator"), "{err}");
    }

    #[test]
    fn round_trip_on_fixtures() {
        for src in [fixtures::PAPER_EXAMPLE, fixtures::PAPER_EXAMPLE_SSA] {
            let p = parse_ir(src).unwrap();
            let printed = print_ir(&p);
            let q = parse_ir(&printed).unwrap();
            assert_eq!(p, q);
        }
    }

    #[test]
    fn fixtures_are_in_canonical_form() {
        for src in [
            fixtures::PAPER_EXAMPLE,
            fixtures::PAPER_EXAMPLE_SSA,
            fixtures::PAPER_EXAMPLE_DCE,
            fixtures::PAPER_EXAMPLE_CVA,
            fixtures::PAPER_EXAMPLE_FINAL,
        ] {
            let p = parse_ir(src).unwrap();
            assert_eq!(print_ir(&p), src);
        }
    }

    #[test]
    fn undef_prints_as_undef_token() {
        let src = "func main() {\nentry:\n  x = undef\n  y = x + 1\n  ret y\n}\n";
        let p = parse_ir(src).unwrap();
        assert_eq!(print_ir(&p), src);
    }

    #[test]
    fn masked_arithmetic_wraps() {
        let cfg = MachineConfig::with_width(4).unwrap();
        assert_eq!(eval_binop(BinOp::Add, 15, 1, &cfg), 0);
        assert_eq!(eval_binop(BinOp::Sub, 0, 1, &cfg), 15);
        assert_eq!(eval_binop(BinOp::Mul, 8, 2, &cfg), 0);
        // signed view of 15 at width 4 is -1
        assert!(eval_rel(Rel::Lt, 15, 0, &cfg));
    }

    #[test]
    fn width_bounds_are_enforced() {
        assert!(MachineConfig::with_width(1).is_err());
        assert!(MachineConfig::with_width(65).is_err());
        assert!(MachineConfig::with_width(2).is_ok());
        assert!(MachineConfig::with_width(64).is_ok());
    }
}
