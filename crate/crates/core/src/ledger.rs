//! Per-boundary element transfer counts.

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// The four transfer terms between two adjacent storage levels: A, B and
/// C/D flowing down, D flowing back up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Terms {
    #[serde(rename = "a")]
    pub a_down: u64,
    #[serde(rename = "b")]
    pub b_down: u64,
    pub cd_down: u64,
    pub d_up: u64,
}

impl Terms {
    pub const ZERO: Terms = Terms { a_down: 0, b_down: 0, cd_down: 0, d_up: 0 };

    pub const fn new(a_down: u64, b_down: u64, cd_down: u64, d_up: u64) -> Self {
        Self { a_down, b_down, cd_down, d_up }
    }

    pub fn total(&self) -> u64 {
        self.a_down + self.b_down + self.cd_down + self.d_up
    }

    pub fn as_array(&self) -> [u64; 4] {
        [self.a_down, self.b_down, self.cd_down, self.d_up]
    }
}

impl Add for Terms {
    type Output = Terms;

    fn add(self, rhs: Terms) -> Terms {
        Terms {
            a_down: self.a_down + rhs.a_down,
            b_down: self.b_down + rhs.b_down,
            cd_down: self.cd_down + rhs.cd_down,
            d_up: self.d_up + rhs.d_up,
        }
    }
}

impl AddAssign for Terms {
    fn add_assign(&mut self, rhs: Terms) {
        *self = *self + rhs;
    }
}

impl fmt::Display for Terms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "A {} / B {} / CD {} / D {} (total {})",
            self.a_down,
            self.b_down,
            self.cd_down,
            self.d_up,
            self.total()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Memory and vector register file. Scalar A loads of the baseline
    /// kernel are reported here as well.
    MemVrf,
    VrfBuf,
    BufFpu,
    /// Scalar register file feeding the FPUs (baseline A operands).
    SrfFpu,
    /// Vector register file feeding the FPUs directly (baseline B, C/D).
    VrfFpu,
}

impl Boundary {
    pub const ALL: [Boundary; 5] =
        [Boundary::MemVrf, Boundary::VrfBuf, Boundary::BufFpu, Boundary::SrfFpu, Boundary::VrfFpu];

    pub fn name(self) -> &'static str {
        match self {
            Boundary::MemVrf => "mem_vrf",
            Boundary::VrfBuf => "vrf_buf",
            Boundary::BufFpu => "buf_fpu",
            Boundary::SrfFpu => "srf_fpu",
            Boundary::VrfFpu => "vrf_fpu",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransferLedger {
    pub mem_vrf: Terms,
    pub vrf_buf: Terms,
    pub buf_fpu: Terms,
    pub srf_fpu: Terms,
    pub vrf_fpu: Terms,
}

impl TransferLedger {
    pub fn get(&self, boundary: Boundary) -> &Terms {
        match boundary {
            Boundary::MemVrf => &self.mem_vrf,
            Boundary::VrfBuf => &self.vrf_buf,
            Boundary::BufFpu => &self.buf_fpu,
            Boundary::SrfFpu => &self.srf_fpu,
            Boundary::VrfFpu => &self.vrf_fpu,
        }
    }

    pub fn get_mut(&mut self, boundary: Boundary) -> &mut Terms {
        match boundary {
            Boundary::MemVrf => &mut self.mem_vrf,
            Boundary::VrfBuf => &mut self.vrf_buf,
            Boundary::BufFpu => &mut self.buf_fpu,
            Boundary::SrfFpu => &mut self.srf_fpu,
            Boundary::VrfFpu => &mut self.vrf_fpu,
        }
    }

    pub fn total(&self) -> u64 {
        Boundary::ALL.iter().map(|b| self.get(*b).total()).sum()
    }

    /// First `(boundary, term index, expected, actual)` where two ledgers differ.
    pub fn first_difference(&self, other: &TransferLedger) -> Option<(Boundary, usize, u64, u64)> {
        Boundary::ALL.iter().find_map(|&b| {
            let (x, y) = (self.get(b).as_array(), other.get(b).as_array());
            (0..4).find(|&i| x[i] != y[i]).map(|i| (b, i, x[i], y[i]))
        })
    }
}

impl Add for TransferLedger {
    type Output = TransferLedger;

    fn add(mut self, rhs: TransferLedger) -> TransferLedger {
        self += rhs;
        self
    }
}

impl AddAssign for TransferLedger {
    fn add_assign(&mut self, rhs: TransferLedger) {
        for b in Boundary::ALL {
            *self.get_mut(b) += *rhs.get(b);
        }
    }
}

pub const TERM_NAMES: [&str; 4] = ["a", "b", "cd_down", "d_up"];
