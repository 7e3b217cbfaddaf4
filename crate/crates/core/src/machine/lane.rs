//! Element arithmetic on raw register bits.

pub(crate) trait Lane: Copy {
    const BYTES: usize;
    fn from_bits(bits: u64) -> Self;
    fn to_bits(self) -> u64;
    /// `acc + a·b`: fused for floats, wrapping for integers.
    fn mac(a: Self, b: Self, acc: Self) -> Self;
}

impl Lane for f64 {
    const BYTES: usize = 8;
    fn from_bits(bits: u64) -> Self {
        f64::from_bits(bits)
    }
    fn to_bits(self) -> u64 {
        f64::to_bits(self)
    }
    fn mac(a: Self, b: Self, acc: Self) -> Self {
        a.mul_add(b, acc)
    }
}

impl Lane for f32 {
    const BYTES: usize = 4;
    fn from_bits(bits: u64) -> Self {
        f32::from_bits(bits as u32)
    }
    fn to_bits(self) -> u64 {
        f32::to_bits(self) as u64
    }
    fn mac(a: Self, b: Self, acc: Self) -> Self {
        a.mul_add(b, acc)
    }
}

impl Lane for i32 {
    const BYTES: usize = 4;
    fn from_bits(bits: u64) -> Self {
        bits as u32 as i32
    }
    fn to_bits(self) -> u64 {
        self as u32 as u64
    }
    fn mac(a: Self, b: Self, acc: Self) -> Self {
        acc.wrapping_add(a.wrapping_mul(b))
    }
}

impl Lane for i64 {
    const BYTES: usize = 8;
    fn from_bits(bits: u64) -> Self {
        bits as i64
    }
    fn to_bits(self) -> u64 {
        self as u64
    }
    fn mac(a: Self, b: Self, acc: Self) -> Self {
        acc.wrapping_add(a.wrapping_mul(b))
    }
}
