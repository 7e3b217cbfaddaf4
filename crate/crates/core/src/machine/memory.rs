use std::ops::Range;

use super::SimErrorKind;

/// Byte-addressed little-endian memory image that remembers which byte
/// ranges were written, so per-core images can be merged after a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Memory {
    bytes: Vec<u8>,
    writes: Vec<Range<usize>>,
}

impl Memory {
    pub fn new(size: usize) -> Self {
        Self { bytes: vec![0; size], writes: Vec::new() }
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes, writes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    /// Written byte ranges, coalesced where adjacent.
    pub fn written(&self) -> &[Range<usize>] {
        &self.writes
    }

    /// Copies every range written in `other` into `self`.
    pub fn merge_written(&mut self, other: &Memory) {
        for r in &other.writes {
            self.bytes[r.clone()].copy_from_slice(&other.bytes[r.clone()]);
            self.note_write(r.clone());
        }
    }

    fn check(&self, addr: i64, width: usize) -> Result<usize, SimErrorKind> {
        if addr < 0 || addr as usize + width > self.bytes.len() {
            return Err(SimErrorKind::OutOfBoundsAccess { addr });
        }
        if !(addr as usize).is_multiple_of(width) {
            return Err(SimErrorKind::MisalignedAccess { addr });
        }
        Ok(addr as usize)
    }

    /// Reads a `width`-byte element (4 or 8) as raw bits.
    pub fn read(&self, addr: i64, width: usize) -> Result<u64, SimErrorKind> {
        let a = self.check(addr, width)?;
        Ok(match width {
            8 => u64::from_le_bytes(self.bytes[a..a + 8].try_into().unwrap()),
            4 => u32::from_le_bytes(self.bytes[a..a + 4].try_into().unwrap()) as u64,
            _ => unreachable!("element width {width}"),
        })
    }

    pub fn write(&mut self, addr: i64, width: usize, bits: u64) -> Result<(), SimErrorKind> {
        let a = self.check(addr, width)?;
        match width {
            8 => self.bytes[a..a + 8].copy_from_slice(&bits.to_le_bytes()),
            4 => self.bytes[a..a + 4].copy_from_slice(&(bits as u32).to_le_bytes()),
            _ => unreachable!("element width {width}"),
        }
        self.note_write(a..a + width);
        Ok(())
    }

    fn note_write(&mut self, r: Range<usize>) {
        if let Some(last) = self.writes.last_mut() {
            if last.end == r.start {
                last.end = r.end;
                return;
            }
            if last.start <= r.start && r.end <= last.end {
                return;
            }
        }
        self.writes.push(r);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_and_alignment() {
        let mut m = Memory::new(16);
        assert_eq!(m.read(16, 8), Err(SimErrorKind::OutOfBoundsAccess { addr: 16 }));
        assert_eq!(m.read(-8, 8), Err(SimErrorKind::OutOfBoundsAccess { addr: -8 }));
        assert_eq!(m.read(4, 8), Err(SimErrorKind::MisalignedAccess { addr: 4 }));
        m.write(8, 8, 0xdead_beef).unwrap();
        assert_eq!(m.read(8, 8), Ok(0xdead_beef));
        assert_eq!(m.read(8, 4), Ok(0xdead_beef));
    }

    #[test]
    fn merge_copies_written_ranges_only() {
        let base = Memory::from_bytes(vec![1; 32]);
        let mut core = base.clone();
        core.write(8, 4, 7).unwrap();
        core.write(12, 4, 7).unwrap();
        assert_eq!(core.written(), std::slice::from_ref(&(8..16)));
        let mut merged = base.clone();
        merged.merge_written(&core);
        assert_eq!(merged.as_bytes()[8..16], core.as_bytes()[8..16]);
        assert_eq!(merged.as_bytes()[0..8], [1; 8]);
    }
}
