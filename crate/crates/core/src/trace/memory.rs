/// Flat, word-addressed memory image shared by the interpreter and the
/// workload setup code. Addresses are byte addresses; every access is one
/// 8-byte aligned word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemImage {
    base: u64,
    words: Vec<u64>,
}

pub const WORD: u64 = 8;
const ALIGN: u64 = 64;

impl Default for MemImage {
    fn default() -> Self {
        MemImage::new()
    }
}

impl MemImage {
    /// Images start at a nonzero base so that a zero pointer is always out of
    /// bounds.
    pub const BASE: u64 = 0x1_0000;

    pub fn new() -> Self {
        MemImage {
            base: Self::BASE,
            words: Vec::new(),
        }
    }

    /// Reserve `words` zeroed words at a 64-byte aligned address.
    pub fn alloc(&mut self, words: usize) -> u64 {
        let end = self.base + self.words.len() as u64 * WORD;
        let start = end.div_ceil(ALIGN) * ALIGN;
        let new_len = ((start - self.base) / WORD) as usize + words;
        self.words.resize(new_len, 0);
        start
    }

    pub fn alloc_from(&mut self, data: &[u64]) -> u64 {
        let addr = self.alloc(data.len());
        let i = self.index(addr).expect("fresh allocation is in bounds");
        self.words[i..i + data.len()].copy_from_slice(data);
        addr
    }

    pub fn alloc_f64(&mut self, data: &[f64]) -> u64 {
        let bits: Vec<u64> = data.iter().map(|v| v.to_bits()).collect();
        self.alloc_from(&bits)
    }

    pub fn len_bytes(&self) -> u64 {
        self.words.len() as u64 * WORD
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.base + self.len_bytes()
    }

    fn index(&self, addr: u64) -> Option<usize> {
        if self.contains(addr) {
            Some(((addr - self.base) / WORD) as usize)
        } else {
            None
        }
    }

    /// `Err(true)` means misaligned, `Err(false)` out of bounds.
    pub fn check(&self, addr: u64) -> Result<usize, bool> {
        if addr % WORD != 0 {
            return Err(true);
        }
        self.index(addr).ok_or(false)
    }

    pub fn read(&self, addr: u64) -> Option<u64> {
        self.check(addr).ok().map(|i| self.words[i])
    }

    pub fn write(&mut self, addr: u64, value: u64) -> bool {
        match self.check(addr) {
            Ok(i) => {
                self.words[i] = value;
                true
            }
            Err(_) => false,
        }
    }

    pub fn words(&self, addr: u64, n: usize) -> &[u64] {
        let i = self.index(addr).expect("range start in bounds");
        &self.words[i..i + n]
    }

    pub fn f64s(&self, addr: u64, n: usize) -> Vec<f64> {
        self.words(addr, n).iter().map(|b| f64::from_bits(*b)).collect()
    }

    /// Lowest byte address whose word differs between the two images.
    pub fn first_difference(&self, other: &MemImage) -> Option<u64> {
        if self.base != other.base {
            return Some(self.base.min(other.base));
        }
        let n = self.words.len().max(other.words.len());
        (0..n)
            .find(|&i| self.words.get(i).copied().unwrap_or(0) != other.words.get(i).copied().unwrap_or(0))
            .map(|i| self.base + i as u64 * WORD)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocations_are_line_aligned_and_disjoint() {
        let mut m = MemImage::new();
        let a = m.alloc(3);
        let b = m.alloc_from(&[7, 8]);
        assert_eq!(a % 64, 0);
        assert_eq!(b % 64, 0);
        assert!(b >= a + 24);
        assert_eq!(m.read(b + 8), Some(8));
        assert_eq!(m.read(a), Some(0));
    }

    #[test]
    fn out_of_range_and_misaligned() {
        let mut m = MemImage::new();
        let a = m.alloc(1);
        assert_eq!(m.check(a + 4), Err(true));
        assert_eq!(m.check(0), Err(false));
        assert!(!m.write(a + 8, 1));
    }

    #[test]
    fn difference_reports_lowest_address() {
        let mut m = MemImage::new();
        let a = m.alloc(4);
        let mut n = m.clone();
        n.write(a + 16, 1);
        n.write(a + 24, 1);
        assert_eq!(m.first_difference(&n), Some(a + 16));
        assert_eq!(m.first_difference(&m.clone()), None);
    }
}
