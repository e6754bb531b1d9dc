use crate::isa::Precision;

/// The SIMD multiply-accumulate unit.
///
/// A 32-bit operand holds `32 / n` signed lanes, lane `i` in bits
/// `[i*n + n - 1 : i*n]`. Each lane owns a 32-bit accumulator that wraps on
/// overflow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacUnit {
    precision: Precision,
    acc: [i32; 8],
}

/// Signed value of lane `i` of `word` at `precision`.
#[inline]
pub fn lane(word: u32, precision: Precision, i: usize) -> i32 {
    let n = precision.bits();
    let shifted = word >> (i as u32 * n);
    ((shifted << (32 - n)) as i32) >> (32 - n)
}

impl MacUnit {
    pub fn new(precision: Precision) -> MacUnit {
        MacUnit {
            precision,
            acc: [0; 8],
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn lanes(&self) -> usize {
        self.precision.lanes()
    }

    pub fn accumulators(&self) -> &[i32] {
        &self.acc[..self.lanes()]
    }

    /// Accumulates the lane-wise products of `a` and `b`. Returns the number
    /// of lanes whose accumulator wrapped.
    pub fn step(&mut self, a: u32, b: u32) -> u32 {
        let mut overflows = 0;
        for i in 0..self.lanes() {
            let product = lane(a, self.precision, i) as i64 * lane(b, self.precision, i) as i64;
            let exact = self.acc[i] as i64 + product;
            let wrapped = exact as i32;
            if wrapped as i64 != exact {
                overflows += 1;
            }
            self.acc[i] = wrapped;
        }
        overflows
    }

    /// Wrapping sum of the active lane accumulators.
    pub fn reduce(&self) -> i32 {
        self.accumulators()
            .iter()
            .fold(0i32, |s, &a| s.wrapping_add(a))
    }

    pub fn clear(&mut self) {
        self.acc = [0; 8];
    }
}
