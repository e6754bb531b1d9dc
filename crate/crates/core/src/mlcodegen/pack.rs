use crate::isa::Precision;
use crate::machine::lane;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PackError {
    #[error("code {code} at index {index} does not fit a {bits}-bit lane")]
    OutOfRange { index: usize, code: i32, bits: u32 },
}

/// Packs signed codes into 32-bit words, `32 / n` per word, lane `i` at bits
/// `[i*n + n - 1 : i*n]`. The last word is padded with zero codes.
pub fn pack_lanes(codes: &[i32], precision: Precision) -> Result<Vec<u32>, PackError> {
    let n = precision.bits();
    let k = precision.lanes();
    let (lo, hi) = (-(1i64 << (n - 1)), (1i64 << (n - 1)) - 1);
    let mask = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut words = vec![0u32; codes.len().div_ceil(k)];
    for (index, &code) in codes.iter().enumerate() {
        if !(lo..=hi).contains(&(code as i64)) {
            return Err(PackError::OutOfRange {
                index,
                code,
                bits: n,
            });
        }
        words[index / k] |= (code as u32 & mask) << ((index % k) as u32 * n);
    }
    Ok(words)
}

/// Inverse of [`pack_lanes`]: the first `count` lanes.
pub fn unpack_lanes(words: &[u32], precision: Precision, count: usize) -> Vec<i32> {
    let k = precision.lanes();
    (0..count)
        .map(|i| lane(words[i / k], precision, i % k))
        .collect()
}
