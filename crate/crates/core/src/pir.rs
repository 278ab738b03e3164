//! Protocol mathematics for oblivious record retrieval: the two-server XOR
//! scheme (a pair of random bitmasks differing only at the target index) and
//! the single-server k-anonymity variant (the real index hidden among
//! decoys). Pure functions, no networking.

use crate::encoding::RecordTable;
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PirError {
    #[error("index {index} out of range for {n} records")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("k = {k} exceeds record count {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    KTooSmall,
    #[error("position {position} out of range for {len} responses")]
    PositionOutOfRange { position: usize, len: usize },
}

/// A fixed-length bit vector packed into bytes. Bit `i` lives in byte
/// `i / 8` at position `i % 8` counted from the least significant bit; pad
/// bits beyond `len` are always zero. Servers and clients must agree on this
/// layout bit-exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVector {
    len: usize,
    bytes: Vec<u8>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            len,
            bytes: vec![0u8; len.div_ceil(8)],
        }
    }

    /// The unit vector with a single 1 bit at `index`.
    pub fn unit(len: usize, index: usize) -> Result<Self, PirError> {
        if index >= len {
            return Err(PirError::IndexOutOfRange { index, n: len });
        }
        let mut v = BitVector::zeros(len);
        v.set(index, true);
        Ok(v)
    }

    /// A uniformly random bit vector.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut bytes = vec![0u8; len.div_ceil(8)];
        rng.fill_bytes(&mut bytes);
        let mut v = BitVector { len, bytes };
        v.clear_pad_bits();
        v
    }

    /// Reinterprets packed bytes as a bit vector of `len` bits. The byte
    /// count must match exactly; pad bits are forced to zero.
    pub fn from_bytes(len: usize, bytes: &[u8]) -> Result<Self, PirError> {
        if bytes.len() != len.div_ceil(8) {
            return Err(PirError::LengthMismatch {
                expected: len.div_ceil(8),
                actual: bytes.len(),
            });
        }
        let mut v = BitVector {
            len,
            bytes: bytes.to_vec(),
        };
        v.clear_pad_bits();
        Ok(v)
    }

    fn clear_pad_bits(&mut self) {
        let used = self.len % 8;
        if used != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= (1u8 << used) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn get(&self, index: usize) -> bool {
        debug_assert!(index < self.len);
        self.bytes[index / 8] & (1 << (index % 8)) != 0
    }

    pub fn set(&mut self, index: usize, value: bool) {
        debug_assert!(index < self.len);
        if value {
            self.bytes[index / 8] |= 1 << (index % 8);
        } else {
            self.bytes[index / 8] &= !(1 << (index % 8));
        }
    }

    pub fn xor(&self, other: &BitVector) -> Result<BitVector, PirError> {
        if self.len != other.len {
            return Err(PirError::LengthMismatch {
                expected: self.len,
                actual: other.len,
            });
        }
        let bytes = self
            .bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| a ^ b)
            .collect();
        Ok(BitVector {
            len: self.len,
            bytes,
        })
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }
}

/// The two masks a client submits, one per replica. Each mask alone is
/// uniformly random; their XOR is the unit vector at the target index. The
/// target never leaves the client.
#[derive(Debug, Clone)]
pub struct PirQueryPair {
    pub first: BitVector,
    pub second: BitVector,
    target: usize,
}

impl PirQueryPair {
    pub fn target(&self) -> usize {
        self.target
    }
}

/// A k-anonymity request: `k` distinct indices, one of which is real. The
/// position of the real index is client-side state only.
#[derive(Debug, Clone)]
pub struct KanonQuery {
    pub indices: Vec<usize>,
    true_pos: usize,
}

impl KanonQuery {
    pub fn true_pos(&self) -> usize {
        self.true_pos
    }

    pub fn target(&self) -> usize {
        self.indices[self.true_pos]
    }
}

/// Draws a mask pair for `target` over an `n`-record table: the first mask
/// uniformly at random, the second as the first with the target bit flipped.
pub fn make_pir_queries<R: Rng + ?Sized>(
    n: usize,
    target: usize,
    rng: &mut R,
) -> Result<PirQueryPair, PirError> {
    if target >= n {
        return Err(PirError::IndexOutOfRange { index: target, n });
    }
    let first = BitVector::random(n, rng);
    let mut second = first.clone();
    second.set(target, !second.get(target));
    Ok(PirQueryPair {
        first,
        second,
        target,
    })
}

/// XOR of all records whose mask bit is set. The all-zero mask yields an
/// all-zero record.
pub fn server_answer(table: &RecordTable, mask: &BitVector) -> Result<Vec<u8>, PirError> {
    if mask.len() != table.len() {
        return Err(PirError::LengthMismatch {
            expected: table.len(),
            actual: mask.len(),
        });
    }
    let mut answer = vec![0u8; table.record_len()];
    for (i, record) in table.records().iter().enumerate() {
        if mask.get(i) {
            for (a, b) in answer.iter_mut().zip(record) {
                *a ^= b;
            }
        }
    }
    Ok(answer)
}

/// Bytewise XOR of the two replica responses; for a well-formed query pair
/// this is exactly the target record.
pub fn combine(first: &[u8], second: &[u8]) -> Result<Vec<u8>, PirError> {
    if first.len() != second.len() {
        return Err(PirError::LengthMismatch {
            expected: first.len(),
            actual: second.len(),
        });
    }
    Ok(first.iter().zip(second).map(|(a, b)| a ^ b).collect())
}

/// Draws `k - 1` distinct decoy indices uniformly from the non-target
/// indices, then permutes the full set uniformly so the true position is
/// uniform on `[0, k)`.
pub fn make_kanon_query<R: Rng + ?Sized>(
    n: usize,
    target: usize,
    k: usize,
    rng: &mut R,
) -> Result<KanonQuery, PirError> {
    if target >= n {
        return Err(PirError::IndexOutOfRange { index: target, n });
    }
    if k == 0 {
        return Err(PirError::KTooSmall);
    }
    if k > n {
        return Err(PirError::KTooLarge { k, n });
    }
    // Sample k-1 from [0, n-1) and shift values at or above the target up by
    // one, which is a uniform sample from [0, n) \ {target}.
    let mut indices: Vec<usize> = rand::seq::index::sample(rng, n - 1, k - 1)
        .into_iter()
        .map(|j| if j >= target { j + 1 } else { j })
        .collect();
    indices.push(target);
    indices.shuffle(rng);
    let true_pos = indices
        .iter()
        .position(|&i| i == target)
        .expect("target is present by construction");
    Ok(KanonQuery { indices, true_pos })
}

/// Picks the real record out of the `k` returned ones.
pub fn kanon_filter(responses: &[Vec<u8>], true_pos: usize) -> Result<Vec<u8>, PirError> {
    responses
        .get(true_pos)
        .cloned()
        .ok_or(PirError::PositionOutOfRange {
            position: true_pos,
            len: responses.len(),
        })
}
