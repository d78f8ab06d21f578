//! CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.

use crate::error::{invalid, Result};

pub const CRC_LEN: usize = 16;

const POLY: u16 = 0x1021;
const INIT: u16 = 0xFFFF;

/// CRC register over a bit sequence, most significant bit first.
pub fn crc16(bits: &[u8]) -> u16 {
    bits.iter().fold(INIT, |crc, &b| {
        let feedback = ((crc >> 15) as u8 ^ (b & 1)) != 0;
        let shifted = crc << 1;
        if feedback {
            shifted ^ POLY
        } else {
            shifted
        }
    })
}

pub fn crc16_attach(bits: &[u8]) -> Vec<u8> {
    let crc = crc16(bits);
    let mut out = Vec::with_capacity(bits.len() + CRC_LEN);
    out.extend_from_slice(bits);
    out.extend((0..CRC_LEN).rev().map(|i| ((crc >> i) & 1) as u8));
    out
}

pub fn crc16_check(bits: &[u8]) -> Result<bool> {
    if bits.len() <= CRC_LEN {
        return invalid(format!("CRC check needs more than {CRC_LEN} bits, got {}", bits.len()));
    }
    let (data, tail) = bits.split_at(bits.len() - CRC_LEN);
    let expected = crc16(data);
    let received = tail.iter().fold(0u16, |acc, &b| (acc << 1) | (b & 1) as u16);
    Ok(expected == received)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent byte-wise table implementation used as the reference.
    fn reference_crc(bytes: &[u8]) -> u16 {
        let mut table = [0u16; 256];
        for (i, slot) in table.iter_mut().enumerate() {
            let mut c = (i as u16) << 8;
            for _ in 0..8 {
                c = if c & 0x8000 != 0 { (c << 1) ^ 0x1021 } else { c << 1 };
            }
            *slot = c;
        }
        bytes.iter().fold(0xFFFFu16, |crc, &b| {
            (crc << 8) ^ table[(((crc >> 8) as u8) ^ b) as usize]
        })
    }

    fn byte_bits(bytes: &[u8]) -> Vec<u8> {
        bytes
            .iter()
            .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1))
            .collect()
    }

    #[test]
    fn standard_check_value() {
        assert_eq!(reference_crc(b"123456789"), 0x29B1);
        assert_eq!(crc16(&byte_bits(b"123456789")), 0x29B1);
    }

    #[test]
    fn agrees_with_reference_on_random_bytes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for len in [1usize, 7, 20, 22] {
            let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            assert_eq!(crc16(&byte_bits(&bytes)), reference_crc(&bytes));
        }
    }

    #[test]
    fn all_zero_block_matches_reference() {
        let block = vec![0u8; 176];
        let expected = reference_crc(&[0u8; 20]) == 0;
        assert_eq!(crc16_check(&block).unwrap(), expected);
        assert!(!expected);
    }

    #[test]
    fn round_trip_and_last_bit_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let p: Vec<u8> = (0..160).map(|_| rng.random_range(0..2)).collect();
            let mut block = crc16_attach(&p);
            assert_eq!(block.len(), 176);
            assert!(crc16_check(&block).unwrap());
            *block.last_mut().unwrap() ^= 1;
            assert!(!crc16_check(&block).unwrap());
        }
    }

    #[test]
    fn detects_every_single_and_sampled_double_bit_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p: Vec<u8> = (0..160).map(|_| rng.random_range(0..2)).collect();
        let block = crc16_attach(&p);
        for i in 0..block.len() {
            let mut b = block.clone();
            b[i] ^= 1;
            assert!(!crc16_check(&b).unwrap(), "single flip at {i} undetected");
        }
        for _ in 0..5000 {
            let i = rng.random_range(0..block.len());
            let j = rng.random_range(0..block.len());
            if i == j {
                continue;
            }
            let mut b = block.clone();
            b[i] ^= 1;
            b[j] ^= 1;
            assert!(!crc16_check(&b).unwrap(), "double flip at {i},{j} undetected");
        }
    }

    #[test]
    fn too_short_is_rejected() {
        assert!(crc16_check(&[0u8; 16]).is_err());
    }
}
