//! Tail-biting convolutional code, K = 7, from a nested low-rate family whose
//! first two generators are the classic 133/171 octal pair. The mother
//! codeword starts with the interleaved rate-1/2 pair and continues with one
//! stream per further generator, so a prefix of 2n bits is exactly the
//! rate-1/2 code and longer codewords add fresh parity before any repetition.

use crate::codec::crc::{crc16_check, CRC_LEN};
use crate::error::{invalid, Result};

const CONSTRAINT: usize = 7;
const MEMORY: usize = CONSTRAINT - 1;
const STATES: usize = 1 << MEMORY;
const WINDOWS: usize = 1 << CONSTRAINT;

/// Greedy free-distance extension of 133/171: rates 1/2 .. 1/8 have free
/// distances 10, 15, 20, 25, 30, 36, 40.
pub const GENERATORS: [usize; 8] = [0o133, 0o171, 0o165, 0o117, 0o135, 0o157, 0o127, 0o115];
const STREAMS: usize = GENERATORS.len();

/// Trellis steps replayed on each side of the block by the wrap-around decoder.
const WRAP: usize = 48;

/// Length of the unpunctured mother codeword for `n_info` input bits.
pub fn mother_length(n_info: usize) -> usize {
    STREAMS * n_info
}

/// (trellis step, generator) carried by mother position `i`.
#[inline]
fn mother_slot(i: usize, n: usize) -> (usize, usize) {
    if i < 2 * n {
        (i / 2, i % 2)
    } else {
        let j = i - 2 * n;
        (j % n, 2 + j / n)
    }
}

/// The mother code. Holds the per-branch expected outputs.
#[derive(Debug, Clone)]
pub struct ConvCode {
    // Bit j of entry `window` is the output of generator j; the window holds
    // the current input at bit 6.
    outputs: [u8; WINDOWS],
}

impl Default for ConvCode {
    fn default() -> Self {
        Self::new()
    }
}

impl ConvCode {
    pub fn new() -> Self {
        let mut outputs = [0u8; WINDOWS];
        for (window, out) in outputs.iter_mut().enumerate() {
            *out = GENERATORS
                .iter()
                .enumerate()
                .map(|(j, g)| (((window & g).count_ones() & 1) as u8) << j)
                .sum();
        }
        debug_assert!(GENERATORS.iter().all(|g| g & 1 == 1 && g >> MEMORY == 1));
        Self { outputs }
    }

    /// Tail-biting encode: the register starts loaded with the last six inputs.
    /// Output is in mother order.
    pub fn encode(&self, info: &[u8]) -> Vec<u8> {
        let n = info.len();
        if n == 0 {
            return Vec::new();
        }
        let mut state = 0usize;
        for j in 0..MEMORY {
            let bit = info[(n + n * MEMORY - 1 - j) % n] as usize & 1;
            state |= bit << (MEMORY - 1 - j);
        }
        let mut per_step = Vec::with_capacity(n);
        for &u in info {
            let window = ((u as usize & 1) << MEMORY) | state;
            per_step.push(self.outputs[window]);
            state = window >> 1;
        }
        (0..mother_length(n))
            .map(|i| {
                let (t, g) = mother_slot(i, n);
                (per_step[t] >> g) & 1
            })
            .collect()
    }

    /// Wrap-around soft Viterbi decoding of a tail-biting mother codeword
    /// (LLRs in mother order, zero where a bit was never sent).
    pub fn decode(&self, llrs: &[f64]) -> Vec<u8> {
        let n = llrs.len() / STREAMS;
        if n == 0 {
            return Vec::new();
        }
        let mut per_step = vec![[0.0f64; STREAMS]; n];
        for (i, &l) in llrs.iter().enumerate().take(mother_length(n)) {
            let (t, g) = mother_slot(i, n);
            per_step[t][g] = l;
        }
        let steps = n + 2 * WRAP;
        let mut metric = [0.0f64; STATES];
        let mut next = [0.0f64; STATES];
        // Every generator taps both ends of the register, so the two branches
        // into a state carry complementary outputs and opposite metrics. The
        // metric of an output byte is the sum of two nibble lookups.
        let mut lo = [0.0f64; 16];
        let mut hi = [0.0f64; 16];
        let mut decisions = vec![0u64; steps];
        for (t, dec) in decisions.iter_mut().enumerate() {
            let k = (t + n * WRAP.div_ceil(n) - WRAP) % n;
            let l = &per_step[k];
            lo[0] = l[..4].iter().sum();
            hi[0] = l[4..].iter().sum();
            for p in 1..16usize {
                let j = p.trailing_zeros() as usize;
                lo[p] = lo[p & (p - 1)] - 2.0 * l[j];
                hi[p] = hi[p & (p - 1)] - 2.0 * l[4 + j];
            }
            let mut bits = 0u64;
            for (ns, slot) in next.iter_mut().enumerate() {
                let w0 = ns << 1;
                let out = self.outputs[w0] as usize;
                let b = lo[out & 15] + hi[out >> 4];
                let m0 = metric[w0 & (STATES - 1)] + b;
                let m1 = metric[(w0 | 1) & (STATES - 1)] - b;
                if m1 > m0 {
                    *slot = m1;
                    bits |= 1 << ns;
                } else {
                    *slot = m0;
                }
            }
            *dec = bits;
            std::mem::swap(&mut metric, &mut next);
        }
        let mut state = metric
            .iter()
            .enumerate()
            .fold(
                (0usize, f64::NEG_INFINITY),
                |best, (s, &m)| if m > best.1 { (s, m) } else { best },
            )
            .0;
        let mut out = vec![0u8; n];
        for t in (0..steps).rev() {
            if (WRAP..WRAP + n).contains(&t) {
                out[t - WRAP] = (state >> (MEMORY - 1)) as u8 & 1;
            }
            let b = ((decisions[t] >> state) & 1) as usize;
            state = ((state << 1) | b) & (STATES - 1);
        }
        out
    }
}

/// Encodes and rate-matches to exactly `n_coded_bits` by circular
/// repetition or truncation of the mother codeword. Rates above 1/2 are
/// refused: truncating the rate-1/2 prefix leaves tail-biting blocks that
/// are not reliably decodable even without noise.
pub fn fec_encode(bits: &[u8], n_coded_bits: usize) -> Result<Vec<u8>> {
    if bits.is_empty() {
        return invalid("cannot encode an empty block");
    }
    if n_coded_bits < 2 * bits.len() {
        return invalid(format!(
            "{n_coded_bits} coded bits cannot carry {} information bits at rate 1/2 or below",
            bits.len()
        ));
    }
    let mother = ConvCode::new().encode(bits);
    Ok((0..n_coded_bits).map(|i| mother[i % mother.len()]).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutput {
    /// Hard decisions on the information bits, CRC included.
    pub bits: Vec<u8>,
    pub crc_ok: bool,
}

/// Combines repeated LLRs onto the mother codeword, decodes, and checks the
/// trailing CRC-16.
pub fn fec_decode(llrs: &[f64], n_info_bits: usize) -> Result<DecodeOutput> {
    fec_decode_with(&ConvCode::new(), llrs, n_info_bits)
}

pub(crate) fn fec_decode_with(code: &ConvCode, llrs: &[f64], n_info_bits: usize) -> Result<DecodeOutput> {
    if n_info_bits == 0 {
        return invalid("n_info_bits must be positive");
    }
    if llrs.len() < 2 * n_info_bits {
        return invalid(format!(
            "{} LLRs cannot carry {n_info_bits} information bits at rate 1/2 or below",
            llrs.len()
        ));
    }
    let mut mother = vec![0.0; mother_length(n_info_bits)];
    let len = mother.len();
    for (i, &l) in llrs.iter().enumerate() {
        mother[i % len] += l;
    }
    let bits = code.decode(&mother);
    let crc_ok = bits.len() > CRC_LEN && crc16_check(&bits)?;
    Ok(DecodeOutput { bits, crc_ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::crc16_attach;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random_bits(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
        (0..n).map(|_| rng.random_range(0..2)).collect()
    }

    fn perfect_llrs(code: &[u8], a: f64) -> Vec<f64> {
        code.iter().map(|&c| if c == 0 { a } else { -a }).collect()
    }

    #[test]
    fn rate_half_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let info = crc16_attach(&random_bits(&mut rng, 160));
        let cw = fec_encode(&info, 352).unwrap();
        assert_eq!(cw.len(), 352);
        let out = fec_decode(&perfect_llrs(&cw, 20.0), 176).unwrap();
        assert_eq!(out.bits, info);
        assert!(out.crc_ok);
    }

    #[test]
    fn repeated_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n_coded in [1440usize, 500, 352] {
            let info = crc16_attach(&random_bits(&mut rng, 160));
            let cw = fec_encode(&info, n_coded).unwrap();
            assert_eq!(cw.len(), n_coded);
            let out = fec_decode(&perfect_llrs(&cw, 10.0), 176).unwrap();
            assert_eq!(out.bits, info, "n_coded = {n_coded}");
        }
        assert!(fec_encode(&[0; 176], 351).is_err());
        assert!(fec_decode(&[1.0; 351], 176).is_err());
    }

    #[test]
    fn zero_input_gives_zero_codeword() {
        let cw = fec_encode(&[0u8; 176], 1440).unwrap();
        assert!(cw.iter().all(|&b| b == 0));
    }

    #[test]
    fn code_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_bits(&mut rng, 176);
            let b = random_bits(&mut rng, 176);
            let x: Vec<u8> = a.iter().zip(&b).map(|(p, q)| p ^ q).collect();
            let ea = fec_encode(&a, 1440).unwrap();
            let eb = fec_encode(&b, 1440).unwrap();
            let ex = fec_encode(&x, 1440).unwrap();
            let sum: Vec<u8> = ea.iter().zip(&eb).map(|(p, q)| p ^ q).collect();
            assert_eq!(ex, sum);
        }
    }

    #[test]
    fn rejects_rate_above_half_and_bad_lengths() {
        assert!(fec_encode(&[1, 0, 1], 2).is_err());
        assert!(fec_encode(&[], 10).is_err());
        assert!(fec_decode(&[1.0; 10], 20).is_err());
        assert!(fec_decode(&[1.0; 10], 0).is_err());
    }

    #[test]
    fn uninformative_llrs_fail_crc() {
        let out = fec_decode(&vec![0.0; 1440], 176).unwrap();
        assert_eq!(out.bits.len(), 176);
        assert!(!out.crc_ok);
    }

    #[test]
    fn short_blocks_wrap() {
        let code = ConvCode::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [1usize, 3, 6, 7, 12] {
            let info = random_bits(&mut rng, n);
            let cw = code.encode(&info);
            let out = code.decode(&perfect_llrs(&cw, 5.0));
            assert_eq!(out.len(), n);
            if n >= MEMORY {
                assert_eq!(out, info, "n = {n}");
            }
        }
    }

    /// Plain shift-register 133/171 encoder, tail-biting, outputs interleaved.
    fn reference_rate_half(info: &[u8]) -> Vec<u8> {
        let taps = |g: u32| -> Vec<usize> { (0..7).filter(|d| g >> (6 - d) & 1 == 1).collect() };
        let (t1, t2) = (taps(0o133), taps(0o171));
        let n = info.len() as isize;
        let at = |k: isize| info[k.rem_euclid(n) as usize];
        let mut out = Vec::new();
        for k in 0..n {
            for t in [&t1, &t2] {
                out.push(t.iter().fold(0, |acc, &d| acc ^ at(k - d as isize)));
            }
        }
        out
    }

    #[test]
    fn prefix_is_the_rate_half_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [7usize, 40, 176] {
            let info = random_bits(&mut rng, n);
            let cw = fec_encode(&info, 8 * n).unwrap();
            assert_eq!(cw[..2 * n], reference_rate_half(&info)[..], "n = {n}");
            assert_eq!(fec_encode(&info, 2 * n).unwrap(), reference_rate_half(&info));
        }
    }

    #[test]
    fn low_rate_streams_are_not_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let info = crc16_attach(&random_bits(&mut rng, 160));
        let cw = fec_encode(&info, 1440).unwrap();
        let n = info.len();
        let stream = |k: usize| &cw[(2 + k) * n..(3 + k) * n];
        for k in 0..STREAMS - 3 {
            assert_ne!(stream(k), stream(k + 1));
        }
        assert_eq!(cw[mother_length(n)..], cw[..1440 - mother_length(n)]);
    }

    #[test]
    fn awgn_waterfall_baseline() {
        // BPSK over AWGN, Es/N0 = 10 dB, rate exactly 1/2.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n0 = 10f64.powf(-1.0);
        let noise = Normal::new(0.0, (n0 / 2.0).sqrt()).unwrap();
        let code = ConvCode::new();
        let blocks = 10_000;
        let mut errors = 0;
        for _ in 0..blocks {
            let info = crc16_attach(&random_bits(&mut rng, 160));
            let cw = fec_encode(&info, 352).unwrap();
            let llrs: Vec<f64> = cw
                .iter()
                .map(|&c| {
                    let y = 1.0 - 2.0 * c as f64 + noise.sample(&mut rng);
                    4.0 * y / n0
                })
                .collect();
            let out = fec_decode_with(&code, &llrs, 176).unwrap();
            if !out.crc_ok || out.bits != info {
                errors += 1;
            }
        }
        assert!((errors as f64 / blocks as f64) < 1e-3, "{errors} block errors");
    }
}
