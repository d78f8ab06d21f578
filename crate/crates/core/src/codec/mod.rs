//! Bit-level chain shared by transmitter and receiver.
//!
//! Bits are `u8` values in `{0, 1}`. LLR sign convention everywhere:
//! positive means bit 0 is more likely.

mod conv;
mod crc;
mod qpsk;

pub(crate) use conv::fec_decode_with;
pub use conv::{fec_decode, fec_encode, mother_length, ConvCode, DecodeOutput};
pub use crc::{crc16, crc16_attach, crc16_check, CRC_LEN};
pub use qpsk::{qpsk_llr, qpsk_llrs_into, qpsk_modulate, LLR_CLIP};
