//! Per-UE transmit grid: payload -> CRC -> FEC -> pilot indices from the
//! codeword prefix -> pilot blocks and QPSK data symbols.

use num_complex::Complex64;

use crate::codec::{crc16_attach, fec_encode, qpsk_modulate, CRC_LEN};
use crate::error::{invalid, Result};
use crate::pilots::{PilotLayout, PilotPool, PilotSelection};

pub const DEFAULT_TRANSPORT_BLOCK: usize = 160;

/// Resource grid dimensions and pilot policy shared by every UE of a drop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceConfig {
    pub n_pilot_re: usize,
    pub n_data_re: usize,
    pub n_rx: usize,
    pub layout: PilotLayout,
    pub pilot_boost_db: f64,
    pub transport_block_size: usize,
}

impl ResourceConfig {
    pub fn new(layout: PilotLayout, n_data_re: usize, n_rx: usize) -> Result<Self> {
        let cfg = Self {
            n_pilot_re: layout.total_pilot_re(),
            n_data_re,
            n_rx,
            layout,
            pilot_boost_db: 0.0,
            transport_block_size: DEFAULT_TRANSPORT_BLOCK,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_boost(mut self, pilot_boost_db: f64) -> Self {
        self.pilot_boost_db = pilot_boost_db;
        self
    }

    pub fn with_transport_block(mut self, bits: usize) -> Result<Self> {
        self.transport_block_size = bits;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layout.total_pilot_re() != self.n_pilot_re {
            return invalid(format!(
                "layout uses {} pilot resource elements but the grid has {}",
                self.layout.total_pilot_re(),
                self.n_pilot_re
            ));
        }
        if self.n_rx == 0 {
            return invalid("at least one receive antenna is required");
        }
        if self.transport_block_size == 0 {
            return invalid("transport block size must be positive");
        }
        if self.n_data_re < self.info_bits() {
            return invalid(format!(
                "{} data resource elements cannot carry {} bits at code rate 1/2 or below",
                self.n_data_re,
                self.info_bits()
            ));
        }
        if 2 * self.n_data_re < self.layout.w() * self.layout.bits_per_index() {
            return invalid("codeword too short to select pilots");
        }
        if !self.pilot_boost_db.is_finite() {
            return invalid("pilot boost must be finite");
        }
        Ok(())
    }

    /// Transport block plus CRC.
    pub fn info_bits(&self) -> usize {
        self.transport_block_size + CRC_LEN
    }

    pub fn n_coded_bits(&self) -> usize {
        2 * self.n_data_re
    }

    /// Resource elements per pilot block.
    pub fn block_len(&self) -> usize {
        self.layout.pool_size()
    }

    pub fn pilot_amplitude(&self) -> f64 {
        10f64.powf(self.pilot_boost_db / 20.0)
    }

    /// Energy of one transmitted pilot sequence, boost included.
    pub fn pilot_sequence_energy(&self) -> f64 {
        self.block_len() as f64 * 10f64.powf(self.pilot_boost_db / 10.0)
    }
}

/// One UE's transmitted grid plus the bits it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct UeTransmission {
    pub ue_id: usize,
    pub payload: Vec<u8>,
    pub codeword: Vec<u8>,
    pub pilot_selection: PilotSelection,
    /// One block per pilot position, `block_len` symbols each.
    pub pilot_symbols: Vec<Vec<Complex64>>,
    pub data_symbols: Vec<Complex64>,
}

impl UeTransmission {
    pub fn pilot_energy(&self) -> f64 {
        self.pilot_symbols.iter().flatten().map(|z| z.norm_sqr()).sum()
    }
}

/// Reads pilot index `p` from codeword bits `[p*m, (p+1)*m)`, MSB first,
/// reduced modulo the pool size.
pub fn select_pilots_from_codeword(codeword: &[u8], layout: &PilotLayout) -> Result<PilotSelection> {
    let m = layout.bits_per_index();
    let need = layout.w() * m;
    if codeword.len() < need {
        return invalid(format!(
            "codeword has {} bits, pilot selection needs {need}",
            codeword.len()
        ));
    }
    let indices = codeword[..need]
        .chunks_exact(m)
        .map(|chunk| chunk.iter().fold(0usize, |v, &b| (v << 1) | (b & 1) as usize) % layout.pool_size())
        .collect();
    Ok(PilotSelection::new(indices))
}

pub fn build_ue_transmission(
    ue_id: usize,
    payload: &[u8],
    config: &ResourceConfig,
    pool: &PilotPool,
) -> Result<UeTransmission> {
    if payload.len() != config.transport_block_size {
        return invalid(format!(
            "payload has {} bits, transport block is {}",
            payload.len(),
            config.transport_block_size
        ));
    }
    let block = crc16_attach(payload);
    let mut tx = from_info_block(&block, config, pool)?;
    tx.ue_id = ue_id;
    Ok(tx)
}

/// Rebuilds a transmission from CRC-protected information bits. The
/// receiver uses this to reconstruct decoded UEs.
pub fn from_info_block(block: &[u8], config: &ResourceConfig, pool: &PilotPool) -> Result<UeTransmission> {
    if pool.length() != config.block_len() {
        return invalid(format!(
            "pool length {} does not match pilot block length {}",
            pool.length(),
            config.block_len()
        ));
    }
    if block.len() != config.info_bits() {
        return invalid(format!(
            "information block has {} bits, expected {}",
            block.len(),
            config.info_bits()
        ));
    }
    let codeword = fec_encode(block, config.n_coded_bits())?;
    let pilot_selection = select_pilots_from_codeword(&codeword, &config.layout)?;
    let amp = config.pilot_amplitude();
    let pilot_symbols = pilot_selection
        .indices
        .iter()
        .map(|&i| pool.sequence(i).iter().map(|z| z * amp).collect())
        .collect();
    let data_symbols = qpsk_modulate(&codeword)?;
    Ok(UeTransmission {
        ue_id: 0,
        payload: block[..config.transport_block_size].to_vec(),
        codeword,
        pilot_selection,
        pilot_symbols,
        data_symbols,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn payload(rng: &mut ChaCha8Rng) -> Vec<u8> {
        (0..DEFAULT_TRANSPORT_BLOCK).map(|_| rng.random_range(0..2)).collect()
    }

    #[test]
    fn msb_first_readout() {
        let layout = PilotLayout::imp(32, 2).unwrap();
        assert_eq!(layout.pool_size(), 16);
        let cw = [0, 0, 1, 1, 0, 1, 0, 1, 1, 1];
        assert_eq!(select_pilots_from_codeword(&cw, &layout).unwrap().indices, vec![3, 5]);
    }

    #[test]
    fn modulo_readout() {
        let layout = PilotLayout::imp(24, 2).unwrap();
        let cw = [1, 1, 0, 1, 0, 0, 0, 0];
        assert_eq!(select_pilots_from_codeword(&cw, &layout).unwrap().indices, vec![1, 0]);
    }

    #[test]
    fn zero_codeword_selects_zero() {
        for layout in [
            PilotLayout::tsp(24).unwrap(),
            PilotLayout::imp(24, 2).unwrap(),
            PilotLayout::imp(24, 3).unwrap(),
        ] {
            let s = select_pilots_from_codeword(&[0u8; 64], &layout).unwrap();
            assert!(s.indices.iter().all(|&i| i == 0));
        }
        assert!(select_pilots_from_codeword(&[0u8; 7], &PilotLayout::imp(24, 2).unwrap()).is_err());
    }

    #[test]
    fn imp_keeps_total_pilot_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = payload(&mut rng);
        let tsp_cfg = ResourceConfig::new(PilotLayout::tsp(24).unwrap(), 720, 2).unwrap();
        let imp_cfg = ResourceConfig::new(PilotLayout::imp(24, 2).unwrap(), 720, 2).unwrap();
        let tsp = build_ue_transmission(0, &p, &tsp_cfg, &PilotPool::new(24).unwrap()).unwrap();
        let imp = build_ue_transmission(0, &p, &imp_cfg, &PilotPool::new(12).unwrap()).unwrap();
        assert_eq!(tsp.pilot_symbols.len(), 1);
        assert_eq!(imp.pilot_symbols.len(), 2);
        assert!(imp.pilot_symbols.iter().all(|b| b.len() == 12));
        assert!((tsp.pilot_energy() - 24.0).abs() < 1e-9);
        assert!((imp.pilot_energy() - 24.0).abs() < 1e-9);
        // Each IMP pilot carries half the energy: -3.01 dB.
        let per = imp.pilot_symbols[0].iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert!((10.0 * (per / 24.0).log10() + 10.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn boost_scales_pilot_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = ResourceConfig::new(PilotLayout::imp(24, 2).unwrap(), 720, 2)
            .unwrap()
            .with_boost(10.0 * 2f64.log10());
        let tx = build_ue_transmission(3, &payload(&mut rng), &cfg, &PilotPool::new(12).unwrap()).unwrap();
        for z in tx.pilot_symbols.iter().flatten() {
            assert!((z.norm_sqr() - 2.0).abs() < 1e-9);
        }
        let data_power = tx.data_symbols.iter().map(|d| d.norm_sqr()).sum::<f64>() / 720.0;
        assert!((data_power - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_self_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = ResourceConfig::new(PilotLayout::imp(24, 3).unwrap(), 720, 2).unwrap();
        let pool = PilotPool::new(8).unwrap();
        for _ in 0..20 {
            let p = payload(&mut rng);
            let a = build_ue_transmission(1, &p, &cfg, &pool).unwrap();
            let b = build_ue_transmission(1, &p, &cfg, &pool).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.codeword.len(), 1440);
            assert_eq!(a.data_symbols.len(), 720);
            assert_eq!(
                select_pilots_from_codeword(&a.codeword, &cfg.layout).unwrap(),
                a.pilot_selection
            );
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let cfg = ResourceConfig::new(PilotLayout::imp(24, 2).unwrap(), 720, 2).unwrap();
        assert!(build_ue_transmission(0, &[0u8; 10], &cfg, &PilotPool::new(12).unwrap()).is_err());
        assert!(build_ue_transmission(0, &[0u8; 160], &cfg, &PilotPool::new(24).unwrap()).is_err());
        assert!(ResourceConfig::new(PilotLayout::tsp(24).unwrap(), 50, 2).is_err());
        assert!(ResourceConfig::new(PilotLayout::tsp(24).unwrap(), 720, 0).is_err());
    }
}
