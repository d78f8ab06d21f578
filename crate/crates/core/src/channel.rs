//! Multi-UE superposition through Rayleigh block fading plus AWGN.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{invalid, Result};
use crate::tx::{ResourceConfig, UeTransmission};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelMode {
    /// One gain per (UE, antenna) shared by every block.
    Flat,
    /// Independent gains for every pilot block and for the data block.
    PerBlock,
}

/// Complex gains indexed `[ue][antenna][block]`; block `w` is the data block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub mode: ChannelMode,
    pub gains: Vec<Vec<Vec<Complex64>>>,
}

impl ChannelRealization {
    pub fn n_ue(&self) -> usize {
        self.gains.len()
    }

    pub fn gain(&self, ue: usize, antenna: usize, block: usize) -> Complex64 {
        self.gains[ue][antenna][block]
    }

    /// Data-block gains of one UE across antennas.
    pub fn data_gains(&self, ue: usize) -> Vec<Complex64> {
        self.gains[ue].iter().map(|a| *a.last().expect("block gains")).collect()
    }
}

/// Unit-variance circular complex Gaussian sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

pub fn draw_channel<R: Rng + ?Sized>(
    n_ue: usize,
    config: &ResourceConfig,
    mode: ChannelMode,
    rng: &mut R,
) -> ChannelRealization {
    let n_blocks = config.layout.w() + 1;
    let gains = (0..n_ue)
        .map(|_| {
            (0..config.n_rx)
                .map(|_| match mode {
                    ChannelMode::Flat => vec![complex_gaussian(rng); n_blocks],
                    ChannelMode::PerBlock => (0..n_blocks).map(|_| complex_gaussian(rng)).collect(),
                })
                .collect()
        })
        .collect();
    ChannelRealization { mode, gains }
}

/// Received symbols per antenna: `pilot_blocks[block][antenna][re]` and
/// `data_block[antenna][re]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RxGrid {
    pub pilot_blocks: Vec<Vec<Vec<Complex64>>>,
    pub data_block: Vec<Vec<Complex64>>,
    /// `E|n|^2` per resource element.
    pub noise_var: f64,
}

impl RxGrid {
    pub fn zeros(config: &ResourceConfig, noise_var: f64) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            pilot_blocks: vec![vec![vec![zero; config.block_len()]; config.n_rx]; config.layout.w()],
            data_block: vec![vec![zero; config.n_data_re]; config.n_rx],
            noise_var,
        }
    }

    pub fn n_rx(&self) -> usize {
        self.data_block.len()
    }

    pub fn w(&self) -> usize {
        self.pilot_blocks.len()
    }

    pub fn energy(&self) -> f64 {
        self.pilot_blocks
            .iter()
            .flatten()
            .chain(self.data_block.iter())
            .flatten()
            .map(|x| x.norm_sqr())
            .sum()
    }

    /// Checks that the grid has the shape `config` describes.
    pub fn check_shape(&self, config: &ResourceConfig) -> Result<()> {
        let ok = self.pilot_blocks.len() == config.layout.w()
            && self
                .pilot_blocks
                .iter()
                .all(|b| b.len() == config.n_rx && b.iter().all(|a| a.len() == config.block_len()))
            && self.data_block.len() == config.n_rx
            && self.data_block.iter().all(|a| a.len() == config.n_data_re);
        if ok {
            Ok(())
        } else {
            invalid("received grid does not match the resource configuration")
        }
    }
}

/// Noise variance for a per-antenna data-RE SNR with unit symbol power.
pub fn noise_var_for_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Adds `gain * symbols` of one UE onto `grid`, every block.
pub(crate) fn accumulate(grid: &mut RxGrid, tx: &UeTransmission, gains: &[Vec<Complex64>], sign: f64) {
    let w = grid.pilot_blocks.len();
    for (ant, g) in gains.iter().enumerate() {
        for (b, block) in tx.pilot_symbols.iter().enumerate() {
            let h = g[b] * sign;
            for (y, z) in grid.pilot_blocks[b][ant].iter_mut().zip(block) {
                *y += h * z;
            }
        }
        let h = g[w] * sign;
        for (y, d) in grid.data_block[ant].iter_mut().zip(&tx.data_symbols) {
            *y += h * d;
        }
    }
}

pub fn apply_channel<R: Rng + ?Sized>(
    transmissions: &[UeTransmission],
    realization: &ChannelRealization,
    config: &ResourceConfig,
    snr_db: f64,
    rng: &mut R,
) -> Result<RxGrid> {
    if realization.n_ue() < transmissions.len() {
        return invalid(format!(
            "channel covers {} UEs, {} transmit",
            realization.n_ue(),
            transmissions.len()
        ));
    }
    let noise_var = noise_var_for_snr(snr_db);
    let mut grid = RxGrid::zeros(config, noise_var);
    for (k, tx) in transmissions.iter().enumerate() {
        let gains = &realization.gains[k];
        let shape_ok = gains.len() == config.n_rx
            && gains.iter().all(|g| g.len() == config.layout.w() + 1)
            && tx.pilot_symbols.len() == config.layout.w()
            && tx.pilot_symbols.iter().all(|b| b.len() == config.block_len())
            && tx.data_symbols.len() == config.n_data_re;
        if !shape_ok {
            return invalid(format!("UE {k} does not match the grid dimensions"));
        }
        accumulate(&mut grid, tx, gains, 1.0);
    }
    if noise_var > 0.0 {
        let scale = noise_var.sqrt();
        for y in grid
            .pilot_blocks
            .iter_mut()
            .flatten()
            .chain(grid.data_block.iter_mut())
            .flatten()
        {
            *y += complex_gaussian(rng) * scale;
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilots::{PilotLayout, PilotPool};
    use crate::tx::build_ue_transmission;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(w: usize) -> (ResourceConfig, PilotPool) {
        let layout = if w == 1 {
            PilotLayout::tsp(24).unwrap()
        } else {
            PilotLayout::imp(24, w).unwrap()
        };
        let cfg = ResourceConfig::new(layout, 720, 2).unwrap();
        let pool = PilotPool::new(cfg.block_len()).unwrap();
        (cfg, pool)
    }

    fn ue(rng: &mut ChaCha8Rng, id: usize, cfg: &ResourceConfig, pool: &PilotPool) -> UeTransmission {
        let p: Vec<u8> = (0..cfg.transport_block_size).map(|_| rng.random_range(0..2)).collect();
        build_ue_transmission(id, &p, cfg, pool).unwrap()
    }

    #[test]
    fn empty_realization() {
        let (cfg, _) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(draw_channel(0, &cfg, ChannelMode::Flat, &mut rng).n_ue(), 0);
    }

    #[test]
    fn flat_gains_have_unit_power_and_repeat_per_block() {
        let (cfg, _) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let real = draw_channel(n, &cfg, ChannelMode::Flat, &mut rng);
        let mut power = 0.0;
        let mut mean = Complex64::new(0.0, 0.0);
        for g in &real.gains {
            for a in g {
                assert!(a.iter().all(|&x| x == a[0]));
                power += a[0].norm_sqr();
                mean += a[0];
            }
        }
        let count = (n * cfg.n_rx) as f64;
        assert!((power / count - 1.0).abs() < 0.01);
        assert!((mean / count).norm() < 0.01);
    }

    #[test]
    fn per_block_gains_are_uncorrelated() {
        let (cfg, _) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let real = draw_channel(n, &cfg, ChannelMode::PerBlock, &mut rng);
        let (mut cross, mut p0, mut p1) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
        for g in &real.gains {
            let (a, b) = (g[0][0], g[0][1]);
            cross += a * b.conj();
            p0 += a.norm_sqr();
            p1 += b.norm_sqr();
        }
        let rho = cross.norm() / (p0 * p1).sqrt();
        assert!(rho < 0.01, "correlation {rho}");
    }

    #[test]
    fn identity_channel_noiseless() {
        let (cfg, pool) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tx = ue(&mut rng, 0, &cfg, &pool);
        let one = Complex64::new(1.0, 0.0);
        let real = ChannelRealization {
            mode: ChannelMode::Flat,
            gains: vec![vec![vec![one; 3]; 2]],
        };
        let grid = apply_channel(std::slice::from_ref(&tx), &real, &cfg, f64::INFINITY, &mut rng).unwrap();
        assert_eq!(grid.noise_var, 0.0);
        for ant in 0..2 {
            for b in 0..2 {
                assert_eq!(grid.pilot_blocks[b][ant], tx.pilot_symbols[b]);
            }
            assert_eq!(grid.data_block[ant], tx.data_symbols);
        }
    }

    #[test]
    fn pure_noise_variance() {
        let (cfg, _) = setup(1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let real = draw_channel(0, &cfg, ChannelMode::Flat, &mut rng);
        let mut sum = 0.0;
        let mut count = 0usize;
        while count < 100_000 {
            let grid = apply_channel(&[], &real, &cfg, 3.0, &mut rng).unwrap();
            for a in &grid.data_block {
                sum += a.iter().map(|x| x.norm_sqr()).sum::<f64>();
                count += a.len();
            }
        }
        let var = sum / count as f64;
        let expected = noise_var_for_snr(3.0);
        assert!((var / expected - 1.0).abs() < 0.02, "{var} vs {expected}");
    }

    #[test]
    fn superposition_is_exact() {
        let (cfg, pool) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let txs = vec![ue(&mut rng, 0, &cfg, &pool), ue(&mut rng, 1, &cfg, &pool)];
        let real = draw_channel(2, &cfg, ChannelMode::Flat, &mut rng);
        let grid = apply_channel(&txs, &real, &cfg, f64::INFINITY, &mut rng).unwrap();
        for ant in 0..2 {
            for b in 0..2 {
                for i in 0..cfg.block_len() {
                    let expect = real.gain(0, ant, b) * txs[0].pilot_symbols[b][i]
                        + real.gain(1, ant, b) * txs[1].pilot_symbols[b][i];
                    assert!((grid.pilot_blocks[b][ant][i] - expect).norm() < 1e-12);
                }
            }
        }
        // Linearity: sum of single-UE grids.
        let g0 = apply_channel(&txs[..1], &real, &cfg, f64::INFINITY, &mut rng).unwrap();
        let mut only1 = real.clone();
        only1.gains.remove(0);
        let g1 = apply_channel(&txs[1..], &only1, &cfg, f64::INFINITY, &mut rng).unwrap();
        for ant in 0..2 {
            for i in 0..cfg.n_data_re {
                let s = g0.data_block[ant][i] + g1.data_block[ant][i];
                assert!((grid.data_block[ant][i] - s).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_uncovered_ues() {
        let (cfg, pool) = setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let txs = vec![ue(&mut rng, 0, &cfg, &pool)];
        let real = draw_channel(0, &cfg, ChannelMode::Flat, &mut rng);
        assert!(apply_channel(&txs, &real, &cfg, 10.0, &mut rng).is_err());
    }
}
