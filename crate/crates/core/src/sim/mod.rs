//! Monte Carlo campaign engine.
//!
//! Every drop owns a ChaCha8 stream seeded from a hash of the base seed and
//! the drop's sweep coordinates, so results do not depend on thread count
//! or execution order.

mod config;
mod results;

pub use config::{SchemeConfig, SimConfig};
pub use results::{read_results, write_results, write_rows, MetricsRow, CSV_HEADER};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{apply_channel, draw_channel};
use crate::error::{invalid, Result};
use crate::pilots::{has_collision, CollisionEvent, PilotPool};
use crate::rx::{run_receiver, DecodeReport, RxOptions};
use crate::tx::{build_ue_transmission, ResourceConfig, UeTransmission};

/// SplitMix64-style hash of a word sequence.
pub fn mix(words: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &w in words {
        h ^= w;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Seed of one drop.
pub fn drop_seed(base_seed: u64, scheme: &SchemeConfig, snr_index: usize, n_ue: usize, drop_index: u64) -> u64 {
    mix(&[base_seed, scheme.seed_tag(), snr_index as u64, n_ue as u64, drop_index])
}

/// Scored outcome of one drop.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DropResult {
    pub success: Vec<bool>,
    pub decode_attempts: usize,
    /// Some UE pair shares its sequence at this pilot position.
    pub pilot_collision: Vec<bool>,
    /// Some UE pair shares its sequences at every pilot position.
    pub all_pilot_collision: bool,
    /// UEs none of whose pilots were ever detected.
    pub missed: usize,
    /// Detections of sequences no UE transmitted at that position.
    pub false_alarms: usize,
    /// Hypothesis tests on sequences no UE transmitted.
    pub false_alarm_tests: usize,
    /// Decoded payloads that match no transmitted payload.
    pub false_payloads: usize,
    pub rounds_run: usize,
}

impl DropResult {
    pub fn successes(&self) -> usize {
        self.success.iter().filter(|&&s| s).count()
    }
}

/// Everything a drop needs that does not change between drops of a cell.
pub struct DropContext {
    pub resource: ResourceConfig,
    pub pool: PilotPool,
    pub rx_options: RxOptions,
}

impl DropContext {
    pub fn new(config: &SimConfig, scheme: &SchemeConfig) -> Result<Self> {
        let resource = config.resource(scheme)?;
        Ok(Self {
            pool: PilotPool::new(resource.block_len())?,
            resource,
            rx_options: config.rx_options,
        })
    }
}

/// Transmitted UEs and the receiver's report for one drop.
pub struct DropTrace {
    pub transmissions: Vec<UeTransmission>,
    pub report: DecodeReport,
}

/// Runs transmitter, channel and receiver for one drop from `rng`.
pub fn simulate_drop<R: Rng + ?Sized>(ctx: &DropContext, snr_db: f64, n_ue: usize, rng: &mut R) -> Result<DropTrace> {
    let tb = ctx.resource.transport_block_size;
    let transmissions = (0..n_ue)
        .map(|k| {
            let payload: Vec<u8> = (0..tb).map(|_| rng.random_range(0..2u8)).collect();
            build_ue_transmission(k, &payload, &ctx.resource, &ctx.pool)
        })
        .collect::<Result<Vec<_>>>()?;
    let realization = draw_channel(n_ue, &ctx.resource, ctx.rx_options.channel_mode, rng);
    let grid = apply_channel(&transmissions, &realization, &ctx.resource, snr_db, rng)?;
    let report = run_receiver(&grid, &ctx.resource, &ctx.pool, &ctx.rx_options)?;
    Ok(DropTrace { transmissions, report })
}

/// Compares a receiver report against ground truth.
pub fn score_drop(trace: &DropTrace, pool_size: usize) -> DropResult {
    let txs = &trace.transmissions;
    let report = &trace.report;
    let k = txs.len();
    let w = txs.first().map_or(0, |t| t.pilot_selection.w());
    let flat: Vec<usize> = txs
        .iter()
        .flat_map(|t| t.pilot_selection.indices.iter().copied())
        .collect();

    let success = txs
        .iter()
        .map(|t| report.decoded.iter().any(|d| d.payload == t.payload))
        .collect();
    let false_payloads = report
        .decoded
        .iter()
        .filter(|d| !txs.iter().any(|t| t.payload == d.payload))
        .count();

    let pilot_collision = (0..w)
        .map(|p| {
            let column: Vec<usize> = txs.iter().map(|t| t.pilot_selection.indices[p]).collect();
            has_collision(&column, k, 1, CollisionEvent::AnyPairAllPilots)
        })
        .collect();
    let all_pilot_collision = has_collision(&flat, k, w, CollisionEvent::AnyPairAllPilots);

    let mut ever_detected = vec![false; k];
    let mut false_alarms = 0;
    let mut false_alarm_tests = 0;
    for round in &report.detection_rounds {
        let p = round.pilot_position;
        let mut used: Vec<usize> = txs.iter().map(|t| t.pilot_selection.indices[p]).collect();
        used.sort_unstable();
        used.dedup();
        false_alarm_tests += pool_size - used.len();
        for d in &round.detected {
            if used.binary_search(&d.pilot_index).is_err() {
                false_alarms += 1;
            }
            for (u, t) in txs.iter().enumerate() {
                if t.pilot_selection.indices[p] == d.pilot_index {
                    ever_detected[u] = true;
                }
            }
        }
    }

    DropResult {
        success,
        decode_attempts: report.decode_attempts,
        pilot_collision,
        all_pilot_collision,
        missed: ever_detected.iter().filter(|&&d| !d).count(),
        false_alarms,
        false_alarm_tests,
        false_payloads,
        rounds_run: report.rounds_run,
    }
}

/// One drop of the campaign grid, seeded from its coordinates.
pub fn run_drop(
    config: &SimConfig,
    scheme: &SchemeConfig,
    snr_index: usize,
    n_ue: usize,
    drop_index: u64,
) -> Result<DropResult> {
    let ctx = DropContext::new(config, scheme)?;
    run_drop_in(&ctx, config, scheme, snr_index, n_ue, drop_index)
}

fn run_drop_in(
    ctx: &DropContext,
    config: &SimConfig,
    scheme: &SchemeConfig,
    snr_index: usize,
    n_ue: usize,
    drop_index: u64,
) -> Result<DropResult> {
    let snr_db = *config
        .snr_db_list
        .get(snr_index)
        .ok_or_else(|| crate::error::Error::InvalidArgument(format!("no SNR at index {snr_index}")))?;
    if n_ue == 0 {
        return Ok(DropResult::default());
    }
    let seed = drop_seed(config.base_seed, scheme, snr_index, n_ue, drop_index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trace = simulate_drop(ctx, snr_db, n_ue, &mut rng)?;
    Ok(score_drop(&trace, ctx.resource.layout.pool_size()))
}

/// Sums drop results of one (scheme, SNR, K) cell into a metrics row.
pub fn aggregate(scheme: &SchemeConfig, snr_db: f64, n_ue: usize, drops: &[DropResult]) -> MetricsRow {
    let n_drops = drops.len();
    let trials = (n_ue * n_drops) as f64;
    let failures: usize = drops.iter().map(|d| n_ue - d.successes()).sum();
    let attempts: usize = drops.iter().map(|d| d.decode_attempts).sum();
    let collisions = drops.iter().filter(|d| d.all_pilot_collision).count();
    let missed: usize = drops.iter().map(|d| d.missed).sum();
    let fa: usize = drops.iter().map(|d| d.false_alarms).sum();
    let fa_tests: usize = drops.iter().map(|d| d.false_alarm_tests).sum();
    let bler = failures as f64 / trials;
    MetricsRow {
        scheme: scheme.layout.scheme().tag().to_string(),
        w: scheme.layout.w(),
        snr_db,
        n_ue,
        bler,
        bler_ci95: 1.96 * (bler * (1.0 - bler) / trials).sqrt(),
        avg_attempts_per_ue: attempts as f64 / trials,
        collision_rate: collisions as f64 / n_drops as f64,
        miss_rate: missed as f64 / trials,
        false_alarm_rate: if fa_tests == 0 {
            0.0
        } else {
            fa as f64 / fa_tests as f64
        },
        n_drops,
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    if threads == Some(0) {
        return invalid("thread count must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| crate::error::Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Every drop of one (scheme, SNR, K) cell, in drop order.
pub fn run_cell(
    config: &SimConfig,
    scheme_index: usize,
    snr_index: usize,
    n_ue: usize,
    threads: Option<usize>,
) -> Result<Vec<DropResult>> {
    config.validate()?;
    let scheme = config
        .schemes
        .get(scheme_index)
        .ok_or_else(|| crate::error::Error::InvalidArgument(format!("no scheme at index {scheme_index}")))?;
    let ctx = DropContext::new(config, scheme)?;
    thread_pool(threads)?.install(|| {
        (0..config.n_drops as u64)
            .into_par_iter()
            .map(|d| run_drop_in(&ctx, config, scheme, snr_index, n_ue, d))
            .collect()
    })
}

/// Runs the full scheme x SNR x K sweep. Rows come out scheme-major, then
/// SNR, then K; cells with K = 0 are skipped. `threads = None` uses every
/// available core.
pub fn run_campaign(config: &SimConfig, threads: Option<usize>) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    let pool = thread_pool(threads)?;

    struct Cell {
        scheme: usize,
        snr: usize,
        n_ue: usize,
    }
    let contexts = config
        .schemes
        .iter()
        .map(|s| DropContext::new(config, s))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for scheme in 0..config.schemes.len() {
        for snr in 0..config.snr_db_list.len() {
            for &n_ue in config.n_ue_list.iter().filter(|&&k| k > 0) {
                cells.push(Cell { scheme, snr, n_ue });
            }
        }
    }
    let n_drops = config.n_drops;
    let results: Vec<DropResult> = pool.install(|| {
        (0..cells.len() * n_drops)
            .into_par_iter()
            .map(|task| {
                let cell = &cells[task / n_drops];
                run_drop_in(
                    &contexts[cell.scheme],
                    config,
                    &config.schemes[cell.scheme],
                    cell.snr,
                    cell.n_ue,
                    (task % n_drops) as u64,
                )
            })
            .collect::<Result<_>>()
    })?;
    Ok(cells
        .iter()
        .zip(results.chunks(n_drops))
        .map(|(cell, drops)| {
            aggregate(
                &config.schemes[cell.scheme],
                config.snr_db_list[cell.snr],
                cell.n_ue,
                drops,
            )
        })
        .collect())
}
