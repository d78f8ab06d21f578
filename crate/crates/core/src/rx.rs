//! Blind multi-user receiver with codeword-level interference cancellation.
//!
//! Each round runs active-pilot detection on a pilot block by correlating
//! the residual with every pool sequence, jointly MMSE-equalizes the
//! detected UEs, decodes them one by one (strongest first) and cancels every
//! decoded UE from all pilot blocks and the data block. Pilot indices of a
//! decoded UE are recovered from its re-encoded codeword, so its pilots on
//! the other blocks are cancelled too.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{accumulate, ChannelMode, RxGrid};
use crate::codec::{qpsk_llrs_into, ConvCode};
use crate::error::{invalid, Error, Result};
use crate::pilots::{inner, PilotPool, PilotSelection};
use crate::tx::{from_info_block, ResourceConfig, UeTransmission};

/// Noise variance used for thresholds and regularization when the grid is
/// noiseless.
const NOISE_FLOOR: f64 = 1e-12;

/// Upper bound on the reported post-equalization SINR.
const MAX_SINR: f64 = 1e12;

/// Default detection threshold multiplier: the 1e-3 upper quantile of
/// `M / (sigma^2 / E_seq)` under noise only with two receive antennas, a sum
/// of two unit-mean exponentials (solves `e^-g (1 + g) = 1e-3`).
pub const DEFAULT_AUD_GAMMA: f64 = 9.233_413_476_204_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateSource {
    PilotCorrelation,
    DataAided,
}

/// Per-antenna channel estimate of one UE.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub gains: Vec<Complex64>,
    pub source: EstimateSource,
    /// Pilot position the estimate came from (pilot-correlation estimates).
    pub source_pilot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub pilot_index: usize,
    pub estimate: ChannelEstimate,
    /// `sum_a |h_a|^2` of the normalized correlation.
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRound {
    pub pilot_position: usize,
    pub detected: Vec<Detection>,
    pub threshold_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Procedure {
    Serial,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcCeMode {
    /// Cancel with the pilot-correlation estimate of the detecting pilot.
    PilotOnly,
    /// Re-estimate every decoded UE by least squares over all its symbols.
    DataAided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DuplicatePolicy {
    StrongerPilot,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxOptions {
    pub procedure: Procedure,
    pub ic_ce_mode: IcCeMode,
    pub aud_gamma: f64,
    pub max_rounds: usize,
    pub duplicate_policy: DuplicatePolicy,
    pub channel_mode: ChannelMode,
}

impl Default for RxOptions {
    fn default() -> Self {
        Self {
            procedure: Procedure::Serial,
            ic_ce_mode: IcCeMode::PilotOnly,
            aud_gamma: DEFAULT_AUD_GAMMA,
            max_rounds: 10,
            duplicate_policy: DuplicatePolicy::StrongerPilot,
            channel_mode: ChannelMode::Flat,
        }
    }
}

impl RxOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return invalid("max_rounds must be at least 1");
        }
        if !self.aud_gamma.is_finite() || self.aud_gamma <= 0.0 {
            return invalid(format!("aud_gamma must be positive, got {}", self.aud_gamma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedUser {
    pub payload: Vec<u8>,
    pub selection: PilotSelection,
    /// 1-based round in which the UE was decoded.
    pub round: usize,
    pub estimate: ChannelEstimate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AudEvents {
    pub detections: usize,
    pub crc_failures: usize,
    pub consistency_rejections: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecodeReport {
    pub decoded: Vec<DecodedUser>,
    pub decode_attempts: usize,
    pub rounds_run: usize,
    pub aud_events: AudEvents,
    /// Every detection pass in execution order.
    pub detection_rounds: Vec<DetectionRound>,
}

/// Correlates one pilot block (`[antenna][re]`) against every pool sequence
/// transmitted at `pilot_amplitude` and keeps those whose metric clears
/// `gamma * noise_var / E_seq`.
pub fn detect_active_pilots(
    pilot_block: &[Vec<Complex64>],
    pool: &PilotPool,
    pilot_amplitude: f64,
    noise_var: f64,
    gamma: f64,
    pilot_position: usize,
) -> Result<DetectionRound> {
    if pilot_block.is_empty() || pilot_block.iter().any(|a| a.len() != pool.length()) {
        return invalid("pilot block does not match the pool length");
    }
    let energy = pool.sequence_energy() * pilot_amplitude * pilot_amplitude;
    let threshold = gamma * noise_var.max(NOISE_FLOOR) / energy;
    let mut detected = Vec::new();
    for (x, z) in pool.sequences().iter().enumerate() {
        let gains: Vec<Complex64> = pilot_block
            .iter()
            .map(|y| inner(z, y) * pilot_amplitude / energy)
            .collect();
        let metric: f64 = gains.iter().map(|g| g.norm_sqr()).sum();
        if metric >= threshold {
            detected.push(Detection {
                pilot_index: x,
                estimate: ChannelEstimate {
                    gains,
                    source: EstimateSource::PilotCorrelation,
                    source_pilot: pilot_position,
                },
                metric,
            });
        }
    }
    Ok(DetectionRound {
        pilot_position,
        detected,
        threshold_used: threshold,
    })
}

/// MMSE output for one UE.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    /// Bias-corrected symbol estimates.
    pub soft_symbols: Vec<Complex64>,
    /// `mu = w^H h`, the unbiased filter gain before correction.
    pub effective_gain: f64,
    pub post_sinr: f64,
}

/// Linear MMSE filter bank for a set of channel columns.
struct MmseFilter {
    /// `[antenna][user]`
    weights: Vec<Vec<Complex64>>,
    gains: Vec<f64>,
}

impl MmseFilter {
    fn new(columns: &[&[Complex64]], noise_var: f64) -> Result<Self> {
        let s = columns.len();
        let n_rx = columns.first().map_or(0, |c| c.len());
        if s == 0 || n_rx == 0 {
            return invalid("equalization needs at least one estimate");
        }
        if columns.iter().any(|c| c.len() != n_rx) {
            return invalid("estimates disagree on the antenna count");
        }
        if noise_var <= 0.0 && s > n_rx {
            return Err(Error::IllPosed(format!(
                "{s} users on {n_rx} antennas without noise regularization"
            )));
        }
        let h = DMatrix::from_fn(n_rx, s, |a, u| columns[u][a]);
        // W = H (H^H H + s2 I)^-1, equal to (H H^H + s2 I)^-1 H.
        let mut gram = h.adjoint() * &h;
        for i in 0..s {
            gram[(i, i)] += Complex64::new(noise_var.max(0.0), 0.0);
        }
        let inv = gram
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| gram.try_inverse())
            .ok_or_else(|| Error::IllPosed("singular channel matrix".into()))?;
        let w = &h * inv;
        let gains = (0..s)
            .map(|u| (0..n_rx).map(|a| w[(a, u)].conj() * h[(a, u)]).sum::<Complex64>().re)
            .collect();
        let weights = (0..n_rx).map(|a| (0..s).map(|u| w[(a, u)]).collect()).collect();
        Ok(Self { weights, gains })
    }

    fn apply(&self, data: &[Vec<Complex64>], user: usize) -> Equalized {
        let mu = self.gains[user];
        let n = data[0].len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (a, y) in data.iter().enumerate() {
            let c = self.weights[a][user].conj() / mu;
            for (o, v) in out.iter_mut().zip(y) {
                *o += c * v;
            }
        }
        let post_sinr = if 1.0 - mu > mu / MAX_SINR {
            mu / (1.0 - mu)
        } else {
            MAX_SINR
        };
        Equalized {
            soft_symbols: out,
            effective_gain: mu,
            post_sinr,
        }
    }
}

/// Joint MMSE equalization of the data block (`[antenna][re]`) for every
/// estimate in `estimates`.
pub fn mmse_equalize(
    data_block: &[Vec<Complex64>],
    estimates: &[&[Complex64]],
    noise_var: f64,
) -> Result<Vec<Equalized>> {
    if data_block.is_empty() {
        return invalid("empty data block");
    }
    if estimates.iter().any(|e| e.len() != data_block.len()) {
        return invalid("estimate antenna count does not match the data block");
    }
    let filter = MmseFilter::new(estimates, noise_var)?;
    Ok((0..estimates.len()).map(|u| filter.apply(data_block, u)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeAttempt {
    pub success: bool,
    /// Decoded information bits including CRC.
    pub info_block: Vec<u8>,
    pub payload: Vec<u8>,
    /// Pilot selection re-derived from the re-encoded codeword (empty on failure).
    pub selection: PilotSelection,
}

/// Reusable decoder state: the trellis tables and an LLR scratch buffer.
pub struct Decoder {
    code: ConvCode,
    llrs: Vec<f64>,
}

impl Default for Decoder {
    fn default() -> Self {
        Self::new()
    }
}

impl Decoder {
    pub fn new() -> Self {
        Self {
            code: ConvCode::new(),
            llrs: Vec::new(),
        }
    }

    pub fn attempt(
        &mut self,
        eq: &Equalized,
        config: &ResourceConfig,
        pool: &PilotPool,
    ) -> Result<(DecodeAttempt, Option<UeTransmission>)> {
        if eq.soft_symbols.len() != config.n_data_re {
            return invalid(format!(
                "{} soft symbols for {} data resource elements",
                eq.soft_symbols.len(),
                config.n_data_re
            ));
        }
        let residual = (1.0 / eq.post_sinr).max(1.0 / MAX_SINR);
        qpsk_llrs_into(&eq.soft_symbols, 1.0, residual, &mut self.llrs)?;
        let out = crate::codec::fec_decode_with(&self.code, &self.llrs, config.info_bits())?;
        if !out.crc_ok {
            return Ok((
                DecodeAttempt {
                    success: false,
                    payload: out.bits[..config.transport_block_size].to_vec(),
                    info_block: out.bits,
                    selection: PilotSelection::new(Vec::new()),
                },
                None,
            ));
        }
        let tx = from_info_block(&out.bits, config, pool)?;
        Ok((
            DecodeAttempt {
                success: true,
                payload: tx.payload.clone(),
                info_block: out.bits,
                selection: tx.pilot_selection.clone(),
            },
            Some(tx),
        ))
    }
}

/// Demaps, decodes and CRC-checks one equalized UE; on success re-encodes to
/// recover its pilot selection.
pub fn attempt_decode(eq: &Equalized, config: &ResourceConfig, pool: &PilotPool) -> Result<DecodeAttempt> {
    Decoder::new().attempt(eq, config, pool).map(|(a, _)| a)
}

/// Subtracts a reconstructed UE from every block using one per-antenna gain.
pub fn cancel_user(grid: &mut RxGrid, reconstructed: &UeTransmission, estimate: &ChannelEstimate) -> Result<()> {
    let gains: Vec<Vec<Complex64>> = estimate.gains.iter().map(|&g| vec![g; grid.w() + 1]).collect();
    cancel_user_per_block(grid, reconstructed, &gains)
}

/// Subtracts a reconstructed UE with gains indexed `[antenna][block]`
/// (block `w` is the data block).
pub fn cancel_user_per_block(
    grid: &mut RxGrid,
    reconstructed: &UeTransmission,
    gains: &[Vec<Complex64>],
) -> Result<()> {
    check_user_shape(grid, reconstructed)?;
    if gains.len() != grid.n_rx() || gains.iter().any(|g| g.len() != grid.w() + 1) {
        return invalid("cancellation gains do not match the grid");
    }
    if gains.iter().flatten().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
        return invalid("non-finite cancellation gain");
    }
    accumulate(grid, reconstructed, gains, -1.0);
    Ok(())
}

fn check_user_shape(grid: &RxGrid, tx: &UeTransmission) -> Result<()> {
    let ok = tx.pilot_symbols.len() == grid.w()
        && tx
            .pilot_symbols
            .iter()
            .zip(&grid.pilot_blocks)
            .all(|(z, b)| b.iter().all(|a| a.len() == z.len()))
        && grid.data_block.iter().all(|a| a.len() == tx.data_symbols.len());
    if ok {
        Ok(())
    } else {
        invalid("reconstructed symbols do not match the grid")
    }
}

/// Resource-element region used by the least-squares estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsRegion {
    /// Every pilot block and the data block.
    All,
    PilotBlock(usize),
    Data,
}

/// Least-squares channel estimates `(D^H D)^-1 D^H y` of the given users over
/// `region` of `grid`, returned `[user][antenna]`. `None` when `D` is rank
/// deficient.
pub fn data_aided_ce(
    grid: &RxGrid,
    users: &[&UeTransmission],
    region: LsRegion,
) -> Result<Option<Vec<Vec<Complex64>>>> {
    let q = users.len();
    if q == 0 {
        return invalid("data-aided estimation needs at least one decoded user");
    }
    for u in users {
        check_user_shape(grid, u)?;
    }
    fn segments(u: &UeTransmission, region: LsRegion) -> Vec<&[Complex64]> {
        match region {
            LsRegion::All => u
                .pilot_symbols
                .iter()
                .map(|b| b.as_slice())
                .chain(std::iter::once(u.data_symbols.as_slice()))
                .collect(),
            LsRegion::PilotBlock(b) => vec![u.pilot_symbols[b].as_slice()],
            LsRegion::Data => vec![u.data_symbols.as_slice()],
        }
    }
    let cols: Vec<Vec<&[Complex64]>> = users.iter().map(|u| segments(u, region)).collect();
    let mut gram = DMatrix::<Complex64>::zeros(q, q);
    for i in 0..q {
        for j in i..q {
            let v: Complex64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| inner(a, b)).sum();
            gram[(i, j)] = v;
            gram[(j, i)] = v.conj();
        }
    }
    let max_diag = (0..q).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
    let Some(chol) = gram.clone().cholesky() else {
        return Ok(None);
    };
    let l = chol.l_dirty();
    let min_pivot = (0..q).map(|i| l[(i, i)].re.powi(2)).fold(f64::INFINITY, f64::min);
    if min_pivot.is_nan() || min_pivot <= 1e-10 * max_diag {
        return Ok(None);
    }
    let mut out = vec![Vec::with_capacity(grid.n_rx()); q];
    for ant in 0..grid.n_rx() {
        let ys: Vec<&[Complex64]> = match region {
            LsRegion::All => grid
                .pilot_blocks
                .iter()
                .map(|b| b[ant].as_slice())
                .chain(std::iter::once(grid.data_block[ant].as_slice()))
                .collect(),
            LsRegion::PilotBlock(b) => vec![grid.pilot_blocks[b][ant].as_slice()],
            LsRegion::Data => vec![grid.data_block[ant].as_slice()],
        };
        let rhs = DMatrix::from_fn(q, 1, |i, _| {
            cols[i].iter().zip(&ys).map(|(d, y)| inner(d, y)).sum::<Complex64>()
        });
        let h = chol.solve(&rhs);
        for (i, o) in out.iter_mut().enumerate() {
            o.push(h[(i, 0)]);
        }
    }
    Ok(Some(out))
}

/// A decoded UE held by the receiver.
struct Tracked {
    tx: UeTransmission,
    round: usize,
    estimate: ChannelEstimate,
    /// Pilot-only gains `[antenna][block]`, the fallback when least squares fails.
    pilot_gains: Vec<Vec<Complex64>>,
    /// Gains currently subtracted from the working grid.
    applied: Vec<Vec<Complex64>>,
}

struct Receiver<'a> {
    original: &'a RxGrid,
    working: RxGrid,
    config: &'a ResourceConfig,
    pool: &'a PilotPool,
    options: &'a RxOptions,
    decoder: Decoder,
    tracked: Vec<Tracked>,
    report: DecodeReport,
}

/// A successful, consistent, non-duplicate decode awaiting cancellation.
struct Candidate {
    tx: UeTransmission,
    detection: Detection,
}

pub fn run_receiver(
    grid: &RxGrid,
    config: &ResourceConfig,
    pool: &PilotPool,
    options: &RxOptions,
) -> Result<DecodeReport> {
    options.validate()?;
    grid.check_shape(config)?;
    if pool.length() != config.block_len() {
        return invalid("pool length does not match the pilot block length");
    }
    let mut rx = Receiver {
        original: grid,
        working: grid.clone(),
        config,
        pool,
        options,
        decoder: Decoder::new(),
        tracked: Vec::new(),
        report: DecodeReport::default(),
    };
    for round in 1..=options.max_rounds {
        rx.report.rounds_run = round;
        let new = match options.procedure {
            Procedure::Serial => rx.serial_round(round)?,
            Procedure::Parallel => rx.parallel_round(round)?,
        };
        if new == 0 {
            break;
        }
    }
    let Receiver {
        tracked, mut report, ..
    } = rx;
    report.decoded = tracked
        .into_iter()
        .map(|t| DecodedUser {
            payload: t.tx.payload,
            selection: t.tx.pilot_selection,
            round: t.round,
            estimate: t.estimate,
        })
        .collect();
    Ok(report)
}

impl Receiver<'_> {
    fn noise_var(&self) -> f64 {
        self.original.noise_var.max(NOISE_FLOOR)
    }

    fn detect(&mut self, position: usize) -> Result<DetectionRound> {
        let mut round = detect_active_pilots(
            &self.working.pilot_blocks[position],
            self.pool,
            self.config.pilot_amplitude(),
            self.original.noise_var,
            self.options.aud_gamma,
            position,
        )?;
        round
            .detected
            .sort_by(|a, b| b.metric.total_cmp(&a.metric).then(a.pilot_index.cmp(&b.pilot_index)));
        self.report.aud_events.detections += round.detected.len();
        self.report.detection_rounds.push(round.clone());
        Ok(round)
    }

    fn is_decoded(&self, payload: &[u8]) -> bool {
        self.tracked.iter().any(|t| t.tx.payload == payload)
    }

    /// Decodes one equalized detection and applies the acceptance rules.
    fn try_decode(&mut self, eq: &Equalized, detection: &Detection) -> Result<Option<UeTransmission>> {
        self.report.decode_attempts += 1;
        let (attempt, tx) = self.decoder.attempt(eq, self.config, self.pool)?;
        if !attempt.success {
            self.report.aud_events.crc_failures += 1;
            return Ok(None);
        }
        let tx = tx.expect("successful attempt carries a reconstruction");
        if tx.pilot_selection.indices[detection.estimate.source_pilot] != detection.pilot_index {
            self.report.aud_events.consistency_rejections += 1;
            return Ok(None);
        }
        if self.is_decoded(&tx.payload) {
            self.report.aud_events.duplicates += 1;
            return Ok(None);
        }
        Ok(Some(tx))
    }

    fn serial_round(&mut self, round: usize) -> Result<usize> {
        let mut new = 0;
        for position in 0..self.config.layout.w() {
            let det = self.detect(position)?;
            let n = det.detected.len();
            let mut alive = vec![true; n];
            let mut filter: Option<(MmseFilter, Vec<usize>)> = None;
            for i in 0..n {
                if filter.as_ref().is_none_or(|(_, members)| !members.contains(&i)) {
                    let members: Vec<usize> = (0..n).filter(|&j| alive[j]).collect();
                    let cols: Vec<&[Complex64]> = members
                        .iter()
                        .map(|&j| det.detected[j].estimate.gains.as_slice())
                        .collect();
                    filter = Some((MmseFilter::new(&cols, self.noise_var())?, members));
                }
                let (f, members) = filter.as_ref().expect("filter built above");
                let col = members.iter().position(|&j| j == i).expect("candidate is alive");
                let eq = f.apply(&self.working.data_block, col);
                let detection = &det.detected[i];
                if let Some(tx) = self.try_decode(&eq, detection)? {
                    alive[i] = false;
                    filter = None;
                    self.admit(
                        vec![Candidate {
                            tx,
                            detection: detection.clone(),
                        }],
                        round,
                    )?;
                    new += 1;
                }
            }
        }
        Ok(new)
    }

    fn parallel_round(&mut self, round: usize) -> Result<usize> {
        let rounds: Vec<DetectionRound> = (0..self.config.layout.w())
            .map(|p| self.detect(p))
            .collect::<Result<_>>()?;
        let mut found: Vec<Candidate> = Vec::new();
        for det in &rounds {
            if det.detected.is_empty() {
                continue;
            }
            let cols: Vec<&[Complex64]> = det.detected.iter().map(|d| d.estimate.gains.as_slice()).collect();
            let filter = MmseFilter::new(&cols, self.noise_var())?;
            for (i, detection) in det.detected.iter().enumerate() {
                let eq = filter.apply(&self.working.data_block, i);
                if let Some(tx) = self.try_decode(&eq, detection)? {
                    found.push(Candidate {
                        tx,
                        detection: detection.clone(),
                    });
                }
            }
        }
        // Reconcile UEs decoded on more than one pilot.
        let mut unique: Vec<Candidate> = Vec::new();
        let mut groups: Vec<Vec<Detection>> = Vec::new();
        for c in found {
            if let Some(k) = unique.iter().position(|u| u.tx.payload == c.tx.payload) {
                self.report.aud_events.duplicates += 1;
                groups[k].push(c.detection);
            } else {
                groups.push(vec![c.detection.clone()]);
                unique.push(c);
            }
        }
        for (cand, group) in unique.iter_mut().zip(groups) {
            if group.len() < 2 {
                continue;
            }
            cand.detection = match self.options.duplicate_policy {
                DuplicatePolicy::StrongerPilot => group
                    .into_iter()
                    .max_by(|a, b| a.metric.total_cmp(&b.metric))
                    .expect("non-empty group"),
                DuplicatePolicy::Average => {
                    let n = group.len() as f64;
                    let mut avg = group[0].clone();
                    for (a, g) in avg.estimate.gains.iter_mut().enumerate() {
                        *g = group.iter().map(|d| d.estimate.gains[a]).sum::<Complex64>() / n;
                    }
                    avg.metric = avg.estimate.gains.iter().map(|g| g.norm_sqr()).sum();
                    avg
                }
            };
        }
        unique.sort_by(|a, b| b.detection.metric.total_cmp(&a.detection.metric));
        let new = unique.len();
        if new > 0 {
            self.admit(unique, round)?;
        }
        Ok(new)
    }

    /// Adds newly decoded UEs and updates the working grid.
    fn admit(&mut self, candidates: Vec<Candidate>, round: usize) -> Result<()> {
        let w = self.config.layout.w();
        for Candidate { tx, detection } in candidates {
            let det_gains = &detection.estimate.gains;
            let pilot_gains: Vec<Vec<Complex64>> = match self.options.channel_mode {
                ChannelMode::Flat => det_gains.iter().map(|&g| vec![g; w + 1]).collect(),
                ChannelMode::PerBlock => {
                    let mut gains: Vec<Vec<Complex64>> = det_gains.iter().map(|&g| vec![g; w + 1]).collect();
                    let energy = self.config.pilot_sequence_energy();
                    for b in (0..w).filter(|&b| b != detection.estimate.source_pilot) {
                        let z = &tx.pilot_symbols[b];
                        for (ant, g) in gains.iter_mut().enumerate() {
                            g[b] = inner(z, &self.working.pilot_blocks[b][ant]) / energy;
                        }
                    }
                    gains
                }
            };
            if self.options.ic_ce_mode == IcCeMode::PilotOnly {
                cancel_user_per_block(&mut self.working, &tx, &pilot_gains)?;
            }
            self.tracked.push(Tracked {
                tx,
                round,
                estimate: detection.estimate,
                applied: pilot_gains.clone(),
                pilot_gains,
            });
        }
        if self.options.ic_ce_mode == IcCeMode::DataAided {
            self.refine_and_recancel()?;
        }
        Ok(())
    }

    /// Least-squares re-estimation of every decoded UE over the original
    /// grid, then a fresh cancellation of all of them from the original.
    fn refine_and_recancel(&mut self) -> Result<()> {
        let w = self.config.layout.w();
        let users: Vec<&UeTransmission> = self.tracked.iter().map(|t| &t.tx).collect();
        let mut gains: Vec<Vec<Vec<Complex64>>> = self.tracked.iter().map(|t| t.pilot_gains.clone()).collect();
        let mut refined = vec![false; users.len()];
        match self.options.channel_mode {
            ChannelMode::Flat => {
                if let Some(ls) = data_aided_ce(self.original, &users, LsRegion::All)? {
                    for (u, h) in ls.into_iter().enumerate() {
                        gains[u] = h.iter().map(|&g| vec![g; w + 1]).collect();
                        refined[u] = true;
                    }
                }
            }
            ChannelMode::PerBlock => {
                let regions = (0..w).map(LsRegion::PilotBlock).chain(std::iter::once(LsRegion::Data));
                for (b, region) in regions.enumerate() {
                    if let Some(ls) = data_aided_ce(self.original, &users, region)? {
                        for (u, h) in ls.into_iter().enumerate() {
                            for (ant, g) in h.into_iter().enumerate() {
                                gains[u][ant][b] = g;
                            }
                            if b == w {
                                refined[u] = true;
                            }
                        }
                    }
                }
            }
        }
        let mut working = self.original.clone();
        for (t, g) in self.tracked.iter().zip(&gains) {
            cancel_user_per_block(&mut working, &t.tx, g)?;
        }
        for ((t, g), ok) in self.tracked.iter_mut().zip(gains).zip(refined) {
            if ok {
                t.estimate = ChannelEstimate {
                    gains: g.iter().map(|a| a[w]).collect(),
                    source: EstimateSource::DataAided,
                    source_pilot: t.estimate.source_pilot,
                };
            }
            t.applied = g;
        }
        self.working = working;
        Ok(())
    }
}
