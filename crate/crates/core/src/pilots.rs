//! Orthogonal pilot pools, pilot layouts and collision statistics.
//!
//! A pool of length `N` holds `N` mutually orthogonal sequences of `N`
//! resource elements each. The single-pilot layout (TSP) spends all pilot
//! resource elements on one sequence drawn from a pool of `N_tsp`; the
//! independent multi-pilot layout (IMP) splits the same resource into `w`
//! disjoint blocks, each carrying one sequence from a pool of `N_tsp / w`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// Set of mutually orthogonal pilot sequences with unit per-element power.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPool {
    length: usize,
    sequences: Vec<Vec<Complex64>>,
}

impl PilotPool {
    /// Builds the pool from the columns of the `length`-point DFT matrix.
    pub fn new(length: usize) -> Result<Self> {
        if length == 0 {
            return invalid("pilot pool length must be at least 1");
        }
        let sequences = (0..length)
            .map(|n| {
                (0..length)
                    .map(|k| {
                        // Reduce the phase index first so large pools keep full precision.
                        let idx = (n * k) % length;
                        Complex64::from_polar(1.0, -2.0 * PI * idx as f64 / length as f64)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { length, sequences })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn sequence(&self, index: usize) -> &[Complex64] {
        &self.sequences[index]
    }

    pub fn sequences(&self) -> &[Vec<Complex64>] {
        &self.sequences
    }

    /// Energy `z^H z` of every sequence (all sequences share it).
    pub fn sequence_energy(&self) -> f64 {
        self.length as f64
    }
}

/// `make_pilot_pool` under its operational name.
pub fn make_pilot_pool(length: usize) -> Result<PilotPool> {
    PilotPool::new(length)
}

/// Inner product `a^H b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Traditional single pilot.
    Tsp,
    /// Independent multi-pilot.
    Imp,
}

impl Scheme {
    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Tsp => "tsp",
            Scheme::Imp => "imp",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// How the pilot resource is split between independent pilots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PilotLayout {
    scheme: Scheme,
    total_pilot_re: usize,
    w: usize,
    pool_size: usize,
    bits_per_index: usize,
}

impl PilotLayout {
    /// Single pilot occupying all `total_pilot_re` resource elements.
    pub fn tsp(total_pilot_re: usize) -> Result<Self> {
        Self::new(Scheme::Tsp, total_pilot_re, 1)
    }

    /// `w >= 2` independent pilots sharing `total_pilot_re` resource elements.
    pub fn imp(total_pilot_re: usize, w: usize) -> Result<Self> {
        Self::new(Scheme::Imp, total_pilot_re, w)
    }

    pub fn new(scheme: Scheme, total_pilot_re: usize, w: usize) -> Result<Self> {
        if total_pilot_re == 0 {
            return invalid("total pilot resource elements must be positive");
        }
        match scheme {
            Scheme::Tsp if w != 1 => return invalid(format!("TSP layout requires w = 1, got {w}")),
            Scheme::Imp if w < 2 => return invalid(format!("IMP layout requires w >= 2, got {w}")),
            _ => {}
        }
        if !total_pilot_re.is_multiple_of(w) {
            return invalid(format!(
                "w = {w} does not divide the {total_pilot_re} pilot resource elements"
            ));
        }
        let pool_size = total_pilot_re / w;
        Ok(Self {
            scheme,
            total_pilot_re,
            w,
            pool_size,
            bits_per_index: bits_for(pool_size),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn total_pilot_re(&self) -> usize {
        self.total_pilot_re
    }

    /// Number of independent pilots.
    pub fn w(&self) -> usize {
        self.w
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    /// Coded bits consumed per pilot index, `ceil(log2(pool_size))`.
    pub fn bits_per_index(&self) -> usize {
        self.bits_per_index
    }
}

fn bits_for(pool_size: usize) -> usize {
    let mut m = 0;
    while (1usize << m) < pool_size {
        m += 1;
    }
    m.max(1)
}

/// Pilot indices chosen by one UE, one per pilot position.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PilotSelection {
    pub indices: Vec<usize>,
}

impl PilotSelection {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn w(&self) -> usize {
        self.indices.len()
    }
}

/// Draws `w` independent uniform indices from the layout's pool.
pub fn random_pilot_selection<R: Rng + ?Sized>(layout: &PilotLayout, rng: &mut R) -> PilotSelection {
    PilotSelection::new(
        (0..layout.w())
            .map(|_| rng.random_range(0..layout.pool_size()))
            .collect(),
    )
}

/// Pilot collision probability of the single-pilot scheme,
/// `1 - N!/((N-K)! N^K)`.
pub fn tsp_collision_probability(pool_size: usize, n_users: usize) -> f64 {
    if n_users > pool_size {
        return 1.0;
    }
    let n = pool_size as f64;
    let no_collision: f64 = (0..n_users).map(|i| (n - i as f64) / n).product();
    (1.0 - no_collision).clamp(0.0, 1.0)
}

/// Approximate probability that some UE pair collides on all `w` pilots,
/// `C(K,2) / N^w`, clamped to 1.
pub fn imp_pairwise_collision_probability(pool_size: usize, w: usize, n_users: usize) -> f64 {
    if n_users < 2 {
        return 0.0;
    }
    let pairs = (n_users * (n_users - 1) / 2) as f64;
    (pairs / (pool_size as f64).powi(w as i32)).min(1.0)
}

/// Exact probability that some UE pair collides on all `w` pilots under
/// uniform independent selection: the single-pilot formula over the
/// `N^w` joint selections.
pub fn imp_all_pilot_collision_exact(pool_size: usize, w: usize, n_users: usize) -> f64 {
    if n_users < 2 {
        return 0.0;
    }
    let joint = (pool_size as f64).powi(w as i32);
    if n_users as f64 > joint {
        return 1.0;
    }
    let no_collision: f64 = (0..n_users).map(|i| (joint - i as f64) / joint).product();
    (1.0 - no_collision).clamp(0.0, 1.0)
}

/// Collision event counted by the Monte Carlo oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionEvent {
    /// Some UE pair shares the same sequence on every pilot position.
    AnyPairAllPilots,
    /// Some UE pair shares a sequence on at least one pilot position
    /// (for a single-pilot layout: any pilot collision).
    AnyTspCollision,
}

/// Distribution the oracle draws pilot indices from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexLaw {
    /// Independent uniform indices, as in [`random_pilot_selection`].
    Uniform,
    /// `m` uniform coded bits reduced modulo the pool size, which is what
    /// codeword-derived selection produces when the pool is not a power of two.
    CodewordModulo,
}

/// Monte Carlo collision estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

pub fn simulate_collision_probability(
    layout: &PilotLayout,
    n_users: usize,
    event: CollisionEvent,
    n_trials: u64,
    seed: u64,
) -> Result<CollisionEstimate> {
    simulate_collision_probability_with_law(layout, n_users, event, n_trials, seed, IndexLaw::Uniform)
}

pub fn simulate_collision_probability_with_law(
    layout: &PilotLayout,
    n_users: usize,
    event: CollisionEvent,
    n_trials: u64,
    seed: u64,
    law: IndexLaw,
) -> Result<CollisionEstimate> {
    if n_trials == 0 {
        return invalid("n_trials must be at least 1");
    }
    if n_users < 2 {
        return Ok(CollisionEstimate {
            estimate: 0.0,
            std_error: 0.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = layout.w();
    let mut sel = vec![0usize; n_users * w];
    let mut hits = 0u64;
    for _ in 0..n_trials {
        for slot in sel.iter_mut() {
            *slot = match law {
                IndexLaw::Uniform => rng.random_range(0..layout.pool_size()),
                IndexLaw::CodewordModulo => rng.random_range(0..1usize << layout.bits_per_index()) % layout.pool_size(),
            };
        }
        if has_collision(&sel, n_users, w, event) {
            hits += 1;
        }
    }
    let p = hits as f64 / n_trials as f64;
    Ok(CollisionEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / n_trials as f64).sqrt(),
    })
}

/// Collision test over a flattened `n_users x w` selection table.
pub(crate) fn has_collision(sel: &[usize], n_users: usize, w: usize, event: CollisionEvent) -> bool {
    for a in 0..n_users {
        let ra = &sel[a * w..(a + 1) * w];
        for b in a + 1..n_users {
            let rb = &sel[b * w..(b + 1) * w];
            let hit = match event {
                CollisionEvent::AnyPairAllPilots => ra == rb,
                CollisionEvent::AnyTspCollision => ra.iter().zip(rb).any(|(x, y)| x == y),
            };
            if hit {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_of_one_is_unit() {
        let pool = PilotPool::new(1).unwrap();
        assert_eq!(pool.len(), 1);
        assert!((pool.sequence(0)[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_length_pool_rejected() {
        assert!(PilotPool::new(0).is_err());
    }

    #[test]
    fn gram_matrix_is_scaled_identity() {
        for len in [4usize, 8, 12, 24] {
            let pool = PilotPool::new(len).unwrap();
            assert_eq!(pool.len(), len);
            for x in 0..len {
                for n in 0..len {
                    let g = inner(pool.sequence(x), pool.sequence(n));
                    if x == n {
                        assert!((g - Complex64::new(len as f64, 0.0)).norm() < 1e-10);
                    } else {
                        assert!(g.norm() < 1e-10, "len {len}: <{x},{n}> = {g}");
                    }
                }
            }
        }
    }

    #[test]
    fn layout_invariants() {
        let imp = PilotLayout::imp(24, 2).unwrap();
        assert_eq!(imp.pool_size(), 12);
        assert_eq!(imp.bits_per_index(), 4);
        assert_eq!(imp.pool_size() * imp.w(), imp.total_pilot_re());
        let tsp = PilotLayout::tsp(24).unwrap();
        assert_eq!((tsp.w(), tsp.pool_size(), tsp.bits_per_index()), (1, 24, 5));
        assert_eq!(PilotLayout::imp(24, 3).unwrap().bits_per_index(), 3);
        assert!(PilotLayout::imp(24, 5).is_err());
        assert!(PilotLayout::imp(24, 1).is_err());
        assert!(PilotLayout::new(Scheme::Tsp, 24, 2).is_err());
        assert!(PilotLayout::tsp(0).is_err());
    }

    #[test]
    fn closed_form_values() {
        assert!((tsp_collision_probability(24, 3) - 0.121_527_777_8).abs() < 1e-9);
        assert_eq!(tsp_collision_probability(24, 1), 0.0);
        assert!((tsp_collision_probability(24, 2) - 1.0 / 24.0).abs() < 1e-15);
        assert_eq!(tsp_collision_probability(4, 5), 1.0);
        assert!((imp_pairwise_collision_probability(12, 2, 3) - 3.0 / 144.0).abs() < 1e-15);
        assert!((imp_pairwise_collision_probability(12, 2, 2) - 1.0 / 144.0).abs() < 1e-15);
        assert!((imp_pairwise_collision_probability(12, 1, 2) - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(imp_pairwise_collision_probability(12, 2, 1), 0.0);
        assert_eq!(imp_pairwise_collision_probability(2, 1, 10), 1.0);
    }

    #[test]
    fn exact_all_pilot_matches_enumeration() {
        // Enumerate every joint selection for a tiny pool.
        let (n, w, k) = (3usize, 2usize, 3usize);
        let joint = n.pow(w as u32);
        let mut hits = 0usize;
        let total = joint.pow(k as u32);
        for code in 0..total {
            let picks: Vec<usize> = (0..k).map(|u| (code / joint.pow(u as u32)) % joint).collect();
            let collide = (0..k).any(|a| (a + 1..k).any(|b| picks[a] == picks[b]));
            hits += collide as usize;
        }
        let expected = hits as f64 / total as f64;
        assert!((imp_all_pilot_collision_exact(n, w, k) - expected).abs() < 1e-12);
    }

    #[test]
    fn single_user_never_collides() {
        let layout = PilotLayout::imp(24, 2).unwrap();
        for event in [CollisionEvent::AnyPairAllPilots, CollisionEvent::AnyTspCollision] {
            let est = simulate_collision_probability(&layout, 1, event, 1000, 7).unwrap();
            assert_eq!(est.estimate, 0.0);
        }
        assert!(simulate_collision_probability(&layout, 2, CollisionEvent::AnyPairAllPilots, 0, 7).is_err());
    }

    #[test]
    fn oracle_is_deterministic() {
        let layout = PilotLayout::tsp(24).unwrap();
        let a = simulate_collision_probability(&layout, 3, CollisionEvent::AnyTspCollision, 5000, 11).unwrap();
        let b = simulate_collision_probability(&layout, 3, CollisionEvent::AnyTspCollision, 5000, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn selection_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tsp = PilotLayout::tsp(24).unwrap();
        let s = random_pilot_selection(&tsp, &mut rng);
        assert_eq!(s.w(), 1);
        assert!(s.indices[0] < 24);
        let imp3 = PilotLayout::imp(24, 3).unwrap();
        for _ in 0..100 {
            let s = random_pilot_selection(&imp3, &mut rng);
            assert_eq!(s.w(), 3);
            assert!(s.indices.iter().all(|&i| i < 8));
        }
    }

    #[test]
    fn selection_is_uniform_per_position() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let layout = PilotLayout::imp(24, 2).unwrap();
        let draws = 1_000_000usize;
        let mut counts = [[0usize; 12]; 2];
        for _ in 0..draws {
            let s = random_pilot_selection(&layout, &mut rng);
            for (pos, &idx) in s.indices.iter().enumerate() {
                counts[pos][idx] += 1;
            }
        }
        let p = 1.0 / 12.0;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        for row in &counts {
            for &c in row {
                let f = c as f64 / draws as f64;
                assert!((f - p).abs() < 4.0 * sigma, "frequency {f}");
            }
            // Chi-square with 11 degrees of freedom; 0.999 quantile is 31.26.
            let chi2: f64 = row
                .iter()
                .map(|&c| {
                    let e = draws as f64 * p;
                    (c as f64 - e).powi(2) / e
                })
                .sum();
            assert!(chi2 < 31.26, "chi2 = {chi2}");
        }
    }
}
