//! Strategy search: a constrained genetic algorithm (the teacher that
//! generates training data), a random-sampling baseline, and an exhaustive
//! oracle for small spaces.
//!
//! All searches are deterministic for a given seed and independent of the
//! executor's thread count: cost evaluation fans out order-preserving, while
//! every RNG draw happens on the calling thread.

use std::cmp::Ordering;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::costmodel::{evaluate, evaluate_many_in, AcceleratorConfig, CostError, CostReport};
use crate::parallel::Executor;
use crate::strategy::{action_space, Action, Strategy};
use crate::workload::Workload;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("action set must contain at least one micro-batch action")]
    EmptyActionSet,
    #[error("action set micro-batch {0} does not divide batch {1}")]
    BadActionSet(u64, u64),
    #[error("{cardinality} strategies exceed the exhaustive search cap of {cap}")]
    SpaceTooLarge { cardinality: u128, cap: u128 },
}

/// Ranking used by every search. Valid strategies beat invalid ones; valid
/// ones compare by latency; invalid ones by how far they overshoot the
/// buffer, then by latency. Smaller is better.
#[derive(Debug, Clone, Copy)]
pub struct Fitness {
    pub valid: bool,
    pub latency_seconds: f64,
    pub violation_bytes: f64,
}

impl Fitness {
    pub fn of(report: &CostReport, budget: u64) -> Fitness {
        Fitness {
            valid: report.valid,
            latency_seconds: report.latency_seconds,
            violation_bytes: (report.peak_buffer_bytes.saturating_sub(budget)) as f64,
        }
    }
}

impl PartialEq for Fitness {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Fitness {}

impl PartialOrd for Fitness {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fitness {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.valid, other.valid) {
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (true, true) => self.latency_seconds.total_cmp(&other.latency_seconds),
            (false, false) => self
                .violation_bytes
                .total_cmp(&other.violation_bytes)
                .then(self.latency_seconds.total_cmp(&other.latency_seconds)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GenStat {
    pub generation: usize,
    pub best_latency_seconds: f64,
    pub best_peak_bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub best: Strategy,
    pub best_report: CostReport,
    pub history: Vec<GenStat>,
    /// Cost-model evaluations consumed.
    pub samples_used: u64,
    pub wall_time_seconds: f64,
    /// Last evaluated pool, best-first; used for dataset extraction.
    #[serde(skip)]
    pub final_population: Vec<(Strategy, CostReport)>,
}

#[derive(Debug, Clone)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    /// Per-gene resampling probability.
    pub mutation_rate: f64,
    /// Fraction of the population carried over unchanged.
    pub elitism: f64,
    pub seed: u64,
    /// Restrict the search to these actions; defaults to the full
    /// [`action_space`] of the batch.
    pub action_set: Option<Vec<Action>>,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 40,
            generations: 50,
            tournament: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.15,
            elitism: 0.1,
            seed: 42,
            action_set: None,
        }
    }
}

struct SpaceView {
    all: Vec<Action>,
    micro_batches: Vec<Action>,
}

fn resolve_space(action_set: Option<&[Action]>, batch: u64) -> Result<SpaceView, SearchError> {
    let all = match action_set {
        Some(set) => set.to_vec(),
        None => action_space(batch),
    };
    for a in &all {
        if let Action::MicroBatch(m) = *a {
            if m == 0 || m > batch || batch % m != 0 {
                return Err(SearchError::BadActionSet(m, batch));
            }
        }
    }
    let micro_batches: Vec<Action> = all.iter().copied().filter(|a| *a != Action::Sync).collect();
    if micro_batches.is_empty() {
        return Err(SearchError::EmptyActionSet);
    }
    Ok(SpaceView { all, micro_batches })
}

/// Largest uniform staging that fits the buffer, if any.
fn uniform_seed(
    workload: &Workload,
    batch: u64,
    accel: &AcceleratorConfig,
    space: &SpaceView,
) -> Option<Strategy> {
    let mut sorted = space.micro_batches.clone();
    sorted.sort_by_key(|a| std::cmp::Reverse(a.staging()));
    for a in sorted {
        let s = Strategy::uniform(workload.num_layers(), a.staging());
        if let Ok(report) = evaluate(workload, &s, batch, accel) {
            if report.valid {
                return Some(s);
            }
        }
    }
    None
}

fn no_fusion_seed(num_layers: usize, space: &SpaceView) -> Option<Strategy> {
    if !space.all.contains(&Action::Sync) {
        return None;
    }
    let coarsest = *space.micro_batches.iter().max_by_key(|a| a.staging())?;
    let mut actions = vec![Action::Sync; num_layers + 1];
    actions[0] = coarsest;
    Some(Strategy::new(actions))
}

fn random_genome(n_actions: usize, space: &SpaceView, rng: &mut impl Rng) -> Strategy {
    let mut actions = Vec::with_capacity(n_actions);
    actions.push(*space.micro_batches.choose(rng).unwrap());
    for _ in 1..n_actions {
        actions.push(*space.all.choose(rng).unwrap());
    }
    Strategy::new(actions)
}

fn rank_population(fitnesses: &[Fitness]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitnesses.len()).collect();
    order.sort_by(|&a, &b| fitnesses[a].cmp(&fitnesses[b]).then(a.cmp(&b)));
    order
}

/// Genetic search over legal strategies.
pub fn ga_search_in(
    executor: &Executor,
    workload: &Workload,
    batch: u64,
    accel: &AcceleratorConfig,
    cfg: &GaConfig,
) -> Result<SearchResult, SearchError> {
    assert!(cfg.population >= 2, "population needs at least two individuals");
    assert!(cfg.generations >= 1);
    assert!(cfg.tournament >= 1);
    let start = Instant::now();
    let space = resolve_space(cfg.action_set.as_deref(), batch)?;
    let n = workload.num_layers();
    let genome_len = n + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut population: Vec<Strategy> = Vec::with_capacity(cfg.population);
    population.extend(no_fusion_seed(n, &space));
    population.extend(uniform_seed(workload, batch, accel, &space));
    while population.len() < cfg.population {
        population.push(random_genome(genome_len, &space, &mut rng));
    }
    population.truncate(cfg.population);

    let elite_count = ((cfg.population as f64 * cfg.elitism).round() as usize).max(1);
    let mut best: Option<(Fitness, Strategy, CostReport)> = None;
    let mut history = Vec::with_capacity(cfg.generations);
    let mut last_pool: Vec<(Strategy, CostReport)> = Vec::new();

    for generation in 0..cfg.generations {
        let reports = evaluate_many_in(executor, workload, &population, batch, accel)?;
        let fitnesses: Vec<Fitness> =
            reports.iter().map(|r| Fitness::of(r, accel.onchip_buffer)).collect();
        let order = rank_population(&fitnesses);
        let gen_best = order[0];
        if best.as_ref().is_none_or(|(f, _, _)| fitnesses[gen_best] < *f) {
            best = Some((
                fitnesses[gen_best],
                population[gen_best].clone(),
                reports[gen_best].clone(),
            ));
        }
        let (best_fit, _, best_rep) = best.as_ref().unwrap();
        history.push(GenStat {
            generation,
            best_latency_seconds: best_fit.latency_seconds,
            best_peak_bytes: best_rep.peak_buffer_bytes,
        });

        if generation == cfg.generations - 1 {
            last_pool = order
                .iter()
                .map(|&i| (population[i].clone(), reports[i].clone()))
                .collect();
            break;
        }

        let mut next: Vec<Strategy> =
            order.iter().take(elite_count).map(|&i| population[i].clone()).collect();
        while next.len() < cfg.population {
            let mother = tournament(&fitnesses, cfg.tournament, &mut rng);
            let father = tournament(&fitnesses, cfg.tournament, &mut rng);
            let mut child = if rng.gen_bool(cfg.crossover_rate) {
                let point = rng.gen_range(1..genome_len);
                let mut actions = population[mother].actions[..point].to_vec();
                actions.extend_from_slice(&population[father].actions[point..]);
                Strategy::new(actions)
            } else {
                population[mother].clone()
            };
            for (i, slot) in child.actions.iter_mut().enumerate() {
                if rng.gen_bool(cfg.mutation_rate) {
                    *slot = if i == 0 {
                        *space.micro_batches.choose(&mut rng).unwrap()
                    } else {
                        *space.all.choose(&mut rng).unwrap()
                    };
                }
            }
            next.push(child);
        }
        population = next;
    }

    let (_, best_strategy, best_report) = best.expect("at least one generation ran");
    Ok(SearchResult {
        best: best_strategy,
        best_report,
        history,
        samples_used: (cfg.population * cfg.generations) as u64,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        final_population: last_pool,
    })
}

pub fn ga_search(
    workload: &Workload,
    batch: u64,
    accel: &AcceleratorConfig,
    cfg: &GaConfig,
) -> Result<SearchResult, SearchError> {
    ga_search_in(&Executor::auto(), workload, batch, accel, cfg)
}

fn tournament(fitnesses: &[Fitness], k: usize, rng: &mut impl Rng) -> usize {
    let mut winner = rng.gen_range(0..fitnesses.len());
    for _ in 1..k {
        let challenger = rng.gen_range(0..fitnesses.len());
        if fitnesses[challenger] < fitnesses[winner] {
            winner = challenger;
        }
    }
    winner
}

/// Uniform random sampling with the same evaluation budget as a GA run.
pub fn random_search_in(
    executor: &Executor,
    workload: &Workload,
    batch: u64,
    accel: &AcceleratorConfig,
    samples: u64,
    seed: u64,
    action_set: Option<&[Action]>,
) -> Result<SearchResult, SearchError> {
    assert!(samples >= 1);
    let start = Instant::now();
    let space = resolve_space(action_set, batch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let genome_len = workload.num_layers() + 1;
    let population: Vec<Strategy> =
        (0..samples).map(|_| random_genome(genome_len, &space, &mut rng)).collect();
    let reports = evaluate_many_in(executor, workload, &population, batch, accel)?;
    let fitnesses: Vec<Fitness> =
        reports.iter().map(|r| Fitness::of(r, accel.onchip_buffer)).collect();
    let order = rank_population(&fitnesses);
    let best = order[0];
    Ok(SearchResult {
        best: population[best].clone(),
        best_report: reports[best].clone(),
        history: Vec::new(),
        samples_used: samples,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        final_population: order
            .iter()
            .map(|&i| (population[i].clone(), reports[i].clone()))
            .collect(),
    })
}

/// Hard cap on exhaustive enumeration.
pub const BRUTE_FORCE_CAP: u128 = 10_000_000;

/// Exhaustive search over the whole strategy space. Ties break toward the
/// lowest enumeration rank, so results are reproducible and independent of
/// chunking.
pub fn brute_force_in(
    executor: &Executor,
    workload: &Workload,
    batch: u64,
    accel: &AcceleratorConfig,
    action_set: Option<&[Action]>,
) -> Result<SearchResult, SearchError> {
    let start = Instant::now();
    let space = resolve_space(action_set, batch)?;
    let n = workload.num_layers();
    let s = space.all.len() as u128;
    let cardinality = space.micro_batches.len() as u128 * s.pow(n as u32);
    if cardinality > BRUTE_FORCE_CAP {
        return Err(SearchError::SpaceTooLarge { cardinality, cap: BRUTE_FORCE_CAP });
    }
    let total = cardinality as u64;

    let decode = |rank: u64| -> Strategy {
        let mut actions = vec![Action::Sync; n + 1];
        let mut rest = rank;
        for i in (1..=n).rev() {
            actions[i] = space.all[(rest % s as u64) as usize];
            rest /= s as u64;
        }
        actions[0] = space.micro_batches[rest as usize];
        Strategy::new(actions)
    };

    let chunk = 1u64 << 14;
    let ranges: Vec<(u64, u64)> =
        (0..total).step_by(chunk as usize).map(|lo| (lo, (lo + chunk).min(total))).collect();
    let winners: Vec<(Fitness, u64)> = executor.map_slice(&ranges, |&(lo, hi)| {
        let mut best: Option<(Fitness, u64)> = None;
        for rank in lo..hi {
            let strategy = decode(rank);
            let report = evaluate(workload, &strategy, batch, accel).expect("decoded strategies are legal");
            let fit = Fitness::of(&report, accel.onchip_buffer);
            if best.as_ref().is_none_or(|(bf, _)| fit < *bf) {
                best = Some((fit, rank));
            }
        }
        best.expect("ranges are non-empty")
    });
    let (_, best_rank) = winners
        .into_iter()
        .min_by(|(fa, ra), (fb, rb)| fa.cmp(fb).then(ra.cmp(rb)))
        .expect("space is non-empty");

    let best = decode(best_rank);
    let best_report = evaluate(workload, &best, batch, accel)?;
    Ok(SearchResult {
        best,
        best_report,
        history: Vec::new(),
        samples_used: total,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        final_population: Vec::new(),
    })
}

pub fn brute_force(
    workload: &Workload,
    batch: u64,
    accel: &AcceleratorConfig,
    action_set: Option<&[Action]>,
) -> Result<SearchResult, SearchError> {
    brute_force_in(&Executor::auto(), workload, batch, accel, action_set)
}
