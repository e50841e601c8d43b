//! Seeded genetic algorithm: roulette selection, single-point crossover,
//! single-position mutation, repair after every variation, and elitism.
//!
//! Fitness evaluation runs in parallel; everything that consumes randomness
//! runs sequentially on one stream, so a run is a pure function of the
//! problem and the parameters.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type GaRng = ChaCha8Rng;

/// Guard added to objectives before inversion.
pub const FITNESS_EPS: f64 = 1e-9;

/// Retries allowed when a mutated chromosome cannot be repaired.
pub const MUTATION_RETRIES: usize = 100;

/// `1 / (objective + eps)`.
pub fn inverse_fitness(objective: f64) -> f64 {
    1.0 / (objective.max(0.0) + FITNESS_EPS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverMode {
    /// Exchange every gene from the cut point to the end.
    #[default]
    Suffix,
    /// Exchange only the gene at the cut point.
    SinglePosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub population_size: usize,
    pub max_generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub crossover_mode: CrossoverMode,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population_size: 50,
            max_generations: 500,
            crossover_prob: 0.8,
            mutation_prob: 0.5,
            seed: 0,
            crossover_mode: CrossoverMode::Suffix,
        }
    }
}

impl GaParams {
    pub fn check(&self) -> Result<()> {
        if self.population_size < 2 || self.population_size % 2 != 0 {
            return Err(Error::malformed("population size must be even and at least 2"));
        }
        if self.max_generations < 1 {
            return Err(Error::malformed("at least one generation is required"));
        }
        for p in [self.crossover_prob, self.mutation_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::malformed(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// What the engine needs from a concrete optimization problem.
pub trait Problem: Sync {
    type Gene: Clone + PartialEq + Send + Sync + std::fmt::Debug;

    fn random_individual(&self, rng: &mut GaRng) -> Vec<Self::Gene>;

    /// Non-negative, finite; larger is better.
    fn fitness(&self, genes: &[Self::Gene]) -> Result<f64>;

    /// Changes the gene at `pos` in place.
    fn mutate_gene(&self, genes: &mut [Self::Gene], pos: usize, rng: &mut GaRng);

    /// Restores feasibility in place; errors when that is impossible.
    fn repair(&self, _genes: &mut [Self::Gene]) -> Result<()> {
        Ok(())
    }

    /// Chromosomes injected into the initial population before the random
    /// ones.
    fn seed_individuals(&self) -> Vec<Vec<Self::Gene>> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual<G> {
    pub genes: Vec<G>,
    pub fitness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone)]
pub struct Evolution<G> {
    pub best: Individual<G>,
    /// One entry per generation, including generation 0.
    pub history: Vec<GenerationStats>,
}

/// Draws `count` indices with probability proportional to fitness, with
/// replacement. A population with zero total fitness is sampled uniformly.
pub fn roulette_select(fitnesses: &[f64], count: usize, rng: &mut GaRng) -> Vec<usize> {
    assert!(!fitnesses.is_empty(), "roulette over an empty population");
    let mut cumulative = Vec::with_capacity(fitnesses.len());
    let mut total = 0.0;
    for &f in fitnesses {
        debug_assert!(f >= 0.0 && f.is_finite(), "fitness {f}");
        total += f.max(0.0);
        cumulative.push(total);
    }
    (0..count)
        .map(|_| {
            if total <= 0.0 {
                return rng.gen_range(0..fitnesses.len());
            }
            let x = rng.gen::<f64>() * total;
            cumulative.partition_point(|&c| c <= x).min(fitnesses.len() - 1)
        })
        .collect()
}

/// Cuts both parents at `point` and exchanges the tails (or the single gene,
/// depending on `mode`).
pub fn crossover_at<G: Clone>(a: &[G], b: &[G], point: usize, mode: CrossoverMode) -> (Vec<G>, Vec<G>) {
    let (mut c1, mut c2) = (a.to_vec(), b.to_vec());
    match mode {
        CrossoverMode::Suffix => {
            c1[point..].clone_from_slice(&b[point..]);
            c2[point..].clone_from_slice(&a[point..]);
        }
        CrossoverMode::SinglePosition => {
            c1[point] = b[point].clone();
            c2[point] = a[point].clone();
        }
    }
    (c1, c2)
}

/// Single-point crossover with a uniformly drawn cut point.
pub fn single_point_crossover<G: Clone>(a: &[G], b: &[G], mode: CrossoverMode, rng: &mut GaRng) -> Result<(Vec<G>, Vec<G>)> {
    if a.len() != b.len() {
        return Err(Error::malformed(format!("cannot cross chromosomes of length {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let point = rng.gen_range(0..a.len());
    Ok(crossover_at(a, b, point, mode))
}

/// Mutates one uniformly chosen position and repairs. If repair fails the
/// mutation is redrawn from the original chromosome, up to
/// [`MUTATION_RETRIES`] times.
pub fn mutate<P: Problem>(problem: &P, genes: &[P::Gene], rng: &mut GaRng) -> Result<Vec<P::Gene>> {
    if genes.is_empty() {
        return Ok(Vec::new());
    }
    for _ in 0..MUTATION_RETRIES {
        let mut child = genes.to_vec();
        let pos = rng.gen_range(0..child.len());
        problem.mutate_gene(&mut child, pos, rng);
        if problem.repair(&mut child).is_ok() {
            return Ok(child);
        }
    }
    Err(Error::OverConstrained(format!("mutation could not be repaired after {MUTATION_RETRIES} attempts")))
}

fn evaluate_all<P: Problem>(problem: &P, pop: &[Vec<P::Gene>]) -> Result<Vec<f64>> {
    let fits = pop.par_iter().map(|g| problem.fitness(g)).collect::<Result<Vec<f64>>>()?;
    if let Some(bad) = fits.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
        return Err(Error::Invariant(format!("fitness {bad} is not a finite non-negative number")));
    }
    Ok(fits)
}

fn stats(generation: usize, best: f64, fits: &[f64]) -> GenerationStats {
    GenerationStats { generation, best, mean: fits.iter().sum::<f64>() / fits.len() as f64 }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (i, &x)| if x > v[b] { i } else { b })
}

fn argmin(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (i, &x)| if x < v[b] { i } else { b })
}

/// Runs the full evolution loop.
pub fn evolve<P: Problem>(problem: &P, params: &GaParams) -> Result<Evolution<P::Gene>> {
    params.check()?;
    let m = params.population_size;
    let mut rng = GaRng::seed_from_u64(params.seed);

    let mut pop: Vec<Vec<P::Gene>> = Vec::with_capacity(m);
    for mut g in problem.seed_individuals().into_iter().take(m) {
        problem.repair(&mut g)?;
        pop.push(g);
    }
    while pop.len() < m {
        let mut g = problem.random_individual(&mut rng);
        problem.repair(&mut g)?;
        pop.push(g);
    }
    let mut fits = evaluate_all(problem, &pop)?;
    let b = argmax(&fits);
    let mut best = Individual { genes: pop[b].clone(), fitness: fits[b] };
    let mut history = vec![stats(0, best.fitness, &fits)];

    for generation in 1..=params.max_generations {
        let parents = roulette_select(&fits, m, &mut rng);
        let mut next: Vec<Vec<P::Gene>> = Vec::with_capacity(m);
        for pair in parents.chunks(2) {
            let (a, b) = (&pop[pair[0]], &pop[pair[pair.len() - 1]]);
            if rng.gen::<f64>() < params.crossover_prob {
                let (mut c1, mut c2) = single_point_crossover(a, b, params.crossover_mode, &mut rng)?;
                // A child that cannot be repaired is replaced by its parent.
                if problem.repair(&mut c1).is_err() {
                    c1 = a.clone();
                }
                if problem.repair(&mut c2).is_err() {
                    c2 = b.clone();
                }
                next.push(c1);
                next.push(c2);
            } else {
                next.push(a.clone());
                next.push(b.clone());
            }
        }
        next.truncate(m);
        for g in next.iter_mut() {
            if rng.gen::<f64>() < params.mutation_prob {
                *g = mutate(problem, g, &mut rng)?;
            }
        }

        let mut next_fits = evaluate_all(problem, &next)?;
        let top = argmax(&next_fits);
        if next_fits[top] > best.fitness {
            best = Individual { genes: next[top].clone(), fitness: next_fits[top] };
        } else {
            let worst = argmin(&next_fits);
            next[worst] = best.genes.clone();
            next_fits[worst] = best.fitness;
        }
        pop = next;
        fits = next_fits;
        history.push(stats(generation, best.fitness, &fits));
    }
    Ok(Evolution { best, history })
}

/// `generation,best,mean` rows.
pub fn write_history_csv<W: Write>(history: &[GenerationStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["generation", "best", "mean"])?;
    for s in history {
        w.write_record([s.generation.to_string(), format!("{:e}", s.best), format!("{:e}", s.mean)])?;
    }
    w.flush()?;
    Ok(())
}
