use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate_with, TerminalPlanes};
use super::{gp_evaluate, Function, GpProgram, Node, Terminal};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::eval::{max_fbeta, FBetaConfig};
use crate::imagekit::RngStream;

/// Parameters of the evolutionary run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionParams {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Maximum tree depth (a leaf has depth 1); offspring deeper than this are rejected.
    pub max_depth: usize,
    /// Initial trees are ramped over depths `2..=init_depth`.
    pub init_depth: usize,
    /// Best individuals copied unchanged into the next generation.
    pub elitism: usize,
    pub tournament_size: usize,
    pub seed: u64,
    pub fbeta: FBetaConfig,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        Self {
            population_size: 50,
            generations: 30,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            max_depth: 8,
            init_depth: 4,
            elitism: 2,
            tournament_size: 3,
            seed: 7,
            fbeta: FBetaConfig::default(),
        }
    }
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::invalid("population_size", "must be >= 1"));
        }
        for (name, rate) in [("crossover_rate", self.crossover_rate), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::invalid(name, format!("{rate} outside [0, 1]")));
            }
        }
        if self.elitism == 0 || self.elitism > self.population_size {
            return Err(Error::invalid("elitism", "must be in 1..=population_size"));
        }
        if self.max_depth == 0 || self.init_depth == 0 || self.init_depth > self.max_depth {
            return Err(Error::invalid("init_depth", "need 1 <= init_depth <= max_depth"));
        }
        if self.tournament_size == 0 {
            return Err(Error::invalid("tournament_size", "must be >= 1"));
        }
        self.fbeta.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Z of the best individual: the sum of per-image max-F-beta.
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_size: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub program: GpProgram,
    /// Z recomputed on the dataset for the returned program.
    pub fitness: f64,
    /// `fitness / dataset.len()`.
    pub mean_fbeta: f64,
    pub trace: Vec<GenerationStats>,
}

fn random_tree(rng: &mut RngStream, depth: usize, full: bool) -> Node {
    let leaf = depth <= 1 || (!full && rng.random_bool(0.3));
    if leaf {
        return Node::Leaf(*Terminal::ALL.choose(rng).expect("nonempty"));
    }
    let f = *Function::ALL.choose(rng).expect("nonempty");
    let args = (0..f.arity()).map(|_| random_tree(rng, depth - 1, full)).collect();
    Node::Apply(f, args)
}

fn crossover(a: &Node, b: &Node, rng: &mut RngStream, max_depth: usize) -> Node {
    let mut child = a.clone();
    let at = rng.random_range(0..a.size());
    let from = rng.random_range(0..b.size());
    let donor = b.subtree(from).expect("index in range").clone();
    *child.subtree_mut(at).expect("index in range") = donor;
    if child.depth() > max_depth {
        a.clone()
    } else {
        child
    }
}

fn point_mutation(node: &mut Node, rng: &mut RngStream) {
    let at = rng.random_range(0..node.size());
    match node.subtree_mut(at).expect("index in range") {
        Node::Leaf(t) => *t = *Terminal::ALL.choose(rng).expect("nonempty"),
        Node::Apply(f, _) => {
            let arity = f.arity();
            let same: Vec<Function> = Function::ALL.into_iter().filter(|g| g.arity() == arity).collect();
            *f = *same.choose(rng).expect("nonempty");
        }
    }
}

fn tournament<'a>(pop: &'a [(GpProgram, f64)], size: usize, rng: &mut RngStream) -> &'a GpProgram {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..size {
        let i = rng.random_range(0..pop.len());
        if pop[i].1 > pop[best].1 || (pop[i].1 == pop[best].1 && i < best) {
            best = i;
        }
    }
    &pop[best].0
}

fn fitness(program: &GpProgram, planes: &[(TerminalPlanes, &Sample)], cfg: &FBetaConfig) -> f64 {
    planes
        .iter()
        .map(|(tp, s)| {
            evaluate_with(program, tp)
                .and_then(|map| max_fbeta(&map, &s.truth, cfg))
                .unwrap_or(0.0)
        })
        .sum()
}

fn stats(generation: usize, pop: &[(GpProgram, f64)]) -> GenerationStats {
    let best = best_index(pop);
    GenerationStats {
        generation,
        best_fitness: pop[best].1,
        mean_fitness: pop.iter().map(|p| p.1).sum::<f64>() / pop.len() as f64,
        best_size: pop[best].0.size(),
    }
}

/// Highest fitness, lowest index on ties.
fn best_index(pop: &[(GpProgram, f64)]) -> usize {
    let mut best = 0;
    for (i, p) in pop.iter().enumerate() {
        if p.1 > pop[best].1 {
            best = i;
        }
    }
    best
}

/// Evolves a saliency program maximizing `Z = sum_i maxFbeta(f(I_i), G_i)`.
///
/// Individual `i` of generation `g` draws from the stream
/// `derive(seed, (g << 32) | i)` (`g = 0` for the initial population), so
/// results do not depend on how fitness evaluation is parallelized.
pub fn gp_train(dataset: &[Sample], params: &EvolutionParams) -> Result<TrainOutcome> {
    params.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.iter().any(|s| s.truth.positives() == 0) {
        return Err(Error::EmptyGroundTruth);
    }
    for s in dataset {
        s.image.ensure_same_dims(s.truth.dims())?;
    }
    let cfg = &params.fbeta;
    let root = RngStream::new(params.seed);
    let stream = |generation: usize, i: usize| root.derive(((generation as u64) << 32) | i as u64);
    let planes: Vec<(TerminalPlanes, &Sample)> =
        dataset.iter().map(|s| (TerminalPlanes::new(&s.image), s)).collect();
    let evaluate = |programs: Vec<GpProgram>| -> Vec<(GpProgram, f64)> {
        programs
            .into_par_iter()
            .map(|p| {
                let f = fitness(&p, &planes, cfg);
                (p, f)
            })
            .collect()
    };

    let span = params.init_depth.saturating_sub(1).max(1);
    let initial = (0..params.population_size)
        .map(|i| {
            let mut rng = stream(0, i);
            let depth = (2 + i % span).min(params.init_depth);
            let root = random_tree(&mut rng, depth, i % 2 == 0);
            GpProgram::new(root).expect("generated trees are well formed")
        })
        .collect();
    let mut population = evaluate(initial);
    let mut trace = vec![stats(0, &population)];

    for generation in 1..=params.generations {
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| population[b].1.total_cmp(&population[a].1).then(a.cmp(&b)));
        let elite: Vec<(GpProgram, f64)> = order[..params.elitism].iter().map(|&i| population[i].clone()).collect();
        let offspring: Vec<GpProgram> = (params.elitism..params.population_size)
            .map(|i| {
                let mut rng = stream(generation, i);
                let first = tournament(&population, params.tournament_size, &mut rng);
                let mut child = if rng.random_bool(params.crossover_rate) {
                    let second = tournament(&population, params.tournament_size, &mut rng);
                    crossover(first.root(), second.root(), &mut rng, params.max_depth)
                } else {
                    first.root().clone()
                };
                if rng.random_bool(params.mutation_rate) {
                    point_mutation(&mut child, &mut rng);
                }
                GpProgram::new(child).expect("variation preserves arity")
            })
            .collect();
        population = elite;
        population.extend(evaluate(offspring));
        trace.push(stats(generation, &population));
    }

    let best = population.swap_remove(best_index(&population)).0;
    let fitness: f64 = dataset
        .iter()
        .map(|s| gp_evaluate(&best, &s.image).and_then(|m| max_fbeta(&m, &s.truth, cfg)))
        .sum::<Result<f64>>()?;
    Ok(TrainOutcome {
        mean_fbeta: fitness / dataset.len() as f64,
        program: best,
        fitness,
        trace,
    })
}
