use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagekit::RngStream;

/// DE/rand/1/bin settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    /// Differential weight in `(0, 2]`.
    pub f: f64,
    /// Binomial crossover probability.
    pub cr: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self { f: 0.5, cr: 0.9 }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f > 0.0 && self.f <= 2.0) {
            return Err(Error::invalid("f", format!("{} outside (0, 2]", self.f)));
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return Err(Error::invalid("cr", format!("{} outside [0, 1]", self.cr)));
        }
        Ok(())
    }
}

/// Three distinct indices, all different from `i`.
fn peers(i: usize, n: usize, rng: &mut RngStream) -> [usize; 3] {
    let mut out = [usize::MAX; 3];
    let mut k = 0;
    while k < 3 {
        let j = rng.random_range(0..n);
        if j != i && !out[..k].contains(&j) {
            out[k] = j;
            k += 1;
        }
    }
    out
}

/// Builds one trial vector per member: mutant `a + F (b - c)` from distinct
/// random peers, binomial crossover with one forced gene, clamped to bounds.
pub(crate) fn trials(population: &[Vec<f64>], bounds: &[(f64, f64)], cfg: &DeConfig, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let n = population.len();
    let dim = bounds.len();
    population
        .iter()
        .enumerate()
        .map(|(i, parent)| {
            let [a, b, c] = peers(i, n, rng);
            let forced = rng.random_range(0..dim);
            (0..dim)
                .map(|j| {
                    if j == forced || rng.random::<f64>() < cfg.cr {
                        let v = population[a][j] + cfg.f * (population[b][j] - population[c][j]);
                        v.clamp(bounds[j].0, bounds[j].1)
                    } else {
                        parent[j]
                    }
                })
                .collect()
        })
        .collect()
}

/// One DE generation with greedy replacement (a child replaces its parent
/// when its objective is not larger). Trials are drawn sequentially from
/// `rng` and evaluated in parallel, so results do not depend on thread count.
pub fn de_step<F>(
    population: Vec<Vec<f64>>,
    fitnesses: Vec<f64>,
    objective: &F,
    bounds: &[(f64, f64)],
    cfg: &DeConfig,
    rng: &mut RngStream,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if population.len() < 4 {
        return Err(Error::invalid("pop_size", "DE needs at least 4 members"));
    }
    if fitnesses.len() != population.len() || population.iter().any(|p| p.len() != bounds.len()) {
        return Err(Error::invalid("population", "shape does not match fitnesses or bounds"));
    }
    let children = trials(&population, bounds, cfg, rng);
    let child_fit: Vec<f64> = children.par_iter().map(|c| objective(c)).collect();
    let mut next = Vec::with_capacity(population.len());
    let mut next_fit = Vec::with_capacity(population.len());
    for (((parent, pf), child), cf) in population.into_iter().zip(fitnesses).zip(children).zip(child_fit) {
        if cf <= pf {
            next.push(child);
            next_fit.push(cf);
        } else {
            next.push(parent);
            next_fit.push(pf);
        }
    }
    Ok((next, next_fit))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(i, v)| (v - i as f64 + 2.0).powi(2)).sum()
    }

    fn random_population(n: usize, bounds: &[(f64, f64)], rng: &mut RngStream) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect())
            .collect()
    }

    #[test]
    fn identical_members_stay_put() {
        let pop = vec![vec![1.0, 2.0, 3.0]; 5];
        let bounds = [(0.0, 10.0); 3];
        let fit = vec![quadratic(&pop[0]); 5];
        let (next, nf) = de_step(pop.clone(), fit.clone(), &quadratic, &bounds, &DeConfig::default(), &mut RngStream::new(1)).unwrap();
        assert_eq!(next, pop);
        assert_eq!(nf, fit);
    }

    #[test]
    fn zero_crossover_changes_exactly_one_gene() {
        let bounds = [(-100.0, 100.0); 6];
        let mut rng = RngStream::new(4);
        let pop = random_population(8, &bounds, &mut rng);
        let cfg = DeConfig { f: 0.5, cr: 0.0 };
        for (parent, child) in pop.iter().zip(trials(&pop, &bounds, &cfg, &mut rng)) {
            let changed = parent.iter().zip(&child).filter(|(a, b)| a != b).count();
            assert_eq!(changed, 1);
        }
    }

    #[test]
    fn trials_respect_bounds() {
        let bounds = [(0.0, 1.0), (-3.0, -2.0), (10.0, 10.5)];
        let mut rng = RngStream::new(9);
        let pop = random_population(10, &bounds, &mut rng);
        let cfg = DeConfig { f: 2.0, cr: 1.0 };
        for t in trials(&pop, &bounds, &cfg, &mut rng) {
            for (v, (lo, hi)) in t.iter().zip(bounds) {
                assert!((lo..=hi).contains(v));
            }
        }
    }

    #[test]
    fn solves_separable_quadratic() {
        let bounds = [(-10.0, 10.0); 5];
        let mut rng = RngStream::new(1);
        let mut pop = random_population(20, &bounds, &mut rng);
        let mut fit: Vec<f64> = pop.iter().map(|p| quadratic(p)).collect();
        let mut best = f64::INFINITY;
        for _ in 0..200 {
            (pop, fit) = de_step(pop, fit, &quadratic, &bounds, &DeConfig::default(), &mut rng).unwrap();
            let b = fit.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(b <= best);
            best = b;
        }
        assert!(best < 1e-3, "best {best}");
    }

    #[test]
    fn rejects_small_population() {
        let bounds = [(0.0, 1.0)];
        let pop = vec![vec![0.5]; 3];
        assert!(de_step(pop, vec![0.0; 3], &|x: &[f64]| x[0], &bounds, &DeConfig::default(), &mut RngStream::new(0)).is_err());
        assert!(DeConfig { f: 0.0, cr: 0.5 }.validate().is_err());
    }
}
