//! Canonical CMA-ES (weighted recombination, cumulative step-size adaptation,
//! rank-one and rank-mu covariance updates) maximizing a fitness function.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const INITIAL_SIGMA: f64 = 0.5;
/// Smallest population accepted; `3 * floor(ln dim)` yields fewer for
/// dimensions below 20.
pub const MIN_LAMBDA: usize = 4;
/// Eigenvalues below this fraction of the largest are raised to it.
const EIGEN_FLOOR: f64 = 1e-14;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CmaesError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("expected {expected} fitness values, got {found}")]
    FitnessCount { expected: usize, found: usize },
    #[error("could not build an evaluation pool: {0}")]
    Pool(String),
}

/// `3 * floor(ln dim)`, raised to [`MIN_LAMBDA`].
pub fn population_size(dim: usize) -> usize {
    let raw = 3 * (dim.max(1) as f64).ln().floor() as usize;
    raw.max(MIN_LAMBDA)
}

/// Strategy constants derived from the dimension and population size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
    /// Generations between eigendecompositions of `C`.
    pub eigen_interval: usize,
}

impl Constants {
    pub fn new(dim: usize, lambda: usize) -> Self {
        let n = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu =
            (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        let eigen_interval = ((1.0 / (10.0 * n * (c_1 + c_mu))).floor() as usize).max(1);
        Self {
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            eigen_interval,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cmaes {
    pub dim: usize,
    pub constants: Constants,
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    /// Eigenvectors of `cov` as columns.
    basis: DMatrix<f64>,
    /// Square roots of the eigenvalues of `cov`.
    scales: DVector<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    pub generation: usize,
    pub evaluations: usize,
    eigen_generation: usize,
    rng: ChaCha8Rng,
}

impl Cmaes {
    /// Mean drawn uniformly from `[-1, 1]^dim`, `sigma = 0.5`, identity
    /// covariance.
    pub fn new(dim: usize, seed: u64) -> Result<Self, CmaesError> {
        if dim == 0 {
            return Err(CmaesError::ZeroDimension);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mean: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Ok(Self::with_state(
            mean,
            INITIAL_SIGMA,
            population_size(dim),
            rng,
        ))
    }

    /// Start from an explicit mean, step size and population size.
    pub fn with_mean(
        mean: Vec<f64>,
        sigma: f64,
        lambda: usize,
        seed: u64,
    ) -> Result<Self, CmaesError> {
        if mean.is_empty() {
            return Err(CmaesError::ZeroDimension);
        }
        Ok(Self::with_state(
            mean,
            sigma,
            lambda.max(2),
            ChaCha8Rng::seed_from_u64(seed),
        ))
    }

    fn with_state(mean: Vec<f64>, sigma: f64, lambda: usize, rng: ChaCha8Rng) -> Self {
        let dim = mean.len();
        Self {
            dim,
            constants: Constants::new(dim, lambda),
            mean: DVector::from_vec(mean),
            sigma,
            cov: DMatrix::identity(dim, dim),
            basis: DMatrix::identity(dim, dim),
            scales: DVector::from_element(dim, 1.0),
            p_sigma: DVector::zeros(dim),
            p_c: DVector::zeros(dim),
            generation: 0,
            evaluations: 0,
            eigen_generation: 0,
            rng,
        }
    }

    pub fn lambda(&self) -> usize {
        self.constants.lambda
    }

    /// Eigenvalues of the covariance from the last decomposition.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.scales.iter().map(|s| s * s).collect()
    }

    /// Draw `lambda` candidates `mean + sigma * B * D * z`.
    pub fn ask(&mut self) -> Vec<Vec<f64>> {
        (0..self.constants.lambda)
            .map(|_| {
                let z =
                    DVector::from_fn(self.dim, |_, _| self.rng.sample::<f64, _>(StandardNormal));
                let y = &self.basis * z.component_mul(&self.scales);
                (&self.mean + y * self.sigma).data.into()
            })
            .collect()
    }

    /// Update the distribution from candidates and their fitness (higher is
    /// better). Ties keep candidate order; NaN ranks last.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitness: &[f64]) -> Result<(), CmaesError> {
        let lambda = self.constants.lambda;
        if fitness.len() != lambda || candidates.len() != lambda {
            return Err(CmaesError::FitnessCount {
                expected: lambda,
                found: fitness.len().min(candidates.len()),
            });
        }
        let order = rank_descending(fitness);
        let n = self.dim as f64;
        let k = &self.constants;

        let steps: Vec<DVector<f64>> = order[..k.mu]
            .iter()
            .map(|&i| (DVector::from_column_slice(&candidates[i]) - &self.mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(self.dim);
        for (w, y) in k.weights.iter().zip(&steps) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean.axpy(self.sigma, &y_w, 1.0);

        // C^(-1/2) y_w = B D^-1 B^T y_w
        let inv_sqrt_y = &self.basis * (self.basis.tr_mul(&y_w)).component_div(&self.scales);
        self.p_sigma *= 1.0 - k.c_sigma;
        self.p_sigma.axpy(
            (k.c_sigma * (2.0 - k.c_sigma) * k.mu_eff).sqrt(),
            &inv_sqrt_y,
            1.0,
        );

        let ps_norm = self.p_sigma.norm();
        let gen = (self.generation + 1) as f64;
        let h_sigma = ps_norm / (1.0 - (1.0 - k.c_sigma).powf(2.0 * gen)).sqrt()
            < (1.4 + 2.0 / (n + 1.0)) * k.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c *= 1.0 - k.c_c;
        self.p_c
            .axpy(h * (k.c_c * (2.0 - k.c_c) * k.mu_eff).sqrt(), &y_w, 1.0);

        let delta = (1.0 - h) * k.c_c * (2.0 - k.c_c);
        let decay = 1.0 + k.c_1 * delta - k.c_1 - k.c_mu;
        self.cov *= decay;
        self.cov.ger(k.c_1, &self.p_c, &self.p_c, 1.0);
        for (w, y) in k.weights.iter().zip(&steps) {
            self.cov.ger(k.c_mu * w, y, y, 1.0);
        }

        self.sigma *= ((k.c_sigma / k.d_sigma) * (ps_norm / k.chi_n - 1.0)).exp();
        self.generation += 1;
        self.evaluations += lambda;
        if self.generation - self.eigen_generation >= self.constants.eigen_interval {
            self.decompose();
        }
        Ok(())
    }

    /// Refresh `B` and `D` from `C`, repairing non-positive eigenvalues.
    pub fn decompose(&mut self) {
        self.eigen_generation = self.generation;
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let eig = SymmetricEigen::try_new(sym.clone(), 1e-15, 0).or_else(|| {
            let jitter = EIGEN_FLOOR * sym.diagonal().amax().max(f64::MIN_POSITIVE);
            let shifted = &sym + DMatrix::identity(self.dim, self.dim) * jitter;
            SymmetricEigen::try_new(shifted, 1e-15, 0)
        });
        let Some(eig) = eig else {
            tracing::warn!(
                generation = self.generation,
                "covariance decomposition failed; resetting"
            );
            self.cov = DMatrix::identity(self.dim, self.dim);
            self.basis = DMatrix::identity(self.dim, self.dim);
            self.scales = DVector::from_element(self.dim, 1.0);
            return;
        };
        let max = eig.eigenvalues.max();
        let floor = EIGEN_FLOOR * max.max(f64::MIN_POSITIVE);
        let repaired = eig.eigenvalues.iter().any(|&v| !(v >= floor));
        let values = eig.eigenvalues.map(|v| if v >= floor { v } else { floor });
        self.basis = eig.eigenvectors;
        self.scales = values.map(f64::sqrt);
        self.cov = if repaired {
            &self.basis * DMatrix::from_diagonal(&values) * self.basis.transpose()
        } else {
            sym
        };
    }
}

/// Indices sorted by descending fitness; stable, NaN last.
pub fn rank_descending(fitness: &[f64]) -> Vec<usize> {
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| key(fitness[b]).total_cmp(&key(fitness[a])));
    order
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub evaluations: usize,
    pub best: f64,
    pub gen_best: f64,
    pub gen_median: f64,
}

pub const RUNLOG_HEADER: &str = "evaluations,best,gen_best,gen_median";

/// Per-generation progress with `key=value` metadata written as `#` lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub metadata: Vec<(String, String)>,
    pub records: Vec<RunRecord>,
}

impl RunLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        out.push_str(RUNLOG_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.evaluations, r.best, r.gen_best, r.gen_median
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut log = RunLog::default();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    log.metadata
                        .push((k.trim().to_owned(), v.trim().to_owned()));
                }
                continue;
            }
            if !header_seen {
                if line != RUNLOG_HEADER {
                    return Err(format!("line {}: expected header `{RUNLOG_HEADER}`", i + 1));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || format!("line {}: malformed record", i + 1);
            if fields.len() != 4 {
                return Err(bad());
            }
            log.records.push(RunRecord {
                evaluations: fields[0].parse().map_err(|_| bad())?,
                best: fields[1].parse().map_err(|_| bad())?,
                gen_best: fields[2].parse().map_err(|_| bad())?,
                gen_median: fields[3].parse().map_err(|_| bad())?,
            });
        }
        if !header_seen {
            return Err("missing run log header".into());
        }
        Ok(log)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    pub log: RunLog,
    pub lambda: usize,
}

/// Run ask/evaluate/tell until exactly `budget` evaluations have been spent.
/// The last generation evaluates only the remaining candidates and is not
/// told. Evaluation uses `parallelism` threads; results are identical for
/// every thread count.
pub fn optimize<F>(
    dim: usize,
    budget: usize,
    seed: u64,
    parallelism: usize,
    fitness: F,
) -> Result<OptimizeResult, CmaesError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let es = Cmaes::new(dim, seed)?;
    optimize_from(es, budget, parallelism, fitness, |_, _| {})
}

/// [`optimize`] from a prepared state, calling `progress(record, best)` after
/// each generation.
pub fn optimize_from<F, P>(
    mut es: Cmaes,
    budget: usize,
    parallelism: usize,
    fitness: F,
    mut progress: P,
) -> Result<OptimizeResult, CmaesError>
where
    F: Fn(&[f64]) -> f64 + Sync,
    P: FnMut(&RunRecord, &[f64]),
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| CmaesError::Pool(e.to_string()))?;
    let lambda = es.lambda();
    let mut log = RunLog::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut spent = 0;
    while spent < budget {
        let candidates = es.ask();
        let take = lambda.min(budget - spent);
        let scores: Vec<f64> =
            pool.install(|| candidates[..take].par_iter().map(|c| fitness(c)).collect());
        spent += take;

        let order = rank_descending(&scores);
        let gen_best = scores[order[0]];
        if best
            .as_ref()
            .is_none_or(|(b, _)| gen_best > *b || b.is_nan())
        {
            best = Some((gen_best, candidates[order[0]].clone()));
        }
        let (best_fitness, best_x) = best.as_ref().expect("at least one evaluation");
        let record = RunRecord {
            evaluations: spent,
            best: *best_fitness,
            gen_best,
            gen_median: median(&scores),
        };
        progress(&record, best_x);
        log.records.push(record);
        if take == lambda {
            es.tell(&candidates, &scores)?;
        }
    }
    let (best_fitness, best) =
        best.unwrap_or((f64::NEG_INFINITY, es.mean.iter().copied().collect()));
    Ok(OptimizeResult {
        best,
        best_fitness,
        log,
        lambda,
    })
}
