//! Seeded population/dataset generators with controlled relevant and
//! irrelevant eigenstructure, and Monte Carlo experiments that compare
//! estimators by exact conditional mean square prediction error.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::estimators::{fit_with, EstimatorSpec};
use crate::linalg::{mean_and_stderr, symmetrize};
use crate::model::{
    FullParameter, ReducedComponent, ReducedParameter,
};
use crate::optimality::{thm6_criterion, thm7_criterion, CriterionReport, GammaPrior};
use crate::sample::{fit_pls_with, CovDivisor, Dataset, PlsFit};

/// Reduced coefficients: fixed values or a prior to draw one realization from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaSpec {
    Fixed(Vec<f64>),
    Prior(GammaPrior),
}

/// Knobs of a simulated population: eigenvalues split into relevant and
/// irrelevant blocks, coefficients on both, noise level, sample size, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub p: usize,
    pub m: usize,
    pub relevant_lambdas: Vec<f64>,
    pub irrelevant_lambdas: Vec<f64>,
    pub gamma_spec: GammaSpec,
    /// Coefficients on the irrelevant eigenvectors; zero under the exact
    /// reduced model, nonzero to plant a controlled violation.
    pub irrelevant_gamma: Vec<f64>,
    pub sigma2: f64,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl DesignSpec {
    fn validate(&self) -> Result<(), SimError> {
        if self.m > self.p {
            return Err(SimError::InvalidSpec(format!(
                "m = {} exceeds p = {}",
                self.m, self.p
            )));
        }
        if self.relevant_lambdas.len() != self.m {
            return Err(SimError::InvalidSpec(format!(
                "need {} relevant eigenvalues, got {}",
                self.m,
                self.relevant_lambdas.len()
            )));
        }
        if self.irrelevant_lambdas.len() != self.p - self.m {
            return Err(SimError::InvalidSpec(format!(
                "need {} irrelevant eigenvalues, got {}",
                self.p - self.m,
                self.irrelevant_lambdas.len()
            )));
        }
        if self.irrelevant_gamma.len() != self.p - self.m {
            return Err(SimError::InvalidSpec(format!(
                "need {} irrelevant coefficients, got {}",
                self.p - self.m,
                self.irrelevant_gamma.len()
            )));
        }
        for &l in self.relevant_lambdas.iter().chain(&self.irrelevant_lambdas) {
            if !(l.is_finite() && l > 0.0) {
                return Err(SimError::InvalidSpec(format!("eigenvalue {l} must be > 0")));
            }
        }
        for i in 0..self.m {
            for j in (i + 1)..self.m {
                let (a, b) = (self.relevant_lambdas[i], self.relevant_lambdas[j]);
                if (a - b).abs() <= 1e-9 * a.abs().max(b.abs()) {
                    return Err(SimError::InvalidSpec(format!(
                        "relevant eigenvalues {a} and {b} coincide; the reduction would lose a component"
                    )));
                }
            }
        }
        if let GammaSpec::Fixed(g) = &self.gamma_spec {
            if g.len() != self.m {
                return Err(SimError::InvalidSpec(format!(
                    "need {} coefficients, got {}",
                    self.m,
                    g.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite() || *v == 0.0) {
                return Err(SimError::InvalidSpec(
                    "relevant coefficients must be nonzero".into(),
                ));
            }
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(SimError::InvalidSpec(format!(
                "sigma2 = {} must be >= 0",
                self.sigma2
            )));
        }
        if self.n < 2 {
            return Err(SimError::InvalidSpec("n must be at least 2".into()));
        }
        Ok(())
    }
}

/// The generated population: full parameter, the planted reduction, and the
/// true regression vector.
#[derive(Debug, Clone)]
pub struct BuiltPopulation {
    pub phi: FullParameter,
    pub theta: ReducedParameter,
    pub beta: DVector<f64>,
}

/// Monte Carlo summary for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub estimator: EstimatorSpec,
    pub msep_mean: f64,
    pub msep_stderr: f64,
    pub n_replicates: usize,
    pub skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub criterion: Option<CriterionReport>,
}

/// Build the population from the design: a seeded Haar-random orthogonal
/// eigenbasis, the block-diagonal spectrum, beta assembled from the planted
/// coefficients, and sigma_xy = Sigma_xx beta.
pub fn build_population(spec: &DesignSpec) -> Result<BuiltPopulation, SimError> {
    spec.validate()?;
    let p = spec.p;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    rng.set_stream(POPULATION_STREAM);
    let q = haar_orthogonal(p, &mut rng);
    let gammas = match &spec.gamma_spec {
        GammaSpec::Fixed(g) => g.clone(),
        GammaSpec::Prior(prior) => {
            prior.validate()?;
            if prior.m() != spec.m {
                return Err(SimError::InvalidSpec(format!(
                    "prior has {} components, design has m = {}",
                    prior.m(),
                    spec.m
                )));
            }
            let mut draw: Vec<f64> = Vec::with_capacity(spec.m);
            for c in prior.components() {
                let mut g = c.sample(&mut rng);
                // the reduced model needs nonzero coefficients
                let mut guard = 0;
                while g == 0.0 && guard < 64 {
                    g = c.sample(&mut rng);
                    guard += 1;
                }
                if g == 0.0 {
                    return Err(SimError::InvalidSpec(
                        "prior keeps producing zero coefficients".into(),
                    ));
                }
                draw.push(g);
            }
            draw
        }
    };
    let lambdas: Vec<f64> = spec
        .relevant_lambdas
        .iter()
        .chain(&spec.irrelevant_lambdas)
        .copied()
        .collect();
    let lam = DMatrix::from_diagonal(&DVector::from_vec(lambdas.clone()));
    let sigma_xx = symmetrize(&(&q * lam * q.transpose()));
    let mut beta = DVector::<f64>::zeros(p);
    for (j, g) in gammas.iter().enumerate() {
        beta += *g * q.column(j);
    }
    for (j, g) in spec.irrelevant_gamma.iter().enumerate() {
        beta += *g * q.column(spec.m + j);
    }
    let sigma_xy = &sigma_xx * &beta;
    let phi = FullParameter::new(sigma_xx, sigma_xy, spec.sigma2)?;
    // planted reduction, ordered like the canonical reduction output
    let mut comps: Vec<(f64, f64, usize)> = gammas
        .iter()
        .enumerate()
        .map(|(j, &g)| (g, spec.relevant_lambdas[j], j))
        .collect();
    comps.sort_by(|a, b| {
        let ka = a.0.abs() * a.1;
        let kb = b.0.abs() * b.1;
        kb.total_cmp(&ka)
            .then(b.0.abs().total_cmp(&a.0.abs()))
            .then(a.2.cmp(&b.2))
    });
    let components = comps
        .into_iter()
        .map(|(gamma, _, j)| ReducedComponent {
            gamma,
            direction: q.column(j).clone_owned(),
        })
        .collect();
    let theta = ReducedParameter::new(components, p)?;
    Ok(BuiltPopulation { phi, theta, beta })
}

const POPULATION_STREAM: u64 = 0;
const REPLICATE_STREAM_BASE: u64 = 1;
const TEST_SET_STREAM_BASE: u64 = 1 << 32;

/// Haar-distributed orthogonal matrix: orthonormalize a Gaussian matrix and
/// fix the factor signs so the distribution is exact and the output
/// deterministic for a given generator state.
fn haar_orthogonal(p: usize, rng: &mut ChaCha12Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col.neg_mut();
        }
    }
    q
}

/// Per-replicate generator stream; replicate index keyed so concurrent
/// execution cannot change the draw.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(REPLICATE_STREAM_BASE + replicate as u64);
    rng
}

/// Draw x ~ N(0, Sigma_xx) through the Cholesky factor and y = beta . x + eps.
pub fn sample_dataset(phi: &FullParameter, n: usize, rng: &mut ChaCha12Rng) -> Dataset {
    let p = phi.p();
    let chol = phi
        .sigma_xx()
        .clone()
        .cholesky()
        .expect("validated parameter is positive definite");
    let l = chol.l();
    let beta = crate::model::beta_true(phi).expect("validated parameter");
    let sd = phi.sigma2().sqrt();
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut y = DVector::<f64>::zeros(n);
    let mut z = DVector::<f64>::zeros(p);
    for i in 0..n {
        for k in 0..p {
            z[k] = rng.sample::<f64, _>(StandardNormal);
        }
        let xi = &l * &z;
        let eps: f64 = rng.sample::<f64, _>(StandardNormal);
        y[i] = beta.dot(&xi) + sd * eps;
        x.row_mut(i).copy_from(&xi.transpose());
    }
    Dataset::new(x, y).expect("generated data is finite and has n >= 2 rows")
}

/// How the per-replicate MSEP of a fitted coefficient vector is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsepMode {
    /// Closed form sigma2 + (beta - b)' Sigma (beta - b); no test-set noise.
    Exact,
    /// Empirical mean over a fresh test set of the given size.
    Empirical(usize),
}

/// Options of a Monte Carlo experiment.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentOptions {
    pub replicates: usize,
    pub mode: MsepMode,
    /// Floor below which the estimator-level criteria refuse to report.
    pub min_criterion_replicates: usize,
    pub attach_criteria: bool,
}

impl ExperimentOptions {
    pub fn new(replicates: usize) -> Self {
        Self {
            replicates,
            mode: MsepMode::Exact,
            min_criterion_replicates: 100,
            attach_criteria: true,
        }
    }
}

struct ReplicateOutcome {
    fits: Vec<Result<DVector<f64>, String>>,
    pls_fit: Option<PlsFit>,
}

/// Run the experiment: for every replicate draw a dataset from the design's
/// population, fit every estimator, and score each fit by conditional MSEP.
/// The estimator-level criterion reports are computed from the same replicate
/// ensemble: the PLS-only criterion on the reference PLS estimator (the first
/// `pls:a` entry), the distance criterion on every rival against it.
///
/// Estimators that fail on a replicate are skipped and counted; more than 5%
/// skips for any estimator fails the whole run.
pub fn msep_experiment(
    spec: &DesignSpec,
    estimators: &[EstimatorSpec],
    replicates: usize,
) -> Result<Vec<McResult>, SimError> {
    msep_experiment_with(spec, estimators, ExperimentOptions::new(replicates))
}

pub fn msep_experiment_with(
    spec: &DesignSpec,
    estimators: &[EstimatorSpec],
    opts: ExperimentOptions,
) -> Result<Vec<McResult>, SimError> {
    if opts.replicates < 30 {
        return Err(SimError::InvalidSpec(format!(
            "need at least 30 replicates, got {}",
            opts.replicates
        )));
    }
    let pop = build_population(spec)?;
    let reference_pls = estimators
        .iter()
        .position(|e| matches!(e, EstimatorSpec::Pls(_)));
    let outcomes: Vec<ReplicateOutcome> = (0..opts.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(spec.seed, r);
            let data = sample_dataset(&pop.phi, spec.n, &mut rng);
            let mut fits = Vec::with_capacity(estimators.len());
            let mut pls_fit = None;
            for (idx, est) in estimators.iter().enumerate() {
                let beta = fit_with(*est, &data, CovDivisor::NMinusOne)
                    .map(|f| f.beta)
                    .map_err(|e| e.to_string());
                if Some(idx) == reference_pls && beta.is_ok() {
                    if let EstimatorSpec::Pls(a) = est {
                        pls_fit = fit_pls_with(&data, *a, CovDivisor::NMinusOne).ok();
                    }
                }
                fits.push(beta);
            }
            ReplicateOutcome { fits, pls_fit }
        })
        .collect();

    // exact conditional MSEP per estimator per replicate, aggregated in
    // replicate order so thread scheduling cannot change the totals
    let mut results = Vec::with_capacity(estimators.len());
    for (idx, est) in estimators.iter().enumerate() {
        let mut values = Vec::with_capacity(opts.replicates);
        let mut skipped = 0usize;
        for (r, o) in outcomes.iter().enumerate() {
            match &o.fits[idx] {
                Ok(beta) => values.push(score_msep(beta, &pop, spec, r, opts.mode)),
                Err(_) => skipped += 1,
            }
        }
        if skipped * 20 > opts.replicates {
            return Err(SimError::TooManySkips {
                estimator: est.to_string(),
                skipped,
                replicates: opts.replicates,
            });
        }
        let (mean, stderr) = mean_and_stderr(&values);
        let criterion = if opts.attach_criteria {
            attach_criterion(idx, reference_pls, &outcomes, &pop, &opts)?
        } else {
            None
        };
        results.push(McResult {
            estimator: *est,
            msep_mean: mean,
            msep_stderr: stderr,
            n_replicates: values.len(),
            skipped,
            criterion,
        });
    }
    Ok(results)
}

fn attach_criterion(
    idx: usize,
    reference_pls: Option<usize>,
    outcomes: &[ReplicateOutcome],
    pop: &BuiltPopulation,
    opts: &ExperimentOptions,
) -> Result<Option<CriterionReport>, SimError> {
    let Some(ref_idx) = reference_pls else {
        return Ok(None);
    };
    if idx == ref_idx {
        let fits: Vec<PlsFit> = outcomes.iter().filter_map(|o| o.pls_fit.clone()).collect();
        let rep = thm7_criterion(&fits, &pop.phi, opts.min_criterion_replicates)?;
        return Ok(Some(rep));
    }
    // paired replicates where both the rival and the reference succeeded
    let mut rival = Vec::new();
    let mut reference = Vec::new();
    for o in outcomes {
        if let (Ok(b), Ok(ba)) = (&o.fits[idx], &o.fits[ref_idx]) {
            rival.push(b.clone());
            reference.push(ba.clone());
        }
    }
    let rep = thm6_criterion(&rival, &reference, &pop.phi, opts.min_criterion_replicates)?;
    Ok(Some(rep))
}

fn score_msep(
    beta_hat: &DVector<f64>,
    pop: &BuiltPopulation,
    spec: &DesignSpec,
    replicate: usize,
    mode: MsepMode,
) -> f64 {
    match mode {
        MsepMode::Exact => crate::optimality::tau(beta_hat, &pop.phi),
        MsepMode::Empirical(test_n) => {
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            rng.set_stream(TEST_SET_STREAM_BASE + replicate as u64);
            let test = sample_dataset(&pop.phi, test_n, &mut rng);
            let mut acc = crate::linalg::KahanSum::default();
            for i in 0..test.n() {
                let pred = beta_hat.dot(&test.x().row(i).transpose());
                let d = test.y()[i] - pred;
                acc.add(d * d);
            }
            acc.value() / test_n as f64
        }
    }
}
