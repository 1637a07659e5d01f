//! Forward generators: build populations and joint pmfs from known
//! components, for oracles, property tests, and the bundled worked examples.
//!
//! The additive two-measurement generator works in exact rational
//! arithmetic whenever its inputs carry exact probabilities, so the worked
//! examples reproduce bit-for-bit. The three-measurement generator and the
//! random-instance samplers use plain floats.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kotlarski::{CfError, Sample2};
use crate::population::{
    check_leaves, population_from_joint, LatentPopulation, LatentValue, LeavesReport,
    ObservedTuple, PopulationError,
};
use crate::prob::{rat_from_f64, Prob, Rat};
use crate::spectral3::{ComponentModel3, GFunction, JointPMF3, SpectralError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad generator spec: {0}")]
    BadSpec(String),
    #[error("no valid random instance found in {attempts} attempts")]
    GenerationExhausted { attempts: usize },
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Cf(#[from] CfError),
}

/// Components of the additive two-measurement model
/// `X1 = X* + e1`, `X2 = X* + e2` with `e1` independent of `(X*, e2)` and
/// `E[e2 | X*] = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoMeasSpec {
    /// Latent support with probabilities.
    pub latent: Vec<(f64, Prob)>,
    /// First error's support with probabilities.
    pub eps1: Vec<(f64, Prob)>,
    /// Second error's support with probabilities, one list per latent value
    /// (same order as `latent`).
    pub eps2_given: Vec<Vec<(f64, Prob)>>,
}

impl TwoMeasSpec {
    pub fn new(
        latent: Vec<(f64, Prob)>,
        eps1: Vec<(f64, Prob)>,
        eps2_given: Vec<Vec<(f64, Prob)>>,
    ) -> Result<Self, SynthError> {
        if latent.is_empty() || eps1.is_empty() || eps2_given.len() != latent.len() {
            return Err(SynthError::BadSpec(
                "empty component or latent/eps2 length mismatch".into(),
            ));
        }
        for (name, pmf) in [("latent", &latent), ("eps1", &eps1)] {
            validate_pmf(name, pmf)?;
        }
        for (j, pmf) in eps2_given.iter().enumerate() {
            validate_pmf(&format!("eps2 | latent {j}"), pmf)?;
            if !zero_mean(pmf) {
                return Err(SynthError::BadSpec(format!(
                    "eps2 given latent value {} does not have zero mean",
                    latent[j].0
                )));
            }
        }
        Ok(TwoMeasSpec {
            latent,
            eps1,
            eps2_given,
        })
    }

    /// The identified-distribution view consumed by group-mean assignment:
    /// the first error's pmf and the joint pmf of (latent, second error).
    pub fn components(&self) -> crate::assign::AdditiveComponents {
        let mut joint = Vec::new();
        for (j, (xs, pxs)) in self.latent.iter().enumerate() {
            for (v, pv) in &self.eps2_given[j] {
                joint.push((*xs, *v, pxs.mul(pv)));
            }
        }
        crate::assign::AdditiveComponents {
            eps1: self.eps1.clone(),
            joint_latent_eps2: joint,
        }
    }

    /// Enumerate the population: one record per combination of latent value,
    /// first error, and second error, with the product probability.
    pub fn generate(&self) -> TwoMeasOutput {
        let mut triples = Vec::new();
        for (j, (xs, pxs)) in self.latent.iter().enumerate() {
            for (e, pe) in &self.eps1 {
                for (v, pv) in &self.eps2_given[j] {
                    let p = Prob::product([pe, pxs, pv]);
                    let x = ObservedTuple::new(vec![xs + e, xs + v])
                        .expect("finite spec values");
                    triples.push((x, LatentValue::scalar(*xs), p));
                }
            }
        }
        let population = population_from_joint(triples).expect("valid by construction");
        let leaves = check_leaves(&population);
        TwoMeasOutput { population, leaves }
    }
}

/// Generator output; `leaves` warns when observed tuples collide, which is a
/// legitimate construction used by the failure-mode fixtures.
#[derive(Clone, Debug)]
pub struct TwoMeasOutput {
    pub population: LatentPopulation,
    pub leaves: LeavesReport,
}

fn validate_pmf(name: &str, pmf: &[(f64, Prob)]) -> Result<(), SynthError> {
    if pmf.iter().any(|(v, p)| !v.is_finite() || !p.is_positive()) {
        return Err(SynthError::BadSpec(format!(
            "{name}: values must be finite and probabilities positive"
        )));
    }
    let probs: Vec<Prob> = pmf.iter().map(|(_, p)| *p).collect();
    if !Prob::sums_to_one(&probs, 1e-12) {
        return Err(SynthError::BadSpec(format!("{name}: does not sum to 1")));
    }
    let mut values: Vec<f64> = pmf.iter().map(|(v, _)| *v).collect();
    values.sort_by(f64::total_cmp);
    if values.windows(2).any(|w| w[0] == w[1]) {
        return Err(SynthError::BadSpec(format!("{name}: repeated support value")));
    }
    Ok(())
}

/// Conditional mean of a pmf is zero: exactly when all entries have exact
/// rational forms, within 1e-12 otherwise.
fn zero_mean(pmf: &[(f64, Prob)]) -> bool {
    let exact: Option<Rat> = pmf.iter().try_fold(Rat::new(0, 1), |acc, (v, p)| {
        let rv = rat_from_f64(*v)?;
        let rp = p.rat()?;
        num_traits::CheckedMul::checked_mul(&rv, &rp)
            .and_then(|t| num_traits::CheckedAdd::checked_add(&acc, &t))
    });
    match exact {
        Some(total) => total == Rat::new(0, 1),
        None => {
            let mean: f64 = pmf.iter().map(|(v, p)| v * p.value()).sum();
            mean.abs() <= 1e-12
        }
    }
}

/// Discrete three-measurement model: support values plus the component
/// model in matrix form.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreeMeasSpec {
    pub support: Vec<f64>,
    pub support3: Vec<f64>,
    pub model: ComponentModel3,
}

/// Output of [`gen_three_meas`].
#[derive(Clone, Debug)]
pub struct ThreeMeasOutput {
    pub pmf: JointPMF3,
    pub population: LatentPopulation,
    pub leaves: LeavesReport,
}

/// Forward pmf and the enumerated population of all positive-probability
/// `(x1, x2, x3, x*)` combinations.
pub fn gen_three_meas(spec: &ThreeMeasSpec) -> Result<ThreeMeasOutput, SynthError> {
    let k = spec.model.k();
    let l = spec.model.l();
    if spec.support.len() != k || spec.support3.len() != l {
        return Err(SynthError::BadSpec(format!(
            "support sizes ({}, {}) do not match model ({k}, {l})",
            spec.support.len(),
            spec.support3.len()
        )));
    }
    let pmf = spec
        .model
        .forward_pmf(spec.support.clone(), spec.support3.clone())?;
    let mut triples = Vec::new();
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            for t in 0..l {
                for c in 0..k {
                    let p = spec.model.m1[(i, c)]
                        * spec.model.m2[(j, c)]
                        * spec.model.m3[(t, c)]
                        * spec.model.latent_probs[c];
                    if p > 0.0 {
                        total += p;
                        triples.push((
                            ObservedTuple::new(vec![
                                spec.support[i],
                                spec.support[j],
                                spec.support3[t],
                            ])?,
                            LatentValue::scalar(spec.support[c]),
                            p,
                        ));
                    }
                }
            }
        }
    }
    let triples = triples
        .into_iter()
        .map(|(x, s, p)| (x, s, Prob::from_f64(p / total)))
        .collect();
    let population = population_from_joint(triples)?;
    let leaves = check_leaves(&population);
    Ok(ThreeMeasOutput {
        pmf,
        population,
        leaves,
    })
}

/// Constraints for the random three-measurement sampler.
#[derive(Clone, Copy, Debug)]
pub struct RandomConstraints {
    /// Lower bound on the smallest singular value of the `(X1, X2)` matrix.
    pub min_singular: f64,
    /// Lower bound on the eigenvalue gap under the identity g.
    pub min_eigen_sep: f64,
    /// Floor on latent class probabilities.
    pub min_latent: f64,
    /// Required strict-mode margin of the first measurement's columns.
    pub mode_margin: f64,
    /// Weight pulled toward the diagonal when sampling measurement columns.
    pub mode_blend: f64,
    /// Partition the third measurement's support across classes so the
    /// enumerated population has pairwise-distinct observed tuples.
    pub leaves_partition: bool,
    pub max_attempts: usize,
}

impl Default for RandomConstraints {
    fn default() -> Self {
        RandomConstraints {
            min_singular: 1e-3,
            min_eigen_sep: 1e-3,
            min_latent: 0.05,
            mode_margin: 0.02,
            mode_blend: 0.5,
            leaves_partition: false,
            max_attempts: 5_000,
        }
    }
}

/// Uniform point on the probability simplex via exponential spacings.
fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..n)
        .map(|_| -(rng.gen_range(f64::EPSILON..1.0f64)).ln())
        .collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}

/// Rejection-sample a valid random three-measurement model. Deterministic
/// given the seed; support values are `0..K` and `1..=L`.
pub fn random_three_meas(
    seed: u64,
    k: usize,
    l: usize,
    constraints: &RandomConstraints,
) -> Result<ThreeMeasSpec, SynthError> {
    if k < 2 || l < k {
        return Err(SynthError::BadSpec(format!(
            "need K >= 2 and L >= K, got K = {k}, L = {l}"
        )));
    }
    let support: Vec<f64> = (0..k).map(|i| i as f64).collect();
    let support3: Vec<f64> = (1..=l).map(|i| i as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..constraints.max_attempts {
        // Latent marginal with a floor keeping classes well away from zero.
        let raw = simplex(&mut rng, k);
        let latent: Vec<f64> = raw
            .iter()
            .map(|d| constraints.min_latent + (1.0 - k as f64 * constraints.min_latent) * d)
            .collect();

        let measurement = |rng: &mut ChaCha8Rng| -> DMatrix<f64> {
            let mut m = DMatrix::<f64>::zeros(k, k);
            for col in 0..k {
                let dir = simplex(rng, k);
                for row in 0..k {
                    let e = if row == col { 1.0 } else { 0.0 };
                    m[(row, col)] =
                        constraints.mode_blend * e + (1.0 - constraints.mode_blend) * dir[row];
                }
            }
            m
        };
        let m1 = measurement(&mut rng);
        let m2 = measurement(&mut rng);

        let mut m3 = DMatrix::<f64>::zeros(l, k);
        if constraints.leaves_partition {
            // Owner classes partition the third support; every observed
            // (x1, x2, x3) then determines its class uniquely.
            for col in 0..k {
                let rows: Vec<usize> = (0..l).filter(|t| t % k == col).collect();
                let dir = simplex(&mut rng, rows.len());
                for (d, row) in dir.into_iter().zip(rows) {
                    m3[(row, col)] = d;
                }
            }
        } else {
            for col in 0..k {
                let dir = simplex(&mut rng, l);
                for row in 0..l {
                    m3[(row, col)] = dir[row];
                }
            }
        }

        // Strict-mode margin with room to spare.
        let margin_ok = (0..k).all(|col| {
            let diag = m1[(col, col)];
            (0..k)
                .filter(|&row| row != col)
                .all(|row| diag - m1[(row, col)] > constraints.mode_margin)
        });
        if !margin_ok {
            continue;
        }

        let model = match ComponentModel3::new(
            DVector::from_vec(latent.clone()),
            m1.clone(),
            m2.clone(),
            m3,
        ) {
            Ok(m) => m,
            Err(_) => continue,
        };

        let m_joint = &m1 * DMatrix::from_diagonal(&DVector::from_vec(latent)) * m2.transpose();
        if crate::linalg::smallest_singular_value(&m_joint) < constraints.min_singular {
            continue;
        }

        // Identity-g class means must separate.
        let mut lambdas: Vec<f64> = (0..k)
            .map(|c| (0..l).map(|t| support3[t] * model.m3[(t, c)]).sum())
            .collect();
        lambdas.sort_by(f64::total_cmp);
        let gap = lambdas
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        if gap < constraints.min_eigen_sep {
            continue;
        }

        return Ok(ThreeMeasSpec {
            support,
            support3,
            model,
        });
    }
    Err(SynthError::GenerationExhausted {
        attempts: constraints.max_attempts,
    })
}

/// Random additive two-measurement model on small discrete supports.
/// All supports stay within `[-2, 2]` so characteristic-function grids with
/// modest extent remain nonvanishing. Deterministic given the seed.
pub fn random_two_meas(seed: u64) -> TwoMeasSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent_vals = pick_values(&mut rng, 2, -1.5, 1.5);
    let latent_probs = simplex(&mut rng, latent_vals.len());
    let latent: Vec<(f64, Prob)> = latent_vals
        .iter()
        .zip(&latent_probs)
        .map(|(v, p)| (*v, Prob::from_f64(*p)))
        .collect();

    let eps1_vals = pick_values(&mut rng, 2, -2.0, 2.0);
    let eps1_probs = simplex(&mut rng, eps1_vals.len());
    let eps1: Vec<(f64, Prob)> = eps1_vals
        .iter()
        .zip(&eps1_probs)
        .map(|(v, p)| (*v, Prob::from_f64(*p)))
        .collect();

    // Two-point zero-mean conditionals: support {-a, b} with weights
    // (b, a) / (a + b).
    let eps2_given: Vec<Vec<(f64, Prob)>> = (0..latent.len())
        .map(|_| {
            let a = rng.gen_range(0.25..1.5);
            let b = rng.gen_range(0.25..1.5);
            vec![
                (-a, Prob::from_f64(b / (a + b))),
                (b, Prob::from_f64(a / (a + b))),
            ]
        })
        .collect();

    TwoMeasSpec::new(latent, eps1, eps2_given).expect("constructed to satisfy the invariants")
}

/// Distinct values separated by at least 0.2, sorted.
fn pick_values(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut vals: Vec<f64> = Vec::new();
    while vals.len() < n {
        let v = rng.gen_range(lo..hi);
        if vals.iter().all(|u| (u - v).abs() > 0.2) {
            vals.push(v);
        }
    }
    vals.sort_by(f64::total_cmp);
    vals
}

/// Lattice discretization of the Gaussian additive model, for the smooth
/// deconvolution oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianSpec {
    pub sigma_latent: f64,
    pub sigma_eps1: f64,
    pub sigma_eps2: f64,
    /// Lattice step shared by all three variables.
    pub step: f64,
    /// Truncation half-width in multiples of each variable's sigma.
    pub half_width: f64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        GaussianSpec {
            sigma_latent: 1.0,
            sigma_eps1: 0.5,
            sigma_eps2: 0.5,
            step: 0.05,
            half_width: 5.0,
        }
    }
}

/// Discretize the three Gaussians on a common lattice and convolve them into
/// a weighted sample of `(x1, x2)`. Weights below 1e-16 are pruned and the
/// rest renormalized; all coordinates are integer multiples of the step, so
/// duplicate collapse is exact.
pub fn gen_gaussian_sample(spec: &GaussianSpec) -> Result<Sample2, SynthError> {
    if spec.step <= 0.0 || spec.half_width <= 0.0 {
        return Err(SynthError::BadSpec("step and half_width must be positive".into()));
    }
    for s in [spec.sigma_latent, spec.sigma_eps1, spec.sigma_eps2] {
        if !(s > 0.0) {
            return Err(SynthError::BadSpec("sigmas must be positive".into()));
        }
    }
    let lattice = |sigma: f64| -> (i64, Vec<f64>) {
        let n = (spec.half_width * sigma / spec.step).floor() as i64;
        let mut w: Vec<f64> = (-n..=n)
            .map(|k| {
                let x = k as f64 * spec.step;
                (-x * x / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = w.iter().sum();
        for e in &mut w {
            *e /= total;
        }
        (n, w)
    };
    let (nx, wx) = lattice(spec.sigma_latent);
    let (ne, we) = lattice(spec.sigma_eps1);
    let (nv, wv) = lattice(spec.sigma_eps2);

    let mut joint: HashMap<(i64, i64), f64> = HashMap::new();
    for (ix, px) in (-nx..=nx).zip(&wx) {
        for (ie, pe) in (-ne..=ne).zip(&we) {
            let w1 = px * pe;
            if w1 < 1e-18 {
                continue;
            }
            for (iv, pv) in (-nv..=nv).zip(&wv) {
                let w = w1 * pv;
                if w < 1e-18 {
                    continue;
                }
                *joint.entry((ix + ie, ix + iv)).or_insert(0.0) += w;
            }
        }
    }
    let mut cells: Vec<((i64, i64), f64)> =
        joint.into_iter().filter(|(_, w)| *w >= 1e-16).collect();
    cells.sort_by_key(|(k, _)| *k);
    let total: f64 = cells.iter().map(|(_, w)| w).sum();
    let points: Vec<(f64, f64)> = cells
        .iter()
        .map(|((i, j), _)| (*i as f64 * spec.step, *j as f64 * spec.step))
        .collect();
    let weights: Vec<f64> = cells.iter().map(|(_, w)| w / total).collect();
    Ok(Sample2::new(points, weights)?)
}

/// The worked-example fixtures shipped with the command-line tool.
pub mod presets {
    use super::*;

    /// Additive model with uniform components: latent in {0, 1}, first error
    /// in {-1, 2}, second error in {-1, 0, 1}. Twelve equally likely
    /// records; the first measurement alone separates the groups.
    pub fn two_meas_uniform() -> TwoMeasSpec {
        let third = || {
            vec![
                (-1.0, Prob::exact(1, 3)),
                (0.0, Prob::exact(1, 3)),
                (1.0, Prob::exact(1, 3)),
            ]
        };
        TwoMeasSpec::new(
            vec![(0.0, Prob::exact(1, 2)), (1.0, Prob::exact(1, 2))],
            vec![(-1.0, Prob::exact(1, 2)), (2.0, Prob::exact(1, 2))],
            vec![third(), third()],
        )
        .expect("valid fixture")
    }

    /// Additive model in which the first measurement no longer separates
    /// the groups: latent in {0, 1}, first error in {-1, 0}, second error in
    /// {-1.5, 0.5, 1}. Records 0..3 and 9..12 of the canonical order share
    /// `x1 = 0` yet carry different latent values.
    pub fn two_meas_overlap() -> TwoMeasSpec {
        let third = || {
            vec![
                (-1.5, Prob::exact(1, 3)),
                (0.5, Prob::exact(1, 3)),
                (1.0, Prob::exact(1, 3)),
            ]
        };
        TwoMeasSpec::new(
            vec![(0.0, Prob::exact(1, 2)), (1.0, Prob::exact(1, 2))],
            vec![(-1.0, Prob::exact(1, 2)), (0.0, Prob::exact(1, 2))],
            vec![third(), third()],
        )
        .expect("valid fixture")
    }

    /// Binary misclassified measurements with a partitioned third
    /// measurement: class 0 emits X3 in {1, 4}, class 1 emits X3 in {2, 3},
    /// so the enumerated 16-record population has distinct observations.
    pub fn three_meas_partition() -> ThreeMeasSpec {
        ThreeMeasSpec {
            support: vec![0.0, 1.0],
            support3: vec![1.0, 2.0, 3.0, 4.0],
            model: ComponentModel3::new(
                DVector::from_vec(vec![0.5, 0.5]),
                DMatrix::from_row_slice(2, 2, &[0.8, 0.3, 0.2, 0.7]),
                DMatrix::from_row_slice(2, 2, &[0.9, 0.4, 0.1, 0.6]),
                DMatrix::from_row_slice(4, 2, &[0.5, 0.0, 0.0, 0.5, 0.0, 0.5, 0.5, 0.0]),
            )
            .expect("valid fixture"),
        }
    }

    /// Same misclassification structure, but both classes emit X3 = 4: the
    /// enumerated 20-record population repeats four observed tuples.
    pub fn three_meas_collision() -> ThreeMeasSpec {
        ThreeMeasSpec {
            support: vec![0.0, 1.0],
            support3: vec![1.0, 2.0, 3.0, 4.0],
            model: ComponentModel3::new(
                DVector::from_vec(vec![0.5, 0.5]),
                DMatrix::from_row_slice(2, 2, &[0.8, 0.3, 0.2, 0.7]),
                DMatrix::from_row_slice(2, 2, &[0.9, 0.4, 0.1, 0.6]),
                DMatrix::from_row_slice(4, 2, &[0.5, 0.0, 0.0, 0.25, 0.0, 0.25, 0.5, 0.5]),
            )
            .expect("valid fixture"),
        }
    }

    /// The collision fixture's population in its source listing order
    /// (blocks by third-measurement value, class-0 block before class-1 for
    /// the shared value), rather than canonical sort order. Rows 12..=15
    /// collide with rows 16..=19.
    pub fn three_meas_collision_population_listed() -> LatentPopulation {
        let spec = three_meas_collision();
        let m = &spec.model;
        let mut records = Vec::new();
        // (x3 index, class) blocks in listing order.
        let blocks = [(0usize, 0usize), (1, 1), (2, 1), (3, 0), (3, 1)];
        for &(t, c) in &blocks {
            for &(i, j) in &[(0usize, 0usize), (1, 0), (0, 1), (1, 1)] {
                let p = m.m1[(i, c)] * m.m2[(j, c)] * m.m3[(t, c)] * m.latent_probs[c];
                records.push(crate::population::Record {
                    x: ObservedTuple::new(vec![
                        spec.support[i],
                        spec.support[j],
                        spec.support3[t],
                    ])
                    .unwrap(),
                    x_star: Some(LatentValue::scalar(spec.support[c])),
                    p: Prob::from_f64(p),
                });
            }
        }
        LatentPopulation::from_records(records).expect("valid fixture")
    }

    /// Indicator of the middle third-measurement values {2, 3}; separates
    /// the partition fixture's classes with means exactly 0 and 1.
    pub fn partition_separating_g() -> GFunction {
        GFunction::new(vec![0.0, 1.0, 1.0, 0.0]).expect("finite")
    }

    /// Default Gaussian lattice oracle.
    pub fn gaussian_smooth() -> GaussianSpec {
        GaussianSpec::default()
    }
}
