//! Additive two-measurement deconvolution.
//!
//! For `X1 = X* + e1`, `X2 = X* + e2` with `e1` independent of `(X*, e2)`,
//! `E[e2 | X*] = 0`, and a nonvanishing characteristic function of `X1`, the
//! latent characteristic function is
//!
//! ```text
//! phi*(t) = exp( integral_0^t  i E[X2 e^{i s X1}] / E[e^{i s X1}]  ds )
//! ```
//!
//! evaluated here by cumulative trapezoid quadrature outward from zero on a
//! symmetric grid. The log-derivative ratio is integrated directly — never
//! through a complex logarithm of the CF — so no phase unwrapping is needed.
//! The joint CF of `(X1, X2, X*)` follows from the factorization
//! `phi_{X1,X2,X*}(s,t,v) = phi_{X*,X2}(s+v, t) phi_{X1}(s) / phi*(s)` with
//! `phi_{X*,X2}(u,t) = phi_{X1,X2}(u,t) phi*(u) / phi_{X1}(u)`.
//!
//! Everything is population-level and exact up to quadrature: no smoothing,
//! no bandwidth choices. Inversion back to a density is a plain truncated
//! Fourier integral and reports its truncation window.

use num_complex::Complex64;
use thiserror::Error;

use crate::exec;
use crate::population::LatentPopulation;

#[derive(Debug, Error)]
pub enum CfError {
    #[error("empty sample")]
    EmptySample,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid characteristic function: {0}")]
    InvalidCf(String),
    #[error("characteristic function of X1 vanishes on the grid: min |phi| = {min_abs:.3e} < {tol:.3e}")]
    VanishingCf { min_abs: f64, tol: f64 },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
}

/// Default vanishing threshold for `|phi_{X1}|`; below it the identification
/// condition is treated as failed rather than regularized away.
pub const DEFAULT_VANISH_TOL: f64 = 1e-6;

/// Symmetric frequency grid: `n_points` odd so zero is a node, endpoints at
/// exactly `±t_max`, and node `k` paired with node `n-1-k` at exactly the
/// negated frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    t_max: f64,
    n_points: usize,
}

impl GridSpec {
    pub fn new(t_max: f64, n_points: usize) -> Result<Self, CfError> {
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(CfError::InvalidGrid(format!("t_max = {t_max}")));
        }
        if n_points < 3 || n_points % 2 == 0 {
            return Err(CfError::InvalidGrid(format!(
                "n_points = {n_points}, need an odd count of at least 3"
            )));
        }
        Ok(GridSpec { t_max, n_points })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mid(&self) -> usize {
        (self.n_points - 1) / 2
    }

    /// Frequency of node `k`; `node(mid) == 0` and `node(n-1-k) == -node(k)`
    /// exactly.
    pub fn node(&self, k: usize) -> f64 {
        let mid = self.mid() as f64;
        self.t_max * ((k as f64 - mid) / mid)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|k| self.node(k))
    }

    fn covers(&self, freq: f64) -> bool {
        freq.abs() <= self.t_max * (1.0 + 1e-12)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            t_max: 16.0,
            n_points: 2049,
        }
    }
}

/// One-dimensional characteristic function on a symmetric grid.
#[derive(Clone, Debug)]
pub struct CharFnGrid {
    spec: GridSpec,
    values: Vec<Complex64>,
}

impl CharFnGrid {
    pub fn new(spec: GridSpec, values: Vec<Complex64>) -> Result<Self, CfError> {
        if values.len() != spec.len() {
            return Err(CfError::InvalidCf(format!(
                "{} values on a {}-node grid",
                values.len(),
                spec.len()
            )));
        }
        let at_zero = values[spec.mid()];
        if (at_zero - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(CfError::InvalidCf(format!(
                "value at zero frequency is {at_zero}, not 1"
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.norm() <= 1.0 + 1e-8)) {
            return Err(CfError::InvalidCf(format!(
                "modulus {} exceeds 1",
                v.norm()
            )));
        }
        Ok(CharFnGrid { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Linear interpolation at an arbitrary in-range frequency; exact at
    /// nodes.
    pub fn interp(&self, freq: f64) -> Result<Complex64, CfError> {
        interp_1d(&self.spec, &self.values, freq)
    }
}

fn interp_1d(spec: &GridSpec, values: &[Complex64], freq: f64) -> Result<Complex64, CfError> {
    if !spec.covers(freq) {
        return Err(CfError::GridTooCoarse(format!(
            "frequency {freq} outside the grid extent {}",
            spec.t_max()
        )));
    }
    let du = spec.t_max() / spec.mid() as f64;
    let pos = (freq + spec.t_max()) / du;
    let i0 = (pos.floor() as usize).min(spec.len() - 2);
    let frac = (pos - i0 as f64).clamp(0.0, 1.0);
    let a = values[i0];
    let b = values[i0 + 1];
    Ok(a + (b - a) * frac)
}

/// Two-dimensional characteristic function on a pair of symmetric grids,
/// row-major over (s, t).
#[derive(Clone, Debug)]
pub struct CharFnGrid2 {
    s: GridSpec,
    t: GridSpec,
    values: Vec<Complex64>,
}

impl CharFnGrid2 {
    pub fn new(s: GridSpec, t: GridSpec, values: Vec<Complex64>) -> Result<Self, CfError> {
        if values.len() != s.len() * t.len() {
            return Err(CfError::InvalidCf("grid/value size mismatch".into()));
        }
        let at_zero = values[s.mid() * t.len() + t.mid()];
        if (at_zero - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(CfError::InvalidCf(format!(
                "value at zero frequency is {at_zero}, not 1"
            )));
        }
        Ok(CharFnGrid2 { s, t, values })
    }

    pub fn s_spec(&self) -> &GridSpec {
        &self.s
    }

    pub fn t_spec(&self) -> &GridSpec {
        &self.t
    }

    pub fn value(&self, a: usize, b: usize) -> Complex64 {
        self.values[a * self.t.len() + b]
    }

    /// The marginal CF of the first coordinate: the `t = 0` column.
    pub fn first_marginal(&self) -> CharFnGrid {
        let mid = self.t.mid();
        let values: Vec<Complex64> = (0..self.s.len()).map(|a| self.value(a, mid)).collect();
        CharFnGrid::new(self.s, values).expect("marginal of a valid joint CF")
    }
}

/// Three-dimensional characteristic function, row-major over (s, t, v).
#[derive(Clone, Debug)]
pub struct CharFnGrid3 {
    s: GridSpec,
    t: GridSpec,
    v: GridSpec,
    values: Vec<Complex64>,
}

impl CharFnGrid3 {
    fn new(s: GridSpec, t: GridSpec, v: GridSpec, values: Vec<Complex64>) -> Result<Self, CfError> {
        let at_zero = values[(s.mid() * t.len() + t.mid()) * v.len() + v.mid()];
        if (at_zero - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(CfError::InvalidCf(format!(
                "value at zero frequency is {at_zero}, not 1"
            )));
        }
        Ok(CharFnGrid3 { s, t, v, values })
    }

    pub fn s_spec(&self) -> &GridSpec {
        &self.s
    }

    pub fn t_spec(&self) -> &GridSpec {
        &self.t
    }

    pub fn v_spec(&self) -> &GridSpec {
        &self.v
    }

    pub fn value(&self, a: usize, b: usize, c: usize) -> Complex64 {
        self.values[(a * self.t.len() + b) * self.v.len() + c]
    }
}

/// Weighted sample of `(x1, x2)` pairs: the population carrier for the
/// additive model.
#[derive(Clone, Debug)]
pub struct Sample2 {
    points: Vec<(f64, f64)>,
    weights: Vec<f64>,
}

impl Sample2 {
    pub fn new(points: Vec<(f64, f64)>, weights: Vec<f64>) -> Result<Self, CfError> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(CfError::EmptySample);
        }
        if points.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(CfError::InvalidCf("non-finite sample point".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(CfError::InvalidCf("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(CfError::InvalidCf(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Sample2 { points, weights })
    }

    /// Project a two-column population to its observed sample.
    pub fn from_population(pop: &LatentPopulation) -> Result<Self, CfError> {
        let mut points = Vec::with_capacity(pop.len());
        let mut weights = Vec::with_capacity(pop.len());
        for r in pop.records() {
            let v = r.x.values();
            if v.len() != 2 {
                return Err(CfError::InvalidCf(format!(
                    "expected 2-column tuples, found {}",
                    v.len()
                )));
            }
            points.push((v[0], v[1]));
            weights.push(r.p.value());
        }
        Sample2::new(points, weights)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Which coordinate of a [`Sample2`] to transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
}

/// Weighted empirical characteristic function of one coordinate:
/// `phi(t_k) = sum_j w_j exp(i t_k x_j)`, exact to floating point.
///
/// Parallel across grid nodes; the inner sum always runs in sample order, so
/// the result does not depend on the thread count.
pub fn empirical_cf(sample: &Sample2, axis: Axis, grid: &GridSpec) -> Result<CharFnGrid, CfError> {
    let xs: Vec<f64> = match axis {
        Axis::X1 => sample.points.iter().map(|p| p.0).collect(),
        Axis::X2 => sample.points.iter().map(|p| p.1).collect(),
    };
    let w = &sample.weights;
    let values = exec::map_indexed(grid.len(), |k| {
        let t = grid.node(k);
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, wj) in xs.iter().zip(w) {
            acc += Complex64::cis(t * x) * *wj;
        }
        acc
    });
    CharFnGrid::new(*grid, values)
}

/// Bivariate empirical characteristic function on the (s, t) grid pair.
pub fn empirical_cf2(
    sample: &Sample2,
    s_grid: &GridSpec,
    t_grid: &GridSpec,
) -> Result<CharFnGrid2, CfError> {
    let pts = &sample.points;
    let w = &sample.weights;
    let nt = t_grid.len();
    let values = exec::map_indexed(s_grid.len() * nt, |idx| {
        let s = s_grid.node(idx / nt);
        let t = t_grid.node(idx % nt);
        let mut acc = Complex64::new(0.0, 0.0);
        for ((x1, x2), wj) in pts.iter().zip(w) {
            acc += Complex64::cis(s * x1 + t * x2) * *wj;
        }
        acc
    });
    CharFnGrid2::new(*s_grid, *t_grid, values)
}

/// The cross moment `E[X2 e^{i s X1}]` on the s grid, by direct summation.
pub fn cross_moment(sample: &Sample2, s_grid: &GridSpec) -> Result<Vec<Complex64>, CfError> {
    if sample.is_empty() {
        return Err(CfError::EmptySample);
    }
    let pts = &sample.points;
    let w = &sample.weights;
    Ok(exec::map_indexed(s_grid.len(), |k| {
        let s = s_grid.node(k);
        let mut acc = Complex64::new(0.0, 0.0);
        for ((x1, x2), wj) in pts.iter().zip(w) {
            acc += Complex64::cis(s * x1) * (*wj * *x2);
        }
        acc
    }))
}

/// Recover the latent CF from the joint CF of `(X1, X2)` and the cross
/// moment `E[X2 e^{i s X1}]` evaluated on the same s grid.
///
/// The marginal CF of `X1` is read off the `t = 0` column; see
/// [`kotlarski_cf_from_parts`] for the quadrature itself.
pub fn kotlarski_cf(
    cf_joint: &CharFnGrid2,
    cross_moment: &[Complex64],
    vanish_tol: f64,
) -> Result<CharFnGrid, CfError> {
    let phi_x1 = cf_joint.first_marginal();
    kotlarski_cf_from_parts(&phi_x1, cross_moment, vanish_tol)
}

/// Core of the latent-CF recovery: cumulative trapezoid integration of the
/// log-derivative ratio outward from zero, then exponentiation. The value at
/// zero frequency is exactly one.
pub fn kotlarski_cf_from_parts(
    phi_x1: &CharFnGrid,
    cross_moment: &[Complex64],
    vanish_tol: f64,
) -> Result<CharFnGrid, CfError> {
    let spec = *phi_x1.spec();
    let n = spec.len();
    if cross_moment.len() != n {
        return Err(CfError::InvalidGrid(format!(
            "cross moment has {} values on a {}-node grid",
            cross_moment.len(),
            n
        )));
    }
    let min_abs = phi_x1
        .values()
        .iter()
        .map(|v| v.norm())
        .fold(f64::INFINITY, f64::min);
    if min_abs <= vanish_tol {
        return Err(CfError::VanishingCf {
            min_abs,
            tol: vanish_tol,
        });
    }

    let i = Complex64::new(0.0, 1.0);
    let integrand: Vec<Complex64> = phi_x1
        .values()
        .iter()
        .zip(cross_moment)
        .map(|(phi, cm)| i * cm / phi)
        .collect();

    // A half-turn or more of the integrand's phase between adjacent nodes
    // means the quadrature cannot track it; near-zero magnitudes are skipped
    // because a sign change through zero is a legitimate crossing.
    let max_mag = integrand.iter().map(|h| h.norm()).fold(0.0f64, f64::max);
    let floor = 1e-9 * max_mag;
    for k in 0..n - 1 {
        let (a, b) = (integrand[k], integrand[k + 1]);
        if a.norm() <= floor || b.norm() <= floor {
            continue;
        }
        let step = (b * a.conj()).arg().abs();
        if step > std::f64::consts::FRAC_PI_2 {
            return Err(CfError::GridTooCoarse(format!(
                "integrand rotates {step:.3} rad between s = {:.6} and s = {:.6}; increase n_points",
                spec.node(k),
                spec.node(k + 1)
            )));
        }
    }

    // Cumulative trapezoid outward from the center node.
    let mid = spec.mid();
    let mut exponent = vec![Complex64::new(0.0, 0.0); n];
    for k in mid..n - 1 {
        let dt = spec.node(k + 1) - spec.node(k);
        exponent[k + 1] = exponent[k] + (integrand[k] + integrand[k + 1]) * (0.5 * dt);
    }
    for k in (0..mid).rev() {
        let dt = spec.node(k + 1) - spec.node(k);
        exponent[k] = exponent[k + 1] - (integrand[k] + integrand[k + 1]) * (0.5 * dt);
    }
    let mut values: Vec<Complex64> = exponent.into_iter().map(|e| e.exp()).collect();
    values[mid] = Complex64::new(1.0, 0.0);
    CharFnGrid::new(spec, values)
}

/// Real grid for density output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XGridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl XGridSpec {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self, CfError> {
        if !x_min.is_finite() || !x_max.is_finite() || x_min >= x_max || n_points < 2 {
            return Err(CfError::InvalidGrid(format!(
                "x grid [{x_min}, {x_max}] with {n_points} points"
            )));
        }
        Ok(XGridSpec {
            x_min,
            x_max,
            n_points,
        })
    }
}

/// Density values on a real grid, together with the frequency window the
/// inversion was truncated to (the bias source at coarse windows).
#[derive(Clone, Debug)]
pub struct DensityGrid {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub window: (f64, f64),
}

impl DensityGrid {
    /// Trapezoid integral over the x grid.
    pub fn integral(&self) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.xs.len() - 1 {
            acc += 0.5 * (self.values[k] + self.values[k + 1]) * (self.xs[k + 1] - self.xs[k]);
        }
        acc
    }
}

/// Fourier inversion `f(x) = (1/2 pi) integral e^{-i x t} phi(t) dt`,
/// trapezoid over the truncated grid, real part taken.
pub fn invert_cf(cf: &CharFnGrid, xgrid: &XGridSpec) -> DensityGrid {
    let spec = cf.spec();
    let n = spec.len();
    let dt = spec.t_max() / spec.mid() as f64;
    let xs: Vec<f64> = (0..xgrid.n_points)
        .map(|j| {
            xgrid.x_min + (xgrid.x_max - xgrid.x_min) * j as f64 / (xgrid.n_points - 1) as f64
        })
        .collect();
    let values = exec::map_indexed(xs.len(), |j| {
        let x = xs[j];
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, phi) in cf.values().iter().enumerate() {
            let weight = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            acc += Complex64::cis(-x * spec.node(k)) * *phi * weight;
        }
        acc.re * dt / (2.0 * std::f64::consts::PI)
    });
    DensityGrid {
        xs,
        values,
        window: (-spec.t_max(), spec.t_max()),
    }
}

/// Reconstruct the joint CF of `(X1, X2, X*)` on the requested output axes.
///
/// The latent CF must live on the same grid as the joint CF's first axis.
/// Output frequencies must satisfy `|s| + |v| <= s_max` of the input so the
/// shifted lookups stay on the grid; lookups are bilinear and exact at
/// nodes. Ratios are only formed where the denominators clear `vanish_tol`.
pub fn joint_cf_with_latent(
    cf_joint: &CharFnGrid2,
    cf_latent: &CharFnGrid,
    out_s: &GridSpec,
    out_t: &GridSpec,
    out_v: &GridSpec,
    vanish_tol: f64,
) -> Result<CharFnGrid3, CfError> {
    if cf_latent.spec() != cf_joint.s_spec() {
        return Err(CfError::InvalidGrid(
            "latent CF must share the joint CF's first-axis grid".into(),
        ));
    }
    let in_s = cf_joint.s_spec();
    let in_t = cf_joint.t_spec();
    if out_s.t_max() + out_v.t_max() > in_s.t_max() * (1.0 + 1e-12) {
        return Err(CfError::GridTooCoarse(format!(
            "output s and v extents sum to {}, beyond the input extent {}",
            out_s.t_max() + out_v.t_max(),
            in_s.t_max()
        )));
    }
    if out_t.t_max() > in_t.t_max() * (1.0 + 1e-12) {
        return Err(CfError::GridTooCoarse(
            "output t extent beyond the input grid".into(),
        ));
    }

    // Table of phi_{X*,X2}(u, t) = phi_{X1,X2}(u, t) phi*(u) / phi_{X1}(u)
    // on the input grid; columns where |phi_{X1}| dips below the threshold
    // are poisoned and only fail if actually looked up.
    let phi_x1 = cf_joint.first_marginal();
    let ns = in_s.len();
    let nt = in_t.len();
    let mut table = vec![Complex64::new(f64::NAN, f64::NAN); ns * nt];
    for a in 0..ns {
        let denom = phi_x1.values()[a];
        if denom.norm() <= vanish_tol {
            continue;
        }
        let ratio = cf_latent.values()[a] / denom;
        for b in 0..nt {
            table[a * nt + b] = cf_joint.value(a, b) * ratio;
        }
    }
    let lookup = |u: f64, t: f64| -> Result<Complex64, CfError> {
        let du = in_s.t_max() / in_s.mid() as f64;
        let dv = in_t.t_max() / in_t.mid() as f64;
        let pu = (u + in_s.t_max()) / du;
        let pt = (t + in_t.t_max()) / dv;
        let a0 = (pu.floor() as usize).min(ns - 2);
        let b0 = (pt.floor() as usize).min(nt - 2);
        let fu = (pu - a0 as f64).clamp(0.0, 1.0);
        let ft = (pt - b0 as f64).clamp(0.0, 1.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for (da, wa) in [(0usize, 1.0 - fu), (1, fu)] {
            for (db, wb) in [(0usize, 1.0 - ft), (1, ft)] {
                let w = wa * wb;
                if w == 0.0 {
                    continue;
                }
                let cell = table[(a0 + da) * nt + (b0 + db)];
                if cell.re.is_nan() {
                    return Err(CfError::VanishingCf {
                        min_abs: 0.0,
                        tol: vanish_tol,
                    });
                }
                acc += cell * w;
            }
        }
        Ok(acc)
    };

    let (nso, nto, nvo) = (out_s.len(), out_t.len(), out_v.len());
    let results = exec::map_indexed(nso * nto * nvo, |idx| {
        let a = idx / (nto * nvo);
        let b = (idx / nvo) % nto;
        let c = idx % nvo;
        let s = out_s.node(a);
        let t = out_t.node(b);
        let v = out_v.node(c);
        let latent_at_s = interp_1d(in_s, cf_latent.values(), s)?;
        if latent_at_s.norm() <= vanish_tol {
            return Err(CfError::VanishingCf {
                min_abs: latent_at_s.norm(),
                tol: vanish_tol,
            });
        }
        let x1_at_s = interp_1d(in_s, phi_x1.values(), s)?;
        Ok(lookup(s + v, t)? * x1_at_s / latent_at_s)
    });
    let mut values = Vec::with_capacity(results.len());
    for r in results {
        values.push(r?);
    }
    CharFnGrid3::new(*out_s, *out_t, *out_v, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::Prob;
    use crate::synth::{self, presets};
    use approx::assert_relative_eq;

    fn uniform_sample() -> Sample2 {
        Sample2::from_population(&presets::two_meas_uniform().generate().population).unwrap()
    }

    /// Analytic latent CF of the uniform fixture: (1 + e^{it}) / 2.
    fn uniform_latent_cf(t: f64) -> Complex64 {
        (Complex64::new(1.0, 0.0) + Complex64::cis(t)) * 0.5
    }

    #[test]
    fn grid_nodes_are_exactly_symmetric() {
        let g = GridSpec::new(7.3, 257).unwrap();
        assert_eq!(g.node(g.mid()), 0.0);
        assert_eq!(g.node(0), -7.3);
        assert_eq!(g.node(256), 7.3);
        for k in 0..g.mid() {
            assert_eq!(g.node(k).to_bits(), (-g.node(g.len() - 1 - k)).to_bits());
        }
        assert!(GridSpec::new(1.0, 4).is_err());
        assert!(GridSpec::new(0.0, 5).is_err());
    }

    #[test]
    fn point_mass_at_zero_has_unit_cf() {
        let s = Sample2::new(vec![(0.0, 3.0)], vec![1.0]).unwrap();
        let cf = empirical_cf(&s, Axis::X1, &GridSpec::new(5.0, 101).unwrap()).unwrap();
        for v in cf.values() {
            assert_relative_eq!(v.re, 1.0, epsilon = 1e-14);
            assert_relative_eq!(v.im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn symmetric_two_point_mass_is_cosine() {
        let s = Sample2::new(vec![(1.0, 0.0), (-1.0, 0.0)], vec![0.5, 0.5]).unwrap();
        let grid = GridSpec::new(std::f64::consts::PI, 129).unwrap();
        let cf = empirical_cf(&s, Axis::X1, &grid).unwrap();
        for (k, v) in cf.values().iter().enumerate() {
            assert_relative_eq!(v.re, grid.node(k).cos(), epsilon = 1e-12);
            assert!(v.im.abs() < 1e-12);
        }
        // phi(pi) = -1 exactly on this grid.
        assert_relative_eq!(cf.values()[128].re, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn empirical_cf_matches_direct_sum() {
        let sample = uniform_sample();
        let grid = GridSpec::new(2.0, 129).unwrap();
        let cf = empirical_cf(&sample, Axis::X1, &grid).unwrap();
        // Independent oracle at t = 1: direct summation over the 12 records.
        let t = 1.0;
        let mut want = Complex64::new(0.0, 0.0);
        for ((x1, _), w) in sample.points().iter().zip(sample.weights()) {
            want += Complex64::new((t * x1).cos(), (t * x1).sin()) * *w;
        }
        let k = grid
            .nodes()
            .position(|x| (x - 1.0).abs() < 1e-12)
            .expect("t = 1 on grid");
        assert_relative_eq!(cf.values()[k].re, want.re, epsilon = 1e-13);
        assert_relative_eq!(cf.values()[k].im, want.im, epsilon = 1e-13);
    }

    #[test]
    fn hermitian_symmetry_and_modulus_bound() {
        for seed in 0..10u64 {
            let spec = synth::random_two_meas(seed);
            let sample = Sample2::from_population(&spec.generate().population).unwrap();
            let grid = GridSpec::new(3.0, 257).unwrap();
            for axis in [Axis::X1, Axis::X2] {
                let cf = empirical_cf(&sample, axis, &grid).unwrap();
                let n = grid.len();
                for k in 0..n {
                    let v = cf.values()[k];
                    let conj = cf.values()[n - 1 - k].conj();
                    assert!((v - conj).norm() < 1e-12, "seed {seed}");
                    assert!(v.norm() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn degenerate_first_error_reproduces_x1_cf() {
        // X1 = X*: latent uniform on {0, 1}, both errors degenerate at zero.
        let s = Sample2::new(vec![(0.0, 0.0), (1.0, 1.0)], vec![0.5, 0.5]).unwrap();
        let grid = GridSpec::new(1.0, 8193).unwrap();
        let cf2 = empirical_cf2(&s, &grid, &GridSpec::new(1.0, 3).unwrap()).unwrap();
        let cross = cross_moment(&s, &grid).unwrap();
        let rec = kotlarski_cf(&cf2, &cross, DEFAULT_VANISH_TOL).unwrap();
        let phi_x1 = empirical_cf(&s, Axis::X1, &grid).unwrap();
        for (a, b) in rec.values().iter().zip(phi_x1.values()) {
            assert!((a - b).norm() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn uniform_fixture_latent_cf_recovered() {
        let sample = uniform_sample();
        // First zero of the X1 CF sits at pi/3; stay below it.
        let grid = GridSpec::new(1.0, 8193).unwrap();
        let cf2 = empirical_cf2(&sample, &grid, &GridSpec::new(1.0, 3).unwrap()).unwrap();
        let cross = cross_moment(&sample, &grid).unwrap();
        let rec = kotlarski_cf(&cf2, &cross, DEFAULT_VANISH_TOL).unwrap();
        for (k, v) in rec.values().iter().enumerate() {
            let want = uniform_latent_cf(grid.node(k));
            assert!((v - want).norm() < 1e-6, "node {k}: {v} vs {want}");
        }
    }

    #[test]
    fn vanishing_cf_detected() {
        // X1 uniform on {-1, 1}: the CF is cos(s), zero at pi/2, which is a
        // node of this grid.
        let s = Sample2::new(vec![(-1.0, 0.0), (1.0, 0.0)], vec![0.5, 0.5]).unwrap();
        let grid = GridSpec::new(2.0 * std::f64::consts::PI, 9).unwrap();
        let cf2 = empirical_cf2(&s, &grid, &GridSpec::new(1.0, 3).unwrap()).unwrap();
        let cross = cross_moment(&s, &grid).unwrap();
        match kotlarski_cf(&cf2, &cross, DEFAULT_VANISH_TOL) {
            Err(CfError::VanishingCf { min_abs, .. }) => assert!(min_abs < 1e-10),
            other => panic!("expected vanishing CF, got {other:?}"),
        }
    }

    #[test]
    fn coarse_grid_detected() {
        // Mass 0.7 at 0 and 0.3 at 50: the integrand's numerator turns by
        // exactly pi per step on this grid while the denominator's phase
        // stays within 0.45 rad, so some step exceeds a quarter turn.
        let s = Sample2::new(vec![(0.0, 0.0), (50.0, 50.0)], vec![0.7, 0.3]).unwrap();
        let grid = GridSpec::new(std::f64::consts::PI, 101).unwrap();
        let cf2 = empirical_cf2(&s, &grid, &GridSpec::new(1.0, 3).unwrap()).unwrap();
        let cross = cross_moment(&s, &grid).unwrap();
        match kotlarski_cf(&cf2, &cross, DEFAULT_VANISH_TOL) {
            Err(CfError::GridTooCoarse(_)) => {}
            other => panic!("expected coarse-grid error, got {other:?}"),
        }
        // A grid that resolves the rotation handles the same sample.
        let grid = GridSpec::new(0.1, 16385).unwrap();
        let cf2 = empirical_cf2(&s, &grid, &GridSpec::new(1.0, 3).unwrap()).unwrap();
        let cross = cross_moment(&s, &grid).unwrap();
        assert!(kotlarski_cf(&cf2, &cross, DEFAULT_VANISH_TOL).is_ok());
    }

    #[test]
    fn round_trip_recovers_latent_cf_for_random_models() {
        let grid = GridSpec::new(0.3, 2049).unwrap();
        for seed in 0..12u64 {
            let spec = synth::random_two_meas(seed);
            let out = spec.generate();
            let sample = Sample2::from_population(&out.population).unwrap();
            let cf2 = empirical_cf2(&sample, &grid, &GridSpec::new(0.3, 3).unwrap()).unwrap();
            let cross = cross_moment(&sample, &grid).unwrap();
            let rec = kotlarski_cf(&cf2, &cross, DEFAULT_VANISH_TOL).unwrap();
            for (k, v) in rec.values().iter().enumerate() {
                let t = grid.node(k);
                let mut want = Complex64::new(0.0, 0.0);
                for (xs, p) in &spec.latent {
                    want += Complex64::cis(t * xs) * p.value();
                }
                assert!(
                    (v - want).norm() < 1e-5,
                    "seed {seed}, node {k}: {v} vs {want}"
                );
            }
        }
    }

    #[test]
    fn standard_normal_density_inverted() {
        let grid = GridSpec::new(8.0, 1025).unwrap();
        let values: Vec<Complex64> = grid
            .nodes()
            .map(|t| Complex64::new((-t * t / 2.0).exp(), 0.0))
            .collect();
        let cf = CharFnGrid::new(grid, values).unwrap();
        let density = invert_cf(&cf, &XGridSpec::new(-6.0, 6.0, 1201).unwrap());
        let at_zero = density.values[600];
        assert_relative_eq!(at_zero, 0.3989422804014327, epsilon = 1e-4);
        assert!((density.integral() - 1.0).abs() < 1e-6);
        assert_eq!(density.window, (-8.0, 8.0));
    }

    #[test]
    fn unit_cf_concentrates_at_zero_as_window_grows() {
        for t_max in [8.0, 32.0, 128.0] {
            let grid = GridSpec::new(t_max, 4097).unwrap();
            let values = vec![Complex64::new(1.0, 0.0); grid.len()];
            let cf = CharFnGrid::new(grid, values).unwrap();
            let density = invert_cf(&cf, &XGridSpec::new(-1.0, 1.0, 1001).unwrap());
            let mass = density.integral();
            assert!(
                (mass - 1.0).abs() <= 1.0 / t_max,
                "t_max {t_max}: mass {mass}"
            );
        }
    }

    #[test]
    fn inversion_is_linear() {
        let grid = GridSpec::new(4.0, 257).unwrap();
        let phi1: Vec<Complex64> = grid
            .nodes()
            .map(|t| Complex64::new((-t * t / 2.0).exp(), 0.0))
            .collect();
        let phi2: Vec<Complex64> = grid.nodes().map(Complex64::cis).collect();
        let a = 0.3;
        let mix: Vec<Complex64> = phi1
            .iter()
            .zip(&phi2)
            .map(|(x, y)| x * a + y * (1.0 - a))
            .collect();
        let xg = XGridSpec::new(-2.0, 2.0, 201).unwrap();
        let d1 = invert_cf(&CharFnGrid::new(grid, phi1).unwrap(), &xg);
        let d2 = invert_cf(&CharFnGrid::new(grid, phi2).unwrap(), &xg);
        let dm = invert_cf(&CharFnGrid::new(grid, mix).unwrap(), &xg);
        for k in 0..xg.n_points {
            assert_relative_eq!(
                dm.values[k],
                a * d1.values[k] + (1.0 - a) * d2.values[k],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn discrete_cf_inversion_mass_within_tolerance() {
        // Atoms at 0 and 1 with the default-extent window.
        let grid = GridSpec::new(16.0, 2049).unwrap();
        let values: Vec<Complex64> = grid
            .nodes()
            .map(|t| (Complex64::new(1.0, 0.0) + Complex64::cis(t)) * 0.5)
            .collect();
        let cf = CharFnGrid::new(grid, values).unwrap();
        let density = invert_cf(&cf, &XGridSpec::new(-20.0, 21.0, 8193).unwrap());
        assert!((density.integral() - 1.0).abs() < 1e-3);
    }

    fn uniform_inputs() -> (CharFnGrid2, CharFnGrid) {
        let spec = presets::two_meas_uniform();
        let out = spec.generate();
        let sample = Sample2::from_population(&out.population).unwrap();
        let grid = GridSpec::new(2.0, 257).unwrap();
        let cf2 = empirical_cf2(&sample, &grid, &grid).unwrap();
        // Latent CF on the same grid, from the latent marginal itself.
        let latent_points: Vec<(f64, f64)> =
            spec.latent.iter().map(|(v, _)| (*v, 0.0)).collect();
        let latent_weights: Vec<f64> = spec.latent.iter().map(|(_, p)| p.value()).collect();
        let latent_sample = Sample2::new(latent_points, latent_weights).unwrap();
        let cf_latent = empirical_cf(&latent_sample, Axis::X1, &grid).unwrap();
        (cf2, cf_latent)
    }

    #[test]
    fn joint_cf_zero_latent_slice_reproduces_joint() {
        let (cf2, cf_latent) = uniform_inputs();
        let out_axis = GridSpec::new(1.0, 129).unwrap();
        let g3 = joint_cf_with_latent(
            &cf2,
            &cf_latent,
            &out_axis,
            &out_axis,
            &out_axis,
            DEFAULT_VANISH_TOL,
        )
        .unwrap();
        // Recompute the joint CF on the output axes for comparison.
        let sample = uniform_sample();
        let check = empirical_cf2(&sample, &out_axis, &out_axis).unwrap();
        let vm = out_axis.mid();
        for a in 0..out_axis.len() {
            for b in 0..out_axis.len() {
                let got = g3.value(a, b, vm);
                let want = check.value(a, b);
                assert!((got - want).norm() < 1e-6, "({a},{b}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn joint_cf_marginalizes_to_latent() {
        let (cf2, cf_latent) = uniform_inputs();
        let out_axis = GridSpec::new(1.0, 129).unwrap();
        let g3 = joint_cf_with_latent(
            &cf2,
            &cf_latent,
            &out_axis,
            &out_axis,
            &out_axis,
            DEFAULT_VANISH_TOL,
        )
        .unwrap();
        let sm = out_axis.mid();
        for c in 0..out_axis.len() {
            let got = g3.value(sm, sm, c);
            let want = uniform_latent_cf(out_axis.node(c));
            assert!((got - want).norm() < 1e-6, "node {c}: {got} vs {want}");
        }
    }

    #[test]
    fn joint_cf_matches_direct_triple_sum() {
        let (cf2, cf_latent) = uniform_inputs();
        let out_axis = GridSpec::new(1.0, 129).unwrap();
        let g3 = joint_cf_with_latent(
            &cf2,
            &cf_latent,
            &out_axis,
            &out_axis,
            &out_axis,
            DEFAULT_VANISH_TOL,
        )
        .unwrap();
        // Brute-force oracle over the 12 records at (s, t, v) = (1, 1, 1).
        let pop = presets::two_meas_uniform().generate().population;
        let mut want = Complex64::new(0.0, 0.0);
        for r in pop.records() {
            let phase = r.x.values()[0] + r.x.values()[1] + r.x_star.unwrap().as_f64().unwrap();
            want += Complex64::cis(phase) * r.p.value();
        }
        let end = out_axis.len() - 1;
        let got = g3.value(end, end, end);
        assert!((got - want).norm() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn joint_cf_rejects_uncovered_axes() {
        let (cf2, cf_latent) = uniform_inputs();
        let wide = GridSpec::new(1.5, 65).unwrap();
        // 1.5 + 1.5 > 2.0: the shifted lookup would leave the input grid.
        assert!(matches!(
            joint_cf_with_latent(&cf2, &cf_latent, &wide, &wide, &wide, DEFAULT_VANISH_TOL),
            Err(CfError::GridTooCoarse(_))
        ));
    }

    #[test]
    fn joint_cf_vanishing_latent_detected() {
        // X1 = X* uniform on {0, 1}; the latent CF vanishes at pi, a node of
        // this grid, so the division cannot be formed there.
        let s = Sample2::new(vec![(0.0, 0.0), (1.0, 1.0)], vec![0.5, 0.5]).unwrap();
        let grid = GridSpec::new(2.0 * std::f64::consts::PI, 9).unwrap();
        let cf2 = empirical_cf2(&s, &grid, &grid).unwrap();
        let cf_latent = empirical_cf(&s, Axis::X1, &grid).unwrap();
        let out = GridSpec::new(std::f64::consts::PI, 5).unwrap();
        assert!(matches!(
            joint_cf_with_latent(&cf2, &cf_latent, &out, &out, &out, DEFAULT_VANISH_TOL),
            Err(CfError::VanishingCf { .. })
        ));
    }

    #[test]
    fn sample_weights_validated() {
        assert!(Sample2::new(vec![], vec![]).is_err());
        assert!(Sample2::new(vec![(0.0, 0.0)], vec![0.5]).is_err());
        assert!(Sample2::new(vec![(0.0, 0.0), (1.0, 0.0)], vec![0.5, -0.5]).is_err());
        let pop = presets::two_meas_uniform().generate().population;
        let s = Sample2::from_population(&pop).unwrap();
        assert_eq!(s.len(), 12);
        assert!(Prob::sums_to_one(
            &s.weights().iter().map(|w| Prob::from_f64(*w)).collect::<Vec<_>>(),
            1e-12
        ));
    }
}
