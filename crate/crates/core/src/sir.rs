//! Index-direction estimation.
//!
//! SADE (sliced average derivative estimation) recovers the index direction
//! from the score of the covariate law: with `S(x) = ∇ -log p(x)`,
//! `V = E[S Sᵀ] - E[Cov(S | Y)]` has its top eigenvector along `β₀`.
//! Per-arm estimates are fused through their projection matrices.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIGN_EPS: f64 = 1e-12;
const EIGEN_FLOOR: f64 = 1e-10;

/// Unit vector, sign-normalized so its first non-negligible entry is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Direction(Vec<f64>);

impl Direction {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidParameter("direction must have dimension >= 1".into()));
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::DegenerateDirection(format!(
                "cannot normalize vector of norm {norm}"
            )));
        }
        let mut v: Vec<f64> = v.into_iter().map(|a| a / norm).collect();
        if let Some(first) = v.iter().find(|a| a.abs() > SIGN_EPS) {
            if *first < 0.0 {
                v.iter_mut().for_each(|a| *a = -*a);
            }
        }
        Ok(Self(v))
    }

    /// Standard basis vector `e_axis` in `R^dim`.
    pub fn axis(dim: usize, axis: usize) -> Self {
        assert!(axis < dim, "axis {axis} out of range for dimension {dim}");
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `x · β`.
    pub fn project(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.0.len());
        self.0.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

impl TryFrom<Vec<f64>> for Direction {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Direction::new(v)
    }
}

impl From<Direction> for Vec<f64> {
    fn from(d: Direction) -> Self {
        d.0
    }
}

/// `sin` of the principal angle between two directions.
pub fn sin_angle(u: &Direction, v: &Direction) -> f64 {
    assert_eq!(u.dim(), v.dim(), "sin_angle on directions of different dimension");
    // residual norm of u after projecting onto v; exact near 0 where sqrt(1 - c²) is not
    let c = u.project(v.as_slice());
    let r: f64 = u
        .as_slice()
        .iter()
        .zip(v.as_slice())
        .map(|(a, b)| (a - c * b).powi(2))
        .sum();
    r.sqrt().min(1.0)
}

/// Rotate `beta` by `theta` towards a uniformly random orthogonal direction.
pub fn perturb_direction<R: Rng + ?Sized>(beta: &Direction, theta: f64, rng: &mut R) -> Result<Direction> {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in [0, pi/2], got {theta}"
        )));
    }
    if theta == 0.0 {
        return Ok(beta.clone());
    }
    let d = beta.dim();
    if d == 1 {
        return Err(Error::InvalidParameter(
            "cannot perturb a one-dimensional direction".into(),
        ));
    }
    let b = beta.as_slice();
    let w = loop {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let c = beta.project(&z);
        let w: Vec<f64> = z.iter().zip(b).map(|(zi, bi)| zi - c * bi).collect();
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            break w.into_iter().map(|a| a / norm).collect::<Vec<f64>>();
        }
    };
    let (s, c) = theta.sin_cos();
    Direction::new(b.iter().zip(&w).map(|(bi, wi)| c * bi + s * wi).collect())
}

/// First-order score `S₁(x)` of a covariate law.
#[derive(Clone)]
pub enum ScoreFunction {
    /// `Σ⁻¹(x - μ)`; stores the precision matrix.
    Gaussian { mean: Vec<f64>, precision: DMatrix<f64> },
    /// Same as `Gaussian` on the interior of the box.
    TruncatedGaussian {
        mean: Vec<f64>,
        precision: DMatrix<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// The uniform density is flat, so its score vanishes on the box.
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    Custom {
        dim: usize,
        f: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    },
}

impl fmt::Debug for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian { mean, .. } => f.debug_struct("Gaussian").field("mean", mean).finish_non_exhaustive(),
            Self::TruncatedGaussian { mean, lower, upper, .. } => f
                .debug_struct("TruncatedGaussian")
                .field("mean", mean)
                .field("lower", lower)
                .field("upper", upper)
                .finish_non_exhaustive(),
            Self::UniformBox { lower, upper } => f
                .debug_struct("UniformBox")
                .field("lower", lower)
                .field("upper", upper)
                .finish(),
            Self::Custom { dim, .. } => f.debug_struct("Custom").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

fn precision_of(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !cov.is_square() {
        return Err(Error::DimensionMismatch {
            expected: cov.nrows(),
            actual: cov.ncols(),
        });
    }
    cov.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::InvalidParameter("covariance is not positive definite".into()))
}

impl ScoreFunction {
    pub fn gaussian(mean: Vec<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        check_len(cov.nrows(), mean.len())?;
        Ok(Self::Gaussian {
            precision: precision_of(cov)?,
            mean,
        })
    }

    pub fn truncated_gaussian(mean: Vec<f64>, cov: &DMatrix<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len(cov.nrows(), mean.len())?;
        check_len(mean.len(), lower.len())?;
        check_len(mean.len(), upper.len())?;
        Ok(Self::TruncatedGaussian {
            precision: precision_of(cov)?,
            mean,
            lower,
            upper,
        })
    }

    /// Gaussian score with the sample mean and covariance of `xs`, plus `ridge · I`.
    pub fn empirical_gaussian(xs: &[Vec<f64>], ridge: f64) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::InsufficientData { have: n, need: 2 });
        }
        let d = xs[0].len();
        let mut mean = vec![0.0; d];
        for x in xs {
            check_len(d, x.len())?;
            mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for x in xs {
            let c = DVector::from_iterator(d, x.iter().zip(&mean).map(|(a, m)| a - m));
            cov.ger(1.0, &c, &c, 1.0);
        }
        cov /= (n - 1) as f64;
        let scale = (cov.trace() / d as f64).max(1e-12);
        for i in 0..d {
            cov[(i, i)] += ridge * scale;
        }
        Self::gaussian(mean, &cov)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { mean, .. } | Self::TruncatedGaussian { mean, .. } => mean.len(),
            Self::UniformBox { lower, .. } => lower.len(),
            Self::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Gaussian { mean, precision } | Self::TruncatedGaussian { mean, precision, .. } => {
                let c = DVector::from_iterator(mean.len(), x.iter().zip(mean).map(|(a, m)| a - m));
                (precision * c).as_slice().to_vec()
            }
            Self::UniformBox { lower, .. } => vec![0.0; lower.len()],
            Self::Custom { f, .. } => f(x),
        }
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Output of a SADE fit.
#[derive(Debug, Clone, Serialize)]
pub struct SadeFit {
    pub direction: Direction,
    /// Eigenvalues of the symmetrized `V̂`, largest first.
    pub eigenvalues: Vec<f64>,
    pub slice_counts: Vec<usize>,
    pub y_range: (f64, f64),
    pub n: usize,
}

/// Top eigenpair of a symmetric matrix, plus all eigenvalues sorted descending.
pub(crate) fn top_eigen(m: &DMatrix<f64>) -> (f64, DVector<f64>, Vec<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order[0];
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (eig.eigenvalues[top], eig.eigenvectors.column(top).into_owned(), values)
}

pub fn sade_estimate(xs: &[Vec<f64>], ys: &[f64], score: &ScoreFunction, slices: usize) -> Result<Direction> {
    sade_fit(xs, ys, score, slices).map(|f| f.direction)
}

pub fn sade_fit(xs: &[Vec<f64>], ys: &[f64], score: &ScoreFunction, slices: usize) -> Result<SadeFit> {
    if slices < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 slices, got {slices}")));
    }
    check_len(xs.len(), ys.len())?;
    let n = xs.len();
    if n < 2 * slices {
        return Err(Error::InsufficientData {
            have: n,
            need: 2 * slices,
        });
    }
    let d = score.dim();
    for x in xs {
        check_len(d, x.len())?;
    }
    let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
        (lo.min(y), hi.max(y))
    });
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidParameter("responses must be finite".into()));
    }
    if hi <= lo {
        return Err(Error::DegenerateDirection(format!("constant response {lo}")));
    }

    let scores: Vec<DVector<f64>> = xs.iter().map(|x| DVector::from_vec(score.eval(x))).collect();
    let slice_of = |y: f64| -> usize { (((y - lo) / (hi - lo) * slices as f64).floor() as usize).min(slices - 1) };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); slices];
    for (i, &y) in ys.iter().enumerate() {
        members[slice_of(y)].push(i);
    }

    let nf = n as f64;
    let mut v = DMatrix::<f64>::zeros(d, d);
    for s in &scores {
        v.ger(1.0 / nf, s, s, 1.0);
    }
    for idx in members.iter().filter(|m| m.len() >= 2) {
        let nh = idx.len() as f64;
        let mut mean = DVector::<f64>::zeros(d);
        for &i in idx {
            mean += &scores[i];
        }
        mean /= nh;
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for &i in idx {
            let c = &scores[i] - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        // p̂_h · cov_h with the (n p̂_h - 1) denominator
        v -= cov * ((nh / nf) / (nh - 1.0));
    }
    let v = (&v + v.transpose()) * 0.5;
    let (lambda, vec, eigenvalues) = top_eigen(&v);
    if !(lambda > EIGEN_FLOOR) {
        return Err(Error::DegenerateDirection(format!(
            "top eigenvalue {lambda:e} carries no signal"
        )));
    }
    Ok(SadeFit {
        direction: Direction::new(vec.as_slice().to_vec())?,
        eigenvalues,
        slice_counts: members.iter().map(Vec::len).collect(),
        y_range: (lo, hi),
        n,
    })
}

/// Top eigenvector of `Σ ω_k β_k β_kᵀ`.
pub fn combine_directions(dirs: &[Direction], weights: &[f64]) -> Result<Direction> {
    if dirs.is_empty() {
        return Err(Error::InvalidParameter("no directions to combine".into()));
    }
    check_len(dirs.len(), weights.len())?;
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidParameter("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 * dirs.len().max(1) as f64 {
        return Err(Error::InvalidParameter(format!("weights must sum to 1, got {total}")));
    }
    let d = dirs[0].dim();
    let mut p = DMatrix::<f64>::zeros(d, d);
    for (b, &w) in dirs.iter().zip(weights) {
        check_len(d, b.dim())?;
        let v = DVector::from_column_slice(b.as_slice());
        p.ger(w, &v, &v, 1.0);
    }
    let (lambda, vec, values) = top_eigen(&p);
    if values.len() > 1 && values[0] - values[1] <= EIGEN_FLOOR {
        return Err(Error::DegenerateDirection(format!(
            "top eigenvalues tie ({} vs {})",
            values[0], values[1]
        )));
    }
    // an input that already is the top eigenvector beats the solver's rounding
    let exact = dirs.iter().find(|b| {
        let v = DVector::from_column_slice(b.as_slice());
        (&p * &v - &v * lambda).norm() <= 1e-12
    });
    match exact {
        Some(b) => Ok(b.clone()),
        None => Direction::new(vec.as_slice().to_vec()),
    }
}

/// Observations collected by cyclic pulling, split by arm.
#[derive(Debug, Clone, Default)]
pub struct ArmSamples {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
}

/// Run SADE on each arm's samples and fuse with equal weights.
pub fn fused_direction(per_arm: &[ArmSamples], score: &ScoreFunction, slices: usize) -> Result<Direction> {
    let k = per_arm.len();
    let dirs = per_arm
        .iter()
        .map(|s| sade_estimate(&s.xs, &s.ys, score, slices))
        .collect::<Result<Vec<_>>>()?;
    combine_directions(&dirs, &vec![1.0 / k as f64; k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    fn std_normal_data(n: usize, d: usize, seed: u64, link: impl Fn(f64) -> f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = seeded(seed);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let ys = xs
            .iter()
            .map(|x| link(x[0]) + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (xs, ys)
    }

    fn std_score(d: usize) -> ScoreFunction {
        ScoreFunction::gaussian(vec![0.0; d], &DMatrix::identity(d, d)).unwrap()
    }

    #[test]
    fn direction_normalizes_and_fixes_sign() {
        let d = Direction::new(vec![-3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(d.as_slice()[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(d.as_slice()[1], -0.8, epsilon = 1e-15);
        let d = Direction::new(vec![1e-14, -2.0]).unwrap();
        assert!(d.as_slice()[1] > 0.0);
        assert!(Direction::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn direction_json_roundtrip() {
        let d = Direction::new(vec![1.0, 2.0, 2.0]).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.starts_with('['));
        let back: Direction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn sin_angle_examples() {
        let e1 = Direction::axis(2, 0);
        let e2 = Direction::axis(2, 1);
        let diag = Direction::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(sin_angle(&e1, &e1), 0.0);
        assert_abs_diff_eq!(sin_angle(&e1, &e2), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sin_angle(&e1, &diag), FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn perturbation_examples() {
        let mut rng = seeded(3);
        let b = Direction::new(vec![0.3, -0.2, 0.9, 0.1]).unwrap();
        assert_eq!(perturb_direction(&b, 0.0, &mut rng).unwrap(), b);
        let p = perturb_direction(&b, FRAC_PI_2, &mut rng).unwrap();
        assert!(b.project(p.as_slice()).abs() <= 1e-10);
        let p = perturb_direction(&b, FRAC_PI_4, &mut rng).unwrap();
        assert_abs_diff_eq!(sin_angle(&p, &b), FRAC_1_SQRT_2, epsilon = 1e-10);
        assert!(perturb_direction(&Direction::axis(1, 0), 0.1, &mut rng).is_err());
        assert!(perturb_direction(&b, 2.0, &mut rng).is_err());
    }

    #[test]
    fn sade_recovers_linear_index() {
        let (xs, ys) = std_normal_data(5000, 5, 11, |u| u);
        let fit = sade_fit(&xs, &ys, &std_score(5), 10).unwrap();
        assert!(sin_angle(&fit.direction, &Direction::axis(5, 0)) < 0.1);
        assert_eq!(fit.slice_counts.iter().sum::<usize>(), 5000);
        assert!(fit.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sade_constant_response_is_degenerate() {
        let (xs, _) = std_normal_data(100, 3, 1, |u| u);
        let ys = vec![0.5; 100];
        assert!(matches!(
            sade_estimate(&xs, &ys, &std_score(3), 5),
            Err(Error::DegenerateDirection(_))
        ));
    }

    #[test]
    fn sade_one_dimensional_is_unit() {
        let (xs, ys) = std_normal_data(200, 1, 5, |u| u * u);
        let b = sade_estimate(&xs, &ys, &std_score(1), 5).unwrap();
        assert_eq!(b.as_slice(), &[1.0]);
    }

    #[test]
    fn sade_needs_two_points_per_slice() {
        let (xs, ys) = std_normal_data(19, 2, 5, |u| u);
        assert!(matches!(
            sade_estimate(&xs, &ys, &std_score(2), 10),
            Err(Error::InsufficientData { have: 19, need: 20 })
        ));
    }

    #[test]
    fn sade_residual_bound() {
        let (xs, ys) = std_normal_data(2000, 4, 8, |u| u.sin());
        let fit = sade_fit(&xs, &ys, &std_score(4), 8).unwrap();
        // rebuild V̂ through a second path: the residual of the returned pair
        let b = DVector::from_column_slice(fit.direction.as_slice());
        let lambda = fit.eigenvalues[0];
        let mut v = DMatrix::<f64>::zeros(4, 4);
        let scores: Vec<DVector<f64>> = xs.iter().map(|x| DVector::from_column_slice(x)).collect();
        for s in &scores {
            v.ger(1.0 / 2000.0, s, s, 1.0);
        }
        let (lo, hi) = fit.y_range;
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 8];
        for (i, y) in ys.iter().enumerate() {
            groups[(((y - lo) / (hi - lo) * 8.0) as usize).min(7)].push(i);
        }
        for g in groups.iter().filter(|g| g.len() >= 2) {
            let nh = g.len() as f64;
            let mean = g.iter().fold(DVector::zeros(4), |acc, &i| acc + &scores[i]) / nh;
            for &i in g {
                let c = &scores[i] - &mean;
                v.ger(-nh / 2000.0 / (nh - 1.0), &c, &c, 1.0);
            }
        }
        let residual = (&v * &b - &b * lambda).norm();
        assert!(residual <= 1e-8 * v.norm());
    }

    #[test]
    fn combine_examples() {
        let b = Direction::new(vec![0.2, 0.5, -0.3]).unwrap();
        let neg = Direction(b.as_slice().iter().map(|a| -a).collect());
        let out = combine_directions(&[b.clone(), b.clone()], &[0.5, 0.5]).unwrap();
        assert!(sin_angle(&out, &b) < 1e-12);
        let out = combine_directions(&[b.clone(), neg], &[0.5, 0.5]).unwrap();
        assert!(sin_angle(&out, &b) < 1e-12);
        assert!(out.as_slice()[0] > 0.0);
        let e1 = Direction::axis(3, 0);
        let e2 = Direction::axis(3, 1);
        assert_eq!(combine_directions(&[e1.clone(), e2.clone()], &[0.7, 0.3]).unwrap(), e1);
        assert!(matches!(
            combine_directions(&[e1, e2], &[0.5, 0.5]),
            Err(Error::DegenerateDirection(_))
        ));
    }

    #[test]
    fn combine_rejects_bad_weights() {
        let e1 = Direction::axis(2, 0);
        assert!(combine_directions(std::slice::from_ref(&e1), &[0.9]).is_err());
        assert!(combine_directions(&[e1.clone(), e1], &[1.5, -0.5]).is_err());
    }

    #[test]
    fn gaussian_score_matches_formula() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = ScoreFunction::gaussian(vec![1.0, -1.0], &cov).unwrap();
        let got = s.eval(&[2.0, 0.0]);
        let want = cov.try_inverse().unwrap() * DVector::from_vec(vec![1.0, 1.0]);
        assert_abs_diff_eq!(got[0], want[0], epsilon = 1e-12);
        assert_abs_diff_eq!(got[1], want[1], epsilon = 1e-12);
    }
}
