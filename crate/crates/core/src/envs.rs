//! Synthetic environments.
//!
//! Every environment here is single-index: arm `k` has mean `f_k(x·β₀)` for a
//! link `f_k`, and rewards add Gaussian noise. Regret is always computed from
//! the noise-free means.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::sir::{Direction, ScoreFunction};

/// Consecutive rejections after which a truncated sampler gives up.
pub const MAX_REJECTIONS: usize = 100_000;

/// `φ(x) = (1 - |x|) 1{|x| <= 1}`.
pub fn tent(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

/// `a + (2/B) Σ_{j <= B/2} v_j φ(B/(u-l) (x - q_j))` with `q_j = l + (2j-1)(u-l)/B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpLink {
    pub a: f64,
    pub b: u32,
    pub lower: f64,
    pub upper: f64,
    /// Rademacher signs, one per bump; `floor(B/2)` of them.
    pub signs: Vec<i8>,
}

impl BumpLink {
    pub fn new(a: f64, b: u32, lower: f64, upper: f64, signs: Vec<i8>) -> Result<Self> {
        if b < 2 {
            return Err(Error::InvalidParameter(format!(
                "bump parameter B must be >= 2, got {b}"
            )));
        }
        if signs.len() != (b / 2) as usize || signs.iter().any(|s| s.abs() != 1) {
            return Err(Error::InvalidParameter(format!("need {} signs in {{-1, 1}}", b / 2)));
        }
        if !(lower < upper) {
            return Err(Error::InvalidParameter(format!("empty domain [{lower}, {upper}]")));
        }
        Ok(Self {
            a,
            b,
            lower,
            upper,
            signs,
        })
    }

    pub fn random<R: Rng + ?Sized>(a: f64, b: u32, lower: f64, upper: f64, rng: &mut R) -> Result<Self> {
        let signs = (0..b / 2).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Self::new(a, b, lower, upper, signs)
    }

    pub fn center(&self, j: usize) -> f64 {
        self.lower + (2 * j + 1) as f64 * (self.upper - self.lower) / self.b as f64
    }

    pub fn eval(&self, u: f64) -> f64 {
        let bf = self.b as f64;
        let scale = bf / (self.upper - self.lower);
        let bumps: f64 = self
            .signs
            .iter()
            .enumerate()
            .map(|(j, &v)| v as f64 * tent(scale * (u - self.center(j))))
            .sum();
        self.a + 2.0 / bf * bumps
    }

    /// Largest slope of the link, `2 / (u - l)`.
    pub fn slope_bound(&self) -> f64 {
        2.0 / (self.upper - self.lower)
    }
}

/// Kernel of the hard instances, `K(u) = (1 - |2u|) 1{|u| <= 1/2}`.
pub fn hard_kernel(u: f64) -> f64 {
    (1.0 - (2.0 * u).abs()).max(0.0)
}

/// `f_{v,h}(u) = 1/2 + C_f h Σ_j (2 v_j - 3) K((u - u_j)/h)` on `[-1/2, 1/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstance {
    pub h: f64,
    pub alpha: f64,
    pub c_f: f64,
    /// `v_j ∈ {1, 2}`.
    pub bits: Vec<u8>,
}

impl HardInstance {
    pub const DEFAULT_C_F: f64 = 0.25;

    /// Number of bumps, `ceil(h^{-(1-α)})`.
    pub fn bump_count(h: f64, alpha: f64) -> usize {
        let raw = h.powf(-(1.0 - alpha));
        let snapped = raw.round();
        if (raw - snapped).abs() <= 1e-9 * snapped.max(1.0) {
            snapped as usize
        } else {
            raw.ceil() as usize
        }
    }

    pub fn new(h: f64, alpha: f64, c_f: f64, bits: Vec<u8>) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "bump width h must lie in (0, 1], got {h}"
            )));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if !(c_f > 0.0) {
            return Err(Error::InvalidParameter(format!("C_f must be positive, got {c_f}")));
        }
        let want = Self::bump_count(h, alpha);
        if bits.len() != want || bits.iter().any(|b| *b != 1 && *b != 2) {
            return Err(Error::InvalidParameter(format!("need {want} bits in {{1, 2}}")));
        }
        Ok(Self { h, alpha, c_f, bits })
    }

    pub fn random<R: Rng + ?Sized>(h: f64, alpha: f64, c_f: f64, rng: &mut R) -> Result<Self> {
        let bits = (0..Self::bump_count(h, alpha))
            .map(|_| if rng.random::<bool>() { 2 } else { 1 })
            .collect();
        Self::new(h, alpha, c_f, bits)
    }

    pub fn center(&self, j: usize) -> f64 {
        -0.5 + (j as f64 + 0.5) * self.h
    }

    pub fn eval(&self, u: f64) -> f64 {
        let s: f64 = self
            .bits
            .iter()
            .enumerate()
            .map(|(j, &v)| (2.0 * v as f64 - 3.0) * hard_kernel((u - self.center(j)) / self.h))
            .sum();
        0.5 + self.c_f * self.h * s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Link {
    Bump(BumpLink),
    Linear { intercept: f64, slope: f64 },
    Constant { value: f64 },
    Hard(HardInstance),
}

impl Link {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Link::Bump(b) => b.eval(u),
            Link::Linear { intercept, slope } => intercept + slope * u,
            Link::Constant { value } => *value,
            Link::Hard(h) => h.eval(u),
        }
    }
}

/// Covariate laws; all draw from an explicit RNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSampler {
    /// `N(mean, cov)` restricted to the box, by rejection.
    TruncatedNormal {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Normal {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    Uniform {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

fn diag_rows(d: usize, var: f64) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { var } else { 0.0 }).collect())
        .collect()
}

fn is_diagonal(rows: &[Vec<f64>]) -> bool {
    rows.iter()
        .enumerate()
        .all(|(i, r)| r.iter().enumerate().all(|(j, v)| i == j || *v == 0.0))
}

/// Prepared sampler: Cholesky factor computed once.
#[derive(Debug, Clone)]
pub struct Sampler {
    law: CovariateSampler,
    chol: Option<DMatrix<f64>>,
    diagonal: bool,
}

impl Sampler {
    pub fn new(law: CovariateSampler) -> Result<Self> {
        let (chol, diagonal) = match &law {
            CovariateSampler::TruncatedNormal {
                mean,
                cov,
                lower,
                upper,
            } => {
                check_square(cov, mean.len())?;
                if lower.len() != mean.len() || upper.len() != mean.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mean.len(),
                        actual: lower.len().min(upper.len()),
                    });
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                    return Err(Error::InvalidParameter("truncation box is empty".into()));
                }
                (Some(cholesky(cov)?), is_diagonal(cov))
            }
            CovariateSampler::Normal { mean, cov } => {
                check_square(cov, mean.len())?;
                (Some(cholesky(cov)?), is_diagonal(cov))
            }
            CovariateSampler::Uniform { lower, upper } => {
                if lower.len() != upper.len() || lower.is_empty() {
                    return Err(Error::DimensionMismatch {
                        expected: lower.len(),
                        actual: upper.len(),
                    });
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                    return Err(Error::InvalidParameter("uniform box is empty".into()));
                }
                (None, true)
            }
        };
        Ok(Self { law, chol, diagonal })
    }

    /// Isotropic truncated normal `N(0, sd² I)` on `[-half_width, half_width]^d`.
    pub fn truncated_isotropic(dim: usize, sd: f64, half_width: f64) -> Result<Self> {
        Self::new(CovariateSampler::TruncatedNormal {
            mean: vec![0.0; dim],
            cov: diag_rows(dim, sd * sd),
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        })
    }

    pub fn normal_isotropic(dim: usize, sd: f64) -> Result<Self> {
        Self::new(CovariateSampler::Normal {
            mean: vec![0.0; dim],
            cov: diag_rows(dim, sd * sd),
        })
    }

    pub fn uniform_cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(CovariateSampler::Uniform {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        })
    }

    pub fn law(&self) -> &CovariateSampler {
        &self.law
    }

    pub fn dim(&self) -> usize {
        match &self.law {
            CovariateSampler::TruncatedNormal { mean, .. } | CovariateSampler::Normal { mean, .. } => mean.len(),
            CovariateSampler::Uniform { lower, .. } => lower.len(),
        }
    }

    fn gaussian_draw<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        let l = self.chol.as_ref().unwrap();
        let d = mean.len();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        (0..d)
            .map(|i| mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>())
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match &self.law {
            CovariateSampler::Normal { mean, .. } => Ok(self.gaussian_draw(mean, rng)),
            CovariateSampler::Uniform { lower, upper } => Ok(lower
                .iter()
                .zip(upper)
                .map(|(l, u)| rng.random_range(*l..=*u))
                .collect()),
            CovariateSampler::TruncatedNormal { mean, lower, upper, .. } => {
                if self.diagonal {
                    // independent coordinates: rejecting each axis separately
                    // yields the same law as rejecting the whole vector
                    let l = self.chol.as_ref().unwrap();
                    let mut x = Vec::with_capacity(mean.len());
                    for i in 0..mean.len() {
                        let mut tries = 0;
                        loop {
                            let v = mean[i] + l[(i, i)] * rng.sample::<f64, _>(StandardNormal);
                            if v >= lower[i] && v <= upper[i] {
                                x.push(v);
                                break;
                            }
                            tries += 1;
                            if tries >= MAX_REJECTIONS {
                                return Err(Error::AcceptanceTooLow { rejections: tries });
                            }
                        }
                    }
                    Ok(x)
                } else {
                    for _ in 0..MAX_REJECTIONS {
                        let x = self.gaussian_draw(mean, rng);
                        if x.iter()
                            .zip(lower.iter().zip(upper))
                            .all(|(v, (l, u))| v >= l && v <= u)
                        {
                            return Ok(x);
                        }
                    }
                    Err(Error::AcceptanceTooLow {
                        rejections: MAX_REJECTIONS,
                    })
                }
            }
        }
    }

    /// Score of the law; the uniform case gets a moment-matched Gaussian
    /// stand-in because its own score vanishes.
    pub fn score(&self) -> Result<ScoreFunction> {
        match &self.law {
            CovariateSampler::TruncatedNormal {
                mean,
                cov,
                lower,
                upper,
            } => ScoreFunction::truncated_gaussian(mean.clone(), &to_matrix(cov), lower.clone(), upper.clone()),
            CovariateSampler::Normal { mean, cov } => ScoreFunction::gaussian(mean.clone(), &to_matrix(cov)),
            CovariateSampler::Uniform { lower, upper } => {
                let mean: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect();
                let d = mean.len();
                let cov = DMatrix::from_fn(d, d, |i, j| {
                    if i == j {
                        (upper[i] - lower[i]).powi(2) / 12.0
                    } else {
                        0.0
                    }
                });
                ScoreFunction::gaussian(mean, &cov)
            }
        }
    }

    /// Axis-aligned bounds of the support; Gaussian laws use mean ± 3 sd.
    pub fn support(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.law {
            CovariateSampler::TruncatedNormal { lower, upper, .. } | CovariateSampler::Uniform { lower, upper } => {
                (lower.clone(), upper.clone())
            }
            CovariateSampler::Normal { mean, cov } => {
                let sd: Vec<f64> = (0..mean.len()).map(|i| cov[i][i].sqrt()).collect();
                (
                    mean.iter().zip(&sd).map(|(m, s)| m - 3.0 * s).collect(),
                    mean.iter().zip(&sd).map(|(m, s)| m + 3.0 * s).collect(),
                )
            }
        }
    }
}

fn check_square(cov: &[Vec<f64>], d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    if cov.len() != d || cov.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: cov.len(),
        });
    }
    Ok(())
}

fn cholesky(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    to_matrix(cov)
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidParameter("covariance is not positive definite".into()))
}

/// Draw one point of a truncated multivariate normal by joint rejection.
pub fn sample_truncated_mvn<R: Rng + ?Sized>(
    mean: &[f64],
    cov: &DMatrix<f64>,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = mean.len();
    let rows: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| cov[(i, j)]).collect()).collect();
    let l = cholesky(&rows)?;
    for _ in 0..MAX_REJECTIONS {
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let x: Vec<f64> = (0..d)
            .map(|i| mean[i] + (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>())
            .collect();
        if x.iter()
            .zip(lower.iter().zip(upper))
            .all(|(v, (lo, hi))| v >= lo && v <= hi)
        {
            return Ok(x);
        }
    }
    Err(Error::AcceptanceTooLow {
        rejections: MAX_REJECTIONS,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    TruncatedNormal,
    Normal,
    Uniform,
}

/// Single-index bandit environment.
#[derive(Debug, Clone)]
pub struct Environment {
    pub name: String,
    pub beta: Direction,
    pub links: Vec<Link>,
    pub sampler: Sampler,
    pub noise_sd: f64,
    /// Optional clamp of realized rewards.
    pub clamp: Option<(f64, f64)>,
    /// Range of `x·β₀` used when the partition takes the true bounds.
    pub index_bounds: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvironmentDescription<'a> {
    pub name: &'a str,
    pub dim: usize,
    pub arms: usize,
    pub sigma: f64,
    pub beta: &'a Direction,
    pub links: &'a [Link],
    pub covariates: &'a CovariateSampler,
    pub index_bounds: (f64, f64),
}

impl Environment {
    pub fn new(
        name: impl Into<String>,
        beta: Direction,
        links: Vec<Link>,
        sampler: Sampler,
        noise_sd: f64,
    ) -> Result<Self> {
        if links.len() < 2 {
            return Err(Error::InvalidParameter("an environment needs at least 2 arms".into()));
        }
        if sampler.dim() != beta.dim() {
            return Err(Error::DimensionMismatch {
                expected: beta.dim(),
                actual: sampler.dim(),
            });
        }
        if !(noise_sd >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise sd must be >= 0, got {noise_sd}"
            )));
        }
        let (lo, hi) = sampler.support();
        // bound of x·β over the support box
        let b = beta.as_slice();
        let lower = (0..b.len()).map(|j| (b[j] * lo[j]).min(b[j] * hi[j])).sum();
        let upper = (0..b.len()).map(|j| (b[j] * lo[j]).max(b[j] * hi[j])).sum();
        Ok(Self {
            name: name.into(),
            beta,
            links,
            sampler,
            noise_sd,
            clamp: None,
            index_bounds: (lower, upper),
        })
    }

    pub fn with_index_bounds(mut self, lower: f64, upper: f64) -> Self {
        self.index_bounds = (lower, upper);
        self
    }

    pub fn with_clamp(mut self, lower: f64, upper: f64) -> Self {
        self.clamp = Some((lower, upper));
        self
    }

    pub fn dim(&self) -> usize {
        self.beta.dim()
    }

    pub fn arms(&self) -> usize {
        self.links.len()
    }

    pub fn describe(&self) -> EnvironmentDescription<'_> {
        EnvironmentDescription {
            name: &self.name,
            dim: self.dim(),
            arms: self.arms(),
            sigma: self.noise_sd,
            beta: &self.beta,
            links: &self.links,
            covariates: self.sampler.law(),
            index_bounds: self.index_bounds,
        }
    }

    pub fn sample_x<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.sampler.sample(rng)
    }

    pub fn mean_reward(&self, arm: usize, x: &[f64]) -> f64 {
        self.links[arm].eval(self.beta.project(x))
    }

    pub fn means(&self, x: &[f64]) -> Vec<f64> {
        let u = self.beta.project(x);
        self.links.iter().map(|l| l.eval(u)).collect()
    }

    /// Mean plus noise; `noise` is a standard-normal draw supplied by the caller
    /// so that every policy sees the same noise sequence.
    pub fn reward(&self, arm: usize, x: &[f64], noise: f64) -> f64 {
        let y = self.mean_reward(arm, x) + self.noise_sd * noise;
        match self.clamp {
            Some((lo, hi)) => y.clamp(lo, hi),
            None => y,
        }
    }

    /// `max_k g_k(x) - g_arm(x)`.
    pub fn oracle_regret(&self, x: &[f64], arm: usize) -> f64 {
        let m = self.means(x);
        let best = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (best - m[arm]).max(0.0)
    }

    pub fn best_arm(&self, x: &[f64]) -> usize {
        let m = self.means(x);
        let mut best = 0;
        for (k, v) in m.iter().enumerate() {
            if *v > m[best] {
                best = k;
            }
        }
        best
    }
}

/// Draw `β₀ = z / |z|`, `z ~ N(0, I_d)`.
pub fn random_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Direction> {
    Direction::new((0..dim).map(|_| rng.sample(StandardNormal)).collect())
}

pub const SETTING_SD: f64 = 5.0;
pub const SETTING_BOX: f64 = 3.0;

/// Sampler for the simulation settings with the given covariate family.
pub fn setting_sampler(kind: CovariateKind, dim: usize, normal_sd: f64) -> Result<Sampler> {
    match kind {
        CovariateKind::TruncatedNormal => Sampler::truncated_isotropic(dim, SETTING_SD, SETTING_BOX),
        CovariateKind::Normal => Sampler::normal_isotropic(dim, normal_sd),
        CovariateKind::Uniform => Sampler::uniform_cube(dim, SETTING_BOX),
    }
}

/// The two simulation settings. Draw order: `β₀`, then the signs of arm 1,
/// then those of arm 2. When `beta` is given it replaces the random draw.
pub fn make_setting<R: Rng + ?Sized>(
    setting: u8,
    dim: usize,
    sigma: f64,
    sampler: Sampler,
    beta: Option<Direction>,
    rng: &mut R,
) -> Result<Environment> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    let drawn = random_direction(dim, rng)?;
    let beta = beta.unwrap_or(drawn);
    let half = SETTING_BOX * (dim as f64).sqrt();
    let (l, u) = (-half, half);
    let arm1 = Link::Bump(BumpLink::random(0.5, 8, l, u, rng)?);
    let arm2 = match setting {
        1 => Link::Linear {
            intercept: 0.5,
            slope: 1.0,
        },
        2 => Link::Bump(BumpLink::random(0.75, 5, l, u, rng)?),
        other => return Err(Error::InvalidParameter(format!("unknown setting {other}"))),
    };
    Ok(Environment::new(format!("setting{setting}"), beta, vec![arm1, arm2], sampler, sigma)?.with_index_bounds(l, u))
}

/// Lower-bound instance: arm 1 follows `f_{v,h}`, arm 2 is constant `1/2`,
/// covariates `TN(0, I, [-1/2, 1/2]^d)` and `β₀ = e₁`.
pub fn make_hard<R: Rng + ?Sized>(
    dim: usize,
    h: f64,
    alpha: f64,
    c_f: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<Environment> {
    let inst = HardInstance::random(h, alpha, c_f, rng)?;
    let sampler = Sampler::truncated_isotropic(dim, 1.0, 0.5)?;
    Ok(Environment::new(
        "hard",
        Direction::axis(dim, 0),
        vec![Link::Hard(inst), Link::Constant { value: 0.5 }],
        sampler,
        sigma,
    )?
    .with_index_bounds(-0.5, 0.5))
}

/// Peak density of `N(0,1)` truncated to `[-1/2, 1/2]`: `φ(0) / (Φ(1/2) - Φ(-1/2))`.
pub fn truncated_peak_density() -> f64 {
    let n = Normal::standard();
    let mass = n.cdf(0.5) - n.cdf(-0.5);
    (1.0 / (2.0 * std::f64::consts::PI).sqrt()) / mass
}

/// Margin envelope `2 c̄ (δ / C_f)^α` for the hard instances.
pub fn hard_margin_envelope(delta: f64, alpha: f64, c_f: f64, c_bar: f64) -> f64 {
    2.0 * c_bar * (delta / c_f).powf(alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginPoint {
    pub delta: f64,
    pub probability: f64,
    pub std_error: f64,
}

/// Monte Carlo estimate of `P(0 < |g_1(X) - g_2(X)| <= δ)` for each `δ`,
/// comparing arms 0 and 1.
pub fn margin_probe<R: Rng + ?Sized>(
    env: &Environment,
    deltas: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<MarginPoint>> {
    if n_samples < 1000 {
        return Err(Error::InvalidParameter(format!(
            "margin probe needs >= 1000 samples, got {n_samples}"
        )));
    }
    let mut gaps = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x = env.sample_x(rng)?;
        let m = env.means(&x);
        gaps.push((m[0] - m[1]).abs());
    }
    let n = n_samples as f64;
    Ok(deltas
        .iter()
        .map(|&delta| {
            let hits = gaps.iter().filter(|&&g| g > 0.0 && g <= delta).count() as f64;
            let p = hits / n;
            MarginPoint {
                delta,
                probability: p,
                std_error: (p * (1.0 - p) / n).sqrt(),
            }
        })
        .collect())
}

/// Largest difference quotient of `link` over `n_pairs` uniform pairs in `[lower, upper]`.
pub fn lipschitz_probe<R: Rng + ?Sized>(
    link: &Link,
    lower: f64,
    upper: f64,
    n_pairs: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_pairs < 1000 {
        return Err(Error::InvalidParameter(format!(
            "lipschitz probe needs >= 1000 pairs, got {n_pairs}"
        )));
    }
    let mut best: f64 = 0.0;
    for _ in 0..n_pairs {
        let a = rng.random_range(lower..=upper);
        let b = rng.random_range(lower..=upper);
        if a != b {
            best = best.max((link.eval(a) - link.eval(b)).abs() / (a - b).abs());
        }
    }
    Ok(best)
}
