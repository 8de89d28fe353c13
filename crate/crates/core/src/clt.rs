//! Empirical normal-approximation layer: distributions of the normalized,
//! fiberwise-centered Birkhoff sums, their Kolmogorov and Wasserstein
//! distances from centered Gaussians, the triangle split through the
//! finite-horizon scale, and the multivariate covariance assembled by
//! polarization from scalar variances.

use crate::error::{Error, Result};
use crate::maps::{Ensemble, MapSystem, Observable, OmegaSequence};
use crate::numeric::{self, normal_cdf, std_normal_pdf, std_normal_quantile};
use crate::quenched;
use crate::selection::SelectionProcess;

/// A weighted sample sorted ascending.
#[derive(Clone, Debug)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn from_weighted(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Invalid("empty sample".into()));
        }
        if pairs.iter().any(|(v, w)| v.is_nan() || *w < 0.0) {
            return Err(Error::Invalid("NaN value or negative weight".into()));
        }
        let total: f64 = pairs.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("weights sum to {total}")));
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(EmpiricalDistribution {
            values: pairs.iter().map(|(v, _)| *v).collect(),
            weights: pairs.iter().map(|(_, w)| *w).collect(),
        })
    }

    pub fn from_samples(values: &[f64]) -> Result<Self> {
        let w = 1.0 / values.len() as f64;
        Self::from_weighted(values.iter().map(|&v| (v, w)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        numeric::weighted_mean(&self.values, &self.weights)
    }

    pub fn variance(&self) -> f64 {
        numeric::weighted_variance(&self.values, &self.weights)
    }

    /// Sup distance between the empirical CDF and a target CDF, scanning
    /// both one-sided limits at every jump.
    pub fn sup_distance_to(&self, target: impl Fn(f64) -> f64) -> f64 {
        let mut cum = 0.0;
        let mut sup: f64 = 0.0;
        let mut i = 0;
        let n = self.values.len();
        while i < n {
            let x = self.values[i];
            // merge ties into one jump
            let mut w = 0.0;
            while i < n && self.values[i] == x {
                w += self.weights[i];
                i += 1;
            }
            let t = target(x);
            sup = sup.max((cum - t).abs());
            cum += w;
            sup = sup.max((cum - t).abs());
        }
        sup
    }
}

/// Kolmogorov distance of an empirical distribution from `N(0, sigma^2)`;
/// `sigma = 0` compares against the point mass at 0.
pub fn kolmogorov_distance(dist: &EmpiricalDistribution, sigma: f64) -> f64 {
    if sigma == 0.0 {
        // both CDFs jump at 0: the sup is the mass strictly below 0 or
        // strictly above it, whichever is larger
        let below: f64 = dist
            .values
            .iter()
            .zip(&dist.weights)
            .filter(|(v, _)| **v < 0.0)
            .map(|(_, w)| *w)
            .sum();
        let above: f64 = dist
            .values
            .iter()
            .zip(&dist.weights)
            .filter(|(v, _)| **v > 0.0)
            .map(|(_, w)| *w)
            .sum();
        return below.max(above);
    }
    dist.sup_distance_to(|x| normal_cdf(x, sigma))
}

/// Wasserstein-1 distance from `N(0, sigma^2)`, via the closed-form
/// integral of `|F_emp - Phi_sigma|` between jump points (the antiderivative
/// of the normal CDF is `x Phi + sigma^2 phi`).
pub fn wasserstein_distance(dist: &EmpiricalDistribution, sigma: f64) -> f64 {
    if sigma == 0.0 {
        // target point mass at 0: W1 = int |x| dF
        return numeric::kahan_sum(
            dist.values
                .iter()
                .zip(&dist.weights)
                .map(|(v, w)| w * v.abs()),
        );
    }
    let cdf_int = |x: f64| -> f64 {
        // antiderivative of Phi(x/sigma)
        let z = x / sigma;
        x * normal_cdf(x, sigma) + sigma * std_normal_pdf(z)
    };
    let mut total = 0.0;
    let mut cum = 0.0;
    // left tail: int_{-inf}^{x_0} Phi = cdf_int(x_0)
    total += cdf_int(dist.values[0]);
    for i in 0..dist.values.len() {
        cum += dist.weights[i];
        let a = dist.values[i];
        let b = if i + 1 < dist.values.len() {
            dist.values[i + 1]
        } else {
            break;
        };
        if a == b {
            continue;
        }
        // int_a^b |cum - Phi| dx, splitting at the crossing when inside
        let seg = |lo: f64, hi: f64| -> f64 {
            // int (cum - Phi): cum*(hi-lo) - (cdf_int(hi)-cdf_int(lo))
            cum * (hi - lo) - (cdf_int(hi) - cdf_int(lo))
        };
        if cum <= 0.0 {
            total += -seg(a, b);
        } else if cum >= 1.0 {
            total += seg(a, b);
        } else {
            let x_star = sigma * std_normal_quantile(cum);
            if x_star <= a {
                total += -seg(a, b);
            } else if x_star >= b {
                total += seg(a, b);
            } else {
                total += seg(a, x_star) - seg(x_star, b);
            }
        }
    }
    // right tail: int_{x_last}^{inf} (1 - Phi) dx
    let last = *dist.values.last().unwrap();
    // int_x^inf (1 - Phi) = E[(X - x)^+] = sigma phi(x/sigma) - x (1 - Phi(x))
    total += sigma * std_normal_pdf(last / sigma) - last * (1.0 - normal_cdf(last, sigma));
    total
}

/// Kolmogorov distance between two weighted empirical distributions.
pub fn ks_between(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let mut sup: f64 = 0.0;
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut ca, mut cb) = (0.0f64, 0.0f64);
    while ia < a.values.len() || ib < b.values.len() {
        let xa = a.values.get(ia).copied().unwrap_or(f64::INFINITY);
        let xb = b.values.get(ib).copied().unwrap_or(f64::INFINITY);
        let x = xa.min(xb);
        while ia < a.values.len() && a.values[ia] == x {
            ca += a.weights[ia];
            ia += 1;
        }
        while ib < b.values.len() && b.values[ib] == x {
            cb += b.weights[ib];
            ib += 1;
        }
        sup = sup.max((ca - cb).abs());
    }
    sup
}

/// Kolmogorov distance between the empirical laws of two ensembles
/// (position distributions on the interval).
pub fn ks_between_ensembles(a: &Ensemble, b: &Ensemble) -> f64 {
    let da = EmpiricalDistribution::from_weighted(
        a.points()
            .iter()
            .zip(a.weights())
            .map(|(&v, &w)| (v, w))
            .collect(),
    )
    .expect("ensemble is a valid sample");
    let db = EmpiricalDistribution::from_weighted(
        b.points()
            .iter()
            .zip(b.weights())
            .map(|(&v, &w)| (v, w))
            .collect(),
    )
    .expect("ensemble is a valid sample");
    ks_between(&da, &db)
}

/// The law of the fiberwise-centered normalized Birkhoff sum
/// `(S_n - mu(S_n)) / sqrt(n)` over the ensemble. Centered against the
/// same discrete measure, so the sample mean is zero to rounding.
pub fn wbar_distribution(
    sys: &MapSystem,
    omega: &OmegaSequence,
    obs: &Observable,
    ens: &Ensemble,
    n: usize,
) -> Result<EmpiricalDistribution> {
    if obs.dim() != 1 {
        return Err(Error::Contract(
            "wbar distribution needs a scalar observable".into(),
        ));
    }
    omega.require(n)?;
    if n == 0 {
        return Err(Error::Parameter("horizon must be >= 1".into()));
    }
    let m = ens.len();
    let mut xs: Vec<f64> = ens.points().to_vec();
    let mut sums = vec![0.0f64; m];
    let mut fbuf = vec![0.0f64; m];
    for step in 0..n {
        obs.eval_scalar_into(sys, &xs, &mut fbuf);
        for (s, f) in sums.iter_mut().zip(&fbuf) {
            *s += f;
        }
        sys.advance_points(omega.letters()[step], &mut xs);
    }
    let sqrt_n = (n as f64).sqrt();
    let w = ens.weights();
    let wn: Vec<f64> = sums.iter().map(|s| s / sqrt_n).collect();
    let mean = numeric::weighted_mean(&wn, w);
    EmpiricalDistribution::from_weighted(wn.iter().zip(w).map(|(v, &w)| (v - mean, w)).collect())
}

/// Exact Kolmogorov distance between `N(0, a^2)` and `N(0, b^2)` via the
/// density-crossing point, plus the local Lipschitz ratio
/// `distance / |a - b|`.
#[derive(Clone, Copy, Debug)]
pub struct ScaleDistance {
    pub distance: f64,
    pub lipschitz_ratio: f64,
}

pub fn gaussian_scale_distance(a: f64, b: f64) -> Result<ScaleDistance> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Parameter(format!(
            "scales must be positive, got ({a}, {b})"
        )));
    }
    if a == b {
        return Ok(ScaleDistance {
            distance: 0.0,
            lipschitz_ratio: 0.0,
        });
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    // density crossing: x*^2 = 2 ln(hi/lo) lo^2 hi^2 / (hi^2 - lo^2)
    let x_star = ((2.0 * (hi / lo).ln() * lo * lo * hi * hi) / (hi * hi - lo * lo)).sqrt();
    let distance = (normal_cdf(x_star, lo) - normal_cdf(x_star, hi)).abs();
    Ok(ScaleDistance {
        distance,
        lipschitz_ratio: distance / (a - b).abs(),
    })
}

/// One horizon of the triangle decomposition
/// `d(Wbar_n, sigma Z) <= d(Wbar_n, sigma_n Z) + d(sigma_n Z, sigma Z)`.
#[derive(Clone, Copy, Debug)]
pub struct TriangleRow {
    pub n: usize,
    pub sigma_n: f64,
    /// `d_K(Wbar_n, sigma_n Z)`: distance at the per-horizon scale.
    pub d_finite_scale: f64,
    /// `d_K(sigma_n Z, sigma Z)`: exact Gaussian scale mismatch.
    pub d_scale_gap: f64,
    /// `d_K(Wbar_n, sigma Z)`: distance at the limit scale.
    pub d_total: f64,
    /// Wasserstein-1 counterpart of `d_total`.
    pub w_total: f64,
    /// `d_finite_scale + d_scale_gap - d_total >= 0` up to rounding.
    pub triangle_residual: f64,
}

/// Triangle decomposition along a horizon schedule, for one realization of
/// the driving sequence. A nonpositive limit scale is reported as
/// degenerate rather than divided by.
#[derive(Clone, Debug)]
pub struct TriangleReport {
    pub sigma: f64,
    pub rows: Vec<TriangleRow>,
    pub degenerate: bool,
}

pub fn triangle_report(
    sys: &MapSystem,
    proc: &SelectionProcess,
    obs: &Observable,
    ens: &Ensemble,
    ns: &[usize],
    sigma_sq_estimate: f64,
    seed: u64,
) -> Result<TriangleReport> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(Error::Parameter(
            "schedule must be ascending positive horizons".into(),
        ));
    }
    if sigma_sq_estimate <= 0.0 {
        return Ok(TriangleReport {
            sigma: 0.0,
            rows: vec![],
            degenerate: true,
        });
    }
    let sigma = sigma_sq_estimate.sqrt();
    let horizon = *ns.last().unwrap();
    let omega = proc.sample_omega(horizon, seed, 0);
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let dist = wbar_distribution(sys, &omega, obs, ens, n)?;
        let sigma_n = dist.variance().sqrt();
        let d_total = kolmogorov_distance(&dist, sigma);
        let w_total = wasserstein_distance(&dist, sigma);
        let (d_finite_scale, d_scale_gap) = if sigma_n > 0.0 {
            (
                kolmogorov_distance(&dist, sigma_n),
                gaussian_scale_distance(sigma_n, sigma)?.distance,
            )
        } else {
            (kolmogorov_distance(&dist, 0.0), normal_cdf(0.0, 1.0) - 0.0)
        };
        rows.push(TriangleRow {
            n,
            sigma_n,
            d_finite_scale,
            d_scale_gap,
            d_total,
            w_total,
            triangle_residual: d_finite_scale + d_scale_gap - d_total,
        });
    }
    Ok(TriangleReport {
        sigma,
        rows,
        degenerate: false,
    })
}

/// A quenched covariance matrix with optional per-entry standard errors.
#[derive(Clone, Debug)]
pub struct CovarianceEstimate {
    pub matrix: Vec<Vec<f64>>,
    pub se: Option<Vec<Vec<f64>>>,
}

impl CovarianceEstimate {
    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn max_abs_entry_diff(&self, other: &CovarianceEstimate) -> f64 {
        let mut m: f64 = 0.0;
        for (ra, rb) in self.matrix.iter().zip(&other.matrix) {
            for (a, b) in ra.iter().zip(rb) {
                m = m.max((a - b).abs());
            }
        }
        m
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        numeric::symmetric_eigenvalues(&self.matrix)
    }
}

/// Covariance matrix of the vector `Wbar_n` assembled from scalar quenched
/// variances by polarization:
/// `cov_ab = (l(e_a + e_b) - l(e_a) - l(e_b)) / 2` where `l(v)` is the
/// quenched variance of the contraction `v^T f`.
pub fn covariance_by_polarization(
    sys: &MapSystem,
    omega: &OmegaSequence,
    obs: &Observable,
    ens: &Ensemble,
    n: usize,
) -> Result<CovarianceEstimate> {
    let d = obs.dim();
    let ell = |v: &[f64]| -> Result<f64> {
        quenched::quenched_variance(sys, omega, &obs.contract(v)?, ens, n)
    };
    let mut singles = vec![0.0; d];
    for (alpha, s) in singles.iter_mut().enumerate() {
        let mut v = vec![0.0; d];
        v[alpha] = 1.0;
        *s = ell(&v)?;
    }
    let mut matrix = vec![vec![0.0; d]; d];
    for alpha in 0..d {
        for beta in alpha..d {
            let entry = if alpha == beta {
                singles[alpha]
            } else {
                let mut v = vec![0.0; d];
                v[alpha] = 1.0;
                v[beta] = 1.0;
                0.5 * (ell(&v)? - singles[alpha] - singles[beta])
            };
            matrix[alpha][beta] = entry;
            matrix[beta][alpha] = entry;
        }
    }
    Ok(CovarianceEstimate { matrix, se: None })
}

/// Covariance matrix of the vector `Wbar_n` computed directly from the
/// per-point vector sums; the oracle side of the polarization identity.
/// Sampled ensembles get per-entry standard errors from block splitting.
pub fn covariance_direct(
    sys: &MapSystem,
    omega: &OmegaSequence,
    obs: &Observable,
    ens: &Ensemble,
    n: usize,
) -> Result<CovarianceEstimate> {
    omega.require(n)?;
    if n == 0 {
        return Err(Error::Parameter("horizon must be >= 1".into()));
    }
    let d = obs.dim();
    let m = ens.len();
    let mut xs: Vec<f64> = ens.points().to_vec();
    let mut sums = vec![0.0f64; m * d];
    let mut buf = vec![0.0f64; d];
    for step in 0..n {
        for (j, x) in xs.iter().enumerate() {
            obs.eval(sys, *x, &mut buf);
            for (a, b) in buf.iter().enumerate() {
                sums[j * d + a] += b;
            }
        }
        sys.advance_points(omega.letters()[step], &mut xs);
    }
    let sqrt_n = (n as f64).sqrt();
    let w = ens.weights();
    let mut means = vec![0.0f64; d];
    for (a, mean) in means.iter_mut().enumerate() {
        *mean = numeric::kahan_sum((0..m).map(|j| w[j] * sums[j * d + a] / sqrt_n));
    }
    let cov_of = |sel: &dyn Fn(usize) -> bool| -> Vec<Vec<f64>> {
        // population covariance over the selected points (renormalized)
        let wtot = numeric::kahan_sum((0..m).filter(|j| sel(*j)).map(|j| w[j]));
        let mut mu = vec![0.0f64; d];
        for (a, mu_a) in mu.iter_mut().enumerate() {
            *mu_a = numeric::kahan_sum(
                (0..m)
                    .filter(|j| sel(*j))
                    .map(|j| w[j] * sums[j * d + a] / sqrt_n),
            ) / wtot;
        }
        let mut out = vec![vec![0.0; d]; d];
        for a in 0..d {
            for b in a..d {
                let c = numeric::kahan_sum((0..m).filter(|j| sel(*j)).map(|j| {
                    w[j] * (sums[j * d + a] / sqrt_n - mu[a]) * (sums[j * d + b] / sqrt_n - mu[b])
                })) / wtot;
                out[a][b] = c;
                out[b][a] = c;
            }
        }
        out
    };
    let matrix = cov_of(&|_| true);
    let se = if ens.mode() == crate::maps::EnsembleMode::IidSample && m >= 64 {
        let blocks = 8usize;
        let mut block_mats = Vec::with_capacity(blocks);
        for b in 0..blocks {
            block_mats.push(cov_of(&|j| j % blocks == b));
        }
        let mut se = vec![vec![0.0; d]; d];
        for (a, row) in se.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                let vals: Vec<f64> = block_mats.iter().map(|mt| mt[a][b]).collect();
                let (_, s) = numeric::mean_and_se(&vals);
                *cell = s.unwrap_or(0.0);
            }
        }
        Some(se)
    } else {
        None
    };
    Ok(CovarianceEstimate { matrix, se })
}
