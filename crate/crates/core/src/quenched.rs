//! Per-realization (quenched) statistics of the random composition.
//!
//! Everything here is computed for a fixed driving sequence against the
//! discrete ensemble measure itself, so the algebraic identities between
//! variances and correlation sums are exact up to float rounding;
//! discretization error relative to the continuum initial measure is a
//! separate concern, quantified by the grid horizon cap and sampling
//! standard errors.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maps::{Ensemble, EnsembleMode, MapSystem, Observable, OmegaSequence};
use crate::numeric;
use crate::selection::SelectionProcess;

/// Fitted correlation-decay model `eta(k) = c * k^-psi` (with `eta(0) = c`,
/// the `0^-psi = 1` convention). Serves as the working upper bound on
/// `|mu(centered f_i centered f_j)|` at lag `|i-j|`.
#[derive(Clone, Copy, Debug)]
pub struct EtaModel {
    pub c: f64,
    pub psi: f64,
}

impl EtaModel {
    pub fn eval(&self, k: usize) -> f64 {
        if k == 0 {
            self.c
        } else {
            self.c * (k as f64).powf(-self.psi)
        }
    }

    /// Upper bound on the tail sum `sum_{k >= k_from} eta(k)` via the
    /// integral comparison.
    pub fn tail_sum(&self, k_from: usize) -> f64 {
        if k_from == 0 {
            return self.c + self.tail_sum(1);
        }
        let k = k_from as f64;
        if self.psi <= 1.0 {
            return f64::INFINITY;
        }
        // sum_{j>=k} j^-psi <= k^-psi + int_k^inf x^-psi dx
        self.c * (k.powf(-self.psi) + k.powf(1.0 - self.psi) / (self.psi - 1.0))
    }
}

fn check_scalar(obs: &Observable) -> Result<()> {
    if obs.dim() != 1 {
        return Err(Error::Contract(format!(
            "scalar statistic requested for a dimension-{} observable",
            obs.dim()
        )));
    }
    Ok(())
}

fn check_grid_cap(sys: &MapSystem, ens: &Ensemble, horizon: usize) -> Result<()> {
    if ens.mode() == EnsembleMode::StratifiedGrid {
        let cap = sys.grid_horizon_cap(ens.len());
        if horizon > cap {
            return Err(Error::PrecisionCap {
                n: horizon,
                cap,
                grid: ens.len(),
            });
        }
    }
    Ok(())
}

/// Running Birkhoff sums `S_0(x), ..., S_n(x)` for every ensemble point.
/// Intended for diagnostics on small ensembles; the statistics below stream
/// instead of materializing trajectories.
pub fn birkhoff_sums(
    sys: &MapSystem,
    omega: &OmegaSequence,
    obs: &Observable,
    ens: &Ensemble,
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    check_scalar(obs)?;
    omega.require(n)?;
    let mut out = vec![Vec::with_capacity(n + 1); ens.len()];
    for (p, &x0) in ens.points().iter().enumerate() {
        let mut x = x0;
        let mut s = 0.0;
        out[p].push(0.0);
        for i in 0..n {
            s += obs.eval_scalar(sys, x);
            out[p].push(s);
            x = sys.apply_raw(omega.letters()[i], x);
        }
    }
    Ok(out)
}

/// Values of `f \circ phi(i, omega)` on the ensemble for each requested
/// index, in one streaming pass. `indices` must be sorted ascending.
fn observable_snapshots(
    sys: &MapSystem,
    omega: &OmegaSequence,
    obs: &Observable,
    ens: &Ensemble,
    indices: &[usize],
) -> Result<Vec<Vec<f64>>> {
    check_scalar(obs)?;
    let horizon = indices.last().copied().unwrap_or(0);
    omega.require(horizon)?;
    debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
    let m = ens.len();
    let mut snaps = vec![vec![0.0; m]; indices.len()];
    let mut xs: Vec<f64> = ens.points().to_vec();
    let mut next = 0usize;
    for step in 0..=horizon {
        if next < indices.len() && indices[next] == step {
            obs.eval_scalar_into(sys, &xs, &mut snaps[next]);
            next += 1;
        }
        if step < horizon {
            sys.advance_points(omega.letters()[step], &mut xs);
        }
    }
    Ok(snaps)
}

/// Fiberwise correlation `mu(centered f_i centered f_j)` against the
/// discrete ensemble measure. Symmetric in `(i, j)` by construction. Grid
/// ensembles refuse horizons past the precision cap.
pub fn fiber_correlation(
    sys: &MapSystem,
    omega: &OmegaSequence,
    obs: &Observable,
    ens: &Ensemble,
    i: usize,
    j: usize,
) -> Result<f64> {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    check_grid_cap(sys, ens, b)?;
    let idx: Vec<usize> = if a == b { vec![a] } else { vec![a, b] };
    let snaps = observable_snapshots(sys, omega, obs, ens, &idx)?;
    let fa = &snaps[0];
    let fb = snaps.last().unwrap();
    let w = ens.weights();
    let ma = numeric::weighted_mean(fa, w);
    let mb = numeric::weighted_mean(fb, w);
    // centered two-pass form: constants cancel pointwise, exactly
    Ok(numeric::kahan_sum(
        fa.iter()
            .zip(fb)
            .zip(w)
            .map(|((u, v), w)| w * (u - ma) * (v - mb)),
    ))
}

/// Full symmetric table of `mu(centered f_i centered f_j)`, `0 <= i, j <= h`.
#[derive(Clone, Debug)]
pub struct CorrelationTable {
    pub horizon: usize,
    values: Vec<f64>,
}

impl CorrelationTable {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.horizon + 1) + j]
    }

    /// Largest absolute correlation at each lag `k`, the raw material for
    /// the decay-model fit.
    pub fn max_abs_by_lag(&self) -> Vec<f64> {
        let h = self.horizon;
        let mut out = vec![0.0f64; h + 1];
        for i in 0..=h {
            for j in i..=h {
                let k = j - i;
                out[k] = out[k].max(self.get(i, j).abs());
            }
        }
        out
    }
}

pub fn correlation_table(
    sys: &MapSystem,
    omega: &OmegaSequence,
    obs: &Observable,
    ens: &Ensemble,
    horizon: usize,
) -> Result<CorrelationTable> {
    check_grid_cap(sys, ens, horizon)?;
    let idx: Vec<usize> = (0..=horizon).collect();
    let snaps = observable_snapshots(sys, omega, obs, ens, &idx)?;
    let w = ens.weights();
    let means: Vec<f64> = snaps.iter().map(|f| numeric::weighted_mean(f, w)).collect();
    let mut values = vec![0.0; (horizon + 1) * (horizon + 1)];
    for i in 0..=horizon {
        for j in i..=horizon {
            let c = numeric::kahan_sum(
                snaps[i]
                    .iter()
                    .zip(&snaps[j])
                    .zip(w)
                    .map(|((u, v), w)| w * (u - means[i]) * (v - means[j])),
            );
            values[i * (horizon + 1) + j] = c;
            values[j * (horizon + 1) + i] = c;
        }
    }
    Ok(CorrelationTable { horizon, values })
}

/// The quenched variance `sigma_n^2(omega) = Var_mu(S_n) / n` over the
/// ensemble. Two-pass, hence nonnegative by construction.
pub fn quenched_variance(
    sys: &MapSystem,
    omega: &OmegaSequence,
    obs: &Observable,
    ens: &Ensemble,
    n: usize,
) -> Result<f64> {
    Ok(quenched_variance_schedule(sys, omega, obs, ens, &[n])?[0])
}

/// Quenched variances at several horizons in one streaming pass. The
/// schedule must be ascending and positive.
pub fn quenched_variance_schedule(
    sys: &MapSystem,
    omega: &OmegaSequence,
    obs: &Observable,
    ens: &Ensemble,
    ns: &[usize],
) -> Result<Vec<f64>> {
    check_scalar(obs)?;
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(Error::Parameter(
            "schedule must be ascending positive horizons".into(),
        ));
    }
    let horizon = *ns.last().unwrap();
    omega.require(horizon)?;
    let m = ens.len();
    let w = ens.weights();
    let mut xs: Vec<f64> = ens.points().to_vec();
    let mut sums = vec![0.0f64; m];
    let mut fbuf = vec![0.0f64; m];
    let mut out = Vec::with_capacity(ns.len());
    let mut next = 0usize;
    for step in 0..horizon {
        obs.eval_scalar_into(sys, &xs, &mut fbuf);
        for (s, f) in sums.iter_mut().zip(&fbuf) {
            *s += f;
        }
        sys.advance_points(omega.letters()[step], &mut xs);
        if ns[next] == step + 1 {
            let var = numeric::weighted_variance(&sums, w);
            out.push(var / (step + 1) as f64);
            next += 1;
            if next == ns.len() {
                break;
            }
        }
    }
    Ok(out)
}

/// Truncated correlation sum `v_i^(K) = sum_{j=i}^{i+K} (2 - delta_ij)
/// mu(centered f_i centered f_j)`, with the model tail bound and a list of
/// lags whose increments exceeded the model envelope.
#[derive(Clone, Debug)]
pub struct VTruncated {
    pub value: f64,
    pub tail_bound: Option<f64>,
    pub flagged_lags: Vec<usize>,
}

pub fn v_truncated(
    sys: &MapSystem,
    omega: &OmegaSequence,
    obs: &Observable,
    ens: &Ensemble,
    i: usize,
    k_cut: usize,
    eta: Option<&EtaModel>,
) -> Result<VTruncated> {
    check_grid_cap(sys, ens, i + k_cut)?;
    let idx: Vec<usize> = (i..=i + k_cut).collect();
    let snaps = observable_snapshots(sys, omega, obs, ens, &idx)?;
    let w = ens.weights();
    let means: Vec<f64> = snaps.iter().map(|f| numeric::weighted_mean(f, w)).collect();
    let mut value = 0.0;
    let mut flagged = Vec::new();
    for k in 0..=k_cut {
        let corr = numeric::kahan_sum(
            snaps[0]
                .iter()
                .zip(&snaps[k])
                .zip(w)
                .map(|((u, v), w)| w * (u - means[0]) * (v - means[k])),
        );
        let weight = if k == 0 { 1.0 } else { 2.0 };
        value += weight * corr;
        if let Some(model) = eta {
            if corr.abs() > 2.0 * model.eval(k) + 1e-12 {
                flagged.push(k);
            }
        }
    }
    let tail_bound = eta.map(|m| 2.0 * m.tail_sum(k_cut + 1));
    Ok(VTruncated {
        value,
        tail_bound,
        flagged_lags: flagged,
    })
}

/// Monte-Carlo mean of the quenched variance over driving realizations.
#[derive(Clone, Debug)]
pub struct MeanQuenchedVariance {
    pub mean: f64,
    /// Standard error of the mean; `None` (flagged degenerate) when fewer
    /// than two realizations were used.
    pub se: Option<f64>,
    /// Quantiles (q10, median, q90) of the spread `|sigma_n^2 - mean|`.
    pub spread: (f64, f64, f64),
    pub per_realization: Vec<f64>,
}

pub fn mean_quenched_variance(
    sys: &MapSystem,
    proc: &SelectionProcess,
    obs: &Observable,
    ens: &Ensemble,
    n: usize,
    n_realizations: usize,
    seed: u64,
) -> Result<MeanQuenchedVariance> {
    if n_realizations == 0 {
        return Err(Error::Parameter("need at least one realization".into()));
    }
    let per: Result<Vec<f64>> = (0..n_realizations)
        .into_par_iter()
        .map(|r| {
            let omega = proc.sample_omega(n, seed, r as u64);
            quenched_variance(sys, &omega, obs, ens, n)
        })
        .collect();
    let per = per?;
    let (mean, se) = numeric::mean_and_se(&per);
    let devs: Vec<f64> = per.iter().map(|v| (v - mean).abs()).collect();
    let spread = (
        numeric::quantile(&devs, 0.1),
        numeric::quantile(&devs, 0.5),
        numeric::quantile(&devs, 0.9),
    );
    Ok(MeanQuenchedVariance {
        mean,
        se,
        spread,
        per_realization: per,
    })
}

/// The three variance components of the fiberwise-centering identity,
/// computed from shared samples so the identity is exact:
/// `mean_quenched = pooled - centering`.
#[derive(Clone, Copy, Debug)]
pub struct VarianceIdentity {
    /// `Var_{P (x) mu} W_n` over the pooled (realization, point) cloud.
    pub pooled: f64,
    /// `Var_P mu(W_n)`: variance across realizations of the fiber mean.
    pub centering: f64,
    /// `E sigma_n^2`: mean across realizations of the fiber variance.
    pub mean_quenched: f64,
    /// `mean_quenched - (pooled - centering)`; zero up to rounding.
    pub residual: f64,
}

pub fn variance_identity_report(
    sys: &MapSystem,
    proc: &SelectionProcess,
    obs: &Observable,
    ens: &Ensemble,
    n: usize,
    n_realizations: usize,
    seed: u64,
) -> Result<VarianceIdentity> {
    check_scalar(obs)?;
    if n_realizations == 0 || n == 0 {
        return Err(Error::Parameter(
            "need n >= 1 and at least one realization".into(),
        ));
    }
    let stats: Result<Vec<(f64, f64)>> = (0..n_realizations)
        .into_par_iter()
        .map(|r| {
            let omega = proc.sample_omega(n, seed, r as u64);
            // fiber mean and second moment of W_n = S_n / sqrt(n)
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
            let mean: f64 = sums.iter().zip(w).map(|(s, w)| w * s / sqrt_n).sum();
            let second: f64 = sums
                .iter()
                .zip(w)
                .map(|(s, w)| w * (s / sqrt_n) * (s / sqrt_n))
                .sum();
            Ok((mean, second))
        })
        .collect();
    let stats = stats?;
    let rf = n_realizations as f64;
    let e_mean: f64 = stats.iter().map(|(m, _)| m).sum::<f64>() / rf;
    let e_second: f64 = stats.iter().map(|(_, s)| s).sum::<f64>() / rf;
    let e_mean_sq: f64 = stats.iter().map(|(m, _)| m * m).sum::<f64>() / rf;
    let pooled = e_second - e_mean * e_mean;
    let centering = e_mean_sq - e_mean * e_mean;
    let mean_quenched: f64 = stats.iter().map(|(m, s)| s - m * m).sum::<f64>() / rf;
    let residual = mean_quenched - (pooled - centering);
    Ok(VarianceIdentity {
        pooled,
        centering,
        mean_quenched,
        residual,
    })
}

/// One row of the fluctuation-decay diagnostic.
#[derive(Clone, Copy, Debug)]
pub struct FluctRow {
    pub n: usize,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

/// Decay of `|sigma_n^2(omega) - E sigma_n^2|` across a geometric horizon
/// schedule, with a log-log fit of the median when the medians are positive.
#[derive(Clone, Debug)]
pub struct FluctuationDecay {
    pub rows: Vec<FluctRow>,
    pub fit: Option<numeric::LineFit>,
    pub mean_by_n: Vec<f64>,
}

pub fn fluctuation_decay(
    sys: &MapSystem,
    proc: &SelectionProcess,
    obs: &Observable,
    ens: &Ensemble,
    ns: &[usize],
    n_realizations: usize,
    seed: u64,
) -> Result<FluctuationDecay> {
    if ns.len() < 3 {
        return Err(Error::Fit(
            "fluctuation decay needs at least 3 schedule points".into(),
        ));
    }
    if n_realizations < 2 {
        return Err(Error::Parameter("need at least two realizations".into()));
    }
    let horizon = *ns.last().unwrap();
    let per: Result<Vec<Vec<f64>>> = (0..n_realizations)
        .into_par_iter()
        .map(|r| {
            let omega = proc.sample_omega(horizon, seed, r as u64);
            quenched_variance_schedule(sys, &omega, obs, ens, ns)
        })
        .collect();
    let per = per?;
    let mut rows = Vec::with_capacity(ns.len());
    let mut mean_by_n = Vec::with_capacity(ns.len());
    for (k, &n) in ns.iter().enumerate() {
        let vals: Vec<f64> = per.iter().map(|row| row[k]).collect();
        let mean = numeric::kahan_sum(vals.iter().copied()) / vals.len() as f64;
        let devs: Vec<f64> = vals.iter().map(|v| (v - mean).abs()).collect();
        rows.push(FluctRow {
            n,
            median: numeric::quantile(&devs, 0.5),
            q10: numeric::quantile(&devs, 0.1),
            q90: numeric::quantile(&devs, 0.9),
        });
        mean_by_n.push(mean);
    }
    let fit = if rows.iter().all(|r| r.median > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.median.ln()).collect();
        numeric::least_squares(&xs, &ys).ok()
    } else {
        None
    };
    Ok(FluctuationDecay {
        rows,
        fit,
        mean_by_n,
    })
}

/// Fit the polynomial correlation-decay envelope from per-lag maxima of
/// `|correlation|`. The exponent is the log-log slope over lags `>= 1`
/// (correlations below the float floor are clamped) and the constant lifts
/// the model to majorize every data point in the window.
pub fn fit_eta(corr_by_lag: &[f64]) -> Result<EtaModel> {
    if corr_by_lag.len() < 3 {
        return Err(Error::Fit("eta fit needs lags 0..=2 at least".into()));
    }
    const FLOOR: f64 = 1e-13;
    let lags: Vec<f64> = (1..corr_by_lag.len()).map(|k| k as f64).collect();
    let logs: Vec<f64> = corr_by_lag[1..]
        .iter()
        .map(|c| c.abs().max(FLOOR).ln())
        .collect();
    let lxs: Vec<f64> = lags.iter().map(|k| k.ln()).collect();
    let fit = numeric::least_squares(&lxs, &logs)?;
    let psi = (-fit.slope).max(0.0);
    let mut c: f64 = corr_by_lag[0].abs();
    for (k, corr) in corr_by_lag.iter().enumerate().skip(1) {
        c = c.max(corr.abs() * (k as f64).powf(psi));
    }
    Ok(EtaModel {
        c: c.max(FLOOR),
        psi,
    })
}
