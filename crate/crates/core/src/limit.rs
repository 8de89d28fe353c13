//! The non-random limit variance and its diagnostics.
//!
//! Three routes estimate the same number: the term-by-term limit series
//! over annealed correlations (`vk-series`), the halved autocovariance sum
//! of the pair difference observable along the doubled skew product
//! (`doubled-green-kubo`), and, for stationary driving, the difference of
//! the classical Green-Kubo series and the centering series
//! (`classical-gk-split`). The invariant pair measure is never built:
//! every integral against it is realized as a long-run pushforward of the
//! stationary driving law times the product initial measure, with burn-in
//! playing the role of the limit index.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maps::{Ensemble, MapSystem, Observable, OmegaSequence};
use crate::numeric;
use crate::quenched::EtaModel;
use crate::rates;
use crate::selection::SelectionProcess;

/// Which estimator produced a limit-variance number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    VkSeries,
    DoubledGreenKubo,
    ClassicalGkSplit,
}

impl Route {
    pub fn name(&self) -> &'static str {
        match self {
            Route::VkSeries => "vk-series",
            Route::DoubledGreenKubo => "doubled-green-kubo",
            Route::ClassicalGkSplit => "classical-gk-split",
        }
    }
}

/// A limit-variance estimate with its per-term decomposition.
#[derive(Clone, Debug)]
pub struct LimitVarianceEstimate {
    pub route: Route,
    pub sigma_sq: f64,
    pub standard_error: f64,
    /// `(k, term, se)` for each summed lag.
    pub per_k: Vec<(usize, f64, f64)>,
    pub truncation_k: usize,
    pub burn_in: usize,
    /// Model bound on the discarded tail, when an eta model was attached.
    pub tail_bound: Option<f64>,
    /// Estimate recomputed at half the burn-in depth (sensitivity check).
    pub sigma_sq_half_burn: f64,
}

/// One annealed correlation term of the limit series.
#[derive(Clone, Copy, Debug)]
pub struct VkEstimate {
    pub k: usize,
    pub value: f64,
    pub se: f64,
    /// Value at half the burn-in depth.
    pub value_half_burn: f64,
}

/// Truncation lag for the limit series: matches the bound-balancing choice
/// `K ~ n^(1/psi)` (`zeta > 1`), `(n / log n)^(1/psi)` (`zeta = 1`),
/// `n^(zeta/psi)` (`0 < zeta < 1`), clamped to `[1, n]`.
pub fn choose_truncation_k(n: usize, psi: f64, zeta: f64) -> Result<usize> {
    if !(psi > 1.0) {
        return Err(Error::Parameter(format!("psi = {psi} must exceed 1")));
    }
    if !(zeta > 0.0) {
        return Err(Error::Parameter(format!("zeta = {zeta} must be positive")));
    }
    if n < 2 {
        return Err(Error::Parameter("truncation choice needs n >= 2".into()));
    }
    let nf = n as f64;
    let raw = if (zeta - 1.0).abs() < 1e-12 {
        (nf / nf.ln()).powf(1.0 / psi)
    } else if zeta > 1.0 {
        nf.powf(1.0 / psi)
    } else {
        nf.powf(zeta / psi)
    };
    Ok((raw.round() as usize).clamp(1, n))
}

/// Per-realization fiber moments `mu(f_b f_{b+k})`, `mu(f_b)`,
/// `mu(f_{b+k})` for `b` in {burn, burn/2} and `k <= k_max`, in one walk.
struct FiberMoments {
    /// `[b_index][k]` with b_index 0 = full burn-in, 1 = half burn-in.
    cross: [Vec<f64>; 2],
    mean_at_b: [f64; 2],
    means_after_b: [Vec<f64>; 2],
}

fn fiber_moments(
    sys: &MapSystem,
    omega: &OmegaSequence,
    obs: &Observable,
    ens: &Ensemble,
    burn: usize,
    k_max: usize,
) -> Result<FiberMoments> {
    let half = burn / 2;
    let horizon = burn + k_max;
    omega.require(horizon)?;
    let w = ens.weights();
    let m = ens.len();
    let mut xs: Vec<f64> = ens.points().to_vec();
    let mut f_half: Vec<f64> = Vec::new();
    let mut f_full: Vec<f64> = Vec::new();
    let mut cross = [vec![0.0; k_max + 1], vec![0.0; k_max + 1]];
    let mut mean_at_b = [0.0; 2];
    let mut means_after_b = [vec![0.0; k_max + 1], vec![0.0; k_max + 1]];
    let mut fs = vec![0.0; m];
    for step in 0..=horizon {
        if step >= half {
            obs.eval_scalar_into(sys, &xs, &mut fs);
        }
        if step == half {
            f_half = fs.clone();
            mean_at_b[1] = numeric::weighted_mean(&f_half, w);
        }
        if step == burn {
            f_full = fs.clone();
            mean_at_b[0] = numeric::weighted_mean(&f_full, w);
        }
        if step >= half && step <= half + k_max {
            let k = step - half;
            cross[1][k] =
                numeric::kahan_sum(f_half.iter().zip(&fs).zip(w).map(|((a, b), w)| w * a * b));
            means_after_b[1][k] = numeric::weighted_mean(&fs, w);
        }
        if step >= burn {
            let k = step - burn;
            cross[0][k] =
                numeric::kahan_sum(f_full.iter().zip(&fs).zip(w).map(|((a, b), w)| w * a * b));
            means_after_b[0][k] = numeric::weighted_mean(&fs, w);
        }
        if step < horizon {
            sys.advance_points(omega.letters()[step], &mut xs);
        }
    }
    Ok(FiberMoments {
        cross,
        mean_at_b,
        means_after_b,
    })
}

/// Estimate a single limit-series term
/// `V_k = (2 - delta_k0) lim_r E[ mu(f_r f_{r+k}) - mu(f_r) mu(f_{r+k}) ]`,
/// with the limit realized by a stationary (or burn-in-washed) start at
/// depth `burn_in`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_vk(
    sys: &MapSystem,
    proc: &SelectionProcess,
    obs: &Observable,
    ens: &Ensemble,
    k: usize,
    burn_in: usize,
    n_realizations: usize,
    seed: u64,
) -> Result<VkEstimate> {
    if n_realizations < 2 {
        return Err(Error::Parameter("need at least two realizations".into()));
    }
    let weight = if k == 0 { 1.0 } else { 2.0 };
    let per: Result<Vec<(f64, f64)>> = (0..n_realizations)
        .into_par_iter()
        .map(|r| {
            let omega = proc.sample_omega(burn_in + k, seed, r as u64);
            let fm = fiber_moments(sys, &omega, obs, ens, burn_in, k)?;
            let full = fm.cross[0][k] - fm.mean_at_b[0] * fm.means_after_b[0][k];
            let half = fm.cross[1][k] - fm.mean_at_b[1] * fm.means_after_b[1][k];
            Ok((weight * full, weight * half))
        })
        .collect();
    let per = per?;
    let fulls: Vec<f64> = per.iter().map(|(f, _)| *f).collect();
    let halves: Vec<f64> = per.iter().map(|(_, h)| *h).collect();
    let (value, se) = numeric::mean_and_se(&fulls);
    let (value_half, _) = numeric::mean_and_se(&halves);
    Ok(VkEstimate {
        k,
        value,
        se: se.unwrap_or(0.0),
        value_half_burn: value_half,
    })
}

/// The limit series `sigma^2 = sum_k V_k`, truncated per the bound-model
/// choice, with the tail bound attached. Burn-in defaults to twice the
/// truncation lag, so truncation and burn-in errors ride the same decay
/// scale.
#[allow(clippy::too_many_arguments)]
pub fn sigma_sq_series(
    sys: &MapSystem,
    proc: &SelectionProcess,
    obs: &Observable,
    ens: &Ensemble,
    n_for_k: usize,
    model: &rates::BoundModel,
    eta: Option<&EtaModel>,
    n_realizations: usize,
    seed: u64,
) -> Result<LimitVarianceEstimate> {
    let k_max = choose_truncation_k(n_for_k, model.psi, model.zeta)?;
    let burn = 2 * k_max;
    sigma_sq_series_at(sys, proc, obs, ens, k_max, burn, eta, n_realizations, seed)
}

/// The limit series with explicit truncation and burn-in.
#[allow(clippy::too_many_arguments)]
pub fn sigma_sq_series_at(
    sys: &MapSystem,
    proc: &SelectionProcess,
    obs: &Observable,
    ens: &Ensemble,
    k_max: usize,
    burn: usize,
    eta: Option<&EtaModel>,
    n_realizations: usize,
    seed: u64,
) -> Result<LimitVarianceEstimate> {
    if n_realizations < 2 {
        return Err(Error::Parameter("need at least two realizations".into()));
    }
    let per: Result<Vec<(Vec<f64>, Vec<f64>)>> = (0..n_realizations)
        .into_par_iter()
        .map(|r| {
            let omega = proc.sample_omega(burn + k_max, seed, r as u64);
            let fm = fiber_moments(sys, &omega, obs, ens, burn, k_max)?;
            let mut full = Vec::with_capacity(k_max + 1);
            let mut half = Vec::with_capacity(k_max + 1);
            for k in 0..=k_max {
                let weight = if k == 0 { 1.0 } else { 2.0 };
                full.push(weight * (fm.cross[0][k] - fm.mean_at_b[0] * fm.means_after_b[0][k]));
                half.push(weight * (fm.cross[1][k] - fm.mean_at_b[1] * fm.means_after_b[1][k]));
            }
            Ok((full, half))
        })
        .collect();
    let per = per?;
    let mut per_k = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let vals: Vec<f64> = per.iter().map(|(f, _)| f[k]).collect();
        let (v, se) = numeric::mean_and_se(&vals);
        per_k.push((k, v, se.unwrap_or(0.0)));
    }
    // joint se from the per-realization series sums
    let sums: Vec<f64> = per
        .iter()
        .map(|(f, _)| numeric::kahan_sum(f.iter().copied()))
        .collect();
    let (sigma_sq, se) = numeric::mean_and_se(&sums);
    let half_sums: Vec<f64> = per
        .iter()
        .map(|(_, h)| numeric::kahan_sum(h.iter().copied()))
        .collect();
    let (sigma_half, _) = numeric::mean_and_se(&half_sums);
    Ok(LimitVarianceEstimate {
        route: Route::VkSeries,
        sigma_sq,
        standard_error: se.unwrap_or(0.0),
        per_k,
        truncation_k: k_max,
        burn_in: burn,
        tail_bound: eta.map(|m| 2.0 * m.tail_sum(k_max + 1)),
        sigma_sq_half_burn: sigma_half,
    })
}

/// How a paired ensemble was assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairProvenance {
    /// Full product of a base ensemble with itself.
    Product,
    /// Independent coupled draws from the product measure.
    CoupledSamples,
}

/// A weighted cloud of pairs `(x, y)` representing the product initial
/// measure on the doubled state space.
#[derive(Clone, Debug)]
pub struct DoubledEnsemble {
    xs: Vec<f64>,
    ys: Vec<f64>,
    weights: Vec<f64>,
    provenance: PairProvenance,
}

impl DoubledEnsemble {
    /// The full product `mu (x) mu` of a base ensemble with itself
    /// (quadratic in the base size; use moderate grids).
    pub fn product(base: &Ensemble) -> Self {
        let m = base.len();
        let mut xs = Vec::with_capacity(m * m);
        let mut ys = Vec::with_capacity(m * m);
        let mut weights = Vec::with_capacity(m * m);
        for (i, &x) in base.points().iter().enumerate() {
            for (j, &y) in base.points().iter().enumerate() {
                xs.push(x);
                ys.push(y);
                weights.push(base.weights()[i] * base.weights()[j]);
            }
        }
        DoubledEnsemble {
            xs,
            ys,
            weights,
            provenance: PairProvenance::Product,
        }
    }

    /// Independent pairs drawn from `mu (x) mu` with uniform weights.
    pub fn coupled_uniform(m: usize, rng: &crate::rng::StreamRng) -> Self {
        let xs = (0..m).map(|j| rng.f64_at(2 * j as u64)).collect();
        let ys = (0..m).map(|j| rng.f64_at(2 * j as u64 + 1)).collect();
        DoubledEnsemble {
            xs,
            ys,
            weights: vec![1.0 / m as f64; m],
            provenance: PairProvenance::CoupledSamples,
        }
    }

    pub fn swapped(&self) -> Self {
        DoubledEnsemble {
            xs: self.ys.clone(),
            ys: self.xs.clone(),
            weights: self.weights.clone(),
            provenance: self.provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn provenance(&self) -> PairProvenance {
        self.provenance
    }
}

/// `int Z_n^2 d(mu x mu)` where `Z_n(x, y) = S_n(x) - S_n(y)`, evaluated
/// directly over the paired ensemble. Requires a full product ensemble so
/// the identity `= 2 n sigma_n^2` is meaningful.
pub fn z_variance(
    sys: &MapSystem,
    omega: &OmegaSequence,
    obs: &Observable,
    pairs: &DoubledEnsemble,
    n: usize,
) -> Result<f64> {
    if pairs.provenance != PairProvenance::Product {
        return Err(Error::Contract(
            "z_variance needs a full product paired ensemble".into(),
        ));
    }
    omega.require(n)?;
    let m = pairs.len();
    let mut xs = pairs.xs.clone();
    let mut ys = pairs.ys.clone();
    let mut sx = vec![0.0f64; m];
    let mut sy = vec![0.0f64; m];
    let mut fbuf = vec![0.0f64; m];
    for step in 0..n {
        let l = omega.letters()[step];
        obs.eval_scalar_into(sys, &xs, &mut fbuf);
        for (s, f) in sx.iter_mut().zip(&fbuf) {
            *s += f;
        }
        obs.eval_scalar_into(sys, &ys, &mut fbuf);
        for (s, f) in sy.iter_mut().zip(&fbuf) {
            *s += f;
        }
        sys.advance_points(l, &mut xs);
        sys.advance_points(l, &mut ys);
    }
    Ok(numeric::kahan_sum((0..m).map(|j| {
        let z = sx[j] - sy[j];
        pairs.weights[j] * z * z
    })))
}

/// The doubled-system autocovariance estimate of the limit variance: one
/// half of the weighted sum of `int F . F o (Phi^(2))^k` along the pair
/// cocycle, where `F(x, y) = f(x) - f(y)`, with the invariant pair measure
/// approximated by pushing the product ensemble through `burn_in` steps.
#[allow(clippy::too_many_arguments)]
pub fn green_kubo_doubled(
    sys: &MapSystem,
    proc: &SelectionProcess,
    obs: &Observable,
    pairs: &DoubledEnsemble,
    k_max: usize,
    burn_in: usize,
    n_realizations: usize,
    seed: u64,
    eta: Option<&EtaModel>,
) -> Result<LimitVarianceEstimate> {
    if n_realizations < 2 {
        return Err(Error::Parameter("need at least two realizations".into()));
    }
    let half = burn_in / 2;
    let m = pairs.len();
    let w = &pairs.weights;
    let per: Result<Vec<(Vec<f64>, Vec<f64>, f64)>> = (0..n_realizations)
        .into_par_iter()
        .map(|r| {
            let omega = proc.sample_omega(burn_in + k_max, seed, r as u64);
            let mut xs = pairs.xs.clone();
            let mut ys = pairs.ys.clone();
            let mut f_half: Vec<f64> = Vec::new();
            let mut f_full: Vec<f64> = Vec::new();
            let mut cov_full = vec![0.0; k_max + 1];
            let mut cov_half = vec![0.0; k_max + 1];
            let mut fbar = 0.0;
            let mut fs = vec![0.0; m];
            let mut gbuf = vec![0.0; m];
            for step in 0..=(burn_in + k_max) {
                if step >= half {
                    obs.eval_scalar_into(sys, &xs, &mut fs);
                    obs.eval_scalar_into(sys, &ys, &mut gbuf);
                    for (f, g) in fs.iter_mut().zip(&gbuf) {
                        *f -= g;
                    }
                }
                if step == half {
                    f_half = fs.clone();
                }
                if step == burn_in {
                    f_full = fs.clone();
                    fbar = numeric::weighted_mean(&f_full, w);
                }
                if step >= half && step <= half + k_max {
                    let k = step - half;
                    cov_half[k] = numeric::kahan_sum(
                        f_half.iter().zip(&fs).zip(w).map(|((a, b), w)| w * a * b),
                    );
                }
                if step >= burn_in {
                    let k = step - burn_in;
                    cov_full[k] = numeric::kahan_sum(
                        f_full.iter().zip(&fs).zip(w).map(|((a, b), w)| w * a * b),
                    );
                }
                if step < burn_in + k_max {
                    let l = omega.letters()[step];
                    sys.advance_points(l, &mut xs);
                    sys.advance_points(l, &mut ys);
                }
            }
            Ok((cov_full, cov_half, fbar))
        })
        .collect();
    let per = per?;
    let mut per_k = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let vals: Vec<f64> = per.iter().map(|(f, _, _)| f[k]).collect();
        let (v, se) = numeric::mean_and_se(&vals);
        per_k.push((k, v, se.unwrap_or(0.0)));
    }
    // centredness check on F under the approximated pair measure
    let fbars: Vec<f64> = per.iter().map(|(_, _, b)| *b).collect();
    let (fbar_mean, fbar_se) = numeric::mean_and_se(&fbars);
    if fbar_mean.abs() > 3.0 * fbar_se.unwrap_or(0.0) + 1e-9 {
        return Err(Error::Contract(format!(
            "pair observable not centered under the approximated pair measure: {fbar_mean}"
        )));
    }
    if let Some(model) = eta {
        for &(k, v, se) in &per_k {
            if v.abs() > 2.0 * model.eval(k) + 3.0 * se + 1e-9 {
                return Err(Error::Contract(format!(
                    "autocovariance at lag {k} exceeds the model envelope: {v}"
                )));
            }
        }
    }
    let halved = |cov: &[f64]| -> f64 {
        0.5 * numeric::kahan_sum(
            cov.iter()
                .enumerate()
                .map(|(k, c)| if k == 0 { *c } else { 2.0 * c }),
        )
    };
    let sums: Vec<f64> = per.iter().map(|(f, _, _)| halved(f)).collect();
    let (sigma_sq, se) = numeric::mean_and_se(&sums);
    let half_sums: Vec<f64> = per.iter().map(|(_, h, _)| halved(h)).collect();
    let (sigma_half, _) = numeric::mean_and_se(&half_sums);
    Ok(LimitVarianceEstimate {
        route: Route::DoubledGreenKubo,
        sigma_sq,
        standard_error: se.unwrap_or(0.0),
        per_k,
        truncation_k: k_max,
        burn_in,
        tail_bound: eta.map(|m| 2.0 * m.tail_sum(k_max + 1)),
        sigma_sq_half_burn: sigma_half,
    })
}

/// The two stationary-driving series whose difference is the limit
/// variance: the classical Green-Kubo series of the pooled observable and
/// the centering series of the fiber means.
#[derive(Clone, Debug)]
pub struct GreenKuboSplit {
    /// Series estimate of `lim Var_{P (x) mu} W_n`.
    pub total: f64,
    /// Series estimate of `lim Var_P mu(W_n)`.
    pub centering: f64,
    /// `total - centering`, the limit variance.
    pub sigma_sq: f64,
    pub standard_error: f64,
    pub per_k: Vec<(usize, f64, f64)>,
    pub truncation_k: usize,
    pub burn_in: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn classical_green_kubo_split(
    sys: &MapSystem,
    proc: &SelectionProcess,
    obs: &Observable,
    ens: &Ensemble,
    k_max: usize,
    burn_in: usize,
    n_realizations: usize,
    seed: u64,
) -> Result<GreenKuboSplit> {
    if !proc.is_stationary() {
        return Err(Error::Unsupported(
            "the split into classical Green-Kubo and centering series assumes stationary driving"
                .into(),
        ));
    }
    if n_realizations < 32 {
        return Err(Error::Parameter(
            "need at least 32 realizations for batch errors".into(),
        ));
    }
    let per: Result<Vec<FiberMoments>> = (0..n_realizations)
        .into_par_iter()
        .map(|r| {
            let omega = proc.sample_omega(burn_in + k_max, seed, r as u64);
            fiber_moments(sys, &omega, obs, ens, burn_in, k_max)
        })
        .collect();
    let per = per?;
    // batch means over realizations: the series terms are nonlinear in the
    // realization average (products of means), so per-batch statistics give
    // the honest joint error
    let n_batches = 16usize;
    let per_batch = n_realizations / n_batches;
    let mut batch_total = Vec::with_capacity(n_batches);
    let mut batch_centering = Vec::with_capacity(n_batches);
    let batch_series = |chunk: &[FiberMoments]| -> (f64, f64) {
        let rf = chunk.len() as f64;
        let e_mean_b: f64 = numeric::kahan_sum(chunk.iter().map(|fm| fm.mean_at_b[0])) / rf;
        let mut total = 0.0;
        let mut centering = 0.0;
        for k in 0..=k_max {
            let weight = if k == 0 { 1.0 } else { 2.0 };
            let e_cross: f64 = numeric::kahan_sum(chunk.iter().map(|fm| fm.cross[0][k])) / rf;
            let e_prod: f64 = numeric::kahan_sum(
                chunk
                    .iter()
                    .map(|fm| fm.mean_at_b[0] * fm.means_after_b[0][k]),
            ) / rf;
            let e_mean_bk: f64 =
                numeric::kahan_sum(chunk.iter().map(|fm| fm.means_after_b[0][k])) / rf;
            total += weight * (e_cross - e_mean_b * e_mean_bk);
            centering += weight * (e_prod - e_mean_b * e_mean_bk);
        }
        (total, centering)
    };
    for b in 0..n_batches {
        let chunk = &per[b * per_batch..(b + 1) * per_batch];
        let (t, c) = batch_series(chunk);
        batch_total.push(t);
        batch_centering.push(c);
    }
    let diffs: Vec<f64> = batch_total
        .iter()
        .zip(&batch_centering)
        .map(|(t, c)| t - c)
        .collect();
    let (_, se) = numeric::mean_and_se(&diffs);
    let (full_total, full_centering) = batch_series(&per[..n_batches * per_batch]);
    // per-k decomposition of the total series on the full sample
    let rf = (n_batches * per_batch) as f64;
    let mut per_k = Vec::with_capacity(k_max + 1);
    let e_mean_b: f64 = numeric::kahan_sum(
        per[..n_batches * per_batch]
            .iter()
            .map(|fm| fm.mean_at_b[0]),
    ) / rf;
    for k in 0..=k_max {
        let weight = if k == 0 { 1.0 } else { 2.0 };
        let e_cross: f64 =
            numeric::kahan_sum(per[..n_batches * per_batch].iter().map(|fm| fm.cross[0][k])) / rf;
        let e_mean_bk: f64 = numeric::kahan_sum(
            per[..n_batches * per_batch]
                .iter()
                .map(|fm| fm.means_after_b[0][k]),
        ) / rf;
        per_k.push((k, weight * (e_cross - e_mean_b * e_mean_bk), 0.0));
    }
    Ok(GreenKuboSplit {
        total: full_total,
        centering: full_centering,
        sigma_sq: full_total - full_centering,
        standard_error: se.unwrap_or(0.0),
        per_k,
        truncation_k: k_max,
        burn_in,
    })
}

/// Verdict of the variance-positivity diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Positive,
    Degenerate,
    Inconclusive,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Positive => "positive",
            Verdict::Degenerate => "degenerate",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Growth diagnostics of `E Var_mu(S_n)` against the two testable
/// positivity conditions: asymptotically linear growth (variance positive)
/// versus growth no faster than `n^(1/psi)` (variance degenerate).
#[derive(Clone, Debug)]
pub struct PositivityReport {
    pub verdict: Verdict,
    /// Fitted growth exponent of `E Var_mu(S_n)` in `n`, when defined.
    pub exponent: Option<f64>,
    pub exponent_ci95: Option<f64>,
    /// Linear-growth constant `E Var_mu(S_n) / n` over the tail of the
    /// schedule, with its standard error.
    pub c_linear: f64,
    pub c_se: f64,
}

/// Classify `sigma^2 > 0` from growth data `(n, E Var_mu(S_n))`.
pub fn positivity_check(growth: &[(usize, f64)], psi: f64, slack: f64) -> Result<PositivityReport> {
    if growth.len() < 4 {
        return Err(Error::Parameter(
            "positivity check needs at least 4 scales".into(),
        ));
    }
    if !(psi > 1.0) {
        return Err(Error::Parameter(format!("psi = {psi} must exceed 1")));
    }
    let tail = growth.len() / 2;
    let ratios: Vec<f64> = growth[tail..].iter().map(|(n, v)| v / *n as f64).collect();
    let (c_linear, c_se) = numeric::mean_and_se(&ratios);
    let c_se = c_se.unwrap_or(0.0);
    // all-zero variances: flat and degenerate without a log fit
    let v_max = growth.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    if v_max < 1e-300 {
        return Ok(PositivityReport {
            verdict: Verdict::Degenerate,
            exponent: None,
            exponent_ci95: None,
            c_linear: 0.0,
            c_se: 0.0,
        });
    }
    let series: Vec<(f64, f64)> = growth
        .iter()
        .map(|(n, v)| (*n as f64, v.max(1e-300)))
        .collect();
    let fit = rates::fit_rate(&series)?;
    let exponent = fit.slope;
    let verdict = if exponent >= 1.0 - slack && c_linear > 3.0 * c_se {
        Verdict::Positive
    } else if exponent <= 1.0 / psi + slack {
        Verdict::Degenerate
    } else {
        Verdict::Inconclusive
    };
    Ok(PositivityReport {
        verdict,
        exponent: Some(exponent),
        exponent_ci95: Some(fit.ci95),
        c_linear,
        c_se,
    })
}

/// Pushforward of the ensemble along a finite history
/// `(w_{-n+1}, ..., w_0)`: the most recent history letter is applied last,
/// so deeper `n` prepends older letters. Approximates the measure arriving
/// from the infinitely distant past.
pub fn past_pushforward(
    sys: &MapSystem,
    history: &[f64],
    ens: &Ensemble,
    n: usize,
) -> Result<Ensemble> {
    if n > history.len() {
        return Err(Error::InsufficientRandomness {
            needed: n,
            available: history.len(),
        });
    }
    let slice = &history[history.len() - n..];
    let omega = OmegaSequence::new(
        slice.to_vec(),
        crate::maps::Provenance {
            process: "history".into(),
            seed: 0,
            realization: 0,
        },
    );
    sys.push_ensemble(&omega, n, ens)
}

/// Cauchy-sequence diagnostic for the past pushforwards: the empirical-CDF
/// distance between consecutive depth approximants.
pub fn past_pushforward_cauchy(
    sys: &MapSystem,
    history: &[f64],
    ens: &Ensemble,
    depths: &[usize],
) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    let mut prev: Option<Ensemble> = None;
    for &n in depths {
        let cur = past_pushforward(sys, history, ens, n)?;
        if let Some(p) = &prev {
            out.push((n, crate::clt::ks_between_ensembles(p, &cur)));
        }
        prev = Some(cur);
    }
    Ok(out)
}
