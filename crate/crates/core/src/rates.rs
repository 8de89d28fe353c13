//! Analytic convergence-rate machinery.
//!
//! Encodes the case tables that predict how fast the quenched variance
//! concentrates and converges: the almost-sure fluctuation rates obtained
//! through the moment-to-rate converter, the mean-convergence rates under
//! polynomial correlation decay and Cesaro-stationarity exponents, and the
//! combined prediction. Also evaluates the `S(i,k)` double sum whose
//! sandwich bounds certify those rates, and fits empirical exponents from
//! simulation output.
//!
//! Case selection is a function of the parameters: equalities like
//! `zeta = 1` are detected with tolerance 1e-12 on the parameter, never on
//! evaluated values. All logarithms are natural.

use crate::error::{Error, Result};
use crate::numeric::{self, LineFit};

const EQ_TOL: f64 = 1e-12;

fn is_eq(x: f64, y: f64) -> bool {
    (x - y).abs() < EQ_TOL
}

/// Polynomial decay models for the correlation envelope
/// `eta(n) = eta_c * n^-psi` and the mixing coefficients
/// `alpha(n) = alpha_c * n^-gamma`, plus the Cesaro-stationarity exponent
/// `zeta` and the almost-sure log slack `delta`. The convention
/// `0^-exponent = 1` applies at `n = 0`.
#[derive(Clone, Copy, Debug)]
pub struct BoundModel {
    pub eta_c: f64,
    pub psi: f64,
    pub alpha_c: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub delta: f64,
}

impl BoundModel {
    pub fn new(
        eta_c: f64,
        psi: f64,
        alpha_c: f64,
        gamma: f64,
        zeta: f64,
        delta: f64,
    ) -> Result<Self> {
        if !(psi > 1.0) {
            return Err(Error::Parameter(format!("psi = {psi} must exceed 1")));
        }
        if !(gamma > 0.0) {
            return Err(Error::Parameter(format!(
                "gamma = {gamma} must be positive"
            )));
        }
        if !(zeta > 0.0) {
            return Err(Error::Parameter(format!("zeta = {zeta} must be positive")));
        }
        if !(delta > 0.0) {
            return Err(Error::Parameter(format!(
                "delta = {delta} must be positive"
            )));
        }
        if eta_c < 0.0 || alpha_c < 0.0 {
            return Err(Error::Parameter(
                "decay constants must be nonnegative".into(),
            ));
        }
        Ok(BoundModel {
            eta_c,
            psi,
            alpha_c,
            gamma,
            zeta,
            delta,
        })
    }

    pub fn eta(&self, n: usize) -> f64 {
        if n == 0 {
            self.eta_c
        } else {
            self.eta_c * (n as f64).powf(-self.psi)
        }
    }

    pub fn alpha(&self, n: usize) -> f64 {
        if n == 0 {
            self.alpha_c
        } else {
            self.alpha_c * (n as f64).powf(-self.gamma)
        }
    }
}

/// A predicted rate `n^power * log^log_power n`, with a canonical
/// description in which the slack `delta` stays symbolic.
#[derive(Clone, Debug, PartialEq)]
pub struct RateSpec {
    power: f64,
    log_power: f64,
    power_has_delta: bool,
    log_has_delta: bool,
    desc: String,
    /// Override for shapes like `(n log^{-1} n)^{q}`.
    numeric_desc_override: Option<String>,
}

/// Render an exponent as a small fraction when one matches, otherwise as a
/// trimmed decimal.
fn fmt_exponent(x: f64) -> String {
    for q in 1..=12u64 {
        let p = (x * q as f64).round();
        if (p / q as f64 - x).abs() < 1e-9 && p.abs() < 1e6 {
            let p = p as i64;
            if q == 1 {
                return format!("{p}");
            }
            let g = gcd(p.unsigned_abs(), q);
            let (pn, qn) = (p / g as i64, q / g);
            if qn == 1 {
                return format!("{pn}");
            }
            return format!("{pn}/{qn}");
        }
    }
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

fn exponent_desc(base: f64, plus_delta: bool) -> String {
    if plus_delta {
        format!("{}+δ", fmt_exponent(base))
    } else {
        fmt_exponent(base)
    }
}

/// Plain decimal rendering for delta-substituted exponents.
fn fmt_decimal(x: f64) -> String {
    let s = format!("{x:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl RateSpec {
    /// Build a rate from base exponents and symbolic-delta flags; the
    /// numeric fields absorb `delta`, the description keeps it symbolic.
    fn compose(
        power_base: f64,
        power_delta: bool,
        log_base: f64,
        log_delta: bool,
        delta: f64,
    ) -> RateSpec {
        let power = power_base + if power_delta { delta } else { 0.0 };
        let log_power = log_base + if log_delta { delta } else { 0.0 };
        let pd = exponent_desc(power_base, power_delta);
        let desc = if log_base == 0.0 && !log_delta {
            format!("n^{{{pd}}}")
        } else {
            format!(
                "n^{{{pd}}} log^{{{}}} n",
                exponent_desc(log_base, log_delta)
            )
        };
        RateSpec {
            power,
            log_power,
            power_has_delta: power_delta,
            log_has_delta: log_delta,
            desc,
            numeric_desc_override: None,
        }
    }

    fn with_description(power: f64, log_power: f64, desc: String) -> RateSpec {
        RateSpec {
            power,
            log_power,
            power_has_delta: false,
            log_has_delta: false,
            numeric_desc_override: Some(desc.clone()),
            desc,
        }
    }

    /// Exponent of `n` (delta included numerically).
    pub fn power(&self) -> f64 {
        self.power
    }

    /// Exponent of `log n` (delta included numerically).
    pub fn log_power(&self) -> f64 {
        self.log_power
    }

    /// Canonical description with symbolic delta, e.g.
    /// `n^{-1/2} log^{3/2+δ} n`.
    pub fn description(&self) -> &str {
        &self.desc
    }

    /// Description with delta substituted numerically, e.g.
    /// `n^{-1/2} log^{1.6} n`. Exponents that absorbed delta render as
    /// decimals, exact ones as fractions.
    pub fn numeric_description(&self) -> String {
        if let Some(d) = &self.numeric_desc_override {
            return d.clone();
        }
        let p = if self.power_has_delta {
            fmt_decimal(self.power)
        } else {
            fmt_exponent(self.power)
        };
        if self.log_power == 0.0 {
            format!("n^{{{p}}}")
        } else {
            let l = if self.log_has_delta {
                fmt_decimal(self.log_power)
            } else {
                fmt_exponent(self.log_power)
            };
            format!("n^{{{p}}} log^{{{l}}} n")
        }
    }

    /// `a` dominates `b` when it decays no faster: larger power of `n`,
    /// ties broken by the power of `log n`.
    pub fn dominates(&self, other: &RateSpec) -> bool {
        if self.power > other.power + EQ_TOL {
            return true;
        }
        if other.power > self.power + EQ_TOL {
            return false;
        }
        self.log_power >= other.log_power
    }

    pub fn dominant(a: RateSpec, b: RateSpec) -> RateSpec {
        if a.dominates(&b) {
            a
        } else {
            b
        }
    }

    /// Evaluate `n^power * log^log_power n`.
    pub fn eval(&self, n: usize) -> Result<f64> {
        if n < 2 {
            return Err(Error::Parameter("rate evaluation needs n >= 2".into()));
        }
        let nf = n as f64;
        Ok(nf.powf(self.power) * nf.ln().powf(self.log_power))
    }
}

/// The Cesaro-rate weight: `n^-1` for `zeta > 1`, `n^-1 log n` at
/// `zeta = 1`, `n^-zeta` for `0 < zeta < 1`.
pub fn h_zeta(zeta: f64, n: usize) -> Result<f64> {
    if !(zeta > 0.0) {
        return Err(Error::Parameter(format!("zeta = {zeta} must be positive")));
    }
    if n < 2 {
        return Err(Error::Parameter(format!("h_zeta needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    Ok(if is_eq(zeta, 1.0) {
        nf.ln() / nf
    } else if zeta > 1.0 {
        1.0 / nf
    } else {
        nf.powf(-zeta)
    })
}

/// Almost-sure rate of `(1/n) sum of centered square-summable terms` whose
/// pair correlations decay like `(k-i)^-beta`.
pub fn gal_koksma_rate(beta: f64, delta: f64) -> Result<RateSpec> {
    if !(beta > 0.0) {
        return Err(Error::Parameter(format!("beta = {beta} must be positive")));
    }
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!(
            "delta = {delta} must be positive"
        )));
    }
    Ok(if is_eq(beta, 1.0) {
        RateSpec::compose(-0.5, true, 0.0, false, delta)
    } else if beta > 1.0 {
        RateSpec::compose(-0.5, false, 1.5, true, delta)
    } else {
        RateSpec::compose(-beta / 2.0, false, 1.5, true, delta)
    })
}

/// Bound on the gap between the quenched variance and the Cesaro average of
/// the `v_i`, under polynomial correlation decay with exponent `psi`. The
/// multiplicative constant is reported as 1 and flagged unnormalized.
#[derive(Clone, Debug)]
pub struct GapBound {
    pub rate: RateSpec,
    pub value_at_n: f64,
    /// The true bound carries an unidentified constant; the reported value
    /// uses constant 1.
    pub unnormalized_constant: bool,
}

pub fn variance_mean_gap_bound(psi: f64, n: usize) -> Result<GapBound> {
    if !(psi > 1.0) {
        return Err(Error::Parameter(format!("psi = {psi} must exceed 1")));
    }
    if n < 2 {
        return Err(Error::Parameter("gap bound needs n >= 2".into()));
    }
    let rate = if is_eq(psi, 2.0) {
        RateSpec::compose(-1.0, false, 1.0, false, 0.1)
    } else if psi > 2.0 {
        RateSpec::compose(-1.0, false, 0.0, false, 0.1)
    } else {
        RateSpec::compose(1.0 - psi, false, 0.0, false, 0.1)
    };
    let value_at_n = rate.eval(n)?;
    Ok(GapBound {
        rate,
        value_at_n,
        unnormalized_constant: true,
    })
}

/// Almost-sure fluctuation rate of `sigma_n^2 - E sigma_n^2` with
/// `m = min(psi - 1, gamma)` controlling the correlation of the `v` terms.
pub fn fluctuation_rate(psi: f64, gamma: f64, delta: f64) -> Result<RateSpec> {
    if !(psi > 1.0) {
        return Err(Error::Parameter(format!("psi = {psi} must exceed 1")));
    }
    if !(gamma > 0.0) {
        return Err(Error::Parameter(format!(
            "gamma = {gamma} must be positive"
        )));
    }
    let m = (psi - 1.0).min(gamma);
    gal_koksma_rate(m, delta)
}

/// Rate of `|E sigma_n^2 - sigma^2|` under the Cesaro-stationarity exponent
/// `zeta`.
pub fn mean_convergence_rate(psi: f64, zeta: f64) -> Result<RateSpec> {
    if !(psi > 1.0) {
        return Err(Error::Parameter(format!("psi = {psi} must exceed 1")));
    }
    if !(zeta > 0.0) {
        return Err(Error::Parameter(format!("zeta = {zeta} must be positive")));
    }
    let p = 1.0 / psi - 1.0;
    Ok(if is_eq(zeta, 1.0) {
        // (n / log n)^(1/psi - 1) = n^(1/psi-1) log^(1-1/psi) n
        RateSpec::with_description(p, -p, format!("(n log^{{-1}} n)^{{{}}}", fmt_exponent(p)))
    } else if zeta > 1.0 {
        RateSpec::compose(p, false, 0.0, false, 0.1)
    } else {
        RateSpec::compose(zeta / psi - zeta, false, 0.0, false, 0.1)
    })
}

/// The combined prediction for `|sigma_n^2(omega) - sigma^2|`: for
/// `zeta >= 1` the fluctuation rate alone; for `0 < zeta < 1` the dominant
/// of the mean term `n^{zeta/psi - zeta}` and the fluctuation rate.
pub fn main_rate(psi: f64, gamma: f64, zeta: f64, delta: f64) -> Result<RateSpec> {
    let terms = main_rate_terms(psi, gamma, zeta, delta)?;
    Ok(terms.into_iter().reduce(RateSpec::dominant).unwrap())
}

/// The individual terms of the combined prediction (one for `zeta >= 1`,
/// two for `0 < zeta < 1`, mean term first).
pub fn main_rate_terms(psi: f64, gamma: f64, zeta: f64, delta: f64) -> Result<Vec<RateSpec>> {
    if !(zeta > 0.0) {
        return Err(Error::Parameter(format!("zeta = {zeta} must be positive")));
    }
    let fluct = fluctuation_rate(psi, gamma, delta)?;
    if zeta >= 1.0 - EQ_TOL {
        Ok(vec![fluct])
    } else {
        let mean = RateSpec::compose(zeta / psi - zeta, false, 0.0, false, delta);
        Ok(vec![mean, fluct])
    }
}

/// The double sum
/// `S(i,k) = sum_{j=i}^{k-1} eta(j-i) sum_{l=k}^{2k-j-1}
///           min_{r in [j,k]} ( eta(k-r) + alpha(r-j) eta(l-k) )`.
/// Depends on `(i,k)` only through `m = k - i`; `S(i,i) = 0`.
pub fn s_sum(i: usize, k: usize, model: &BoundModel) -> Result<f64> {
    if i > k {
        return Err(Error::Parameter(format!(
            "s_sum needs i <= k, got ({i}, {k})"
        )));
    }
    let m = k - i;
    if m == 0 {
        return Ok(0.0);
    }
    // table lookups keep the triple loop cheap
    let eta: Vec<f64> = (0..=m).map(|d| model.eta(d)).collect();
    let alpha: Vec<f64> = (0..=m).map(|d| model.alpha(d)).collect();
    let mut total = 0.0;
    for jj in 0..m {
        // jj = j - i; inner lags l - k run over 0..m-jj
        let eta_j = eta[jj];
        let span = m - jj;
        let mut inner = 0.0;
        for lag in 0..span {
            let e_l = eta[lag];
            let mut best = f64::INFINITY;
            for r in 0..=(m - jj) {
                // r offset from j; eta(k - (j + r)) = eta[m - jj - r]
                let cand = eta[m - jj - r] + alpha[r] * e_l;
                if cand < best {
                    best = cand;
                }
            }
            inner += best;
        }
        total += eta_j * inner;
    }
    Ok(total)
}

/// One audited scale of the sandwich inequality.
#[derive(Clone, Copy, Debug)]
pub struct SandwichRow {
    pub m: usize,
    pub s_value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Slope audit of `S(0, m)` against the predicted exponent
/// `-min(psi-1, gamma)`, with the exhibited constants for both sandwich
/// sides. `c1` is the printed lower-bound constant
/// `eta(0)^2 / 2 + eta(0) / 2`; `c2` is lifted to cover the data. The
/// slope is fitted on the upper half of the scale range: `S(0, m)` has
/// small-m transients (it is not even monotone below m = 8) and the
/// exponent statement is asymptotic.
#[derive(Clone, Debug)]
pub struct SandwichReport {
    pub rows: Vec<SandwichRow>,
    /// Log-log fit over the upper half of the scales.
    pub fit: LineFit,
    /// Log-log fit over every supplied scale, for reference.
    pub full_fit: LineFit,
    pub target_slope: f64,
    pub c1: f64,
    pub c2: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

pub fn sandwich_audit(model: &BoundModel, ms: &[usize]) -> Result<SandwichReport> {
    if ms.len() < 8 {
        return Err(Error::Parameter(
            "sandwich audit needs at least 8 scales".into(),
        ));
    }
    let c1 = 0.5 * model.eta(0) * model.eta(0) + 0.5 * model.eta(0);
    let mut rows = Vec::with_capacity(ms.len());
    let mut c2: f64 = 0.0;
    for &m in ms {
        if m == 0 {
            return Err(Error::Parameter("sandwich scales must be positive".into()));
        }
        let s = s_sum(0, m, model)?;
        let upper_shape = m as f64 * model.eta(m / 4) + model.alpha(m / 4);
        c2 = c2.max(s / upper_shape);
        rows.push(SandwichRow {
            m,
            s_value: s,
            lower: c1 * (m as f64 * model.eta(m) + model.alpha(m)),
            upper: f64::NAN, // filled once c2 is known
        });
    }
    for row in rows.iter_mut() {
        row.upper = c2 * (row.m as f64 * model.eta(row.m / 4) + model.alpha(row.m / 4));
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.m as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.s_value.ln()).collect();
    let full_fit = numeric::least_squares(&xs, &ys)?;
    let tail = rows.len() / 2;
    let fit = numeric::least_squares(&xs[tail..], &ys[tail..])?;
    let lower_holds = rows.iter().all(|r| r.s_value >= r.lower - 1e-12);
    let upper_holds = rows.iter().all(|r| r.s_value <= r.upper + 1e-12);
    Ok(SandwichReport {
        rows,
        fit,
        full_fit,
        target_slope: -(model.psi - 1.0).min(model.gamma),
        c1,
        c2,
        lower_holds,
        upper_holds,
    })
}

/// Log-log regression of a positive series against `n`; log factors are not
/// separately identified and widen the confidence interval instead.
pub fn fit_rate(series: &[(f64, f64)]) -> Result<LineFit> {
    if series.len() < 3 {
        return Err(Error::Fit(format!(
            "rate fit needs >= 3 points, got {}",
            series.len()
        )));
    }
    if let Some((n, v)) = series.iter().find(|(n, v)| !(*n > 0.0) || !(*v > 0.0)) {
        return Err(Error::Fit(format!(
            "rate fit needs positive data, got ({n}, {v})"
        )));
    }
    let xs: Vec<f64> = series.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = series.iter().map(|(_, v)| v.ln()).collect();
    numeric::least_squares(&xs, &ys)
}
