//! Experiment execution: builds the configured objects, runs the requested
//! sections on a fixed-size worker pool, and writes CSV outputs plus a
//! manifest. Outputs are byte-identical for a fixed (config, seed)
//! regardless of worker count: all parallel maps collect in task order and
//! reductions run on the ordered results.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use qclt_core::clt;
use qclt_core::limit::{self, DoubledEnsemble, LimitVarianceEstimate, Route};
use qclt_core::maps::{Ensemble, EnsembleMode};
use qclt_core::numeric;
use qclt_core::quenched::{self, EtaModel};
use qclt_core::rates::{self, BoundModel};
use qclt_core::rng::StreamRng;

use crate::config::{BoundParam, EnsembleSpecMode, ExperimentConfig};

/// Resolved decay model plus where each exponent came from.
#[derive(Clone, Debug)]
pub struct ResolvedBounds {
    pub model: BoundModel,
    pub psi_fitted: bool,
    pub gamma_fitted: bool,
    pub eta: EtaModel,
}

/// Outcome of the limit-variance section.
pub struct LimitOutcome {
    pub consistent: bool,
    pub sigma_sq: Option<f64>,
}

pub struct Runner {
    pub cfg: ExperimentConfig,
    pub ensemble: Ensemble,
    out_dir: PathBuf,
    files: Vec<String>,
    notes: Vec<String>,
}

fn run_in_pool<T: Send>(workers: usize, body: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;
    Ok(pool.install(body))
}

impl Runner {
    pub fn new(cfg: ExperimentConfig) -> Result<Runner> {
        let ensemble = cfg.build_ensemble()?;
        // grid-mode horizons past the precision cap are a config error
        if cfg.ensemble_mode == EnsembleSpecMode::StratifiedGrid {
            let cap = cfg.system.grid_horizon_cap(ensemble.len());
            let max_n = *cfg.ns.last().unwrap();
            if max_n > cap {
                bail!(
                    "schedules.n: {}",
                    qclt_core::Error::PrecisionCap {
                        n: max_n,
                        cap,
                        grid: ensemble.len()
                    }
                );
            }
        }
        let out_dir = PathBuf::from(&cfg.output);
        fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating output directory {}", out_dir.display()))?;
        Ok(Runner {
            cfg,
            ensemble,
            out_dir,
            files: Vec::new(),
            notes: Vec::new(),
        })
    }

    fn write_csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut text = String::new();
        let _ = writeln!(text, "# config = {:#018x}", self.cfg.hash);
        let _ = writeln!(text, "{header}");
        for row in rows {
            let _ = writeln!(text, "{row}");
        }
        let path = self.out_dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_text(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("# config = {:#018x}\n{body}", self.cfg.hash);
        let path = self.out_dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    /// Usable correlation horizon for the configured ensemble.
    fn correlation_horizon(&self) -> usize {
        let mut h = self.cfg.k_max;
        if self.ensemble.mode() == EnsembleMode::StratifiedGrid {
            h = h.min(self.cfg.system.grid_horizon_cap(self.ensemble.len()));
        }
        h.max(2)
    }

    /// Fit the correlation-decay envelope over a handful of realizations.
    fn fit_eta_model(&self) -> Result<EtaModel> {
        let cfg = &self.cfg;
        // quadrature-quality fit ensemble, independent of the main one
        let fit_ens = match cfg.ensemble_mode {
            EnsembleSpecMode::StratifiedGrid => self.ensemble.clone(),
            EnsembleSpecMode::IidSample => Ensemble::stratified_grid(1 << 14),
        };
        let horizon = cfg
            .k_max
            .min(cfg.system.grid_horizon_cap(fit_ens.len()))
            .max(3);
        let mut by_lag = vec![0.0f64; horizon + 1];
        for r in 0..8u64 {
            let omega = cfg.process.sample_omega(horizon, cfg.seed, 9000 + r);
            let table = quenched::correlation_table(
                &cfg.system,
                &omega,
                &cfg.observable,
                &fit_ens,
                horizon,
            )
            .map_err(|e| anyhow!(e))?;
            for (k, v) in table.max_abs_by_lag().into_iter().enumerate() {
                by_lag[k] = by_lag[k].max(v);
            }
        }
        quenched::fit_eta(&by_lag).map_err(|e| anyhow!(e))
    }

    /// Resolve the bound model, fitting whatever the config left open.
    pub fn resolve_bounds(&mut self) -> Result<ResolvedBounds> {
        let eta = self.fit_eta_model()?;
        let (psi, psi_fitted) = match self.cfg.psi {
            BoundParam::Fixed(v) => (v, false),
            BoundParam::Fit => (eta.psi.max(1.0 + 1e-6), true),
        };
        let (gamma, gamma_fitted) = match self.cfg.gamma {
            BoundParam::Fixed(v) => (v, false),
            BoundParam::Fit => {
                let profile = self
                    .cfg
                    .process
                    .mixing_profile(8, 3, 2)
                    .map_err(|e| anyhow!("bounds.gamma: {e}"))?;
                (profile.polynomial.1.max(1e-6), true)
            }
        };
        let model = BoundModel::new(eta.c, psi, 0.25, gamma, self.cfg.zeta, self.cfg.delta)
            .map_err(|e| anyhow!("bounds: {e}"))?;
        Ok(ResolvedBounds {
            model,
            psi_fitted,
            gamma_fitted,
            eta,
        })
    }

    /// Mixing coefficients and fitted decay bound.
    pub fn section_mixing(&mut self) -> Result<()> {
        if self.cfg.process.n_letters().is_none() {
            self.note("mixing: skipped (continuous alphabet)");
            return Ok(());
        }
        let profile = self
            .cfg
            .process
            .mixing_profile(self.cfg.k_max.clamp(2, 10), 3, 2)
            .map_err(|e| anyhow!(e))?;
        let rows: Vec<String> = (1..=profile.n_max())
            .map(|n| format!("{n},{},{}", profile.alpha_at(n), profile.fitted_bound(n)))
            .collect();
        let note = format!(
            "mixing: exp fit lambda = {}, poly fit gamma = {}",
            profile.exponential.1, profile.polynomial.1
        );
        self.write_csv("mixing.csv", "n,alpha_hat,fitted_bound", &rows)?;
        self.note(note);
        Ok(())
    }

    /// Per-realization quenched variances, correlations, fluctuation decay,
    /// and the centering identity.
    pub fn section_quenched(&mut self) -> Result<()> {
        let (sigma_rows, fluct_rows, corr_rows, id_note) = {
            let cfg = &self.cfg;
            let ens = &self.ensemble;
            let ns = &cfg.ns;
            let reals = cfg.realizations;
            let schedules: Vec<Vec<f64>> = run_in_pool(cfg.workers, || {
                use rayon::prelude::*;
                (0..reals)
                    .into_par_iter()
                    .map(|r| {
                        let omega =
                            cfg.process
                                .sample_omega(*ns.last().unwrap(), cfg.seed, r as u64);
                        quenched::quenched_variance_schedule(
                            &cfg.system,
                            &omega,
                            &cfg.observable,
                            ens,
                            ns,
                        )
                    })
                    .collect::<qclt_core::Result<Vec<_>>>()
            })?
            .map_err(|e| anyhow!(e))?;

            let mut sigma_rows = Vec::new();
            for (r, sched) in schedules.iter().enumerate() {
                for (k, &n) in ns.iter().enumerate() {
                    sigma_rows.push(format!("{n},{r},{}", sched[k]));
                }
            }
            let mut fluct_rows = Vec::new();
            for (k, &n) in ns.iter().enumerate() {
                let vals: Vec<f64> = schedules.iter().map(|s| s[k]).collect();
                let mean = numeric::kahan_sum(vals.iter().copied()) / vals.len() as f64;
                let devs: Vec<f64> = vals.iter().map(|v| (v - mean).abs()).collect();
                fluct_rows.push(format!(
                    "{n},{},{},{}",
                    numeric::quantile(&devs, 0.5),
                    numeric::quantile(&devs, 0.1),
                    numeric::quantile(&devs, 0.9)
                ));
            }

            let horizon = self.correlation_horizon();
            let omega = cfg.process.sample_omega(horizon, cfg.seed, 0);
            let table =
                quenched::correlation_table(&cfg.system, &omega, &cfg.observable, ens, horizon)
                    .map_err(|e| anyhow!(e))?;
            let mut corr_rows = Vec::new();
            for i in 0..=horizon {
                for j in i..=horizon {
                    corr_rows.push(format!("{i},{j},{}", table.get(i, j)));
                }
            }

            let reals_id = cfg.realizations.clamp(2, 64);
            let id = run_in_pool(cfg.workers, || {
                quenched::variance_identity_report(
                    &cfg.system,
                    &cfg.process,
                    &cfg.observable,
                    ens,
                    *ns.last().unwrap(),
                    reals_id,
                    cfg.seed ^ 0x1d,
                )
            })?
            .map_err(|e| anyhow!(e))?;
            let id_note = format!(
                "quenched: identity residual {:.3e} (pooled {:.6}, centering {:.6}, mean quenched {:.6})",
                id.residual, id.pooled, id.centering, id.mean_quenched
            );
            (sigma_rows, fluct_rows, corr_rows, id_note)
        };
        self.write_csv("sigma_n.csv", "n,realization,sigma_n_sq", &sigma_rows)?;
        self.write_csv("fluctuation.csv", "n,median_fluct,q10,q90", &fluct_rows)?;
        self.write_csv("correlations.csv", "i,j,correlation", &corr_rows)?;
        self.note(id_note);
        Ok(())
    }

    /// The requested limit-variance routes with per-term output.
    pub fn section_limit(&mut self, route: &str, bounds: &ResolvedBounds) -> Result<LimitOutcome> {
        if !matches!(route, "all" | "vk" | "gk" | "split") {
            bail!("--route must be one of all, vk, gk, split");
        }
        let mut notes: Vec<String> = Vec::new();
        let (estimates, vk_rows): (Vec<LimitVarianceEstimate>, Option<Vec<String>>) = {
            let cfg = &self.cfg;
            let ens = &self.ensemble;
            let n_for_k = (*cfg.ns.last().unwrap()).max(2);
            let k_raw = limit::choose_truncation_k(n_for_k, bounds.model.psi, bounds.model.zeta)
                .map_err(|e| anyhow!(e))?;
            let k_max = k_raw.min(self.correlation_horizon());
            let burn = 2 * k_max;
            let reals = cfg.realizations.max(32);
            let mut estimates = Vec::new();
            let mut vk_rows = None;

            if route == "all" || route == "vk" {
                let est = run_in_pool(cfg.workers, || {
                    limit::sigma_sq_series_at(
                        &cfg.system,
                        &cfg.process,
                        &cfg.observable,
                        ens,
                        k_max,
                        burn,
                        Some(&bounds.eta),
                        reals,
                        cfg.seed ^ 0x2a,
                    )
                })?
                .map_err(|e| anyhow!(e))?;
                vk_rows = Some(
                    est.per_k
                        .iter()
                        .map(|(k, v, se)| format!("{k},{v},{se}"))
                        .collect::<Vec<_>>(),
                );
                estimates.push(est);
            }
            if route == "all" || route == "gk" {
                let base_len = ((ens.len() as f64).sqrt().round() as usize).max(32);
                let base = match cfg.ensemble_mode {
                    EnsembleSpecMode::StratifiedGrid => Ensemble::stratified_grid_on(
                        cfg.ensemble_support.0,
                        cfg.ensemble_support.1,
                        base_len,
                    )
                    .map_err(|e| anyhow!(e))?,
                    EnsembleSpecMode::IidSample => Ensemble::iid_uniform_on(
                        cfg.ensemble_support.0,
                        cfg.ensemble_support.1,
                        base_len,
                        &StreamRng::new(cfg.seed).substream(0x77),
                    )
                    .map_err(|e| anyhow!(e))?,
                };
                let pairs = DoubledEnsemble::product(&base);
                let est = run_in_pool(cfg.workers, || {
                    limit::green_kubo_doubled(
                        &cfg.system,
                        &cfg.process,
                        &cfg.observable,
                        &pairs,
                        k_max,
                        burn,
                        reals,
                        cfg.seed ^ 0x3b,
                        Some(&bounds.eta),
                    )
                })?
                .map_err(|e| anyhow!(e))?;
                estimates.push(est);
            }
            if route == "all" || route == "split" {
                if cfg.process.is_stationary() {
                    let split = run_in_pool(cfg.workers, || {
                        limit::classical_green_kubo_split(
                            &cfg.system,
                            &cfg.process,
                            &cfg.observable,
                            ens,
                            k_max,
                            burn,
                            reals,
                            cfg.seed ^ 0x4c,
                        )
                    })?
                    .map_err(|e| anyhow!(e))?;
                    notes.push(format!(
                        "limit: classical series {:.6}, centering series {:.6}",
                        split.total, split.centering
                    ));
                    estimates.push(LimitVarianceEstimate {
                        route: Route::ClassicalGkSplit,
                        sigma_sq: split.sigma_sq,
                        standard_error: split.standard_error,
                        per_k: split.per_k,
                        truncation_k: split.truncation_k,
                        burn_in: split.burn_in,
                        tail_bound: None,
                        sigma_sq_half_burn: split.sigma_sq,
                    });
                } else {
                    notes.push("limit: classical split skipped (non-stationary driving)".into());
                }
            }
            (estimates, vk_rows)
        };

        if let Some(rows) = vk_rows {
            self.write_csv("vk.csv", "k,V_k,se", &rows)?;
        }
        let route_rows: Vec<String> = estimates
            .iter()
            .map(|est| {
                format!(
                    "{},{},{},{},{},{}",
                    est.route.name(),
                    est.sigma_sq,
                    est.standard_error,
                    est.truncation_k,
                    est.burn_in,
                    est.sigma_sq_half_burn
                )
            })
            .collect();
        self.write_csv(
            "limit_routes.csv",
            "route,sigma_sq,se,K,burn_in,half_burn_sigma_sq",
            &route_rows,
        )?;
        for n in notes {
            self.note(n);
        }

        // pairwise consistency across the computed routes
        let mut consistent = true;
        let mut verdict = String::new();
        for i in 0..estimates.len() {
            for j in (i + 1)..estimates.len() {
                let (a, b) = (&estimates[i], &estimates[j]);
                let joint = (a.standard_error.powi(2) + b.standard_error.powi(2)).sqrt();
                let diff = (a.sigma_sq - b.sigma_sq).abs();
                let ok = diff <= 2.0 * joint + 1e-3;
                consistent &= ok;
                let _ = writeln!(
                    verdict,
                    "{} vs {}: |diff| = {:.6}, 2 joint se = {:.6} -> {}",
                    a.route.name(),
                    b.route.name(),
                    diff,
                    2.0 * joint,
                    if ok { "consistent" } else { "INCONSISTENT" }
                );
            }
        }
        if estimates.len() > 1 {
            self.write_text("route_consistency.txt", &verdict)?;
        }
        Ok(LimitOutcome {
            consistent,
            sigma_sq: estimates.first().map(|e| e.sigma_sq),
        })
    }

    /// Growth-based positivity verdict.
    pub fn section_positivity(&mut self, bounds: &ResolvedBounds) -> Result<()> {
        if self.cfg.ns.len() < 4 {
            self.note("positivity: skipped (needs at least 4 horizons)");
            return Ok(());
        }
        let (body, verdict_name) = {
            let cfg = &self.cfg;
            let ens = &self.ensemble;
            let reals = cfg.realizations.clamp(2, 32);
            let growth: Vec<(usize, f64)> =
                run_in_pool(cfg.workers, || -> qclt_core::Result<Vec<(usize, f64)>> {
                    let mut out = Vec::new();
                    for &n in &cfg.ns {
                        let rep = quenched::mean_quenched_variance(
                            &cfg.system,
                            &cfg.process,
                            &cfg.observable,
                            ens,
                            n,
                            reals,
                            cfg.seed ^ 0x5d,
                        )?;
                        out.push((n, rep.mean * n as f64));
                    }
                    Ok(out)
                })?
                .map_err(|e| anyhow!(e))?;
            let rep =
                limit::positivity_check(&growth, bounds.model.psi, 0.15).map_err(|e| anyhow!(e))?;
            let mut body = String::new();
            let _ = writeln!(body, "verdict = {}", rep.verdict.name());
            let _ = writeln!(body, "exponent = {:?}", rep.exponent);
            let _ = writeln!(body, "exponent_ci95 = {:?}", rep.exponent_ci95);
            let _ = writeln!(body, "c_linear = {}", rep.c_linear);
            let _ = writeln!(body, "c_se = {}", rep.c_se);
            for (n, v) in &growth {
                let _ = writeln!(body, "growth {n} {v}");
            }
            (body, rep.verdict.name())
        };
        self.write_text("positivity.txt", &body)?;
        self.note(format!("positivity: verdict {verdict_name}"));
        Ok(())
    }

    /// Normal-approximation distances and the covariance block.
    pub fn section_clt(&mut self, sigma_sq: f64) -> Result<()> {
        let rep = {
            let cfg = &self.cfg;
            let ens = &self.ensemble;
            run_in_pool(cfg.workers, || {
                clt::triangle_report(
                    &cfg.system,
                    &cfg.process,
                    &cfg.observable,
                    ens,
                    &cfg.ns,
                    sigma_sq,
                    cfg.seed ^ 0x6e,
                )
            })?
            .map_err(|e| anyhow!(e))?
        };
        if rep.degenerate {
            self.write_text(
                "clt.txt",
                "degenerate: limit variance estimate is not positive\n",
            )?;
            self.note("clt: degenerate limit scale");
            return Ok(());
        }
        let rows: Vec<String> = rep
            .rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{}",
                    r.n, r.d_total, r.w_total, r.sigma_n, rep.sigma
                )
            })
            .collect();
        let cov_rows: Vec<String> = {
            let cfg = &self.cfg;
            let n_last = *cfg.ns.last().unwrap();
            let omega = cfg.process.sample_omega(n_last, cfg.seed, 0);
            let cov = clt::covariance_by_polarization(
                &cfg.system,
                &omega,
                &cfg.observable,
                &self.ensemble,
                n_last,
            )
            .map_err(|e| anyhow!(e))?;
            cov.matrix
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect()
        };
        let note = format!(
            "clt: final d_K = {}",
            rep.rows.last().map(|r| r.d_total).unwrap_or(0.0)
        );
        self.write_csv(
            "clt.csv",
            "n,d_kolmogorov,d_wasserstein,sigma_n,sigma",
            &rows,
        )?;
        self.write_csv("covariance.csv", "square covariance block", &cov_rows)?;
        self.note(note);
        Ok(())
    }

    /// Write the manifest; call last.
    pub fn write_manifest(&mut self, bounds: &ResolvedBounds) -> Result<PathBuf> {
        let mut body = String::new();
        let _ = writeln!(body, "config_hash = {:#018x}", self.cfg.hash);
        let _ = writeln!(body, "seed = {}", self.cfg.seed);
        let _ = writeln!(
            body,
            "resolved_bounds: psi = {}{}, gamma = {}{}, zeta = {}, delta = {}, eta_c = {}, alpha_c = {}",
            bounds.model.psi,
            if bounds.psi_fitted { " (fitted)" } else { "" },
            bounds.model.gamma,
            if bounds.gamma_fitted { " (fitted)" } else { "" },
            bounds.model.zeta,
            bounds.model.delta,
            bounds.model.eta_c,
            bounds.model.alpha_c,
        );
        let _ = writeln!(
            body,
            "predicted_rate = {}",
            rates::main_rate(
                bounds.model.psi,
                bounds.model.gamma,
                bounds.model.zeta,
                bounds.model.delta
            )
            .map(|r| r.numeric_description())
            .unwrap_or_else(|e| format!("unavailable ({e})")),
        );
        let _ = writeln!(body, "files:");
        for f in &self.files {
            let _ = writeln!(body, "  {f}");
        }
        let _ = writeln!(body, "notes:");
        for n in &self.notes {
            let _ = writeln!(body, "  {n}");
        }
        let path = self.out_dir.join("manifest.txt");
        fs::write(&path, format!("# config = {:#018x}\n{body}", self.cfg.hash))
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// The full bundle: every section plus the manifest.
pub fn run(cfg: ExperimentConfig) -> Result<(PathBuf, bool)> {
    let mut runner = Runner::new(cfg)?;
    let bounds = runner.resolve_bounds()?;
    runner.section_mixing()?;
    runner.section_quenched()?;
    let outcome = runner.section_limit("all", &bounds)?;
    runner.section_positivity(&bounds)?;
    let sigma_sq = outcome.sigma_sq.unwrap_or(0.0);
    runner.section_clt(sigma_sq)?;
    let manifest = runner.write_manifest(&bounds)?;
    Ok((manifest, outcome.consistent))
}
