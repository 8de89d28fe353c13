//! Built-in invariant suite: the golden rate table, the S(i,k) sandwich,
//! the exact algebraic identities, and the Gaussian-distance metric axioms.
//! Prints one line per check; returns false if any check fails.

use anyhow::{anyhow, Result};
use qclt_core::clt;
use qclt_core::limit::{self, DoubledEnsemble};
use qclt_core::maps::{Ensemble, MapSystem, Observable, ObservableKind};
use qclt_core::quenched;
use qclt_core::rates;
use qclt_core::rng::StreamRng;
use qclt_core::selection::SelectionProcess;

struct Audit {
    failures: usize,
}

impl Audit {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        if ok {
            println!("PASS {name}: {detail}");
        } else {
            self.failures += 1;
            println!("FAIL {name}: {detail}");
        }
    }
}

pub fn run_audit() -> Result<bool> {
    let mut a = Audit { failures: 0 };

    golden_rate_table(&mut a)?;
    sandwich(&mut a)?;
    identities(&mut a)?;
    scale_distance(&mut a)?;

    if a.failures == 0 {
        println!("audit: all checks passed");
        Ok(true)
    } else {
        println!("audit: {} check(s) failed", a.failures);
        Ok(false)
    }
}

fn golden_rate_table(a: &mut Audit) -> Result<()> {
    let rows: Vec<(&str, String, &str)> = vec![
        (
            "gap psi=3",
            rates::variance_mean_gap_bound(3.0, 64)
                .map_err(|e| anyhow!(e))?
                .rate
                .description()
                .into(),
            "n^{-1}",
        ),
        (
            "gap psi=2",
            rates::variance_mean_gap_bound(2.0, 64)
                .map_err(|e| anyhow!(e))?
                .rate
                .description()
                .into(),
            "n^{-1} log^{1} n",
        ),
        (
            "gap psi=1.5",
            rates::variance_mean_gap_bound(1.5, 64)
                .map_err(|e| anyhow!(e))?
                .rate
                .description()
                .into(),
            "n^{-1/2}",
        ),
        (
            "gk beta=2",
            rates::gal_koksma_rate(2.0, 0.1)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/2} log^{3/2+δ} n",
        ),
        (
            "gk beta=1",
            rates::gal_koksma_rate(1.0, 0.1)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/2+δ}",
        ),
        (
            "gk beta=0.5",
            rates::gal_koksma_rate(0.5, 0.1)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/4} log^{3/2+δ} n",
        ),
        (
            "fluct 3,2",
            rates::fluctuation_rate(3.0, 2.0, 0.1)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/2} log^{3/2+δ} n",
        ),
        (
            "fluct 2,1",
            rates::fluctuation_rate(2.0, 1.0, 0.1)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/2+δ}",
        ),
        (
            "fluct 2,0.5",
            rates::fluctuation_rate(2.0, 0.5, 0.1)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/4} log^{3/2+δ} n",
        ),
        (
            "mean 2,2",
            rates::mean_convergence_rate(2.0, 2.0)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/2}",
        ),
        (
            "mean 2,1",
            rates::mean_convergence_rate(2.0, 1.0)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "(n log^{-1} n)^{-1/2}",
        ),
        (
            "mean 3,0.5",
            rates::mean_convergence_rate(3.0, 0.5)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/3}",
        ),
        (
            "main 3,2,2",
            rates::main_rate(3.0, 2.0, 2.0, 0.1)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/2} log^{3/2+δ} n",
        ),
        (
            "main 2,1,1",
            rates::main_rate(2.0, 1.0, 1.0, 0.1)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/2+δ}",
        ),
        (
            "main 2,0.5,3",
            rates::main_rate(2.0, 0.5, 3.0, 0.1)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/4} log^{3/2+δ} n",
        ),
        (
            "main 3,2,0.5",
            rates::main_rate(3.0, 2.0, 0.5, 0.1)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/3}",
        ),
        (
            "main 2,1,0.5",
            rates::main_rate(2.0, 1.0, 0.5, 0.1)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/4}",
        ),
        (
            "main 2,0.5,0.9",
            rates::main_rate(2.0, 0.5, 0.9, 0.1)
                .map_err(|e| anyhow!(e))?
                .description()
                .into(),
            "n^{-1/4} log^{3/2+δ} n",
        ),
    ];
    let mut bad = Vec::new();
    for (label, got, want) in &rows {
        if got != want {
            bad.push(format!("{label}: got `{got}` want `{want}`"));
        }
    }
    let h1 = rates::h_zeta(2.0, 10).map_err(|e| anyhow!(e))?;
    let h2 = rates::h_zeta(1.0, 10).map_err(|e| anyhow!(e))?;
    if (h1 - 0.1).abs() > 1e-12 {
        bad.push(format!("h_zeta(2,10) = {h1}"));
    }
    if (h2 - 10f64.ln() / 10.0).abs() > 1e-12 {
        bad.push(format!("h_zeta(1,10) = {h2}"));
    }
    a.check(
        "golden rate table",
        bad.is_empty(),
        if bad.is_empty() {
            "20 rows exact".into()
        } else {
            bad.join("; ")
        },
    );
    Ok(())
}

fn sandwich(a: &mut Audit) -> Result<()> {
    let ms: Vec<usize> = (1..=10).map(|e| 1usize << e).collect();
    for (psi, gamma) in [(3.0, 1.0), (1.5, 5.0), (2.0, 0.5)] {
        let model =
            rates::BoundModel::new(1.0, psi, 1.0, gamma, 2.0, 0.1).map_err(|e| anyhow!(e))?;
        let rep = rates::sandwich_audit(&model, &ms).map_err(|e| anyhow!(e))?;
        let want = -(psi - 1.0f64).min(gamma);
        let ok = (rep.fit.slope - want).abs() < 0.1 && rep.lower_holds && rep.upper_holds;
        a.check(
            &format!("sandwich (psi={psi}, gamma={gamma})"),
            ok,
            format!(
                "slope {:.3} vs {want} (lower bound {})",
                rep.fit.slope, rep.lower_holds
            ),
        );
    }
    Ok(())
}

fn identities(a: &mut Audit) -> Result<()> {
    let sys = MapSystem::beta(vec![2.05, 2.95]).map_err(|e| anyhow!(e))?;
    let proc =
        SelectionProcess::markov(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).map_err(|e| anyhow!(e))?;
    let f = Observable::cos2pi();
    let ens = Ensemble::iid_uniform(1024, &StreamRng::new(7).substream(0));
    let omega = proc.sample_omega(8, 5, 0);

    let table = quenched::correlation_table(&sys, &omega, &f, &ens, 7).map_err(|e| anyhow!(e))?;
    let mut acc = 0.0;
    for i in 0..8 {
        for j in 0..8 {
            acc += table.get(i, j);
        }
    }
    let direct = quenched::quenched_variance(&sys, &omega, &f, &ens, 8).map_err(|e| anyhow!(e))?;
    let res = (direct - acc / 8.0).abs();
    a.check(
        "variance double-sum identity",
        res < 1e-9,
        format!("residual {res:.2e}"),
    );

    let base = Ensemble::iid_uniform(128, &StreamRng::new(8).substream(0));
    let pairs = DoubledEnsemble::product(&base);
    let z = limit::z_variance(&sys, &omega, &f, &pairs, 4).map_err(|e| anyhow!(e))?;
    let s = quenched::quenched_variance(&sys, &omega, &f, &base, 4).map_err(|e| anyhow!(e))?;
    let res = (z - 8.0 * s).abs();
    a.check(
        "pair-moment identity",
        res < 1e-9,
        format!("residual {res:.2e}"),
    );

    let rep = quenched::variance_identity_report(&sys, &proc, &f, &ens, 16, 16, 3)
        .map_err(|e| anyhow!(e))?;
    a.check(
        "centering identity",
        rep.residual.abs() < 1e-9,
        format!("residual {:.2e}", rep.residual.abs()),
    );

    let vec_obs = Observable::vector(vec![ObservableKind::Cos2Pi, ObservableKind::Sin2Pi])
        .map_err(|e| anyhow!(e))?;
    let pol =
        clt::covariance_by_polarization(&sys, &omega, &vec_obs, &ens, 8).map_err(|e| anyhow!(e))?;
    let dir = clt::covariance_direct(&sys, &omega, &vec_obs, &ens, 8).map_err(|e| anyhow!(e))?;
    let res = pol.max_abs_entry_diff(&dir);
    a.check(
        "polarization identity",
        res < 1e-9,
        format!("residual {res:.2e}"),
    );
    Ok(())
}

fn scale_distance(a: &mut Audit) -> Result<()> {
    let d = clt::gaussian_scale_distance(1.0, 2.0).map_err(|e| anyhow!(e))?;
    a.check(
        "gaussian scale distance",
        (d.distance - 0.1613).abs() < 5e-4,
        format!("d(N(0,1), N(0,4)) = {:.4}", d.distance),
    );
    Ok(())
}
