//! Property tests for the structural invariants: cocycle algebra, measure
//! bookkeeping, metric axioms, and rate-table monotonicity.

use proptest::prelude::*;

use qclt_core::clt::{self, EmpiricalDistribution};
use qclt_core::maps::{Ensemble, EnsembleMode, MapSystem, Observable, OmegaSequence, Provenance};
use qclt_core::quenched;
use qclt_core::rates;
use qclt_core::rng::StreamRng;

fn omega_from(letters: Vec<f64>) -> OmegaSequence {
    OmegaSequence::new(
        letters,
        Provenance {
            process: "prop".into(),
            seed: 0,
            realization: 0,
        },
    )
}

fn letter_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop::sample::select(vec![0.0f64, 1.0]), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // phi(n+m, omega) = phi(n, tau^m omega) o phi(m, omega), bitwise: both
    // sides apply the identical map sequence in the identical order.
    #[test]
    fn cocycle_identity_is_exact(
        letters in letter_vec(12),
        x in 0.0f64..1.0,
        m in 0usize..6,
        n in 0usize..6,
    ) {
        let sys = MapSystem::beta(vec![2.05, 2.95]).unwrap();
        let omega = omega_from(letters);
        let lhs = sys.cocycle(&omega, n + m, x).unwrap();
        let mid = sys.cocycle(&omega, m, x).unwrap();
        let rhs = sys.cocycle(&omega.shift(m).unwrap(), n, mid).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    // pushing n steps then m steps over the shifted sequence equals one
    // push of n + m steps, pointwise.
    #[test]
    fn push_composes_exactly(
        letters in letter_vec(10),
        m in 0usize..5,
        n in 0usize..5,
        seed in 0u64..1000,
    ) {
        let sys = MapSystem::beta(vec![2.05, 2.95]).unwrap();
        let omega = omega_from(letters);
        let ens = Ensemble::iid_uniform(64, &StreamRng::new(seed).substream(3));
        let direct = sys.push_ensemble(&omega, n + m, &ens).unwrap();
        let staged = sys
            .push_ensemble(&omega.shift(m).unwrap(), n, &sys.push_ensemble(&omega, m, &ens).unwrap())
            .unwrap();
        prop_assert_eq!(direct.points(), staged.points());
        prop_assert_eq!(direct.weights(), ens.weights());
    }

    // tau^a tau^b = tau^(a+b) on sequences.
    #[test]
    fn shift_semigroup(letters in letter_vec(16), a in 0usize..8, b in 0usize..8) {
        let omega = omega_from(letters);
        let lhs = omega.shift(a).unwrap().shift(b).unwrap();
        let rhs = omega.shift(a + b).unwrap();
        prop_assert_eq!(lhs.letters(), rhs.letters());
    }

    // the quenched variance equals the correlation double sum on the same
    // discrete ensemble (the defining identity, exact up to rounding).
    #[test]
    fn variance_is_the_correlation_double_sum(
        letters in letter_vec(6),
        n in 1usize..6,
        seed in 0u64..500,
    ) {
        let sys = MapSystem::beta(vec![2.05, 2.95]).unwrap();
        let omega = omega_from(letters);
        let ens = Ensemble::iid_uniform(128, &StreamRng::new(seed).substream(1));
        let f = Observable::cos2pi();
        let table = quenched::correlation_table(&sys, &omega, &f, &ens, n - 1).unwrap();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += table.get(i, j);
            }
        }
        let direct = quenched::quenched_variance(&sys, &omega, &f, &ens, n).unwrap();
        prop_assert!((direct - acc / n as f64).abs() < 1e-9);
    }

    // Kolmogorov distance between empirical laws: symmetry, identity,
    // triangle inequality.
    #[test]
    fn ks_metric_axioms(sa in 1u64..500, sb in 1u64..500, sc in 1u64..500) {
        let mk = |seed: u64| {
            let rng = StreamRng::new(seed).substream(7);
            let vals: Vec<f64> = (0..50).map(|i| rng.f64_at(i)).collect();
            EmpiricalDistribution::from_samples(&vals).unwrap()
        };
        let (a, b, c) = (mk(sa), mk(sb), mk(sc));
        prop_assert_eq!(clt::ks_between(&a, &a), 0.0);
        prop_assert_eq!(clt::ks_between(&a, &b), clt::ks_between(&b, &a));
        prop_assert!(
            clt::ks_between(&a, &c) <= clt::ks_between(&a, &b) + clt::ks_between(&b, &c) + 1e-12
        );
    }

    // improving any decay parameter never worsens the combined rate.
    #[test]
    fn main_rate_is_monotone_in_parameters(
        psi in 1.1f64..4.0,
        gamma in 0.1f64..4.0,
        zeta in 0.1f64..4.0,
        bump in 0.01f64..2.0,
    ) {
        let base = rates::main_rate(psi, gamma, zeta, 0.1).unwrap();
        for better in [
            rates::main_rate(psi + bump, gamma, zeta, 0.1).unwrap(),
            rates::main_rate(psi, gamma + bump, zeta, 0.1).unwrap(),
            rates::main_rate(psi, gamma, zeta + bump, 0.1).unwrap(),
        ] {
            prop_assert!(better.power() <= base.power() + 1e-9,
                "{} vs {}", better.power(), base.power());
        }
    }

    // ensembles pushed through any horizon keep normalized weights and
    // stay inside the domain.
    #[test]
    fn push_preserves_measure_bookkeeping(
        letters in letter_vec(20),
        n in 0usize..20,
        seed in 0u64..300,
    ) {
        let sys = MapSystem::beta(vec![2.05, 2.95]).unwrap();
        let omega = omega_from(letters);
        let ens = Ensemble::iid_uniform(64, &StreamRng::new(seed).substream(2));
        let pushed = sys.push_ensemble(&omega, n, &ens).unwrap();
        let total: f64 = pushed.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(pushed.points().iter().all(|x| (0.0..1.0).contains(x)));
        prop_assert_eq!(pushed.mode(), EnsembleMode::IidSample);
    }
}
