//! Builder subset selection and the uninformed builder's gap.

use cfmmwd::mev::{
    censoring_mev, censorship_min_mev, simulate_builder_gap, uninformed_builder_gap,
    uninformed_mev, BuilderMode, BuilderProblem, SearchMode, Transaction,
};
use cfmmwd::solvers::SolverSettings;
use cfmmwd::{AssetVector, EndowmentDistribution, UtilityFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bundle(rng: &mut impl Rng) -> AssetVector {
    let v: Vec<f64> = (0..2)
        .map(|_| {
            if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.0..2.0)
            }
        })
        .collect();
    AssetVector::new(v).unwrap()
}

fn random_problem(rng: &mut impl Rng, mode: BuilderMode) -> BuilderProblem {
    let builder_endowment = bundle(rng);
    let m = rng.gen_range(0..=10);
    let transactions = (0..m)
        .map(|_| Transaction {
            utility: UtilityFunction::CobbDouglasProduct,
            endowment: bundle(rng),
        })
        .collect();
    BuilderProblem {
        utility: UtilityFunction::CobbDouglasProduct,
        builder_endowment,
        transactions,
        capacity: rng.gen_range(1..=12),
        mode,
    }
}

#[test]
fn exhaustive_search_dominates() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let s = SolverSettings::default();
    for _ in 0..200 {
        let p = random_problem(&mut rng, BuilderMode::Censoring);
        let exact = censoring_mev(&p, SearchMode::Exact, &s).unwrap();
        let greedy = censoring_mev(&p, SearchMode::Heuristic, &s).unwrap();
        assert!(exact.utility >= greedy.utility - 1e-12);
        assert!(exact.subset.len() < p.capacity);

        let mut q = p.clone();
        q.mode = BuilderMode::CensorshipMinimizer;
        let minimizer = censorship_min_mev(&q, SearchMode::Exact, &s).unwrap();
        assert!(minimizer.utility <= exact.utility + 1e-12);
        assert_eq!(
            minimizer.subset.len(),
            p.transactions.len().min(p.capacity - 1)
        );
        let swap = censorship_min_mev(&q, SearchMode::Heuristic, &s).unwrap();
        assert!(minimizer.utility >= swap.utility - 1e-12);

        if p.transactions.len() < p.capacity {
            let all = uninformed_mev(&p, &s).unwrap();
            assert!(exact.utility >= all.utility - 1e-12);
        }
    }
}

#[test]
fn chosen_batches_clear() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = SolverSettings::default();
    for _ in 0..50 {
        let p = random_problem(&mut rng, BuilderMode::Censoring);
        let r = censoring_mev(&p, SearchMode::Exact, &s).unwrap();
        let mut members = vec![p.builder_endowment.clone()];
        members.extend(
            r.subset
                .iter()
                .map(|i| p.transactions[*i].endowment.clone()),
        );
        let batch = cfmmwd::mev::batch_walrasian_allocation(
            &members
                .iter()
                .map(|e| Transaction {
                    utility: UtilityFunction::CobbDouglasProduct,
                    endowment: e.clone(),
                })
                .collect::<Vec<_>>(),
            &s,
        )
        .unwrap();
        for g in 0..2 {
            let supply: f64 = members.iter().map(|e| e[g]).sum();
            let demand: f64 = batch.allocations.iter().map(|a| a[g]).sum();
            assert!((supply - demand).abs() < 1e-9);
        }
        assert!((batch.allocations[0][0] - r.builder_allocation[0]).abs() < 1e-12);
    }
}

#[test]
fn monte_carlo_gap_matches_the_closed_form() {
    let u = UtilityFunction::CobbDouglasProduct;
    let s = SolverSettings::default();
    for dist in [
        EndowmentDistribution::bernoulli(0.5, 1.0, 2).unwrap(),
        EndowmentDistribution::unit_square(),
    ] {
        for pr in [0.0, 0.5, 1.0] {
            let g = uninformed_builder_gap(&u, &dist, pr, &s, 50_000, 3).unwrap();
            assert!(g.gap >= -1e-12);
            let mc = simulate_builder_gap(&u, &dist, &g.equilibrium_price, pr, 50_000, 99).unwrap();
            let se = (mc.std_err.powi(2) + g.expected_mev.std_err.powi(2)).sqrt();
            assert!(
                (mc.mean - g.gap).abs() <= 3.0 * se + 1e-12,
                "{pr}: {mc:?} vs {}",
                g.gap
            );
        }
    }
}
