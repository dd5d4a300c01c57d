use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use cfmmwd::lp_analysis::lp_loss_sweep;
use cfmmwd::mev::{
    solve_builder, uninformed_builder_gap, uninformed_mev, BuilderGap, BuilderMode, BuilderProblem,
    MevResult, SearchMode, Transaction, EXACT_SEARCH_CAP,
};
use cfmmwd::simulation::{
    chain_welfare, reserve_heatmap, run_replicas, write_heatmap_csv, write_run_json,
    write_trajectory_csv, CfmmwdConfig, RunSummary,
};
use cfmmwd::solvers::{
    build_csmm_example_chain, distributional_walrasian_equilibrium, enumerate_chain,
    stationary_distribution, MarkovChain,
};
use cfmmwd::{
    AssetVector, CfmmState, EndowmentDistribution, PriceVector, TradingFunction, UtilityFunction,
};
use serde::Serialize;

use crate::config::{finite, ExperimentConfig};
use crate::{CliError, Overrides};

fn out_dir(cfg: &ExperimentConfig, ov: &Overrides) -> PathBuf {
    ov.out_dir
        .clone()
        .or_else(|| cfg.run.as_ref().and_then(|r| r.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| output_err(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| output_err(path, e))
}

fn output_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(create(path)?, value).map_err(|e| output_err(path, e))
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_vec(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

pub fn simulate(cfg: &ExperimentConfig, ov: &Overrides) -> Result<(), CliError> {
    let run = cfg.run()?;
    let cfmm = cfg.cfmm()?;
    let base = CfmmwdConfig {
        cfmm: cfmm.state()?,
        utility: cfg.utility()?.clone(),
        distribution: cfg.distribution()?.clone(),
        steps: ov.steps.unwrap_or(run.steps),
        seed: ov.seed.unwrap_or(run.seed),
        liquidity_scale: cfmm.lambda,
        record_every: run.record_every,
        settings: cfg.solver,
    };
    base.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    if run.replicas == 0 {
        return Err(CliError::Config("run.replicas must be at least 1".into()));
    }
    if run.heatmap_bins == 0 {
        return Err(CliError::Config(
            "run.heatmap_bins must be at least 1".into(),
        ));
    }
    let configs: Vec<CfmmwdConfig> = (0..run.replicas as u64)
        .map(|k| CfmmwdConfig {
            seed: base.seed.wrapping_add(k),
            ..base.clone()
        })
        .collect();
    let dir = out_dir(cfg, ov);
    let mut summaries = Vec::with_capacity(configs.len());
    for (k, (config, traj)) in configs.iter().zip(run_replicas(&configs)).enumerate() {
        let traj = traj?;
        let here = if configs.len() == 1 {
            dir.clone()
        } else {
            dir.join(format!("replica_{k:03}"))
        };
        let path = here.join("trajectory.csv");
        write_trajectory_csv(&traj, create(&path)?).map_err(|e| output_err(&path, e))?;
        if config.cfmm.dim() == 2 {
            let path = here.join("heatmap.csv");
            let h = reserve_heatmap(&traj, run.heatmap_bins)?;
            write_heatmap_csv(&h, create(&path)?).map_err(|e| output_err(&path, e))?;
        }
        let summary = RunSummary::new(config, &traj);
        let path = here.join("run.json");
        write_run_json(&summary, create(&path)?).map_err(|e| output_err(&path, e))?;
        print_summary(&summary);
        summaries.push(summary);
    }
    if summaries.len() > 1 {
        write_json(&dir.join("replicas.json"), &summaries)?;
    }
    Ok(())
}

fn print_summary(s: &RunSummary) {
    println!(
        "seed {}: {} steps, {} trades, max invariant drift {:.3e}",
        s.seed, s.steps, s.traded_steps, s.max_invariant_drift
    );
    if s.neg_inf_steps > 0 {
        println!("  welfare: -inf ({} steps at -inf)", s.neg_inf_steps);
    } else {
        println!(
            "  welfare: {:.6} (s.e. {:.2e})",
            s.welfare.mean, s.welfare.std_err
        );
    }
    match (&s.avg_price, &s.avg_price_std_err) {
        (Some(p), Some(se)) => {
            let se: Vec<String> = se.iter().map(|x| format!("{x:.2e}")).collect();
            println!("  average price: {} (s.e. {})", fmt_vec(p), se.join(", "));
        }
        _ => println!("  average price: undefined (price missing at some step)"),
    }
}

#[derive(Serialize)]
struct EquilibriumReport<'a> {
    utility: &'a UtilityFunction,
    distribution: &'a EndowmentDistribution,
    price: &'a PriceVector,
    residual: f64,
    iterations: usize,
    exact: bool,
    welfare: cfmmwd::Estimate,
}

pub fn equilibrium(cfg: &ExperimentConfig, ov: &Overrides) -> Result<(), CliError> {
    let u = cfg.utility()?;
    let dist = cfg.distribution()?;
    let eq_cfg = &cfg.equilibrium;
    if eq_cfg.samples == 0 {
        return Err(CliError::Config(
            "equilibrium.samples must be at least 1".into(),
        ));
    }
    if u.dim().is_some_and(|d| d != dist.dim()) {
        return Err(CliError::Config(format!(
            "utility has {} goods, distribution has {}",
            u.dim().unwrap_or(0),
            dist.dim()
        )));
    }
    let seed = ov.seed.unwrap_or(eq_cfg.seed);
    let eq = distributional_walrasian_equilibrium(u, dist, &cfg.solver, eq_cfg.samples, seed)?;
    println!("price: {}", fmt_vec(eq.price.as_slice()));
    println!("excess demand residual: {:.3e}", eq.residual);
    println!(
        "welfare: {:.6} (s.e. {:.2e}){}",
        eq.welfare.mean,
        eq.welfare.std_err,
        if eq.exact { ", exact expectation" } else { "" }
    );
    write_json(
        &out_dir(cfg, ov).join("equilibrium.json"),
        &EquilibriumReport {
            utility: u,
            distribution: dist,
            price: &eq.price,
            residual: eq.residual,
            iterations: eq.iterations,
            exact: eq.exact,
            welfare: eq.welfare,
        },
    )
}

/// Reads `utility_tag,amount_1,...,amount_l`. Every tag must name the
/// configured utility.
fn read_transactions(
    path: &Path,
    u: &UtilityFunction,
    dim: usize,
) -> Result<Vec<Transaction>, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if !header.is_empty() {
        let want: Vec<String> = std::iter::once("utility_tag".to_string())
            .chain((1..=dim).map(|i| format!("amount_{i}")))
            .collect();
        if header.iter().ne(want.iter().map(String::as_str)) {
            return Err(bad(format!("header must be `{}`", want.join(","))));
        }
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        if rec.get(0) != Some(u.name()) {
            return Err(bad(format!(
                "line {line}: utility tag {:?} differs from the configured {}",
                rec.get(0).unwrap_or(""),
                u.name()
            )));
        }
        let amounts = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("line {line}: {e}")))?;
        let endowment = AssetVector::new(amounts).map_err(|e| bad(format!("line {line}: {e}")))?;
        out.push(Transaction {
            utility: u.clone(),
            endowment,
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct MevReport<'a> {
    instance: &'a BuilderProblem,
    search: SearchMode,
    mode: BuilderMode,
    subset: &'a [usize],
    censored: Vec<usize>,
    price: Option<&'a PriceVector>,
    builder_allocation: &'a AssetVector,
    utility: f64,
    /// True when every admissible subset was evaluated.
    exact: bool,
    degenerate_batches: usize,
    /// Builder utility when every transaction fits and is included.
    full_inclusion_utility: Option<f64>,
    uninformed_gap: Option<BuilderGap>,
}

pub fn mev(
    cfg: &ExperimentConfig,
    ov: &Overrides,
    search: Option<SearchMode>,
) -> Result<(), CliError> {
    let sec = cfg
        .mev
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [mev] section".into()))?;
    let u = cfg.utility()?;
    finite("mev.builder_endowment", &sec.builder_endowment)?;
    let builder_endowment = AssetVector::new(sec.builder_endowment.clone())
        .map_err(|e| CliError::Config(format!("mev.builder_endowment: {e}")))?;
    let transactions =
        read_transactions(&cfg.resolve(&sec.transactions), u, builder_endowment.dim())?;
    let problem = BuilderProblem {
        utility: u.clone(),
        builder_endowment,
        transactions,
        capacity: sec.capacity,
        mode: sec.mode,
    };
    problem
        .validate()
        .map_err(|e| CliError::Config(format!("[mev]: {e}")))?;
    let search = search.unwrap_or(sec.search);
    let m = problem.transactions.len();
    if search == SearchMode::Exact && sec.mode != BuilderMode::Uninformed && m > EXACT_SEARCH_CAP {
        return Err(CliError::Config(format!(
            "{m} transactions exceed the exact search cap of {EXACT_SEARCH_CAP}; \
             pass --search heuristic (or set mev.search = \"heuristic\")"
        )));
    }
    let result: MevResult = solve_builder(&problem, search, &cfg.solver)?;
    let full_inclusion_utility = if m < problem.capacity {
        Some(uninformed_mev(&problem, &cfg.solver)?.utility)
    } else {
        None
    };
    let uninformed_gap = match sec.inclusion_prob {
        Some(pr) => {
            if !(0.0..=1.0).contains(&pr) {
                return Err(CliError::Config(format!(
                    "mev.inclusion_prob must lie in [0, 1], got {pr}"
                )));
            }
            let dist = cfg.distribution()?;
            let seed = ov.seed.unwrap_or(sec.seed);
            Some(uninformed_builder_gap(
                u,
                dist,
                pr,
                &cfg.solver,
                sec.samples,
                seed,
            )?)
        }
        None => None,
    };
    let censored: Vec<usize> = (0..m).filter(|i| !result.subset.contains(i)).collect();
    println!(
        "builder utility: {:.12} ({} search)",
        result.utility,
        if result.exact { "exact" } else { "heuristic" }
    );
    println!("included: {:?}", result.subset);
    println!("censored: {censored:?}");
    if let Some(f) = full_inclusion_utility {
        println!("full inclusion utility: {f:.12}");
    }
    if let Some(g) = &uninformed_gap {
        println!(
            "uninformed builder gap at inclusion probability {}: {:.6}",
            g.inclusion_prob, g.gap
        );
    }
    write_json(
        &out_dir(cfg, ov).join("mev_report.json"),
        &MevReport {
            instance: &problem,
            search,
            mode: result.mode,
            subset: &result.subset,
            censored,
            price: result.price.as_ref(),
            builder_allocation: &result.builder_allocation,
            utility: result.utility,
            exact: result.exact,
            degenerate_batches: result.degenerate_batches,
            full_inclusion_utility,
            uninformed_gap,
        },
    )
}

pub fn lp_loss(cfg: &ExperimentConfig, ov: &Overrides) -> Result<(), CliError> {
    let sec = cfg
        .lp
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [lp] section".into()))?;
    let u = cfg.utility()?;
    let pool = cfg.cfmm()?.state()?;
    if pool.dim() != 2 {
        return Err(CliError::Config(
            "lp-loss sweeps two-good pools only".into(),
        ));
    }
    let prices = sec.prices()?;
    let rows = lp_loss_sweep(u, &pool.function, &pool.reserves, &prices)?;
    let path = out_dir(cfg, ov).join("lp_loss.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["p", "u_rebalance", "u_cfmm", "gap"])
        .map_err(|e| output_err(&path, e))?;
    for r in &rows {
        w.write_record([fmt(r.p), fmt(r.u_rebalance), fmt(r.u_cfmm), fmt(r.gap)])
            .map_err(|e| output_err(&path, e))?;
    }
    w.flush().map_err(|e| output_err(&path, e))?;
    let worst = rows.iter().map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{} prices in [{}, {}], largest gap {worst:.6}",
        rows.len(),
        prices[0],
        prices[prices.len() - 1]
    );
    Ok(())
}

#[derive(Serialize)]
struct StationaryReport {
    states: usize,
    boundary_mass: f64,
    welfare: f64,
    /// `3/8 - 1/(8 (2 S + 1))` for the example chain with `S = r1 + r2`.
    welfare_closed_form: Option<f64>,
    /// `(1 - 1/S) 3/8`, a coarser approximation.
    welfare_coarse_formula: Option<f64>,
}

pub fn stationary(cfg: &ExperimentConfig, ov: &Overrides) -> Result<(), CliError> {
    let sec = cfg
        .stationary
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [stationary] section".into()))?;
    let (chain, pool, u, dist, total): (
        MarkovChain,
        CfmmState,
        UtilityFunction,
        EndowmentDistribution,
        Option<f64>,
    ) = match (sec.r1, sec.r2, sec.max_states) {
        (Some(r1), Some(r2), None) => {
            if r1 == 0 || r2 == 0 {
                return Err(CliError::Config(format!(
                    "stationary.r1 and stationary.r2 must be positive, got ({r1}, {r2})"
                )));
            }
            if r1.checked_add(r2).is_none_or(|s| s > 1_000_000) {
                return Err(CliError::Config(
                    "stationary.r1 + r2 must not exceed 1e6".into(),
                ));
            }
            let pool = CfmmState::feeless(
                TradingFunction::constant_sum(vec![1.0, 1.0])?,
                vec![f64::from(r1), f64::from(r2)],
            )?;
            (
                build_csmm_example_chain(r1, r2)?,
                pool,
                UtilityFunction::CobbDouglasProduct,
                EndowmentDistribution::bernoulli(0.5, 1.0, 2)?,
                Some(f64::from(r1) + f64::from(r2)),
            )
        }
        (None, None, max_states) => {
            let max_states = max_states.unwrap_or(10_000);
            if max_states == 0 {
                return Err(CliError::Config(
                    "stationary.max_states must be positive".into(),
                ));
            }
            let cfmm = cfg.cfmm()?;
            let pool = cfmm.state()?;
            let pool = pool
                .with_reserves(pool.reserves.scaled(cfmm.lambda)?)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let u = cfg.utility()?.clone();
            let dist = cfg.distribution()?.clone();
            if dist.support().is_none() {
                return Err(CliError::Config(
                    "chain enumeration needs a finitely supported [distribution]".into(),
                ));
            }
            let chain = enumerate_chain(&u, &dist, &pool, &cfg.solver, max_states)?;
            (chain, pool, u, dist, None)
        }
        _ => {
            return Err(CliError::Config(
                "[stationary] takes either r1 and r2, or max_states with [cfmm]".into(),
            ))
        }
    };
    let pi = stationary_distribution(&chain, &cfg.solver)?;
    let boundary_mass: f64 = chain
        .states
        .iter()
        .zip(&pi)
        .filter(|(s, _)| s.contains(&0.0))
        .map(|(_, p)| p)
        .sum();
    let welfare = chain_welfare(&u, &dist, &pool, &chain, &cfg.solver)?;

    let dir = out_dir(cfg, ov);
    let path = dir.join("stationary.csv");
    let l = pool.dim();
    let mut w = csv::Writer::from_writer(create(&path)?);
    let mut header = vec!["state".to_string()];
    header.extend((1..=l).map(|i| format!("R_{i}")));
    header.push("pi".into());
    w.write_record(&header).map_err(|e| output_err(&path, e))?;
    for (j, (s, p)) in chain.states.iter().zip(&pi).enumerate() {
        let mut rec = vec![j.to_string()];
        rec.extend(s.iter().map(|x| fmt(*x)));
        rec.push(fmt(*p));
        w.write_record(&rec).map_err(|e| output_err(&path, e))?;
    }
    w.flush().map_err(|e| output_err(&path, e))?;

    let report = StationaryReport {
        states: chain.len(),
        boundary_mass,
        welfare,
        welfare_closed_form: total.map(|s| 0.375 - 1.0 / (8.0 * (2.0 * s + 1.0))),
        welfare_coarse_formula: total.map(|s| (1.0 - 1.0 / s) * 0.375),
    };
    println!("states: {}", report.states);
    println!("boundary mass: {:.12}", report.boundary_mass);
    println!("stationary welfare: {:.12}", report.welfare);
    if let (Some(s), Some(coarse)) = (total, report.welfare_coarse_formula) {
        println!(
            "(1 - 1/{s}) * 3/8 = {coarse:.12}, relative difference {:.2}%",
            100.0 * (coarse - welfare).abs() / welfare
        );
    }
    write_json(&dir.join("stationary.json"), &report)
}
