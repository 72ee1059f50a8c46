//! The `simulate`, `diagnose` and `test` subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use essf::diagnostics::{
    additive_statistic, cumulant_level_monte_carlo, cumulant_report, level_cumulant,
    martingale_estimate,
};
use essf::dislocation::rate_j;
use essf::essf_sim::{simulate_replicate, time_change, DumpHeader, GenealogyTree};
use essf::stat_tests::{
    consistency_test_pair, double_first_mark, exchangeability_test, martingale_flatness_test_with_kappa,
    quantile_bins, snapshot_samples, split_rate_test_against, TestReport, Verdict,
};
use essf::{Characteristics, MarkedPartition, Permutation, SimOptions};

use crate::config::{RunConfig, TestName};
use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("creating {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

fn csv_header(config: &RunConfig) -> String {
    format!("# config_hash={} seed={}\n", config.hash(), config.seed)
}

fn json_header(config: &RunConfig) -> String {
    format!("{}\n", json!({ "config_hash": config.hash(), "seed": config.seed }))
}

/// Snapshot at `t` on the self-similar clock of `ch`.
fn snapshot(tree: &GenealogyTree, alpha: f64, t: f64) -> essf::Result<MarkedPartition> {
    if alpha == 0.0 {
        tree.snapshot(t)
    } else {
        time_change(tree, alpha)?.snapshot(t)
    }
}

/// Writes `simulate.csv` and `trees.jsonl`.
pub fn simulate(config: &RunConfig) -> Result<(), CliError> {
    let ch = config.characteristics.build()?;
    let homogeneous = ch.homogeneous();
    let mut opts = SimOptions::new(config.horizon).with_query_times(config.query_times.clone());
    if ch.beta() > 0.0 {
        opts = opts.with_grid_step(Some(config.h_grid));
    }
    let hash = config.hash();
    let per_replicate = (0..config.replicates as u64)
        .into_par_iter()
        .map(|i| {
            let tree = simulate_replicate(&homogeneous, config.level, &opts, config.seed, i)?;
            let mut rows = String::new();
            for &t in &config.query_times {
                let x = snapshot(&tree, ch.alpha(), t)?;
                write!(rows, "{i},{t},{}", x.num_blocks()).expect("string write");
                for &theta in &config.thetas {
                    write!(rows, ",{}", additive_statistic(&x, theta)).expect("string write");
                }
                rows.push('\n');
            }
            let header = DumpHeader {
                config_hash: hash.clone(),
                seed: config.seed,
                replicate: i,
                level: config.level,
                horizon: config.horizon,
            };
            let mut dump = serde_json::to_string(&header).expect("headers serialize");
            dump.push('\n');
            dump.push_str(&tree.to_jsonl());
            Ok((rows, dump))
        })
        .collect::<essf::Result<Vec<(String, String)>>>()
        .map_err(runtime)?;
    let mut csv = csv_header(config);
    csv.push_str("replicate,t,block_count");
    for theta in &config.thetas {
        write!(csv, ",S_theta_{theta}").expect("string write");
    }
    csv.push('\n');
    let mut trees = String::new();
    for (rows, dump) in &per_replicate {
        csv.push_str(rows);
        trees.push_str(dump);
    }
    write_file(&config.output.dir, "simulate.csv", &csv)?;
    write_file(&config.output.dir, "trees.jsonl", &trees)
}

/// Writes `cumulants.csv` and, when martingale times are set, `martingale.csv`.
pub fn diagnose(config: &RunConfig) -> Result<(), CliError> {
    let ch = config.characteristics.build()?;
    let d = &config.diagnose;
    let thetas = d.thetas.clone().unwrap_or_else(|| config.thetas.clone());
    let levels = d.levels.clone().unwrap_or_else(|| vec![config.level]);
    let interval = d.sign_interval.map_or((0.01, 10.0), |[lo, hi]| (lo, hi));
    let report = cumulant_report(&ch, &thetas, &levels, interval);
    let mc = if d.mc_samples > 0 {
        let n = d.mc_level.unwrap_or(config.level);
        Some(
            thetas
                .iter()
                .map(|&t| cumulant_level_monte_carlo(&ch, n, t, d.mc_samples, config.seed))
                .collect::<essf::Result<Vec<_>>>()
                .map_err(runtime)?,
        )
    } else {
        None
    };
    let mut csv = csv_header(config);
    csv.push_str(&report.to_csv(mc.as_deref()));
    write_file(&config.output.dir, "cumulants.csv", &csv)?;
    let sign = report.sign;
    match sign.negative_at {
        Some(t) => println!(
            "kappa is negative at theta = {t} (minimum {} at {})",
            sign.minimum, sign.minimizer
        ),
        None => println!("kappa has minimum {} at {} on the search interval", sign.minimum, sign.minimizer),
    }
    if !d.martingale_times.is_empty() {
        let level = config.diagnose_martingale_level()?;
        let homogeneous = ch.homogeneous();
        let mut csv = csv_header(config);
        csv.push_str("theta,t,mean,se,ci_low,ci_high\n");
        for &theta in &thetas {
            let points = martingale_estimate(
                &homogeneous,
                theta,
                &d.martingale_times,
                config.replicates,
                level,
                config.seed,
            )
            .map_err(runtime)?;
            for p in points {
                writeln!(csv, "{theta},{},{},{},{},{}", p.t, p.mean, p.se, p.ci_low, p.ci_high)
                    .expect("string write");
            }
        }
        write_file(&config.output.dir, "martingale.csv", &csv)?;
    }
    Ok(())
}

fn halved(ch: &Characteristics) -> essf::Result<Characteristics> {
    Characteristics::new(0.0, ch.c() / 2.0, ch.d(), ch.beta(), ch.lambda().scaled(0.5)?)
}

fn run_test(config: &RunConfig, ch: &Characteristics, name: TestName) -> essf::Result<TestReport> {
    let n = config.level;
    let reps = config.test_replicates();
    let seed = config.seed;
    let corrupt = config.test.corrupt;
    let t = config.snapshot_time();
    match name {
        TestName::SplitRate => {
            let j_n = rate_j(ch, n);
            let claimed = if corrupt { j_n / 2.0 } else { j_n };
            split_rate_test_against(ch, n, reps, seed, claimed, rate_j(ch, n + 1))
        }
        TestName::Consistency => {
            let small = if corrupt { halved(ch)? } else { ch.clone() };
            consistency_test_pair(ch, &small, n, config.consistency_m(), t, reps, seed)
        }
        TestName::Exchangeability => {
            let mut samples = snapshot_samples(ch, n, t, reps, seed, 0, 1)?;
            if corrupt {
                samples = samples.iter().map(double_first_mark).collect();
            }
            let pooled: Vec<f64> = samples.iter().flat_map(|x| x.per_integer_marks()).collect();
            let bins = quantile_bins(&pooled, 4);
            // The cyclic shift moves every integer.
            let sigma = Permutation::new((0..n).map(|i| (i + 1) % n).collect())?;
            exchangeability_test(&samples, &sigma, &bins)
        }
        TestName::Martingale => {
            let theta = config.test.theta.unwrap_or(0.0);
            let level = config
                .test_martingale_level()
                .map_err(|e| essf::EssfError::Argument(e.to_string()))?;
            let kappa = level_cumulant(ch, level, theta);
            let kappa = if corrupt { 1.1 * kappa } else { kappa };
            martingale_flatness_test_with_kappa(ch, theta, kappa, &config.martingale_times(), reps, level, seed)
        }
    }
}

/// Runs the selected tests, writes `tests.jsonl` and returns the number of
/// failed tests.
pub fn test(config: &RunConfig) -> Result<usize, CliError> {
    config.validate_tests()?;
    let ch = config.characteristics.build()?.homogeneous();
    let mut out = json_header(config);
    let mut failures = 0;
    for name in config.selected_tests() {
        let report = run_test(config, &ch, name).map_err(runtime)?;
        println!(
            "{:<20} {:?} statistic = {:.4} p = {:.4}",
            report.name, report.verdict, report.statistic, report.p_value
        );
        failures += usize::from(report.verdict == Verdict::Fail);
        out.push_str(&report.to_json_line());
        out.push('\n');
    }
    write_file(&config.output.dir, "tests.jsonl", &out)?;
    Ok(failures)
}
