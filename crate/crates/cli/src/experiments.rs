//! Experiment runners: turn a checked config into artifact files.
//!
//! Every run writes into `<output_dir>/<experiment>-<hash>/` where the hash
//! covers the config bytes, the resolved seed and the artifact version, so
//! a run directory is never silently reused for different inputs. CSV and
//! JSON content is fully determined by (config, seed, version).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use mpsntk_core::born::{integrate_born_flow, z_distribution_study, BornModel};
use mpsntk_core::chain::{ChainSpec, TensorChain};
use mpsntk_core::csvio::{fmt_f64, render_csv};
use mpsntk_core::ensemble::expand_ensemble;
use mpsntk_core::error::{Error, Result};
use mpsntk_core::features::SiteKernel;
use mpsntk_core::flow::{
    compare_flow_to_closed_form, integrate_flow, lazy_training_report, LazyTrainPlan,
    RecordOptions, RegressionTask,
};
use mpsntk_core::ntk::{analytic_ntk, check_positive_definite, convergence_curve, ntk_drift};
use mpsntk_core::stats::{gp_limit_check, splitmix64};

use crate::config::{ExperimentConfig, ExperimentKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Run manifest written next to the artifacts.
#[derive(Serialize)]
struct RunManifest<'a> {
    experiment: &'a str,
    version: &'a str,
    seed: u64,
    seed_from_env: bool,
    config: &'a BTreeMap<String, String>,
    wall_time_s: f64,
    artifacts: Vec<String>,
}

/// Short content hash naming the run directory.
fn run_hash(cfg: &ExperimentConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(cfg.raw.as_bytes());
    hasher.update(cfg.seed.to_le_bytes());
    hasher.update(VERSION.as_bytes());
    let digest = hasher.finalize();
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub artifacts: Vec<String>,
}

/// Execute one experiment, writing artifacts and the manifest.
pub fn run(cfg: &ExperimentConfig, force: bool) -> Result<RunOutcome> {
    let dir = cfg.output_dir.join(format!("{}-{}", cfg.kind.name(), run_hash(cfg)));
    if dir.exists() && dir.join("manifest.json").exists() && !force {
        return Err(Error::Config(format!(
            "run directory {} already holds results; pass --force to overwrite",
            dir.display()
        )));
    }
    std::fs::create_dir_all(&dir)?;

    let start = Instant::now();
    let artifacts = match cfg.kind {
        ExperimentKind::NtkConverge => run_ntk_converge(cfg, &dir)?,
        ExperimentKind::PdCheck => run_pd_check(cfg, &dir)?,
        ExperimentKind::RmseFlow => run_rmse_flow(cfg, &dir)?,
        ExperimentKind::LazyTrain => run_lazy_train(cfg, &dir)?,
        ExperimentKind::BornFlow => run_born_flow(cfg, &dir)?,
        ExperimentKind::ZDist => run_z_dist(cfg, &dir)?,
        ExperimentKind::GpTest => run_gp_test(cfg, &dir)?,
        ExperimentKind::EnsembleCheck => run_ensemble_check(cfg, &dir)?,
    };

    let manifest = RunManifest {
        experiment: cfg.kind.name(),
        version: VERSION,
        seed: cfg.seed,
        seed_from_env: cfg.seed_from_env,
        config: &cfg.echo,
        wall_time_s: start.elapsed().as_secs_f64(),
        artifacts: artifacts.clone(),
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    Ok(RunOutcome { dir, artifacts })
}

fn write_artifact(dir: &Path, name: &str, content: &str, artifacts: &mut Vec<String>) -> Result<()> {
    std::fs::write(dir.join(name), content)?;
    artifacts.push(name.to_string());
    Ok(())
}

fn require<'a, T>(opt: &'a Option<T>, field: &str) -> Result<&'a T> {
    opt.as_ref()
        .ok_or_else(|| Error::Config(format!("{field}: missing (schema check should have caught this)")))
}

fn run_ntk_converge(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    let feature = require(&cfg.feature, "feature_map")?;
    let maps = feature.build(cfg.n, cfg.seed)?;
    let points = require(&cfg.dataset, "dataset")?.build_points(cfg.n, cfg.seed)?;
    let rows = convergence_curve(
        &cfg.bond_dims,
        cfg.trials,
        &maps,
        &cfg.sigmas,
        cfg.periodic,
        &points,
        cfg.seed,
    )?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.bond_dim.to_string(),
                fmt_f64(r.mean_rel_error),
                fmt_f64(r.std_error),
                fmt_f64(r.median_rel_error),
            ]
        })
        .collect();
    let csv = render_csv(&["bond_dim", "mean_rel_error", "std_error", "median_rel_error"], &table);
    let mut artifacts = Vec::new();
    write_artifact(dir, "convergence.csv", &csv, &mut artifacts)?;
    Ok(artifacts)
}

fn run_pd_check(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    let kernels: Vec<SiteKernel> =
        (0..cfg.n).map(|_| SiteKernel::gaussian(cfg.tau)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for idx in 0..cfg.count {
        let points = mpsntk_core::dataset::random_points(
            cfg.points_per_set,
            cfg.n,
            0.0,
            1.0,
            splitmix64(cfg.seed ^ (idx as u64 + 1)),
        )?;
        let kernel = analytic_ntk(&kernels, &cfg.sigmas, &points)?;
        let report = check_positive_definite(&kernel)?;
        rows.push(vec![
            idx.to_string(),
            points.len().to_string(),
            fmt_f64(report.lambda_min),
            fmt_f64(report.lambda_max),
            report.positive.to_string(),
        ]);
    }
    let csv = render_csv(&["dataset", "points", "lambda_min", "lambda_max", "positive"], &rows);
    let mut artifacts = Vec::new();
    write_artifact(dir, "pd_check.csv", &csv, &mut artifacts)?;
    Ok(artifacts)
}

fn build_task(cfg: &ExperimentConfig) -> Result<RegressionTask> {
    let feature = require(&cfg.feature, "feature_map")?;
    let maps = feature.build(cfg.n, cfg.seed)?;
    let points = require(&cfg.dataset, "dataset")?.build_points(cfg.n, cfg.seed)?;
    let labels = require(&cfg.labels, "labels")?.build(&points)?;
    RegressionTask::new(points, labels, maps)
}

fn run_rmse_flow(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    let task = build_task(cfg)?;
    let integrator = *require(&cfg.integrator, "integrator")?;
    let spec = ChainSpec {
        phys_dims: task.maps.iter().map(|m| m.phys_dim()).collect(),
        bonds: ChainSpec::uniform(cfg.n, 2, cfg.bond_dims[0], cfg.periodic).bonds,
        periodic: cfg.periodic,
    };
    let chain = TensorChain::init_random(&spec, &cfg.sigmas, cfg.seed)?;
    let opts = RecordOptions { stride: cfg.stride, snapshot_ntk: cfg.snapshot_ntk };
    let out = integrate_flow(chain.clone(), &task, cfg.t_end, integrator, &opts)?;

    let mut artifacts = Vec::new();
    write_artifact(dir, "trajectory.csv", &out.trajectory.to_csv(), &mut artifacts)?;
    if cfg.snapshot_ntk {
        let drift = ntk_drift(&out.trajectory)?;
        let rows: Vec<Vec<String>> =
            drift.iter().map(|(t, d)| vec![fmt_f64(*t), fmt_f64(*d)]).collect();
        let csv = render_csv(&["t", "rel_drift"], &rows);
        write_artifact(dir, "ntk_drift.csv", &csv, &mut artifacts)?;
    }
    if cfg.compare_closed_form {
        let gaps = compare_flow_to_closed_form(chain, &task, cfg.t_end, integrator)?;
        let rows: Vec<Vec<String>> =
            gaps.iter().map(|(t, g)| vec![fmt_f64(*t), fmt_f64(*g)]).collect();
        let csv = render_csv(&["t", "max_abs_gap"], &rows);
        write_artifact(dir, "closed_form_gap.csv", &csv, &mut artifacts)?;
    }
    Ok(artifacts)
}

fn run_lazy_train(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    let task = build_task(cfg)?;
    let plan = LazyTrainPlan {
        bond_dims: cfg.bond_dims.clone(),
        trials: cfg.trials,
        sigmas: cfg.sigmas.clone(),
        periodic: cfg.periodic,
        t_end: cfg.t_end,
        integrator: *require(&cfg.integrator, "integrator")?,
        base_seed: cfg.seed,
    };
    let rows = lazy_training_report(&plan, &task)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.bond_dim.to_string(),
                fmt_f64(r.median_drift),
                fmt_f64(r.q1_drift),
                fmt_f64(r.q3_drift),
            ]
        })
        .collect();
    let csv = render_csv(&["bond_dim", "median_sup_drift", "q1", "q3"], &table);
    let mut artifacts = Vec::new();
    write_artifact(dir, "lazy_train.csv", &csv, &mut artifacts)?;
    Ok(artifacts)
}

fn run_born_flow(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    let strings = require(&cfg.dataset, "dataset")?.build_strings(cfg.n, cfg.seed)?;
    let spec = ChainSpec::uniform(cfg.n, 2, cfg.bond_dims[0], true);
    let chain = TensorChain::init_random(&spec, &cfg.sigmas, cfg.seed)?;
    let model = BornModel::new(chain, strings)?;
    let integrator = *require(&cfg.integrator, "integrator")?;
    let traj = integrate_born_flow(&model, cfg.t_end, integrator, cfg.stride)?;

    let mut artifacts = Vec::new();
    write_artifact(dir, "born_flow.csv", &traj.to_csv(), &mut artifacts)?;
    let m = model.m();
    let summary = render_csv(
        &["z0", "kernel_diag_mean", "t_characteristic", "t_paper_estimate"],
        &[vec![
            fmt_f64(traj.z0),
            fmt_f64(traj.kernel_diag.mean()),
            fmt_f64(traj.characteristic_time_at_init(m)?),
            fmt_f64(mpsntk_core::born::paper_characteristic_time(cfg.n, m)),
        ]],
    );
    write_artifact(dir, "born_summary.csv", &summary, &mut artifacts)?;
    Ok(artifacts)
}

fn run_z_dist(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    let study = z_distribution_study(cfg.n, &cfg.sigmas, cfg.bond_dims[0], cfg.trials, cfg.seed)?;
    let rows: Vec<Vec<String>> = study
        .samples
        .iter()
        .zip(&study.seeds)
        .enumerate()
        .map(|(i, (z, seed))| vec![i.to_string(), seed.to_string(), fmt_f64(*z)])
        .collect();
    let mut artifacts = Vec::new();
    write_artifact(dir, "z_samples.csv", &render_csv(&["trial", "seed", "Z"], &rows), &mut artifacts)?;
    let fit = render_csv(
        &["shape", "scale", "ks", "shape_reference", "scale_oracle", "scale_paper"],
        &[vec![
            fmt_f64(study.shape),
            fmt_f64(study.scale),
            fmt_f64(study.ks),
            fmt_f64(study.shape_reference),
            fmt_f64(study.scale_oracle),
            fmt_f64(study.scale_paper),
        ]],
    );
    write_artifact(dir, "z_fit.csv", &fit, &mut artifacts)?;
    Ok(artifacts)
}

fn matrix_csv(rows: &[Vec<f64>]) -> String {
    let m = rows.len();
    let ids: Vec<String> = (0..m).map(|i| format!("p{i}")).collect();
    let header: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
    let table: Vec<Vec<String>> =
        rows.iter().map(|r| r.iter().map(|v| fmt_f64(*v)).collect()).collect();
    render_csv(&header, &table)
}

fn run_gp_test(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    let feature = require(&cfg.feature, "feature_map")?;
    let maps = feature.build(cfg.n, cfg.seed)?;
    let points = require(&cfg.dataset, "dataset")?.build_points(cfg.n, cfg.seed)?;
    let reports = gp_limit_check(
        &cfg.bond_dims,
        &maps,
        &cfg.sigmas,
        cfg.periodic,
        &points,
        cfg.trials,
        cfg.seed,
    )?;
    let mut artifacts = Vec::new();
    for report in &reports {
        let d = report.bond_dim;
        let json = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
        write_artifact(dir, &format!("gp_report_D{d}.json"), &json, &mut artifacts)?;
        write_artifact(dir, &format!("cov_empirical_D{d}.csv"), &matrix_csv(&report.empirical_cov), &mut artifacts)?;
        write_artifact(dir, &format!("cov_analytic_D{d}.csv"), &matrix_csv(&report.analytic_cov), &mut artifacts)?;
    }
    Ok(artifacts)
}

fn run_ensemble_check(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>> {
    let feature = require(&cfg.feature, "feature_map")?;
    let maps = feature.build(cfg.n, cfg.seed)?;
    let spec = ChainSpec {
        phys_dims: maps.iter().map(|m| m.phys_dim()).collect(),
        bonds: ChainSpec::uniform(cfg.n, 2, cfg.bond_dims[0], cfg.periodic).bonds,
        periodic: cfg.periodic,
    };
    let chain = TensorChain::init_random(&spec, &cfg.sigmas, cfg.seed)?;
    let ensemble = expand_ensemble(&chain)?;
    let inputs = mpsntk_core::dataset::random_points(
        cfg.checks,
        cfg.n,
        -1.0,
        1.0,
        splitmix64(cfg.seed ^ 0xc4ec),
    )?;
    let mut rows = Vec::new();
    for (i, x) in inputs.iter().enumerate() {
        let direct = chain.evaluate(&maps, x)?;
        let summed = ensemble.predict(&maps, x)?;
        let rel = (direct - summed).abs() / direct.abs().max(1e-300);
        rows.push(vec![i.to_string(), fmt_f64(direct), fmt_f64(summed), fmt_f64(rel)]);
    }
    let csv = render_csv(&["check", "evaluate", "ensemble_sum", "rel_error"], &rows);
    let mut artifacts = Vec::new();
    write_artifact(dir, "ensemble_check.csv", &csv, &mut artifacts)?;
    let members = render_csv(
        &["member_count"],
        &[vec![ensemble.member_count().to_string()]],
    );
    write_artifact(dir, "ensemble_members.csv", &members, &mut artifacts)?;
    Ok(artifacts)
}
