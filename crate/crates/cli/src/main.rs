//! `simlab`: diagnostics, data generation, estimation, and experiment
//! sweeps for spherical single-index models.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 when a sweep
//! completed but contains failed trial rows.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use simlab_core::basis::{gegenbauer_eval, harmonic_dim_f64, hermite_eval, hermite_to_gegenbauer};
use simlab_core::complexity::{gaussian_rates, ComplexityProfile};
use simlab_core::estimators::EstimatorResult;
use simlab_core::harness::{
    critical_m, scaling_exponent, scaling_study, sweep, AlgoKind, EstimatorParams,
    ExperimentConfig, ExperimentContext,
};
use simlab_core::model::{sample_planted, Dataset, LinkModel, LinkSpec};
use simlab_core::quadrature::{default_npoints, tau_d1_quadrature};
use simlab_core::rng::{derive_seed, rng_from_seed};
use simlab_core::tensor::{
    harmonic_tensor_dense, random_unit, reproducing_check, vec_extract, HarmonicMatvec,
};
use simlab_core::transform::{
    build_transformation, csq_transformation, hermite_star_transformation, prtr_transformation,
    TransformChoice, DEFAULT_KAPPA,
};
use simlab_core::SimlabError;

#[derive(Parser)]
#[command(name = "simlab", version, about = "spherical single-index model laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Orthonormality and identity diagnostics for the polynomial basis.
    Basis {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 8)]
        lmax: usize,
        /// Print the diagnostic table (CSV: l, k, inner_product, error).
        #[arg(long)]
        check: bool,
    },
    /// Harmonic tensor diagnostics: defining relation, tracelessness,
    /// implicit/dense matvec agreement, reproducing property.
    Tensor {
        #[arg(long)]
        check: bool,
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        lmax: usize,
    },
    /// Generate a planted dataset file.
    Sample {
        /// JSON link specification file.
        #[arg(long)]
        link: PathBuf,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seed for the planted direction.
        #[arg(long, default_value_t = 1)]
        w_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one estimator on a dataset file.
    Estimate {
        #[arg(long, value_enum)]
        algo: CliAlgo,
        #[arg(long)]
        ell: usize,
        #[arg(long)]
        data: PathBuf,
        /// JSON estimate configuration (link, transform, estimator knobs).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the complexity profile and report M*, Q*, optimal degrees.
    Complexity {
        #[arg(long)]
        link: PathBuf,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        lmax: usize,
        #[arg(long, default_value_t = 20_000)]
        nmc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full (d, m, seed) sweep from a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Critical sample size search for each configured dimension.
    CriticalM {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scaling-exponent fit: either run the full study from a config, or
    /// fit points from a CSV of `d,m_c` lines.
    Scaling {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum CliAlgo {
    Spectral1,
    Spectral2,
    Sgd,
    Unfold,
    UnfoldBalanced,
    Hesgd,
    Prtr,
    Boost,
}

impl From<CliAlgo> for AlgoKind {
    fn from(a: CliAlgo) -> Self {
        match a {
            CliAlgo::Spectral1 => AlgoKind::Spectral1,
            CliAlgo::Spectral2 => AlgoKind::Spectral2,
            CliAlgo::Sgd => AlgoKind::Sgd,
            CliAlgo::Unfold => AlgoKind::Unfold,
            CliAlgo::UnfoldBalanced => AlgoKind::UnfoldBalanced,
            CliAlgo::Hesgd => AlgoKind::Hesgd,
            CliAlgo::Prtr => AlgoKind::Prtr,
            CliAlgo::Boost => AlgoKind::Boost,
        }
    }
}

/// Configuration for single-dataset estimation.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EstimateConfig {
    link: LinkSpec,
    #[serde(default = "default_transform")]
    transform: TransformChoice,
    #[serde(default = "default_ncal")]
    n_cal: usize,
    #[serde(default = "default_kappa")]
    kappa: f64,
    #[serde(default)]
    master_seed: u64,
    #[serde(default)]
    estimator: EstimatorParams,
}

fn default_transform() -> TransformChoice {
    TransformChoice::Csq
}

fn default_ncal() -> usize {
    100_000
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

#[derive(Serialize)]
struct EstimateReport {
    algo: String,
    ell: usize,
    d: usize,
    m: usize,
    overlap: Option<f64>,
    samples_consumed: usize,
    wallclock_s: f64,
    converged: bool,
    w_hat: Vec<f64>,
    config: EstimateConfig,
}

fn is_config_error(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<SimlabError>(),
        Some(SimlabError::Config(_)) | Some(SimlabError::Parse(_))
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &PathBuf) -> Result<T> {
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&raw)
        .map_err(|e| anyhow::Error::new(SimlabError::Parse(format!("{}: {e}", path.display()))))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Basis { d, lmax, check } => {
            basis_check(d, lmax, check)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Tensor { d, lmax, .. } => {
            tensor_check(d, lmax)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample { link, d, m, seed, w_seed, out } => {
            let spec: LinkSpec = read_json(&link)?;
            let model = LinkModel::new(spec, d)?;
            let mut rng = rng_from_seed(derive_seed(w_seed, &[0xD12]));
            let w_star = random_unit(&mut rng, d);
            let data = sample_planted(&model, &w_star, m, seed)?;
            data.write_to(&out)?;
            println!("wrote {} samples (d = {d}) to {}", data.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate { algo, ell, data, config, out } => {
            let cfg: EstimateConfig = read_json(&config)?;
            let dataset = Dataset::read_from(&data)?;
            let report = estimate(algo.into(), ell, &dataset, cfg)?;
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            println!(
                "{} at degree {ell}: overlap {:?}, {} samples, {:.3}s",
                report.algo, report.overlap, report.samples_consumed, report.wallclock_s
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Complexity { link, d, lmax, nmc, seed, out } => {
            let spec: LinkSpec = read_json(&link)?;
            complexity_report(spec, d, lmax, nmc, seed, out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, out_dir } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            std::fs::create_dir_all(&out_dir)?;
            let result = sweep(cfg)?;
            let csv = out_dir.join("results.csv");
            let json = out_dir.join("summary.json");
            result.write_csv(&csv)?;
            result.write_summary_json(&json)?;
            println!("wrote {} rows to {} and {}", result.rows.len(), csv.display(), json.display());
            if result.has_failures() {
                eprintln!("warning: some trials failed; see error rows");
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::CriticalM { config, out } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            let ctx = ExperimentContext::prepare(cfg)?;
            let mut results = Vec::new();
            for &d in &ctx.cfg.d_grid {
                let r = critical_m(&ctx, d)?;
                println!("d = {d}: critical m = {}", r.m_critical);
                results.push(r);
            }
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&results)?)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scaling { config, points, out } => {
            let report = match (config, points) {
                (Some(cfg_path), None) => {
                    let cfg: ExperimentConfig = read_json(&cfg_path)?;
                    let study = scaling_study(cfg)?;
                    for c in &study.points {
                        println!("d = {}: m_c = {}", c.d, c.m_critical);
                    }
                    serde_json::json!({
                        "slope": study.slope,
                        "slope_se": study.slope_se,
                        "points": study.points.iter().map(|c| (c.d, c.m_critical)).collect::<Vec<_>>(),
                    })
                }
                (None, Some(path)) => {
                    let raw = std::fs::read_to_string(&path)?;
                    let mut pts = Vec::new();
                    for line in raw.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
                        let mut it = line.split(',');
                        let d: f64 = it.next().context("missing d")?.trim().parse()?;
                        let mc: f64 = it.next().context("missing m_c")?.trim().parse()?;
                        pts.push((d, mc));
                    }
                    let (slope, se) = scaling_exponent(&pts)?;
                    serde_json::json!({ "slope": slope, "slope_se": se, "points": pts })
                }
                _ => {
                    return Err(anyhow::Error::new(SimlabError::Config(
                        "scaling needs exactly one of --config or --points".into(),
                    )))
                }
            };
            println!("slope = {:.4} +- {:.4}", report["slope"], report["slope_se"]);
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn basis_check(d: usize, lmax: usize, full_table: bool) -> Result<()> {
    let quad = tau_d1_quadrature(d, default_npoints(lmax))?;
    println!("l,k,inner_product,error");
    let mut worst = 0.0f64;
    for l in 0..=lmax {
        for k in l..=lmax {
            let ip = quad.integrate(|t| {
                gegenbauer_eval(d, l, t).unwrap() * gegenbauer_eval(d, k, t).unwrap()
            });
            let target = if l == k { 1.0 } else { 0.0 };
            let err = (ip - target).abs();
            worst = worst.max(err);
            if full_table {
                println!("{l},{k},{ip:.15e},{err:.3e}");
            }
        }
    }
    // endpoint identity and Hermite expansion spot checks
    let mut worst_endpoint = 0.0f64;
    for l in 0..=lmax {
        let q1 = gegenbauer_eval(d, l, 1.0)?;
        let n = harmonic_dim_f64(d, l).sqrt();
        worst_endpoint = worst_endpoint.max(((q1 - n) / n).abs());
    }
    let mut worst_identity = 0.0f64;
    for k in 0..=lmax.min(8) {
        let betas: Vec<_> = (0..=k).map(|l| hermite_to_gegenbauer(k, l, d)).collect();
        for &r in &[0.5, (d as f64).sqrt()] {
            for &z in &[-0.7, 0.1, 0.9] {
                let lhs = hermite_eval(k, r * z);
                let rhs: f64 = betas
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| !b.is_zero())
                    .map(|(l, b)| b.eval(r) * gegenbauer_eval(d, l, z).unwrap())
                    .sum();
                worst_identity = worst_identity.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
            }
        }
    }
    eprintln!(
        "worst orthonormality error {worst:.3e}; worst endpoint error {worst_endpoint:.3e}; \
         worst Hermite-expansion error {worst_identity:.3e}"
    );
    Ok(())
}

fn tensor_check(d: usize, lmax: usize) -> Result<()> {
    let mut rng = rng_from_seed(7);
    let z = random_unit(&mut rng, d);
    println!("check,l,value");
    for ell in 1..=lmax {
        let h = harmonic_tensor_dense(&z, ell)?;
        let w = random_unit(&mut rng, d);
        let probe = h.apply_rank_one(&w);
        let target = gegenbauer_eval(d, ell, simlab_core::vec_ops::dot(&w, &z))?;
        println!("defining_relation,{ell},{:.3e}", (probe - target).abs());
        if ell >= 2 {
            let tr = h.trace_pair(0, 1, u128::MAX)?;
            let worst = tr.entries.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            println!("tracelessness,{ell},{:.3e}", worst / h.frobenius_norm().max(1.0));
            let a = ell / 2.max(1);
            let a = a.max(1);
            let b = ell - a;
            if b >= 1 {
                let op = HarmonicMatvec::new(z.clone(), ell, a, b)?;
                let v: Vec<f64> = (0..d.pow(b as u32)).map(|i| ((i % 7) as f64 - 3.0) / 3.0).collect();
                let fast = op.apply(&v);
                let rows = d.pow(a as u32);
                let mut worst = 0.0f64;
                for (i, f) in fast.iter().enumerate() {
                    let mut dense = 0.0;
                    for (j, &vj) in v.iter().enumerate() {
                        dense += h.entries[i + j * rows] * vj;
                    }
                    worst = worst.max((f - dense).abs());
                }
                println!("matvec_vs_dense,{ell},{worst:.3e}");
            }
        }
    }
    let chk = reproducing_check(d.min(10), 2, 2, 20_000, 11)?;
    println!("reproducing_rel_error,2,{:.3e}", chk.frob_error / chk.target_norm.max(1e-300));
    let w = random_unit(&mut rng, d);
    let mut u = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            u[i + j * d] = w[i] * w[j];
        }
    }
    let got = vec_extract(&u, d)?;
    println!("vec_extract_rank_one,2,{:.3e}", 1.0 - simlab_core::vec_ops::overlap(&got, &w));
    Ok(())
}

fn estimate(algo: AlgoKind, ell: usize, dataset: &Dataset, cfg: EstimateConfig) -> Result<EstimateReport> {
    let model = LinkModel::new(cfg.link.clone(), dataset.d)?;
    let cal_seed = derive_seed(cfg.master_seed, &[0xCA11, dataset.d as u64]);
    let est = simlab_core::estimators::EstimatorConfig {
        seed: derive_seed(cfg.master_seed, &[0xE57]),
        step_size_c: cfg.estimator.step_size_c,
        power_iters: cfg.estimator.power_iters,
        power_tol: 1e-10,
        restarts: cfg.estimator.restarts,
        trace_stride: 0,
        boost_stages: cfg.estimator.boost_stages,
        early_exit_overlap: cfg.estimator.early_exit_overlap,
    };
    let view = dataset.view();
    let result: EstimatorResult = match algo {
        AlgoKind::Spectral1 => {
            let t = transform_for(&cfg, &model, ell, cal_seed)?;
            simlab_core::estimators::spectral_l1(&view, &t)?
        }
        AlgoKind::Spectral2 => {
            let t = transform_for(&cfg, &model, ell, cal_seed)?;
            simlab_core::estimators::spectral_l2(&view, &t, &est)?
        }
        AlgoKind::Sgd => {
            let t = transform_for(&cfg, &model, ell, cal_seed)?;
            simlab_core::estimators::online_sgd(&view, &t, &est)?
        }
        AlgoKind::UnfoldBalanced => {
            let t = transform_for(&cfg, &model, ell, cal_seed)?;
            simlab_core::estimators::tensor_unfold_balanced(&view, &t, &est)?
        }
        AlgoKind::Unfold => {
            let t = transform_for(&cfg, &model, ell, cal_seed)?;
            let (a, b) = cfg.estimator.unfold_split.unwrap_or(((ell - 1) / 2, ell - (ell - 1) / 2));
            simlab_core::estimators::tensor_unfold(&view, &t, a, b, &est)?
        }
        AlgoKind::Hesgd => {
            let t = hermite_star_transformation(&model, ell, cfg.kappa, cfg.n_cal, cal_seed)?;
            simlab_core::estimators::hermite_sgd(&view, &t, ell, &est)?
        }
        AlgoKind::Prtr => {
            let t = prtr_transformation(&model, ell, cfg.kappa, cfg.n_cal, cal_seed)?;
            let t_boost = if ell % 2 == 1 {
                Some(csq_transformation(&model, ell, cfg.kappa, cfg.n_cal, derive_seed(cal_seed, &[1]))?)
            } else {
                None
            };
            simlab_core::estimators::partial_trace(&view, &t, t_boost.as_ref(), ell, &est)?
        }
        AlgoKind::Boost => {
            let t = transform_for(&cfg, &model, ell, cal_seed)?;
            let init = transform_for(&cfg, &model, 1, derive_seed(cal_seed, &[1]))?;
            let m = view.len();
            let first = simlab_core::estimators::spectral_l1(&view.slice(0, m / 2), &init)?;
            simlab_core::estimators::boost(&first.w_hat, &view.slice(m / 2, m), &t, &est)?
        }
    };
    Ok(EstimateReport {
        algo: algo.name().to_string(),
        ell,
        d: dataset.d,
        m: dataset.len(),
        overlap: result.overlap,
        samples_consumed: result.samples_consumed,
        wallclock_s: result.wallclock.as_secs_f64(),
        converged: result.converged,
        w_hat: result.w_hat,
        config: cfg,
    })
}

fn transform_for(
    cfg: &EstimateConfig,
    model: &LinkModel,
    ell: usize,
    seed: u64,
) -> Result<simlab_core::transform::Transformation> {
    Ok(match cfg.transform {
        TransformChoice::Likelihood => build_transformation(model, ell, cfg.kappa, cfg.n_cal, seed)?,
        TransformChoice::Csq => csq_transformation(model, ell, cfg.kappa, cfg.n_cal, seed)?,
        TransformChoice::HermiteStar => {
            hermite_star_transformation(model, ell, cfg.kappa, cfg.n_cal, seed)?
        }
        TransformChoice::PartialTrace => prtr_transformation(model, ell, cfg.kappa, cfg.n_cal, seed)?,
    })
}

fn complexity_report(
    spec: LinkSpec,
    d: usize,
    lmax: usize,
    nmc: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let model = LinkModel::new(spec.clone(), d)?;
    let profile = ComplexityProfile::estimate(&model, lmax, nmc, seed)?;
    let m_star = profile.m_star()?;
    let q_star = profile.q_star()?;
    println!("degree, xi_sq, std_error");
    for e in &profile.entries {
        println!("{}, {:.6e}, {:.1e}", e.ell, e.xi_sq, e.std_error);
    }
    println!(
        "M* = {:.6e} at degree {} ({}), Q* = {:.6e} at degree {} ({})",
        m_star.value,
        m_star.ell,
        if m_star.stable { "stable" } else { "within noise of runner-up" },
        q_star.value,
        q_star.ell,
        if q_star.stable { "stable" } else { "within noise of runner-up" },
    );
    let predictions = spec.hermite_degree().map(|k| {
        (
            gaussian_rates(k, spec.radial_law() == simlab_core::model::RadialLaw::Chi),
            spec.generative_exponent(),
        )
    });
    if let Some((rates, gen_exp)) = &predictions {
        println!(
            "link Hermite degree {} (generative exponent {:?}); rate exponents (l, exp, two-sided):",
            rates.k_star, gen_exp
        );
        for (l, e, two) in &rates.entries {
            println!("  {l}: d^{e} {}", if *two { "" } else { "(upper bound)" });
        }
    }
    if let Some(path) = out {
        let blob = serde_json::json!({
            "d": d,
            "profile": profile,
            "m_star": m_star,
            "q_star": q_star,
            "rates": predictions.as_ref().map(|(r, _)| r),
        });
        std::fs::write(&path, serde_json::to_string_pretty(&blob)?)?;
    }
    Ok(())
}
