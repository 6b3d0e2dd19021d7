use simlab_core::harness::*;
use simlab_core::model::LinkSpec;
use simlab_core::transform::TransformChoice;

fn gh(k: usize, sigma: f64) -> LinkSpec { LinkSpec::GaussianHermite { k, sigma } }
fn norm(k: usize, sigma: f64) -> LinkSpec { LinkSpec::Normalized { inner: Box::new(gh(k, sigma)) } }

fn study(label: &str, link: LinkSpec, algo: AlgoKind, tc: TransformChoice, ell: usize,
         d_grid: Vec<usize>, bracket: impl Fn(usize) -> (usize, usize), step_c: f64,
         seeds: usize, threshold: f64) -> Vec<(f64,f64)> {
    let mut pts = Vec::new();
    for &d in &d_grid {
        let (lo, hi) = bracket(d);
        let cfg = ExperimentConfig {
            link: link.clone(), algo, ell, transform: tc,
            d_grid: vec![d],
            m_grid: MGrid::Geometric { min: lo, max: hi, ratio: 1.3 },
            seeds, success_threshold: threshold, n_cal: 40_000, kappa: 10.0, master_seed: 7,
            estimator: EstimatorParams { step_size_c: step_c, ..Default::default() },
            record_wallclock: false,
        };
        let ctx = ExperimentContext::prepare(cfg).unwrap();
        match critical_m(&ctx, d) {
            Ok(c) => {
                println!("{label} d={d}: m_c={} (m/d^1.5={:.2}, m/d^2={:.3})", c.m_critical,
                         c.m_critical as f64 / (d as f64).powf(1.5), c.m_critical as f64 / (d as f64).powi(2));
                pts.push((d as f64, c.m_critical as f64));
            }
            Err(e) => println!("{label} d={d}: {}", e.to_string().chars().take(160).collect::<String>()),
        }
    }
    if pts.len() >= 3 {
        let (s, se) = scaling_exponent(&pts).unwrap();
        println!("{label}: slope = {s:.3} +- {se:.3}");
    }
    pts
}

fn main() {
    let t0 = std::time::Instant::now();
    let dg = vec![16, 22, 30, 40, 48];
    study("sgd3 c=0.15 thr0.4", norm(3, 0.5), AlgoKind::Sgd, TransformChoice::Csq, 3,
          dg.clone(), |d| (d*d, 120*d*d), 0.15, 12, 0.4);
    println!("  [{:.1}s]", t0.elapsed().as_secs_f64());
    study("hesgd3 c=0.08 thr0.4", gh(3, 0.5), AlgoKind::Hesgd, TransformChoice::HermiteStar, 3,
          dg.clone(), |d| (d*d, 200*d*d), 0.08, 12, 0.4);
    println!("  [{:.1}s]", t0.elapsed().as_secs_f64());
    study("prtr3 thr0.4", gh(3, 0.5), AlgoKind::Prtr, TransformChoice::PartialTrace, 3,
          dg.clone(), |d| { let s = (d as f64).powf(1.5); ((3.0*s) as usize, (150.0*s) as usize) }, 0.05, 12, 0.4);
    println!("  [{:.1}s]", t0.elapsed().as_secs_f64());
    study("unfold3 thr0.4", norm(3, 0.5), AlgoKind::Unfold, TransformChoice::Csq, 3,
          dg, |d| { let s = (d as f64).powf(1.5); ((0.3*s) as usize, (8.0*s) as usize) }, 0.05, 12, 0.4);
    println!("  [{:.1}s] total", t0.elapsed().as_secs_f64());
}
