//! Label transformations and the Gegenbauer coefficients of the likelihood
//! ratio.
//!
//! The degree-l coefficient `xi_{d,l}(y, r) = E[Q_l(Z) | y, r]` is computed
//! by one-dimensional quadrature against the sphere-coordinate marginal:
//! conditional expectations of the scalar projection never require
//! high-dimensional integration. Estimators consume a [`Transformation`]: a
//! unit-L2, bounded evaluator `T(y, r)` with recorded correlation
//! `beta = E[T(Y,R) Q_l(Z)] > 0`. Four constructions are provided: the
//! clipped likelihood coefficient, the correlation-query form `y q(r)` with
//! binned radial regression, the plain label transformation used by the
//! Hermite baselines, and the label-times-radial-polynomial form that the
//! partial trace estimator plugs into the spectral algorithms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{hermite_to_gegenbauer, BetaCoefficient, GegenbauerBasis};
use crate::model::{LinkModel, RadialLaw};
use crate::quadrature::{tau_d1_quadrature, Quadrature};
use crate::rng::rng_from_seed;
use crate::{Result, SimlabError};

/// Default sup bound for clipped transformations.
pub const DEFAULT_KAPPA: f64 = 10.0;

/// Quadrature resolution for conditional-expectation integrals.
const XI_QUAD_POINTS: usize = 128;

/// Resolution of the label-grid cache used for fixed-radius links.
const XI_TABLE_POINTS: usize = 2048;

/// Quadrature evaluator for the likelihood coefficients of one model.
///
/// Precomputes the tau nodes and the Gegenbauer values at them, so one
/// density sweep yields every degree at once.
#[derive(Debug, Clone)]
pub struct XiEvaluator {
    pub model: LinkModel,
    tau: Quadrature,
    /// `q_values[l][node]` for l = 0..=lmax.
    q_values: Vec<Vec<f64>>,
}

impl XiEvaluator {
    pub fn new(model: LinkModel, lmax: usize) -> Result<Self> {
        let tau = tau_d1_quadrature(model.d, XI_QUAD_POINTS.max(2 * lmax + 8))?;
        let basis = GegenbauerBasis::new(model.d, lmax)?;
        let mut q_values = vec![vec![0.0; tau.len()]; lmax + 1];
        let mut buf = Vec::new();
        for (i, &t) in tau.nodes.iter().enumerate() {
            basis.eval_q_all(t, &mut buf)?;
            for (l, row) in q_values.iter_mut().enumerate() {
                row[i] = buf[l];
            }
        }
        Ok(Self { model, tau, q_values })
    }

    pub fn lmax(&self) -> usize {
        self.q_values.len() - 1
    }

    /// `xi_{d,l}(y, r)` for every l = 0..=lmax in one density sweep.
    /// Degree 0 is 1 by convention.
    pub fn xi_all(&self, y: f64, r: f64, out: &mut Vec<f64>) -> Result<()> {
        let lmax = self.lmax();
        out.clear();
        out.resize(lmax + 1, 0.0);
        let mut denom = 0.0;
        for (i, (&t, &w)) in self.tau.nodes.iter().zip(&self.tau.weights).enumerate() {
            let p = w * self.model.conditional_density(y, r, t);
            if p != 0.0 {
                denom += p;
                for l in 1..=lmax {
                    out[l] += p * self.q_values[l][i];
                }
            }
        }
        if denom < 1e-300 {
            return Err(SimlabError::PosteriorUndefined(denom));
        }
        out[0] = 1.0;
        for v in out.iter_mut().skip(1) {
            *v /= denom;
        }
        Ok(())
    }

    /// `xi_{d,l}(y, r)` for a single degree.
    pub fn xi(&self, ell: usize, y: f64, r: f64) -> Result<f64> {
        let mut buf = Vec::new();
        self.xi_all(y, r, &mut buf)?;
        Ok(buf[ell])
    }
}

/// `xi_{d,l}(y, r)` computed from scratch; see [`XiEvaluator`] for the
/// amortized interface.
pub fn xi_eval(model: &LinkModel, ell: usize, y: f64, r: f64) -> Result<f64> {
    XiEvaluator::new(model.clone(), ell)?.xi(ell, y, r)
}

/// Calibration draws `(y, r, t)` from the planted law with a hidden
/// projection; the direction itself is never materialized.
pub fn calibration_draws<R: Rng>(model: &LinkModel, n: usize, rng: &mut R) -> Vec<(f64, f64, f64)> {
    use rand_distr::Distribution;
    let d = model.d;
    let beta = rand_distr::Beta::new((d as f64 - 1.0) / 2.0, (d as f64 - 1.0) / 2.0).expect("beta");
    (0..n)
        .map(|_| {
            let t = 2.0 * beta.sample(rng) - 1.0;
            let r = model.sample_radius(rng);
            let y = model.sample_label(rng, r, t);
            (y, r, t)
        })
        .collect()
}

/// Monte Carlo estimate of `||xi_{d,l}||^2` with its standard error. Each
/// draw's coefficient is exact quadrature; only the `(y, r)` average is
/// random.
pub fn xi_norm(model: &LinkModel, ell: usize, n_mc: usize, seed: u64) -> Result<(f64, f64)> {
    let profile = xi_profile(model, ell, n_mc, seed)?;
    Ok(profile[ell - 1])
}

/// `||xi_{d,l}||^2` estimates with standard errors for l = 1..=lmax, sharing
/// one set of marginal draws.
pub fn xi_profile(model: &LinkModel, lmax: usize, n_mc: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let evaluator = XiEvaluator::new(model.clone(), lmax)?;
    let mut rng = rng_from_seed(seed);
    let mut sums = vec![0.0; lmax + 1];
    let mut sums_sq = vec![0.0; lmax + 1];
    let mut buf = Vec::new();
    for _ in 0..n_mc {
        let (y, r) = crate::model::sample_marginal(&evaluator.model, &mut rng);
        evaluator.xi_all(y, r, &mut buf)?;
        for l in 1..=lmax {
            let sq = buf[l] * buf[l];
            sums[l] += sq;
            sums_sq[l] += sq * sq;
        }
    }
    let nf = n_mc as f64;
    Ok((1..=lmax)
        .map(|l| {
            let mean = sums[l] / nf;
            let var = (sums_sq[l] / nf - mean * mean).max(0.0);
            (mean, (var / nf).sqrt())
        })
        .collect())
}

/// Monte Carlo estimate of the correlation-query coefficient norm
/// `||xi^CSQ_{d,l}||^2 = E[Y^2 q(R)^2]` with `q(R) = E[Y Q_l(Z) | R] / ||Y||`,
/// using equal-count radial bins for the inner conditional mean. Returns the
/// estimate and a standard error from the outer average.
pub fn csq_norm(model: &LinkModel, ell: usize, n_mc: usize, seed: u64) -> Result<(f64, f64)> {
    let basis = GegenbauerBasis::new(model.d, ell)?;
    let mut rng = rng_from_seed(seed);
    let draws = calibration_draws(model, n_mc, &mut rng);
    let half = n_mc / 2;
    let (cal, held) = draws.split_at(half);
    let label_norm_sq =
        (cal.iter().map(|&(y, _, _)| y * y).sum::<f64>() / cal.len() as f64).max(1e-24);
    let mut order: Vec<usize> = (0..cal.len()).collect();
    order.sort_by(|&i, &j| cal[i].1.partial_cmp(&cal[j].1).unwrap());
    let spread = cal[order[cal.len() - 1]].1 - cal[order[0]].1;
    let nbins = if spread < 1e-9 { 1 } else { 32.min(cal.len().max(1)) };
    let per = cal.len().max(1) / nbins.max(1);
    let mut edges = vec![f64::NEG_INFINITY];
    let mut q = Vec::with_capacity(nbins);
    for b in 0..nbins {
        let lo = b * per;
        let hi = if b + 1 == nbins { cal.len() } else { (b + 1) * per };
        let mut acc = 0.0;
        for &i in &order[lo..hi] {
            let (y, _, t) = cal[i];
            acc += y * basis.eval_q(ell, t)?;
        }
        q.push(acc / (hi - lo).max(1) as f64 / label_norm_sq.sqrt());
        if b + 1 < nbins {
            edges.push(cal[order[hi]].1);
        }
    }
    let (mut s, mut s2) = (0.0, 0.0);
    for &(y, r, _) in held {
        let bin = edges.partition_point(|&e| e <= r).saturating_sub(1).min(q.len() - 1);
        let v = (y * q[bin]).powi(2);
        s += v;
        s2 += v * v;
    }
    let n = held.len() as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

#[derive(Debug, Clone)]
enum Kind {
    /// `clip(xi(y, r) / ||xi||, +-kappa)` via quadrature at call time.
    XiQuadrature { evaluator: XiEvaluator, ell: usize, inv_xi_norm: f64, clip: f64 },
    /// Same, but the radius is deterministic and `xi(y)` is cached on a
    /// label grid with linear interpolation and constant extrapolation.
    XiTable { lo: f64, step: f64, values: Vec<f64>, inv_xi_norm: f64, clip: f64 },
    /// Correlation-query form: `clip(y qhat(r), +-kappa)` with piecewise
    /// constant `qhat` from equal-count radial bins.
    CorrelationBins { edges: Vec<f64>, q: Vec<f64>, clip: f64 },
    /// Bounded label transformation `clip(y / ||y||, +-kappa)` for the
    /// Hermite-loss baselines.
    LabelStar { inv_label_norm: f64, clip: f64 },
    /// Partial-trace form: bounded label factor times the radial polynomial
    /// `beta_{k,l}(r)`; the radial factor has controlled chi moments and is
    /// deliberately not clipped.
    StarTimesRadial { inv_label_norm: f64, star_clip: f64, poly: BetaCoefficient },
}

impl Kind {
    fn raw(&self, y: f64, r: f64) -> f64 {
        match self {
            Kind::XiQuadrature { evaluator, ell, inv_xi_norm, clip } => {
                let xi = evaluator.xi(*ell, y, r).unwrap_or(0.0);
                (xi * inv_xi_norm).clamp(-clip.abs(), clip.abs())
            }
            Kind::XiTable { lo, step, values, inv_xi_norm, clip } => {
                let pos = (y - lo) / step;
                let xi = if pos <= 0.0 {
                    values[0]
                } else if pos >= (values.len() - 1) as f64 {
                    values[values.len() - 1]
                } else {
                    let i = pos as usize;
                    let frac = pos - i as f64;
                    values[i] * (1.0 - frac) + values[i + 1] * frac
                };
                (xi * inv_xi_norm).clamp(-clip.abs(), clip.abs())
            }
            Kind::CorrelationBins { edges, q, clip } => {
                let bin = edges.partition_point(|&e| e <= r).saturating_sub(1).min(q.len() - 1);
                (y * q[bin]).clamp(-clip.abs(), clip.abs())
            }
            Kind::LabelStar { inv_label_norm, clip } => {
                (y * inv_label_norm).clamp(-clip.abs(), clip.abs())
            }
            Kind::StarTimesRadial { inv_label_norm, star_clip, poly } => {
                (y * inv_label_norm).clamp(-star_clip.abs(), star_clip.abs()) * poly.eval(r)
            }
        }
    }
}

/// A calibrated label transformation: unit empirical L2 norm, recorded sup
/// bound, and positive recorded correlation with `Q_l(Z)`.
#[derive(Debug, Clone)]
pub struct Transformation {
    pub ell: usize,
    kind: Kind,
    /// Final normalization so the held-out L2 norm is 1.
    scale: f64,
    /// Sup bound of the final transformation (infinite for the
    /// radial-polynomial form, whose moments are controlled instead).
    pub kappa: f64,
    /// Held-out L2 norm after scaling (1 by construction, re-measured).
    pub l2_norm: f64,
    /// Recorded correlation `E[T(Y,R) Q_l(Z)]`.
    pub beta: f64,
    pub beta_se: f64,
    /// Whether `beta >= ||xi|| / kappa - 3 se` held during calibration (only
    /// meaningful for the likelihood construction).
    pub beta_lower_bound_ok: bool,
}

impl Transformation {
    pub fn eval(&self, y: f64, r: f64) -> f64 {
        self.scale * self.kind.raw(y, r)
    }

    /// The transformation is independent of the radius (fixed-radius links).
    pub fn radius_free(&self) -> bool {
        matches!(self.kind, Kind::XiTable { .. } | Kind::LabelStar { .. })
    }
}

/// Calibration summary shared by the builders.
struct Calibrated {
    scale: f64,
    l2_norm: f64,
    beta: f64,
    beta_se: f64,
}

/// Normalize a raw evaluator to unit L2 on held-out draws and measure its
/// correlation with `Q_l(Z)`.
fn calibrate(
    kind: &Kind,
    ell: usize,
    basis: &GegenbauerBasis,
    held_out: &[(f64, f64, f64)],
) -> Result<Calibrated> {
    let n = held_out.len() as f64;
    let mut sum_sq = 0.0;
    for &(y, r, _) in held_out {
        let v = kind.raw(y, r);
        sum_sq += v * v;
    }
    let norm = (sum_sq / n).sqrt();
    if !(norm > 1e-12) {
        return Err(SimlabError::Degenerate("transformation has vanishing L2 norm".into()));
    }
    let scale = 1.0 / norm;
    let mut sum_c = 0.0;
    let mut sum_c2 = 0.0;
    for &(y, r, t) in held_out {
        let c = scale * kind.raw(y, r) * basis.eval_q(ell, t)?;
        sum_c += c;
        sum_c2 += c * c;
    }
    let beta = sum_c / n;
    let var = (sum_c2 / n - beta * beta).max(0.0);
    Ok(Calibrated { scale, l2_norm: 1.0, beta, beta_se: (var / n).sqrt() })
}

fn signed(mut t: Transformation) -> Result<Transformation> {
    // Correlations are defined up to sign; flip so beta > 0.
    if t.beta < 0.0 {
        t.scale = -t.scale;
        t.beta = -t.beta;
    }
    if t.beta <= 0.0 || t.beta < 2.0 * t.beta_se {
        return Err(SimlabError::Degenerate(format!(
            "transformation correlation not detectable: beta = {:.3e} +- {:.3e}",
            t.beta, t.beta_se
        )));
    }
    Ok(t)
}

/// Likelihood transformation `T_l = clip(xi_l / ||xi_l||, +-kappa)`,
/// renormalized to unit L2 on a held-out calibration split.
pub fn build_transformation(
    model: &LinkModel,
    ell: usize,
    kappa: f64,
    n_cal: usize,
    seed: u64,
) -> Result<Transformation> {
    if !(kappa > 1.0) {
        return Err(SimlabError::Config("kappa must exceed 1".into()));
    }
    let basis = GegenbauerBasis::new(model.d, ell)?;
    let evaluator = XiEvaluator::new(model.clone(), ell)?;
    let mut rng = rng_from_seed(seed);
    let draws = calibration_draws(model, n_cal, &mut rng);
    let half = n_cal / 2;
    let (cal, held) = draws.split_at(half);

    // Estimate ||xi_l|| on the first split.
    let mut buf = Vec::new();
    let (mut s, mut s2) = (0.0, 0.0);
    for &(y, r, _) in cal {
        evaluator.xi_all(y, r, &mut buf)?;
        let sq = buf[ell] * buf[ell];
        s += sq;
        s2 += sq * sq;
    }
    let nf = cal.len() as f64;
    let xi_sq = s / nf;
    let xi_sq_se = ((s2 / nf - xi_sq * xi_sq).max(0.0) / nf).sqrt();
    if xi_sq <= 2.0 * xi_sq_se || xi_sq <= 0.0 {
        return Err(SimlabError::Degenerate(format!(
            "||xi_{{d,{ell}}}||^2 not detectable at n_cal = {n_cal}: {xi_sq:.3e} +- {xi_sq_se:.3e}"
        )));
    }
    let xi_norm_est = xi_sq.sqrt();

    let kind = match model.radial_law() {
        RadialLaw::Fixed(r0) => {
            // Cache xi on a label grid spanning the calibration range.
            let mut ys: Vec<f64> = cal.iter().map(|&(y, _, _)| y).collect();
            ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let lo_q = ys[(0.001 * nf) as usize];
            let hi_q = ys[((0.999 * nf) as usize).min(ys.len() - 1)];
            let margin = 0.25 * (hi_q - lo_q).max(1e-6);
            let (lo, hi) = (lo_q - margin, hi_q + margin);
            let step = (hi - lo) / (XI_TABLE_POINTS - 1) as f64;
            let mut values = Vec::with_capacity(XI_TABLE_POINTS);
            for i in 0..XI_TABLE_POINTS {
                evaluator.xi_all(lo + i as f64 * step, r0, &mut buf)?;
                values.push(buf[ell]);
            }
            Kind::XiTable { lo, step, values, inv_xi_norm: 1.0 / xi_norm_est, clip: kappa }
        }
        RadialLaw::Chi => {
            Kind::XiQuadrature { evaluator, ell, inv_xi_norm: 1.0 / xi_norm_est, clip: kappa }
        }
    };

    let cal_out = calibrate(&kind, ell, &basis, held)?;
    let beta_floor = xi_norm_est / kappa - 3.0 * cal_out.beta_se;
    let t = Transformation {
        ell,
        kappa: kappa * cal_out.scale,
        beta_lower_bound_ok: cal_out.beta.abs() >= beta_floor,
        scale: cal_out.scale,
        l2_norm: cal_out.l2_norm,
        beta: cal_out.beta,
        beta_se: cal_out.beta_se,
        kind,
    };
    signed(t)
}

/// Correlation-query transformation `T(y, r) = y qhat(r)` with `qhat`
/// estimated by equal-count binned regression of `y Q_l(<w*, z>)` on r.
/// Equal-count bins cannot come out empty; a degenerate radius range
/// collapses to a single bin.
pub fn csq_transformation(
    model: &LinkModel,
    ell: usize,
    kappa: f64,
    n_cal: usize,
    seed: u64,
) -> Result<Transformation> {
    let basis = GegenbauerBasis::new(model.d, ell)?;
    let mut rng = rng_from_seed(seed);
    let draws = calibration_draws(model, n_cal, &mut rng);
    let half = n_cal / 2;
    let (cal, held) = draws.split_at(half);

    let label_norm =
        (cal.iter().map(|&(y, _, _)| y * y).sum::<f64>() / cal.len() as f64).sqrt().max(1e-12);

    // Equal-count bins over the calibration radii.
    let mut order: Vec<usize> = (0..cal.len()).collect();
    order.sort_by(|&i, &j| cal[i].1.partial_cmp(&cal[j].1).unwrap());
    let r_lo = cal[order[0]].1;
    let r_hi = cal[*order.last().unwrap()].1;
    let nbins = if r_hi - r_lo < 1e-9 { 1 } else { 32.min(cal.len().max(1)) };
    let per = cal.len().max(1) / nbins.max(1);
    let mut edges = vec![f64::NEG_INFINITY];
    let mut q = Vec::with_capacity(nbins);
    for b in 0..nbins {
        let lo = b * per;
        let hi = if b + 1 == nbins { cal.len() } else { (b + 1) * per };
        let mut acc = 0.0;
        for &i in &order[lo..hi] {
            let (y, _, t) = cal[i];
            acc += y * basis.eval_q(ell, t)?;
        }
        q.push(acc / (hi - lo).max(1) as f64 / label_norm);
        if b + 1 < nbins {
            edges.push(cal[order[hi]].1);
        }
    }
    let kind = Kind::CorrelationBins { edges, q, clip: kappa };
    let cal_out = calibrate(&kind, ell, &basis, held)?;
    signed(Transformation {
        ell,
        kappa: kappa * cal_out.scale,
        beta_lower_bound_ok: true,
        scale: cal_out.scale,
        l2_norm: cal_out.l2_norm,
        beta: cal_out.beta,
        beta_se: cal_out.beta_se,
        kind,
    })
}

/// Bounded unit-norm label transformation `clip(y / ||y||, +-kappa)` for the
/// Hermite baselines. The recorded correlation is against the orthonormal
/// Hermite polynomial of the latent Gaussian projection `he_k(r t)` rather
/// than a Gegenbauer polynomial; requires Gaussian-type data with the full
/// radius available.
pub fn hermite_star_transformation(
    model: &LinkModel,
    k_star: usize,
    kappa: f64,
    n_cal: usize,
    seed: u64,
) -> Result<Transformation> {
    if model.fixed_radius().is_some() {
        return Err(SimlabError::Config(
            "the Hermite-loss transformation needs the radial component".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let draws = calibration_draws(model, n_cal, &mut rng);
    let half = n_cal / 2;
    let (cal, held) = draws.split_at(half);
    let label_norm =
        (cal.iter().map(|&(y, _, _)| y * y).sum::<f64>() / cal.len() as f64).sqrt().max(1e-12);
    let kind = Kind::LabelStar { inv_label_norm: 1.0 / label_norm, clip: kappa };

    let n = held.len() as f64;
    let mut sum_sq = 0.0;
    for &(y, r, _) in held {
        let v = kind.raw(y, r);
        sum_sq += v * v;
    }
    let scale = 1.0 / (sum_sq / n).sqrt().max(1e-12);
    let (mut sum_c, mut sum_c2) = (0.0, 0.0);
    for &(y, r, t) in held {
        let c = scale * kind.raw(y, r) * crate::basis::hermite_eval(k_star, r * t);
        sum_c += c;
        sum_c2 += c * c;
    }
    let beta = sum_c / n;
    let var = (sum_c2 / n - beta * beta).max(0.0);
    signed(Transformation {
        ell: k_star,
        kind,
        scale,
        kappa: kappa * scale,
        l2_norm: 1.0,
        beta,
        beta_se: (var / n).sqrt(),
        beta_lower_bound_ok: true,
    })
}

/// Partial-trace transformation `T_l(y, r) ~ T*(y) beta_{k*,l}(r)` at the
/// spectral degree l = 1 (k* odd) or l = 2 (k* even), unit-normalized on a
/// held-out split.
pub fn prtr_transformation(
    model: &LinkModel,
    k_star: usize,
    kappa: f64,
    n_cal: usize,
    seed: u64,
) -> Result<Transformation> {
    if model.fixed_radius().is_some() {
        return Err(SimlabError::Config("the partial trace needs the radial component".into()));
    }
    let ell = if k_star % 2 == 1 { 1 } else { 2 };
    let basis = GegenbauerBasis::new(model.d, ell)?;
    let mut rng = rng_from_seed(seed);
    let draws = calibration_draws(model, n_cal, &mut rng);
    let half = n_cal / 2;
    let (cal, held) = draws.split_at(half);
    let label_norm =
        (cal.iter().map(|&(y, _, _)| y * y).sum::<f64>() / cal.len() as f64).sqrt().max(1e-12);
    let poly = hermite_to_gegenbauer(k_star, ell, model.d);
    if poly.is_zero() {
        return Err(SimlabError::Degenerate("radial polynomial vanishes for this parity".into()));
    }
    let kind = Kind::StarTimesRadial { inv_label_norm: 1.0 / label_norm, star_clip: kappa, poly };
    let cal_out = calibrate(&kind, ell, &basis, held)?;
    signed(Transformation {
        ell,
        kind,
        scale: cal_out.scale,
        kappa: f64::INFINITY,
        l2_norm: cal_out.l2_norm,
        beta: cal_out.beta,
        beta_se: cal_out.beta_se,
        beta_lower_bound_ok: true,
    })
}

/// Which transformation construction an experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformChoice {
    /// Clipped likelihood coefficient (needs the conditional density).
    Likelihood,
    /// Correlation-query `y qhat(r)`.
    Csq,
    /// Bounded label transformation for the Hermite baselines.
    HermiteStar,
    /// Label factor times the radial polynomial (partial trace).
    PartialTrace,
}
