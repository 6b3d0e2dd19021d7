//! Complexity functionals and predictions.
//!
//! A [`ComplexityProfile`] maps each degree l to the signal strength
//! `||xi_{d,l}||^2` carried by the degree-l harmonic subspace. The sample
//! functional `M* = inf_l sqrt(n_{d,l}) / ||xi_{d,l}||^2` and the query
//! functional `Q* = inf_l n_{d,l} / ||xi_{d,l}||^2` are the low-degree and
//! statistical-query lower bounds; their argmins are the sample- and
//! runtime-optimal degrees. Gaussian rate tables, the synthetic mixture
//! profile, the low-degree likelihood-ratio bound, and the landscape
//! smoothing reweighting function complete the calculator suite.

use serde::{Deserialize, Serialize};

use crate::basis::{harmonic_dim_f64, GegenbauerBasis};
use crate::model::LinkModel;
use crate::quadrature::tau_d1_quadrature;
use crate::rng::rng_from_seed;
use crate::transform::xi_profile;
use crate::{Result, SimlabError};

/// One degree of a complexity profile.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub ell: usize,
    /// `||xi_{d,l}||^2` (or its synthetic model value).
    pub xi_sq: f64,
    pub std_error: f64,
    /// Entry is only an upper bound (off-parity Gaussian rates); excluded
    /// from argmin computations.
    pub upper_bound_only: bool,
}

/// Per-degree signal strengths for one model at one dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityProfile {
    pub d: usize,
    pub entries: Vec<ProfileEntry>,
}

/// An extremal degree with its functional value and a stability flag: the
/// flag is false when the runner-up is within two combined standard errors.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimalDegree {
    pub value: f64,
    pub ell: usize,
    pub stable: bool,
}

impl ComplexityProfile {
    /// Profile estimated by Monte Carlo from the likelihood coefficients.
    pub fn estimate(model: &LinkModel, lmax: usize, n_mc: usize, seed: u64) -> Result<Self> {
        let norms = xi_profile(model, lmax, n_mc, seed)?;
        let entries = norms
            .iter()
            .enumerate()
            .map(|(i, &(xi_sq, std_error))| ProfileEntry {
                ell: i + 1,
                xi_sq,
                std_error,
                upper_bound_only: false,
            })
            .collect();
        Ok(Self { d: model.d, entries })
    }

    fn argmin<F: Fn(&ProfileEntry) -> f64>(&self, functional: F) -> Result<OptimalDegree> {
        let mut candidates: Vec<(f64, f64, usize)> = Vec::new();
        for e in &self.entries {
            if e.upper_bound_only || !(e.xi_sq > 0.0) {
                continue;
            }
            let v = functional(e);
            // Propagate the relative error of xi^2 into the functional.
            let rel = e.std_error / e.xi_sq;
            candidates.push((v, v * rel, e.ell));
        }
        if candidates.is_empty() {
            return Err(SimlabError::Degenerate(
                "complexity profile has no positive two-sided entries".into(),
            ));
        }
        candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.2.cmp(&b.2)));
        let best = candidates[0];
        let stable = candidates.len() < 2 || {
            let next = candidates[1];
            next.0 - best.0 > 2.0 * (best.1 + next.1)
        };
        Ok(OptimalDegree { value: best.0, ell: best.2, stable })
    }

    /// Sample lower bound `M* = inf_l sqrt(n_{d,l}) / ||xi_{d,l}||^2` with
    /// its argmin degree; ties break to the smaller degree.
    pub fn m_star(&self) -> Result<OptimalDegree> {
        let d = self.d;
        self.argmin(|e| harmonic_dim_f64(d, e.ell).sqrt() / e.xi_sq)
    }

    /// Query lower bound `Q* = inf_l n_{d,l} / ||xi_{d,l}||^2`.
    pub fn q_star(&self) -> Result<OptimalDegree> {
        let d = self.d;
        self.argmin(|e| harmonic_dim_f64(d, e.ell) / e.xi_sq)
    }
}

/// Predicted exponent table for the Gaussian specialization: with the
/// radius, `||xi_{d,l}||^2 ~ d^{-(k*-l)/2}` on matching parity and at most
/// `d^{-(k*-l+1)/2}` otherwise; without the radius both exponents double.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianRatePrediction {
    pub k_star: usize,
    pub with_norm: bool,
    /// `(l, exponent of d in ||xi||^2, two_sided)`.
    pub entries: Vec<(usize, f64, bool)>,
}

pub fn gaussian_rates(k_star: usize, with_norm: bool) -> GaussianRatePrediction {
    assert!(k_star >= 1);
    let entries = (1..=k_star)
        .map(|ell| {
            let parity = ell % 2 == k_star % 2;
            let gap = (k_star - ell) as f64;
            let exponent = if with_norm {
                if parity { -gap / 2.0 } else { -(gap + 1.0) / 2.0 }
            } else if parity {
                -gap
            } else {
                -(gap + 1.0)
            };
            (ell, exponent, parity)
        })
        .collect();
    GaussianRatePrediction { k_star, with_norm, entries }
}

impl GaussianRatePrediction {
    /// Synthetic profile at dimension d: `xi^2 = d^{exponent}`, with
    /// off-parity entries tagged upper-bound-only. Degrees above `k*` are
    /// dominated (their functionals exceed the degree-`k*` value even with
    /// `||xi|| = 1`) and omitted.
    pub fn profile(&self, d: usize) -> ComplexityProfile {
        let entries = self
            .entries
            .iter()
            .map(|&(ell, exponent, two_sided)| ProfileEntry {
                ell,
                xi_sq: (d as f64).powf(exponent),
                std_error: 0.0,
                upper_bound_only: !two_sided,
            })
            .collect();
        ComplexityProfile { d, entries }
    }
}

/// Synthetic profile of the sample-runtime trade-off mixture: a rare
/// (probability `d^{-k/5}`) component of degree `2k/5` on top of a dominant
/// degree-k component, both norm-stripped, combined as
/// `xi^2(l) = max(d^{-2 alpha} xi_1^2(l), xi_2^2(l))`.
pub fn mixture_profile(k: usize, d: usize) -> Result<ComplexityProfile> {
    if k == 0 || k % 10 != 0 {
        return Err(SimlabError::Config(format!("mixture profile needs k a multiple of 10, got {k}")));
    }
    let k1 = 2 * k / 5;
    let alpha = k as f64 / 5.0;
    let weight_sq = (d as f64).powf(-2.0 * alpha);
    let comp = |k_star: usize, ell: usize| -> Option<f64> {
        if ell > k_star || ell % 2 != k_star % 2 {
            // Only matching-parity degrees carry two-sided rates.
            None
        } else {
            Some((d as f64).powi(-((k_star - ell) as i32)))
        }
    };
    let entries = (1..=k)
        .map(|ell| {
            let low = comp(k1, ell).map(|v| weight_sq * v);
            let high = comp(k, ell);
            let xi_sq = match (low, high) {
                (Some(a), Some(b)) => a.max(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => 0.0,
            };
            ProfileEntry { ell, xi_sq, std_error: 0.0, upper_bound_only: xi_sq == 0.0 }
        })
        .collect();
    Ok(ComplexityProfile { d, entries })
}

/// Low-degree likelihood-ratio bound: the finite sum
/// `sum_{s=1}^{D} (m D^{p/2-1} e (p+1) / M*)^s`, overflow-guarded to
/// `+infinity`.
pub fn ldp_bound(m: f64, degree: usize, p: usize, m_star: f64) -> f64 {
    assert!(m >= 0.0 && m_star > 0.0 && degree >= 1);
    let base = m * (degree as f64).powf(p as f64 / 2.0 - 1.0) * std::f64::consts::E * (p as f64 + 1.0)
        / m_star;
    geometric_sum(base, degree)
}

/// Restricted-projection variant: queries confined to products of degree-l*
/// harmonics, `sum_{s=1}^{floor(D/l*)} (m e D^{l*/2-1} ||xi||^2 / sqrt(n))^s`.
pub fn ldp_bound_restricted(m: f64, degree: usize, ell_star: usize, xi_sq: f64, d: usize) -> f64 {
    assert!(m >= 0.0 && ell_star >= 1 && degree >= 1);
    let base = m
        * std::f64::consts::E
        * (degree as f64).powf(ell_star as f64 / 2.0 - 1.0)
        * xi_sq
        / harmonic_dim_f64(d, ell_star).sqrt();
    geometric_sum(base, degree / ell_star)
}

fn geometric_sum(base: f64, terms: usize) -> f64 {
    if terms == 0 || base <= 0.0 {
        return 0.0;
    }
    if base >= 1.0 && (terms as f64) * base.ln() > 700.0 {
        return f64::INFINITY;
    }
    if (base - 1.0).abs() < 1e-12 {
        return terms as f64;
    }
    let total = base * (base.powi(terms as i32) - 1.0) / (base - 1.0);
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

/// Landscape-smoothing reweighting of the degree-l loss component:
/// `m_l(lambda) = E_Z[ Q_l((1 + lambda Z)/sqrt(1 + 2 lambda Z + lambda^2)) ]
/// / sqrt(n_{d,l})`. Quadrature when `n_mc = 0`, Monte Carlo otherwise;
/// exactly 1 at `lambda = 0`.
pub fn smoothing_weight(ell: usize, lambda: f64, d: usize, n_mc: usize, seed: u64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(SimlabError::Config("smoothing scale must be nonnegative".into()));
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    let basis = GegenbauerBasis::new(d, ell)?;
    let arg = |z: f64| (1.0 + lambda * z) / (1.0 + 2.0 * lambda * z + lambda * lambda).sqrt();
    let mean = if n_mc == 0 {
        let quad = tau_d1_quadrature(d, 512)?;
        let mut acc = 0.0;
        for (&z, &w) in quad.nodes.iter().zip(&quad.weights) {
            acc += w * basis.eval_q(ell, arg(z).clamp(-1.0, 1.0))?;
        }
        acc
    } else {
        use rand_distr::Distribution;
        let beta = rand_distr::Beta::new((d as f64 - 1.0) / 2.0, (d as f64 - 1.0) / 2.0)
            .map_err(|e| SimlabError::Config(e.to_string()))?;
        let mut rng = rng_from_seed(seed);
        let mut acc = 0.0;
        for _ in 0..n_mc {
            let z = 2.0 * beta.sample(&mut rng) - 1.0;
            acc += basis.eval_q(ell, arg(z).clamp(-1.0, 1.0))?;
        }
        acc / n_mc as f64
    };
    Ok(mean / basis.sqrt_dim(ell))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile_from(d: usize, pairs: &[(usize, f64)]) -> ComplexityProfile {
        ComplexityProfile {
            d,
            entries: pairs
                .iter()
                .map(|&(ell, xi_sq)| ProfileEntry { ell, xi_sq, std_error: 0.0, upper_bound_only: false })
                .collect(),
        }
    }

    #[test]
    fn single_entry_profile_echoes() {
        let p = profile_from(50, &[(3, 0.2)]);
        let m = p.m_star().unwrap();
        assert_eq!(m.ell, 3);
        let expect = harmonic_dim_f64(50, 3).sqrt() / 0.2;
        assert!((m.value - expect).abs() < 1e-9 * expect);
        let q = p.q_star().unwrap();
        assert_eq!(q.ell, 3);
        assert!((q.value - harmonic_dim_f64(50, 3) / 0.2).abs() < 1e-6);
        assert!(m.stable && q.stable);
    }

    #[test]
    fn scaling_all_entries_scales_values_not_argmins() {
        let base = profile_from(40, &[(1, 0.01), (2, 0.15), (3, 0.4)]);
        let m0 = base.m_star().unwrap();
        let q0 = base.q_star().unwrap();
        let mut scaled = base.clone();
        for e in scaled.entries.iter_mut() {
            e.xi_sq *= 3.0;
        }
        let m1 = scaled.m_star().unwrap();
        let q1 = scaled.q_star().unwrap();
        assert_eq!(m0.ell, m1.ell);
        assert_eq!(q0.ell, q1.ell);
        assert!((m0.value / m1.value - 3.0).abs() < 1e-9);
        assert!((q0.value / q1.value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn all_zero_profile_is_flagged() {
        let p = profile_from(10, &[(1, 0.0), (2, 0.0)]);
        assert!(p.m_star().is_err());
    }

    #[test]
    fn gaussian_rate_exponents() {
        let r = gaussian_rates(4, true);
        let find = |ell: usize| r.entries.iter().find(|e| e.0 == ell).copied().unwrap();
        assert_eq!(find(2), (2, -1.0, true));
        assert_eq!(find(4), (4, 0.0, true));
        assert_eq!(find(3), (3, -1.0, false));
        let r = gaussian_rates(3, false);
        let find = |ell: usize| r.entries.iter().find(|e| e.0 == ell).copied().unwrap();
        assert_eq!(find(1), (1, -2.0, true));
        assert_eq!(find(3), (3, 0.0, true));
        assert_eq!(find(2), (2, -2.0, false));
    }

    #[test]
    fn gaussian_optimal_degrees() {
        for k in 3..=6usize {
            let d = 200;
            let with = gaussian_rates(k, true).profile(d);
            let q = with.q_star().unwrap();
            assert_eq!(q.ell, 2 - k % 2, "k={k}: runtime degree {}", q.ell);
            let m = with.m_star().unwrap();
            assert!(m.ell % 2 == k % 2 && m.ell <= k, "k={k}: sample degree {}", m.ell);
            let without = gaussian_rates(k, false).profile(d);
            assert_eq!(without.m_star().unwrap().ell, k, "k={k} without norm");
            // sample-optimal degree never below the runtime-optimal one
            assert!(with.m_star().unwrap().ell >= with.q_star().unwrap().ell);
            assert!(without.m_star().unwrap().ell >= without.q_star().unwrap().ell);
        }
    }

    #[test]
    fn mixture_profile_degrees() {
        // Large-d synthetic profile of the trade-off mixture: sample-optimal
        // at k, runtime-optimal at 2k/5.
        let p = mixture_profile(10, 1000).unwrap();
        assert_eq!(p.m_star().unwrap().ell, 10);
        assert_eq!(p.q_star().unwrap().ell, 4);
        assert!(p.m_star().unwrap().ell >= p.q_star().unwrap().ell);
        assert!(mixture_profile(8, 100).is_err());
    }

    #[test]
    fn ldp_bound_behaviour() {
        assert_eq!(ldp_bound(0.0, 20, 3, 100.0), 0.0);
        // base = 1/2 gives a geometric sum below 1 for any D
        let p = 2usize;
        let m_star = 2.0 * (20f64).powf(p as f64 / 2.0 - 1.0) * std::f64::consts::E * 3.0;
        let b = ldp_bound(1.0, 20, p, m_star);
        assert!(b < 1.0 && b > 0.49, "{b}");
        // nondecreasing in m and D
        let b1 = ldp_bound(10.0, 8, 3, 1e4);
        let b2 = ldp_bound(20.0, 8, 3, 1e4);
        let b3 = ldp_bound(20.0, 16, 3, 1e4);
        assert!(b2 >= b1 && b3 >= b2);
        // overflow guard
        assert!(ldp_bound(1e30, 1000, 4, 1.0).is_infinite());
        // restricted variant stays near the unrestricted shape
        let r = ldp_bound_restricted(10.0, 12, 3, 0.3, 30);
        assert!(r.is_finite() && r > 0.0);
    }

    #[test]
    fn smoothing_weight_limits() {
        assert_eq!(smoothing_weight(3, 0.0, 100, 0, 0).unwrap(), 1.0);
        let d = 200;
        // lambda >> 1: m_l(lambda) ~ lambda^{-l}
        for ell in [2usize, 3] {
            let a = smoothing_weight(ell, 8.0, d, 0, 0).unwrap();
            let b = smoothing_weight(ell, 16.0, d, 0, 0).unwrap();
            let ratio = b / a;
            let target = 0.5f64.powi(ell as i32);
            assert!((ratio / target - 1.0).abs() < 0.3, "l={ell}: {ratio} vs {target}");
        }
        // monotone nonincreasing on a grid (numerical check)
        let mut prev = 1.0;
        for i in 1..=16 {
            let lambda = i as f64 * 0.5;
            let v = smoothing_weight(2, lambda, d, 0, 0).unwrap();
            assert!(v <= prev + 1e-9, "lambda={lambda}: {v} > {prev}");
            prev = v;
        }
        // Monte Carlo path agrees with quadrature
        let q = smoothing_weight(2, 2.0, 50, 0, 0).unwrap();
        let mc = smoothing_weight(2, 2.0, 50, 200_000, 7).unwrap();
        assert!((q - mc).abs() < 0.01, "{q} vs {mc}");
    }

    #[test]
    fn estimated_profile_matches_direct_norms() {
        use crate::model::{LinkModel, LinkSpec};
        let model = LinkModel::new(LinkSpec::GaussianHermite { k: 2, sigma: 0.5 }, 25).unwrap();
        let p = ComplexityProfile::estimate(&model, 3, 4000, 3).unwrap();
        assert_eq!(p.entries.len(), 3);
        let (direct, _) = crate::transform::xi_norm(&model, 2, 4000, 3).unwrap();
        let e = &p.entries[1];
        assert_eq!(e.ell, 2);
        assert!((e.xi_sq - direct).abs() < 1e-12);
        // degree-2 dominates for this link
        assert_eq!(p.q_star().unwrap().ell, 2);
    }
}
