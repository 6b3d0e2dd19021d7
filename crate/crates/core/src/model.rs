//! Spherical single-index models: declarative link specifications, planted
//! and null sampling, and the on-disk dataset format.
//!
//! A sample is the polar pair `x = r z` with radius r independent of the
//! uniform direction z, and a label drawn from the conditional law at
//! `(r, <w*, z>)`. Directions are generated as `z = H g/|g|` where H is the
//! deterministic Householder reflection mapping `e_1` to the planted
//! direction: the projection `<w*, z>` then equals the first coordinate of
//! `g/|g|` regardless of the planted direction, so two runs with the same
//! seed and different planted directions produce identical `(y, r, t)`
//! streams and directions related by an explicit orthogonal map.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::hermite_eval;
use crate::quadrature::{chi_quadrature, Quadrature};
use crate::rng::{rng_stream, splitmix64};
use crate::vec_ops::{axpy, dot, norm2, normalize};
use crate::{Result, SimlabError};

/// Radial law of the input norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialLaw {
    /// `r ~ chi_d` (Gaussian inputs).
    Chi,
    /// Deterministic radius (norm-stripped models).
    Fixed(f64),
}

/// Declarative description of a spherical single-index model.
///
/// Every variant exposes both a sampler and a conditional density
/// `p(y | r, t)`, `t = <w*, z>`, so the Gegenbauer coefficients of the
/// likelihood ratio can be computed by one-dimensional quadrature.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum LinkSpec {
    /// `y = he_k(r t) + sigma g` with chi_d radius: the Gaussian model whose
    /// generative and information exponents both equal k (pure noise when
    /// k = 0).
    GaussianHermite { k: usize, sigma: f64 },
    /// Norm-stripped wrapper: the label is drawn from the inner model at a
    /// fresh chi_d radius, while the observed radius is fixed to 1.
    Normalized { inner: Box<LinkSpec> },
    /// Two-component mixture; `weight` is the probability of drawing the
    /// first component.
    Mixture { weight: f64, first: Box<LinkSpec>, second: Box<LinkSpec> },
}

impl LinkSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LinkSpec::GaussianHermite { sigma, .. } => {
                if !(*sigma > 0.0) {
                    return Err(SimlabError::Config("gaussian_hermite needs sigma > 0".into()));
                }
            }
            LinkSpec::Normalized { inner } => inner.validate()?,
            LinkSpec::Mixture { weight, first, second } => {
                if !(*weight > 0.0 && *weight < 1.0) {
                    return Err(SimlabError::Config("mixture weight must be in (0,1)".into()));
                }
                first.validate()?;
                second.validate()?;
                if first.radial_law() != second.radial_law() {
                    return Err(SimlabError::Config(
                        "mixture components must share a radial law".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn radial_law(&self) -> RadialLaw {
        match self {
            LinkSpec::GaussianHermite { .. } => RadialLaw::Chi,
            LinkSpec::Normalized { .. } => RadialLaw::Fixed(1.0),
            LinkSpec::Mixture { first, .. } => first.radial_law(),
        }
    }

    /// Hermite degree of the link (its information exponent): the smallest k
    /// with `E[Y he_k(G)] != 0`.
    pub fn hermite_degree(&self) -> Option<usize> {
        match self {
            LinkSpec::GaussianHermite { k, .. } if *k >= 1 => Some(*k),
            LinkSpec::GaussianHermite { .. } => None,
            LinkSpec::Normalized { inner } => inner.hermite_degree(),
            LinkSpec::Mixture { .. } => None,
        }
    }

    /// Generative exponent: the smallest k with `E[he_k(G) | Y]` not
    /// identically zero. For an additive-noise Hermite link this is 1 for
    /// odd degree and 2 for even degree; conditioning on the label reveals
    /// low-degree moments of the projection through the nonlinearity.
    pub fn generative_exponent(&self) -> Option<usize> {
        self.hermite_degree().map(|k| 2 - k % 2)
    }

    /// Stable short fingerprint of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("link serialization");
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for b in json.bytes() {
            h = splitmix64(h ^ b as u64);
        }
        format!("{h:016x}")
    }
}

/// Sample-runtime trade-off mixture: a rare low-degree component
/// (exponent 2k/5, drawn with probability d^{-k/5}) on top of a dominant
/// degree-k component, both norm-stripped.
pub fn mixture_link(k: usize, d: usize) -> Result<LinkSpec> {
    if k == 0 || k % 10 != 0 {
        return Err(SimlabError::Config(format!(
            "mixture_link needs k a positive multiple of 10, got {k}"
        )));
    }
    if d < 3 {
        return Err(SimlabError::Config(format!("mixture_link needs d >= 3, got {d}")));
    }
    let alpha = k as f64 / 5.0;
    let tau = 1.0;
    let low = LinkSpec::Normalized {
        inner: Box::new(LinkSpec::GaussianHermite { k: 2 * k / 5, sigma: tau }),
    };
    let high = LinkSpec::Normalized { inner: Box::new(LinkSpec::GaussianHermite { k, sigma: tau }) };
    let spec = LinkSpec::Mixture {
        weight: (d as f64).powf(-alpha),
        first: Box::new(low),
        second: Box::new(high),
    };
    spec.validate()?;
    Ok(spec)
}

/// A link specification bound to an ambient dimension, with the chi-radius
/// quadrature prepared for marginalized conditional densities. Immutable.
#[derive(Debug, Clone)]
pub struct LinkModel {
    pub spec: LinkSpec,
    pub d: usize,
    chi: Quadrature,
}

const CHI_MARGINAL_POINTS: usize = 64;

fn gauss_pdf(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

impl LinkModel {
    pub fn new(spec: LinkSpec, d: usize) -> Result<Self> {
        spec.validate()?;
        if d < 3 {
            return Err(SimlabError::Config(format!("LinkModel needs d >= 3, got {d}")));
        }
        let chi = chi_quadrature(d, CHI_MARGINAL_POINTS)?;
        Ok(Self { spec, d, chi })
    }

    pub fn radial_law(&self) -> RadialLaw {
        self.spec.radial_law()
    }

    /// Whether the observed radius is deterministic (norm-stripped models).
    pub fn fixed_radius(&self) -> Option<f64> {
        match self.radial_law() {
            RadialLaw::Fixed(c) => Some(c),
            RadialLaw::Chi => None,
        }
    }

    pub fn sample_radius<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.radial_law() {
            RadialLaw::Chi => sample_chi(rng, self.d),
            RadialLaw::Fixed(c) => c,
        }
    }

    /// Draw a label conditional on the observed radius and projection.
    pub fn sample_label<R: Rng>(&self, rng: &mut R, r: f64, t: f64) -> f64 {
        Self::sample_label_spec(&self.spec, rng, self.d, r, t)
    }

    fn sample_label_spec<R: Rng>(spec: &LinkSpec, rng: &mut R, d: usize, r: f64, t: f64) -> f64 {
        match spec {
            LinkSpec::GaussianHermite { k, sigma } => {
                let noise: f64 = StandardNormal.sample(rng);
                hermite_eval(*k, r * t) + sigma * noise
            }
            LinkSpec::Normalized { inner } => {
                let fresh = sample_chi(rng, d);
                Self::sample_label_spec(inner, rng, d, fresh, t)
            }
            LinkSpec::Mixture { weight, first, second } => {
                let u: f64 = rng.gen_range(0.0..1.0);
                if u < *weight {
                    Self::sample_label_spec(first, rng, d, r, t)
                } else {
                    Self::sample_label_spec(second, rng, d, r, t)
                }
            }
        }
    }

    /// Conditional density `p(y | r, t)`.
    pub fn conditional_density(&self, y: f64, r: f64, t: f64) -> f64 {
        self.density_spec(&self.spec, y, r, t)
    }

    fn density_spec(&self, spec: &LinkSpec, y: f64, r: f64, t: f64) -> f64 {
        match spec {
            LinkSpec::GaussianHermite { k, sigma } => gauss_pdf(y - hermite_eval(*k, r * t), *sigma),
            LinkSpec::Normalized { inner } => {
                self.chi.integrate(|fresh| self.density_spec(inner, y, fresh, t))
            }
            LinkSpec::Mixture { weight, first, second } => {
                weight * self.density_spec(first, y, r, t)
                    + (1.0 - weight) * self.density_spec(second, y, r, t)
            }
        }
    }
}

/// One chi_d radius: `sqrt(2 Gamma(d/2, 1))`.
pub fn sample_chi<R: Rng>(rng: &mut R, d: usize) -> f64 {
    let gamma = Gamma::new(d as f64 / 2.0, 1.0).expect("chi shape");
    (2.0 * gamma.sample(rng)).sqrt()
}

/// A dataset of polar samples in structure-of-arrays layout.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub d: usize,
    pub y: Vec<f64>,
    pub r: Vec<f64>,
    /// Row-major `m x d` directions.
    pub z: Vec<f64>,
    pub planted_direction: Option<Vec<f64>>,
    pub link_fingerprint: String,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.d..(i + 1) * self.d]
    }

    pub fn view(&self) -> DatasetView<'_> {
        DatasetView {
            d: self.d,
            y: &self.y,
            r: &self.r,
            z: &self.z,
            planted_direction: self.planted_direction.as_deref(),
        }
    }

    /// Write in the versioned text format: a header line followed by CSV
    /// rows `y,r,z_1,...,z_d` with 17 significant digits.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(
            w,
            "# simlab-v1 d={} m={} link={} seed={}",
            self.d,
            self.len(),
            self.link_fingerprint,
            self.seed
        )?;
        for i in 0..self.len() {
            write!(w, "{:.16e},{:.16e}", self.y[i], self.r[i])?;
            for v in self.z_row(i) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines.next().ok_or_else(|| SimlabError::Parse("empty dataset file".into()))??;
        let mut d = None;
        let mut m = None;
        let mut link = String::new();
        let mut seed = 0u64;
        if !header.starts_with("# simlab-v1") {
            return Err(SimlabError::Parse(format!("unrecognized header: {header}")));
        }
        for tok in header.split_whitespace().skip(2) {
            let (key, val) =
                tok.split_once('=').ok_or_else(|| SimlabError::Parse(format!("bad header token: {tok}")))?;
            match key {
                "d" => d = Some(val.parse::<usize>().map_err(|e| SimlabError::Parse(e.to_string()))?),
                "m" => m = Some(val.parse::<usize>().map_err(|e| SimlabError::Parse(e.to_string()))?),
                "link" => link = val.to_string(),
                "seed" => seed = val.parse().map_err(|_| SimlabError::Parse("bad seed".into()))?,
                _ => {}
            }
        }
        let d = d.ok_or_else(|| SimlabError::Parse("header missing d".into()))?;
        let m = m.ok_or_else(|| SimlabError::Parse("header missing m".into()))?;
        let mut out = Dataset {
            d,
            y: Vec::with_capacity(m),
            r: Vec::with_capacity(m),
            z: Vec::with_capacity(m * d),
            planted_direction: None,
            link_fingerprint: link,
            seed,
        };
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: &str| -> Result<f64> {
                s.parse().map_err(|e: std::num::ParseFloatError| SimlabError::Parse(e.to_string()))
            };
            let y = parse(parts.next().ok_or_else(|| SimlabError::Parse("row missing y".into()))?)?;
            let r = parse(parts.next().ok_or_else(|| SimlabError::Parse("row missing r".into()))?)?;
            out.y.push(y);
            out.r.push(r);
            for p in parts {
                out.z.push(parse(p)?);
            }
            if out.z.len() != out.y.len() * d {
                return Err(SimlabError::Parse(format!("row {} has wrong width", out.y.len())));
            }
        }
        if out.len() != m {
            return Err(SimlabError::Parse(format!("expected {m} rows, found {}", out.len())));
        }
        Ok(out)
    }
}

/// Borrowed window onto a dataset; estimators consume these so that sample
/// budgets can be split without copying.
#[derive(Debug, Clone, Copy)]
pub struct DatasetView<'a> {
    pub d: usize,
    pub y: &'a [f64],
    pub r: &'a [f64],
    pub z: &'a [f64],
    pub planted_direction: Option<&'a [f64]>,
}

impl<'a> DatasetView<'a> {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn z_row(&self, i: usize) -> &'a [f64] {
        &self.z[i * self.d..(i + 1) * self.d]
    }

    pub fn slice(&self, start: usize, end: usize) -> DatasetView<'a> {
        DatasetView {
            d: self.d,
            y: &self.y[start..end],
            r: &self.r[start..end],
            z: &self.z[start * self.d..end * self.d],
            planted_direction: self.planted_direction,
        }
    }
}

/// Householder reflection mapping `e_1` to `w`; involutive and symmetric.
pub(crate) struct Reflection {
    v: Option<Vec<f64>>,
    inv_half_norm_sq: f64,
}

impl Reflection {
    pub(crate) fn onto(w: &[f64]) -> Self {
        // v = e1 - w
        let mut v: Vec<f64> = w.iter().map(|x| -x).collect();
        v[0] += 1.0;
        let nsq = dot(&v, &v);
        if nsq < 1e-24 {
            Self { v: None, inv_half_norm_sq: 0.0 }
        } else {
            Self { v: Some(v), inv_half_norm_sq: 2.0 / nsq }
        }
    }

    pub(crate) fn apply(&self, x: &mut [f64]) {
        if let Some(v) = &self.v {
            let c = self.inv_half_norm_sq * dot(v, x);
            axpy(-c, v, x);
        }
    }
}

const SAMPLE_CHUNK: usize = 4096;

fn check_unit_direction(w: &[f64]) -> Result<()> {
    if (norm2(w) - 1.0).abs() > 1e-10 {
        return Err(SimlabError::Domain("planted direction must be a unit vector".into()));
    }
    Ok(())
}

/// Draw m i.i.d. samples from the planted model: uniform direction,
/// independent radius, label from the conditional law at `(r, <w*, z>)`.
/// Chunked counter-based streams make the output independent of how the
/// chunks are consumed.
pub fn sample_planted(model: &LinkModel, w_star: &[f64], m: usize, seed: u64) -> Result<Dataset> {
    check_unit_direction(w_star)?;
    if w_star.len() != model.d {
        return Err(SimlabError::Config("planted direction has wrong dimension".into()));
    }
    let d = model.d;
    let reflect = Reflection::onto(w_star);
    let mut out = Dataset {
        d,
        y: Vec::with_capacity(m),
        r: Vec::with_capacity(m),
        z: Vec::with_capacity(m * d),
        planted_direction: Some(w_star.to_vec()),
        link_fingerprint: model.spec.fingerprint(),
        seed,
    };
    let mut g = vec![0.0; d];
    for start in (0..m).step_by(SAMPLE_CHUNK) {
        let stop = (start + SAMPLE_CHUNK).min(m);
        let mut rng = rng_stream(seed, (start / SAMPLE_CHUNK) as u64);
        for _ in start..stop {
            for x in g.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            if normalize(&mut g) <= 1e-12 {
                g[0] = 1.0;
            }
            let t = g[0];
            reflect.apply(&mut g);
            let r = model.sample_radius(&mut rng);
            let y = model.sample_label(&mut rng, r, t);
            out.y.push(y);
            out.r.push(r);
            out.z.extend_from_slice(&g);
        }
    }
    Ok(out)
}

/// Draw m samples from the null model: `(y, r)` from the planted marginal
/// (via a hidden fresh projection), direction independent and uniform.
pub fn sample_null(model: &LinkModel, m: usize, seed: u64) -> Result<Dataset> {
    let d = model.d;
    let beta = Beta::new((d as f64 - 1.0) / 2.0, (d as f64 - 1.0) / 2.0)
        .map_err(|e| SimlabError::Config(format!("beta law: {e}")))?;
    let mut out = Dataset {
        d,
        y: Vec::with_capacity(m),
        r: Vec::with_capacity(m),
        z: Vec::with_capacity(m * d),
        planted_direction: None,
        link_fingerprint: model.spec.fingerprint(),
        seed,
    };
    let mut g = vec![0.0; d];
    for start in (0..m).step_by(SAMPLE_CHUNK) {
        let stop = (start + SAMPLE_CHUNK).min(m);
        let mut rng = rng_stream(seed, (start / SAMPLE_CHUNK) as u64);
        for _ in start..stop {
            for x in g.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
            }
            if normalize(&mut g) <= 1e-12 {
                g[0] = 1.0;
            }
            let hidden_t = 2.0 * beta.sample(&mut rng) - 1.0;
            let r = model.sample_radius(&mut rng);
            let y = model.sample_label(&mut rng, r, hidden_t);
            out.y.push(y);
            out.r.push(r);
            out.z.extend_from_slice(&g);
        }
    }
    Ok(out)
}

/// Hidden-projection draw of the `(y, r)` marginal only; used by Monte Carlo
/// estimates of likelihood-coefficient norms where directions are not needed.
pub fn sample_marginal<R: Rng>(model: &LinkModel, rng: &mut R) -> (f64, f64) {
    let d = model.d;
    let beta = Beta::new((d as f64 - 1.0) / 2.0, (d as f64 - 1.0) / 2.0).expect("beta law");
    let hidden_t = 2.0 * beta.sample(rng) - 1.0;
    let r = model.sample_radius(rng);
    let y = model.sample_label(rng, r, hidden_t);
    (y, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn gh(k: usize, sigma: f64) -> LinkSpec {
        LinkSpec::GaussianHermite { k, sigma }
    }

    #[test]
    fn fingerprint_is_stable_and_distinguishes() {
        let a = gh(2, 0.5).fingerprint();
        assert_eq!(a, gh(2, 0.5).fingerprint());
        assert_ne!(a, gh(3, 0.5).fingerprint());
        assert_ne!(a, LinkSpec::Normalized { inner: Box::new(gh(2, 0.5)) }.fingerprint());
    }

    #[test]
    fn planted_sampling_moments() {
        let d = 30;
        let m = 20_000;
        let model = LinkModel::new(gh(2, 0.5), d).unwrap();
        let mut rng = rng_from_seed(5);
        let w = crate::tensor::random_unit(&mut rng, d);
        let data = sample_planted(&model, &w, m, 42).unwrap();
        assert_eq!(data.len(), m);
        // E[r^2] = d within 3 standard errors (var of r^2 is 2d).
        let mean_r2: f64 = data.r.iter().map(|r| r * r).sum::<f64>() / m as f64;
        let se = (2.0 * d as f64 / m as f64).sqrt();
        assert!((mean_r2 - d as f64).abs() < 3.0 * se, "{mean_r2}");
        // E[<w,z>^2] = 1/d within 3 standard errors.
        let mean_t2: f64 = (0..m).map(|i| dot(&w, data.z_row(i)).powi(2)).sum::<f64>() / m as f64;
        let se = (2.0 / (d as f64 * (d as f64 + 2.0)) / m as f64).sqrt() * 2.0;
        assert!((mean_t2 - 1.0 / d as f64).abs() < 3.0 * se, "{mean_t2}");
        // directions are unit
        for i in 0..50 {
            assert!((norm2(data.z_row(i)) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_noise_conditional_mean() {
        // At projection t = 1 the mean label is he_k(r).
        let d = 8;
        let model = LinkModel::new(gh(3, 1e-9), d).unwrap();
        let mut rng = rng_from_seed(3);
        for _ in 0..20 {
            let r = model.sample_radius(&mut rng);
            let y = model.sample_label(&mut rng, r, 1.0);
            assert!((y - hermite_eval(3, r)).abs() < 1e-6);
        }
    }

    #[test]
    fn byte_identical_regeneration_and_io() {
        let d = 6;
        let model = LinkModel::new(gh(2, 0.5), d).unwrap();
        let mut rng = rng_from_seed(8);
        let w = crate::tensor::random_unit(&mut rng, d);
        let a = sample_planted(&model, &w, 500, 7).unwrap();
        let b = sample_planted(&model, &w, 500, 7).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.r, b.r);
        assert_eq!(a.z, b.z);
        let dir = std::env::temp_dir().join(format!("simlab_test_{}.csv", std::process::id()));
        a.write_to(&dir).unwrap();
        let c = Dataset::read_from(&dir).unwrap();
        std::fs::remove_file(&dir).ok();
        assert_eq!(a.len(), c.len());
        for i in 0..a.len() {
            assert_eq!(a.y[i], c.y[i]);
            assert_eq!(a.r[i], c.r[i]);
            assert_eq!(a.z_row(i), c.z_row(i));
        }
    }

    #[test]
    fn rotational_equivariance_exact_labels() {
        // Same seed, two planted directions: identical label streams, and
        // directions related by the explicit orthogonal map H' H.
        let d = 12;
        let model = LinkModel::new(gh(2, 0.5), d).unwrap();
        let mut rng = rng_from_seed(19);
        let w1 = crate::tensor::random_unit(&mut rng, d);
        let w2 = crate::tensor::random_unit(&mut rng, d);
        let a = sample_planted(&model, &w1, 300, 11).unwrap();
        let b = sample_planted(&model, &w2, 300, 11).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.r, b.r);
        let h1 = Reflection::onto(&w1);
        let h2 = Reflection::onto(&w2);
        for i in 0..a.len() {
            let mut za = a.z_row(i).to_vec();
            // R = H2 H1 maps z_a to z_b (both reflections are involutions).
            h1.apply(&mut za);
            h2.apply(&mut za);
            let zb = b.z_row(i);
            for j in 0..d {
                assert!((za[j] - zb[j]).abs() < 1e-12, "sample {i} coord {j}");
            }
            // and the projections onto the planted directions agree
            assert!((dot(a.z_row(i), &w1) - dot(zb, &w2)).abs() < 1e-12);
        }
    }

    #[test]
    fn null_labels_match_planted_marginal() {
        // Two-sample KS between planted and null label samples.
        let d = 15;
        let m = 4000;
        let model = LinkModel::new(gh(2, 0.5), d).unwrap();
        let mut rng = rng_from_seed(2);
        let w = crate::tensor::random_unit(&mut rng, d);
        let planted = sample_planted(&model, &w, m, 3).unwrap();
        let null = sample_null(&model, m, 4).unwrap();
        let mut ys1 = planted.y.clone();
        let mut ys2 = null.y.clone();
        ys1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks = 0.0f64;
        let (mut i, mut j) = (0usize, 0usize);
        while i < m && j < m {
            if ys1[i] <= ys2[j] {
                i += 1;
            } else {
                j += 1;
            }
            ks = ks.max((i as f64 / m as f64 - j as f64 / m as f64).abs());
        }
        // 1% critical value for two-sample KS: 1.63 sqrt(2/m).
        let crit = 1.63 * (2.0 / m as f64).sqrt();
        assert!(ks < crit, "ks={ks} crit={crit}");
        // null correlation with any fixed direction is near zero
        let corr: f64 = (0..m).map(|i| null.y[i] * dot(&w, null.z_row(i))).sum::<f64>() / m as f64;
        let var: f64 =
            (0..m).map(|i| (null.y[i] * dot(&w, null.z_row(i))).powi(2)).sum::<f64>() / m as f64;
        assert!(corr.abs() < 4.0 * (var / m as f64).sqrt());
        // m = 0 gives an empty dataset
        assert!(sample_null(&model, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn normalized_wrapper_stores_unit_radius() {
        let d = 10;
        let spec = LinkSpec::Normalized { inner: Box::new(gh(3, 0.5)) };
        let model = LinkModel::new(spec, d).unwrap();
        let mut rng = rng_from_seed(6);
        let w = crate::tensor::random_unit(&mut rng, d);
        let data = sample_planted(&model, &w, 100, 5).unwrap();
        assert!(data.r.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn sampler_matches_density_ks() {
        // One-sample KS of sampled labels against the quadrature CDF of the
        // conditional density, at fixed (r, t).
        let d = 20;
        for spec in [gh(2, 0.5), LinkSpec::Normalized { inner: Box::new(gh(2, 0.5)) }] {
            let model = LinkModel::new(spec, d).unwrap();
            let (r, t) = (model.fixed_radius().unwrap_or(4.0), 0.15);
            let n = 4000;
            let mut rng = rng_from_seed(77);
            let mut ys: Vec<f64> = (0..n).map(|_| model.sample_label(&mut rng, r, t)).collect();
            ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // CDF via trapezoid integration of the density on a fine grid.
            let (lo, hi) = (ys[0] - 1.0, ys[n - 1] + 1.0);
            let grid = 4000;
            let step = (hi - lo) / grid as f64;
            let mut cdf = vec![0.0; grid + 1];
            let mut prev = model.conditional_density(lo, r, t);
            for gidx in 1..=grid {
                let cur = model.conditional_density(lo + gidx as f64 * step, r, t);
                cdf[gidx] = cdf[gidx - 1] + 0.5 * (prev + cur) * step;
                prev = cur;
            }
            let total = cdf[grid];
            assert!((total - 1.0).abs() < 1e-3, "density mass {total}");
            let mut ks = 0.0f64;
            for (i, &yv) in ys.iter().enumerate() {
                let gidx = (((yv - lo) / step) as usize).min(grid);
                let f = cdf[gidx] / total;
                ks = ks.max((f - i as f64 / n as f64).abs()).max((f - (i + 1) as f64 / n as f64).abs());
            }
            let crit = 1.63 / (n as f64).sqrt();
            assert!(ks < crit, "ks={ks} crit={crit}");
        }
    }

    #[test]
    fn mixture_link_construction() {
        let spec = mixture_link(10, 8).unwrap();
        match &spec {
            LinkSpec::Mixture { weight, first, second } => {
                assert!((*weight - (8f64).powf(-2.0)).abs() < 1e-12);
                assert_eq!(first.hermite_degree(), Some(4));
                assert_eq!(second.hermite_degree(), Some(10));
            }
            _ => panic!("expected mixture"),
        }
        assert_eq!(gh(3, 0.5).generative_exponent(), Some(1));
        assert_eq!(gh(4, 0.5).generative_exponent(), Some(2));
        assert!(mixture_link(7, 8).is_err());
        // weight -> 1 degenerates to the first component, weight -> 0 to the
        // second: check via the density.
        let d = 10;
        let a = LinkModel::new(
            LinkSpec::Mixture {
                weight: 1.0 - 1e-12,
                first: Box::new(gh(1, 0.5)),
                second: Box::new(gh(2, 0.5)),
            },
            d,
        )
        .unwrap();
        let pure = LinkModel::new(gh(1, 0.5), d).unwrap();
        for &y in &[-0.4, 0.2, 1.0] {
            assert!(
                (a.conditional_density(y, 2.0, 0.3) - pure.conditional_density(y, 2.0, 0.3)).abs()
                    < 1e-9
            );
        }
    }
}
