//! Orthogonal-polynomial machinery on the sphere.
//!
//! Gegenbauer polynomials here are orthonormal with respect to the law of a
//! single coordinate of a uniform point on the (d-1)-sphere. Two
//! normalizations appear: `Q_l` has unit L2 norm and `Q_l(1) = sqrt(n_{d,l})`
//! where `n_{d,l}` is the dimension of the degree-l harmonic subspace, while
//! `P_l = Q_l / sqrt(n_{d,l})` satisfies `P_l(1) = 1`. Evaluation runs the
//! three-term recurrence on the P normalization, which keeps intermediates
//! O(1), and rescales once; the Q normalization reaches magnitude d^{l/2} at
//! the endpoint.
//!
//! The module also provides the expansion of probabilist Hermite polynomials
//! into Gegenbauer polynomials, `He_k(r z) = sum_l beta_{k,l}(r) Q_l(z)`,
//! whose radial coefficients drive the Gaussian specialization. Their
//! monomial coefficients involve an alternating binomial sum, so they are
//! computed in exact rational arithmetic and only promoted to floating point
//! at the boundary.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::{Result, SimlabError};

/// Largest `d * l` product accepted by the exact integer dimension routine.
/// Beyond this the result may exceed `u128`; callers needing only magnitude
/// should use [`harmonic_dim_f64`].
const DIM_EXACT_GUARD: usize = 1 << 22;

fn binomial_biguint(n: usize, k: usize) -> BigUint {
    let k = k.min(n - k.min(n));
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= BigUint::from(n - i);
        den *= BigUint::from(i + 1);
    }
    num / den
}

fn harmonic_dim_biguint(d: usize, ell: usize) -> BigUint {
    if ell == 0 {
        return BigUint::one();
    }
    let num = BigUint::from(2 * ell + d - 2) * binomial_biguint(d + ell - 3, ell);
    let den = BigUint::from(d - 2);
    debug_assert!((&num % &den).is_zero());
    num / den
}

/// Dimension `n_{d,l}` of the degree-l spherical harmonic subspace,
/// `n_{d,l} = (2l+d-2)/(d-2) * C(d+l-3, l)`, in exact integer arithmetic.
///
/// Returns an overflow error instead of wrapping when the value exceeds
/// `u128` or the guard bound.
pub fn harmonic_dim(d: usize, ell: usize) -> Result<u128> {
    if d < 3 {
        return Err(SimlabError::Domain(format!("harmonic_dim requires d >= 3, got {d}")));
    }
    if d.saturating_mul(ell.max(1)) > DIM_EXACT_GUARD {
        return Err(SimlabError::Overflow { what: "harmonic_dim", d, ell });
    }
    harmonic_dim_biguint(d, ell)
        .to_u128()
        .ok_or(SimlabError::Overflow { what: "harmonic_dim", d, ell })
}

/// `n_{d,l}` as a floating point value (exact integer computation, rounded
/// once at the end). Valid far beyond the `u128` range.
pub fn harmonic_dim_f64(d: usize, ell: usize) -> f64 {
    assert!(d >= 3, "harmonic_dim_f64 requires d >= 3");
    harmonic_dim_biguint(d, ell).to_f64().unwrap_or(f64::INFINITY)
}

/// Boundary clamp width: inner products of unit vectors routinely round to
/// just outside [-1, 1].
const T_CLAMP: f64 = 1e-12;

fn clamp_t(t: f64) -> Result<f64> {
    if t.abs() <= 1.0 {
        Ok(t)
    } else if t.abs() <= 1.0 + T_CLAMP {
        Ok(t.clamp(-1.0, 1.0))
    } else {
        Err(SimlabError::Domain(format!("gegenbauer argument |t|={} outside [-1,1]", t.abs())))
    }
}

/// `P_l(t)`, the Gegenbauer polynomial normalized so `P_l(1) = 1`, via the
/// three-term recurrence
/// `(l+d-3) P_l = (2l+d-4) t P_{l-1} - (l-1) P_{l-2}`.
pub fn gegenbauer_p(d: usize, ell: usize, t: f64) -> f64 {
    debug_assert!(d >= 3);
    if ell == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = t;
    for l in 2..=ell {
        let next = ((2 * l + d - 4) as f64 * t * cur - (l - 1) as f64 * prev) / (l + d - 3) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// `Q_l(t)`, the orthonormal Gegenbauer polynomial: `Q_l = sqrt(n_{d,l}) P_l`.
pub fn gegenbauer_eval(d: usize, ell: usize, t: f64) -> Result<f64> {
    let t = clamp_t(t)?;
    if ell == 0 {
        return Ok(1.0);
    }
    Ok(harmonic_dim_f64(d, ell).sqrt() * gegenbauer_p(d, ell, t))
}

/// Constant in the derivative identity `Q_l^{(d)'} = C(d,l) Q_{l-1}^{(d+2)}`.
pub fn gegenbauer_derivative_coeff(d: usize, ell: usize) -> f64 {
    (ell * (ell + d - 2)) as f64 * harmonic_dim_f64(d, ell).sqrt()
        / ((d - 1) as f64 * harmonic_dim_f64(d + 2, ell - 1).sqrt())
}

/// Derivative `Q_l^{(d)'}(t)`. Returns 0 for the constant `l = 0`.
pub fn gegenbauer_derivative(d: usize, ell: usize, t: f64) -> Result<f64> {
    if ell == 0 {
        return Ok(0.0);
    }
    let t = clamp_t(t)?;
    Ok(gegenbauer_derivative_coeff(d, ell) * harmonic_dim_f64(d + 2, ell - 1).sqrt() * gegenbauer_p(d + 2, ell - 1, t))
}

/// Precomputed evaluation tables for one `(d, lmax)` pair.
///
/// Caches `sqrt(n_{d,l})` and the derivative constants so estimators can
/// evaluate `Q_l` and `Q_l'` millions of times without touching big-integer
/// arithmetic. Immutable after construction and safe to share between
/// workers.
#[derive(Debug, Clone)]
pub struct GegenbauerBasis {
    d: usize,
    lmax: usize,
    sqrt_n: Vec<f64>,
    /// `C(d,l) * sqrt(n_{d+2,l-1})` for l >= 1: full prefactor mapping
    /// `P_{l-1}^{(d+2)}` to `Q_l^{(d)'}`.
    deriv_scale: Vec<f64>,
}

impl GegenbauerBasis {
    pub fn new(d: usize, lmax: usize) -> Result<Self> {
        if d < 3 {
            return Err(SimlabError::Domain(format!("GegenbauerBasis requires d >= 3, got {d}")));
        }
        let sqrt_n: Vec<f64> = (0..=lmax).map(|l| harmonic_dim_f64(d, l).sqrt()).collect();
        let mut deriv_scale = vec![0.0; lmax + 1];
        for l in 1..=lmax {
            deriv_scale[l] = gegenbauer_derivative_coeff(d, l) * harmonic_dim_f64(d + 2, l - 1).sqrt();
        }
        Ok(Self { d, lmax, sqrt_n, deriv_scale })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    /// `sqrt(n_{d,l})`, i.e. `Q_l(1)`.
    pub fn sqrt_dim(&self, ell: usize) -> f64 {
        self.sqrt_n[ell]
    }

    pub fn eval_q(&self, ell: usize, t: f64) -> Result<f64> {
        let t = clamp_t(t)?;
        Ok(self.sqrt_n[ell] * gegenbauer_p(self.d, ell, t))
    }

    pub fn eval_q_prime(&self, ell: usize, t: f64) -> Result<f64> {
        if ell == 0 {
            return Ok(0.0);
        }
        let t = clamp_t(t)?;
        Ok(self.deriv_scale[ell] * gegenbauer_p(self.d + 2, ell - 1, t))
    }

    /// `P_l(t) = Q_l(t) / sqrt(n_{d,l})`.
    pub fn eval_p(&self, ell: usize, t: f64) -> Result<f64> {
        let t = clamp_t(t)?;
        Ok(gegenbauer_p(self.d, ell, t))
    }

    /// All of `Q_0(t), ..., Q_lmax(t)` in one recurrence sweep.
    pub fn eval_q_all(&self, t: f64, out: &mut Vec<f64>) -> Result<()> {
        let t = clamp_t(t)?;
        out.clear();
        out.push(1.0);
        if self.lmax == 0 {
            return Ok(());
        }
        let mut prev = 1.0;
        let mut cur = t;
        out.push(self.sqrt_n[1] * cur);
        for l in 2..=self.lmax {
            let next =
                ((2 * l + self.d - 4) as f64 * t * cur - (l - 1) as f64 * prev) / (l + self.d - 3) as f64;
            prev = cur;
            cur = next;
            out.push(self.sqrt_n[l] * cur);
        }
        Ok(())
    }
}

/// Orthonormal probabilist Hermite polynomial `he_k(x)` with
/// `E[he_j(G) he_k(G)] = delta_{jk}` for standard Gaussian `G`.
pub fn hermite_eval(k: usize, x: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => x,
        _ => {
            let mut prev = 1.0;
            let mut cur = x;
            for j in 1..k {
                let next = (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Derivative of the orthonormal Hermite polynomial: `he_k' = sqrt(k) he_{k-1}`.
pub fn hermite_derivative(k: usize, x: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        (k as f64).sqrt() * hermite_eval(k - 1, x)
    }
}

fn big_factorial(n: usize) -> BigUint {
    let mut f = BigUint::one();
    for i in 2..=n {
        f *= BigUint::from(i);
    }
    f
}

/// Radial coefficient `beta_{k,l}(r)` of the Hermite-to-Gegenbauer expansion
/// `He_k(r z) = sum_l beta_{k,l}(r) Q_l^{(d)}(z)`.
///
/// The polynomial is `scale * sum_{i=0}^{N} C(N,i) (-1)^{N-i} r^{l+2i} /
/// prod_{j=0}^{l+i-1}(d+2j)` with `N = (k-l)/2` and
/// `scale = sqrt(k! n_{d,l}) / (N! 2^N)`; it vanishes when `l > k` or the
/// parities of `k` and `l` differ. The rational part of each coefficient is
/// kept exact; the square-root scale is the only floating-point factor.
#[derive(Debug, Clone)]
pub struct BetaCoefficient {
    pub k: usize,
    pub ell: usize,
    pub d: usize,
    /// Exact rational parts `C(N,i)(-1)^{N-i} / (N! 2^N prod(d+2j))` of the
    /// coefficient of `r^{l+2i}`.
    rational: Vec<BigRational>,
    /// `sqrt(k! * n_{d,l})`, the common irrational scale.
    scale: f64,
    /// `scale * rational[i]`, the floating-point monomial coefficients of
    /// `r^{l+2i}`.
    pub monomial_coeffs: Vec<f64>,
}

impl BetaCoefficient {
    fn zero(k: usize, ell: usize, d: usize) -> Self {
        Self { k, ell, d, rational: Vec::new(), scale: 0.0, monomial_coeffs: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.monomial_coeffs.is_empty()
    }

    /// Evaluate `beta_{k,l}(r)`.
    pub fn eval(&self, r: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let r2 = r * r;
        let mut acc = 0.0;
        for &c in self.monomial_coeffs.iter().rev() {
            acc = acc * r2 + c;
        }
        acc * r.powi(self.ell as i32)
    }

    fn parity_ok(k: usize, ell: usize) -> bool {
        ell <= k && (k - ell) % 2 == 0
    }
}

/// Expansion coefficient polynomial `beta_{k,l}(r)`; the zero polynomial when
/// the degree or parity conditions fail.
pub fn hermite_to_gegenbauer(k: usize, ell: usize, d: usize) -> BetaCoefficient {
    assert!(d >= 3, "hermite_to_gegenbauer requires d >= 3");
    if !BetaCoefficient::parity_ok(k, ell) {
        return BetaCoefficient::zero(k, ell, d);
    }
    let n_terms = (k - ell) / 2;
    // N! 2^N
    let mut nf2n = BigInt::one();
    for i in 1..=n_terms {
        nf2n *= BigInt::from(2 * i);
    }
    let mut rational = Vec::with_capacity(n_terms + 1);
    // prod_{j=0}^{l+i-1}(d+2j), built incrementally over i.
    let mut denom_prod = BigInt::one();
    for j in 0..ell {
        denom_prod *= BigInt::from(d + 2 * j);
    }
    let mut binom = BigInt::one(); // C(N, i)
    for i in 0..=n_terms {
        if i > 0 {
            binom = binom * BigInt::from(n_terms - i + 1) / BigInt::from(i);
            denom_prod *= BigInt::from(d + 2 * (ell + i - 1));
        }
        let sign = if (n_terms - i) % 2 == 0 { BigInt::one() } else { -BigInt::one() };
        let num = sign * &binom;
        let den = &nf2n * &denom_prod;
        rational.push(BigRational::new(num, den));
    }
    let scale = (big_factorial(k) * harmonic_dim_biguint(d, ell)).to_f64().unwrap().sqrt();
    let monomial_coeffs = rational.iter().map(|q| scale * q.to_f64().unwrap()).collect();
    BetaCoefficient { k, ell, d, rational, scale, monomial_coeffs }
}

/// Which moment of `beta_{k,l}(r)` over `r ~ chi_d` to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentOrder {
    Mean,
    MeanSquare,
}

/// Closed-form chi moment of a beta coefficient. `parity_ok` is false (and
/// the value 0) when `l > k` or the parities differ.
#[derive(Debug, Clone, Copy)]
pub struct BetaMoment {
    pub value: f64,
    pub parity_ok: bool,
}

/// `E_{r~chi_d}[beta_{k,l}(r)]` or `E[beta_{k,l}(r)^2]`, exactly, by
/// expanding the monomials against the chi moments. The alternating sums are
/// evaluated in exact rational arithmetic; only the final square-root factors
/// are floating point.
pub fn beta_moment(k: usize, ell: usize, d: usize, order: MomentOrder) -> BetaMoment {
    if !BetaCoefficient::parity_ok(k, ell) {
        return BetaMoment { value: 0.0, parity_ok: false };
    }
    let beta = hermite_to_gegenbauer(k, ell, d);
    let even_chi = |p: usize| -> BigInt {
        // E[r^{2p}] = prod_{j=0}^{p-1} (d + 2j)
        let mut prod = BigInt::one();
        for j in 0..p {
            prod *= BigInt::from(d + 2 * j);
        }
        prod
    };
    let odd_chi_rational = |p: usize| -> BigInt {
        // E[r^{2p+1}] = E[r] * prod_{j=0}^{p-1} (d + 2j + 1); rational part only.
        let mut prod = BigInt::one();
        for j in 0..p {
            prod *= BigInt::from(d + 2 * j + 1);
        }
        prod
    };
    match order {
        MomentOrder::MeanSquare => {
            // scale^2 = k! n_{d,l} is exactly rational.
            let scale_sq =
                BigRational::from(BigInt::from(big_factorial(k) * harmonic_dim_biguint(d, ell)));
            let mut acc = BigRational::zero();
            let nt = beta.rational.len();
            for n in 0..nt {
                for m in 0..nt {
                    let p = ell + n + m;
                    acc += &beta.rational[n] * &beta.rational[m] * BigRational::from(even_chi(p));
                }
            }
            let value = (scale_sq * acc).to_f64().unwrap();
            BetaMoment { value, parity_ok: true }
        }
        MomentOrder::Mean => {
            let mut acc = BigRational::zero();
            for (i, q) in beta.rational.iter().enumerate() {
                let power = ell + 2 * i;
                let chi = if power % 2 == 0 { even_chi(power / 2) } else { odd_chi_rational(power / 2) };
                acc += q * BigRational::from(chi);
            }
            let mut value = beta.scale * acc.to_f64().unwrap();
            if ell % 2 == 1 {
                value *= chi_mean(d);
            }
            BetaMoment { value, parity_ok: true }
        }
    }
}

/// `ln Gamma(n/2)` for positive integer `n`, by exact recursion from
/// `Gamma(1) = 1` and `Gamma(1/2) = sqrt(pi)`.
fn ln_gamma_half(n: u64) -> f64 {
    assert!(n >= 1);
    if n % 2 == 0 {
        let m = n / 2;
        (1..m).map(|j| (j as f64).ln()).sum()
    } else {
        let m = (n - 1) / 2;
        0.5 * std::f64::consts::PI.ln() + (1..=m).map(|j| (j as f64 - 0.5).ln()).sum::<f64>()
    }
}

/// `E_{r~chi_d}[r] = sqrt(2) Gamma((d+1)/2) / Gamma(d/2)`.
pub fn chi_mean(d: usize) -> f64 {
    (0.5 * 2.0f64.ln() + ln_gamma_half(d as u64 + 1) - ln_gamma_half(d as u64)).exp()
}

/// Moment `E_{r~chi_d}[r^m]`: exact product formula for even m, the product
/// formula times the closed-form mean for odd m.
pub fn chi_moment(d: usize, m: usize) -> f64 {
    if m == 0 {
        return 1.0;
    }
    if m % 2 == 0 {
        let p = m / 2;
        let mut prod = BigUint::one();
        for j in 0..p {
            prod *= BigUint::from(d + 2 * j);
        }
        prod.to_f64().unwrap()
    } else {
        let p = m / 2;
        let mut prod = BigUint::one();
        for j in 0..p {
            prod *= BigUint::from(d + 2 * j + 1);
        }
        chi_mean(d) * prod.to_f64().unwrap()
    }
}

/// Cached chi moments `E[r^m]` for `m <= max_order`. Built once, then
/// immutable; share freely between workers.
#[derive(Debug, Clone)]
pub struct ChiMoments {
    pub d: usize,
    table: Vec<f64>,
}

impl ChiMoments {
    pub fn new(d: usize, max_order: usize) -> Self {
        let table = (0..=max_order).map(|m| chi_moment(d, m)).collect();
        Self { d, table }
    }

    pub fn moment(&self, m: usize) -> f64 {
        self.table[m]
    }

    pub fn max_order(&self) -> usize {
        self.table.len() - 1
    }
}
