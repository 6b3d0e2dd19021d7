//! Harmonic tensors and their unfoldings.
//!
//! The degree-l harmonic tensor `H_l(z)` is the unique symmetric l-tensor
//! with `<H_l(z), w^{tensor l}> = Q_l(<w, z>)` for all unit w: the projection
//! of `z^{tensor l}` onto symmetric traceless tensors. It expands as
//!
//! `H_l(z) = sum_{j<=l/2} c_{l,j} Sym(z^{tensor(l-2j)} tensor I^{tensor j})`
//!
//! with explicit Pochhammer coefficients `c_{l,j} = Theta(d^{l/2-j})`. The
//! unfolding `Mat_{a,b}(H_l(z))` admits matrix-vector products in
//! `O(d^a + d^b)` operations by walking that expansion term by term, which is
//! what the unfolding estimators rely on; nothing of size `d^l` is ever
//! materialized.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::basis::{gegenbauer_eval, harmonic_dim_f64};
use crate::vec_ops::{canonicalize_sign, dot, normalize};
use crate::{Result, SimlabError};

/// Degree ceiling for the implicit unfolded operator; higher degrees fall
/// back to dense tensors when they fit in memory.
pub const MAX_IMPLICIT_DEGREE: usize = 6;

/// Default dense-tensor budget in f64 entries (1 GiB).
pub const DEFAULT_DENSE_BUDGET: u128 = 1 << 27;

/// Rising factorial `(a)_p = a (a+1) ... (a+p-1)`.
fn rising(a: f64, p: usize) -> f64 {
    (0..p).map(|i| a + i as f64).product()
}

fn factorial(n: usize) -> f64 {
    (2..=n).map(|i| i as f64).product()
}

/// Expansion coefficient `c_{l,j}` of the harmonic tensor, including the
/// `sqrt(n_{d,l})` factor:
/// `c_{l,j} = (-1)^j 2^{l-2j} l!/(j!(l-2j)!) (d/2-1)_{l-j} / (d-2)_l * sqrt(n_{d,l})`.
pub fn c_coeff(ell: usize, j: usize, d: usize) -> f64 {
    assert!(2 * j <= ell, "c_coeff needs 0 <= j <= l/2");
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    let comb = factorial(ell) / (factorial(j) * factorial(ell - 2 * j));
    let ratio = rising(d as f64 / 2.0 - 1.0, ell - j) / rising(d as f64 - 2.0, ell);
    sign * 2f64.powi((ell - 2 * j) as i32) * comb * ratio * harmonic_dim_f64(d, ell).sqrt()
}

/// Inverse-expansion coefficient `b_{l,j}` of
/// `z^{tensor l} = sum_j b_{l,j} Sym(H_{l-2j}(z) tensor I^{tensor j})`.
pub fn b_coeff(ell: usize, j: usize, d: usize) -> f64 {
    assert!(2 * j <= ell);
    let comb = factorial(ell) / (factorial(j) * factorial(ell - 2 * j));
    let df = d as f64;
    2f64.powi(-(ell as i32))
        * comb
        * ((df / 2.0 + (ell - 2 * j) as f64 - 1.0) * rising(df - 2.0, ell - 2 * j))
        / ((df / 2.0 - 1.0) * rising(df / 2.0, ell - j))
        / harmonic_dim_f64(d, ell - 2 * j).sqrt()
}

/// One symmetrization pattern of `Sym(z^{tensor p} tensor I^{tensor j})`: a
/// partition of the l slots into j unordered pairs (the identity factors)
/// and p singletons (the z factors).
#[derive(Debug, Clone)]
struct Pattern {
    pairs: Vec<(usize, usize)>,
    singles: Vec<usize>,
}

/// All partitions of `0..l` into `j` unordered pairs plus singletons. There
/// are `l! / ((l-2j)! 2^j j!)` of them.
fn enumerate_patterns(ell: usize, j: usize) -> Vec<Pattern> {
    fn rec(
        free: &[usize],
        pairs: &mut Vec<(usize, usize)>,
        singles: &mut Vec<usize>,
        left: usize,
        out: &mut Vec<Pattern>,
    ) {
        if left == 0 {
            let mut all_singles = singles.clone();
            all_singles.extend_from_slice(free);
            out.push(Pattern { pairs: pairs.clone(), singles: all_singles });
            return;
        }
        if free.len() < 2 * left {
            return;
        }
        // The smallest free slot either stays a singleton or pairs with one
        // of the later slots; both branches keep the enumeration duplicate
        // free.
        let first = free[0];
        let rest = &free[1..];
        singles.push(first);
        rec(rest, pairs, singles, left, out);
        singles.pop();
        for (idx, &partner) in rest.iter().enumerate() {
            let mut next_free: Vec<usize> = rest.to_vec();
            next_free.remove(idx);
            pairs.push((first, partner));
            rec(&next_free, pairs, singles, left - 1, out);
            pairs.pop();
        }
    }
    let mut out = Vec::new();
    let free: Vec<usize> = (0..ell).collect();
    rec(&free, &mut Vec::with_capacity(j), &mut Vec::new(), j, &mut out);
    out
}

/// Multiplicity weight of each pattern inside the symmetrizer: every pattern
/// is produced by `(l-2j)! 2^j j!` of the `l!` permutations.
fn pattern_weight(ell: usize, j: usize) -> f64 {
    factorial(ell - 2 * j) * 2f64.powi(j as i32) * factorial(j) / factorial(ell)
}

/// Dense symmetric tensor with entries indexed by
/// `(i_1, ..., i_l) -> sum_k i_k d^{k-1}` (zero-based).
#[derive(Debug, Clone)]
pub struct DenseSymTensor {
    pub dim: usize,
    pub order: usize,
    pub entries: Vec<f64>,
}

impl DenseSymTensor {
    pub fn zeros(dim: usize, order: usize, budget: u128) -> Result<Self> {
        let need = (dim as u128)
            .checked_pow(order as u32)
            .ok_or(SimlabError::MemoryBudget { need: u128::MAX, budget })?;
        if need > budget {
            return Err(SimlabError::MemoryBudget { need, budget });
        }
        Ok(Self { dim, order, entries: vec![0.0; need as usize] })
    }

    #[inline]
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        let mut f = 0;
        for &i in idx.iter().rev() {
            debug_assert!(i < self.dim);
            f = f * self.dim + i;
        }
        f
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.entries[self.flat_index(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Inner product of two tensors of identical shape.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.entries.len(), other.entries.len());
        dot(&self.entries, &other.entries)
    }

    /// `<T, w^{tensor l}>`.
    pub fn apply_rank_one(&self, w: &[f64]) -> f64 {
        assert_eq!(w.len(), self.dim);
        let mut acc = 0.0;
        for (flat, &e) in self.entries.iter().enumerate() {
            let mut f = flat;
            let mut prod = e;
            for _ in 0..self.order {
                prod *= w[f % self.dim];
                f /= self.dim;
            }
            acc += prod;
        }
        acc
    }

    /// Contract two index positions against the identity, producing an
    /// (order-2)-tensor. Tracelessness diagnostics only.
    pub fn trace_pair(&self, p1: usize, p2: usize, budget: u128) -> Result<DenseSymTensor> {
        assert!(p1 < p2 && p2 < self.order);
        let mut out = DenseSymTensor::zeros(self.dim, self.order - 2, budget)?;
        let d = self.dim;
        let mut idx = vec![0usize; self.order - 2];
        let out_len = out.entries.len();
        for flat_out in 0..out_len {
            let mut f = flat_out;
            for slot in idx.iter_mut() {
                *slot = f % d;
                f /= d;
            }
            let mut full = Vec::with_capacity(self.order);
            let mut it = idx.iter();
            for pos in 0..self.order {
                if pos == p1 || pos == p2 {
                    full.push(0);
                } else {
                    full.push(*it.next().unwrap());
                }
            }
            let mut acc = 0.0;
            for s in 0..d {
                full[p1] = s;
                full[p2] = s;
                acc += self.get(&full);
            }
            out.entries[flat_out] = acc;
        }
        Ok(out)
    }
}

fn check_unit(z: &[f64]) -> Result<()> {
    let n = crate::vec_ops::norm2(z);
    if (n - 1.0).abs() > 1e-10 {
        return Err(SimlabError::Domain(format!("harmonic tensor needs a unit vector, |z| = {n}")));
    }
    Ok(())
}

/// Dense harmonic tensor `H_l(z)` under the default memory budget.
pub fn harmonic_tensor_dense(z: &[f64], ell: usize) -> Result<DenseSymTensor> {
    harmonic_tensor_dense_with_budget(z, ell, DEFAULT_DENSE_BUDGET)
}

/// Dense harmonic tensor `H_l(z)` with an explicit entry budget; exceeding
/// it is an error suggesting the implicit operator.
pub fn harmonic_tensor_dense_with_budget(z: &[f64], ell: usize, budget: u128) -> Result<DenseSymTensor> {
    check_unit(z)?;
    let d = z.len();
    let mut out = DenseSymTensor::zeros(d, ell, budget)?;
    if ell == 0 {
        out.entries[0] = 1.0;
        return Ok(out);
    }
    let mut idx = vec![0usize; ell];
    for j in 0..=ell / 2 {
        let gamma = c_coeff(ell, j, d) * pattern_weight(ell, j);
        for pat in enumerate_patterns(ell, j) {
            for (flat, slot) in out.entries.iter_mut().enumerate() {
                let mut f = flat;
                for v in idx.iter_mut() {
                    *v = f % d;
                    f /= d;
                }
                let mut term = gamma;
                for &(p, q) in &pat.pairs {
                    if idx[p] != idx[q] {
                        term = 0.0;
                        break;
                    }
                }
                if term != 0.0 {
                    for &s in &pat.singles {
                        term *= z[idx[s]];
                    }
                    *slot += term;
                }
            }
        }
    }
    Ok(out)
}

/// Where each slot of one pattern lands relative to a row/column split.
#[derive(Debug, Clone)]
struct SplitPattern {
    /// Pairs with both slots among the row indices (row-local offsets).
    row_pairs: Vec<(usize, usize)>,
    /// Pairs with both slots among the column indices (column-local offsets).
    col_pairs: Vec<(usize, usize)>,
    /// Cross pairs (row-local, column-local).
    cross: Vec<(usize, usize)>,
    /// z slots among rows / columns (local offsets).
    row_singles: Vec<usize>,
    col_singles: Vec<usize>,
    /// Scale: `c_{l,j} * pattern_weight(l, j)`.
    gamma: f64,
}

/// Precomputed plan for products with `Mat_{a,b}(H_l(z))`: the pattern
/// enumeration and split classification depend only on `(d, l, a, b)` and
/// are shared across samples. Immutable after construction.
#[derive(Debug, Clone)]
pub struct UnfoldPlan {
    pub d: usize,
    pub ell: usize,
    pub a: usize,
    pub b: usize,
    patterns: Vec<SplitPattern>,
    d_pow_a: usize,
    d_pow_b: usize,
}

impl UnfoldPlan {
    /// Plan for `Mat_{a,b}(H_l(z))` acting on vectors of length `d^b`.
    pub fn new(d: usize, ell: usize, a: usize, b: usize) -> Result<Self> {
        if a + b != ell || a == 0 || b == 0 {
            return Err(SimlabError::Config(format!("invalid unfolding split ({a},{b}) for degree {ell}")));
        }
        if ell > MAX_IMPLICIT_DEGREE {
            return Err(SimlabError::Unsupported(format!(
                "implicit unfolded matvec supports degree <= {MAX_IMPLICIT_DEGREE}, got {ell}; \
                 use the dense tensor when it fits in memory"
            )));
        }
        let d_pow_a = (d as u128).pow(a as u32);
        let d_pow_b = (d as u128).pow(b as u32);
        if d_pow_a > DEFAULT_DENSE_BUDGET || d_pow_b > DEFAULT_DENSE_BUDGET {
            return Err(SimlabError::MemoryBudget {
                need: d_pow_a.max(d_pow_b),
                budget: DEFAULT_DENSE_BUDGET,
            });
        }
        let mut patterns = Vec::new();
        for j in 0..=ell / 2 {
            let gamma = c_coeff(ell, j, d) * pattern_weight(ell, j);
            for pat in enumerate_patterns(ell, j) {
                let mut sp = SplitPattern {
                    row_pairs: Vec::new(),
                    col_pairs: Vec::new(),
                    cross: Vec::new(),
                    row_singles: Vec::new(),
                    col_singles: Vec::new(),
                    gamma,
                };
                for &(p, q) in &pat.pairs {
                    let (lo, hi) = (p.min(q), p.max(q));
                    if hi < a {
                        sp.row_pairs.push((lo, hi));
                    } else if lo >= a {
                        sp.col_pairs.push((lo - a, hi - a));
                    } else {
                        sp.cross.push((lo, hi - a));
                    }
                }
                for &s in &pat.singles {
                    if s < a {
                        sp.row_singles.push(s);
                    } else {
                        sp.col_singles.push(s - a);
                    }
                }
                patterns.push(sp);
            }
        }
        Ok(Self { d, ell, a, b, patterns, d_pow_a: d_pow_a as usize, d_pow_b: d_pow_b as usize })
    }

    pub fn rows(&self) -> usize {
        self.d_pow_a
    }

    pub fn cols(&self) -> usize {
        self.d_pow_b
    }

    /// `out += scale * Mat_{a,b}(H_l(z)) v`, walking the expansion term by
    /// term in `O(d^a + d^b)` per pattern. `scratch` is reused storage.
    pub fn accumulate(&self, z: &[f64], v: &[f64], scale: f64, out: &mut [f64], scratch: &mut Vec<f64>) {
        debug_assert_eq!(z.len(), self.d);
        debug_assert_eq!(v.len(), self.d_pow_b);
        debug_assert_eq!(out.len(), self.d_pow_a);
        let d = self.d;
        for sp in &self.patterns {
            let u = sp.cross.len();
            let f_len = d.pow(u as u32);
            scratch.clear();
            scratch.resize(f_len, 0.0);

            // Collect phase: sweep the column block, tracing column pairs and
            // contracting column singles with z; accumulate onto the free
            // cross indices.
            let mut digits = vec![0usize; self.b];
            let ncols = v.len();
            for (flat, &vj) in v.iter().enumerate() {
                if vj != 0.0 {
                    let mut ok = true;
                    for &(p, q) in &sp.col_pairs {
                        if digits[p] != digits[q] {
                            ok = false;
                            break;
                        }
                    }
                    if ok {
                        let mut val = vj;
                        for &s in &sp.col_singles {
                            val *= z[digits[s]];
                        }
                        let mut k = 0usize;
                        for &(_, cq) in sp.cross.iter().rev() {
                            k = k * d + digits[cq];
                        }
                        scratch[k] += val;
                    }
                }
                // Odometer increment.
                if flat + 1 < ncols {
                    for dig in digits.iter_mut() {
                        *dig += 1;
                        if *dig == d {
                            *dig = 0;
                        } else {
                            break;
                        }
                    }
                }
            }

            // Emit phase: sweep the row block.
            let mut digits = vec![0usize; self.a];
            let nrows = self.d_pow_a;
            for (flat, slot) in out.iter_mut().enumerate() {
                let mut ok = true;
                for &(p, q) in &sp.row_pairs {
                    if digits[p] != digits[q] {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    let mut val = scale * sp.gamma;
                    for &s in &sp.row_singles {
                        val *= z[digits[s]];
                    }
                    let mut k = 0usize;
                    for &(cp, _) in sp.cross.iter().rev() {
                        k = k * d + digits[cp];
                    }
                    *slot += val * scratch[k];
                }
                if flat + 1 < nrows {
                    for dig in digits.iter_mut() {
                        *dig += 1;
                        if *dig == d {
                            *dig = 0;
                        } else {
                            break;
                        }
                    }
                }
            }
        }
    }

    /// `Mat_{a,b}(H_l(z)) v` into a fresh vector.
    pub fn apply(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d_pow_a];
        let mut scratch = Vec::new();
        self.accumulate(z, v, 1.0, &mut out, &mut scratch);
        out
    }
}

/// Implicit operator `Mat_{a,b}(H_l(z))` bound to one direction z.
///
/// The forward map sends `R^{d^b}` to `R^{d^a}`; by tensor symmetry the
/// adjoint is the `(b, a)` unfolding of the same tensor.
#[derive(Debug, Clone)]
pub struct HarmonicMatvec {
    pub z: Vec<f64>,
    forward: UnfoldPlan,
    adjoint: UnfoldPlan,
}

impl HarmonicMatvec {
    pub fn new(z: Vec<f64>, ell: usize, a: usize, b: usize) -> Result<Self> {
        check_unit(&z)?;
        let d = z.len();
        Ok(Self { forward: UnfoldPlan::new(d, ell, a, b)?, adjoint: UnfoldPlan::new(d, ell, b, a)?, z })
    }

    /// `Mat_{a,b}(H_l(z)) v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.forward.apply(&self.z, v)
    }

    /// `Mat_{a,b}(H_l(z))^T u = Mat_{b,a}(H_l(z)) u`.
    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        self.adjoint.apply(&self.z, u)
    }
}

/// Fold a `d^a` vector into a `d x d^{a-1}` matrix and return its top left
/// singular vector via power iteration on `U U^T`, sign-canonicalized.
pub fn vec_extract(u: &[f64], d: usize) -> Result<Vec<f64>> {
    if u.iter().all(|&x| x == 0.0) {
        return Err(SimlabError::Degenerate("vec_extract on the zero vector".into()));
    }
    let mut a = 0usize;
    let mut p = 1usize;
    while p < u.len() {
        p *= d;
        a += 1;
    }
    if p != u.len() || a == 0 {
        return Err(SimlabError::Config(format!(
            "vec_extract: length {} is not a positive power of d={d}",
            u.len()
        )));
    }
    if a == 1 {
        let mut w = u.to_vec();
        normalize(&mut w);
        canonicalize_sign(&mut w);
        return Ok(w);
    }
    let ncols = u.len() / d;
    // U_{i,J} = u[i + J d]; fixed deterministic start, Theta(log) iterations.
    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed_0001 ^ ((d as u64) << 8) ^ a as u64);
    let mut x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut x);
    let iters = (10.0 * (u.len() as f64).ln()).ceil() as usize;
    let mut prev = x.clone();
    for _ in 0..iters.max(8) {
        // y = U^T x ; x' = U y
        let mut y = vec![0.0; ncols];
        for (jj, yj) in y.iter_mut().enumerate() {
            let col = &u[jj * d..(jj + 1) * d];
            *yj = dot(col, &x);
        }
        let mut nx = vec![0.0; d];
        for (jj, &yj) in y.iter().enumerate() {
            if yj != 0.0 {
                crate::vec_ops::axpy(yj, &u[jj * d..(jj + 1) * d], &mut nx);
            }
        }
        if normalize(&mut nx) == 0.0 {
            return Err(SimlabError::Degenerate("vec_extract power iteration collapsed".into()));
        }
        let delta = nx.iter().zip(&prev).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
        let delta_neg = nx.iter().zip(&prev).map(|(x, y)| (x + y).abs()).fold(0.0f64, f64::max);
        prev.copy_from_slice(&nx);
        x = nx;
        if delta.min(delta_neg) < 1e-10 {
            break;
        }
    }
    canonicalize_sign(&mut x);
    Ok(x)
}

/// Exact moment `E[z_{k_1} ... z_{k_m}]` of a uniform sphere direction, by
/// enumerating the perfect pairings of the Wick formula. Odd degree gives 0.
pub fn wick_moment(d: usize, multi_index: &[usize]) -> Result<f64> {
    let m = multi_index.len();
    if m % 2 == 1 {
        return Ok(0.0);
    }
    let p = m / 2;
    if m > 12 {
        return Err(SimlabError::Unsupported(format!("wick_moment supports total degree <= 12, got {m}")));
    }
    fn count_pairings(idx: &[usize]) -> f64 {
        if idx.is_empty() {
            return 1.0;
        }
        let first = idx[0];
        let mut total = 0.0;
        for j in 1..idx.len() {
            if idx[j] == first {
                let mut rest: Vec<usize> = Vec::with_capacity(idx.len() - 2);
                rest.extend_from_slice(&idx[1..j]);
                rest.extend_from_slice(&idx[j + 1..]);
                total += count_pairings(&rest);
            }
        }
        total
    }
    let numerator = count_pairings(multi_index);
    let denominator: f64 = (0..p).map(|j| (d + 2 * j) as f64).product();
    Ok(numerator / denominator)
}

/// Monte Carlo check of the reproducing identity
/// `E_z[Q_k(<w,z>) H_l(z)] = delta_{lk} / sqrt(n_{d,l}) H_l(w)`.
#[derive(Debug, Clone, Copy)]
pub struct ReproducingCheck {
    /// Frobenius distance between the Monte Carlo average and the predicted
    /// right-hand side.
    pub frob_error: f64,
    /// Frobenius norm of the predicted right-hand side.
    pub target_norm: f64,
    /// Estimated standard error of the Frobenius distance.
    pub std_error: f64,
}

pub fn reproducing_check(d: usize, ell: usize, k: usize, n_mc: usize, seed: u64) -> Result<ReproducingCheck> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut w = random_unit(&mut rng, d);
    canonicalize_sign(&mut w);
    let len = (d as u128).pow(ell as u32);
    if len > DEFAULT_DENSE_BUDGET {
        return Err(SimlabError::MemoryBudget { need: len, budget: DEFAULT_DENSE_BUDGET });
    }
    let mut sum = vec![0.0; len as usize];
    let mut sum_sq = vec![0.0; len as usize];
    for _ in 0..n_mc {
        let z = random_unit(&mut rng, d);
        let q = gegenbauer_eval(d, k, dot(&w, &z))?;
        let h = harmonic_tensor_dense(&z, ell)?;
        for ((s, s2), &e) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&h.entries) {
            let v = q * e;
            *s += v;
            *s2 += v * v;
        }
    }
    let nf = n_mc as f64;
    let target = if ell == k {
        let mut t = harmonic_tensor_dense(&w, ell)?;
        let scale = 1.0 / harmonic_dim_f64(d, ell).sqrt();
        for e in t.entries.iter_mut() {
            *e *= scale;
        }
        t.entries
    } else {
        vec![0.0; len as usize]
    };
    let mut err_sq = 0.0;
    let mut var_sum = 0.0;
    for i in 0..sum.len() {
        let mean = sum[i] / nf;
        let var = (sum_sq[i] / nf - mean * mean).max(0.0) / nf;
        err_sq += (mean - target[i]) * (mean - target[i]);
        var_sum += var;
    }
    let target_norm = target.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(ReproducingCheck { frob_error: err_sq.sqrt(), target_norm, std_error: var_sum.sqrt() })
}

/// Uniform direction on the (d-1)-sphere.
pub fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        if normalize(&mut v) > 1e-12 {
            return v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::harmonic_dim_f64;

    fn unit(d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        random_unit(&mut rng, d)
    }

    #[test]
    fn c_coeff_closed_forms() {
        for d in [4usize, 9, 100] {
            let df = d as f64;
            assert!((c_coeff(1, 0, d) - df.sqrt()).abs() < 1e-12 * df.sqrt());
            let n2 = harmonic_dim_f64(d, 2).sqrt();
            let c20 = df * n2 / (df - 1.0);
            assert!((c_coeff(2, 0, d) - c20).abs() < 1e-12 * c20);
            let c21 = -n2 / (df - 1.0);
            assert!((c_coeff(2, 1, d) - c21).abs() < 1e-12 * c21.abs());
        }
    }

    #[test]
    fn dense_low_degree_forms() {
        let d = 7;
        let z = unit(d, 1);
        let h1 = harmonic_tensor_dense(&z, 1).unwrap();
        for i in 0..d {
            assert!((h1.entries[i] - (d as f64).sqrt() * z[i]).abs() < 1e-12);
        }
        let h2 = harmonic_tensor_dense(&z, 2).unwrap();
        let n2 = harmonic_dim_f64(d, 2).sqrt();
        for i in 0..d {
            for j in 0..d {
                let expect =
                    n2 / (d as f64 - 1.0) * (d as f64 * z[i] * z[j] - if i == j { 1.0 } else { 0.0 });
                assert!((h2.get(&[i, j]) - expect).abs() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn defining_relation_probe() {
        // <H_l(z), w^{tensor l}> = Q_l(<w,z>) for random probes.
        let d = 8;
        let z = unit(d, 2);
        for ell in 0..=5 {
            let h = harmonic_tensor_dense(&z, ell).unwrap();
            for s in 0..3 {
                let w = unit(d, 100 + s);
                let lhs = h.apply_rank_one(&w);
                let rhs = gegenbauer_eval(d, ell, dot(&w, &z)).unwrap();
                assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0), "l={ell}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn permutation_symmetry_and_tracelessness() {
        let d = 6;
        let z = unit(d, 3);
        for ell in 2..=4usize {
            let h = harmonic_tensor_dense(&z, ell).unwrap();
            // symmetry under a transposition of the first two indices
            let mut idx = vec![0usize; ell];
            for flat in 0..h.entries.len() {
                let mut f = flat;
                for v in idx.iter_mut() {
                    *v = f % d;
                    f /= d;
                }
                let mut swapped = idx.clone();
                swapped.swap(0, 1);
                assert!((h.get(&idx) - h.get(&swapped)).abs() < 1e-12);
            }
            // contracting any two indices with the identity gives zero
            let tr = h.trace_pair(0, 1, DEFAULT_DENSE_BUDGET).unwrap();
            let scale = h.frobenius_norm();
            for &e in &tr.entries {
                assert!(e.abs() <= 1e-9 * scale.max(1.0), "l={ell}: trace entry {e}");
            }
        }
    }

    #[test]
    fn rotation_equivariance() {
        // H_l(R z) equals the l-fold rotation of H_l(z).
        let d = 5;
        let ell = 3;
        let z = unit(d, 4);
        // Random orthogonal matrix by Gram-Schmidt.
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let mut r: Vec<Vec<f64>> = Vec::new();
        while r.len() < d {
            let mut v = random_unit(&mut rng, d);
            for prev in &r {
                let c = dot(prev, &v);
                crate::vec_ops::axpy(-c, prev, &mut v);
            }
            if normalize(&mut v) > 1e-8 {
                r.push(v);
            }
        }
        let rz: Vec<f64> = (0..d).map(|i| dot(&r[i], &z)).collect();
        let h = harmonic_tensor_dense(&z, ell).unwrap();
        let h_rz = harmonic_tensor_dense(&rz, ell).unwrap();
        let mut idx = vec![0usize; ell];
        for flat in 0..h_rz.entries.len() {
            let mut f = flat;
            for v in idx.iter_mut() {
                *v = f % d;
                f /= d;
            }
            let mut acc = 0.0;
            let mut jdx = vec![0usize; ell];
            for jflat in 0..h.entries.len() {
                let mut g = jflat;
                for v in jdx.iter_mut() {
                    *v = g % d;
                    g /= d;
                }
                let mut prod = h.entries[jflat];
                for s in 0..ell {
                    prod *= r[idx[s]][jdx[s]];
                }
                acc += prod;
            }
            assert!((acc - h_rz.entries[flat]).abs() <= 1e-9, "flat={flat}");
        }
    }

    #[test]
    fn implicit_matvec_matches_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for (d, ell, a, b) in [(5usize, 2usize, 1usize, 1usize), (5, 3, 1, 2), (6, 4, 2, 2), (4, 5, 2, 3)] {
            let z = unit(d, 50 + ell as u64);
            let h = harmonic_tensor_dense(&z, ell).unwrap();
            let op = HarmonicMatvec::new(z.clone(), ell, a, b).unwrap();
            let cols = d.pow(b as u32);
            let rows = d.pow(a as u32);
            let v: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = op.apply(&v);
            // dense oracle: Mat_{a,b}(H)[I,J] = H[I ++ J]
            let mut dense = vec![0.0; rows];
            for (i, slot) in dense.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, &vj) in v.iter().enumerate() {
                    acc += h.entries[i + j * rows] * vj;
                }
                *slot = acc;
            }
            let scale = dense.iter().map(|x| x.abs()).fold(0.0f64, f64::max).max(1.0);
            for i in 0..rows {
                assert!(
                    (fast[i] - dense[i]).abs() <= 1e-10 * scale,
                    "d={d} l={ell} ({a},{b}) row {i}: {} vs {}",
                    fast[i],
                    dense[i]
                );
            }
            // adjoint agrees with the dense transpose
            let u: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast_t = op.apply_transpose(&u);
            for (j, &ft) in fast_t.iter().enumerate() {
                let mut acc = 0.0;
                for (i, &ui) in u.iter().enumerate() {
                    acc += h.entries[i + j * rows] * ui;
                }
                assert!((ft - acc).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn matvec_rank_one_probe_is_gegenbauer() {
        // v = w^{tensor b} gives <w^{tensor a}, op v> = Q_l(<w,z>).
        let d = 6;
        for (ell, a, b) in [(3usize, 1usize, 2usize), (4, 2, 2)] {
            let z = unit(d, 11);
            let w = unit(d, 12);
            let op = HarmonicMatvec::new(z.clone(), ell, a, b).unwrap();
            let kron = |w: &[f64], times: usize| -> Vec<f64> {
                let mut v = vec![1.0];
                for _ in 0..times {
                    let mut next = vec![0.0; v.len() * d];
                    for (j, &vj) in v.iter().enumerate() {
                        for i in 0..d {
                            next[j * d + i] = vj * w[i];
                        }
                    }
                    v = next;
                }
                v
            };
            let out = op.apply(&kron(&w, b));
            let lhs = dot(&kron(&w, a), &out);
            let rhs = gegenbauer_eval(d, ell, dot(&w, &z)).unwrap();
            assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0), "l={ell}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn vec_extract_behaviour() {
        let d = 20;
        let w = unit(d, 21);
        // rank-one fold returns +-w
        let mut u = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                u[i + j * d] = w[i] * w[j];
            }
        }
        let got = vec_extract(&u, d).unwrap();
        let ov = crate::vec_ops::overlap(&got, &w);
        assert!(ov > 1.0 - 1e-9, "overlap {ov}");
        // small perturbation keeps overlap high
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let mut up = u.clone();
        let scale = 0.05 * u.iter().map(|x| x * x).sum::<f64>().sqrt() / (d as f64);
        for e in up.iter_mut() {
            *e += scale * rng.gen_range(-1.0..1.0);
        }
        let got = vec_extract(&up, d).unwrap();
        assert!(crate::vec_ops::overlap(&got, &w) > 0.99);
        // a = 1 is normalization
        let got = vec_extract(&w, d).unwrap();
        assert!((crate::vec_ops::overlap(&got, &w) - 1.0).abs() < 1e-12);
        assert!(vec_extract(&vec![0.0; d], d).is_err());
    }

    #[test]
    fn wick_moments() {
        for d in [3usize, 10, 50] {
            let df = d as f64;
            assert!((wick_moment(d, &[0, 0]).unwrap() - 1.0 / df).abs() < 1e-15);
            let m4 = wick_moment(d, &[0, 0, 0, 0]).unwrap();
            assert!((m4 - 3.0 / (df * (df + 2.0))).abs() < 1e-15);
            let m22 = wick_moment(d, &[0, 0, 1, 1]).unwrap();
            assert!((m22 - 1.0 / (df * (df + 2.0))).abs() < 1e-15);
            assert_eq!(wick_moment(d, &[0, 0, 1]).unwrap(), 0.0);
            assert_eq!(wick_moment(d, &[0, 1]).unwrap(), 0.0);
        }
        assert!(wick_moment(5, &[0; 14]).is_err());
    }

    #[test]
    fn reproducing_identity_small_mc() {
        // l = k = 1 reduces to E[sqrt(d)<w,z> sqrt(d) z] = w by isotropy.
        let chk = reproducing_check(10, 1, 1, 20_000, 7).unwrap();
        assert!(chk.frob_error <= chk.target_norm * 0.05 + 5.0 * chk.std_error, "{chk:?}");
        // l != k: average should be zero within noise.
        let chk = reproducing_check(10, 2, 1, 20_000, 8).unwrap();
        assert!(chk.frob_error <= 5.0 * chk.std_error, "{chk:?}");
    }

    #[test]
    fn covariance_bound_monte_carlo() {
        // sqrt(n_{d,l}) E[<H_l(z), A>^2] <= C_l ||A||_F^2 for random A.
        let d = 8usize;
        let ell = 3;
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let len = d.pow(ell as u32);
        let a: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm_sq: f64 = a.iter().map(|x| x * x).sum();
        let n_mc = 4000;
        let mut acc = 0.0;
        for _ in 0..n_mc {
            let z = random_unit(&mut rng, d);
            let h = harmonic_tensor_dense(&z, ell).unwrap();
            let ip = dot(&h.entries, &a);
            acc += ip * ip;
        }
        let lhs = harmonic_dim_f64(d, ell).sqrt() * acc / n_mc as f64;
        // C_l from the expansion is a sum of l+1 terms of size O(1).
        assert!(lhs <= 16.0 * norm_sq, "{lhs} vs {norm_sq}");
    }
}
