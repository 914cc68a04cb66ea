//! Masked nonnegative matrix factorization under generalized KL divergence.
//!
//! Updates are the Lee–Seung multiplicative rules restricted to observed
//! cells. Each half-step minimizes a separable auxiliary function that
//! touches the loss at the current point, so the masked KL loss never
//! increases; clamping at [`MF_FLOOR`] keeps that property because the
//! auxiliary function is convex in each coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskedMatrix;
use crate::numkern::{Matrix, SeededRng};

/// Positivity floor for factor entries.
pub const MF_FLOOR: f64 = 1e-8;

/// Row embeddings `u` (m×h) and column embeddings `v` (h×n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPair {
    pub u: Matrix,
    pub v: Matrix,
}

impl FactorPair {
    pub fn new(u: Matrix, v: Matrix) -> Result<Self> {
        if u.cols() == 0 {
            return Err(Error::Spec("factor rank h must be at least 1".into()));
        }
        if u.cols() != v.rows() {
            return Err(Error::Shape {
                op: "factor pair",
                left: u.shape(),
                right: v.shape(),
            });
        }
        if let Some(bad) = u
            .as_slice()
            .iter()
            .chain(v.as_slice())
            .find(|&&x| !(x >= MF_FLOOR && x.is_finite()))
        {
            return Err(Error::Validation(format!(
                "factor entry {bad} violates the positivity floor {MF_FLOOR}"
            )));
        }
        Ok(FactorPair { u, v })
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn product(&self) -> Matrix {
        self.u.matmul(&self.v).expect("factor shapes are consistent")
    }
}

/// Loss history of one [`pretrain`] run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfTrace {
    /// `losses[0]` is the loss at initialization, then one entry per update.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Rows / columns without observed cells; their factors never move.
    pub empty_rows: Vec<usize>,
    pub empty_cols: Vec<usize>,
}

impl MfTrace {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trace holds the initial loss")
    }

    /// Largest single-step increase (negative when strictly decreasing).
    pub fn max_increase(&self) -> f64 {
        self.losses
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Rows and columns skipped by a [`mu_step`] because they have no observed cell.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MuFlags {
    pub empty_rows: Vec<usize>,
    pub empty_cols: Vec<usize>,
}

fn check_observed(x: &Matrix, mask: &Matrix) -> Result<()> {
    x.check_same_shape("kl_loss", mask)?;
    for (k, (&v, &m)) in x.as_slice().iter().zip(mask.as_slice()).enumerate() {
        if m == 1.0 && !(v >= 0.0) {
            return Err(Error::Domain(format!(
                "observed value {v} at ({}, {}) is negative; normalize the data first \
                 (metrics::normalize)",
                k / x.cols(),
                k % x.cols()
            )));
        }
    }
    Ok(())
}

/// Generalized KL divergence over observed cells:
/// `Σ_{M=1} x·ln(x/x̂) − x + x̂`, with the `x = 0` term equal to `x̂`.
pub fn kl_loss(x: &Matrix, xhat: &Matrix, mask: &Matrix) -> Result<f64> {
    check_observed(x, mask)?;
    x.check_same_shape("kl_loss", xhat)?;
    let mut total = 0.0;
    for ((&a, &b), &m) in x.as_slice().iter().zip(xhat.as_slice()).zip(mask.as_slice()) {
        if m != 1.0 {
            continue;
        }
        if a == 0.0 {
            total += b;
        } else {
            if !(b > 0.0) {
                return Err(Error::Domain(format!(
                    "estimate {b} must be positive where the observed value is {a}"
                )));
            }
            total += a * (a / b).ln() - a + b;
        }
    }
    Ok(total)
}

/// One multiplicative update of `u` then `v`, each computed against the
/// freshly updated other factor. Observed cells only.
pub fn mu_step(x: &Matrix, mask: &Matrix, factors: &FactorPair) -> Result<(FactorPair, MuFlags)> {
    check_observed(x, mask)?;
    let (m, n) = x.shape();
    let h = factors.rank();
    if factors.u.rows() != m || factors.v.cols() != n {
        return Err(Error::Shape {
            op: "mu_step",
            left: x.shape(),
            right: (factors.u.rows(), factors.v.cols()),
        });
    }
    let mut flags = MuFlags::default();

    // u_ia <- u_ia * (Σ_j m_ij v_aj x_ij / x̂_ij) / (Σ_j m_ij v_aj)
    let ratio = masked_ratio(x, mask, &factors.product());
    let num = ratio.matmul_t(&factors.v)?;
    let den = mask.matmul_t(&factors.v)?;
    let mut u = factors.u.clone();
    for i in 0..m {
        if den.row(i).iter().all(|&d| d <= 0.0) {
            flags.empty_rows.push(i);
            continue;
        }
        for a in 0..h {
            u[(i, a)] = (u[(i, a)] * num[(i, a)] / den[(i, a)]).max(MF_FLOOR);
        }
    }

    // v_aj <- v_aj * (Σ_i m_ij u_ia x_ij / x̂_ij) / (Σ_i m_ij u_ia)
    let ratio = masked_ratio(x, mask, &u.matmul(&factors.v)?);
    let num = u.t_matmul(&ratio)?;
    let den = u.t_matmul(mask)?;
    let mut v = factors.v.clone();
    for j in 0..n {
        if (0..h).all(|a| den[(a, j)] <= 0.0) {
            flags.empty_cols.push(j);
            continue;
        }
        for a in 0..h {
            v[(a, j)] = (v[(a, j)] * num[(a, j)] / den[(a, j)]).max(MF_FLOOR);
        }
    }
    Ok((FactorPair { u, v }, flags))
}

fn masked_ratio(x: &Matrix, mask: &Matrix, xhat: &Matrix) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        if mask[(i, j)] == 1.0 {
            x[(i, j)] / xhat[(i, j)]
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainOptions {
    pub max_iters: usize,
    /// Stop once the relative loss improvement of one step drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            max_iters: 2000,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// Positive random factors scaled so the mean of `u·v` equals the mean of
/// the observed entries.
pub fn init_factors(xm: &MaskedMatrix, h: usize, seed: u64) -> Result<FactorPair> {
    if h == 0 {
        return Err(Error::Spec("factor rank h must be at least 1".into()));
    }
    let (m, n) = xm.shape();
    let mut rng = SeededRng::new(seed).stream("mf-init");
    let mut u = rng.uniform_matrix(m, h, 0.1, 1.1);
    let mut v = rng.uniform_matrix(h, n, 0.1, 1.1);
    let observed = xm.observed_count();
    let target = if observed > 0 {
        xm.values().sum() / observed as f64
    } else {
        0.0
    };
    let current = u.matmul(&v)?.mean();
    if target > 0.0 && current > 0.0 {
        let s = (target / current).sqrt();
        u.map_inplace(|x| (x * s).max(MF_FLOOR));
        v.map_inplace(|x| (x * s).max(MF_FLOOR));
    }
    FactorPair::new(u, v)
}

/// Fits `U_p, V_p` to the observed cells.
pub fn pretrain(xm: &MaskedMatrix, h: usize, opts: &PretrainOptions) -> Result<(FactorPair, MfTrace)> {
    if xm.observed_count() == 0 {
        return Err(Error::Spec("cannot factorize: mask has no observed cells".into()));
    }
    let init = init_factors(xm, h, opts.seed)?;
    pretrain_from(xm, init, opts)
}

/// [`pretrain`] from explicit starting factors.
pub fn pretrain_from(xm: &MaskedMatrix, init: FactorPair, opts: &PretrainOptions) -> Result<(FactorPair, MfTrace)> {
    let (x, mask) = (xm.values(), xm.mask());
    let mut factors = init;
    let mut losses = vec![kl_loss(x, &factors.product(), mask)?];
    let mut converged = false;
    let mut flags = MuFlags::default();
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let (next, f) = mu_step(x, mask, &factors)?;
        factors = next;
        flags = f;
        iterations += 1;
        let loss = kl_loss(x, &factors.product(), mask)?;
        let prev = *losses.last().expect("non-empty");
        losses.push(loss);
        if loss == 0.0 || (prev - loss) / prev.abs().max(f64::MIN_POSITIVE) < opts.tol {
            converged = true;
            break;
        }
    }
    Ok((
        factors,
        MfTrace {
            losses,
            iterations,
            converged,
            empty_rows: flags.empty_rows,
            empty_cols: flags.empty_cols,
        },
    ))
}

/// Plain factorization estimate `U·V`.
pub fn mf_impute(factors: &FactorPair) -> Matrix {
    factors.product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::apply_mask;

    #[test]
    fn kl_identical_is_zero() {
        let x = Matrix::from_rows(&[[0.5, 2.0], [1.0, 3.0]]).unwrap();
        assert_eq!(kl_loss(&x, &x, &Matrix::ones(2, 2)).unwrap(), 0.0);
    }

    #[test]
    fn kl_hand_values() {
        let mask = Matrix::ones(1, 1);
        let v = kl_loss(&Matrix::filled(1, 1, 2.0), &Matrix::filled(1, 1, 1.0), &mask).unwrap();
        assert!((v - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-12);
        let z = kl_loss(&Matrix::filled(1, 1, 0.0), &Matrix::filled(1, 1, 0.5), &mask).unwrap();
        assert_eq!(z, 0.5);
    }

    #[test]
    fn kl_rejects_negative_observed() {
        let e = kl_loss(&Matrix::filled(1, 1, -1.0), &Matrix::ones(1, 1), &Matrix::ones(1, 1)).unwrap_err();
        assert!(matches!(e, Error::Domain(_)));
        assert!(e.to_string().contains("normalize"));
        // negative but unobserved is fine
        assert!(kl_loss(&Matrix::filled(1, 1, -1.0), &Matrix::ones(1, 1), &Matrix::zeros(1, 1)).is_ok());
    }

    #[test]
    fn fixed_point_is_stationary() {
        let u = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let v = Matrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let f = FactorPair::new(u, v).unwrap();
        let x = f.product();
        let (g, flags) = mu_step(&x, &Matrix::ones(2, 2), &f).unwrap();
        assert_eq!(flags, MuFlags::default());
        for (a, b) in g.u.as_slice().iter().chain(g.v.as_slice()).zip(f.u.as_slice().iter().chain(f.v.as_slice())) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_hand_update() {
        // x = all ones, u = v = ones, h = 1: x̂ = 1 everywhere, so every ratio
        // is 1 and the multiplier Σ_j v_j (x/x̂) / Σ_j v_j = 2 / 2 = 1.
        let f = FactorPair::new(Matrix::ones(2, 1), Matrix::ones(1, 2)).unwrap();
        let (g, _) = mu_step(&Matrix::ones(2, 2), &Matrix::ones(2, 2), &f).unwrap();
        assert_eq!(g, f);
        // x = [[2,2],[2,2]]: u_i <- 1 * (1*2 + 1*2) / (1 + 1) = 2, then
        // x̂ = 2, so v_j <- 1 * (2*1 + 2*1) / (2 + 2) = 1.
        let (g, _) = mu_step(&Matrix::filled(2, 2, 2.0), &Matrix::ones(2, 2), &f).unwrap();
        assert_eq!(g.u.as_slice(), &[2.0, 2.0]);
        assert_eq!(g.v.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn empty_row_is_flagged_and_left_alone() {
        let f = FactorPair::new(Matrix::filled(3, 1, 0.7), Matrix::filled(1, 2, 0.9)).unwrap();
        let mask = Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0], [1.0, 0.0]]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.0, 0.0], [3.0, 0.0]]).unwrap();
        let (g, flags) = mu_step(&x, &mask, &f).unwrap();
        assert_eq!(flags.empty_rows, vec![1]);
        assert_eq!(g.u[(1, 0)], 0.7);
    }

    #[test]
    fn rank_one_exact() {
        let x = Matrix::from_rows(&[[3.0, 4.0], [6.0, 8.0]]).unwrap();
        let xm = apply_mask(&x, &Matrix::ones(2, 2)).unwrap();
        let (f, trace) = pretrain(&xm, 1, &PretrainOptions::default()).unwrap();
        assert!(trace.final_loss() < 1e-6, "{}", trace.final_loss());
        assert!(trace.max_increase() <= 1e-9);
        let est = mf_impute(&f);
        for (a, b) in est.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn mf_impute_product_and_bounds() {
        let f = FactorPair::new(
            Matrix::from_rows(&[[1.0], [2.0]]).unwrap(),
            Matrix::from_rows(&[[3.0, 4.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(mf_impute(&f), Matrix::from_rows(&[[3.0, 4.0], [6.0, 8.0]]).unwrap());
        assert!(FactorPair::new(Matrix::zeros(2, 0), Matrix::zeros(0, 2)).is_err());
        let tiny = FactorPair::new(Matrix::filled(2, 1, MF_FLOOR), Matrix::filled(1, 3, MF_FLOOR)).unwrap();
        assert!(mf_impute(&tiny).as_slice().iter().all(|&v| v == MF_FLOOR * MF_FLOOR));
    }

    #[test]
    fn empty_mask_rejected() {
        let xm = apply_mask(&Matrix::ones(3, 3), &Matrix::zeros(3, 3)).unwrap();
        assert!(matches!(pretrain(&xm, 1, &PretrainOptions::default()), Err(Error::Spec(_))));
    }
}
