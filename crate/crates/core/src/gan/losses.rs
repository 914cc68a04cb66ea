use crate::error::{Error, Result};
use crate::masking::MaskedMatrix;
use crate::numkern::{Matrix, SeededRng};

/// Clamp applied inside every log term.
pub const LOG_CLAMP: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP)
}

/// `d ln(clamp(p)) / dp`, zero where the clamp is active.
fn dlog(p: f64) -> f64 {
    if (LOG_CLAMP..=1.0 - LOG_CLAMP).contains(&p) {
        1.0 / p
    } else {
        0.0
    }
}

/// `d ln(1 − clamp(p)) / dp`, zero where the clamp is active.
fn dlog1m(p: f64) -> f64 {
    if (LOG_CLAMP..=1.0 - LOG_CLAMP).contains(&p) {
        -1.0 / (1.0 - p)
    } else {
        0.0
    }
}

fn require_binary(name: &str, m: &Matrix) -> Result<()> {
    if !m.is_binary() {
        return Err(Error::Validation(format!("{name} must contain only 0 and 1")));
    }
    Ok(())
}

/// `H = B⊙M + 0.5·(1 − B)` with `P(B_ij = 1) = hint_rate`.
pub fn build_hint(mask: &Matrix, hint_rate: f64, rng: &mut SeededRng) -> Result<Matrix> {
    require_binary("mask", mask)?;
    if !(0.0..=1.0).contains(&hint_rate) {
        return Err(Error::Spec(format!("hint_rate must lie in [0, 1], got {hint_rate}")));
    }
    Ok(mask.map(|m| if rng.bernoulli(hint_rate) { m } else { 0.5 }))
}

/// `X̄ = X̃⊙M + X̂⊙(1 − M)`, taking observed cells bit-exactly.
pub fn assemble(xm: &MaskedMatrix, xhat: &Matrix) -> Result<Matrix> {
    assemble_parts(xm.values(), xm.mask(), xhat)
}

pub(crate) fn assemble_parts(x: &Matrix, mask: &Matrix, xhat: &Matrix) -> Result<Matrix> {
    x.check_same_shape("assemble", xhat)?;
    x.check_same_shape("assemble", mask)?;
    let data = x
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .zip(xhat.as_slice())
        .map(|((&v, &m), &g)| if m == 1.0 { v } else { g })
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data)
}

/// Row `i` of the result is `u_p` row `i` when `y_i = 1`, else `u` row `i`.
pub fn mix_rows(u_p: &Matrix, u: &Matrix, y: &Matrix) -> Result<Matrix> {
    u_p.check_same_shape("mix_rows", u)?;
    if y.shape() != (u.rows(), 1) {
        return Err(Error::Shape {
            op: "mix_rows",
            left: u.shape(),
            right: y.shape(),
        });
    }
    require_binary("row labels y", y)?;
    let mut out = u.clone();
    for i in 0..u.rows() {
        if y[(i, 0)] == 1.0 {
            out.row_mut(i).copy_from_slice(u_p.row(i));
        }
    }
    Ok(out)
}

/// `Σ_i y_i ln D_i + (1 − y_i) ln(1 − D_i)`, outputs clamped to `[δ, 1 − δ]`.
pub fn d1_loss(d1_out: &Matrix, y: &Matrix) -> Result<f64> {
    d1_out.check_same_shape("d1_loss", y)?;
    Ok(bce_sum(d1_out, y))
}

/// `Σ_ij M ln D + (1 − M) ln(1 − D)`, outputs clamped to `[δ, 1 − δ]`.
pub fn d2_loss(d2_out: &Matrix, mask: &Matrix) -> Result<f64> {
    d2_out.check_same_shape("d2_loss", mask)?;
    Ok(bce_sum(d2_out, mask))
}

fn bce_sum(out: &Matrix, labels: &Matrix) -> f64 {
    out.as_slice()
        .iter()
        .zip(labels.as_slice())
        .map(|(&p, &t)| {
            let p = clamp_prob(p);
            t * p.ln() + (1.0 - t) * (1.0 - p).ln()
        })
        .sum()
}

/// Gradient of [`d1_loss`] / [`d2_loss`] with respect to the discriminator output.
pub(crate) fn bce_sum_grad(out: &Matrix, labels: &Matrix) -> Matrix {
    out.zip_map(labels, |p, t| t * dlog(p) + (1.0 - t) * dlog1m(p))
        .expect("shapes checked by caller")
}

/// Non-saturating generator term `−Σ_{fake} ln D` and its gradient with
/// respect to `D`. `fake` marks generated cells or rows with 1.
pub(crate) fn nonsaturating(out: &Matrix, fake: &Matrix) -> (f64, Matrix) {
    let loss = out
        .as_slice()
        .iter()
        .zip(fake.as_slice())
        .map(|(&p, &f)| -f * clamp_prob(p).ln())
        .sum();
    let grad = out
        .zip_map(fake, |p, f| -f * dlog(p))
        .expect("shapes checked by caller");
    (loss, grad)
}

/// Generator objective `(1 − α)·adversarial + α·mf`.
/// A disabled side contributes nothing, so `α = 1` returns `mf_term` exactly.
pub fn combined_g_loss(alpha: f64, adversarial: f64, mf_term: f64) -> f64 {
    if alpha >= 1.0 {
        mf_term
    } else if alpha <= 0.0 {
        adversarial
    } else {
        (1.0 - alpha) * adversarial + alpha * mf_term
    }
}

/// Masked generalized KL with the estimate clamped to `δ`, and its gradient
/// with respect to the estimate.
pub(crate) fn kl_term(x: &Matrix, xhat: &Matrix, mask: &Matrix) -> (f64, Matrix) {
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for (k, ((&a, &b), &m)) in x
        .as_slice()
        .iter()
        .zip(xhat.as_slice())
        .zip(mask.as_slice())
        .enumerate()
    {
        if m != 1.0 {
            continue;
        }
        let clamped = b < LOG_CLAMP;
        let bc = b.max(LOG_CLAMP);
        if a == 0.0 {
            loss += bc;
        } else {
            loss += a * (a / bc).ln() - a + bc;
        }
        grad.as_mut_slice()[k] = if clamped { 0.0 } else { 1.0 - a / bc };
    }
    (loss, grad)
}

/// Masked sum of squared errors and its gradient.
pub(crate) fn sse_term(x: &Matrix, xhat: &Matrix, mask: &Matrix) -> (f64, Matrix) {
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for (k, ((&a, &b), &m)) in x
        .as_slice()
        .iter()
        .zip(xhat.as_slice())
        .zip(mask.as_slice())
        .enumerate()
    {
        if m == 1.0 {
            loss += (b - a) * (b - a);
            grad.as_mut_slice()[k] = 2.0 * (b - a);
        }
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::apply_mask;

    #[test]
    fn hint_boundaries() {
        let mask = Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]]).unwrap();
        let mut rng = SeededRng::new(1);
        assert_eq!(build_hint(&mask, 1.0, &mut rng).unwrap(), mask);
        assert_eq!(build_hint(&mask, 0.0, &mut rng).unwrap(), Matrix::filled(2, 3, 0.5));
        assert!(build_hint(&Matrix::filled(1, 1, 0.3), 0.5, &mut rng).is_err());
    }

    #[test]
    fn hint_rate_statistics() {
        let mask = Matrix::from_fn(100, 100, |i, j| ((i + j) % 2) as f64);
        let h = build_hint(&mask, 0.9, &mut SeededRng::new(7)).unwrap();
        let half = h.count_where(|v| v == 0.5) as f64 / 1e4;
        assert!((half - 0.10).abs() <= 0.02, "{half}");
        assert!(h.as_slice().iter().all(|&v| v == 0.0 || v == 0.5 || v == 1.0));
    }

    #[test]
    fn assemble_hand_example() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 4.0]]).unwrap();
        let mask = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let xm = apply_mask(&x, &mask).unwrap();
        let xhat = Matrix::from_rows(&[[9.0, 2.0], [3.0, 9.0]]).unwrap();
        assert_eq!(
            assemble(&xm, &xhat).unwrap(),
            Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap()
        );
        let full = apply_mask(&x, &Matrix::ones(2, 2)).unwrap();
        assert_eq!(assemble(&full, &xhat).unwrap(), x);
        let none = apply_mask(&x, &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(assemble(&none, &xhat).unwrap(), xhat);
    }

    #[test]
    fn mix_rows_hand_example() {
        let up = Matrix::from_rows(&[[1.0, 1.0], [3.0, 3.0]]).unwrap();
        let u = Matrix::from_rows(&[[2.0, 2.0], [4.0, 4.0]]).unwrap();
        let y = Matrix::from_rows(&[[1.0], [0.0]]).unwrap();
        assert_eq!(
            mix_rows(&up, &u, &y).unwrap(),
            Matrix::from_rows(&[[1.0, 1.0], [4.0, 4.0]]).unwrap()
        );
        assert_eq!(mix_rows(&up, &u, &Matrix::ones(2, 1)).unwrap(), up);
        assert_eq!(mix_rows(&up, &u, &Matrix::zeros(2, 1)).unwrap(), u);
        assert!(matches!(
            mix_rows(&up, &u, &Matrix::filled(2, 1, 0.5)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn discriminator_losses_at_half() {
        let m = 6;
        let y = Matrix::from_fn(m, 1, |i, _| (i % 2) as f64);
        let v = d1_loss(&Matrix::filled(m, 1, 0.5), &y).unwrap();
        assert!((v - m as f64 * 0.5f64.ln()).abs() < 1e-12);
        let mask = Matrix::from_fn(3, 4, |i, j| ((i * j) % 2) as f64);
        let v = d2_loss(&Matrix::filled(3, 4, 0.5), &mask).unwrap();
        assert!((v - 12.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_discrimination_near_zero() {
        let y = Matrix::from_rows(&[[1.0], [0.0], [1.0]]).unwrap();
        let v = d1_loss(&y, &y).unwrap();
        assert!(v < 0.0 && v > -1e-6);
        let ones = Matrix::ones(3, 1);
        let lo = d1_loss(&Matrix::filled(3, 1, 0.3), &ones).unwrap();
        let hi = d1_loss(&Matrix::filled(3, 1, 0.6), &ones).unwrap();
        assert!((lo - 3.0 * 0.3f64.ln()).abs() < 1e-12 && lo < hi);
    }

    #[test]
    fn combined_boundaries() {
        assert_eq!(combined_g_loss(1.0, 123.0, 4.5), 4.5);
        assert_eq!(combined_g_loss(0.0, 123.0, 4.5), 123.0);
        assert_eq!(combined_g_loss(0.5, 2.0, 2.0), 2.0);
    }

    #[test]
    fn kl_term_matches_mf_loss() {
        let x = Matrix::from_rows(&[[2.0, 0.0], [0.5, 1.0]]).unwrap();
        let xh = Matrix::from_rows(&[[1.0, 0.3], [0.7, 1.0]]).unwrap();
        let mask = Matrix::from_rows(&[[1.0, 1.0], [1.0, 0.0]]).unwrap();
        let (l, g) = kl_term(&x, &xh, &mask);
        assert!((l - crate::mf::kl_loss(&x, &xh, &mask).unwrap()).abs() < 1e-12);
        assert_eq!(g[(1, 1)], 0.0);
        assert!((g[(0, 0)] + 1.0).abs() < 1e-12);
    }
}
