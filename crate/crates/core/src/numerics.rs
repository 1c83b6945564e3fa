//! Deterministic numeric kernels shared by the model implementations:
//! a dense row-major matrix, activation functions, regression losses,
//! the Adam update rule, and a finite-difference gradient checker.
//!
//! Everything here is `f64` and single-threaded; reductions run in a fixed
//! order so repeated calls with identical inputs are bit-identical.

use crate::error::{Error, Result};

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        let m = Matrix { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * cols);
        for r in &rows {
            if r.len() != cols {
                return Err(Error::Dimension {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(n, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Validation(format!(
                "non-finite matrix entry at row {}, col {}",
                i / self.cols.max(1),
                i % self.cols.max(1)
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Slice kernels used by the hand-written forward/backward passes.
// ---------------------------------------------------------------------------

/// y = W x, with W stored row-major as `out_dim x in_dim`.
pub fn matvec(w: &[f64], out_dim: usize, in_dim: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), out_dim * in_dim);
    debug_assert_eq!(x.len(), in_dim);
    debug_assert_eq!(y.len(), out_dim);
    for (i, yi) in y.iter_mut().enumerate() {
        let row = &w[i * in_dim..(i + 1) * in_dim];
        let mut acc = 0.0;
        for (wj, xj) in row.iter().zip(x) {
            acc += wj * xj;
        }
        *yi = acc;
    }
}

/// y += W x.
pub fn matvec_add(w: &[f64], out_dim: usize, in_dim: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(w.len(), out_dim * in_dim);
    for (i, yi) in y.iter_mut().enumerate().take(out_dim) {
        let row = &w[i * in_dim..(i + 1) * in_dim];
        let mut acc = 0.0;
        for (wj, xj) in row.iter().zip(x) {
            acc += wj * xj;
        }
        *yi += acc;
    }
}

/// dx += W^T dy, with W stored row-major as `out_dim x in_dim`.
pub fn matvec_t_add(w: &[f64], out_dim: usize, in_dim: usize, dy: &[f64], dx: &mut [f64]) {
    debug_assert_eq!(w.len(), out_dim * in_dim);
    debug_assert_eq!(dy.len(), out_dim);
    debug_assert_eq!(dx.len(), in_dim);
    for i in 0..out_dim {
        let row = &w[i * in_dim..(i + 1) * in_dim];
        let d = dy[i];
        for (xj, wj) in dx.iter_mut().zip(row) {
            *xj += wj * d;
        }
    }
}

/// dW += dy x^T (outer product), dW row-major `out_dim x in_dim`.
pub fn outer_add(dy: &[f64], x: &[f64], dw: &mut [f64]) {
    let in_dim = x.len();
    debug_assert_eq!(dw.len(), dy.len() * in_dim);
    for (i, d) in dy.iter().enumerate() {
        let row = &mut dw[i * in_dim..(i + 1) * in_dim];
        for (wj, xj) in row.iter_mut().zip(x) {
            *wj += d * xj;
        }
    }
}

pub fn add_assign(a: &mut [f64], b: &[f64]) {
    debug_assert_eq!(a.len(), b.len());
    for (ai, bi) in a.iter_mut().zip(b) {
        *ai += bi;
    }
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Activations.
// ---------------------------------------------------------------------------

/// Fixed-point constants of the self-normalizing exponential linear unit.
pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

/// Scaled exponential linear unit.
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
    }
}

/// Derivative of `selu` with respect to its pre-activation input.
pub fn selu_deriv(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Subgradient 0 at the kink.
pub fn relu_deriv(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Losses.
// ---------------------------------------------------------------------------

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::Validation("empty vectors in metric".into()));
    }
    Ok(())
}

/// Mean absolute error, (1/n) sum |y - yhat|.
pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let s: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / y.len() as f64)
}

/// Root mean squared error, sqrt((1/n) sum (y - yhat)^2).
pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let s: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((s / y.len() as f64).sqrt())
}

/// Huber loss and its derivative at residual `r`:
/// quadratic `r^2/2` inside `|r| <= delta`, linear `delta(|r| - delta/2)` outside.
pub fn huber(r: f64, delta: f64) -> Result<(f64, f64)> {
    if delta <= 0.0 || !delta.is_finite() {
        return Err(Error::Validation(format!(
            "huber delta must be positive, got {delta}"
        )));
    }
    Ok(huber_unchecked(r, delta))
}

/// `huber` without the delta check; callers validate delta once per batch.
pub fn huber_unchecked(r: f64, delta: f64) -> (f64, f64) {
    if r.abs() <= delta {
        (0.5 * r * r, r)
    } else {
        (delta * (r.abs() - 0.5 * delta), delta * r.signum())
    }
}

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

/// Adam hyperparameters; the defaults are the ones usually quoted for the rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter first/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    hp: AdamParams,
}

impl AdamState {
    pub fn new(len: usize, hp: AdamParams) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            hp,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update, in place. The step counter is incremented before the
/// bias correction, so the first call uses tau = 1.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension {
            expected: state.m.len(),
            got: grads.len(),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Diverged(format!(
            "non-finite gradient at parameter {i}"
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let hp = state.hp;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.epsilon);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.
// ---------------------------------------------------------------------------

/// Compares `analytic` against central differences of `f` around `params`,
/// one coordinate at a time, and returns the worst relative error. The
/// relative error denominator is `max(|analytic_i|, |numeric_i|, 1e-8)`.
///
/// `params` is perturbed during probing and restored before returning.
pub fn grad_check<F>(mut f: F, params: &mut [f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            got: analytic.len(),
        });
    }
    if h <= 0.0 {
        return Err(Error::Validation("step h must be positive".into()));
    }
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + h;
        let f_plus = f(params);
        params[i] = orig - h;
        let f_minus = f(params);
        params[i] = orig;
        if !f_plus.is_finite() || !f_minus.is_finite() {
            return Err(Error::Validation(format!(
                "non-finite objective while probing parameter {i}"
            )));
        }
        let numeric = (f_plus - f_minus) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn selu_fixed_values() {
        assert_eq!(selu(0.0), 0.0);
        assert_eq!(selu(1.0), 1.0507009873554805);
        let expected = SELU_LAMBDA * SELU_ALPHA * ((-1.0f64).exp() - 1.0);
        assert!((selu(-1.0) - expected).abs() < 1e-15);
        assert!((selu(-1.0) - (-1.1113307)).abs() < 1e-6);
    }

    #[test]
    fn selu_monotone_and_continuous_at_zero() {
        let mut prev = f64::NEG_INFINITY;
        let mut x = -6.0;
        while x <= 6.0 {
            let y = selu(x);
            assert!(y > prev, "selu not increasing at {x}");
            prev = y;
            x += 1e-3;
        }
        assert!((selu(1e-12) - selu(-1e-12)).abs() < 1e-11);
    }

    #[test]
    fn selu_preserves_standard_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let y = selu(z);
            sum += y;
            sum_sq += y * y;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() <= 0.1, "selu sample mean {mean}");
        assert!((0.9..=1.1).contains(&var), "selu sample variance {var}");
    }

    #[test]
    fn relu_values() {
        assert_eq!(relu(-3.0), 0.0);
        assert_eq!(relu(2.5), 2.5);
        assert_eq!(relu(0.0), 0.0);
        assert_eq!(relu_deriv(0.0), 0.0);
    }

    #[test]
    fn mae_rmse_hand_case() {
        let y = [0.0, 0.0];
        let yhat = [3.0, -1.0];
        assert!((mae(&y, &yhat).unwrap() - 2.0).abs() < 1e-12);
        assert!((rmse(&y, &yhat).unwrap() - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn mae_rmse_errors() {
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn rmse_dominates_mae_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..40);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            let yh: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            let m = mae(&y, &yh).unwrap();
            let r = rmse(&y, &yh).unwrap();
            assert!(r >= m - 1e-12, "rmse {r} < mae {m}");
        }
    }

    #[test]
    fn huber_values_and_continuity() {
        let (l, d) = huber(0.5, 1.0).unwrap();
        assert!((l - 0.125).abs() < 1e-15);
        assert!((d - 0.5).abs() < 1e-15);
        let (l, d) = huber(2.0, 1.0).unwrap();
        assert!((l - 1.5).abs() < 1e-15);
        assert!((d - 1.0).abs() < 1e-15);
        // both branches agree at |r| = delta
        let delta = 0.7_f64;
        let inside = 0.5 * delta * delta;
        let outside = delta * (delta - 0.5 * delta);
        assert!((inside - outside).abs() < 1e-15);
        let (at, datt) = huber(delta, delta).unwrap();
        assert!((at - inside).abs() < 1e-15);
        assert!((datt - delta).abs() < 1e-15);
        // derivative continuous across the knot
        let (_, d_in) = huber(delta - 1e-9, delta).unwrap();
        let (_, d_out) = huber(delta + 1e-9, delta).unwrap();
        assert!((d_in - d_out).abs() < 1e-8);
        assert!(huber(1.0, 0.0).is_err());
        assert!(huber(1.0, -1.0).is_err());
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut params = vec![0.0];
        let mut state = AdamState::new(1, AdamParams::default());
        adam_step(&mut params, &[10.0], &mut state).unwrap();
        assert!((params[0] - (-0.001)).abs() < 1e-8, "got {}", params[0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut params = vec![1.5, -2.0];
        let mut state = AdamState::new(2, AdamParams::default());
        for _ in 0..50 {
            adam_step(&mut params, &[0.0, 0.0], &mut state).unwrap();
        }
        assert_eq!(params, vec![1.5, -2.0]);
    }

    #[test]
    fn adam_matches_independent_scalar_oracle() {
        // Independent re-implementation of the update rule, scalar at a time.
        struct Oracle {
            m: f64,
            v: f64,
            t: i32,
        }
        impl Oracle {
            fn step(&mut self, theta: f64, g: f64, hp: &AdamParams) -> f64 {
                self.t += 1;
                self.m = hp.beta1 * self.m + (1.0 - hp.beta1) * g;
                self.v = hp.beta2 * self.v + (1.0 - hp.beta2) * g * g;
                let m_hat = self.m / (1.0 - hp.beta1.powi(self.t));
                let v_hat = self.v / (1.0 - hp.beta2.powi(self.t));
                theta - hp.lr * m_hat / (v_hat.sqrt() + hp.epsilon)
            }
        }

        let hp = AdamParams::default();
        let mut params = vec![0.3, -1.2, 4.0];
        let mut oracle_params = params.clone();
        let mut state = AdamState::new(3, hp);
        let mut oracles = [
            Oracle { m: 0.0, v: 0.0, t: 0 },
            Oracle { m: 0.0, v: 0.0, t: 0 },
            Oracle { m: 0.0, v: 0.0, t: 0 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let grads: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            adam_step(&mut params, &grads, &mut state).unwrap();
            for i in 0..3 {
                oracle_params[i] = oracles[i].step(oracle_params[i], grads[i], &hp);
            }
        }
        for i in 0..3 {
            assert!(
                (params[i] - oracle_params[i]).abs() < 1e-12,
                "param {i}: {} vs oracle {}",
                params[i],
                oracle_params[i]
            );
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut params = vec![0.1, 0.2];
            let mut state = AdamState::new(2, AdamParams::default());
            for k in 0..20 {
                let g = [0.3 * (k as f64).sin(), -0.1 * k as f64];
                adam_step(&mut params, &g, &mut state).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut params = vec![0.0];
        let mut state = AdamState::new(1, AdamParams::default());
        assert!(matches!(
            adam_step(&mut params, &[f64::NAN], &mut state),
            Err(Error::Diverged(_))
        ));
    }

    #[test]
    fn grad_check_quadratic() {
        let mut params = vec![3.0];
        let analytic = vec![6.0];
        let err = grad_check(|p| p[0] * p[0], &mut params, &analytic, 1e-5).unwrap();
        assert!(err < 1e-9, "rel err {err}");
        assert_eq!(params[0], 3.0); // restored
    }

    #[test]
    fn grad_check_linear_is_exact() {
        let mut params = vec![1.0, -2.0, 0.5];
        let analytic = vec![2.0, 3.0, -1.0];
        let err = grad_check(
            |p| 2.0 * p[0] + 3.0 * p[1] - p[2],
            &mut params,
            &analytic,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "rel err {err}");
    }

    #[test]
    fn grad_check_detects_wrong_gradient() {
        let mut params = vec![3.0];
        let wrong = vec![12.0]; // 2x the true gradient
        let err = grad_check(|p| p[0] * p[0], &mut params, &wrong, 1e-5).unwrap();
        assert!((err - 0.5).abs() < 1e-6, "rel err {err}");
    }

    #[test]
    fn matrix_shape_checks() {
        assert!(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        let m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.at(1, 0), 3.0);
        assert_eq!(m.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn kernels_match_naive_definitions() {
        let w = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let x = vec![1.0, 0.5, -1.0];
        let mut y = vec![0.0; 2];
        matvec(&w, 2, 3, &x, &mut y);
        assert_eq!(y, vec![1.0 + 1.0 - 3.0, 4.0 + 2.5 - 6.0]);

        let dy = vec![2.0, -1.0];
        let mut dx = vec![0.0; 3];
        matvec_t_add(&w, 2, 3, &dy, &mut dx);
        assert_eq!(dx, vec![2.0 - 4.0, 4.0 - 5.0, 6.0 - 6.0]);

        let mut dw = vec![0.0; 6];
        outer_add(&dy, &x, &mut dw);
        assert_eq!(dw, vec![2.0, 1.0, -2.0, -1.0, -0.5, 1.0]);
    }
}
