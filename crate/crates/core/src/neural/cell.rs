//! Recurrent cells (vanilla RNN, GRU, LSTM) over a flat parameter slice:
//! forward steps with per-step caches and the matching hand-derived
//! backward-through-time steps.
//!
//! Parameter layout per cell: gates in a fixed order (GRU: update, reset,
//! candidate; LSTM: input, forget, candidate, output), each gate as
//! [W_x (H x in), W_h (H x H), b (H)], row-major.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::numerics::{matvec_add, matvec_t_add, outer_add};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Rnn,
    Gru,
    Lstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub kind: CellKind,
    pub input: usize,
    pub hidden: usize,
}

/// LSTM gate order; the forget gate's bias starts at 1.
const LSTM_FORGET: usize = 1;

impl Cell {
    pub fn new(kind: CellKind, input: usize, hidden: usize) -> Cell {
        Cell { kind, input, hidden }
    }

    pub fn gates(&self) -> usize {
        match self.kind {
            CellKind::Rnn => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    fn gate_stride(&self) -> usize {
        self.hidden * self.input + self.hidden * self.hidden + self.hidden
    }

    pub fn param_count(&self) -> usize {
        self.gates() * self.gate_stride()
    }

    fn wx(&self, g: usize) -> std::ops::Range<usize> {
        let base = g * self.gate_stride();
        base..base + self.hidden * self.input
    }

    fn wh(&self, g: usize) -> std::ops::Range<usize> {
        let base = g * self.gate_stride() + self.hidden * self.input;
        base..base + self.hidden * self.hidden
    }

    fn bias(&self, g: usize) -> std::ops::Range<usize> {
        let base = g * self.gate_stride() + self.hidden * (self.input + self.hidden);
        base..base + self.hidden
    }

    /// Variance-scaled input weights, orthogonal recurrent weights, zero
    /// biases (LSTM forget bias 1).
    pub fn init<R: Rng>(&self, block: &mut [f64], rng: &mut R) {
        debug_assert_eq!(block.len(), self.param_count());
        let std_x = 1.0 / (self.input as f64).sqrt();
        for g in 0..self.gates() {
            for w in &mut block[self.wx(g)] {
                *w = std_x * rng.sample::<f64, _>(StandardNormal);
            }
            orthogonal(rng, self.hidden, &mut block[self.wh(g)]);
            let bias_value =
                if self.kind == CellKind::Lstm && g == LSTM_FORGET { 1.0 } else { 0.0 };
            for b in &mut block[self.bias(g)] {
                *b = bias_value;
            }
        }
    }

    /// One forward step. `h` (and `c` for LSTM) are updated in place;
    /// everything the backward pass needs lands in `cache`.
    pub fn step(&self, p: &[f64], x: &[f64], h: &mut [f64], c: &mut [f64], cache: &mut StepCache) {
        debug_assert_eq!(x.len(), self.input);
        debug_assert_eq!(h.len(), self.hidden);
        let hn = self.hidden;
        cache.x.copy_from_slice(x);
        cache.h_prev.copy_from_slice(h);
        // pre-activations W_x x + W_h h_prev + b; the GRU candidate is
        // excluded here because its recurrent input is r (*) h_prev
        let h_prev_gates = if self.kind == CellKind::Gru { 2 } else { self.gates() };
        for g in 0..h_prev_gates {
            let gate = &mut cache.gates[g];
            gate.copy_from_slice(&p[self.bias(g)]);
            matvec_add(&p[self.wx(g)], hn, self.input, x, gate);
            matvec_add(&p[self.wh(g)], hn, hn, &cache.h_prev, gate);
        }
        match self.kind {
            CellKind::Rnn => {
                for j in 0..hn {
                    let v = cache.gates[0][j].tanh();
                    cache.gates[0][j] = v;
                    h[j] = v;
                }
            }
            CellKind::Gru => {
                // gates: [update z, reset r, candidate n]
                for j in 0..hn {
                    cache.gates[0][j] = sigmoid(cache.gates[0][j]);
                    cache.gates[1][j] = sigmoid(cache.gates[1][j]);
                    cache.r_h[j] = cache.gates[1][j] * cache.h_prev[j];
                }
                // candidate uses r (*) h_prev instead of h_prev: redo its
                // recurrent term
                let (zr, rest) = cache.gates.split_at_mut(2);
                let gate = &mut rest[0];
                gate.copy_from_slice(&p[self.bias(2)]);
                matvec_add(&p[self.wx(2)], hn, self.input, x, gate);
                matvec_add(&p[self.wh(2)], hn, hn, &cache.r_h, gate);
                for j in 0..hn {
                    let n = gate[j].tanh();
                    gate[j] = n;
                    let z = zr[0][j];
                    h[j] = z * cache.h_prev[j] + (1.0 - z) * n;
                }
            }
            CellKind::Lstm => {
                debug_assert_eq!(c.len(), hn);
                cache.c_prev.copy_from_slice(c);
                for j in 0..hn {
                    let i = sigmoid(cache.gates[0][j]);
                    let f = sigmoid(cache.gates[1][j]);
                    let g = cache.gates[2][j].tanh();
                    let o = sigmoid(cache.gates[3][j]);
                    cache.gates[0][j] = i;
                    cache.gates[1][j] = f;
                    cache.gates[2][j] = g;
                    cache.gates[3][j] = o;
                    c[j] = f * cache.c_prev[j] + i * g;
                    let tc = c[j].tanh();
                    cache.tanh_c[j] = tc;
                    h[j] = o * tc;
                }
            }
        }
    }

    /// One backward step. On entry `dh`/`dc` hold dL/d(new state); on exit
    /// they hold dL/d(previous state). Parameter gradients accumulate into
    /// `grad` (same layout as `p`) and input gradients into `dx`.
    pub fn backward_step(
        &self,
        p: &[f64],
        grad: &mut [f64],
        cache: &mut StepCache,
        dh: &mut [f64],
        dc: &mut [f64],
        dx: &mut [f64],
    ) {
        let hn = self.hidden;
        match self.kind {
            CellKind::Rnn => {
                let h_new = &cache.gates[0];
                for j in 0..hn {
                    cache.da[j] = dh[j] * (1.0 - h_new[j] * h_new[j]);
                }
                self.apply_gate_grad(p, grad, 0, &cache.da, &cache.x, &cache.h_prev, dx, &mut cache.dh_acc, true);
                dh.copy_from_slice(&cache.dh_acc);
            }
            CellKind::Gru => {
                let (z, r, n) = (&cache.gates[0], &cache.gates[1], &cache.gates[2]);
                // h_new = z*h_prev + (1-z)*n
                for j in 0..hn {
                    cache.dh_acc[j] = dh[j] * z[j];
                }
                // candidate gate: input-side x, recurrent-side r (*) h_prev
                for j in 0..hn {
                    cache.da[j] = dh[j] * (1.0 - z[j]) * (1.0 - n[j] * n[j]);
                }
                outer_add(&cache.da, &cache.x, &mut grad[self.wx(2)]);
                outer_add(&cache.da, &cache.r_h, &mut grad[self.wh(2)]);
                add_to(&mut grad[self.bias(2)], &cache.da);
                matvec_t_add(&p[self.wx(2)], hn, self.input, &cache.da, dx);
                cache.d_rh.iter_mut().for_each(|v| *v = 0.0);
                matvec_t_add(&p[self.wh(2)], hn, hn, &cache.da, &mut cache.d_rh);
                for j in 0..hn {
                    cache.dh_acc[j] += cache.d_rh[j] * r[j];
                }
                // reset gate
                for j in 0..hn {
                    cache.da[j] = cache.d_rh[j] * cache.h_prev[j] * r[j] * (1.0 - r[j]);
                }
                self.apply_gate_grad(p, grad, 1, &cache.da, &cache.x, &cache.h_prev, dx, &mut cache.dh_acc, false);
                // update gate
                for j in 0..hn {
                    cache.da[j] = dh[j] * (cache.h_prev[j] - n[j]) * z[j] * (1.0 - z[j]);
                }
                self.apply_gate_grad(p, grad, 0, &cache.da, &cache.x, &cache.h_prev, dx, &mut cache.dh_acc, false);
                dh.copy_from_slice(&cache.dh_acc);
            }
            CellKind::Lstm => {
                let (i, f, g, o) =
                    (&cache.gates[0], &cache.gates[1], &cache.gates[2], &cache.gates[3]);
                // h_new = o * tanh(c_new)
                for j in 0..hn {
                    let tc = cache.tanh_c[j];
                    dc[j] += dh[j] * o[j] * (1.0 - tc * tc);
                }
                cache.dh_acc.iter_mut().for_each(|v| *v = 0.0);
                // output gate
                for j in 0..hn {
                    cache.da[j] = dh[j] * cache.tanh_c[j] * o[j] * (1.0 - o[j]);
                }
                self.apply_gate_grad(p, grad, 3, &cache.da, &cache.x, &cache.h_prev, dx, &mut cache.dh_acc, false);
                // c_new = f*c_prev + i*g
                for j in 0..hn {
                    cache.da[j] = dc[j] * g[j] * i[j] * (1.0 - i[j]);
                }
                self.apply_gate_grad(p, grad, 0, &cache.da, &cache.x, &cache.h_prev, dx, &mut cache.dh_acc, false);
                for j in 0..hn {
                    cache.da[j] = dc[j] * cache.c_prev[j] * f[j] * (1.0 - f[j]);
                }
                self.apply_gate_grad(p, grad, 1, &cache.da, &cache.x, &cache.h_prev, dx, &mut cache.dh_acc, false);
                for j in 0..hn {
                    cache.da[j] = dc[j] * i[j] * (1.0 - g[j] * g[j]);
                }
                self.apply_gate_grad(p, grad, 2, &cache.da, &cache.x, &cache.h_prev, dx, &mut cache.dh_acc, false);
                for j in 0..hn {
                    dc[j] *= f[j];
                }
                dh.copy_from_slice(&cache.dh_acc);
            }
        }
    }

    /// Standard per-gate accumulation: weight/bias grads plus input and
    /// previous-hidden contributions. `reset_dh` overwrites `dh_acc`
    /// instead of adding (used when this gate is the only one).
    #[allow(clippy::too_many_arguments)]
    fn apply_gate_grad(
        &self,
        p: &[f64],
        grad: &mut [f64],
        g: usize,
        da: &[f64],
        x: &[f64],
        h_prev: &[f64],
        dx: &mut [f64],
        dh_acc: &mut [f64],
        reset_dh: bool,
    ) {
        outer_add(da, x, &mut grad[self.wx(g)]);
        outer_add(da, h_prev, &mut grad[self.wh(g)]);
        add_to(&mut grad[self.bias(g)], da);
        matvec_t_add(&p[self.wx(g)], self.hidden, self.input, da, dx);
        if reset_dh {
            dh_acc.iter_mut().for_each(|v| *v = 0.0);
        }
        matvec_t_add(&p[self.wh(g)], self.hidden, self.hidden, da, dh_acc);
    }
}

fn add_to(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything one forward step must remember for its backward step, plus
/// scratch reused across samples.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gate vectors in the cell's gate order.
    pub gates: Vec<Vec<f64>>,
    pub tanh_c: Vec<f64>,
    /// GRU: reset (*) h_prev, the candidate gate's recurrent input.
    pub r_h: Vec<f64>,
    da: Vec<f64>,
    d_rh: Vec<f64>,
    dh_acc: Vec<f64>,
}

impl StepCache {
    pub fn new(cell: &Cell) -> StepCache {
        let h = cell.hidden;
        StepCache {
            x: vec![0.0; cell.input],
            h_prev: vec![0.0; h],
            c_prev: vec![0.0; h],
            gates: (0..cell.gates()).map(|_| vec![0.0; h]).collect(),
            tanh_c: vec![0.0; h],
            r_h: vec![0.0; h],
            da: vec![0.0; h],
            d_rh: vec![0.0; h],
            dh_acc: vec![0.0; h],
        }
    }
}

/// Fills `out` (n x n row-major) with a Householder-QR orthogonal matrix
/// of a standard-normal sample, columns sign-fixed by R's diagonal.
pub fn orthogonal<R: Rng>(rng: &mut R, n: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), n * n);
    let mut r: Vec<f64> = (0..n * n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut qt = vec![0.0; n * n];
    for i in 0..n {
        qt[i * n + i] = 1.0;
    }
    let mut v = vec![0.0; n];
    for k in 0..n {
        let mut norm2 = 0.0;
        for i in k..n {
            norm2 += r[i * n + k] * r[i * n + k];
        }
        if norm2 == 0.0 {
            continue;
        }
        let alpha = if r[k * n + k] > 0.0 { -norm2.sqrt() } else { norm2.sqrt() };
        for i in k..n {
            v[i] = r[i * n + k];
        }
        v[k] -= alpha;
        let vnorm2: f64 = (k..n).map(|i| v[i] * v[i]).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let dot: f64 = (k..n).map(|i| v[i] * r[i * n + j]).sum();
            let s = 2.0 * dot / vnorm2;
            for i in k..n {
                r[i * n + j] -= s * v[i];
            }
        }
        for j in 0..n {
            let dot: f64 = (k..n).map(|i| v[i] * qt[i * n + j]).sum();
            let s = 2.0 * dot / vnorm2;
            for i in k..n {
                qt[i * n + j] -= s * v[i];
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let sign = if r[j * n + j] < 0.0 { -1.0 } else { 1.0 };
            out[i * n + j] = qt[j * n + i] * sign;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_state(cell: &Cell) -> (Vec<f64>, Vec<f64>, StepCache) {
        (vec![0.0; cell.hidden], vec![0.0; cell.hidden], StepCache::new(cell))
    }

    #[test]
    fn zero_params_fix_zero_state() {
        for kind in [CellKind::Rnn, CellKind::Gru, CellKind::Lstm] {
            let cell = Cell::new(kind, 3, 4);
            let p = vec![0.0; cell.param_count()];
            let (mut h, mut c, mut cache) = zero_state(&cell);
            cell.step(&p, &[0.3, -1.0, 2.0], &mut h, &mut c, &mut cache);
            assert!(h.iter().all(|&v| v == 0.0), "{kind:?} hidden {h:?}");
            assert!(c.iter().all(|&v| v == 0.0), "{kind:?} cell {c:?}");
        }
    }

    #[test]
    fn scalar_rnn_tanh_half() {
        let cell = Cell::new(CellKind::Rnn, 1, 1);
        // w_x = 1, w_h = 0, b = 0
        let p = vec![1.0, 0.0, 0.0];
        let (mut h, mut c, mut cache) = zero_state(&cell);
        cell.step(&p, &[0.5], &mut h, &mut c, &mut cache);
        assert!((h[0] - 0.5_f64.tanh()).abs() < 1e-12);
        assert!((h[0] - 0.4621).abs() < 1e-4);
    }

    #[test]
    fn lstm_cell_state_decays_with_zero_input() {
        let cell = Cell::new(CellKind::Lstm, 1, 1);
        // all zero except forget bias 1
        let mut p = vec![0.0; cell.param_count()];
        p[cell.bias(LSTM_FORGET).start] = 1.0;
        let (mut h, mut c, mut cache) = zero_state(&cell);
        c[0] = 2.0;
        let f = sigmoid(1.0);
        let mut oracle = 2.0;
        let mut prev_mag = 2.0;
        for step in 0..30 {
            cell.step(&p, &[0.0], &mut h, &mut c, &mut cache);
            oracle *= f;
            assert!(
                (c[0] - oracle).abs() < 1e-12,
                "step {step}: {} vs oracle {}",
                c[0],
                oracle
            );
            assert!(c[0].abs() < prev_mag);
            prev_mag = c[0].abs();
        }
        assert!(c[0].abs() < 0.01);
    }

    #[test]
    fn gru_convex_blend_of_prev_and_candidate() {
        let cell = Cell::new(CellKind::Gru, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = vec![0.0; cell.param_count()];
        cell.init(&mut p, &mut rng);
        let (mut h, mut c, mut cache) = zero_state(&cell);
        h[0] = 0.4;
        cell.step(&p, &[0.7], &mut h, &mut c, &mut cache);
        let z = cache.gates[0][0];
        let n = cache.gates[2][0];
        let expected = z * 0.4 + (1.0 - z) * n;
        assert!((h[0] - expected).abs() < 1e-14);
        // new state sits between the old state and the candidate
        let (lo, hi) = if 0.4 < n { (0.4, n) } else { (n, 0.4) };
        assert!(h[0] >= lo - 1e-12 && h[0] <= hi + 1e-12);
    }

    #[test]
    fn orthogonal_matrix_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in [1usize, 2, 5, 16] {
            let mut q = vec![0.0; n * n];
            orthogonal(&mut rng, n, &mut q);
            // Q^T Q = I
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = (0..n).map(|i| q[i * n + a] * q[i * n + b]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!(
                        (dot - want).abs() < 1e-10,
                        "n={n} col {a}.col {b} = {dot}"
                    );
                }
            }
        }
        // deterministic for a fixed seed
        let mut q1 = vec![0.0; 9];
        let mut q2 = vec![0.0; 9];
        orthogonal(&mut ChaCha8Rng::seed_from_u64(3), 3, &mut q1);
        orthogonal(&mut ChaCha8Rng::seed_from_u64(3), 3, &mut q2);
        assert_eq!(q1, q2);
    }

    #[test]
    fn init_sets_forget_bias_to_one() {
        let cell = Cell::new(CellKind::Lstm, 2, 3);
        let mut p = vec![f64::NAN; cell.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        cell.init(&mut p, &mut rng);
        assert!(p.iter().all(|v| v.is_finite()));
        for j in cell.bias(LSTM_FORGET) {
            assert_eq!(p[j], 1.0);
        }
        for g in [0usize, 2, 3] {
            for j in cell.bias(g) {
                assert_eq!(p[j], 0.0);
            }
        }
    }
}
