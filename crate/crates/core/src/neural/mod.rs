//! Feed-forward and encoder-decoder forecasting models over a single flat
//! parameter vector, trained with mini-batch Adam on MAE loss.
//!
//! Encoder-decoder variants feed the feature vector into the encoder as a
//! length-d sequence of scalars, pass the final state(s) through a dense
//! representation layer of size 2d (SELU), unroll the decoder with the
//! representation as its input each step, and produce one non-negative
//! scalar through a ReLU output layer.

pub mod cell;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::features::Dataset;
use crate::numerics::{
    adam_step, l2_norm, matvec_add, matvec_t_add, outer_add, relu, relu_deriv, selu,
    selu_deriv, AdamParams, AdamState, Matrix,
};
use cell::{Cell, CellKind, StepCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ffnn,
    Rnn,
    Gru,
    Lstm,
    BiLstm,
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Ffnn => "FFNN",
            ModelKind::Rnn => "RNN",
            ModelKind::Gru => "GRU",
            ModelKind::Lstm => "LSTM",
            ModelKind::BiLstm => "BiLSTM",
        }
    }

    pub fn parse(s: &str) -> Result<ModelKind> {
        match s.to_ascii_lowercase().as_str() {
            "ffnn" => Ok(ModelKind::Ffnn),
            "rnn" => Ok(ModelKind::Rnn),
            "gru" => Ok(ModelKind::Gru),
            "lstm" => Ok(ModelKind::Lstm),
            "bilstm" => Ok(ModelKind::BiLstm),
            other => Err(Error::Config(format!(
                "unknown model `{other}`; expected ffnn, rnn, gru, lstm, bilstm, or gbrt"
            ))),
        }
    }
}

/// Hidden width default; the representation layer is always 2x input_dim.
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Recurrent state width H (ignored by FFNN, whose hidden layers are
    /// fixed at 2x input_dim).
    pub hidden: usize,
    /// Decoder unroll length R.
    pub decoder_steps: usize,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, input_dim: usize) -> ModelConfig {
        ModelConfig { kind, input_dim, hidden: DEFAULT_HIDDEN, decoder_steps: 1 }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim < 1 {
            return Err(Error::Config("input_dim must be >= 1".into()));
        }
        if self.hidden < 1 {
            return Err(Error::Config("hidden must be >= 1".into()));
        }
        if self.decoder_steps < 1 {
            return Err(Error::Config("decoder_steps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Act {
    Selu,
    Relu,
}

impl Act {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Act::Selu => selu(x),
            Act::Relu => relu(x),
        }
    }

    fn deriv(&self, x: f64) -> f64 {
        match self {
            Act::Selu => selu_deriv(x),
            Act::Relu => relu_deriv(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    input: usize,
    output: usize,
    offset: usize,
    act: Act,
}

impl Dense {
    fn param_count(&self) -> usize {
        self.output * (self.input + 1)
    }

    fn w(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.output * self.input
    }

    fn b(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.output * self.input;
        start..start + self.output
    }

    fn forward(&self, p: &[f64], x: &[f64], pre: &mut [f64], act: &mut [f64]) {
        pre.copy_from_slice(&p[self.b()]);
        matvec_add(&p[self.w()], self.output, self.input, x, pre);
        for (a, &v) in act.iter_mut().zip(pre.iter()) {
            *a = self.act.apply(v);
        }
    }

    /// `dy` enters as dL/d(activated output) and is consumed; input
    /// gradients accumulate into `dx`.
    fn backward(
        &self,
        p: &[f64],
        grad: &mut [f64],
        x: &[f64],
        pre: &[f64],
        dy: &mut [f64],
        dx: &mut [f64],
    ) {
        for (d, &v) in dy.iter_mut().zip(pre.iter()) {
            *d *= self.act.deriv(v);
        }
        outer_add(dy, x, &mut grad[self.w()]);
        for (gb, &d) in grad[self.b()].iter_mut().zip(dy.iter()) {
            *gb += d;
        }
        matvec_t_add(&p[self.w()], self.output, self.input, dy, dx);
    }

    fn init<R: rand::Rng>(&self, params: &mut [f64], rng: &mut R) {
        let std = 1.0 / (self.input as f64).sqrt();
        for w in &mut params[self.w()] {
            *w = std * rng.sample::<f64, _>(StandardNormal);
        }
        for b in &mut params[self.b()] {
            *b = 0.0;
        }
    }

    /// Output-head start: zero weights and a small positive bias, so the
    /// ReLU output begins active on every input.
    fn init_head(&self, params: &mut [f64]) {
        for w in &mut params[self.w()] {
            *w = 0.0;
        }
        for b in &mut params[self.b()] {
            *b = HEAD_BIAS_INIT;
        }
    }
}

const HEAD_BIAS_INIT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CellBlock {
    cell: Cell,
    offset: usize,
}

impl CellBlock {
    fn p<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.cell.param_count()]
    }

    fn g<'a>(&self, grad: &'a mut [f64]) -> &'a mut [f64] {
        &mut grad[self.offset..self.offset + self.cell.param_count()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Arch {
    Ffnn { l1: Dense, l2: Dense, l3: Dense },
    EncDec { enc: CellBlock, enc_back: Option<CellBlock>, rep: Dense, dec: CellBlock, out: Dense },
}

fn build_arch(cfg: &ModelConfig) -> (Arch, usize) {
    let d = cfg.input_dim;
    match cfg.kind {
        ModelKind::Ffnn => {
            let l1 = Dense { input: d, output: 2 * d, offset: 0, act: Act::Selu };
            let l2 = Dense {
                input: 2 * d,
                output: 2 * d,
                offset: l1.offset + l1.param_count(),
                act: Act::Selu,
            };
            let l3 = Dense {
                input: 2 * d,
                output: 1,
                offset: l2.offset + l2.param_count(),
                act: Act::Relu,
            };
            let total = l3.offset + l3.param_count();
            (Arch::Ffnn { l1, l2, l3 }, total)
        }
        kind => {
            let cell_kind = match kind {
                ModelKind::Rnn => CellKind::Rnn,
                ModelKind::Gru => CellKind::Gru,
                ModelKind::Lstm | ModelKind::BiLstm => CellKind::Lstm,
                ModelKind::Ffnn => unreachable!(),
            };
            let h = cfg.hidden;
            let enc = CellBlock { cell: Cell::new(cell_kind, 1, h), offset: 0 };
            let mut cursor = enc.cell.param_count();
            let enc_back = if kind == ModelKind::BiLstm {
                let b = CellBlock { cell: Cell::new(cell_kind, 1, h), offset: cursor };
                cursor += b.cell.param_count();
                Some(b)
            } else {
                None
            };
            let enc_out = if enc_back.is_some() { 2 * h } else { h };
            let rep = Dense { input: enc_out, output: 2 * d, offset: cursor, act: Act::Selu };
            cursor += rep.param_count();
            let dec = CellBlock { cell: Cell::new(cell_kind, 2 * d, h), offset: cursor };
            cursor += dec.cell.param_count();
            let out = Dense { input: h, output: 1, offset: cursor, act: Act::Relu };
            cursor += out.param_count();
            assert_eq!(rep.output, 2 * d);
            (Arch::EncDec { enc, enc_back, rep, dec, out }, cursor)
        }
    }
}

/// A forecasting model: architecture metadata plus one flat parameter
/// vector (the order the persistence format serializes).
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    cfg: ModelConfig,
    arch: Arch,
    params: Vec<f64>,
}

impl Model {
    /// Randomly initialized model: variance-scaled dense weights,
    /// orthogonal recurrent matrices, LSTM forget bias 1, and a zeroed
    /// output head with a small positive bias.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Model> {
        cfg.validate()?;
        let (arch, total) = build_arch(&cfg);
        let mut params = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &arch {
            Arch::Ffnn { l1, l2, l3 } => {
                l1.init(&mut params, &mut rng);
                l2.init(&mut params, &mut rng);
                l3.init_head(&mut params);
            }
            Arch::EncDec { enc, enc_back, rep, dec, out } => {
                enc.cell.init(&mut params[enc.offset..enc.offset + enc.cell.param_count()], &mut rng);
                if let Some(b) = enc_back {
                    b.cell.init(&mut params[b.offset..b.offset + b.cell.param_count()], &mut rng);
                }
                rep.init(&mut params, &mut rng);
                dec.cell.init(&mut params[dec.offset..dec.offset + dec.cell.param_count()], &mut rng);
                out.init_head(&mut params);
            }
        }
        Ok(Model { cfg, arch, params })
    }

    /// All-zero parameters (predicts 0 everywhere); mainly for tests.
    pub fn zeroed(cfg: ModelConfig) -> Result<Model> {
        cfg.validate()?;
        let (arch, total) = build_arch(&cfg);
        Ok(Model { cfg, arch, params: vec![0.0; total] })
    }

    pub fn from_params(cfg: ModelConfig, params: Vec<f64>) -> Result<Model> {
        cfg.validate()?;
        let (arch, total) = build_arch(&cfg);
        if params.len() != total {
            return Err(Error::Dimension { expected: total, got: params.len() });
        }
        if let Some(v) = params.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite parameter {v}")));
        }
        Ok(Model { cfg, arch, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn kind(&self) -> ModelKind {
        self.cfg.kind
    }

    pub fn input_dim(&self) -> usize {
        self.cfg.input_dim
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(&self.cfg, &self.arch)
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        let mut ws = self.workspace();
        self.forward_ws(x, &mut ws)
    }

    /// Representation vector (length 2x input_dim) for one input.
    /// FFNN models expose their second hidden layer, which has the same
    /// width.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut ws = self.workspace();
        self.forward_ws(x, &mut ws)?;
        Ok(match &self.arch {
            Arch::Ffnn { .. } => ws.a2.clone(),
            Arch::EncDec { .. } => ws.rep_act.clone(),
        })
    }

    /// Final encoder hidden state per direction (backward = None when the
    /// encoder is unidirectional).
    pub fn encoder_final_states(&self, x: &[f64]) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        match &self.arch {
            Arch::Ffnn { .. } => Err(Error::Config("FFNN has no encoder states".into())),
            Arch::EncDec { enc_back, .. } => {
                let mut ws = self.workspace();
                self.forward_ws(x, &mut ws)?;
                let h = self.cfg.hidden;
                let fwd = ws.enc_final[..h].to_vec();
                let bwd = enc_back.as_ref().map(|_| ws.enc_final[h..2 * h].to_vec());
                Ok((fwd, bwd))
            }
        }
    }

    fn forward_ws(&self, x: &[f64], ws: &mut Workspace) -> Result<f64> {
        if x.len() != self.cfg.input_dim {
            return Err(Error::Dimension { expected: self.cfg.input_dim, got: x.len() });
        }
        let p = &self.params;
        match &self.arch {
            Arch::Ffnn { l1, l2, l3 } => {
                l1.forward(p, x, &mut ws.a1_pre, &mut ws.a1);
                l2.forward(p, &ws.a1, &mut ws.a2_pre, &mut ws.a2);
                check_finite(&ws.a2, "hidden layers")?;
                l3.forward(p, &ws.a2, &mut ws.out_pre, &mut ws.out_act);
                check_finite(&ws.out_act, "output layer")?;
                Ok(ws.out_act[0])
            }
            Arch::EncDec { enc, enc_back, rep, dec, out } => {
                zero(&mut ws.h);
                zero(&mut ws.c);
                for t in 0..x.len() {
                    enc.cell.step(
                        enc.p(p),
                        &x[t..t + 1],
                        &mut ws.h,
                        &mut ws.c,
                        &mut ws.enc_caches[t],
                    );
                }
                let h = self.cfg.hidden;
                ws.enc_final[..h].copy_from_slice(&ws.h);
                if let Some(back) = enc_back {
                    zero(&mut ws.h2);
                    zero(&mut ws.c2);
                    for (k, t) in (0..x.len()).rev().enumerate() {
                        back.cell.step(
                            back.p(p),
                            &x[t..t + 1],
                            &mut ws.h2,
                            &mut ws.c2,
                            &mut ws.enc_b_caches[k],
                        );
                    }
                    ws.enc_final[h..2 * h].copy_from_slice(&ws.h2);
                }
                check_finite(&ws.enc_final, "encoder")?;
                rep.forward(p, &ws.enc_final, &mut ws.rep_pre, &mut ws.rep_act);
                check_finite(&ws.rep_act, "representation layer")?;
                zero(&mut ws.dec_h);
                zero(&mut ws.dec_c);
                for s in 0..self.cfg.decoder_steps {
                    dec.cell.step(
                        dec.p(p),
                        &ws.rep_act,
                        &mut ws.dec_h,
                        &mut ws.dec_c,
                        &mut ws.dec_caches[s],
                    );
                }
                check_finite(&ws.dec_h, "decoder")?;
                out.forward(p, &ws.dec_h, &mut ws.out_pre, &mut ws.out_act);
                check_finite(&ws.out_act, "output layer")?;
                Ok(ws.out_act[0])
            }
        }
    }

    /// Backward for the sample most recently run through `forward_ws` with
    /// this workspace; `dout` is dL/d(prediction).
    fn backward_ws(&self, x: &[f64], dout: f64, grad: &mut [f64], ws: &mut Workspace) {
        let p = &self.params;
        match &self.arch {
            Arch::Ffnn { l1, l2, l3 } => {
                ws.dy1[0] = dout;
                zero(&mut ws.d2);
                l3.backward(p, grad, &ws.a2, &ws.out_pre, &mut ws.dy1, &mut ws.d2);
                zero(&mut ws.d1);
                l2.backward(p, grad, &ws.a1, &ws.a2_pre, &mut ws.d2, &mut ws.d1);
                zero(&mut ws.dx_sink);
                l1.backward(p, grad, x, &ws.a1_pre, &mut ws.d1, &mut ws.dx_sink);
            }
            Arch::EncDec { enc, enc_back, rep, dec, out } => {
                let h = self.cfg.hidden;
                ws.dy1[0] = dout;
                zero(&mut ws.dh);
                out.backward(p, grad, &ws.dec_h, &ws.out_pre, &mut ws.dy1, &mut ws.dh);
                zero(&mut ws.dc);
                zero(&mut ws.d_rep);
                for s in (0..self.cfg.decoder_steps).rev() {
                    dec.cell.backward_step(
                        dec.p(p),
                        dec.g(grad),
                        &mut ws.dec_caches[s],
                        &mut ws.dh,
                        &mut ws.dc,
                        &mut ws.d_rep,
                    );
                }
                zero(&mut ws.d_enc);
                rep.backward(p, grad, &ws.enc_final, &ws.rep_pre, &mut ws.d_rep, &mut ws.d_enc);
                ws.dh.copy_from_slice(&ws.d_enc[..h]);
                zero(&mut ws.dc);
                zero(&mut ws.dx_sink);
                for t in (0..x.len()).rev() {
                    enc.cell.backward_step(
                        enc.p(p),
                        enc.g(grad),
                        &mut ws.enc_caches[t],
                        &mut ws.dh,
                        &mut ws.dc,
                        &mut ws.dx_sink,
                    );
                }
                if let Some(back) = enc_back {
                    ws.dh.copy_from_slice(&ws.d_enc[h..2 * h]);
                    zero(&mut ws.dc);
                    for k in (0..x.len()).rev() {
                        back.cell.backward_step(
                            back.p(p),
                            back.g(grad),
                            &mut ws.enc_b_caches[k],
                            &mut ws.dh,
                            &mut ws.dc,
                            &mut ws.dx_sink,
                        );
                    }
                }
            }
        }
    }

    /// Mean MAE over the rows of `x` selected by `idx` (labels indexed the
    /// same way), without touching gradients.
    pub fn batch_mae(
        &self,
        x: &Matrix,
        idx: &[usize],
        y: &[f64],
        ws: &mut Workspace,
    ) -> Result<f64> {
        if idx.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        let mut sum = 0.0;
        for &i in idx {
            let pred = self.forward_ws(x.row(i), ws)?;
            sum += (pred - y[i]).abs();
        }
        Ok(sum / idx.len() as f64)
    }

    /// Mean MAE over the batch plus d(mean MAE)/d(params) accumulated into
    /// `grad` (which is zeroed first). MAE subgradient at zero residual
    /// is zero.
    pub fn loss_and_grad(
        &self,
        x: &Matrix,
        idx: &[usize],
        y: &[f64],
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<f64> {
        if idx.is_empty() {
            return Err(Error::Validation("empty batch".into()));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Dimension { expected: self.params.len(), got: grad.len() });
        }
        zero(grad);
        let scale = 1.0 / idx.len() as f64;
        let mut loss = 0.0;
        for &i in idx {
            let pred = self.forward_ws(x.row(i), ws)?;
            let r = pred - y[i];
            loss += r.abs();
            let sign = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            if sign != 0.0 {
                self.backward_ws(x.row(i), sign * scale, grad, ws);
            }
        }
        if let Some(v) = grad.iter().find(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!("non-finite gradient component {v}")));
        }
        Ok(loss * scale)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.cfg.input_dim {
            return Err(Error::Dimension { expected: self.cfg.input_dim, got: x.cols() });
        }
        let mut ws = self.workspace();
        (0..x.rows()).map(|r| self.forward_ws(x.row(r), &mut ws)).collect()
    }
}

fn zero(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = 0.0);
}

fn check_finite(v: &[f64], stage: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged(format!("non-finite value in {stage}")))
    }
}

/// Reusable per-sample buffers for forward/backward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    enc_caches: Vec<StepCache>,
    enc_b_caches: Vec<StepCache>,
    dec_caches: Vec<StepCache>,
    h: Vec<f64>,
    c: Vec<f64>,
    h2: Vec<f64>,
    c2: Vec<f64>,
    enc_final: Vec<f64>,
    rep_pre: Vec<f64>,
    rep_act: Vec<f64>,
    dec_h: Vec<f64>,
    dec_c: Vec<f64>,
    a1_pre: Vec<f64>,
    a1: Vec<f64>,
    a2_pre: Vec<f64>,
    a2: Vec<f64>,
    out_pre: Vec<f64>,
    out_act: Vec<f64>,
    d_rep: Vec<f64>,
    d_enc: Vec<f64>,
    dh: Vec<f64>,
    dc: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    dy1: Vec<f64>,
    dx_sink: Vec<f64>,
}

impl Workspace {
    fn new(cfg: &ModelConfig, arch: &Arch) -> Workspace {
        let d = cfg.input_dim;
        let h = cfg.hidden;
        match arch {
            Arch::Ffnn { .. } => Workspace {
                enc_caches: Vec::new(),
                enc_b_caches: Vec::new(),
                dec_caches: Vec::new(),
                h: Vec::new(),
                c: Vec::new(),
                h2: Vec::new(),
                c2: Vec::new(),
                enc_final: Vec::new(),
                rep_pre: Vec::new(),
                rep_act: Vec::new(),
                dec_h: Vec::new(),
                dec_c: Vec::new(),
                a1_pre: vec![0.0; 2 * d],
                a1: vec![0.0; 2 * d],
                a2_pre: vec![0.0; 2 * d],
                a2: vec![0.0; 2 * d],
                out_pre: vec![0.0; 1],
                out_act: vec![0.0; 1],
                d_rep: Vec::new(),
                d_enc: Vec::new(),
                dh: Vec::new(),
                dc: Vec::new(),
                d1: vec![0.0; 2 * d],
                d2: vec![0.0; 2 * d],
                dy1: vec![0.0; 1],
                dx_sink: vec![0.0; d],
            },
            Arch::EncDec { enc, enc_back, dec, .. } => {
                let enc_out = if enc_back.is_some() { 2 * h } else { h };
                Workspace {
                    enc_caches: (0..d).map(|_| StepCache::new(&enc.cell)).collect(),
                    enc_b_caches: match enc_back {
                        Some(b) => (0..d).map(|_| StepCache::new(&b.cell)).collect(),
                        None => Vec::new(),
                    },
                    dec_caches: (0..cfg.decoder_steps)
                        .map(|_| StepCache::new(&dec.cell))
                        .collect(),
                    h: vec![0.0; h],
                    c: vec![0.0; h],
                    h2: vec![0.0; h],
                    c2: vec![0.0; h],
                    enc_final: vec![0.0; enc_out],
                    rep_pre: vec![0.0; 2 * d],
                    rep_act: vec![0.0; 2 * d],
                    dec_h: vec![0.0; h],
                    dec_c: vec![0.0; h],
                    a1_pre: Vec::new(),
                    a1: Vec::new(),
                    a2_pre: Vec::new(),
                    a2: Vec::new(),
                    out_pre: vec![0.0; 1],
                    out_act: vec![0.0; 1],
                    d_rep: vec![0.0; 2 * d],
                    d_enc: vec![0.0; enc_out],
                    dh: vec![0.0; h],
                    dc: vec![0.0; h],
                    d1: Vec::new(),
                    d2: Vec::new(),
                    dy1: vec![0.0; 1],
                    // encoder steps take scalar inputs
                    dx_sink: vec![0.0; 1],
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamParams,
    /// Consecutive non-improving validation epochs tolerated before
    /// stopping.
    pub patience: usize,
    /// Fraction of rows (the last ones by time) held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 100,
            batch_size: 256,
            adam: AdamParams::default(),
            patience: 10,
            val_fraction: 0.1,
            seed: 0,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub train_mae: Vec<f64>,
    pub val_mae: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.val_mae.len()
    }
}

/// Mini-batch Adam on MAE with seeded shuffling, time-ordered validation
/// holdout, early stopping, and best-validation parameter restoration.
pub fn train(model: &mut Model, data: &Dataset, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if data.dim() != model.input_dim() {
        return Err(Error::Dimension { expected: model.input_dim(), got: data.dim() });
    }
    let n = data.len();
    let n_val = ((n as f64 * cfg.val_fraction).round() as usize).max(1);
    if n_val >= n {
        return Err(Error::Validation(format!(
            "dataset with {n} rows is too small for a {} validation fraction",
            cfg.val_fraction
        )));
    }
    let n_train = n - n_val;
    let mut order: Vec<usize> = (0..n_train).collect();
    let train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.param_count(), cfg.adam);
    let mut ws = model.workspace();
    let mut grad = vec![0.0; model.param_count()];
    let mut best_params = model.params().to_vec();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut bad_epochs = 0usize;
    let mut history = TrainHistory {
        train_mae: Vec::new(),
        val_mae: Vec::new(),
        best_epoch: 0,
        best_val_mae: f64::INFINITY,
        stopped_early: false,
    };
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            model.loss_and_grad(&data.x, batch, &data.y, &mut grad, &mut ws)?;
            let norm = l2_norm(&grad);
            if norm > cfg.clip_norm {
                let s = cfg.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            adam_step(model.params_mut(), &grad, &mut adam)?;
        }
        let train_mae = model.batch_mae(&data.x, &train_idx, &data.y, &mut ws)?;
        let val_mae = model.batch_mae(&data.x, &val_idx, &data.y, &mut ws)?;
        if !val_mae.is_finite() {
            return Err(Error::Diverged(format!(
                "validation MAE became {val_mae} at epoch {epoch}"
            )));
        }
        history.train_mae.push(train_mae);
        history.val_mae.push(val_mae);
        if val_mae < best_val {
            best_val = val_mae;
            best_epoch = epoch;
            best_params.copy_from_slice(model.params());
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    history.best_epoch = best_epoch;
    history.best_val_mae = best_val;
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, mae, SELU_LAMBDA};

    const ALL_KINDS: [ModelKind; 5] = [
        ModelKind::Ffnn,
        ModelKind::Rnn,
        ModelKind::Gru,
        ModelKind::Lstm,
        ModelKind::BiLstm,
    ];

    fn small_cfg(kind: ModelKind) -> ModelConfig {
        ModelConfig { kind, input_dim: 4, hidden: 2, decoder_steps: 1 }
    }

    #[test]
    fn zero_model_predicts_zero_and_outputs_nonnegative() {
        for kind in ALL_KINDS {
            let zeroed = Model::zeroed(small_cfg(kind)).unwrap();
            assert_eq!(zeroed.forward(&[0.5, -0.3, 1.0, 0.0]).unwrap(), 0.0);
            let m = Model::new(small_cfg(kind), 99).unwrap();
            let mut s = 1u64;
            for _ in 0..50 {
                let x: Vec<f64> = (0..4)
                    .map(|_| {
                        s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                        (s >> 40) as f64 / (1u64 << 23) as f64 - 1.0
                    })
                    .collect();
                let y = m.forward(&x).unwrap();
                assert!(y >= 0.0, "{kind:?} produced {y}");
            }
        }
    }

    #[test]
    fn representation_is_twice_input_dim() {
        for kind in ALL_KINDS {
            let m = Model::new(small_cfg(kind), 3).unwrap();
            let rep = m.encode(&[0.1, 0.2, 0.3, 0.4]).unwrap();
            assert_eq!(rep.len(), 8, "{kind:?}");
        }
    }

    #[test]
    fn ffnn_hand_trace() {
        let cfg = ModelConfig { kind: ModelKind::Ffnn, input_dim: 1, hidden: 1, decoder_steps: 1 };
        let mut m = Model::zeroed(cfg).unwrap();
        // layer 1 (1 -> 2): W=[1, -1], b=[0.5, 0.5]
        // layer 2 (2 -> 2): W=[[1,1],[1,-1]], b=0
        // layer 3 (2 -> 1): W=[1, 1], b=0.25
        let p = m.params_mut();
        p[0] = 1.0;
        p[1] = -1.0;
        p[2] = 0.5;
        p[3] = 0.5;
        p[4] = 1.0;
        p[5] = 1.0;
        p[6] = 1.0;
        p[7] = -1.0;
        // biases p[8], p[9] stay 0
        p[10] = 1.0;
        p[11] = 1.0;
        p[12] = 0.25;
        let y = m.forward(&[0.4]).unwrap();
        // a1 = selu([0.9, 0.1]) = lambda*[0.9, 0.1] (positive branch)
        // a2 = selu([lambda*1.0, lambda*0.8]) = lambda^2*[1.0, 0.8]
        // out = relu(lambda^2*1.8 + 0.25)
        let expected = SELU_LAMBDA * SELU_LAMBDA * 1.8 + 0.25;
        assert!((y - expected).abs() < 1e-12, "{y} vs {expected}");
    }

    #[test]
    fn bilstm_palindrome_symmetry() {
        let cfg = ModelConfig {
            kind: ModelKind::BiLstm,
            input_dim: 5,
            hidden: 3,
            decoder_steps: 1,
        };
        let mut m = Model::new(cfg, 7).unwrap();
        // tie the backward cell's parameters to the forward cell's
        let cell_len = Cell::new(CellKind::Lstm, 1, 3).param_count();
        let fwd: Vec<f64> = m.params()[..cell_len].to_vec();
        m.params_mut()[cell_len..2 * cell_len].copy_from_slice(&fwd);
        let palindrome = [0.2, -0.7, 1.3, -0.7, 0.2];
        let (f, b) = m.encoder_final_states(&palindrome).unwrap();
        assert_eq!(f, b.unwrap());
        // non-palindromic input must generally break the tie
        let (f2, b2) = m.encoder_final_states(&[0.2, -0.7, 1.3, 0.4, 0.9]).unwrap();
        assert_ne!(f2, b2.unwrap());
    }

    /// Builds a model and a small batch whose residuals are comfortably
    /// non-zero, so finite differences never cross the MAE kink.
    fn fidelity_instance(
        kind: ModelKind,
        d: usize,
        h: usize,
        seed: u64,
    ) -> (Model, Matrix, Vec<f64>) {
        let cfg = ModelConfig { kind, input_dim: d, hidden: h, decoder_steps: 1 };
        let m = Model::new(cfg, seed).unwrap();
        let mut s = seed.wrapping_mul(2862933555777941757).wrapping_add(13);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 40) as f64 / (1u64 << 24) as f64
        };
        let n = 3;
        let xs: Vec<f64> = (0..n * d).map(|_| next()).collect();
        let x = Matrix::from_vec(n, d, xs).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| m.forward(x.row(i)).unwrap() + if i % 2 == 0 { 0.4 } else { -0.35 })
            .collect();
        (m, x, y)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut instances = 0;
        let mut worst: f64 = 0.0;
        for kind in ALL_KINDS {
            for seed in [1u64, 2, 3, 4] {
                let (d, h) = match kind {
                    ModelKind::Ffnn => (4, 1),
                    ModelKind::BiLstm => (3, 1),
                    _ => (4, 2),
                };
                let (m, x, y) = fidelity_instance(kind, d, h, seed);
                assert!(m.param_count() <= 200, "{kind:?}: {}", m.param_count());
                let idx: Vec<usize> = (0..x.rows()).collect();
                let mut grad = vec![0.0; m.param_count()];
                let mut ws = m.workspace();
                m.loss_and_grad(&x, &idx, &y, &mut grad, &mut ws).unwrap();
                let mut probe = m.clone();
                let mut params = m.params().to_vec();
                let f = |p: &[f64]| {
                    probe.params_mut().copy_from_slice(p);
                    let mut w = probe.workspace();
                    probe.batch_mae(&x, &idx, &y, &mut w).unwrap()
                };
                let err = grad_check(f, &mut params, &grad, 1e-5).unwrap();
                assert!(err < 1e-5, "{kind:?} seed {seed}: max rel err {err}");
                worst = worst.max(err);
                instances += 1;
            }
        }
        assert!(instances >= 20);
        assert!(worst < 1e-5);
    }

    #[test]
    fn lstm_single_unit_grad_check() {
        let (m, x, y) = fidelity_instance(ModelKind::Lstm, 4, 1, 11);
        let idx = [0usize, 1, 2];
        let mut grad = vec![0.0; m.param_count()];
        let mut ws = m.workspace();
        m.loss_and_grad(&x, &idx, &y, &mut grad, &mut ws).unwrap();
        let mut probe = m.clone();
        let mut params = m.params().to_vec();
        let f = |p: &[f64]| {
            probe.params_mut().copy_from_slice(p);
            let mut w = probe.workspace();
            probe.batch_mae(&x, &idx, &y, &mut w).unwrap()
        };
        let err = grad_check(f, &mut params, &grad, 1e-5).unwrap();
        assert!(err < 1e-5, "max rel err {err}");
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let (m, x, _) = fidelity_instance(ModelKind::Gru, 4, 2, 5);
        let idx: Vec<usize> = (0..x.rows()).collect();
        let y: Vec<f64> = idx.iter().map(|&i| m.forward(x.row(i)).unwrap()).collect();
        let mut grad = vec![1.0; m.param_count()];
        let mut ws = m.workspace();
        let loss = m.loss_and_grad(&x, &idx, &y, &mut grad, &mut ws).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicated_batch_keeps_gradient() {
        let (m, x, y) = fidelity_instance(ModelKind::Ffnn, 4, 1, 9);
        let mut ws = m.workspace();
        let mut g1 = vec![0.0; m.param_count()];
        m.loss_and_grad(&x, &[0, 1], &y, &mut g1, &mut ws).unwrap();
        let mut g2 = vec![0.0; m.param_count()];
        m.loss_and_grad(&x, &[0, 1, 0, 1], &y, &mut g2, &mut ws).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn predict_shapes_and_permutation() {
        let m = Model::new(small_cfg(ModelKind::Rnn), 3).unwrap();
        let empty = Matrix::from_vec(0, 4, vec![]).unwrap();
        assert!(m.predict(&empty).unwrap().is_empty());
        let rows = vec![
            vec![0.1, 0.2, 0.3, 0.4],
            vec![0.9, 0.8, 0.7, 0.6],
            vec![0.0, 0.5, 0.0, 0.5],
        ];
        let x = Matrix::from_rows(rows.clone()).unwrap();
        let p = m.predict(&x).unwrap();
        assert_eq!(p[0], m.forward(&rows[0]).unwrap());
        let x_perm = Matrix::from_rows(vec![rows[2].clone(), rows[0].clone(), rows[1].clone()])
            .unwrap();
        let p_perm = m.predict(&x_perm).unwrap();
        assert_eq!(p_perm, vec![p[2], p[0], p[1]]);
        let wrong = Matrix::from_vec(1, 3, vec![0.0; 3]).unwrap();
        assert!(m.predict(&wrong).is_err());
    }

    #[test]
    fn non_finite_parameters_are_diagnosed() {
        // NaN rather than infinity: the LSTM's saturating gates would
        // squash an infinite pre-activation back to a finite value
        let mut m = Model::new(small_cfg(ModelKind::Lstm), 2).unwrap();
        m.params_mut()[0] = f64::NAN;
        match m.forward(&[1.0, 1.0, 1.0, 1.0]) {
            Err(Error::Diverged(msg)) => assert!(msg.contains("encoder"), "{msg}"),
            other => panic!("expected divergence, got {other:?}"),
        }
        let mut m = Model::new(small_cfg(ModelKind::Ffnn), 2).unwrap();
        m.params_mut()[0] = f64::NAN;
        match m.forward(&[1.0, 1.0, 1.0, 1.0]) {
            Err(Error::Diverged(msg)) => assert!(msg.contains("hidden"), "{msg}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    fn toy_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut s = seed.wrapping_add(17);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 40) as f64 / (1u64 << 24) as f64
        };
        let xs: Vec<f64> = (0..n * d).map(|_| next()).collect();
        let x = Matrix::from_vec(n, d, xs).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| x.row(i).iter().sum::<f64>() / d as f64)
            .collect();
        Dataset { x, y, row_timestamps: (0..n as i64).collect() }
    }

    #[test]
    fn ffnn_learns_linear_mean() {
        let data = toy_dataset(2048, 4, 1);
        let cfg = ModelConfig { kind: ModelKind::Ffnn, input_dim: 4, hidden: 1, decoder_steps: 1 };
        let mut m = Model::new(cfg, 0).unwrap();
        let tc = TrainConfig {
            batch_size: 64,
            adam: AdamParams { lr: 3e-3, ..AdamParams::default() },
            ..TrainConfig::default()
        };
        let hist = train(&mut m, &data, &tc).unwrap();
        let final_train = *hist.train_mae.last().unwrap();
        assert!(
            hist.train_mae.iter().cloned().fold(f64::INFINITY, f64::min) < 1e-2,
            "never reached 1e-2: final {final_train}"
        );
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_dataset(300, 4, 2);
        let tc = TrainConfig { max_epochs: 5, batch_size: 32, ..TrainConfig::default() };
        let mut m1 = Model::new(small_cfg(ModelKind::Gru), 42).unwrap();
        let h1 = train(&mut m1, &data, &tc).unwrap();
        let mut m2 = Model::new(small_cfg(ModelKind::Gru), 42).unwrap();
        let h2 = train(&mut m2, &data, &tc).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1.params(), m2.params());
        let mut m3 = Model::new(small_cfg(ModelKind::Gru), 43).unwrap();
        let h3 = train(&mut m3, &data, &tc).unwrap();
        assert_ne!(h1.val_mae, h3.val_mae);
    }

    #[test]
    fn patience_zero_stops_at_first_non_improvement() {
        let data = toy_dataset(200, 4, 3);
        // lr = 0 freezes the model, so epoch 2's validation MAE ties
        // epoch 1's and patience 0 must stop there
        let tc = TrainConfig {
            max_epochs: 50,
            patience: 0,
            adam: AdamParams { lr: 0.0, ..AdamParams::default() },
            ..TrainConfig::default()
        };
        let mut m = Model::new(small_cfg(ModelKind::Ffnn), 1).unwrap();
        let hist = train(&mut m, &data, &tc).unwrap();
        assert_eq!(hist.epochs_run(), 2);
        assert!(hist.stopped_early);
    }

    #[test]
    fn early_stopping_restores_best_parameters() {
        let data = toy_dataset(400, 4, 4);
        let tc = TrainConfig {
            max_epochs: 12,
            batch_size: 32,
            patience: 3,
            ..TrainConfig::default()
        };
        let mut m = Model::new(small_cfg(ModelKind::Rnn), 5).unwrap();
        let hist = train(&mut m, &data, &tc).unwrap();
        let min_val = hist.val_mae.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(hist.best_val_mae, min_val);
        assert_eq!(hist.val_mae[hist.best_epoch], min_val);
        // returned parameters really are the best-epoch parameters
        let n_train = data.len() - (data.len() as f64 * tc.val_fraction).round() as usize;
        let val_idx: Vec<usize> = (n_train..data.len()).collect();
        let mut ws = m.workspace();
        let val_now = m.batch_mae(&data.x, &val_idx, &data.y, &mut ws).unwrap();
        assert!((val_now - min_val).abs() < 1e-12);
    }

    #[test]
    fn train_rejects_bad_configs_and_small_data() {
        let data = toy_dataset(200, 4, 6);
        let mut m = Model::new(small_cfg(ModelKind::Ffnn), 0).unwrap();
        for bad in [
            TrainConfig { max_epochs: 0, ..TrainConfig::default() },
            TrainConfig { val_fraction: 0.0, ..TrainConfig::default() },
            TrainConfig { val_fraction: 1.0, ..TrainConfig::default() },
            TrainConfig { clip_norm: 0.0, ..TrainConfig::default() },
        ] {
            assert!(train(&mut m, &data, &bad).is_err());
        }
        let tiny = toy_dataset(1, 4, 6);
        assert!(train(&mut m, &tiny, &TrainConfig::default()).is_err());
    }

    #[test]
    fn loss_matches_mae_of_predictions() {
        let (m, x, y) = fidelity_instance(ModelKind::Lstm, 4, 2, 21);
        let idx: Vec<usize> = (0..x.rows()).collect();
        let mut ws = m.workspace();
        let mut grad = vec![0.0; m.param_count()];
        let loss = m.loss_and_grad(&x, &idx, &y, &mut grad, &mut ws).unwrap();
        let preds = m.predict(&x).unwrap();
        assert!((loss - mae(&y, &preds).unwrap()).abs() < 1e-14);
    }
}
