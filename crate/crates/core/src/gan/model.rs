use std::cell::Cell;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::{BlockEchoConfig, LossMode};
use super::losses::{
    assemble_parts, bce_sum_grad, build_hint, combined_g_loss, d1_loss, d2_loss, kl_term, mix_rows, nonsaturating,
    sse_term,
};
use crate::error::{Error, Result};
use crate::masking::MaskedMatrix;
use crate::mf::FactorPair;
use crate::numkern::{Activation, AdamConfig, DenseNet, Matrix, NetGrads, OptimState, SeededRng};

/// How often each loss component was evaluated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub mf_term: u64,
    pub d1: u64,
    pub d2: u64,
}

#[derive(Debug, Default)]
struct Counters {
    mf_term: Cell<u64>,
    d1: Cell<u64>,
    d2: Cell<u64>,
}

impl Counters {
    fn bump(c: &Cell<u64>) {
        c.set(c.get() + 1);
    }

    fn snapshot(&self) -> EvalCounts {
        EvalCounts {
            mf_term: self.mf_term.get(),
            d1: self.d1.get(),
            d2: self.d2.get(),
        }
    }
}

/// Generator, completion layer, trainable column embedding, both
/// discriminators and their optimizer states.
#[derive(Debug, Serialize, Deserialize)]
pub struct EchoModel {
    pub generator: DenseNet,
    /// Shared scalar network applied to each entry of `u·V`; `None` keeps
    /// the plain product.
    pub mcl_net: Option<DenseNet>,
    pub v: Matrix,
    pub d1: DenseNet,
    pub d2: DenseNet,
    g_opt: OptimState,
    mcl_opt: Option<OptimState>,
    v_opt: OptimState,
    d1_opt: OptimState,
    d2_opt: OptimState,
    #[serde(skip)]
    counters: Counters,
}

/// One minibatch as seen by the generator objective.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorBatch {
    /// Normalized values, 0 at missing cells.
    pub x: Matrix,
    pub mask: Matrix,
    pub z: Matrix,
    pub hint: Matrix,
    /// Row labels for the row discriminator (1 = pretrained embedding).
    pub y: Matrix,
    /// Pretrained row embeddings of the batch rows.
    pub u_p: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLoss {
    pub total: f64,
    pub mf_term: f64,
    pub adv_d1: f64,
    pub adv_d2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorGrads {
    pub generator: NetGrads,
    pub mcl: Option<NetGrads>,
    pub v: Matrix,
}

fn layer_activations(len: usize, hidden: Activation, out: Activation) -> Vec<Activation> {
    let mut acts = vec![hidden; len.saturating_sub(2)];
    acts.push(out);
    acts
}

/// Fits a `[1, k, 1]` completion layer to the identity on `[0, 1]`. The
/// hidden layer becomes `k` unit-slope hinges with knots spread over the
/// range; the output layer is the least-squares fit of the target logits on
/// those hinges, weighted by `p(1 − p)` so errors count on the probability
/// scale. Deeper layouts keep their random initialization.
fn fit_identity(net: &mut DenseNet) -> Result<()> {
    if net.layers().len() != 2 {
        return Ok(());
    }
    let k = net.layers()[0].fan_out();
    let knots: Vec<f64> = (0..k).map(|i| 1.2 * i as f64 / k as f64 - 0.05).collect();
    let samples = 241;
    let grid: Vec<f64> = (0..samples).map(|i| 1.2 * i as f64 / (samples - 1) as f64).collect();
    let logit = |p: f64| (p / (1.0 - p)).ln();
    let target_p: Vec<f64> = grid.iter().map(|t| t.clamp(1e-3, 1.0 - 1e-3)).collect();
    let weight: Vec<f64> = target_p.iter().map(|p| p * (1.0 - p)).collect();
    let features = DMatrix::from_fn(samples, k + 1, |r, c| {
        weight[r] * if c == k { 1.0 } else { (grid[r] - knots[c]).max(0.0) }
    });
    let target = DVector::from_fn(samples, |r, _| weight[r] * logit(target_p[r]));
    let normal = features.transpose() * &features + DMatrix::identity(k + 1, k + 1) * 1e-9;
    let rhs = features.transpose() * target;
    let coef = normal
        .cholesky()
        .ok_or_else(|| Error::Training("identity fit of the completion layer is singular".into()))?
        .solve(&rhs);
    let mut blocks = net.param_blocks_mut().into_iter();
    let (w1, b1, w2, b2) = (
        blocks.next().expect("w0"),
        blocks.next().expect("b0"),
        blocks.next().expect("w1"),
        blocks.next().expect("b1"),
    );
    for i in 0..k {
        w1.as_mut_slice()[i] = 1.0;
        b1.as_mut_slice()[i] = -knots[i];
        w2.as_mut_slice()[i] = coef[i];
    }
    b2.as_mut_slice()[0] = coef[k];
    Ok(())
}

impl EchoModel {
    /// Fresh networks for an `n`-column problem. `v_p` seeds the column
    /// embedding when `warm_start_v` is set.
    pub fn new(cfg: &BlockEchoConfig, n: usize, v_p: &Matrix, rng: &mut SeededRng) -> Result<Self> {
        if v_p.shape() != (cfg.h, n) {
            return Err(Error::Shape {
                op: "echo_model V",
                left: (cfg.h, n),
                right: v_p.shape(),
            });
        }
        let generator = DenseNet::new(
            &cfg.g_layers,
            &layer_activations(cfg.g_layers.len(), Activation::Relu, Activation::Softplus),
            &mut rng.stream("generator"),
        )?;
        let d1 = DenseNet::new(
            &cfg.d1_layers,
            &layer_activations(cfg.d1_layers.len(), Activation::Relu, Activation::Sigmoid),
            &mut rng.stream("d1"),
        )?;
        let d2 = DenseNet::new(
            &cfg.d2_layers,
            &layer_activations(cfg.d2_layers.len(), Activation::Relu, Activation::Sigmoid),
            &mut rng.stream("d2"),
        )?;
        let mcl_net = if cfg.mcl_layers.is_empty() {
            None
        } else {
            let mut net = DenseNet::new(
                &cfg.mcl_layers,
                &layer_activations(cfg.mcl_layers.len(), Activation::Relu, Activation::Sigmoid),
                &mut rng.stream("mcl"),
            )?;
            fit_identity(&mut net)?;
            Some(net)
        };
        let v = if cfg.warm_start_v {
            v_p.clone()
        } else {
            let hi = 2.0 * v_p.mean().max(1e-3);
            rng.stream("v").uniform_matrix(cfg.h, n, 0.0, hi)
        };
        let g_adam = AdamConfig::with_lr(cfg.lr_g);
        let d_adam = AdamConfig::with_lr(cfg.lr_d);
        Ok(EchoModel {
            g_opt: OptimState::for_net(g_adam, &generator),
            mcl_opt: mcl_net.as_ref().map(|net| OptimState::for_net(g_adam, net)),
            v_opt: OptimState::new(g_adam, &[&v]),
            d1_opt: OptimState::for_net(d_adam, &d1),
            d2_opt: OptimState::for_net(d_adam, &d2),
            generator,
            mcl_net,
            v,
            d1,
            d2,
            counters: Counters::default(),
        })
    }

    pub fn rank(&self) -> usize {
        self.v.rows()
    }

    pub fn eval_counts(&self) -> EvalCounts {
        self.counters.snapshot()
    }

    fn generator_input(&self, x0: &Matrix, mask: &Matrix, z: &Matrix) -> Result<Matrix> {
        x0.check_same_shape("generator_forward", mask)?;
        if x0.cols() != self.v.cols() || z.shape() != (x0.rows(), self.rank()) {
            return Err(Error::Shape {
                op: "generator_forward",
                left: x0.shape(),
                right: z.shape(),
            });
        }
        Matrix::hstack(&[x0, mask, z])
    }

    /// Row embeddings `U = G([x0 | mask | z])`, one row per input row.
    pub fn generator_forward(&self, x0: &Matrix, mask: &Matrix, z: &Matrix) -> Result<Matrix> {
        self.generator.predict(&self.generator_input(x0, mask, z)?)
    }

    /// `X̂ = mcl(u·V)` with the scalar network applied entrywise.
    pub fn mcl_forward(&self, u: &Matrix) -> Result<Matrix> {
        let p = u.matmul(&self.v)?;
        match &self.mcl_net {
            None => Ok(p),
            Some(net) => {
                let (b, n) = p.shape();
                net.predict(&p.reshape(b * n, 1)?)?.reshape(b, n)
            }
        }
    }

    fn impute_batch(&self, x: &Matrix, mask: &Matrix, z: &Matrix) -> Result<(Matrix, Matrix)> {
        let u = self.generator_forward(x, mask, z)?;
        let xhat = self.mcl_forward(&u)?;
        let xbar = assemble_parts(x, mask, &xhat)?;
        Ok((u, xbar))
    }

    /// The generator objective on one batch, without gradients.
    pub fn generator_loss(&self, batch: &GeneratorBatch, cfg: &BlockEchoConfig) -> Result<GeneratorLoss> {
        Ok(self.generator_pass(batch, cfg)?.0)
    }

    /// The generator objective and its gradients with respect to the
    /// generator, the completion layer and `V`. Discriminator parameters are
    /// held fixed.
    pub fn generator_pass(&self, batch: &GeneratorBatch, cfg: &BlockEchoConfig) -> Result<(GeneratorLoss, GeneratorGrads)> {
        let (b, n) = batch.x.shape();
        let input = self.generator_input(&batch.x, &batch.mask, &batch.z)?;
        let (u, g_cache) = self.generator.forward(&input)?;
        let p = u.matmul(&self.v)?;
        let (xhat, mcl_cache) = match &self.mcl_net {
            None => (p.clone(), None),
            Some(net) => {
                let (out, cache) = net.forward(&p.clone().reshape(b * n, 1)?)?;
                (out.reshape(b, n)?, Some(cache))
            }
        };

        let mut dxhat = Matrix::zeros(b, n);
        let mut du = Matrix::zeros(b, self.rank());
        let mut loss = GeneratorLoss {
            total: 0.0,
            mf_term: 0.0,
            adv_d1: 0.0,
            adv_d2: 0.0,
        };
        let alpha = cfg.alpha.clamp(0.0, 1.0);

        if !cfg.mf_term_off() {
            Counters::bump(&self.counters.mf_term);
            let (value, grad) = match cfg.loss_mode {
                LossMode::Kl => kl_term(&batch.x, &xhat, &batch.mask),
                LossMode::Mse => sse_term(&batch.x, &xhat, &batch.mask),
            };
            loss.mf_term = value;
            dxhat.add_assign(&grad.scale(alpha))?;
        }

        if alpha < 1.0 {
            let w = 1.0 - alpha;
            if cfg.use_d2 {
                Counters::bump(&self.counters.d2);
                let xbar = assemble_parts(&batch.x, &batch.mask, &xhat)?;
                let (d, cache) = self.d2.forward(&Matrix::hstack(&[&xbar, &batch.hint])?)?;
                let fake = batch.mask.map(|m| 1.0 - m);
                let (value, grad) = nonsaturating(&d, &fake);
                loss.adv_d2 = value;
                let (_, dinput) = self.d2.backward(&cache, &grad)?;
                let dxbar = dinput.col_slice(0, n);
                dxhat.add_assign(&dxbar.hadamard(&fake)?.scale(w))?;
            }
            if cfg.use_d1 {
                Counters::bump(&self.counters.d1);
                let ud = mix_rows(&batch.u_p, &u, &batch.y)?;
                let (d, cache) = self.d1.forward(&ud)?;
                let fake = batch.y.map(|y| 1.0 - y);
                let (value, grad) = nonsaturating(&d, &fake);
                loss.adv_d1 = value;
                let (_, dud) = self.d1.backward(&cache, &grad)?;
                for i in 0..b {
                    if fake[(i, 0)] == 1.0 {
                        for (a, g) in du.row_mut(i).iter_mut().zip(dud.row(i)) {
                            *a += w * g;
                        }
                    }
                }
            }
        }
        loss.total = combined_g_loss(alpha, loss.adv_d1 + loss.adv_d2, loss.mf_term);

        let (mcl_grads, dp) = match (&self.mcl_net, &mcl_cache) {
            (Some(net), Some(cache)) => {
                let (g, dflat) = net.backward(cache, &dxhat.reshape(b * n, 1)?)?;
                (Some(g), dflat.reshape(b, n)?)
            }
            _ => (None, dxhat),
        };
        let dv = u.t_matmul(&dp)?;
        du.add_assign(&dp.matmul_t(&self.v)?)?;
        let (g_grads, _) = self.generator.backward(&g_cache, &du)?;
        Ok((
            loss,
            GeneratorGrads {
                generator: g_grads,
                mcl: mcl_grads,
                v: dv,
            },
        ))
    }

    fn apply_generator_grads(&mut self, grads: &GeneratorGrads) -> Result<()> {
        self.g_opt.step_net(&mut self.generator, &grads.generator, "generator")?;
        if let (Some(net), Some(opt), Some(g)) = (&mut self.mcl_net, &mut self.mcl_opt, &grads.mcl) {
            opt.step_net(net, g, "mcl")?;
        }
        self.v_opt.step(&mut [&mut self.v], &[&grads.v], &["V".to_string()])
    }

    /// Regresses the generator output onto the pretrained row embeddings
    /// (mean squared error) with its own Adam state.
    fn warm_start_generator(&mut self, xm: &MaskedMatrix, u_p: &Matrix, cfg: &BlockEchoConfig) -> Result<()> {
        let root = SeededRng::new(cfg.seed).stream("g-warm");
        let (mut batch_rng, mut noise_rng) = (root.stream("batch"), root.stream("noise"));
        let mut opt = OptimState::for_net(AdamConfig::with_lr(cfg.lr_g), &self.generator);
        let m = xm.shape().0;
        for _ in 0..cfg.g_warm_steps {
            let idx = batch_rng.sample_indices(m, cfg.batch_rows);
            let z = noise_rng.uniform_matrix(idx.len(), cfg.h, 0.0, cfg.noise_scale);
            let input = self.generator_input(&xm.values().select_rows(&idx), &xm.mask().select_rows(&idx), &z)?;
            let (u, cache) = self.generator.forward(&input)?;
            let scale = 2.0 / u.len() as f64;
            let grad = u.zip_map(&u_p.select_rows(&idx), |a, b| scale * (a - b))?;
            let (g, _) = self.generator.backward(&cache, &grad)?;
            opt.step_net(&mut self.generator, &g, "generator")
                .map_err(|e| Error::Training(format!("generator warm start: {e}")))?;
        }
        Ok(())
    }

    /// One ascent step of the cell discriminator; returns its objective
    /// before the update.
    fn d2_step(&mut self, batch: &GeneratorBatch) -> Result<f64> {
        let (_, xbar) = self.impute_batch(&batch.x, &batch.mask, &batch.z)?;
        Counters::bump(&self.counters.d2);
        let (d, cache) = self.d2.forward(&Matrix::hstack(&[&xbar, &batch.hint])?)?;
        let value = d2_loss(&d, &batch.mask)?;
        let grad = bce_sum_grad(&d, &batch.mask).scale(-1.0);
        let (g, _) = self.d2.backward(&cache, &grad)?;
        self.d2_opt.step_net(&mut self.d2, &g, "d2")?;
        Ok(value)
    }

    /// One ascent step of the row discriminator.
    fn d1_step(&mut self, batch: &GeneratorBatch) -> Result<f64> {
        let u = self.generator_forward(&batch.x, &batch.mask, &batch.z)?;
        let ud = mix_rows(&batch.u_p, &u, &batch.y)?;
        Counters::bump(&self.counters.d1);
        let (d, cache) = self.d1.forward(&ud)?;
        let value = d1_loss(&d, &batch.y)?;
        let grad = bce_sum_grad(&d, &batch.y).scale(-1.0);
        let (g, _) = self.d1.backward(&cache, &grad)?;
        self.d1_opt.step_net(&mut self.d1, &g, "d1")?;
        Ok(value)
    }
}

/// Loss values of one iteration. Components that were not evaluated are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub mf_term: Option<f64>,
    pub g_total: f64,
}

impl LossRecord {
    fn is_finite(&self) -> bool {
        [self.d1, self.d2, self.mf_term]
            .iter()
            .flatten()
            .all(|v| v.is_finite())
            && self.g_total.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationResult {
    /// Observed cells copied from the input, missing cells from `xhat`.
    pub imputed: Matrix,
    pub xhat: Matrix,
    pub losses: Vec<LossRecord>,
    pub config: BlockEchoConfig,
    pub counts: EvalCounts,
    pub wall_time_secs: f64,
}

impl ImputationResult {
    pub fn loss_trace_csv(&self) -> String {
        loss_trace_csv(&self.losses)
    }
}

/// `iteration,d1,d2,mf_term,g_total`; unevaluated components are empty.
pub fn loss_trace_csv(records: &[LossRecord]) -> String {
    let mut out = String::from("iteration,d1,d2,mf_term,g_total\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration,
            opt(r.d1),
            opt(r.d2),
            opt(r.mf_term),
            r.g_total
        );
    }
    out
}

fn check_training_input(xm: &MaskedMatrix, pre: &FactorPair, cfg: &BlockEchoConfig) -> Result<()> {
    let (m, n) = xm.shape();
    cfg.validate(m, n)?;
    if pre.u.shape() != (m, cfg.h) || pre.v.shape() != (cfg.h, n) {
        return Err(Error::Shape {
            op: "train pretrained factors",
            left: pre.u.shape(),
            right: pre.v.shape(),
        });
    }
    if xm.observed_count() == 0 {
        return Err(Error::Spec("mask has no observed cells".into()));
    }
    let bad = xm
        .values()
        .as_slice()
        .iter()
        .zip(xm.mask().as_slice())
        .any(|(&v, &m)| m == 1.0 && !(v.is_finite() && v >= 0.0));
    if bad {
        return Err(Error::Domain(
            "observed values must be finite and nonnegative; normalize the data first".into(),
        ));
    }
    Ok(())
}

/// Alternating adversarial training on normalized data, followed by one
/// full-matrix forward pass.
pub fn train(xm: &MaskedMatrix, pre: &FactorPair, cfg: &BlockEchoConfig) -> Result<(EchoModel, ImputationResult)> {
    check_training_input(xm, pre, cfg)?;
    let started = Instant::now();
    let (m, n) = xm.shape();
    let root = SeededRng::new(cfg.seed);
    let mut model = EchoModel::new(cfg, n, &pre.v, &mut root.stream("init"))?;
    let mut batch_rng = root.stream("batch");
    let mut noise_rng = root.stream("noise");
    let mut hint_rng = root.stream("hint");
    let mut label_rng = root.stream("labels");
    let adversarial = !cfg.adversarial_off();
    model.warm_start_generator(xm, &pre.u, cfg)?;

    let mut losses = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        let idx = batch_rng.sample_indices(m, cfg.batch_rows);
        let mask = xm.mask().select_rows(&idx);
        let batch = GeneratorBatch {
            x: xm.values().select_rows(&idx),
            z: noise_rng.uniform_matrix(idx.len(), cfg.h, 0.0, cfg.noise_scale),
            hint: build_hint(&mask, cfg.hint_rate, &mut hint_rng)?,
            y: label_rng.bernoulli_matrix(idx.len(), 1, 0.5),
            u_p: pre.u.select_rows(&idx),
            mask,
        };
        let with_context = |e: Error| match e {
            Error::Training(msg) => Error::Training(format!(
                "iteration {it}: {msg}; last finite losses: {:?}",
                losses.last()
            )),
            other => other,
        };
        let mut record = LossRecord {
            iteration: it,
            d1: None,
            d2: None,
            mf_term: None,
            g_total: 0.0,
        };
        if adversarial {
            for _ in 0..cfg.d_steps_per_g {
                if cfg.use_d2 {
                    record.d2 = Some(model.d2_step(&batch).map_err(with_context)?);
                }
                if cfg.use_d1 {
                    record.d1 = Some(model.d1_step(&batch).map_err(with_context)?);
                }
            }
        }
        let (g_loss, grads) = model.generator_pass(&batch, cfg)?;
        if !cfg.mf_term_off() {
            record.mf_term = Some(g_loss.mf_term);
        }
        record.g_total = g_loss.total;
        if !record.is_finite() {
            return Err(Error::Training(format!(
                "non-finite loss at iteration {it}: {record:?}; last finite losses: {:?}",
                losses.last()
            )));
        }
        model.apply_generator_grads(&grads).map_err(with_context)?;
        losses.push(record);
    }

    let z = root.stream("final-noise").uniform_matrix(m, cfg.h, 0.0, cfg.noise_scale);
    let u = model.generator_forward(xm.values(), xm.mask(), &z)?;
    let xhat = model.mcl_forward(&u)?;
    if !xhat.all_finite() {
        return Err(Error::Training("final forward pass produced non-finite estimates".into()));
    }
    let imputed = assemble_parts(xm.values(), xm.mask(), &xhat)?;
    let result = ImputationResult {
        imputed,
        xhat,
        losses,
        config: cfg.clone(),
        counts: model.eval_counts(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::apply_mask;
    use crate::mf::{pretrain, PretrainOptions};

    fn small_problem(seed: u64) -> (MaskedMatrix, FactorPair, BlockEchoConfig) {
        let mut rng = SeededRng::new(seed);
        let u = rng.uniform_matrix(12, 2, 0.1, 1.0);
        let v = rng.uniform_matrix(2, 6, 0.1, 1.0);
        let x = u.matmul(&v).unwrap().scale(0.5);
        let mask = rng.bernoulli_matrix(12, 6, 0.7);
        let xm = apply_mask(&x, &mask).unwrap();
        let mut cfg = BlockEchoConfig::for_shape(12, 6);
        cfg.h = 2;
        cfg = cfg.with_rank(2, 6);
        cfg.iters = 20;
        cfg.batch_rows = 8;
        cfg.seed = seed;
        let opts = PretrainOptions {
            max_iters: 200,
            ..Default::default()
        };
        let (pre, _) = pretrain(&xm, 2, &opts).unwrap();
        (xm, pre, cfg)
    }

    #[test]
    fn zero_iterations_assemble_initial_estimate() {
        let (xm, pre, mut cfg) = small_problem(1);
        cfg.iters = 0;
        let (model, res) = train(&xm, &pre, &cfg).unwrap();
        let z = SeededRng::new(cfg.seed)
            .stream("final-noise")
            .uniform_matrix(12, 2, 0.0, cfg.noise_scale);
        let xhat = model
            .mcl_forward(&model.generator_forward(xm.values(), xm.mask(), &z).unwrap())
            .unwrap();
        assert_eq!(res.imputed, super::super::assemble(&xm, &xhat).unwrap());
        assert!(res.losses.is_empty());
    }

    #[test]
    fn warm_start_pulls_generator_to_pretrained_rows() {
        let (xm, pre, mut cfg) = small_problem(4);
        cfg.iters = 0;
        let gap = |cfg: &BlockEchoConfig| {
            let (model, _) = train(&xm, &pre, cfg).unwrap();
            let z = Matrix::zeros(12, 2);
            let u = model.generator_forward(xm.values(), xm.mask(), &z).unwrap();
            u.sub(&pre.u).unwrap().max_abs()
        };
        cfg.g_warm_steps = 0;
        let cold = gap(&cfg);
        cfg.g_warm_steps = 1500;
        let warm = gap(&cfg);
        assert!(warm < 0.25 * cold, "cold {cold}, warm {warm}");
    }

    #[test]
    fn observed_cells_preserved_and_deterministic() {
        let (xm, pre, cfg) = small_problem(2);
        let (_, a) = train(&xm, &pre, &cfg).unwrap();
        let (_, b) = train(&xm, &pre, &cfg).unwrap();
        assert_eq!(a.imputed, b.imputed);
        assert_eq!(a.losses, b.losses);
        for k in 0..a.imputed.len() {
            if xm.mask().as_slice()[k] == 1.0 {
                assert_eq!(a.imputed.as_slice()[k].to_bits(), xm.values().as_slice()[k].to_bits());
            }
        }
        assert_eq!(a.losses.len(), 20);
        assert!(a.loss_trace_csv().starts_with("iteration,d1,d2,mf_term,g_total\n0,"));
    }

    #[test]
    fn boundary_alphas_skip_unused_terms() {
        let (xm, pre, mut cfg) = small_problem(3);
        cfg.alpha = 1.0;
        let (_, res) = train(&xm, &pre, &cfg).unwrap();
        assert_eq!((res.counts.d1, res.counts.d2), (0, 0));
        assert_eq!(res.counts.mf_term, 20);
        cfg.alpha = 0.0;
        let (_, res) = train(&xm, &pre, &cfg).unwrap();
        assert_eq!(res.counts.mf_term, 0);
        assert!(res.counts.d1 > 0 && res.counts.d2 > 0);
        assert!(res.losses.iter().all(|r| r.mf_term.is_none()));
    }

    #[test]
    fn generator_rows_are_independent() {
        let (xm, pre, cfg) = small_problem(4);
        let model = EchoModel::new(&cfg, 6, &pre.v, &mut SeededRng::new(0)).unwrap();
        let z = Matrix::filled(12, 2, 0.005);
        let u = model.generator_forward(xm.values(), xm.mask(), &z).unwrap();
        assert_eq!(u, model.generator_forward(xm.values(), xm.mask(), &z).unwrap());
        let mut x2 = xm.values().clone();
        x2[(3, 1)] += 0.7;
        let u2 = model.generator_forward(&x2, xm.mask(), &z).unwrap();
        for i in 0..12 {
            if i != 3 {
                assert_eq!(u.row(i), u2.row(i));
            }
        }
        assert!(u.as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn identity_mcl_is_plain_product() {
        let (_, pre, mut cfg) = small_problem(5);
        cfg.mcl_layers.clear();
        let model = EchoModel::new(&cfg, 6, &pre.v, &mut SeededRng::new(0)).unwrap();
        let u = Matrix::from_fn(3, 2, |i, j| (i + j) as f64 * 0.3);
        assert_eq!(model.mcl_forward(&u).unwrap(), u.matmul(&pre.v).unwrap());
    }

    #[test]
    fn mcl_is_pointwise() {
        let (_, _, cfg) = small_problem(6);
        let v = Matrix::filled(2, 6, 0.25);
        let model = EchoModel::new(&cfg, 6, &v, &mut SeededRng::new(0)).unwrap();
        let out = model.mcl_forward(&Matrix::filled(4, 2, 1.0)).unwrap();
        let first = out[(0, 0)];
        assert!(out.as_slice().iter().all(|&v| v == first));
        assert!((first - 0.5).abs() < 0.05, "identity fit gives {first}");
    }

    #[test]
    fn non_normalized_input_rejected() {
        let (xm, pre, cfg) = small_problem(7);
        let neg = xm.with_values(xm.values().map(|v| v - 10.0)).unwrap();
        assert!(matches!(train(&neg, &pre, &cfg), Err(Error::Domain(_))));
    }
}
