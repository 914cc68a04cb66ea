//! Finite-difference checks of the generator objective: generator →
//! completion layer → (factorization term + discriminator terms).

use blockecho::gan::{build_hint, BlockEchoConfig, EchoModel, GeneratorBatch, LossMode};
use blockecho::numkern::gradcheck::{max_relative_error, relative_error, DEFAULT_STEP};
use blockecho::numkern::{Matrix, SeededRng};

const N: usize = 4;
const H: usize = 2;

fn setup(seed: u64, alpha: f64, use_d1: bool, mode: LossMode) -> (EchoModel, GeneratorBatch, BlockEchoConfig) {
    let mut cfg = BlockEchoConfig::for_shape(N, N).with_rank(H, N);
    cfg.alpha = alpha;
    cfg.use_d1 = use_d1;
    cfg.loss_mode = mode;
    cfg.g_layers = vec![2 * N + H, 6, H];
    cfg.d1_layers = vec![H, 5, 1];
    cfg.d2_layers = vec![2 * N, 6, N];
    cfg.mcl_layers = vec![1, 5, 1];
    cfg.validate(N, N).unwrap();
    let mut rng = SeededRng::new(seed);
    let v = rng.uniform_matrix(H, N, 0.2, 1.0);
    let model = EchoModel::new(&cfg, N, &v, &mut rng.stream("model")).unwrap();
    let mask = loop {
        let m = rng.bernoulli_matrix(N, N, 0.6);
        let ones = m.count_where(|v| v == 1.0);
        if ones > 0 && ones < N * N {
            break m;
        }
    };
    let x = rng.uniform_matrix(N, N, 0.05, 1.0).hadamard(&mask).unwrap();
    let batch = GeneratorBatch {
        hint: build_hint(&mask, 0.5, &mut rng).unwrap(),
        z: rng.uniform_matrix(N, H, 0.0, 0.01),
        y: Matrix::from_fn(N, 1, |i, _| (i % 2) as f64),
        u_p: rng.uniform_matrix(N, H, 0.1, 1.0),
        x,
        mask,
    };
    (model, batch, cfg)
}

/// Worst relative error over every generator, completion-layer and `V`
/// parameter.
fn worst_error(model: &mut EchoModel, batch: &GeneratorBatch, cfg: &BlockEchoConfig) -> f64 {
    let (_, grads) = model.generator_pass(batch, cfg).unwrap();
    let mut worst: f64 = 0.0;
    let loss = |m: &EchoModel| m.generator_loss(batch, cfg).unwrap().total;

    let analytic: Vec<f64> = grads
        .generator
        .blocks()
        .iter()
        .flat_map(|b| b.as_slice().to_vec())
        .collect();
    let mut numeric = Vec::new();
    let blocks = model.generator.param_blocks().len();
    for b in 0..blocks {
        let len = model.generator.param_blocks()[b].len();
        for k in 0..len {
            let orig = model.generator.param_blocks()[b].as_slice()[k];
            model.generator.param_blocks_mut()[b].as_mut_slice()[k] = orig + DEFAULT_STEP;
            let plus = loss(model);
            model.generator.param_blocks_mut()[b].as_mut_slice()[k] = orig - DEFAULT_STEP;
            let minus = loss(model);
            model.generator.param_blocks_mut()[b].as_mut_slice()[k] = orig;
            numeric.push((plus - minus) / (2.0 * DEFAULT_STEP));
        }
    }
    worst = worst.max(max_relative_error(&analytic, &numeric));

    let mcl_grads = grads.mcl.as_ref().expect("completion layer present");
    let analytic: Vec<f64> = mcl_grads.blocks().iter().flat_map(|b| b.as_slice().to_vec()).collect();
    let mut numeric = Vec::new();
    let blocks = model.mcl_net.as_ref().unwrap().param_blocks().len();
    for b in 0..blocks {
        let len = model.mcl_net.as_ref().unwrap().param_blocks()[b].len();
        for k in 0..len {
            let orig = model.mcl_net.as_ref().unwrap().param_blocks()[b].as_slice()[k];
            model.mcl_net.as_mut().unwrap().param_blocks_mut()[b].as_mut_slice()[k] = orig + DEFAULT_STEP;
            let plus = loss(model);
            model.mcl_net.as_mut().unwrap().param_blocks_mut()[b].as_mut_slice()[k] = orig - DEFAULT_STEP;
            let minus = loss(model);
            model.mcl_net.as_mut().unwrap().param_blocks_mut()[b].as_mut_slice()[k] = orig;
            numeric.push((plus - minus) / (2.0 * DEFAULT_STEP));
        }
    }
    worst = worst.max(max_relative_error(&analytic, &numeric));

    for k in 0..model.v.len() {
        let orig = model.v.as_slice()[k];
        model.v.as_mut_slice()[k] = orig + DEFAULT_STEP;
        let plus = loss(model);
        model.v.as_mut_slice()[k] = orig - DEFAULT_STEP;
        let minus = loss(model);
        model.v.as_mut_slice()[k] = orig;
        let num = (plus - minus) / (2.0 * DEFAULT_STEP);
        worst = worst.max(relative_error(grads.v.as_slice()[k], num));
    }
    worst
}

#[test]
fn kl_and_cell_discriminator_path_matches_finite_differences() {
    for seed in 0..20 {
        let (mut model, batch, cfg) = setup(seed, 0.5, false, LossMode::Kl);
        let err = worst_error(&mut model, &batch, &cfg);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn full_objective_with_row_discriminator_matches() {
    for seed in 0..10 {
        let (mut model, batch, cfg) = setup(100 + seed, 0.3, true, LossMode::Kl);
        let err = worst_error(&mut model, &batch, &cfg);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn squared_error_mode_matches() {
    for seed in 0..5 {
        let (mut model, batch, cfg) = setup(200 + seed, 0.7, true, LossMode::Mse);
        let err = worst_error(&mut model, &batch, &cfg);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn cell_term_has_no_gradient_through_observed_cells() {
    let (model, batch, mut cfg) = setup(7, 0.0, false, LossMode::Kl);
    cfg.use_d1 = false;
    // with every cell observed, the cell-discriminator term does not depend
    // on the generator at all
    let full = GeneratorBatch {
        mask: Matrix::ones(N, N),
        ..batch
    };
    let (_, grads) = model.generator_pass(&full, &cfg).unwrap();
    assert_eq!(grads.v.max_abs(), 0.0);
    assert!(grads.generator.blocks().iter().all(|b| b.max_abs() == 0.0));
}
