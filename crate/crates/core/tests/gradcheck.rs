use proptest::prelude::*;
use proptest::test_runner::RngSeed;

use unlearn_lab::nn::{init_params, Activation, Batch, MlpModel};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn relu_pattern(model: &MlpModel, inputs: &[f64]) -> Vec<bool> {
    if model.activation() != Activation::Relu {
        return Vec::new();
    }
    let dims = model.layer_dims();
    let mut pattern = Vec::new();
    for x in inputs.chunks_exact(dims[0]) {
        let mut a = x.to_vec();
        for l in 0..model.num_layers() - 1 {
            let (w, b) = (model.weights(l), model.biases(l));
            let z: Vec<f64> =
                (0..dims[l + 1]).map(|o| b[o] + (0..dims[l]).map(|i| w[o * dims[l] + i] * a[i]).sum::<f64>()).collect();
            pattern.extend(z.iter().map(|&v| v > 0.0));
            a = z.iter().map(|&v| v.max(0.0)).collect();
        }
    }
    pattern
}

/// Central difference whose probes stay on one side of every relu kink.
fn numeric(loss: impl Fn(f64) -> f64, pattern: impl Fn(f64) -> Vec<bool>, x: f64) -> f64 {
    let h = [1e-5, 1e-7, 1e-9].into_iter().find(|&h| pattern(x - h) == pattern(x + h)).unwrap_or(1e-9);
    (loss(x + h) - loss(x - h)) / (2.0 * h)
}

fn case() -> impl Strategy<Value = (MlpModel, Batch)> {
    (1usize..=5, prop::collection::vec(2usize..=7, 1..=2), 2usize..=4, 1usize..=6, any::<bool>(), any::<u64>())
        .prop_flat_map(|(d, hidden, k, m, tanh, seed)| {
            let mut dims = vec![d];
            dims.extend(hidden);
            dims.push(k);
            let act = if tanh { Activation::Tanh } else { Activation::Relu };
            let model = init_params(&dims, act, seed).unwrap();
            let p = model.num_params();
            (
                Just(model),
                prop::collection::vec(-0.1f64..0.1, p),
                prop::collection::vec(-1.0f64..1.0, m * d),
                prop::collection::vec(0..k, m),
            )
        })
        .prop_map(|(mut model, jitter, inputs, labels)| {
            let d = model.input_dim();
            let flat: Vec<f64> = model.flat_params().iter().zip(&jitter).map(|(w, j)| w + j).collect();
            model.set_flat_params(&flat).unwrap();
            (model, Batch::new(inputs, labels, d).unwrap())
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, rng_seed: RngSeed::Fixed(20_240), ..ProptestConfig::default() })]

    #[test]
    fn parameter_gradient_matches_central_differences((model, batch) in case()) {
        let (loss, grad) = model.grad_params(&batch).unwrap();
        prop_assert!((loss - model.loss(&batch).unwrap()).abs() < 1e-12);
        let flat = model.flat_params();
        for (i, g) in grad.flat().into_iter().enumerate() {
            let with = |v: f64| {
                let mut p = flat.clone();
                p[i] = v;
                let mut m = model.clone();
                m.set_flat_params(&p).unwrap();
                m
            };
            let fd = numeric(|v| with(v).loss(&batch).unwrap(), |v| relu_pattern(&with(v), batch.inputs()), flat[i]);
            prop_assert!(rel_err(g, fd) < 1e-4, "param {i}: analytic {g}, numeric {fd}");
        }
    }

    #[test]
    fn input_gradient_matches_central_differences((model, batch) in case()) {
        let d = batch.dim();
        for r in 0..batch.len() {
            let x = batch.row(r);
            let y = batch.labels()[r];
            let g = model.grad_input(x, y).unwrap();
            for t in 0..d {
                let at = |v: f64| {
                    let mut xx = x.to_vec();
                    xx[t] = v;
                    xx
                };
                let fd = numeric(|v| model.loss(&Batch::new(at(v), vec![y], d).unwrap()).unwrap(), |v| relu_pattern(&model, &at(v)), x[t]);
                prop_assert!(rel_err(g[t], fd) < 1e-4, "row {r} input {t}: analytic {}, numeric {fd}", g[t]);
            }
        }
    }
}
