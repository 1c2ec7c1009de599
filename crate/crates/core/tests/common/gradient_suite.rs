//! Randomized finite-difference trials shared by the gradient tests and the
//! acceptance report. Each function returns the worst error over its trials.

use convrr::model::{batch_loss_and_grads, Encoder, EncoderConfig, EncoderKind, LossConfig, NegativeRule, TrainingSet};
use convrr::numerics::{
    conv1d_same, conv1d_same_backward, finite_diff_check, l2_normalize, l2_normalize_backward, mean_over_positions,
    mean_over_positions_backward, relu, relu_backward, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{contract, text, uniform};

pub const TRIALS: usize = 100;

pub fn conv_trials(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..TRIALS {
        let k = rng.gen_range(1..=6);
        let d_in = rng.gen_range(1..=4);
        let n_k = rng.gen_range(1..=4);
        let ws = [1, 3, 5][rng.gen_range(0..3)];
        let x = uniform(&[k, d_in], -1.0, 1.0, &mut rng);
        let w = uniform(&[n_k, ws, d_in], -1.0, 1.0, &mut rng);
        let b = uniform(&[n_k], -1.0, 1.0, &mut rng);
        let g = uniform(&[k, n_k], -1.0, 1.0, &mut rng);
        let grads = conv1d_same_backward(&x, &w, &b, &g).unwrap();
        let e_in = finite_diff_check(|t| Ok(contract(&g, &conv1d_same(t, &w, &b)?)), &x, &grads.input).unwrap();
        let e_w = finite_diff_check(|t| Ok(contract(&g, &conv1d_same(&x, t, &b)?)), &w, &grads.kernels).unwrap();
        let e_b = finite_diff_check(|t| Ok(contract(&g, &conv1d_same(&x, &w, t)?)), &b, &grads.bias).unwrap();
        worst = worst.max(e_in).max(e_w).max(e_b);
    }
    worst
}

/// Entries are kept at least `1e-3` away from the kink at zero.
pub fn relu_trials(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..TRIALS {
        let n = rng.gen_range(1..=20);
        let data = (0..n)
            .map(|_| {
                let m = rng.gen_range(1e-3..2.0);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        let x = Tensor::new(vec![n], data).unwrap();
        let g = uniform(&[n], -1.0, 1.0, &mut rng);
        let analytic = relu_backward(&x, &g).unwrap();
        worst = worst.max(finite_diff_check(|t| Ok(contract(&g, &relu(t))), &x, &analytic).unwrap());
    }
    worst
}

pub fn mean_trials(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..TRIALS {
        let k = rng.gen_range(1..=8);
        let d = rng.gen_range(1..=6);
        let x = uniform(&[k, d], -2.0, 2.0, &mut rng);
        let g = uniform(&[d], -1.0, 1.0, &mut rng);
        let analytic = mean_over_positions_backward(k, &g).unwrap();
        let err = finite_diff_check(|t| Ok(contract(&g, &mean_over_positions(t)?)), &x, &analytic).unwrap();
        worst = worst.max(err);
    }
    worst
}

/// Widths start at 2: for `d = 1` the Jacobian is identically zero.
pub fn l2_trials(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..TRIALS {
        let d = rng.gen_range(2..=10);
        let mut v = uniform(&[d], -1.0, 1.0, &mut rng);
        if v.norm() < 0.1 {
            v = v.scale(1.0 / v.norm().max(1e-3));
        }
        let g = uniform(&[d], -1.0, 1.0, &mut rng);
        let analytic = l2_normalize_backward(&v, &g).unwrap();
        worst = worst.max(finite_diff_check(|t| Ok(contract(&g, &l2_normalize(t)?)), &v, &analytic).unwrap());
    }
    worst
}

fn random_set(d: usize, rng: &mut ChaCha8Rng) -> TrainingSet {
    let n_docs = rng.gen_range(2..=4);
    let n_queries = rng.gen_range(1..=4);
    let docs = (0..n_docs).map(|_| text(rng.gen_range(1..=4), d, rng)).collect();
    let queries = (0..n_queries).map(|_| text(rng.gen_range(1..=4), d, rng)).collect();
    let gold = (0..n_queries).map(|_| rng.gen_range(0..n_docs)).collect();
    let ids = (0..n_docs).map(|i| format!("d{i}")).collect();
    TrainingSet::new(ids, docs, queries, gold).unwrap()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EndToEnd {
    /// Worst relative error as reported by `finite_diff_check`.
    pub max_relative: f64,
    /// Worst `|a − n| − rtol · max(|a|, |n|)` over all coordinates, the
    /// absolute slack a combined `rtol + atol` comparison needs.
    pub max_excess: f64,
    /// Trials whose relative error reached the tolerance.
    pub trials_over: usize,
}

fn central_difference<F: FnMut(&Tensor) -> f64>(mut f: F, x: &Tensor) -> Tensor {
    let mut probe = x.clone();
    let mut out = vec![0.0; x.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let xi = x.data()[i];
        let h = 1e-6 * xi.abs().max(1.0);
        probe.data_mut()[i] = xi + h;
        let plus = f(&probe);
        probe.data_mut()[i] = xi - h;
        let minus = f(&probe);
        probe.data_mut()[i] = xi;
        *o = (plus - minus) / (2.0 * h);
    }
    Tensor::new(x.shape().to_vec(), out).unwrap()
}

/// Mean batch loss gradient for every parameter of random instances with
/// `k ≤ 4`, `d″ ≤ 8` and random biases.
pub fn end_to_end_trials(kind: EncoderKind, seed: u64, tolerance: f64) -> EndToEnd {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = EndToEnd::default();
    for _ in 0..TRIALS {
        let d = rng.gen_range(2..=8);
        let cfg = EncoderConfig {
            kind,
            depth: rng.gen_range(1..=3),
            window: [1, 3, 5][rng.gen_range(0..3)],
            scale: rng.gen_range(0.3..1.5),
        };
        let mut encoder = Encoder::init(&cfg, d, &mut rng).unwrap();
        for p in encoder.params_mut() {
            if p.rank() == 1 {
                *p = uniform(p.shape(), -0.5, 0.5, &mut rng);
            }
        }
        let set = random_set(d, &mut rng);
        let queries: Vec<usize> = (0..set.queries.len()).collect();
        let candidates: Vec<usize> = (0..set.docs.len()).collect();
        let loss = LossConfig { margin: 1.0 };
        let mean_loss = |enc: &Encoder| {
            batch_loss_and_grads(enc, &set, &queries, &candidates, NegativeRule::Hardest, &loss).map(|b| b.mean_loss)
        };
        let batch = batch_loss_and_grads(&encoder, &set, &queries, &candidates, NegativeRule::Hardest, &loss).unwrap();
        let mut trial_worst = 0.0_f64;
        for (p, analytic) in batch.grads.iter().enumerate() {
            let with_param = |t: &Tensor| {
                let mut probe = encoder.clone();
                *probe.params_mut()[p] = t.clone();
                mean_loss(&probe)
            };
            let rel = finite_diff_check(with_param, encoder.params()[p], analytic).unwrap();
            trial_worst = trial_worst.max(rel);
            let numeric = central_difference(|t| with_param(t).unwrap(), encoder.params()[p]);
            for (a, n) in analytic.data().iter().zip(numeric.data()) {
                let excess = (a - n).abs() - tolerance * a.abs().max(n.abs());
                out.max_excess = out.max_excess.max(excess);
            }
        }
        out.max_relative = out.max_relative.max(trial_worst);
        if trial_worst >= tolerance {
            out.trials_over += 1;
        }
    }
    out
}
