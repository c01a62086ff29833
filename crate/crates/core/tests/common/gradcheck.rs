//! Central finite-difference check of every policy parameter gradient.

use ndarray::{Array1, Array2};
use point_policy::policy::loss::{bc_loss, ChunkTargets, LossWeights};
use point_policy::policy::network::{BatchInput, NetworkDims, PolicyNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const STEP: f64 = 2e-5;

pub fn small_dims() -> NetworkDims {
    NetworkDims {
        hidden: 16,
        layers: 2,
        heads: 2,
        ffn: 32,
        history: 3,
        chunk: 4,
        robot_points: 3,
        object_points: 2,
    }
}

pub fn random_problem(dims: &NetworkDims, batch: usize, rng: &mut ChaCha8Rng) -> (BatchInput<f64>, ChunkTargets<f64>) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let input = BatchInput {
        points: Array2::from_shape_simple_fn((batch * dims.keypoints(), 3 * dims.history), || normal.sample(rng)),
        gripper: Array1::from_shape_fn(batch, |i| (i % 2) as f64),
    };
    let target = ChunkTargets {
        tracks: Array2::from_shape_simple_fn((batch * dims.robot_points, 3 * dims.chunk), || normal.sample(rng)),
        gripper: Array2::from_shape_simple_fn((batch, dims.chunk), || if rng.random_bool(0.5) { 1.0 } else { 0.0 }),
    };
    (input, target)
}

fn loss_of(net: &PolicyNetwork<f64>, input: &BatchInput<f64>, target: &ChunkTargets<f64>) -> f64 {
    let out = net.forward(input).unwrap();
    bc_loss(&out, target, LossWeights::default()).unwrap().total
}

/// Worst disagreement found by [`check_gradients`].
pub struct GradReport {
    pub checked: usize,
    pub parameters: usize,
    pub worst: f64,
    pub worst_at: String,
}

/// Compares backpropagated gradients with central differences for every
/// scalar parameter of a randomly perturbed `dims` network.
pub fn check_gradients(dims: NetworkDims, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = PolicyNetwork::<f64>::init(dims, &mut rng).unwrap();
    // Move away from the symmetric initialization so LayerNorm gains and
    // biases carry non-trivial gradients.
    let normal = Normal::new(0.0, 0.3).unwrap();
    for mut t in net.tensors_mut() {
        t.mapv_inplace(|v| v + normal.sample(&mut rng));
    }
    let (input, target) = random_problem(&dims, 3, &mut rng);

    let (out, cache) = net.forward_with_cache(&input).unwrap();
    let loss = bc_loss(&out, &target, LossWeights::default()).unwrap();
    let grads = net.backward(&input, &cache, &loss.grad);
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(name, t)| (name, t.iter().copied().collect()))
        .collect();

    let mut report = GradReport {
        checked: 0,
        parameters: net.parameter_count(),
        worst: 0.0,
        worst_at: String::new(),
    };
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        for (ei, &an) in grad.iter().enumerate() {
            let mut probe = net.clone();
            *probe.tensors_mut()[ti].iter_mut().nth(ei).unwrap() += STEP;
            let up = loss_of(&probe, &input, &target);
            *probe.tensors_mut()[ti].iter_mut().nth(ei).unwrap() -= 2.0 * STEP;
            let dn = loss_of(&probe, &input, &target);
            let fd = (up - dn) / (2.0 * STEP);
            let scale = an.abs().max(fd.abs());
            // Gradients at rounding level carry no relative information.
            let rel = if scale < 1e-9 { 0.0 } else { (an - fd).abs() / scale };
            if rel > report.worst {
                report.worst = rel;
                report.worst_at = format!("{name}[{ei}] analytic {an:e} numeric {fd:e}");
            }
            report.checked += 1;
        }
    }
    report
}
