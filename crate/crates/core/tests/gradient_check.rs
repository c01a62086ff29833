//! Backpropagation through the whole policy network against central finite differences.

mod common;

use common::gradcheck::{check_gradients, random_problem, small_dims};
use point_policy::policy::network::PolicyNetwork;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_parameter_gradient_matches_central_differences() {
    let report = check_gradients(small_dims(), 2024);
    assert_eq!(report.checked, report.parameters);
    assert!(report.worst < 1e-4, "worst relative error {:e} at {}", report.worst, report.worst_at);
    eprintln!("checked {} parameters, worst relative error {:e}", report.checked, report.worst);
}

#[test]
fn object_inputs_influence_predictions_but_not_supervision_shape() {
    let dims = small_dims();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let net = PolicyNetwork::<f64>::init(dims, &mut rng).unwrap();
    let (input, _) = random_problem(&dims, 1, &mut rng);
    let base = net.forward(&input).unwrap();
    let mut moved = input.clone();
    // last keypoint row is an object point
    moved.points.row_mut(dims.keypoints() - 1).mapv_inplace(|v| v + 1.0);
    let shifted = net.forward(&moved).unwrap();
    assert!(base.tracks.iter().zip(shifted.tracks.iter()).any(|(a, b)| (a - b).abs() > 1e-9));
    // outputs exist only for robot points
    assert_eq!(base.tracks.nrows(), dims.robot_points);
}
