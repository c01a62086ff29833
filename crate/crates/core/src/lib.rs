//! Point-based imitation learning: human hand keypoints are lifted from two
//! camera views, retargeted to robot keypoints, and used to train a
//! transformer that predicts future robot keypoint tracks. Predicted tracks
//! are ensembled over time and converted back to end-effector poses.

pub mod control;
pub mod dataio;
pub mod geometry;
pub mod policy;
pub mod retarget;
pub mod simenv;
pub mod pipeline;
