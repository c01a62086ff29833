use super::RetargetError;
use crate::dataio::PixelObs;
use crate::geometry::{triangulate_dlt, CameraModel, Point2, Point3};

/// Triangulates one keypoint track. `track[frame][view]` pairs with
/// `cameras[view]`.
///
/// Frames where any view is occluded repeat the last triangulated position;
/// occluded frames before the first visible one take its value.
pub fn lift_track(cameras: &[CameraModel], track: &[Vec<PixelObs>]) -> Result<Vec<Point3>, RetargetError> {
    let mut lifted: Vec<Option<Point3>> = Vec::with_capacity(track.len());
    let mut last = None;
    for views in track {
        if views.len() != cameras.len() {
            return Err(RetargetError::ViewCount {
                expected: cameras.len(),
                got: views.len(),
            });
        }
        if views.iter().any(|o| o.occluded) {
            lifted.push(last);
            continue;
        }
        let pixels: Vec<Point2> = views.iter().map(|o| Point2::new(o.u, o.v)).collect();
        let p = triangulate_dlt(cameras, &pixels)?;
        last = Some(p);
        lifted.push(last);
    }
    match lifted.iter().flatten().next().copied() {
        Some(first) => Ok(lifted.into_iter().map(|p| p.unwrap_or(first)).collect()),
        None if lifted.is_empty() => Ok(Vec::new()),
        None => Err(RetargetError::NeverVisible),
    }
}
