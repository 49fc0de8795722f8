//! Sequential drivers for the geometry kernels. These are the reference
//! path: the parallel entry points must produce identical output, and the
//! benchmark suite compares the two.

use super::{
    align_row_hits, check_depth_inputs, check_undistort_inputs, depth_row_points, scatter_hits,
    undistort_row, ColorIntrinsics, GeometryError, LutInverter, PinholeIntrinsics, Pixel,
    PointCloud, RigidTransform,
};
use crate::calibration::DepthCalibration;
use crate::codecs::DepthAbImage;
use crate::raster::Image;

pub fn depth_to_points(img: &DepthAbImage, cal: &DepthCalibration) -> Result<PointCloud, GeometryError> {
    check_depth_inputs(img, cal)?;
    let mut points = Vec::new();
    for v in 0..img.depth.height() {
        depth_row_points(v, img, cal, &mut points);
    }
    Ok(PointCloud { points, colors: None })
}

pub fn transform_points(pc: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        points: pc.points.iter().map(|&p| t.apply(p)).collect(),
        colors: pc.colors.clone(),
    }
}

pub fn align_depth_to_color(
    img: &DepthAbImage,
    depth_cal: &DepthCalibration,
    color: &ColorIntrinsics<'_>,
    chain: &RigidTransform,
) -> Result<Image<u16>, GeometryError> {
    check_depth_inputs(img, depth_cal)?;
    let (cw, ch) = color.dims();
    let mut hits = Vec::new();
    for v in 0..img.depth.height() {
        align_row_hits(v, img, depth_cal, color, chain, &mut hits);
    }
    Ok(scatter_hits(hits.into_iter(), cw, ch))
}

pub fn undistort_with_inverter<T: Pixel>(
    image: &Image<T>,
    inverter: &LutInverter,
    target: &PinholeIntrinsics,
) -> Result<Image<T>, GeometryError> {
    check_undistort_inputs(image, inverter, target)?;
    let mut out: Image<T> = Image::new(image.width(), image.height());
    let width = out.width();
    for (vp, row) in out.data_mut().chunks_exact_mut(width).enumerate() {
        undistort_row(vp, row, image, inverter, target);
    }
    Ok(out)
}
