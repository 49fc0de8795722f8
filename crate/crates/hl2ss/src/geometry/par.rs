//! Row-parallel drivers. Work is split by image row and collected in row
//! order, so output is bit-identical to the serial path; the z-buffer
//! scatter of the alignment stays sequential to keep collision resolution
//! deterministic.

use super::{
    align_row_hits, check_depth_inputs, check_undistort_inputs, depth_row_points, scatter_hits,
    undistort_row, AlignHit, ColorIntrinsics, GeometryError, LutInverter, PinholeIntrinsics,
    Pixel, PointCloud, RigidTransform,
};
use crate::calibration::DepthCalibration;
use crate::codecs::DepthAbImage;
use crate::raster::Image;
use rayon::prelude::*;

pub fn depth_to_points(img: &DepthAbImage, cal: &DepthCalibration) -> Result<PointCloud, GeometryError> {
    check_depth_inputs(img, cal)?;
    let rows: Vec<Vec<[f32; 3]>> = (0..img.depth.height())
        .into_par_iter()
        .map(|v| {
            let mut out = Vec::new();
            depth_row_points(v, img, cal, &mut out);
            out
        })
        .collect();
    Ok(PointCloud { points: rows.concat(), colors: None })
}

pub fn transform_points(pc: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        points: pc.points.par_iter().map(|&p| t.apply(p)).collect(),
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
    let rows: Vec<Vec<AlignHit>> = (0..img.depth.height())
        .into_par_iter()
        .map(|v| {
            let mut out = Vec::new();
            align_row_hits(v, img, depth_cal, color, chain, &mut out);
            out
        })
        .collect();
    Ok(scatter_hits(rows.into_iter().flatten(), cw, ch))
}

pub fn undistort_with_inverter<T: Pixel>(
    image: &Image<T>,
    inverter: &LutInverter,
    target: &PinholeIntrinsics,
) -> Result<Image<T>, GeometryError> {
    check_undistort_inputs(image, inverter, target)?;
    let mut out: Image<T> = Image::new(image.width(), image.height());
    let width = out.width();
    out.data_mut()
        .par_chunks_exact_mut(width)
        .enumerate()
        .for_each(|(vp, row)| undistort_row(vp, row, image, inverter, target));
    Ok(out)
}
