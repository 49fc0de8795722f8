//! Calibration-driven geometry: LUT rays to point clouds, rigid transforms,
//! pinhole projection with Brown-Conrady distortion, RGB-D alignment, and
//! LUT-based undistortion.
//!
//! Everything here is a pure function over immutable inputs. The per-pixel
//! kernels are written once and driven either row-parallel (rayon, behind
//! the default `parallel` feature) or sequentially; [`serial`] always
//! exposes the sequential drivers so the two paths can be compared
//! directly.

mod lut;
pub mod serial;

#[cfg(feature = "parallel")]
mod par;

pub use lut::LutInverter;

use crate::calibration::{DepthCalibration, PvCalibration, Uv2XyLut};
use crate::codecs::DepthAbImage;
use crate::raster::Image;
use crate::wire::Pose;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("{what}: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        what: &'static str,
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("depth scale must be positive, got {0}")]
    NonPositiveScale(f32),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f32),
    #[error("target intrinsics are degenerate (fx or fy is zero or not finite)")]
    DegenerateIntrinsics,
}

/// Rigid transform as a row-major 4x4 matrix with last row (0, 0, 0, 1);
/// points transform as column vectors, `p' = T (p, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform(pub [[f32; 4]; 4]);

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]);

    pub fn from_pose(pose: &Pose) -> RigidTransform {
        RigidTransform(pose.0)
    }

    pub fn from_matrix(m: [[f32; 4]; 4]) -> RigidTransform {
        RigidTransform(m)
    }

    pub fn translation(t: [f32; 3]) -> RigidTransform {
        let mut m = Self::IDENTITY.0;
        m[0][3] = t[0];
        m[1][3] = t[1];
        m[2][3] = t[2];
        RigidTransform(m)
    }

    pub fn rotation_x(angle: f32) -> RigidTransform {
        let (s, c) = angle.sin_cos();
        RigidTransform([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, -s, 0.0],
            [0.0, s, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    pub fn rotation_y(angle: f32) -> RigidTransform {
        let (s, c) = angle.sin_cos();
        RigidTransform([
            [c, 0.0, s, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [-s, 0.0, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    pub fn rotation_z(angle: f32) -> RigidTransform {
        let (s, c) = angle.sin_cos();
        RigidTransform([
            [c, -s, 0.0, 0.0],
            [s, c, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    /// Apply to a point: `T (p, 1)`, dropping the homogeneous coordinate.
    #[inline]
    pub fn apply(&self, p: [f32; 3]) -> [f32; 3] {
        let m = &self.0;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + m[0][3],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + m[1][3],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + m[2][3],
        ]
    }

    /// Inverse assuming the upper-left 3x3 is orthonormal.
    pub fn inverse_rigid(&self) -> RigidTransform {
        let m = &self.0;
        let mut out = [[0f32; 4]; 4];
        for r in 0..3 {
            for c in 0..3 {
                out[r][c] = m[c][r];
            }
        }
        for r in 0..3 {
            out[r][3] = -(out[r][0] * m[0][3] + out[r][1] * m[1][3] + out[r][2] * m[2][3]);
        }
        out[3][3] = 1.0;
        RigidTransform(out)
    }
}

impl std::ops::Mul for RigidTransform {
    type Output = RigidTransform;

    /// Matrix product: `(A * B).apply(p) == A.apply(B.apply(p))`.
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[0f32; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                out[r][c] = (0..4).map(|k| a[r][k] * b[k][c]).sum();
            }
        }
        RigidTransform(out)
    }
}

/// Points in meters, optionally colored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<[f32; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Pinhole intrinsics used as the undistortion target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeIntrinsics {
    pub fx: f32,
    pub fy: f32,
    pub cx: f32,
    pub cy: f32,
}

impl PinholeIntrinsics {
    fn check(&self) -> Result<(), GeometryError> {
        let ok = self.fx != 0.0
            && self.fy != 0.0
            && [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(GeometryError::DegenerateIntrinsics)
        }
    }
}

/// The color camera a depth image is aligned into.
pub enum ColorIntrinsics<'a> {
    /// PV camera: closed-form intrinsics plus distortion. The calibration
    /// blob does not carry the image size, so it is passed explicitly.
    Pv { cal: &'a PvCalibration, width: usize, height: usize },
    /// VLC camera: no closed-form intrinsics exist, only the uv2xy LUT;
    /// projection goes through a precomputed LUT inversion.
    Vlc(&'a LutInverter),
}

impl ColorIntrinsics<'_> {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ColorIntrinsics::Pv { width, height, .. } => (*width, *height),
            ColorIntrinsics::Vlc(inv) => (inv.width(), inv.height()),
        }
    }
}

/// Values that can be resampled bilinearly.
pub trait Pixel: Copy + Default + Send + Sync {
    fn to_f32(self) -> f32;
    fn from_f32(v: f32) -> Self;
}

impl Pixel for u8 {
    fn to_f32(self) -> f32 {
        self as f32
    }
    fn from_f32(v: f32) -> u8 {
        v.round().clamp(0.0, 255.0) as u8
    }
}

impl Pixel for u16 {
    fn to_f32(self) -> f32 {
        self as f32
    }
    fn from_f32(v: f32) -> u16 {
        v.round().clamp(0.0, 65535.0) as u16
    }
}

// ---------------------------------------------------------------------------
// Per-pixel kernels shared by the serial and parallel drivers
// ---------------------------------------------------------------------------

pub(crate) fn check_depth_inputs(
    img: &DepthAbImage,
    cal: &DepthCalibration,
) -> Result<(), GeometryError> {
    if cal.scale <= 0.0 || !cal.scale.is_finite() {
        return Err(GeometryError::NonPositiveScale(cal.scale));
    }
    if cal.uv2xy.width() != img.depth.width() || cal.uv2xy.height() != img.depth.height() {
        return Err(GeometryError::DimensionMismatch {
            what: "depth uv2xy LUT",
            expected_w: img.depth.width(),
            expected_h: img.depth.height(),
            got_w: cal.uv2xy.width(),
            got_h: cal.uv2xy.height(),
        });
    }
    Ok(())
}

/// Unproject one row of valid depth pixels into sensor-frame points.
pub(crate) fn depth_row_points(
    v: usize,
    img: &DepthAbImage,
    cal: &DepthCalibration,
    out: &mut Vec<[f32; 3]>,
) {
    let row = img.depth.row(v);
    for (u, &d) in row.iter().enumerate() {
        if d == 0 {
            continue;
        }
        let z = d as f32 / cal.scale;
        let (x, y) = cal.uv2xy.xy(u, v);
        out.push([x * z, y * z, z]);
    }
}

/// Brown-Conrady projection of a point already known to have z > 0.
/// Evaluated in f64 so the result is exact to well below a thousandth of a
/// pixel before the final f32 rounding.
#[inline]
pub(crate) fn project_pv_unchecked(p: [f32; 3], cal: &PvCalibration) -> [f32; 2] {
    let x = p[0] as f64 / p[2] as f64;
    let y = p[1] as f64 / p[2] as f64;
    let [k1, k2, k3] = cal.radial.map(|v| v as f64);
    let [p1, p2] = cal.tangential.map(|v| v as f64);
    let r2 = x * x + y * y;
    let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
    let xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    let yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    [
        (cal.focal[0] as f64 * xd + cal.principal[0] as f64) as f32,
        (cal.focal[1] as f64 * yd + cal.principal[1] as f64) as f32,
    ]
}

/// One mapped depth pixel: output index, z in the color frame (the z-buffer
/// key), and the depth value to write.
pub(crate) type AlignHit = (usize, f32, u16);

/// Map one depth row into color-camera pixels.
pub(crate) fn align_row_hits(
    v: usize,
    img: &DepthAbImage,
    cal: &DepthCalibration,
    color: &ColorIntrinsics<'_>,
    chain: &RigidTransform,
    out: &mut Vec<AlignHit>,
) {
    let (cw, ch) = color.dims();
    let row = img.depth.row(v);
    for (u, &d) in row.iter().enumerate() {
        if d == 0 {
            continue;
        }
        let z = d as f32 / cal.scale;
        let (x, y) = cal.uv2xy.xy(u, v);
        let q = chain.apply([x * z, y * z, z]);
        if q[2] <= 0.0 {
            continue;
        }
        let px = match color {
            ColorIntrinsics::Pv { cal: pv, .. } => project_pv_unchecked(q, pv),
            ColorIntrinsics::Vlc(inv) => match inv.invert(q[0] / q[2], q[1] / q[2]) {
                Some((uf, vf)) => [uf, vf],
                None => continue,
            },
        };
        let cu = px[0].round();
        let cv = px[1].round();
        if cu < 0.0 || cv < 0.0 || cu >= cw as f32 || cv >= ch as f32 {
            continue;
        }
        out.push(((cv as usize) * cw + cu as usize, q[2], d));
    }
}

/// Scatter mapped pixels into the output with a z-buffer; nearest z wins,
/// first writer wins ties. Scatter order is the row-major input order, so
/// serial and parallel drivers produce identical images.
pub(crate) fn scatter_hits(hits: impl Iterator<Item = AlignHit>, width: usize, height: usize) -> Image<u16> {
    let mut out = Image::new(width, height);
    let mut zbuf = vec![f32::INFINITY; width * height];
    let data = out.data_mut();
    for (idx, z, d) in hits {
        if z < zbuf[idx] {
            zbuf[idx] = z;
            data[idx] = d;
        }
    }
    out
}

#[inline]
fn bilinear<T: Pixel>(img: &Image<T>, x: f32, y: f32) -> Option<f32> {
    let (w, h) = (img.width(), img.height());
    if !(0.0..=(w - 1) as f32).contains(&x) || !(0.0..=(h - 1) as f32).contains(&y) {
        return None;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f32;
    let fy = y - y0 as f32;
    let v00 = img.get(x0, y0).to_f32();
    let v10 = img.get(x1, y0).to_f32();
    let v01 = img.get(x0, y1).to_f32();
    let v11 = img.get(x1, y1).to_f32();
    Some(v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy + v11 * fx * fy)
}

/// Resample one output row of the undistorted image.
pub(crate) fn undistort_row<T: Pixel>(
    vp: usize,
    out_row: &mut [T],
    src: &Image<T>,
    inverter: &LutInverter,
    target: &PinholeIntrinsics,
) {
    for (up, out_px) in out_row.iter_mut().enumerate() {
        let x = (up as f32 - target.cx) / target.fx;
        let y = (vp as f32 - target.cy) / target.fy;
        *out_px = match inverter.invert(x, y).and_then(|(u, v)| bilinear(src, u, v)) {
            Some(v) => T::from_f32(v),
            None => T::default(),
        };
    }
}

// ---------------------------------------------------------------------------
// Public entry points (row-parallel when the `parallel` feature is enabled)
// ---------------------------------------------------------------------------

/// Unproject valid depth pixels to sensor-frame points in meters:
/// `z = depth / scale`, `point = (x_lut z, y_lut z, z)`. Zero-depth pixels
/// emit no point; output order is row-major.
pub fn depth_to_points(img: &DepthAbImage, cal: &DepthCalibration) -> Result<PointCloud, GeometryError> {
    #[cfg(feature = "parallel")]
    return par::depth_to_points(img, cal);
    #[cfg(not(feature = "parallel"))]
    return serial::depth_to_points(img, cal);
}

/// Apply `T` to every point.
pub fn transform_points(pc: &PointCloud, t: &RigidTransform) -> PointCloud {
    #[cfg(feature = "parallel")]
    return par::transform_points(pc, t);
    #[cfg(not(feature = "parallel"))]
    return serial::transform_points(pc, t);
}

/// Project a camera-frame point through the PV intrinsics with Brown-Conrady
/// distortion (3 radial, 2 tangential coefficients). Zero coefficients
/// reduce to the plain pinhole.
pub fn project_pv(point: [f32; 3], cal: &PvCalibration) -> Result<[f32; 2], GeometryError> {
    if point[2] <= 0.0 {
        return Err(GeometryError::BehindCamera(point[2]));
    }
    Ok(project_pv_unchecked(point, cal))
}

/// Reproject a depth image into the color camera: unproject each valid
/// depth pixel, move it through `chain` (depth sensor frame to color sensor
/// frame), project into the color image, and z-buffer collisions (nearest
/// wins). Output has the color camera's dimensions; unmapped pixels are 0.
pub fn align_depth_to_color(
    img: &DepthAbImage,
    depth_cal: &DepthCalibration,
    color: &ColorIntrinsics<'_>,
    chain: &RigidTransform,
) -> Result<Image<u16>, GeometryError> {
    #[cfg(feature = "parallel")]
    return par::align_depth_to_color(img, depth_cal, color, chain);
    #[cfg(not(feature = "parallel"))]
    return serial::align_depth_to_color(img, depth_cal, color, chain);
}

/// Undistort via inverse mapping: output pixel (u', v') samples the input
/// at the pixel whose LUT ray maps through the target pinhole to (u', v'),
/// with bilinear resampling. Out-of-range samples are 0.
pub fn undistort_via_lut<T: Pixel>(
    image: &Image<T>,
    lut: &Uv2XyLut,
    target: &PinholeIntrinsics,
) -> Result<Image<T>, GeometryError> {
    check_lut_dims(image.width(), image.height(), lut)?;
    undistort_with_inverter(image, &LutInverter::new(lut), target)
}

/// [`undistort_via_lut`] with a prebuilt, reusable LUT inversion.
pub fn undistort_with_inverter<T: Pixel>(
    image: &Image<T>,
    inverter: &LutInverter,
    target: &PinholeIntrinsics,
) -> Result<Image<T>, GeometryError> {
    #[cfg(feature = "parallel")]
    return par::undistort_with_inverter(image, inverter, target);
    #[cfg(not(feature = "parallel"))]
    return serial::undistort_with_inverter(image, inverter, target);
}

pub(crate) fn check_lut_dims(w: usize, h: usize, lut: &Uv2XyLut) -> Result<(), GeometryError> {
    if lut.width() != w || lut.height() != h {
        return Err(GeometryError::DimensionMismatch {
            what: "uv2xy LUT",
            expected_w: w,
            expected_h: h,
            got_w: lut.width(),
            got_h: lut.height(),
        });
    }
    Ok(())
}

pub(crate) fn check_undistort_inputs<T: Pixel>(
    image: &Image<T>,
    inverter: &LutInverter,
    target: &PinholeIntrinsics,
) -> Result<(), GeometryError> {
    target.check()?;
    if inverter.width() != image.width() || inverter.height() != image.height() {
        return Err(GeometryError::DimensionMismatch {
            what: "LUT inversion",
            expected_w: image.width(),
            expected_h: image.height(),
            got_w: inverter.width(),
            got_h: inverter.height(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{synth_pinhole_depth, synth_pinhole_lut};
    use crate::codecs::{DEPTH_HEIGHT, DEPTH_WIDTH};
    use rand::prelude::*;

    fn depth_cal() -> DepthCalibration {
        synth_pinhole_depth(200.0, 200.0, 160.0, 144.0).unwrap()
    }

    fn flat_depth(value: u16) -> DepthAbImage {
        let mut img = DepthAbImage::new();
        img.depth.data_mut().fill(value);
        img
    }

    #[test]
    fn optical_axis_pixel_unprojects_to_unit_z() {
        let mut img = DepthAbImage::new();
        img.depth.put(160, 144, 1000);
        let pc = depth_to_points(&img, &depth_cal()).unwrap();
        assert_eq!(pc.len(), 1);
        let p = pc.points[0];
        assert!(p[0].abs() < 1e-6 && p[1].abs() < 1e-6 && (p[2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_depth_emits_no_points() {
        let pc = depth_to_points(&DepthAbImage::new(), &depth_cal()).unwrap();
        assert!(pc.is_empty());
    }

    #[test]
    fn point_count_equals_nonzero_pixels() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut img = DepthAbImage::new();
        let mut nonzero = 0usize;
        for d in img.depth.data_mut() {
            if rng.random_bool(0.3) {
                *d = rng.random_range(1..5000);
                nonzero += 1;
            }
        }
        let pc = depth_to_points(&img, &depth_cal()).unwrap();
        assert_eq!(pc.len(), nonzero);
    }

    #[test]
    fn planar_depth_satisfies_the_plane_equation() {
        // A constant-depth image is the plane z = d/scale in the sensor frame.
        let img = flat_depth(2500);
        let pc = depth_to_points(&img, &depth_cal()).unwrap();
        assert_eq!(pc.len(), DEPTH_WIDTH * DEPTH_HEIGHT);
        for p in &pc.points {
            assert!((p[2] - 2.5).abs() <= 1e-4, "plane residual too large: {p:?}");
        }
    }

    #[test]
    fn scale_must_be_positive() {
        let mut cal = depth_cal();
        cal.scale = 0.0;
        assert!(matches!(
            depth_to_points(&DepthAbImage::new(), &cal),
            Err(GeometryError::NonPositiveScale(_))
        ));
    }

    #[test]
    fn transform_identity_and_translation() {
        let pc = PointCloud { points: vec![[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]], colors: None };
        let same = transform_points(&pc, &RigidTransform::IDENTITY);
        assert_eq!(same, pc);
        let moved = transform_points(&pc, &RigidTransform::translation([1.0, 2.0, 3.0]));
        assert_eq!(moved.points[0], [1.0, 2.0, 3.0]);
    }

    #[test]
    fn transform_matches_bruteforce_multiply() {
        let mut rng = StdRng::seed_from_u64(11);
        let t = RigidTransform::rotation_y(0.3) * RigidTransform::rotation_x(-0.2)
            * RigidTransform::translation([0.5, -1.0, 2.0]);
        let pc = PointCloud {
            points: (0..500).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect(),
            colors: None,
        };
        let out = transform_points(&pc, &t);
        for (p, q) in pc.points.iter().zip(&out.points) {
            // oracle: full 4-vector multiply
            let hom = [p[0], p[1], p[2], 1.0];
            for r in 0..3 {
                let want: f32 = (0..4).map(|k| t.0[r][k] * hom[k]).sum();
                assert!((want - q[r]).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn composition_law() {
        let a = RigidTransform::rotation_z(0.7) * RigidTransform::translation([1.0, 0.0, 0.0]);
        let b = RigidTransform::rotation_x(-0.4) * RigidTransform::translation([0.0, 2.0, 0.0]);
        let pc = PointCloud { points: vec![[0.3, -0.7, 1.9]], colors: None };
        let seq = transform_points(&transform_points(&pc, &a), &b);
        let composed = transform_points(&pc, &(b * a));
        for (p, q) in seq.points.iter().zip(&composed.points) {
            for i in 0..3 {
                assert!((p[i] - q[i]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn rigidity_preserves_pairwise_distances() {
        let mut rng = StdRng::seed_from_u64(23);
        let t = RigidTransform::rotation_y(1.1) * RigidTransform::rotation_z(0.25)
            * RigidTransform::translation([3.0, -2.0, 0.5]);
        let pts: Vec<[f32; 3]> =
            (0..64).map(|_| std::array::from_fn(|_| rng.random_range(-2.0..2.0))).collect();
        let out = transform_points(&PointCloud { points: pts.clone(), colors: None }, &t);
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let d0 = dist(pts[i], pts[j]);
                let d1 = dist(out.points[i], out.points[j]);
                assert!((d0 - d1).abs() <= 1e-5, "distance drifted: {d0} vs {d1}");
            }
        }
    }

    fn dist(a: [f32; 3], b: [f32; 3]) -> f32 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    fn pv_cal(k: [f32; 3], p: [f32; 2]) -> PvCalibration {
        PvCalibration {
            focal: [580.0, 580.0],
            principal: [320.0, 180.0],
            radial: k,
            tangential: p,
            projection: [[0.0; 4]; 4],
        }
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let cal = pv_cal([0.0; 3], [0.0; 2]);
        let px = project_pv([0.0, 0.0, 1.0], &cal).unwrap();
        assert_eq!(px, [320.0, 180.0]);
    }

    #[test]
    fn zero_distortion_reduces_to_pinhole() {
        let cal = pv_cal([0.0; 3], [0.0; 2]);
        let px = project_pv([0.2, -0.1, 2.0], &cal).unwrap();
        assert!((px[0] - (580.0 * 0.1 + 320.0)).abs() < 1e-4);
        assert!((px[1] - (580.0 * -0.05 + 180.0)).abs() < 1e-4);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let cal = pv_cal([0.0; 3], [0.0; 2]);
        assert!(matches!(
            project_pv([0.0, 0.0, -1.0], &cal),
            Err(GeometryError::BehindCamera(_))
        ));
    }

    // Independent distortion oracle: textbook Brown-Conrady written from the
    // summation form rather than the nested evaluation used in the kernel.
    fn distort_oracle(cal: &PvCalibration, p: [f32; 3]) -> [f32; 2] {
        let xn = p[0] as f64 / p[2] as f64;
        let yn = p[1] as f64 / p[2] as f64;
        let [k1, k2, k3] = cal.radial.map(|v| v as f64);
        let [t1, t2] = cal.tangential.map(|v| v as f64);
        let r2 = xn * xn + yn * yn;
        let rad = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2;
        let xt = 2.0 * t1 * xn * yn + t2 * (r2 + 2.0 * xn * xn);
        let yt = t1 * (r2 + 2.0 * yn * yn) + 2.0 * t2 * xn * yn;
        [
            (cal.focal[0] as f64 * (xn * rad + xt) + cal.principal[0] as f64) as f32,
            (cal.focal[1] as f64 * (yn * rad + yt) + cal.principal[1] as f64) as f32,
        ]
    }

    #[test]
    fn distortion_matches_independent_evaluator() {
        let cal = pv_cal([0.08, -0.03, 0.002], [0.0012, -0.0007]);
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..1000 {
            let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..5.0)];
            let got = project_pv(p, &cal).unwrap();
            let want = distort_oracle(&cal, p);
            assert!((got[0] - want[0]).abs() <= 1e-5 && (got[1] - want[1]).abs() <= 1e-5);
        }
    }

    #[test]
    fn projection_unprojection_identity_on_pinhole() {
        // Round every pixel through the LUT and back through the matching
        // pinhole; the spec bound is 1e-4 px.
        let cal = depth_cal();
        let pv = PvCalibration {
            focal: [200.0, 200.0],
            principal: [160.0, 144.0],
            radial: [0.0; 3],
            tangential: [0.0; 2],
            projection: [[0.0; 4]; 4],
        };
        for v in 0..DEPTH_HEIGHT {
            for u in 0..DEPTH_WIDTH {
                let (x, y) = cal.uv2xy.xy(u, v);
                let px = project_pv([x, y, 1.0], &pv).unwrap();
                assert!((px[0] - u as f32).abs() <= 1e-4 && (px[1] - v as f32).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn alignment_identity_reproduces_input() {
        let mut rng = StdRng::seed_from_u64(17);
        let cal = depth_cal();
        let mut img = DepthAbImage::new();
        for d in img.depth.data_mut() {
            if rng.random_bool(0.5) {
                *d = rng.random_range(500..4000);
            }
        }
        let pv = PvCalibration {
            focal: [200.0, 200.0],
            principal: [160.0, 144.0],
            radial: [0.0; 3],
            tangential: [0.0; 2],
            projection: [[0.0; 4]; 4],
        };
        let out = align_depth_to_color(
            &img,
            &cal,
            &ColorIntrinsics::Pv { cal: &pv, width: DEPTH_WIDTH, height: DEPTH_HEIGHT },
            &RigidTransform::IDENTITY,
        )
        .unwrap();
        assert_eq!(out.data(), img.depth.data());
    }

    #[test]
    fn alignment_translation_shifts_columns() {
        // Constant depth z, pure x-translation tx: every pixel moves by
        // fx*tx/z columns.
        let cal = depth_cal();
        let img = flat_depth(2000); // z = 2 m
        let pv = PvCalibration {
            focal: [200.0, 200.0],
            principal: [160.0, 144.0],
            radial: [0.0; 3],
            tangential: [0.0; 2],
            projection: [[0.0; 4]; 4],
        };
        let tx = 0.1; // shift = 200 * 0.1 / 2 = 10 columns
        let out = align_depth_to_color(
            &img,
            &cal,
            &ColorIntrinsics::Pv { cal: &pv, width: DEPTH_WIDTH, height: DEPTH_HEIGHT },
            &RigidTransform::translation([tx, 0.0, 0.0]),
        )
        .unwrap();
        let shift = (200.0 * tx / 2.0) as usize;
        for v in 0..DEPTH_HEIGHT {
            for u in 0..DEPTH_WIDTH {
                let expected = if u >= shift { 2000 } else { 0 };
                assert_eq!(out.get(u, v), expected, "at ({u}, {v})");
            }
        }
    }

    #[test]
    fn alignment_zbuffer_keeps_nearest() {
        // Align into a 4x coarser color camera so two adjacent depth pixels
        // round into the same output pixel: (160,144) on the optical axis
        // at z = 4 m and (161,144) at z = 1 m, whose ray (0.005, 0) lands at
        // column 40 + 50*0.005 = 40.25 -> also (40, 36). The nearer depth
        // must win the collision.
        let cal = depth_cal();
        let coarse_pv = PvCalibration {
            focal: [50.0, 50.0],
            principal: [40.0, 36.0],
            radial: [0.0; 3],
            tangential: [0.0; 2],
            projection: [[0.0; 4]; 4],
        };
        let mut img = DepthAbImage::new();
        img.depth.put(160, 144, 4000);
        img.depth.put(161, 144, 1000);
        let out = align_depth_to_color(
            &img,
            &cal,
            &ColorIntrinsics::Pv { cal: &coarse_pv, width: 80, height: 72 },
            &RigidTransform::IDENTITY,
        )
        .unwrap();
        assert_eq!(out.get(40, 36), 1000, "nearest depth must win the collision");
    }

    #[test]
    fn undistort_pinhole_lut_is_identity() {
        let lut = synth_pinhole_lut(64, 48, 80.0, 80.0, 32.0, 24.0).unwrap();
        let mut img: Image<u8> = Image::new(64, 48);
        let mut rng = StdRng::seed_from_u64(9);
        for p in img.data_mut() {
            *p = rng.random();
        }
        let out = undistort_via_lut(
            &img,
            &lut,
            &PinholeIntrinsics { fx: 80.0, fy: 80.0, cx: 32.0, cy: 24.0 },
        )
        .unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn undistort_out_of_range_fills_zero() {
        let lut = synth_pinhole_lut(64, 48, 80.0, 80.0, 32.0, 24.0).unwrap();
        let mut img: Image<u8> = Image::new(64, 48);
        img.data_mut().fill(200);
        // A target with twice the field of view: the border of the output
        // looks outside the LUT and must be 0.
        let out = undistort_via_lut(
            &img,
            &lut,
            &PinholeIntrinsics { fx: 40.0, fy: 40.0, cx: 32.0, cy: 24.0 },
        )
        .unwrap();
        assert_eq!(out.get(0, 0), 0);
        assert_eq!(out.get(32, 24), 200);
    }

    #[test]
    fn undistort_straightens_radially_distorted_checkerboard() {
        // Synthetic radially distorted camera: lut(u,v) = undistort(pinhole
        // ray). Render a checkerboard painted on the z=1 plane as that
        // camera sees it, undistort to the pinhole, and check that the
        // vertical edges come out straight to within 1 px.
        let (w, h) = (160usize, 120usize);
        let (fx, fy, cx, cy) = (120.0f32, 120.0f32, 80.0f32, 60.0f32);
        let k1 = -0.25f32; // barrel

        // invert the forward model xd = x(1 + k1 r^2) by fixed-point
        // iteration (test-only oracle)
        let undistort = |xd: f32, yd: f32| {
            let (mut x, mut y) = (xd, yd);
            for _ in 0..50 {
                let r2 = x * x + y * y;
                x = xd / (1.0 + k1 * r2);
                y = yd / (1.0 + k1 * r2);
            }
            (x, y)
        };

        let mut lut = crate::calibration::Uv2XyLut::zeroed(w, h);
        for v in 0..h {
            for u in 0..w {
                let xd = (u as f32 - cx) / fx;
                let yd = (v as f32 - cy) / fy;
                let (x, y) = undistort(xd, yd);
                lut.set_xy(u, v, x, y);
            }
        }

        // checkerboard with 0.1-unit cells on the plane z=1, sampled through
        // the distorted camera
        let cell = 0.1f32;
        let checker = |x: f32, y: f32| -> u8 {
            let cx_ = (x / cell).floor() as i64;
            let cy_ = (y / cell).floor() as i64;
            if (cx_ + cy_).rem_euclid(2) == 0 {
                255
            } else {
                0
            }
        };
        let mut img: Image<u8> = Image::new(w, h);
        for v in 0..h {
            for u in 0..w {
                let (x, y) = lut.xy(u, v);
                img.put(u, v, checker(x, y));
            }
        }
        // sanity: the rendered distorted image has curved edges, i.e. edge
        // column varies across rows before undistortion
        let distorted_edges = vertical_edge_columns(&img);

        let out = undistort_via_lut(&img, &lut, &PinholeIntrinsics { fx, fy, cx, cy }).unwrap();
        // In the undistorted image an edge at plane coordinate x=k*cell sits
        // at column cx + fx*k*cell for every row.
        let edges = vertical_edge_columns(&out);
        let mut max_dev = 0.0f32;
        for cols in edges.values() {
            if cols.len() < (h * 2) / 3 {
                continue; // edge not visible in enough rows
            }
            let mean: f32 = cols.iter().sum::<f32>() / cols.len() as f32;
            for &c in cols {
                max_dev = max_dev.max((c - mean).abs());
            }
        }
        assert!(max_dev < 1.0, "undistorted edges deviate {max_dev} px from straight");
        // and the distorted input genuinely had bent edges
        let mut bent = 0.0f32;
        for cols in distorted_edges.values() {
            if cols.len() < (h * 2) / 3 {
                continue;
            }
            let mean: f32 = cols.iter().sum::<f32>() / cols.len() as f32;
            for &c in cols {
                bent = bent.max((c - mean).abs());
            }
        }
        assert!(bent > 1.5, "test scene is not distorted enough to be meaningful ({bent})");
    }

    /// Group subpixel column positions of black/white transitions by
    /// approximate edge identity (rounded mean position).
    fn vertical_edge_columns(img: &Image<u8>) -> std::collections::BTreeMap<i64, Vec<f32>> {
        let mut edges: std::collections::BTreeMap<i64, Vec<f32>> = Default::default();
        let margin = 8;
        for v in margin..img.height() - margin {
            let mut u = margin;
            while u + 1 < img.width() - margin {
                let a = img.get(u, v);
                let b = img.get(u + 1, v);
                if a != b && (a == 0 || a == 255) && (b == 0 || b == 255) {
                    let col = u as f32 + 0.5;
                    edges.entry(((col / 6.0).round()) as i64 * 6).or_default().push(col);
                    u += 3; // skip past this edge
                } else {
                    u += 1;
                }
            }
        }
        edges
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_serial_paths_agree() {
        let mut rng = StdRng::seed_from_u64(31);
        let cal = depth_cal();
        let mut img = DepthAbImage::new();
        for d in img.depth.data_mut() {
            if rng.random_bool(0.7) {
                *d = rng.random_range(300..6000);
            }
        }
        let pc_par = depth_to_points(&img, &cal).unwrap();
        let pc_ser = serial::depth_to_points(&img, &cal).unwrap();
        assert_eq!(pc_par, pc_ser);

        let t = RigidTransform::rotation_y(0.2) * RigidTransform::translation([0.1, 0.0, 0.3]);
        assert_eq!(transform_points(&pc_par, &t), serial::transform_points(&pc_ser, &t));

        let pv = PvCalibration {
            focal: [210.0, 205.0],
            principal: [155.0, 150.0],
            radial: [0.01, 0.0, 0.0],
            tangential: [0.0; 2],
            projection: [[0.0; 4]; 4],
        };
        let color = ColorIntrinsics::Pv { cal: &pv, width: 300, height: 280 };
        let a = align_depth_to_color(&img, &cal, &color, &t).unwrap();
        let b = serial::align_depth_to_color(&img, &cal, &color, &t).unwrap();
        assert_eq!(a, b);

        let lut = synth_pinhole_lut(120, 90, 100.0, 100.0, 60.0, 45.0).unwrap();
        let mut gray: Image<u8> = Image::new(120, 90);
        for p in gray.data_mut() {
            *p = rng.random();
        }
        let inv = LutInverter::new(&lut);
        let target = PinholeIntrinsics { fx: 90.0, fy: 90.0, cx: 60.0, cy: 45.0 };
        assert_eq!(
            undistort_with_inverter(&gray, &inv, &target).unwrap(),
            serial::undistort_with_inverter(&gray, &inv, &target).unwrap()
        );
    }
}
