//! Mode 2 calibration payloads for all sensors.
//!
//! A Mode 2 transfer returns one fixed-size blob per sensor and then the
//! server closes the connection. Field order, little-endian floats,
//! row-major matrices:
//!
//! ```text
//! RM VLC:    uv2xy LUT 480x640x2 f32 | extrinsics 4x4 f32            = 2,457,664 B
//! RM Depth:  uv2xy LUT 288x320x2 f32 | extrinsics 4x4 f32 | scale f32 =   737,348 B
//! RM IMU:    extrinsics 4x4 f32                                       =        64 B
//! PV:        focal 2 f32 | principal 2 f32 | radial 3 f32
//!            | tangential 2 f32 | projection 4x4 f32                  =       100 B
//! ```
//!
//! The uv2xy LUT maps image coordinates to normalized coordinates on the
//! camera unit plane, stored row-major with the (x, y) pair innermost. The
//! extrinsics matrix is the sensor-to-rigNode transform. The depth scale
//! converts depth units to meters. No calibration exists for the
//! magnetometer.

use crate::streams::StreamPort;
use thiserror::Error;

pub const VLC_LUT_WIDTH: usize = 640;
pub const VLC_LUT_HEIGHT: usize = 480;
pub const DEPTH_LUT_WIDTH: usize = 320;
pub const DEPTH_LUT_HEIGHT: usize = 288;

/// 480*640*2*4 + 64
pub const VLC_CALIBRATION_LEN: usize = VLC_LUT_HEIGHT * VLC_LUT_WIDTH * 2 * 4 + 64;
/// 288*320*2*4 + 64 + 4
pub const DEPTH_CALIBRATION_LEN: usize = DEPTH_LUT_HEIGHT * DEPTH_LUT_WIDTH * 2 * 4 + 64 + 4;
pub const IMU_CALIBRATION_LEN: usize = 64;
/// 8 + 8 + 12 + 8 + 64
pub const PV_CALIBRATION_LEN: usize = 100;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no calibration exists for {0:?}")]
    Unsupported(StreamPort),
    #[error("calibration blob for {port:?} is {got} bytes, expected {expected}")]
    BlobLength { port: StreamPort, expected: usize, got: usize },
    #[error("LUT data length {got} does not match {width}x{height}x2")]
    LutLength { width: usize, height: usize, got: usize },
    #[error("focal length components must be nonzero")]
    ZeroFocal,
}

/// Per-pixel map from image coordinates to (x, y) on the camera unit plane.
/// Stored row-major, (x, y) pair innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Uv2XyLut {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Uv2XyLut {
    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Uv2XyLut, CalibrationError> {
        if data.len() != width * height * 2 {
            return Err(CalibrationError::LutLength { width, height, got: data.len() });
        }
        Ok(Uv2XyLut { width, height, data })
    }

    pub fn zeroed(width: usize, height: usize) -> Uv2XyLut {
        Uv2XyLut { width, height, data: vec![0.0; width * height * 2] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Unit-plane coordinates for pixel (u, v).
    #[inline]
    pub fn xy(&self, u: usize, v: usize) -> (f32, f32) {
        let o = (v * self.width + u) * 2;
        (self.data[o], self.data[o + 1])
    }

    #[inline]
    pub fn set_xy(&mut self, u: usize, v: usize, x: f32, y: f32) {
        let o = (v * self.width + u) * 2;
        self.data[o] = x;
        self.data[o + 1] = y;
    }
}

fn put_lut(out: &mut Vec<u8>, lut: &Uv2XyLut) {
    for v in &lut.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn get_lut(bytes: &[u8], width: usize, height: usize) -> Uv2XyLut {
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Uv2XyLut { width, height, data }
}

fn put_mat4(out: &mut Vec<u8>, m: &[[f32; 4]; 4]) {
    for v in m.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn get_mat4(bytes: &[u8]) -> [[f32; 4]; 4] {
    let mut m = [[0f32; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            let o = (r * 4 + c) * 4;
            m[r][c] = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct VlcCalibration {
    pub uv2xy: Uv2XyLut,
    pub extrinsics: [[f32; 4]; 4],
}

impl VlcCalibration {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(VLC_CALIBRATION_LEN);
        put_lut(&mut out, &self.uv2xy);
        put_mat4(&mut out, &self.extrinsics);
        debug_assert_eq!(out.len(), VLC_CALIBRATION_LEN);
        out
    }

    pub fn parse(blob: &[u8]) -> Result<VlcCalibration, CalibrationError> {
        if blob.len() != VLC_CALIBRATION_LEN {
            return Err(CalibrationError::BlobLength {
                port: StreamPort::VlcLeftfront,
                expected: VLC_CALIBRATION_LEN,
                got: blob.len(),
            });
        }
        let lut_len = VLC_LUT_WIDTH * VLC_LUT_HEIGHT * 2 * 4;
        Ok(VlcCalibration {
            uv2xy: get_lut(&blob[..lut_len], VLC_LUT_WIDTH, VLC_LUT_HEIGHT),
            extrinsics: get_mat4(&blob[lut_len..]),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthCalibration {
    pub uv2xy: Uv2XyLut,
    pub extrinsics: [[f32; 4]; 4],
    /// Depth units per meter.
    pub scale: f32,
}

impl DepthCalibration {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(DEPTH_CALIBRATION_LEN);
        put_lut(&mut out, &self.uv2xy);
        put_mat4(&mut out, &self.extrinsics);
        out.extend_from_slice(&self.scale.to_le_bytes());
        debug_assert_eq!(out.len(), DEPTH_CALIBRATION_LEN);
        out
    }

    pub fn parse(blob: &[u8]) -> Result<DepthCalibration, CalibrationError> {
        if blob.len() != DEPTH_CALIBRATION_LEN {
            return Err(CalibrationError::BlobLength {
                port: StreamPort::DepthLongthrow,
                expected: DEPTH_CALIBRATION_LEN,
                got: blob.len(),
            });
        }
        let lut_len = DEPTH_LUT_WIDTH * DEPTH_LUT_HEIGHT * 2 * 4;
        Ok(DepthCalibration {
            uv2xy: get_lut(&blob[..lut_len], DEPTH_LUT_WIDTH, DEPTH_LUT_HEIGHT),
            extrinsics: get_mat4(&blob[lut_len..lut_len + 64]),
            scale: f32::from_le_bytes(blob[lut_len + 64..].try_into().unwrap()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuCalibration {
    pub extrinsics: [[f32; 4]; 4],
}

impl ImuCalibration {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(IMU_CALIBRATION_LEN);
        put_mat4(&mut out, &self.extrinsics);
        out
    }

    pub fn parse(blob: &[u8]) -> Result<ImuCalibration, CalibrationError> {
        if blob.len() != IMU_CALIBRATION_LEN {
            return Err(CalibrationError::BlobLength {
                port: StreamPort::ImuAccel,
                expected: IMU_CALIBRATION_LEN,
                got: blob.len(),
            });
        }
        Ok(ImuCalibration { extrinsics: get_mat4(blob) })
    }
}

/// PV intrinsics: pinhole focal/principal, Brown-Conrady distortion
/// coefficients, and an opaque 4x4 projection matrix that is stored and
/// round-tripped verbatim, not interpreted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvCalibration {
    pub focal: [f32; 2],
    pub principal: [f32; 2],
    pub radial: [f32; 3],
    pub tangential: [f32; 2],
    pub projection: [[f32; 4]; 4],
}

impl PvCalibration {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PV_CALIBRATION_LEN);
        for v in self.focal.iter().chain(&self.principal).chain(&self.radial).chain(&self.tangential)
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_mat4(&mut out, &self.projection);
        debug_assert_eq!(out.len(), PV_CALIBRATION_LEN);
        out
    }

    pub fn parse(blob: &[u8]) -> Result<PvCalibration, CalibrationError> {
        if blob.len() != PV_CALIBRATION_LEN {
            return Err(CalibrationError::BlobLength {
                port: StreamPort::Pv,
                expected: PV_CALIBRATION_LEN,
                got: blob.len(),
            });
        }
        let f = |o: usize| f32::from_le_bytes(blob[o..o + 4].try_into().unwrap());
        Ok(PvCalibration {
            focal: [f(0), f(4)],
            principal: [f(8), f(12)],
            radial: [f(16), f(20), f(24)],
            tangential: [f(28), f(32)],
            projection: get_mat4(&blob[36..]),
        })
    }
}

/// Any sensor's Mode 2 payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Calibration {
    Vlc(VlcCalibration),
    Depth(DepthCalibration),
    Imu(ImuCalibration),
    Pv(PvCalibration),
}

impl Calibration {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Calibration::Vlc(c) => c.encode(),
            Calibration::Depth(c) => c.encode(),
            Calibration::Imu(c) => c.encode(),
            Calibration::Pv(c) => c.encode(),
        }
    }
}

/// Size of the Mode 2 blob a port serves. The magnetometer has none.
pub fn calibration_blob_len(port: StreamPort) -> Result<usize, CalibrationError> {
    match port {
        p if p.is_vlc() => Ok(VLC_CALIBRATION_LEN),
        StreamPort::DepthLongthrow => Ok(DEPTH_CALIBRATION_LEN),
        StreamPort::ImuAccel | StreamPort::ImuGyro => Ok(IMU_CALIBRATION_LEN),
        StreamPort::Pv => Ok(PV_CALIBRATION_LEN),
        other => Err(CalibrationError::Unsupported(other)),
    }
}

/// Parse the Mode 2 blob received from `port`.
pub fn parse_calibration(port: StreamPort, blob: &[u8]) -> Result<Calibration, CalibrationError> {
    let expected = calibration_blob_len(port)?;
    if blob.len() != expected {
        return Err(CalibrationError::BlobLength { port, expected, got: blob.len() });
    }
    match port {
        p if p.is_vlc() => Ok(Calibration::Vlc(VlcCalibration::parse(blob)?)),
        StreamPort::DepthLongthrow => Ok(Calibration::Depth(DepthCalibration::parse(blob)?)),
        StreamPort::ImuAccel | StreamPort::ImuGyro => Ok(Calibration::Imu(ImuCalibration::parse(blob)?)),
        StreamPort::Pv => Ok(Calibration::Pv(PvCalibration::parse(blob)?)),
        _ => unreachable!(),
    }
}

pub const IDENTITY_EXTRINSICS: [[f32; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

/// Ideal pinhole LUT: `uv2xy[v][u] = ((u - cx)/fx, (v - cy)/fy)`.
pub fn synth_pinhole_lut(
    width: usize,
    height: usize,
    fx: f32,
    fy: f32,
    cx: f32,
    cy: f32,
) -> Result<Uv2XyLut, CalibrationError> {
    if fx == 0.0 || fy == 0.0 {
        return Err(CalibrationError::ZeroFocal);
    }
    let mut lut = Uv2XyLut::zeroed(width, height);
    for v in 0..height {
        for u in 0..width {
            lut.set_xy(u, v, (u as f32 - cx) / fx, (v as f32 - cy) / fy);
        }
    }
    Ok(lut)
}

/// Ideal pinhole VLC calibration with identity extrinsics.
pub fn synth_pinhole_vlc(fx: f32, fy: f32, cx: f32, cy: f32) -> Result<VlcCalibration, CalibrationError> {
    Ok(VlcCalibration {
        uv2xy: synth_pinhole_lut(VLC_LUT_WIDTH, VLC_LUT_HEIGHT, fx, fy, cx, cy)?,
        extrinsics: IDENTITY_EXTRINSICS,
    })
}

/// Ideal pinhole depth calibration with identity extrinsics and scale 1000
/// (depth is in millimeters, so 1000 units per meter).
pub fn synth_pinhole_depth(fx: f32, fy: f32, cx: f32, cy: f32) -> Result<DepthCalibration, CalibrationError> {
    Ok(DepthCalibration {
        uv2xy: synth_pinhole_lut(DEPTH_LUT_WIDTH, DEPTH_LUT_HEIGHT, fx, fy, cx, cy)?,
        extrinsics: IDENTITY_EXTRINSICS,
        scale: 1000.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn blob_sizes() {
        assert_eq!(VLC_CALIBRATION_LEN, 2_457_664);
        assert_eq!(DEPTH_CALIBRATION_LEN, 737_348);
        assert_eq!(IMU_CALIBRATION_LEN, 64);
        assert_eq!(PV_CALIBRATION_LEN, 100);
        assert_eq!(calibration_blob_len(StreamPort::VlcRightright).unwrap(), 2_457_664);
        assert_eq!(calibration_blob_len(StreamPort::DepthLongthrow).unwrap(), 737_348);
        assert!(matches!(
            calibration_blob_len(StreamPort::ImuMag),
            Err(CalibrationError::Unsupported(StreamPort::ImuMag))
        ));
        assert!(matches!(
            calibration_blob_len(StreamPort::Microphone),
            Err(CalibrationError::Unsupported(_))
        ));
    }

    fn rand_mat(rng: &mut impl Rng) -> [[f32; 4]; 4] {
        let mut m = [[0f32; 4]; 4];
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.random_range(-10.0..10.0);
            }
        }
        m
    }

    #[test]
    fn byte_exact_roundtrips_on_random_data() {
        let mut rng = StdRng::seed_from_u64(7);

        let vlc = VlcCalibration {
            uv2xy: Uv2XyLut::from_vec(
                VLC_LUT_WIDTH,
                VLC_LUT_HEIGHT,
                (0..VLC_LUT_WIDTH * VLC_LUT_HEIGHT * 2)
                    .map(|_| rng.random_range(-2.0f32..2.0))
                    .collect(),
            )
            .unwrap(),
            extrinsics: rand_mat(&mut rng),
        };
        let blob = vlc.encode();
        assert_eq!(blob.len(), VLC_CALIBRATION_LEN);
        assert_eq!(VlcCalibration::parse(&blob).unwrap(), vlc);
        assert_eq!(VlcCalibration::parse(&blob).unwrap().encode(), blob);

        let depth = DepthCalibration {
            uv2xy: Uv2XyLut::from_vec(
                DEPTH_LUT_WIDTH,
                DEPTH_LUT_HEIGHT,
                (0..DEPTH_LUT_WIDTH * DEPTH_LUT_HEIGHT * 2)
                    .map(|_| rng.random_range(-2.0f32..2.0))
                    .collect(),
            )
            .unwrap(),
            extrinsics: rand_mat(&mut rng),
            scale: 1000.0,
        };
        let blob = depth.encode();
        assert_eq!(blob.len(), DEPTH_CALIBRATION_LEN);
        assert_eq!(DepthCalibration::parse(&blob).unwrap(), depth);

        let imu = ImuCalibration { extrinsics: rand_mat(&mut rng) };
        let blob = imu.encode();
        assert_eq!(blob.len(), IMU_CALIBRATION_LEN);
        assert_eq!(ImuCalibration::parse(&blob).unwrap(), imu);

        let pv = PvCalibration {
            focal: [580.0, 580.5],
            principal: [320.25, 240.75],
            radial: [0.1, -0.05, 0.001],
            tangential: [0.0003, -0.0007],
            projection: rand_mat(&mut rng),
        };
        let blob = pv.encode();
        assert_eq!(blob.len(), PV_CALIBRATION_LEN);
        assert_eq!(PvCalibration::parse(&blob).unwrap(), pv);
    }

    #[test]
    fn parse_rejects_wrong_length() {
        assert!(matches!(
            parse_calibration(StreamPort::Pv, &[0u8; 99]),
            Err(CalibrationError::BlobLength { expected: 100, got: 99, .. })
        ));
        assert!(matches!(
            parse_calibration(StreamPort::ImuMag, &[0u8; 64]),
            Err(CalibrationError::Unsupported(_))
        ));
    }

    #[test]
    fn pinhole_lut_values() {
        let (fx, fy, cx, cy) = (200.0, 210.0, 320.0, 240.0);
        let lut = synth_pinhole_lut(VLC_LUT_WIDTH, VLC_LUT_HEIGHT, fx, fy, cx, cy).unwrap();
        assert_eq!(lut.xy(320, 240), (0.0, 0.0));
        // One focal length to the right of the principal point is x = 1.
        let (x, y) = lut.xy((cx + fx) as usize, cy as usize);
        assert!((x - 1.0).abs() < 1e-6 && y.abs() < 1e-6);
        let depth = synth_pinhole_depth(fx, fy, 160.0, 144.0).unwrap();
        assert_eq!(depth.scale, 1000.0);
    }

    #[test]
    fn zero_focal_is_rejected() {
        assert!(matches!(synth_pinhole_lut(8, 8, 0.0, 1.0, 0.0, 0.0), Err(CalibrationError::ZeroFocal)));
    }
}
