//! Synthetic device: clock, trajectory, tracking-loss schedule, camera
//! settings, and the deterministic content generators for every stream.
//!
//! All generators are pure functions of the frame index and/or timestamp,
//! so a test that received frame `n` at timestamp `t` can regenerate the
//! exact payload bytes the emulator injected.

use crate::calibration::{
    synth_pinhole_depth, synth_pinhole_vlc, DepthCalibration, PvCalibration, VlcCalibration,
};
use crate::codecs::{DepthAbImage, SigmaMask, DEPTH_HEIGHT, DEPTH_WIDTH};
use crate::raster::{Image, RgbImage};
use crate::streams::{ImuSample, SpatialInputFrame, StreamPort, VideoConfig};
use crate::wire::{Pose, Timestamp, TICKS_PER_SECOND};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Frame rate as a rational number of frames per second, so tick schedules
/// are exact: frame `n` of a `num/den` fps stream is due at
/// `n * 10^7 * den / num` ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cadence {
    pub fps_num: u64,
    pub fps_den: u64,
}

impl Cadence {
    pub fn from_fps(fps: u32) -> Cadence {
        Cadence { fps_num: fps as u64, fps_den: 1 }
    }

    /// Millihertz resolution is plenty for the configurable IMU rates.
    pub fn from_hz(hz: f64) -> Cadence {
        Cadence { fps_num: (hz * 1000.0).round().max(1.0) as u64, fps_den: 1000 }
    }

    /// Microphone blocks: 1024 samples per frame at 48 kHz.
    pub fn microphone() -> Cadence {
        Cadence { fps_num: 48_000, fps_den: 1024 }
    }

    /// Scheduled tick of frame `n`, relative to the stream anchor.
    pub fn ticks_at(&self, n: u64) -> u64 {
        ((n as u128 * TICKS_PER_SECOND as u128 * self.fps_den as u128) / self.fps_num as u128) as u64
    }
}

/// Monotonic synthetic clock in timestamp ticks. The multiplier only speeds
/// up the wall schedule; tick values always reflect nominal simulated time.
#[derive(Debug)]
pub struct Clock {
    start: Instant,
    multiplier: f64,
}

impl Clock {
    pub fn new(multiplier: f64) -> Clock {
        Clock { start: Instant::now(), multiplier }
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn now_ticks(&self) -> u64 {
        (self.start.elapsed().as_secs_f64() * self.multiplier * TICKS_PER_SECOND as f64) as u64
    }

    fn wall_for_ticks(&self, ticks: u64) -> Instant {
        self.start + Duration::from_secs_f64(ticks as f64 / (TICKS_PER_SECOND as f64 * self.multiplier))
    }

    /// Sleep until the wall deadline of `ticks`, in slices so shutdown is
    /// prompt. Returns false when `running` was cleared.
    pub fn sleep_until_ticks(&self, ticks: u64, running: &AtomicBool) -> bool {
        let deadline = self.wall_for_ticks(ticks);
        loop {
            if !running.load(Ordering::Acquire) {
                return false;
            }
            let now = Instant::now();
            if now >= deadline {
                return true;
            }
            std::thread::sleep((deadline - now).min(Duration::from_millis(25)));
        }
    }
}

/// Circular head path: the device orbits the scene origin at a fixed height,
/// always facing the center.
#[derive(Debug, Clone, Copy)]
pub struct Trajectory {
    pub radius: f32,
    pub height: f32,
    pub angular_velocity: f32, // rad/s
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory { radius: 1.5, height: 1.6, angular_velocity: 0.25 }
    }
}

impl Trajectory {
    /// Device pose (rigNode to world) at a timestamp. Orthonormal rotation,
    /// translation in the last column, last row (0,0,0,1).
    pub fn pose_at(&self, t: Timestamp) -> Pose {
        let secs = t.as_secs_f64() as f32;
        let a = self.angular_velocity * secs;
        let (s, c) = a.sin_cos();
        Pose([
            [c, 0.0, s, self.radius * c],
            [0.0, 1.0, 0.0, self.height],
            [-s, 0.0, c, self.radius * s],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    /// Head position / forward / up triple consistent with `pose_at`
    /// (forward is -Z of the device frame, up is +Y).
    pub fn head_at(&self, t: Timestamp) -> ([f32; 3], [f32; 3], [f32; 3]) {
        let m = self.pose_at(t).0;
        let position = [m[0][3], m[1][3], m[2][3]];
        let forward = [-m[0][2], -m[1][2], -m[2][2]];
        let up = [m[0][1], m[1][1], m[2][1]];
        (position, forward, up)
    }
}

/// Simulated-time intervals (in ticks) during which tracking is lost and
/// Mode 1 poses are emitted invalid.
#[derive(Debug, Clone, Default)]
pub struct TrackingSchedule {
    intervals: Vec<(u64, u64)>,
}

impl TrackingSchedule {
    pub fn from_secs(intervals: &[[f64; 2]]) -> TrackingSchedule {
        TrackingSchedule {
            intervals: intervals
                .iter()
                .map(|[a, b]| {
                    (
                        (a * TICKS_PER_SECOND as f64) as u64,
                        (b * TICKS_PER_SECOND as f64) as u64,
                    )
                })
                .collect(),
        }
    }

    pub fn is_tracking(&self, t: Timestamp) -> bool {
        !self.intervals.iter().any(|&(a, b)| t.0 >= a && t.0 < b)
    }
}

/// PV camera settings mutable over the remote configuration port. Values
/// are stored in natural units (the wire transform is already undone).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeviceSettings {
    pub marker_enabled: bool,
    pub focus: [u32; 5],
    pub temporal_denoising: u32,
    pub white_balance_preset: u32,
    pub white_balance_value: u32,
    pub exposure_mode: u32,
    pub exposure_value: u32,
}

/// Everything the port servers share: the clock, pose source, calibration
/// blobs, and the state mutated over the control and IPC ports.
pub struct DeviceModel {
    pub clock: Clock,
    pub trajectory: Trajectory,
    pub tracking: TrackingSchedule,
    pub version: [u16; 4],
    pub settings: Mutex<DeviceSettings>,
    pub scene: Mutex<super::scene::SceneState>,
    vlc_cal: VlcCalibration,
    depth_cal: DepthCalibration,
}

pub const VLC_WIDTH: usize = 640;
pub const VLC_HEIGHT: usize = 480;

impl DeviceModel {
    pub fn new(
        multiplier: f64,
        version: [u16; 4],
        tracking_loss: &[[f64; 2]],
    ) -> DeviceModel {
        DeviceModel {
            clock: Clock::new(multiplier),
            trajectory: Trajectory::default(),
            tracking: TrackingSchedule::from_secs(tracking_loss),
            version,
            settings: Mutex::new(DeviceSettings::default()),
            scene: Mutex::new(super::scene::SceneState::new()),
            vlc_cal: synth_vlc_calibration(),
            depth_cal: synth_depth_calibration(),
        }
    }

    /// Pose trailer for a Mode 1 frame: the trajectory pose, or the invalid
    /// all-zero matrix during a scheduled tracking loss.
    pub fn pose_at(&self, t: Timestamp) -> Pose {
        if self.tracking.is_tracking(t) {
            self.trajectory.pose_at(t)
        } else {
            Pose::INVALID
        }
    }

    pub fn vlc_calibration(&self) -> &VlcCalibration {
        &self.vlc_cal
    }

    pub fn depth_calibration(&self) -> &DepthCalibration {
        &self.depth_cal
    }
}

/// The emulator's VLC cameras are ideal pinholes.
pub fn synth_vlc_calibration() -> VlcCalibration {
    synth_pinhole_vlc(450.0, 450.0, 319.5, 239.5).expect("nonzero focal")
}

/// The emulator's depth camera is an ideal pinhole with scale 1000.
pub fn synth_depth_calibration() -> DepthCalibration {
    synth_pinhole_depth(200.0, 200.0, 159.5, 143.5).expect("nonzero focal")
}

/// PV intrinsics implied by a stream configuration: centered principal
/// point, 0.9 width focal, no distortion.
pub fn synth_pv_calibration(cfg: &VideoConfig) -> PvCalibration {
    let w = cfg.width as f32;
    let h = cfg.height as f32;
    PvCalibration {
        focal: [w * 0.9, w * 0.9],
        principal: [(w - 1.0) / 2.0, (h - 1.0) / 2.0],
        radial: [0.0; 3],
        tangential: [0.0; 2],
        projection: [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
    }
}

// ---------------------------------------------------------------------------
// Content generators, keyed by frame index and/or timestamp
// ---------------------------------------------------------------------------

/// Grayscale test pattern: diagonal gradient with a stripe that advances
/// with the frame index.
pub fn vlc_frame(n: u64) -> Image<u8> {
    let mut img = Image::new(VLC_WIDTH, VLC_HEIGHT);
    let data = img.data_mut();
    for v in 0..VLC_HEIGHT {
        for u in 0..VLC_WIDTH {
            data[v * VLC_WIDTH + u] = ((u + 2 * v) as u64 + 7 * n) as u8;
        }
    }
    img
}

/// RGB test pattern at the configured PV resolution.
pub fn pv_frame(width: usize, height: usize, n: u64) -> RgbImage {
    let mut img = RgbImage::new(width, height);
    for v in 0..height {
        for u in 0..width {
            img.put_pixel(
                u,
                v,
                [
                    (u * 255 / width.max(1)) as u8,
                    (v * 255 / height.max(1)) as u8,
                    (n as usize & 0xFF) as u8,
                ],
            );
        }
    }
    img
}

/// Depth scene: a sloped wall 1-2 m away with a checkerboard AB image and a
/// sigma channel that invalidates a 4-pixel border plus a scattering of
/// interior pixels.
pub fn depth_frame(n: u64) -> (DepthAbImage, SigmaMask) {
    let mut img = DepthAbImage::new();
    let mut mask = SigmaMask::new();
    for v in 0..DEPTH_HEIGHT {
        for u in 0..DEPTH_WIDTH {
            let d = 1000 + ((u * 2 + v * 3) as u64 + 11 * n) % 1024;
            img.depth.put(u, v, d as u16);
            let checker = ((u / 16 + v / 16) % 2) as u16;
            img.ab.put(u, v, checker * 4096 + (u as u16) + ((n % 97) as u16));
            let border = u < 4 || v < 4 || u >= DEPTH_WIDTH - 4 || v >= DEPTH_HEIGHT - 4;
            let speckle = (u * v + n as usize) % 977 == 0;
            if border || speckle {
                mask.0.put(u, v, 0x80);
            }
        }
    }
    (img, mask)
}

/// One IMU batch. The frame timestamp is shared by all samples; sensor
/// timestamps are spaced evenly through the batch period in nanoseconds.
pub fn imu_batch(port: StreamPort, n: u64, frame_ts: Timestamp, cadence: Cadence) -> Vec<ImuSample> {
    let count = crate::streams::imu_batch_size(port).expect("imu port");
    let period_ns = (cadence.ticks_at(n + 1) - cadence.ticks_at(n)) * 100;
    let step_ns = period_ns / count as u64;
    let (scale, bias) = match port {
        StreamPort::ImuAccel => (9.81f32, [0.0, 0.0, 9.81]),
        StreamPort::ImuGyro => (45.0, [0.0; 3]),
        _ => (35.0, [10.0, -5.0, 40.0]),
    };
    (0..count)
        .map(|i| {
            let phase = (n as f32) * 0.37 + (i as f32) * 0.045;
            ImuSample {
                sensor_timestamp_ns: frame_ts.0 * 100 + i as u64 * step_ns,
                frame_timestamp: frame_ts,
                x: bias[0] + scale * phase.sin() * 0.01,
                y: bias[1] + scale * (phase * 1.3).cos() * 0.01,
                z: bias[2] + scale * (phase * 0.7).sin() * 0.01,
            }
        })
        .collect()
}

/// Microphone samples per block and channel count.
pub const AUDIO_SAMPLES: usize = 1024;
pub const AUDIO_CHANNELS: usize = 2;
pub const AUDIO_SAMPLE_RATE: u32 = 48_000;

/// One block of planar stereo f32 audio: two test tones, phase-continuous
/// across blocks.
pub fn audio_block(n: u64) -> Vec<f32> {
    let mut out = Vec::with_capacity(AUDIO_CHANNELS * AUDIO_SAMPLES);
    for (ch, freq) in [440.0f32, 554.365].iter().enumerate() {
        for i in 0..AUDIO_SAMPLES {
            let t = (n as f64 * AUDIO_SAMPLES as f64 + i as f64) / AUDIO_SAMPLE_RATE as f64;
            let v = (2.0 * std::f32::consts::PI as f64 * *freq as f64 * t).sin() as f32;
            out.push(v * if ch == 0 { 0.8 } else { 0.6 });
        }
    }
    out
}

/// Spatial input frame at a timestamp: head pose from the trajectory, gaze
/// along the head forward direction, and both hands tracing small circles.
pub fn spatial_frame(trajectory: &Trajectory, t: Timestamp) -> SpatialInputFrame {
    let (position, forward, up) = trajectory.head_at(t);
    let mut frame = SpatialInputFrame {
        valid: SpatialInputFrame::VALID_HEAD
            | SpatialInputFrame::VALID_EYE
            | SpatialInputFrame::VALID_LEFT
            | SpatialInputFrame::VALID_RIGHT,
        ..SpatialInputFrame::default()
    };
    frame.head.position = position;
    frame.head.forward = forward;
    frame.head.up = up;
    frame.eye.origin = [position[0], position[1] + 0.02, position[2]];
    frame.eye.direction = forward;
    let secs = t.as_secs_f64() as f32;
    for (h, hand) in [&mut frame.left, &mut frame.right].into_iter().enumerate() {
        let side = if h == 0 { -1.0f32 } else { 1.0 };
        for (j, joint) in hand.joints.iter_mut().enumerate() {
            let a = secs * 1.5 + j as f32 * 0.1;
            joint.position = [
                position[0] + side * 0.2 + 0.05 * a.cos(),
                position[1] - 0.3 + 0.01 * j as f32,
                position[2] + 0.3 + 0.05 * a.sin(),
            ];
            joint.orientation = [0.0, 0.0, 0.0, 1.0];
            joint.radius = 0.008 + 0.0002 * j as f32;
            joint.accuracy = (j % 2) as u32;
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cadence_schedules_are_exact() {
        let vlc = Cadence::from_fps(30);
        assert_eq!(vlc.ticks_at(0), 0);
        assert_eq!(vlc.ticks_at(1), 333_333);
        assert_eq!(vlc.ticks_at(3), 1_000_000);
        let deltas: Vec<u64> = (1..100).map(|n| vlc.ticks_at(n) - vlc.ticks_at(n - 1)).collect();
        assert!(deltas.iter().all(|&d| (333_333..=333_334).contains(&d)));

        let depth = Cadence::from_fps(5);
        assert_eq!(depth.ticks_at(1), 2_000_000);
        assert_eq!(depth.ticks_at(5), 10_000_000);

        let mic = Cadence::microphone();
        // 1024/48000 s = 213333.3 ticks
        assert_eq!(mic.ticks_at(1), 213_333);
        assert_eq!(mic.ticks_at(3), 640_000);
    }

    #[test]
    fn trajectory_pose_is_rigid_and_valid() {
        let tr = Trajectory::default();
        let pose = tr.pose_at(Timestamp(12_345_678));
        assert!(pose.is_valid());
        // rotation columns are orthonormal
        let m = pose.0;
        for c in 0..3 {
            let norm: f32 = (0..3).map(|r| m[r][c] * m[r][c]).sum();
            assert!((norm - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn tracking_schedule_gates_pose_validity() {
        let model = DeviceModel::new(1.0, [1, 0, 0, 0], &[[1.0, 2.0]]);
        assert!(model.pose_at(Timestamp(5_000_000)).is_valid());
        assert!(!model.pose_at(Timestamp(15_000_000)).is_valid());
        assert!(model.pose_at(Timestamp(25_000_000)).is_valid());
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(vlc_frame(3), vlc_frame(3));
        assert_eq!(pv_frame(64, 32, 9), pv_frame(64, 32, 9));
        let (d1, m1) = depth_frame(5);
        let (d2, m2) = depth_frame(5);
        assert_eq!(d1, d2);
        assert_eq!(m1, m2);
        assert_eq!(audio_block(2), audio_block(2));
        let c = Cadence::from_hz(12.0);
        assert_eq!(
            imu_batch(StreamPort::ImuAccel, 1, Timestamp(99), c),
            imu_batch(StreamPort::ImuAccel, 1, Timestamp(99), c)
        );
        let tr = Trajectory::default();
        assert_eq!(spatial_frame(&tr, Timestamp(7)), spatial_frame(&tr, Timestamp(7)));
    }

    #[test]
    fn imu_batch_shares_frame_timestamp() {
        let batch = imu_batch(StreamPort::ImuGyro, 4, Timestamp(777), Cadence::from_hz(21.0));
        assert_eq!(batch.len(), 315);
        assert!(batch.iter().all(|s| s.frame_timestamp == Timestamp(777)));
        // strictly increasing sensor timestamps within the batch
        assert!(batch.windows(2).all(|w| w[0].sensor_timestamp_ns < w[1].sensor_timestamp_ns));
    }
}
