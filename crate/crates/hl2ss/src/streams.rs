//! Stream identities, operating modes, configuration blobs, and the payload
//! schemas for IMU batches and Spatial Input.
//!
//! Each stream lives on a fixed TCP port. Before streaming begins the client
//! sends one small configuration blob whose shape depends on the port:
//!
//! ```text
//! RM VLC / PV:   mode u8 | width u16 | height u16 | fps u8 | profile u8 | bitrate u32   (11 B)
//! RM Depth/IMU:  mode u8                                                                 (1 B)
//! Microphone:    audio preset u8                                                         (1 B)
//! Spatial Input: (nothing)
//! ```
//!
//! All integers are little-endian.

use crate::wire::Timestamp;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("port {0:?} is not a data stream")]
    NotAStream(StreamPort),
    #[error("port {port:?} expects a {expected} configuration")]
    ConfigType { port: StreamPort, expected: &'static str },
    #[error("mode {mode:?} is not supported by {port:?}")]
    UnsupportedMode { port: StreamPort, mode: StreamMode },
    #[error("RM VLC streams are fixed at 640x480 @ 30 fps, got {width}x{height} @ {framerate}")]
    InvalidVlcFormat { width: u16, height: u16, framerate: u8 },
    #[error("PV mode {width}x{height} @ {framerate} is not in the configured whitelist")]
    PvModeNotWhitelisted { width: u16, height: u16, framerate: u8 },
    #[error("unknown stream mode byte {0}")]
    InvalidModeByte(u8),
    #[error("unknown encoding profile byte {0}")]
    InvalidProfileByte(u8),
    #[error("{port:?} batches carry {expected} samples, got {got}")]
    BatchSize { port: StreamPort, expected: usize, got: usize },
    #[error("IMU samples in one batch must share the frame timestamp")]
    MixedBatchTimestamps,
    #[error("payload length {got} does not match the expected {expected} bytes")]
    PayloadLength { expected: usize, got: usize },
    #[error("configuration blob is {got} bytes, expected {expected}")]
    ConfigLength { expected: usize, got: usize },
    #[error("bad whitelist entry on line {line}: {text:?} (expected WxH@FPS)")]
    WhitelistParse { line: usize, text: String },
}

/// TCP port assignments. The numeric values are the wire contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum StreamPort {
    VlcLeftfront = 3800,
    VlcLeftleft = 3801,
    VlcRightfront = 3802,
    VlcRightright = 3803,
    DepthLongthrow = 3805,
    ImuAccel = 3806,
    ImuGyro = 3807,
    ImuMag = 3808,
    Control = 3809,
    Pv = 3810,
    Microphone = 3811,
    SpatialInput = 3812,
    UnityIpc = 3816,
}

impl StreamPort {
    /// Every port the server exposes, data streams plus control and IPC.
    pub const ALL: [StreamPort; 13] = [
        StreamPort::VlcLeftfront,
        StreamPort::VlcLeftleft,
        StreamPort::VlcRightfront,
        StreamPort::VlcRightright,
        StreamPort::DepthLongthrow,
        StreamPort::ImuAccel,
        StreamPort::ImuGyro,
        StreamPort::ImuMag,
        StreamPort::Control,
        StreamPort::Pv,
        StreamPort::Microphone,
        StreamPort::SpatialInput,
        StreamPort::UnityIpc,
    ];

    /// The eleven data stream ports.
    pub const STREAMS: [StreamPort; 11] = [
        StreamPort::VlcLeftfront,
        StreamPort::VlcLeftleft,
        StreamPort::VlcRightfront,
        StreamPort::VlcRightright,
        StreamPort::DepthLongthrow,
        StreamPort::ImuAccel,
        StreamPort::ImuGyro,
        StreamPort::ImuMag,
        StreamPort::Pv,
        StreamPort::Microphone,
        StreamPort::SpatialInput,
    ];

    pub fn number(self) -> u16 {
        self as u16
    }

    pub fn from_number(n: u16) -> Option<StreamPort> {
        StreamPort::ALL.into_iter().find(|p| p.number() == n)
    }

    pub fn is_stream(self) -> bool {
        !matches!(self, StreamPort::Control | StreamPort::UnityIpc)
    }

    pub fn is_vlc(self) -> bool {
        matches!(
            self,
            StreamPort::VlcLeftfront
                | StreamPort::VlcLeftleft
                | StreamPort::VlcRightfront
                | StreamPort::VlcRightright
        )
    }

    pub fn is_imu(self) -> bool {
        matches!(self, StreamPort::ImuAccel | StreamPort::ImuGyro | StreamPort::ImuMag)
    }
}

/// Stream operating mode, set once when the stream is opened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum StreamMode {
    /// Continuous transfer of device data.
    Mode0 = 0,
    /// Continuous transfer of device data and pose.
    Mode1 = 1,
    /// Single transfer of calibration data; the server closes afterwards.
    Mode2 = 2,
}

impl StreamMode {
    pub fn from_u8(b: u8) -> Result<StreamMode, StreamError> {
        match b {
            0 => Ok(StreamMode::Mode0),
            1 => Ok(StreamMode::Mode1),
            2 => Ok(StreamMode::Mode2),
            other => Err(StreamError::InvalidModeByte(other)),
        }
    }

    /// Mode 1 frames carry the 64-byte pose trailer.
    pub fn expects_pose(self) -> bool {
        self == StreamMode::Mode1
    }
}

/// Video encoding profile byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum VideoProfile {
    H264Base = 0,
    H264Main = 1,
    H264High = 2,
    HevcMain = 3,
}

impl VideoProfile {
    pub fn from_u8(b: u8) -> Result<VideoProfile, StreamError> {
        match b {
            0 => Ok(VideoProfile::H264Base),
            1 => Ok(VideoProfile::H264Main),
            2 => Ok(VideoProfile::H264High),
            3 => Ok(VideoProfile::HevcMain),
            other => Err(StreamError::InvalidProfileByte(other)),
        }
    }
}

/// AAC bitrate preset byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum AudioProfile {
    Aac12000 = 0,
    Aac16000 = 1,
    Aac20000 = 2,
    Aac24000 = 3,
}

impl AudioProfile {
    pub fn from_u8(b: u8) -> Result<AudioProfile, StreamError> {
        match b {
            0 => Ok(AudioProfile::Aac12000),
            1 => Ok(AudioProfile::Aac16000),
            2 => Ok(AudioProfile::Aac20000),
            3 => Ok(AudioProfile::Aac24000),
            other => Err(StreamError::InvalidProfileByte(other)),
        }
    }

    pub fn bytes_per_second(self) -> u32 {
        match self {
            AudioProfile::Aac12000 => 12000,
            AudioProfile::Aac16000 => 16000,
            AudioProfile::Aac20000 => 20000,
            AudioProfile::Aac24000 => 24000,
        }
    }
}

/// Handshake blob for the RM VLC and PV streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VideoConfig {
    pub mode: StreamMode,
    pub width: u16,
    pub height: u16,
    pub framerate: u8,
    pub profile: VideoProfile,
    pub bitrate: u32,
}

/// Wire length of the video configuration blob.
pub const VIDEO_CONFIG_LEN: usize = 11;

pub const VLC_WIDTH: u16 = 640;
pub const VLC_HEIGHT: u16 = 480;
pub const VLC_FRAMERATE: u8 = 30;

/// Port-specific handshake payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortConfig {
    /// RM VLC and PV.
    Video(VideoConfig),
    /// RM Depth and RM IMU.
    ModeOnly(StreamMode),
    /// Microphone; the stream only supports Mode 0 so no mode byte exists.
    Audio(AudioProfile),
    /// Spatial Input sends nothing.
    Empty,
}

impl PortConfig {
    /// Operating mode the configuration selects. Streams without a mode byte
    /// (microphone, spatial input) always run in Mode 0.
    pub fn mode(&self) -> StreamMode {
        match self {
            PortConfig::Video(v) => v.mode,
            PortConfig::ModeOnly(m) => *m,
            PortConfig::Audio(_) | PortConfig::Empty => StreamMode::Mode0,
        }
    }
}

const MODES_012: &[StreamMode] = &[StreamMode::Mode0, StreamMode::Mode1, StreamMode::Mode2];
const MODES_01: &[StreamMode] = &[StreamMode::Mode0, StreamMode::Mode1];
const MODES_0: &[StreamMode] = &[StreamMode::Mode0];

/// Operating modes supported by each data stream.
pub fn supported_modes(port: StreamPort) -> Result<&'static [StreamMode], StreamError> {
    match port {
        StreamPort::Control | StreamPort::UnityIpc => Err(StreamError::NotAStream(port)),
        StreamPort::ImuMag => Ok(MODES_01),
        StreamPort::Microphone | StreamPort::SpatialInput => Ok(MODES_0),
        _ => Ok(MODES_012),
    }
}

pub fn mode_supported(port: StreamPort, mode: StreamMode) -> bool {
    supported_modes(port).map(|m| m.contains(&mode)).unwrap_or(false)
}

/// Number of handshake bytes the server reads for a port.
pub fn config_wire_len(port: StreamPort) -> Result<usize, StreamError> {
    match port {
        StreamPort::Control | StreamPort::UnityIpc => Err(StreamError::NotAStream(port)),
        p if p.is_vlc() => Ok(VIDEO_CONFIG_LEN),
        StreamPort::Pv => Ok(VIDEO_CONFIG_LEN),
        StreamPort::DepthLongthrow => Ok(1),
        p if p.is_imu() => Ok(1),
        StreamPort::Microphone => Ok(1),
        StreamPort::SpatialInput => Ok(0),
        _ => unreachable!(),
    }
}

fn check_config_kind(port: StreamPort, cfg: &PortConfig) -> Result<(), StreamError> {
    let expected = match port {
        StreamPort::Control | StreamPort::UnityIpc => return Err(StreamError::NotAStream(port)),
        p if p.is_vlc() || p == StreamPort::Pv => "video",
        StreamPort::DepthLongthrow => "mode-only",
        p if p.is_imu() => "mode-only",
        StreamPort::Microphone => "audio",
        StreamPort::SpatialInput => "empty",
        _ => unreachable!(),
    };
    let ok = matches!(
        (expected, cfg),
        ("video", PortConfig::Video(_))
            | ("mode-only", PortConfig::ModeOnly(_))
            | ("audio", PortConfig::Audio(_))
            | ("empty", PortConfig::Empty)
    );
    if ok {
        Ok(())
    } else {
        Err(StreamError::ConfigType { port, expected })
    }
}

/// Serialize the handshake blob for a port, validating the configuration
/// before any bytes are produced.
pub fn encode_config(port: StreamPort, cfg: &PortConfig) -> Result<Vec<u8>, StreamError> {
    check_config_kind(port, cfg)?;
    if !mode_supported(port, cfg.mode()) {
        return Err(StreamError::UnsupportedMode { port, mode: cfg.mode() });
    }
    match cfg {
        PortConfig::Video(v) => {
            if port.is_vlc()
                && (v.width, v.height, v.framerate) != (VLC_WIDTH, VLC_HEIGHT, VLC_FRAMERATE)
            {
                return Err(StreamError::InvalidVlcFormat {
                    width: v.width,
                    height: v.height,
                    framerate: v.framerate,
                });
            }
            let mut out = Vec::with_capacity(VIDEO_CONFIG_LEN);
            out.push(v.mode as u8);
            out.extend_from_slice(&v.width.to_le_bytes());
            out.extend_from_slice(&v.height.to_le_bytes());
            out.push(v.framerate);
            out.push(v.profile as u8);
            out.extend_from_slice(&v.bitrate.to_le_bytes());
            Ok(out)
        }
        PortConfig::ModeOnly(m) => Ok(vec![*m as u8]),
        PortConfig::Audio(p) => Ok(vec![*p as u8]),
        PortConfig::Empty => Ok(Vec::new()),
    }
}

/// Parse a handshake blob. The server side of [`encode_config`].
pub fn decode_config(port: StreamPort, bytes: &[u8]) -> Result<PortConfig, StreamError> {
    let expected = config_wire_len(port)?;
    if bytes.len() != expected {
        return Err(StreamError::ConfigLength { expected, got: bytes.len() });
    }
    match port {
        p if p.is_vlc() || p == StreamPort::Pv => {
            let cfg = VideoConfig {
                mode: StreamMode::from_u8(bytes[0])?,
                width: u16::from_le_bytes([bytes[1], bytes[2]]),
                height: u16::from_le_bytes([bytes[3], bytes[4]]),
                framerate: bytes[5],
                profile: VideoProfile::from_u8(bytes[6])?,
                bitrate: u32::from_le_bytes([bytes[7], bytes[8], bytes[9], bytes[10]]),
            };
            Ok(PortConfig::Video(cfg))
        }
        StreamPort::DepthLongthrow => Ok(PortConfig::ModeOnly(StreamMode::from_u8(bytes[0])?)),
        p if p.is_imu() => Ok(PortConfig::ModeOnly(StreamMode::from_u8(bytes[0])?)),
        StreamPort::Microphone => Ok(PortConfig::Audio(AudioProfile::from_u8(bytes[0])?)),
        StreamPort::SpatialInput => Ok(PortConfig::Empty),
        _ => unreachable!(),
    }
}

/// Accepted PV `(width, height, framerate)` triples.
///
/// The device restricts PV capture to a documented set of camera modes; this
/// stand-in list is configurable and defaults to common capture modes. The
/// file format is one `WxH@FPS` entry per line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PvModeWhitelist {
    entries: Vec<(u16, u16, u8)>,
}

impl Default for PvModeWhitelist {
    fn default() -> Self {
        let mut entries = Vec::new();
        for (w, h) in [(1920, 1080), (1280, 720), (640, 360)] {
            for fps in [15, 30] {
                entries.push((w, h, fps));
            }
        }
        PvModeWhitelist { entries }
    }
}

impl PvModeWhitelist {
    pub fn from_entries(entries: Vec<(u16, u16, u8)>) -> PvModeWhitelist {
        PvModeWhitelist { entries }
    }

    pub fn entries(&self) -> &[(u16, u16, u8)] {
        &self.entries
    }

    pub fn contains(&self, width: u16, height: u16, framerate: u8) -> bool {
        self.entries.contains(&(width, height, framerate))
    }

    pub fn check(&self, cfg: &VideoConfig) -> Result<(), StreamError> {
        if self.contains(cfg.width, cfg.height, cfg.framerate) {
            Ok(())
        } else {
            Err(StreamError::PvModeNotWhitelisted {
                width: cfg.width,
                height: cfg.height,
                framerate: cfg.framerate,
            })
        }
    }

    /// Parse the whitelist file format: one `WxH@FPS` per line, `#` comments
    /// and blank lines ignored.
    pub fn parse(text: &str) -> Result<PvModeWhitelist, StreamError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            entries.push(Self::parse_entry(line).ok_or_else(|| StreamError::WhitelistParse {
                line: i + 1,
                text: line.to_string(),
            })?);
        }
        Ok(PvModeWhitelist { entries })
    }

    pub fn parse_entry(text: &str) -> Option<(u16, u16, u8)> {
        let (dims, fps) = text.split_once('@')?;
        let (w, h) = dims.split_once('x')?;
        Some((w.trim().parse().ok()?, h.trim().parse().ok()?, fps.trim().parse().ok()?))
    }
}

// ---------------------------------------------------------------------------
// RM IMU batches
// ---------------------------------------------------------------------------

/// One IMU sample: 28 bytes on the wire.
///
/// The frame timestamp is shared by every sample in a batch; the sensor
/// timestamp is per-sample and in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub sensor_timestamp_ns: u64,
    pub frame_timestamp: Timestamp,
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

pub const IMU_SAMPLE_LEN: usize = 28;

pub const IMU_ACCEL_BATCH: usize = 93;
pub const IMU_GYRO_BATCH: usize = 315;
pub const IMU_MAG_BATCH: usize = 11;

/// Samples per data frame for an IMU port.
pub fn imu_batch_size(port: StreamPort) -> Result<usize, StreamError> {
    match port {
        StreamPort::ImuAccel => Ok(IMU_ACCEL_BATCH),
        StreamPort::ImuGyro => Ok(IMU_GYRO_BATCH),
        StreamPort::ImuMag => Ok(IMU_MAG_BATCH),
        other => Err(StreamError::NotAStream(other)),
    }
}

pub fn pack_imu_batch(port: StreamPort, samples: &[ImuSample]) -> Result<Vec<u8>, StreamError> {
    let expected = imu_batch_size(port)?;
    if samples.len() != expected {
        return Err(StreamError::BatchSize { port, expected, got: samples.len() });
    }
    if samples.windows(2).any(|w| w[0].frame_timestamp != w[1].frame_timestamp) {
        return Err(StreamError::MixedBatchTimestamps);
    }
    let mut out = Vec::with_capacity(expected * IMU_SAMPLE_LEN);
    for s in samples {
        out.extend_from_slice(&s.sensor_timestamp_ns.to_le_bytes());
        out.extend_from_slice(&s.frame_timestamp.0.to_le_bytes());
        out.extend_from_slice(&s.x.to_le_bytes());
        out.extend_from_slice(&s.y.to_le_bytes());
        out.extend_from_slice(&s.z.to_le_bytes());
    }
    Ok(out)
}

pub fn unpack_imu_batch(port: StreamPort, payload: &[u8]) -> Result<Vec<ImuSample>, StreamError> {
    let expected = imu_batch_size(port)? * IMU_SAMPLE_LEN;
    if payload.len() != expected {
        return Err(StreamError::PayloadLength { expected, got: payload.len() });
    }
    let samples = payload
        .chunks_exact(IMU_SAMPLE_LEN)
        .map(|c| ImuSample {
            sensor_timestamp_ns: u64::from_le_bytes(c[0..8].try_into().unwrap()),
            frame_timestamp: Timestamp(u64::from_le_bytes(c[8..16].try_into().unwrap())),
            x: f32::from_le_bytes(c[16..20].try_into().unwrap()),
            y: f32::from_le_bytes(c[20..24].try_into().unwrap()),
            z: f32::from_le_bytes(c[24..28].try_into().unwrap()),
        })
        .collect();
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Spatial Input
// ---------------------------------------------------------------------------

/// Head pose as position plus forward/up directions. Up is +Y, forward is
/// -Z; the right direction is cross(up, -forward).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HeadPose {
    pub position: [f32; 3],
    pub forward: [f32; 3],
    pub up: [f32; 3],
}

pub const HEAD_POSE_LEN: usize = 36;

/// Gaze ray; no length is provided.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EyeRay {
    pub origin: [f32; 3],
    pub direction: [f32; 3],
}

pub const EYE_RAY_LEN: usize = 24;

/// One hand joint pose. Quaternion element order is X, Y, Z, W.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HandJoint {
    pub orientation: [f32; 4],
    pub position: [f32; 3],
    pub radius: f32,
    pub accuracy: u32,
}

pub const HAND_JOINT_LEN: usize = 36;
pub const HAND_JOINT_COUNT: usize = 26;
pub const HAND_LEN: usize = HAND_JOINT_COUNT * HAND_JOINT_LEN;

/// One tracked hand: the 26 joints in HandJointKind order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hand {
    pub joints: [HandJoint; HAND_JOINT_COUNT],
}

impl Default for Hand {
    fn default() -> Self {
        Hand { joints: [HandJoint::default(); HAND_JOINT_COUNT] }
    }
}

/// Full Spatial Input payload: 1933 bytes on the wire.
///
/// The low four bits of `valid` gate the head pose, eye ray, left hand, and
/// right hand fields. Fields whose bit is clear are serialized at full size
/// anyway (zero-filled); consumers must ignore their contents.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpatialInputFrame {
    pub valid: u8,
    pub head: HeadPose,
    pub eye: EyeRay,
    pub left: Hand,
    pub right: Hand,
}

pub const SPATIAL_INPUT_LEN: usize = 1 + HEAD_POSE_LEN + EYE_RAY_LEN + 2 * HAND_LEN;

impl SpatialInputFrame {
    pub const VALID_HEAD: u8 = 1 << 0;
    pub const VALID_EYE: u8 = 1 << 1;
    pub const VALID_LEFT: u8 = 1 << 2;
    pub const VALID_RIGHT: u8 = 1 << 3;

    pub fn has_head(&self) -> bool {
        self.valid & Self::VALID_HEAD != 0
    }
    pub fn has_eye(&self) -> bool {
        self.valid & Self::VALID_EYE != 0
    }
    pub fn has_left_hand(&self) -> bool {
        self.valid & Self::VALID_LEFT != 0
    }
    pub fn has_right_hand(&self) -> bool {
        self.valid & Self::VALID_RIGHT != 0
    }
}

fn put_vec3(out: &mut Vec<u8>, v: &[f32; 3]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn get_f32(b: &[u8], off: &mut usize) -> f32 {
    let v = f32::from_le_bytes(b[*off..*off + 4].try_into().unwrap());
    *off += 4;
    v
}

fn get_vec3(b: &[u8], off: &mut usize) -> [f32; 3] {
    [get_f32(b, off), get_f32(b, off), get_f32(b, off)]
}

fn put_hand(out: &mut Vec<u8>, hand: &Hand) {
    for j in &hand.joints {
        for q in &j.orientation {
            out.extend_from_slice(&q.to_le_bytes());
        }
        put_vec3(out, &j.position);
        out.extend_from_slice(&j.radius.to_le_bytes());
        out.extend_from_slice(&j.accuracy.to_le_bytes());
    }
}

fn get_hand(b: &[u8], off: &mut usize) -> Hand {
    let mut hand = Hand::default();
    for j in hand.joints.iter_mut() {
        j.orientation = [get_f32(b, off), get_f32(b, off), get_f32(b, off), get_f32(b, off)];
        j.position = get_vec3(b, off);
        j.radius = get_f32(b, off);
        j.accuracy = u32::from_le_bytes(b[*off..*off + 4].try_into().unwrap());
        *off += 4;
    }
    hand
}

/// Serialize a spatial input frame. Fields whose valid bit is clear are
/// written as zeros regardless of the struct contents.
pub fn pack_spatial_input(frame: &SpatialInputFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(SPATIAL_INPUT_LEN);
    out.push(frame.valid);
    if frame.has_head() {
        put_vec3(&mut out, &frame.head.position);
        put_vec3(&mut out, &frame.head.forward);
        put_vec3(&mut out, &frame.head.up);
    } else {
        out.extend_from_slice(&[0u8; HEAD_POSE_LEN]);
    }
    if frame.has_eye() {
        put_vec3(&mut out, &frame.eye.origin);
        put_vec3(&mut out, &frame.eye.direction);
    } else {
        out.extend_from_slice(&[0u8; EYE_RAY_LEN]);
    }
    for (bit, hand) in [(frame.has_left_hand(), &frame.left), (frame.has_right_hand(), &frame.right)] {
        if bit {
            put_hand(&mut out, hand);
        } else {
            out.extend_from_slice(&[0u8; HAND_LEN]);
        }
    }
    debug_assert_eq!(out.len(), SPATIAL_INPUT_LEN);
    out
}

pub fn unpack_spatial_input(payload: &[u8]) -> Result<SpatialInputFrame, StreamError> {
    if payload.len() != SPATIAL_INPUT_LEN {
        return Err(StreamError::PayloadLength { expected: SPATIAL_INPUT_LEN, got: payload.len() });
    }
    let mut off = 1usize;
    let head = HeadPose {
        position: get_vec3(payload, &mut off),
        forward: get_vec3(payload, &mut off),
        up: get_vec3(payload, &mut off),
    };
    let eye = EyeRay {
        origin: get_vec3(payload, &mut off),
        direction: get_vec3(payload, &mut off),
    };
    let left = get_hand(payload, &mut off);
    let right = get_hand(payload, &mut off);
    debug_assert_eq!(off, SPATIAL_INPUT_LEN);
    Ok(SpatialInputFrame { valid: payload[0], head, eye, left, right })
}
