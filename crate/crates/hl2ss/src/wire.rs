//! Common data frame layout and the incremental unpacking FSM.
//!
//! Every stream port transfers the same frame structure, little-endian:
//!
//! ```text
//! ┌──────────────┬───────────────┬─────────────┬────────────────────┐
//! │ Timestamp    │ Payload size  │ Payload     │ Pose (optional)    │
//! │ u64, 8 bytes │ u32, 4 bytes  │ size bytes  │ 4x4 f32, 64 bytes  │
//! └──────────────┴───────────────┴─────────────┴────────────────────┘
//! ```
//!
//! Whether the pose trailer is present is fixed for the whole session by the
//! stream operating mode (Mode 1 carries it on every frame, Mode 0 never),
//! so [`FrameUnpacker`] is constructed with `expect_pose` and never switches.
//!
//! Timestamps count hundreds of nanoseconds in a shared monotonic domain, so
//! frames from different streams can be correlated directly.

use thiserror::Error;

/// Fixed part of every frame: u64 timestamp + u32 payload size.
pub const FRAME_HEADER_LEN: usize = 12;
/// Wire length of the optional pose trailer.
pub const POSE_LEN: usize = 64;
/// Default sanity cap on the payload-size field. A declared size above this
/// almost certainly means the parser has desynchronized; there is no resync
/// marker in the format, so the session must abort.
pub const DEFAULT_MAX_PAYLOAD: usize = 64 * 1024 * 1024;

/// Ticks per second of the timestamp domain (hundreds of nanoseconds).
pub const TICKS_PER_SECOND: u64 = 10_000_000;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("pose trailer requested but the frame carries no pose")]
    MissingPose,
    #[error("declared payload size {declared} exceeds the sanity cap of {cap} bytes")]
    OversizedPayload { declared: u32, cap: usize },
    #[error("unpacker previously hit a protocol error; the session must be torn down")]
    Poisoned,
}

/// Monotonic timestamp in hundreds of nanoseconds (shared QPC-like domain).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn from_secs_f64(secs: f64) -> Timestamp {
        Timestamp((secs * TICKS_PER_SECOND as f64).round() as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_SECOND as f64
    }

    /// Absolute distance to another timestamp, in ticks.
    pub fn distance(self, other: Timestamp) -> u64 {
        self.0.abs_diff(other.0)
    }
}

/// Device pose as a row-major 4x4 float matrix.
///
/// A valid pose has 1 as its last element; when tracking is lost the server
/// still sends the 64-byte trailer but the last element is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose(pub [[f32; 4]; 4]);

impl Pose {
    pub const IDENTITY: Pose = Pose([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]);

    /// The all-zero matrix used when tracking is lost.
    pub const INVALID: Pose = Pose([[0.0; 4]; 4]);

    /// True iff the last element of the matrix is 1.
    pub fn is_valid(&self) -> bool {
        self.0[3][3] == 1.0
    }

    pub fn to_bytes(&self) -> [u8; POSE_LEN] {
        let mut out = [0u8; POSE_LEN];
        for (i, v) in self.0.iter().flatten().enumerate() {
            out[i * 4..i * 4 + 4].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8; POSE_LEN]) -> Pose {
        let mut m = [[0f32; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                let o = (r * 4 + c) * 4;
                m[r][c] = f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
            }
        }
        Pose(m)
    }
}

/// True iff the last element of the matrix is 1.
pub fn pose_is_valid(p: &Pose) -> bool {
    p.is_valid()
}

/// One unit of transfer: timestamp, opaque payload, optional pose.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFrame {
    pub timestamp: Timestamp,
    pub payload: Vec<u8>,
    pub pose: Option<Pose>,
}

impl DataFrame {
    pub fn new(timestamp: Timestamp, payload: Vec<u8>, pose: Option<Pose>) -> DataFrame {
        DataFrame { timestamp, payload, pose }
    }

    /// Serialized length for the given pose setting.
    pub fn wire_len(&self, include_pose: bool) -> usize {
        FRAME_HEADER_LEN + self.payload.len() + if include_pose { POSE_LEN } else { 0 }
    }

    /// True iff the frame has a pose and its last element is 1.
    pub fn is_valid_pose(&self) -> bool {
        self.pose.as_ref().is_some_and(Pose::is_valid)
    }
}

/// Serialize a frame. `include_pose` must match the session mode; it is an
/// error to request a pose trailer for a frame that has none.
pub fn encode_frame(frame: &DataFrame, include_pose: bool) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(frame.wire_len(include_pose));
    encode_frame_into(frame, include_pose, &mut out)?;
    Ok(out)
}

/// Serialize a frame, appending to `out`. Used on send paths to reuse buffers.
pub fn encode_frame_into(
    frame: &DataFrame,
    include_pose: bool,
    out: &mut Vec<u8>,
) -> Result<(), WireError> {
    let pose = match (include_pose, frame.pose.as_ref()) {
        (false, _) => None,
        (true, Some(p)) => Some(p),
        (true, None) => return Err(WireError::MissingPose),
    };
    out.extend_from_slice(&frame.timestamp.0.to_le_bytes());
    out.extend_from_slice(&(frame.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&frame.payload);
    if let Some(p) = pose {
        out.extend_from_slice(&p.to_bytes());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnpackState {
    WantHeader,
    WantPayload { timestamp: Timestamp, size: usize },
    WantPose { timestamp: Timestamp },
}

/// Incremental frame parser.
///
/// Accepts arbitrarily chunked input and emits frames in arrival order; a
/// frame is only emitted once all of its bytes are in. The output over any
/// chunking of a byte stream equals the single-shot parse of the whole
/// stream.
#[derive(Debug)]
pub struct FrameUnpacker {
    expect_pose: bool,
    max_payload: usize,
    state: UnpackState,
    buf: Vec<u8>,
    // Payload captured while waiting for the pose trailer.
    pending_payload: Vec<u8>,
    poisoned: bool,
}

impl FrameUnpacker {
    pub fn new(expect_pose: bool) -> FrameUnpacker {
        FrameUnpacker::with_max_payload(expect_pose, DEFAULT_MAX_PAYLOAD)
    }

    pub fn with_max_payload(expect_pose: bool, max_payload: usize) -> FrameUnpacker {
        FrameUnpacker {
            expect_pose,
            max_payload,
            state: UnpackState::WantHeader,
            buf: Vec::new(),
            pending_payload: Vec::new(),
            poisoned: false,
        }
    }

    pub fn expect_pose(&self) -> bool {
        self.expect_pose
    }

    /// True when bytes of an incomplete frame are buffered. Used to tell a
    /// clean end-of-stream apart from a truncation mid-frame.
    pub fn has_partial(&self) -> bool {
        !self.buf.is_empty() || self.state != UnpackState::WantHeader
    }

    /// Feed a chunk, returning every frame completed by it.
    pub fn feed(&mut self, chunk: &[u8]) -> Result<Vec<DataFrame>, WireError> {
        if self.poisoned {
            return Err(WireError::Poisoned);
        }
        self.buf.extend_from_slice(chunk);
        let mut frames = Vec::new();
        let mut pos = 0usize;
        loop {
            let avail = self.buf.len() - pos;
            match self.state {
                UnpackState::WantHeader => {
                    if avail < FRAME_HEADER_LEN {
                        break;
                    }
                    let ts = u64::from_le_bytes(self.buf[pos..pos + 8].try_into().unwrap());
                    let size = u32::from_le_bytes(self.buf[pos + 8..pos + 12].try_into().unwrap());
                    if size as usize > self.max_payload {
                        self.poisoned = true;
                        self.buf.drain(..pos);
                        return Err(WireError::OversizedPayload {
                            declared: size,
                            cap: self.max_payload,
                        });
                    }
                    pos += FRAME_HEADER_LEN;
                    self.state = UnpackState::WantPayload {
                        timestamp: Timestamp(ts),
                        size: size as usize,
                    };
                }
                UnpackState::WantPayload { timestamp, size } => {
                    if avail < size {
                        break;
                    }
                    let payload = self.buf[pos..pos + size].to_vec();
                    pos += size;
                    if self.expect_pose {
                        self.pending_payload = payload;
                        self.state = UnpackState::WantPose { timestamp };
                    } else {
                        frames.push(DataFrame::new(timestamp, payload, None));
                        self.state = UnpackState::WantHeader;
                    }
                }
                UnpackState::WantPose { timestamp } => {
                    if avail < POSE_LEN {
                        break;
                    }
                    let pose_bytes: &[u8; POSE_LEN] =
                        self.buf[pos..pos + POSE_LEN].try_into().unwrap();
                    let pose = Pose::from_bytes(pose_bytes);
                    pos += POSE_LEN;
                    frames.push(DataFrame::new(
                        timestamp,
                        std::mem::take(&mut self.pending_payload),
                        Some(pose),
                    ));
                    self.state = UnpackState::WantHeader;
                }
            }
        }
        self.buf.drain(..pos);
        Ok(frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse_whole(bytes: &[u8], expect_pose: bool) -> Vec<DataFrame> {
        let mut u = FrameUnpacker::new(expect_pose);
        let frames = u.feed(bytes).unwrap();
        assert!(!u.has_partial());
        frames
    }

    #[test]
    fn empty_frame_is_twelve_zero_bytes() {
        let f = DataFrame::new(Timestamp(0), vec![], None);
        assert_eq!(encode_frame(&f, false).unwrap(), vec![0u8; 12]);
    }

    #[test]
    fn single_byte_payload_layout() {
        let f = DataFrame::new(Timestamp(1), vec![0xAB], None);
        assert_eq!(
            encode_frame(&f, false).unwrap(),
            vec![0x01, 0, 0, 0, 0, 0, 0, 0, 0x01, 0, 0, 0, 0xAB]
        );
    }

    #[test]
    fn pose_frame_length() {
        let f = DataFrame::new(Timestamp(5), vec![0u8; 2604], Some(Pose::IDENTITY));
        assert_eq!(encode_frame(&f, true).unwrap().len(), 2680);
    }

    #[test]
    fn timestamp_is_little_endian() {
        let f = DataFrame::new(Timestamp(0x0102030405060708), vec![], None);
        let bytes = encode_frame(&f, false).unwrap();
        assert_eq!(&bytes[..8], &[0x08, 0x07, 0x06, 0x05, 0x04, 0x03, 0x02, 0x01]);
    }

    #[test]
    fn missing_pose_is_an_error() {
        let f = DataFrame::new(Timestamp(0), vec![], None);
        assert!(matches!(encode_frame(&f, true), Err(WireError::MissingPose)));
    }

    #[test]
    fn pose_validity() {
        assert!(Pose::IDENTITY.is_valid());
        assert!(!Pose::INVALID.is_valid());
        let mut m = Pose::IDENTITY;
        m.0[3][3] = 0.0;
        assert!(!pose_is_valid(&m));
    }

    #[test]
    fn header_split_across_chunks() {
        let f = DataFrame::new(Timestamp(42), vec![1, 2, 3], None);
        let bytes = encode_frame(&f, false).unwrap();
        let mut u = FrameUnpacker::new(false);
        assert_eq!(u.feed(&bytes[..5]).unwrap(), vec![]);
        assert_eq!(u.feed(&bytes[5..12]).unwrap(), vec![]);
        let frames = u.feed(&bytes[12..]).unwrap();
        assert_eq!(frames, vec![f]);
    }

    #[test]
    fn two_frames_in_one_chunk() {
        let a = DataFrame::new(Timestamp(1), vec![9; 7], None);
        let b = DataFrame::new(Timestamp(2), vec![], None);
        let mut bytes = encode_frame(&a, false).unwrap();
        bytes.extend(encode_frame(&b, false).unwrap());
        let mut u = FrameUnpacker::new(false);
        assert_eq!(u.feed(&bytes).unwrap(), parse_whole(&bytes, false));
        assert_eq!(parse_whole(&bytes, false), vec![a, b]);
    }

    #[test]
    fn empty_chunk_changes_nothing() {
        let mut u = FrameUnpacker::new(true);
        assert_eq!(u.feed(&[]).unwrap(), vec![]);
        assert!(!u.has_partial());
    }

    #[test]
    fn oversized_payload_poisons_the_unpacker() {
        let mut u = FrameUnpacker::with_max_payload(false, 16);
        let mut bytes = vec![0u8; 8];
        bytes.extend_from_slice(&17u32.to_le_bytes());
        assert!(matches!(
            u.feed(&bytes),
            Err(WireError::OversizedPayload { declared: 17, cap: 16 })
        ));
        assert!(matches!(u.feed(&[]), Err(WireError::Poisoned)));
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        prop::array::uniform4(prop::array::uniform4(-1000f32..1000f32)).prop_map(Pose)
    }

    fn arb_frame(with_pose: bool) -> impl Strategy<Value = DataFrame> {
        (
            any::<u64>(),
            prop::collection::vec(any::<u8>(), 0..256),
            arb_pose(),
        )
            .prop_map(move |(ts, payload, pose)| {
                DataFrame::new(Timestamp(ts), payload, with_pose.then_some(pose))
            })
    }

    proptest! {
        #[test]
        fn roundtrip_without_pose(frames in prop::collection::vec(arb_frame(false), 1..20)) {
            let mut bytes = Vec::new();
            for f in &frames {
                encode_frame_into(f, false, &mut bytes).unwrap();
            }
            prop_assert_eq!(parse_whole(&bytes, false), frames);
        }

        #[test]
        fn roundtrip_with_pose(frames in prop::collection::vec(arb_frame(true), 1..20)) {
            let mut bytes = Vec::new();
            for f in &frames {
                encode_frame_into(f, true, &mut bytes).unwrap();
            }
            prop_assert_eq!(parse_whole(&bytes, true), frames);
        }

        #[test]
        fn chunking_invariance(
            frames in prop::collection::vec(arb_frame(true), 1..10),
            cuts in prop::collection::vec(1usize..64, 0..32),
        ) {
            let mut bytes = Vec::new();
            for f in &frames {
                encode_frame_into(f, true, &mut bytes).unwrap();
            }
            let mut u = FrameUnpacker::new(true);
            let mut out = Vec::new();
            let mut rest: &[u8] = &bytes;
            for cut in cuts {
                let n = cut.min(rest.len());
                out.extend(u.feed(&rest[..n]).unwrap());
                rest = &rest[n..];
            }
            out.extend(u.feed(rest).unwrap());
            prop_assert_eq!(out, parse_whole(&bytes, true));
        }
    }
}
