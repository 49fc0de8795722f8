//! Session layer: connect to a stream port, send the configuration blob,
//! and receive data frames; Mode 2 calibration download; control and IPC
//! clients.
//!
//! Sessions are blocking and single-owner. A separate [`CloseHandle`] can
//! shut the socket down from the owning context to unblock a pending
//! receive (the multiplexer uses this to stop its source threads).

use crate::calibration::{calibration_blob_len, parse_calibration, Calibration, CalibrationError};
use crate::codecs::{decode_depth_png, CodecError, DepthAbImage, PayloadCodec, RawCodec};
use crate::control::{
    encode_control, encode_ipc, encode_scene, ControlCommand, ControlError, IpcMessage,
    SceneCommand,
};
use crate::mux::{FrameSource, MuxError};
use crate::raster::{Image, RgbImage};
use crate::streams::{
    encode_config, mode_supported, supported_modes, unpack_imu_batch, unpack_spatial_input,
    ImuSample, PortConfig, PvModeWhitelist, SpatialInputFrame, StreamError, StreamMode,
    StreamPort, VideoConfig,
};
use crate::wire::{DataFrame, FrameUnpacker, Pose, Timestamp, WireError};
use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid configuration: {0}")]
    Validation(#[from] StreamError),
    #[error("wire protocol: {0}")]
    Wire(#[from] WireError),
    #[error("control encoding: {0}")]
    Control(#[from] ControlError),
    #[error("calibration: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("server closed the connection during the handshake (configuration rejected?)")]
    HandshakeRejected,
    #[error("stream ended mid-frame")]
    TruncatedStream,
    #[error("server closed the stream")]
    Closed,
    #[error("payload decode failed: {error}")]
    Decode {
        error: CodecError,
        /// The undecoded payload, retained for inspection or re-decoding.
        payload: Vec<u8>,
    },
    #[error("expected a {expected}-byte calibration blob, got {got} before the server closed")]
    TruncatedCalibration { expected: usize, got: usize },
    #[error("server sent {extra} unexpected bytes after the calibration blob")]
    TrailingCalibrationBytes { extra: usize },
    #[error("reply had unexpected length {got}, wanted {expected}")]
    ReplyLength { expected: usize, got: usize },
    #[error("decoded {what} has unexpected shape {got}, wanted {expected}")]
    PayloadShape { what: &'static str, expected: String, got: String },
}

/// Receive chunk size for low-rate streams.
pub const CHUNK_SIZE_LOW: usize = 4096;
/// Receive chunk size for video and depth streams.
pub const CHUNK_SIZE_VIDEO: usize = 65536;

/// Per-session tuning knobs.
#[derive(Debug, Clone)]
pub struct RxOptions {
    /// Socket receive chunk size; 0 picks the per-port default (4096 for
    /// low-rate streams, 65536 for video and depth).
    pub chunk_size: usize,
    /// Optional deadline for each receive; `None` blocks indefinitely.
    pub read_timeout: Option<Duration>,
    /// Accepted PV modes, checked before connecting.
    pub pv_whitelist: PvModeWhitelist,
    pub connect_timeout: Option<Duration>,
}

impl Default for RxOptions {
    fn default() -> Self {
        RxOptions {
            chunk_size: 0,
            read_timeout: None,
            pv_whitelist: PvModeWhitelist::default(),
            connect_timeout: Some(Duration::from_secs(10)),
        }
    }
}

fn default_chunk_size(port: StreamPort) -> usize {
    match port {
        p if p.is_vlc() => CHUNK_SIZE_VIDEO,
        StreamPort::Pv | StreamPort::DepthLongthrow => CHUNK_SIZE_VIDEO,
        _ => CHUNK_SIZE_LOW,
    }
}

fn resolve(host: &str, port: u16) -> std::io::Result<SocketAddr> {
    (host, port)
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, "no address for host"))
}

fn connect(addr: SocketAddr, timeout: Option<Duration>) -> std::io::Result<TcpStream> {
    match timeout {
        Some(t) => TcpStream::connect_timeout(&addr, t),
        None => TcpStream::connect(addr),
    }
}

/// Shuts the session's socket down, unblocking a pending receive.
#[derive(Debug)]
pub struct CloseHandle(TcpStream);

impl CloseHandle {
    pub fn close(&self) {
        let _ = self.0.shutdown(Shutdown::Both);
    }
}

/// One open stream: configuration sent, frames flowing.
#[derive(Debug)]
pub struct RxSession {
    stream: TcpStream,
    port: StreamPort,
    mode: StreamMode,
    unpacker: FrameUnpacker,
    pending: VecDeque<DataFrame>,
    chunk: Vec<u8>,
    delivered: u64,
    last_timestamp: Option<Timestamp>,
}

impl RxSession {
    /// Connect to `host` on the port's canonical TCP port and perform the
    /// configuration handshake.
    pub fn open(host: &str, port: StreamPort, cfg: &PortConfig) -> Result<RxSession, ClientError> {
        let addr = resolve(host, port.number())?;
        Self::open_addr(addr, port, cfg, &RxOptions::default())
    }

    /// [`RxSession::open`] against an explicit socket address (emulators may
    /// listen on offset ports).
    pub fn open_addr(
        addr: SocketAddr,
        port: StreamPort,
        cfg: &PortConfig,
        opts: &RxOptions,
    ) -> Result<RxSession, ClientError> {
        // Validate before any bytes are produced or sent.
        let blob = encode_config(port, cfg)?;
        if let (StreamPort::Pv, PortConfig::Video(v)) = (port, cfg) {
            opts.pv_whitelist.check(v)?;
        }
        let mode = cfg.mode();
        let stream = connect(addr, opts.connect_timeout)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(opts.read_timeout)?;
        let mut session = RxSession {
            stream,
            port,
            mode,
            unpacker: FrameUnpacker::new(mode.expects_pose()),
            pending: VecDeque::new(),
            chunk: vec![
                0u8;
                if opts.chunk_size == 0 { default_chunk_size(port) } else { opts.chunk_size }
            ],
            delivered: 0,
            last_timestamp: None,
        };
        session.stream.write_all(&blob)?;
        Ok(session)
    }

    pub fn port(&self) -> StreamPort {
        self.port
    }

    pub fn mode(&self) -> StreamMode {
        self.mode
    }

    /// Handle that can unblock a pending `get_next_packet` from the owning
    /// context by shutting the socket down.
    pub fn close_handle(&self) -> Result<CloseHandle, ClientError> {
        Ok(CloseHandle(self.stream.try_clone()?))
    }

    /// Block until the next frame. Frames are delivered exactly once, in
    /// stream order; Mode 1 frames carry the pose trailer, Mode 0 frames
    /// never do.
    pub fn get_next_packet(&mut self) -> Result<DataFrame, ClientError> {
        loop {
            if let Some(frame) = self.pending.pop_front() {
                if let Some(last) = self.last_timestamp {
                    if frame.timestamp < last {
                        // Device clocks are outside our control; surface but continue.
                        log::warn!(
                            "{:?}: timestamp went backwards ({} -> {})",
                            self.port,
                            last.0,
                            frame.timestamp.0
                        );
                    }
                }
                self.last_timestamp = Some(frame.timestamp);
                self.delivered += 1;
                return Ok(frame);
            }
            let n = self.stream.read(&mut self.chunk)?;
            if n == 0 {
                return Err(if self.unpacker.has_partial() {
                    ClientError::TruncatedStream
                } else if self.delivered == 0 {
                    ClientError::HandshakeRejected
                } else {
                    ClientError::Closed
                });
            }
            self.pending.extend(self.unpacker.feed(&self.chunk[..n])?);
        }
    }

    /// Close the connection. Dropping the session closes it too; this form
    /// exists for symmetry with `open` and to make the intent explicit.
    pub fn close(self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

impl FrameSource for RxSession {
    fn next_frame(&mut self) -> Result<DataFrame, MuxError> {
        self.get_next_packet().map_err(|e| MuxError::Source(e.to_string()))
    }

    fn interrupter(&self) -> Box<dyn FnOnce() + Send> {
        match self.close_handle() {
            Ok(handle) => Box::new(move || handle.close()),
            Err(_) => Box::new(|| {}),
        }
    }
}

/// Stereo audio block: `channels[c][i]` is sample `i` of channel `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFrame {
    pub channels: [Vec<f32>; 2],
}

/// Payload decoded into the per-port shape.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodedPayload {
    /// 480x640 grayscale.
    Vlc(Image<u8>),
    /// 288x320 depth and active brightness.
    Depth(DepthAbImage),
    /// height x width x 3 interleaved RGB.
    Pv(RgbImage),
    /// 2x1024 float samples.
    Microphone(AudioFrame),
    Imu(Vec<ImuSample>),
    SpatialInput(SpatialInputFrame),
}

/// A frame after payload decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFrame {
    pub timestamp: Timestamp,
    pub payload: DecodedPayload,
    pub pose: Option<Pose>,
}

impl DecodedFrame {
    pub fn is_valid_pose(&self) -> bool {
        self.pose.as_ref().is_some_and(Pose::is_valid)
    }
}

fn shape_error(what: &'static str, expected: String, got: String) -> ClientError {
    ClientError::PayloadShape { what, expected, got }
}

fn decode_payload(
    port: StreamPort,
    codec: &dyn PayloadCodec,
    payload: &[u8],
) -> Result<DecodedPayload, ClientError> {
    let wrap = |error: CodecError| ClientError::Decode { error, payload: payload.to_vec() };
    match port {
        StreamPort::Control | StreamPort::UnityIpc => {
            Err(ClientError::Validation(StreamError::NotAStream(port)))
        }
        p if p.is_vlc() => {
            let raw = codec.decode(payload).map_err(wrap)?;
            let (w, h) = (raw.width as usize, raw.height as usize);
            let len = raw.data.len();
            let img = Image::from_vec(w, h, raw.data)
                .filter(|_| (w, h) == (640, 480))
                .ok_or_else(|| {
                    shape_error("VLC image", "640x480 u8".into(), format!("{w}x{h} ({len} B)"))
                })?;
            Ok(DecodedPayload::Vlc(img))
        }
        StreamPort::DepthLongthrow => {
            Ok(DecodedPayload::Depth(decode_depth_png(payload).map_err(wrap)?))
        }
        StreamPort::Pv => {
            let raw = codec.decode(payload).map_err(wrap)?;
            let (w, h) = (raw.width as usize, raw.height as usize);
            let got = raw.data.len();
            let img = RgbImage::from_vec(w, h, raw.data)
                .ok_or_else(|| shape_error("PV image", format!("{}", w * h * 3), got.to_string()))?;
            Ok(DecodedPayload::Pv(img))
        }
        StreamPort::Microphone => {
            let raw = codec.decode(payload).map_err(wrap)?;
            let want = 2 * 1024 * 4;
            if raw.data.len() != want || raw.height != 2 || raw.width != 1024 {
                return Err(shape_error(
                    "audio block",
                    "2x1024 f32".into(),
                    format!("{}x{} ({} B)", raw.height, raw.width, raw.data.len()),
                ));
            }
            let mut floats = raw.data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
            let ch0: Vec<f32> = floats.by_ref().take(1024).collect();
            let ch1: Vec<f32> = floats.collect();
            Ok(DecodedPayload::Microphone(AudioFrame { channels: [ch0, ch1] }))
        }
        p if p.is_imu() => Ok(DecodedPayload::Imu(unpack_imu_batch(p, payload)?)),
        StreamPort::SpatialInput => Ok(DecodedPayload::SpatialInput(unpack_spatial_input(payload)?)),
        _ => unreachable!("all stream ports handled"),
    }
}

/// An [`RxSession`] that decodes payloads into per-port shapes. Encoded
/// video and audio go through the pluggable codec (the RAW test codec by
/// default).
pub struct DecodedRx {
    session: RxSession,
    codec: Box<dyn PayloadCodec>,
}

impl DecodedRx {
    pub fn open(host: &str, port: StreamPort, cfg: &PortConfig) -> Result<DecodedRx, ClientError> {
        let addr = resolve(host, port.number())?;
        Self::open_addr(addr, port, cfg, &RxOptions::default(), Box::new(RawCodec))
    }

    pub fn open_addr(
        addr: SocketAddr,
        port: StreamPort,
        cfg: &PortConfig,
        opts: &RxOptions,
        codec: Box<dyn PayloadCodec>,
    ) -> Result<DecodedRx, ClientError> {
        Ok(DecodedRx { session: RxSession::open_addr(addr, port, cfg, opts)?, codec })
    }

    pub fn session(&self) -> &RxSession {
        &self.session
    }

    pub fn get_next_packet(&mut self) -> Result<DecodedFrame, ClientError> {
        let frame = self.session.get_next_packet()?;
        let payload = decode_payload(self.session.port, self.codec.as_ref(), &frame.payload)?;
        Ok(DecodedFrame { timestamp: frame.timestamp, payload, pose: frame.pose })
    }

    pub fn close(self) {
        self.session.close();
    }
}

/// Download a sensor's Mode 2 calibration blob. For RM sensors only the
/// mode byte is sent; PV needs its full configuration (passed via
/// `pv_config`; its mode field is forced to Mode 2). The server transfers
/// the fixed-size blob and closes the connection; the close is verified.
pub fn download_calibration(
    host: &str,
    port: StreamPort,
    pv_config: Option<&VideoConfig>,
) -> Result<Calibration, ClientError> {
    let addr = resolve(host, port.number())?;
    download_calibration_addr(addr, port, pv_config, &RxOptions::default())
}

pub fn download_calibration_addr(
    addr: SocketAddr,
    port: StreamPort,
    pv_config: Option<&VideoConfig>,
    opts: &RxOptions,
) -> Result<Calibration, ClientError> {
    if !mode_supported(port, StreamMode::Mode2) {
        return Err(ClientError::Validation(StreamError::UnsupportedMode {
            port,
            mode: StreamMode::Mode2,
        }));
    }
    let cfg = match port {
        StreamPort::Pv => {
            let v = pv_config.copied().unwrap_or(VideoConfig {
                mode: StreamMode::Mode2,
                width: 1920,
                height: 1080,
                framerate: 30,
                profile: crate::streams::VideoProfile::H264Base,
                bitrate: 5 * 1024 * 1024,
            });
            PortConfig::Video(VideoConfig { mode: StreamMode::Mode2, ..v })
        }
        _ => PortConfig::ModeOnly(StreamMode::Mode2),
    };
    let blob_bytes = encode_config(port, &cfg)?;
    let expected = calibration_blob_len(port)?;

    let mut stream = connect(addr, opts.connect_timeout)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(opts.read_timeout)?;
    stream.write_all(&blob_bytes)?;

    let mut blob = vec![0u8; expected];
    let mut got = 0usize;
    while got < expected {
        let n = stream.read(&mut blob[got..])?;
        if n == 0 {
            return Err(ClientError::TruncatedCalibration { expected, got });
        }
        got += n;
    }
    // The server must close the connection after the transfer.
    let mut probe = [0u8; 64];
    let extra = stream.read(&mut probe)?;
    if extra != 0 {
        return Err(ClientError::TrailingCalibrationBytes { extra });
    }
    Ok(parse_calibration(port, &blob)?)
}

/// Client for the remote configuration port (3809). Commands other than
/// `GetVersion` are fire-and-forget.
pub struct ControlClient {
    stream: TcpStream,
}

impl ControlClient {
    pub fn open(host: &str) -> Result<ControlClient, ClientError> {
        let addr = resolve(host, StreamPort::Control.number())?;
        Self::open_addr(addr, &RxOptions::default())
    }

    pub fn open_addr(addr: SocketAddr, opts: &RxOptions) -> Result<ControlClient, ClientError> {
        let stream = connect(addr, opts.connect_timeout)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(opts.read_timeout)?;
        Ok(ControlClient { stream })
    }

    /// Send a setting; validation (divisibility rules) happens before any
    /// bytes leave the process.
    pub fn send(&mut self, cmd: &ControlCommand) -> Result<(), ClientError> {
        let bytes = encode_control(cmd)?;
        self.stream.write_all(&bytes)?;
        Ok(())
    }

    /// Query the server version quadruple.
    pub fn get_version(&mut self) -> Result<[u16; 4], ClientError> {
        self.send(&ControlCommand::GetVersion)?;
        let mut reply = [0u8; 8];
        let mut got = 0usize;
        while got < reply.len() {
            let n = self.stream.read(&mut reply[got..])?;
            if n == 0 {
                return Err(ClientError::ReplyLength { expected: 8, got });
            }
            got += n;
        }
        Ok([
            u16::from_le_bytes([reply[0], reply[1]]),
            u16::from_le_bytes([reply[2], reply[3]]),
            u16::from_le_bytes([reply[4], reply[5]]),
            u16::from_le_bytes([reply[6], reply[7]]),
        ])
    }
}

/// Client for the Unity IPC port (3816). Every command yields a 4-byte
/// reply: a key for creator commands, else 1 for success and 0 for failure.
pub struct IpcClient {
    stream: TcpStream,
}

impl IpcClient {
    pub fn open(host: &str) -> Result<IpcClient, ClientError> {
        let addr = resolve(host, StreamPort::UnityIpc.number())?;
        Self::open_addr(addr, &RxOptions::default())
    }

    pub fn open_addr(addr: SocketAddr, opts: &RxOptions) -> Result<IpcClient, ClientError> {
        let stream = connect(addr, opts.connect_timeout)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(opts.read_timeout)?;
        Ok(IpcClient { stream })
    }

    /// Send a raw IPC message and read the 4-byte reply.
    pub fn call_raw(&mut self, msg: &IpcMessage) -> Result<u32, ClientError> {
        let bytes = encode_ipc(msg)?;
        self.stream.write_all(&bytes)?;
        let mut reply = [0u8; 4];
        let mut got = 0usize;
        while got < reply.len() {
            let n = self.stream.read(&mut reply[got..])?;
            if n == 0 {
                return Err(ClientError::ReplyLength { expected: 4, got });
            }
            got += n;
        }
        Ok(u32::from_le_bytes(reply))
    }

    /// Send a remote-scene command. Creator commands return the new key.
    pub fn call(&mut self, cmd: &SceneCommand) -> Result<u32, ClientError> {
        self.call_raw(&encode_scene(cmd)?)
    }
}

/// Convenience: the full set of modes a port accepts, re-exported here so
/// callers probing capabilities need only the client module.
pub fn port_modes(port: StreamPort) -> Result<&'static [StreamMode], StreamError> {
    supported_modes(port)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_validates_before_connecting() {
        // No server anywhere near this address; validation must fail first.
        let addr: SocketAddr = "127.0.0.1:1".parse().unwrap();
        let cfg = PortConfig::Video(VideoConfig {
            mode: StreamMode::Mode0,
            width: 1280,
            height: 480,
            framerate: 30,
            profile: crate::streams::VideoProfile::H264Base,
            bitrate: 1 << 20,
        });
        let err = RxSession::open_addr(addr, StreamPort::VlcLeftfront, &cfg, &RxOptions::default())
            .unwrap_err();
        assert!(matches!(err, ClientError::Validation(StreamError::InvalidVlcFormat { .. })));
    }

    #[test]
    fn pv_whitelist_is_checked_before_connecting() {
        let addr: SocketAddr = "127.0.0.1:1".parse().unwrap();
        let cfg = PortConfig::Video(VideoConfig {
            mode: StreamMode::Mode0,
            width: 123,
            height: 45,
            framerate: 30,
            profile: crate::streams::VideoProfile::H264Base,
            bitrate: 1 << 20,
        });
        let err =
            RxSession::open_addr(addr, StreamPort::Pv, &cfg, &RxOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            ClientError::Validation(StreamError::PvModeNotWhitelisted { .. })
        ));
    }

    #[test]
    fn calibration_download_rejects_unsupported_ports_locally() {
        let addr: SocketAddr = "127.0.0.1:1".parse().unwrap();
        let err = download_calibration_addr(addr, StreamPort::ImuMag, None, &RxOptions::default())
            .unwrap_err();
        assert!(matches!(err, ClientError::Validation(StreamError::UnsupportedMode { .. })));
        let err =
            download_calibration_addr(addr, StreamPort::Microphone, None, &RxOptions::default())
                .unwrap_err();
        assert!(matches!(err, ClientError::Validation(StreamError::UnsupportedMode { .. })));
    }

    #[test]
    fn connecting_to_a_closed_port_is_a_transport_error() {
        // Bind-then-drop reserves a port that is then closed.
        let addr = {
            let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap()
        };
        let err = RxSession::open_addr(
            addr,
            StreamPort::SpatialInput,
            &PortConfig::Empty,
            &RxOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ClientError::Io(_)));
    }
}
