//! TCP front end of the emulator: one listener per protocol port, the
//! configuration handshake, Mode 2 calibration transfers, the paced
//! streaming loops, and the control and IPC endpoints.
//!
//! Each port accepts one live session at a time; while a session is active,
//! further connections are accepted and immediately closed. Streaming
//! follows an absolute schedule on the synthetic clock, so timestamps carry
//! exact nominal spacing regardless of wall jitter or the clock multiplier.

use super::config::EmulatorConfig;
use super::model::{
    audio_block, depth_frame, imu_batch, pv_frame, spatial_frame, synth_pv_calibration,
    vlc_frame, Cadence, DeviceModel, DeviceSettings, Trajectory, AUDIO_CHANNELS, AUDIO_SAMPLES,
};
use super::scene::SceneState;
use super::EmulatorError;
use crate::codecs::{encode_depth_png, PayloadCodec, RawCodec, RawFrame};
use crate::control::{
    control_param_len, decode_control, decode_ipc_header, decode_scene, ControlCommand,
    IpcMessage, IPC_HEADER_LEN, IPC_RESERVED_ID,
};
use crate::streams::{
    config_wire_len, decode_config, mode_supported, pack_imu_batch, pack_spatial_input,
    PortConfig, PvModeWhitelist, StreamMode, StreamPort, VLC_FRAMERATE, VLC_HEIGHT, VLC_WIDTH,
};
use crate::wire::{encode_frame_into, DataFrame, Timestamp};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{IpAddr, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

/// Params cap for one IPC message; larger values mean a desynchronized or
/// hostile peer.
const IPC_PARAM_CAP: u32 = 16 * 1024 * 1024;

struct Ctx {
    model: DeviceModel,
    cfg: EmulatorConfig,
    whitelist: PvModeWhitelist,
    running: AtomicBool,
    vlc_cal_blob: Vec<u8>,
    depth_cal_blob: Vec<u8>,
    imu_cal_blob: Vec<u8>,
}

impl Ctx {
    fn cadence_for(&self, port: StreamPort, cfg: &PortConfig) -> Cadence {
        match port {
            p if p.is_vlc() => Cadence::from_fps(VLC_FRAMERATE as u32),
            StreamPort::Pv => match cfg {
                PortConfig::Video(v) => Cadence::from_fps(v.framerate as u32),
                _ => Cadence::from_fps(30),
            },
            StreamPort::DepthLongthrow => Cadence::from_fps(self.cfg.depth_fps),
            StreamPort::ImuAccel => Cadence::from_hz(self.cfg.imu_accel_batch_hz),
            StreamPort::ImuGyro => Cadence::from_hz(self.cfg.imu_gyro_batch_hz),
            StreamPort::ImuMag => Cadence::from_hz(self.cfg.imu_mag_batch_hz),
            StreamPort::Microphone => Cadence::microphone(),
            StreamPort::SpatialInput => Cadence::from_fps(self.cfg.spatial_input_fps),
            _ => unreachable!("not a stream"),
        }
    }

    fn calibration_blob(&self, port: StreamPort, cfg: &PortConfig) -> Option<Vec<u8>> {
        match port {
            p if p.is_vlc() => Some(self.vlc_cal_blob.clone()),
            StreamPort::DepthLongthrow => Some(self.depth_cal_blob.clone()),
            StreamPort::ImuAccel | StreamPort::ImuGyro => Some(self.imu_cal_blob.clone()),
            StreamPort::Pv => match cfg {
                PortConfig::Video(v) => Some(synth_pv_calibration(v).encode()),
                _ => None,
            },
            _ => None,
        }
    }
}

/// Synthetic payload the emulator sends for frame `n` of a stream. Pure
/// function of its arguments, so conformance tests can regenerate the exact
/// bytes a session injected.
pub fn stream_payload(
    port: StreamPort,
    cfg: &PortConfig,
    n: u64,
    ts: Timestamp,
    cadence: Cadence,
    trajectory: &Trajectory,
) -> Vec<u8> {
    let raw = RawCodec;
    match port {
        p if p.is_vlc() => raw
            .encode(&RawFrame {
                width: VLC_WIDTH as u32,
                height: VLC_HEIGHT as u32,
                data: vlc_frame(n).into_vec(),
            })
            .expect("raw encode"),
        StreamPort::Pv => {
            let (w, h) = match cfg {
                PortConfig::Video(v) => (v.width as usize, v.height as usize),
                _ => (640, 360),
            };
            raw.encode(&RawFrame {
                width: w as u32,
                height: h as u32,
                data: pv_frame(w, h, n).into_vec(),
            })
            .expect("raw encode")
        }
        StreamPort::DepthLongthrow => {
            let (img, mask) = depth_frame(n);
            encode_depth_png(&img, &mask).expect("depth png encode")
        }
        p if p.is_imu() => {
            let batch = imu_batch(port, n, ts, cadence);
            pack_imu_batch(p, &batch).expect("imu pack")
        }
        StreamPort::Microphone => {
            let samples = audio_block(n);
            let mut data = Vec::with_capacity(samples.len() * 4);
            for s in &samples {
                data.extend_from_slice(&s.to_le_bytes());
            }
            raw.encode(&RawFrame {
                width: AUDIO_SAMPLES as u32,
                height: AUDIO_CHANNELS as u32,
                data,
            })
            .expect("raw encode")
        }
        StreamPort::SpatialInput => pack_spatial_input(&spatial_frame(trajectory, ts)),
        _ => unreachable!("not a stream"),
    }
}

fn read_exact_buf(conn: &mut TcpStream, buf: &mut [u8]) -> bool {
    conn.read_exact(buf).is_ok()
}

fn stream_session(ctx: &Ctx, port: StreamPort, mut conn: TcpStream) {
    let _ = conn.set_nodelay(true);
    let cfg_len = config_wire_len(port).expect("stream port");
    let mut cfg_buf = vec![0u8; cfg_len];
    if cfg_len > 0 {
        let _ = conn.set_read_timeout(Some(Duration::from_millis(self_timeout(ctx))));
        if !read_exact_buf(&mut conn, &mut cfg_buf) {
            return; // handshake timeout or short read: drop the connection
        }
    }
    let Ok(cfg) = decode_config(port, &cfg_buf) else { return };
    let mode = cfg.mode();
    if !mode_supported(port, mode) {
        return;
    }
    if let PortConfig::Video(v) = &cfg {
        if port.is_vlc()
            && (v.width, v.height, v.framerate) != (VLC_WIDTH as u16, VLC_HEIGHT as u16, VLC_FRAMERATE)
        {
            return;
        }
        if port == StreamPort::Pv && !ctx.whitelist.contains(v.width, v.height, v.framerate) {
            return;
        }
    }

    let _ = conn.set_write_timeout(Some(Duration::from_millis(ctx.cfg.write_timeout_ms)));
    if mode == StreamMode::Mode2 {
        // single transfer, then the server closes the connection
        if let Some(blob) = ctx.calibration_blob(port, &cfg) {
            let _ = conn.write_all(&blob);
            let _ = conn.flush();
        }
        return;
    }

    let _ = conn.set_read_timeout(None);
    let cadence = ctx.cadence_for(port, &cfg);
    let include_pose = mode == StreamMode::Mode1;
    let anchor = ctx.model.clock.now_ticks();
    let mut out = Vec::new();
    log::debug!("{port:?}: streaming (mode {}, anchor {anchor})", mode as u8);
    for n in 0u64.. {
        let ts = Timestamp(anchor + cadence.ticks_at(n));
        if !ctx.model.clock.sleep_until_ticks(ts.0, &ctx.running) {
            break;
        }
        let payload = stream_payload(port, &cfg, n, ts, cadence, &ctx.model.trajectory);
        let pose = include_pose.then(|| ctx.model.pose_at(ts));
        let frame = DataFrame { timestamp: ts, payload, pose };
        out.clear();
        if encode_frame_into(&frame, include_pose, &mut out).is_err() {
            break;
        }
        if conn.write_all(&out).is_err() {
            break; // client went away
        }
    }
}

fn self_timeout(ctx: &Ctx) -> u64 {
    ctx.cfg.handshake_timeout_ms.max(1)
}

fn apply_control(model: &DeviceModel, cmd: &ControlCommand) {
    let mut s = model.settings.lock().unwrap();
    match *cmd {
        ControlCommand::MarkerState { enable } => s.marker_enabled = enable != 0,
        ControlCommand::Focus { mode, range, distance, value, driver_fallback } => {
            s.focus = [mode, range, distance, value, driver_fallback];
        }
        ControlCommand::TemporalDenoising { mode } => s.temporal_denoising = mode,
        ControlCommand::WhiteBalancePreset { preset } => s.white_balance_preset = preset,
        // decode_control already undid the wire's /25 and /10
        ControlCommand::WhiteBalanceValue { value } => s.white_balance_value = value,
        ControlCommand::Exposure { mode, value } => {
            s.exposure_mode = mode;
            s.exposure_value = value;
        }
        ControlCommand::GetVersion => {}
    }
}

fn control_session(ctx: &Ctx, mut conn: TcpStream) {
    let _ = conn.set_nodelay(true);
    let _ = conn.set_write_timeout(Some(Duration::from_millis(ctx.cfg.write_timeout_ms)));
    loop {
        let mut tag = [0u8; 1];
        if !read_exact_buf(&mut conn, &mut tag) {
            return;
        }
        let Ok(len) = control_param_len(tag[0]) else {
            return; // unknown tag: close the connection
        };
        let mut params = vec![0u8; len];
        if !read_exact_buf(&mut conn, &mut params) {
            return;
        }
        let Ok(cmd) = decode_control(tag[0], &params) else { return };
        if cmd == ControlCommand::GetVersion {
            let mut reply = [0u8; 8];
            for (i, v) in ctx.model.version.iter().enumerate() {
                reply[i * 2..i * 2 + 2].copy_from_slice(&v.to_le_bytes());
            }
            if conn.write_all(&reply).is_err() {
                return;
            }
        } else {
            apply_control(&ctx.model, &cmd);
        }
    }
}

fn ipc_session(ctx: &Ctx, mut conn: TcpStream) {
    let _ = conn.set_nodelay(true);
    let _ = conn.set_write_timeout(Some(Duration::from_millis(ctx.cfg.write_timeout_ms)));
    loop {
        let mut header = [0u8; IPC_HEADER_LEN];
        if !read_exact_buf(&mut conn, &mut header) {
            return;
        }
        let (id, size) = decode_ipc_header(&header);
        if id == IPC_RESERVED_ID || size > IPC_PARAM_CAP {
            return; // reserved id from a client: drop the connection
        }
        let mut params = vec![0u8; size as usize];
        if !read_exact_buf(&mut conn, &mut params) {
            return;
        }
        let msg = IpcMessage { command_id: id, params };
        let reply = match decode_scene(&msg) {
            Ok(cmd) => ctx.model.scene.lock().unwrap().apply(&cmd),
            Err(_) => super::scene::REPLY_FAIL, // unknown id (including 3) or bad params
        };
        if conn.write_all(&reply.to_le_bytes()).is_err() {
            return;
        }
    }
}

fn handle_connection(ctx: &Ctx, port: StreamPort, conn: TcpStream) {
    match port {
        StreamPort::Control => control_session(ctx, conn),
        StreamPort::UnityIpc => ipc_session(ctx, conn),
        _ => stream_session(ctx, port, conn),
    }
}

/// Clears the per-port "session active" flag even if the handler panics.
struct ActiveGuard(Arc<AtomicBool>);

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

fn accept_loop(ctx: Arc<Ctx>, port: StreamPort, listener: TcpListener) {
    let active = Arc::new(AtomicBool::new(false));
    for conn in listener.incoming() {
        if !ctx.running.load(Ordering::Acquire) {
            break;
        }
        let Ok(conn) = conn else { continue };
        if active.swap(true, Ordering::SeqCst) {
            // Only one client per stream: accept, then close without data.
            drop(conn);
            continue;
        }
        let ctx = ctx.clone();
        let guard = ActiveGuard(active.clone());
        let name = format!("hl2ss-{}", port.number());
        let _ = std::thread::Builder::new().name(name).spawn(move || {
            let _guard = guard;
            handle_connection(&ctx, port, conn);
        });
    }
}

/// Running emulator: thirteen listeners plus their session threads.
pub struct ServerHandle {
    ctx: Arc<Ctx>,
    addrs: HashMap<StreamPort, SocketAddr>,
    accept_threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    /// Socket address a port is actually bound on (offset included).
    pub fn addr(&self, port: StreamPort) -> SocketAddr {
        self.addrs[&port]
    }

    pub fn port_offset(&self) -> u16 {
        self.ctx.cfg.port_offset
    }

    pub fn version(&self) -> [u16; 4] {
        self.ctx.model.version
    }

    /// Snapshot of the PV settings applied over the control port.
    pub fn settings(&self) -> DeviceSettings {
        *self.ctx.model.settings.lock().unwrap()
    }

    /// Snapshot of the remote scene.
    pub fn scene(&self) -> SceneState {
        self.ctx.model.scene.lock().unwrap().clone()
    }

    pub fn model(&self) -> &DeviceModel {
        &self.ctx.model
    }

    /// Stop accepting, terminate stream loops, and join the port threads.
    pub fn shutdown(mut self) {
        self.shutdown_inner();
    }

    fn shutdown_inner(&mut self) {
        self.ctx.running.store(false, Ordering::Release);
        for addr in self.addrs.values() {
            // wake the blocking accept so the loop observes the flag
            let _ = TcpStream::connect_timeout(addr, Duration::from_millis(200));
        }
        for t in self.accept_threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.ctx.running.load(Ordering::Acquire) {
            self.shutdown_inner();
        }
    }
}

/// Bring up every protocol port and start serving.
pub fn serve(cfg: &EmulatorConfig) -> Result<ServerHandle, EmulatorError> {
    cfg.validate()?;
    let whitelist = cfg.whitelist()?;
    let bind_ip: IpAddr = cfg
        .bind_addr
        .parse()
        .map_err(|e| EmulatorError::Config(format!("bind_addr {:?}: {e}", cfg.bind_addr)))?;
    let max_port = StreamPort::UnityIpc.number();
    if cfg.port_offset > u16::MAX - max_port {
        return Err(EmulatorError::Config(format!(
            "port_offset {} pushes port {max_port} past 65535",
            cfg.port_offset
        )));
    }

    let model = DeviceModel::new(cfg.clock_multiplier, cfg.version, &cfg.tracking_loss);
    let imu_cal_blob = crate::calibration::ImuCalibration {
        extrinsics: [
            [1.0, 0.0, 0.0, 0.01],
            [0.0, 1.0, 0.0, 0.02],
            [0.0, 0.0, 1.0, 0.03],
            [0.0, 0.0, 0.0, 1.0],
        ],
    }
    .encode();
    let ctx = Arc::new(Ctx {
        vlc_cal_blob: model.vlc_calibration().encode(),
        depth_cal_blob: model.depth_calibration().encode(),
        imu_cal_blob,
        model,
        cfg: cfg.clone(),
        whitelist,
        running: AtomicBool::new(true),
    });

    let mut addrs = HashMap::new();
    let mut listeners = Vec::new();
    for port in StreamPort::ALL {
        let tcp_port = port.number() + cfg.port_offset;
        let listener = TcpListener::bind((bind_ip, tcp_port))
            .map_err(|source| EmulatorError::Bind { port: tcp_port, source })?;
        addrs.insert(port, listener.local_addr().map_err(|source| EmulatorError::Bind {
            port: tcp_port,
            source,
        })?);
        listeners.push((port, listener));
    }
    log::info!(
        "emulator listening on {} ports at {bind_ip} (offset {})",
        listeners.len(),
        cfg.port_offset
    );

    let accept_threads = listeners
        .into_iter()
        .map(|(port, listener)| {
            let ctx = ctx.clone();
            std::thread::Builder::new()
                .name(format!("hl2ss-accept-{}", port.number()))
                .spawn(move || accept_loop(ctx, port, listener))
                .expect("spawn accept thread")
        })
        .collect();

    Ok(ServerHandle { ctx, addrs, accept_threads })
}
