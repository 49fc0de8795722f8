//! Loopback device: serves every stream port with synthetic sensor data at
//! nominal rates, answers Mode 2 calibration requests, and implements the
//! remote configuration and Unity IPC endpoints.
//!
//! This is not a physics simulator; the imagery is procedural and exists to
//! exercise the codecs, the geometry utilities, and every wire contract
//! without hardware.

mod config;
mod model;
mod scene;
mod server;

pub use config::EmulatorConfig;
pub use model::{
    audio_block, depth_frame, imu_batch, pv_frame, spatial_frame, synth_depth_calibration,
    synth_pv_calibration, synth_vlc_calibration, vlc_frame, Cadence, Clock, DeviceModel,
    DeviceSettings, TrackingSchedule, Trajectory, AUDIO_CHANNELS, AUDIO_SAMPLES,
    AUDIO_SAMPLE_RATE,
};
pub use scene::{ObjectKind, SceneObject, SceneState, REPLY_FAIL, REPLY_OK};
pub use server::{serve, stream_payload, ServerHandle};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmulatorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("failed to bind TCP port {port}: {source}")]
    Bind { port: u16, source: std::io::Error },
}
