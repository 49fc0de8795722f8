//! HoloLens 2 sensor streaming in Rust: the TCP wire protocol and payload
//! codecs, a blocking client SDK with a multi-stream ring-buffer multiplexer,
//! a full device emulator that serves every stream port with synthetic data,
//! and calibration-driven RGB-D geometry utilities.
//!
//! The emulator makes the whole protocol testable over loopback with no
//! physical device: [`emulator::serve`] brings up all thirteen ports and the
//! [`client`] module connects to them exactly as it would to real hardware.
//!
//! The crate is organized along protocol layers:
//!
//! - [`wire`] — the common data frame and the incremental unpacking FSM
//! - [`streams`] — ports, modes, handshake blobs, IMU and spatial-input schemas
//! - [`codecs`] — the lossless depth+AB PNG codec and the RAW test codec
//! - [`calibration`] — Mode 2 calibration blobs
//! - [`control`] — remote configuration and Unity IPC command encodings
//! - [`client`] — blocking stream sessions, calibration download, control/IPC clients
//! - [`mux`] — source/interconnect/sink architecture over bounded ring buffers
//! - [`emulator`] — the loopback device
//! - [`geometry`] — LUT rays, point clouds, projection, RGB-D alignment
//!
//! The `parallel` feature (on by default) runs the per-pixel geometry
//! kernels on a rayon pool; disabling it leaves the same sequential code
//! that `geometry::serial` always exposes.

pub mod calibration;
pub mod client;
pub mod codecs;
pub mod control;
pub mod emulator;
pub mod geometry;
pub mod mux;
pub mod raster;
pub mod streams;
pub mod wire;

pub use streams::{PortConfig, StreamMode, StreamPort};
pub use wire::{DataFrame, Pose, Timestamp};
