//! Emulator configuration: per-stream rates, the PV mode whitelist, the
//! tracking-loss schedule, the clock multiplier, and the server version.
//! Loadable from TOML.

use crate::streams::PvModeWhitelist;
use serde::{Deserialize, Serialize};

use super::EmulatorError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EmulatorConfig {
    /// Address the port listeners bind to.
    pub bind_addr: String,
    /// Added to every protocol port number; lets tests run emulators side
    /// by side without colliding on the canonical ports.
    pub port_offset: u16,
    /// Wall-time speedup. Timestamps always advance in nominal (simulated)
    /// time; a multiplier of 10 streams ten times faster than real time.
    pub clock_multiplier: f64,
    /// Version quadruple returned by the control port's GetVersion.
    pub version: [u16; 4],
    /// Depth long-throw rate; the sensor runs at 1-5 fps.
    pub depth_fps: u32,
    pub spatial_input_fps: u32,
    /// IMU batch rates. Defaults approximate the published per-stream
    /// bandwidths divided by the batch payload size.
    pub imu_accel_batch_hz: f64,
    pub imu_gyro_batch_hz: f64,
    pub imu_mag_batch_hz: f64,
    /// Accepted PV modes, one "WxH@FPS" entry each.
    pub pv_whitelist: Vec<String>,
    /// Simulated-time intervals [start, end) in seconds during which Mode 1
    /// poses are emitted invalid.
    pub tracking_loss: Vec<[f64; 2]>,
    /// How long a port waits for the configuration handshake before giving
    /// up and closing.
    pub handshake_timeout_ms: u64,
    /// Per-connection send timeout; a stalled client is dropped.
    pub write_timeout_ms: u64,
}

impl Default for EmulatorConfig {
    fn default() -> Self {
        EmulatorConfig {
            bind_addr: "127.0.0.1".to_string(),
            port_offset: 0,
            clock_multiplier: 1.0,
            version: [1, 0, 0, 0],
            depth_fps: 5,
            spatial_input_fps: 60,
            imu_accel_batch_hz: 12.0,
            imu_gyro_batch_hz: 21.0,
            imu_mag_batch_hz: 5.0,
            pv_whitelist: PvModeWhitelist::default()
                .entries()
                .iter()
                .map(|(w, h, f)| format!("{w}x{h}@{f}"))
                .collect(),
            tracking_loss: Vec::new(),
            handshake_timeout_ms: 5000,
            write_timeout_ms: 5000,
        }
    }
}

impl EmulatorConfig {
    pub fn validate(&self) -> Result<(), EmulatorError> {
        if !(self.clock_multiplier > 0.0) || !self.clock_multiplier.is_finite() {
            return Err(EmulatorError::Config(format!(
                "clock_multiplier must be positive and finite, got {}",
                self.clock_multiplier
            )));
        }
        if !(1..=5).contains(&self.depth_fps) {
            return Err(EmulatorError::Config(format!(
                "depth_fps must be 1..=5, got {}",
                self.depth_fps
            )));
        }
        if self.spatial_input_fps == 0 {
            return Err(EmulatorError::Config("spatial_input_fps must be nonzero".into()));
        }
        for (name, hz) in [
            ("imu_accel_batch_hz", self.imu_accel_batch_hz),
            ("imu_gyro_batch_hz", self.imu_gyro_batch_hz),
            ("imu_mag_batch_hz", self.imu_mag_batch_hz),
        ] {
            if !(hz > 0.0) || !hz.is_finite() {
                return Err(EmulatorError::Config(format!("{name} must be positive, got {hz}")));
            }
        }
        for interval in &self.tracking_loss {
            if interval[0] < 0.0 || interval[1] <= interval[0] {
                return Err(EmulatorError::Config(format!(
                    "tracking_loss interval {interval:?} must satisfy 0 <= start < end"
                )));
            }
        }
        self.whitelist()?;
        Ok(())
    }

    pub fn whitelist(&self) -> Result<PvModeWhitelist, EmulatorError> {
        let mut entries = Vec::new();
        for (i, text) in self.pv_whitelist.iter().enumerate() {
            entries.push(PvModeWhitelist::parse_entry(text).ok_or_else(|| {
                EmulatorError::Config(format!("bad pv_whitelist entry {}: {text:?}", i + 1))
            })?);
        }
        Ok(PvModeWhitelist::from_entries(entries))
    }

    pub fn from_toml_str(text: &str) -> Result<EmulatorConfig, EmulatorError> {
        let cfg: EmulatorConfig =
            toml::from_str(text).map_err(|e| EmulatorError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &std::path::Path) -> Result<EmulatorConfig, EmulatorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EmulatorError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        EmulatorConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_and_overrides() {
        let text = r#"
            clock_multiplier = 10.0
            depth_fps = 3
            version = [2, 1, 0, 7]
            tracking_loss = [[0.5, 1.0], [2.0, 2.5]]
            pv_whitelist = ["640x360@30"]
        "#;
        let cfg = EmulatorConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.clock_multiplier, 10.0);
        assert_eq!(cfg.depth_fps, 3);
        assert_eq!(cfg.version, [2, 1, 0, 7]);
        assert!(cfg.whitelist().unwrap().contains(640, 360, 30));
        assert!(!cfg.whitelist().unwrap().contains(1920, 1080, 30));
        // unknown keys are configuration mistakes, not silently ignored
        assert!(EmulatorConfig::from_toml_str("depht_fps = 3").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut cfg = EmulatorConfig::default();
        cfg.depth_fps = 6;
        assert!(cfg.validate().is_err());
        let mut cfg = EmulatorConfig::default();
        cfg.clock_multiplier = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = EmulatorConfig::default();
        cfg.tracking_loss = vec![[2.0, 1.0]];
        assert!(cfg.validate().is_err());
        let mut cfg = EmulatorConfig::default();
        cfg.pv_whitelist = vec!["nonsense".into()];
        assert!(cfg.validate().is_err());
    }
}
