//! Encodings for the remote configuration port (3809) and the Unity IPC
//! port (3816), including the remote-scene command vocabulary.
//!
//! Control commands are a tag byte followed by fixed-size little-endian
//! parameters. Only `GetVersion` produces a reply (4x u16). The white
//! balance value and exposure value travel divided by 25 and 10 so the wire
//! step size is 1; the server multiplies them back. Both encoders here take
//! natural values and reject inputs the division would corrupt.
//!
//! IPC messages are `u32 command id | u32 size | params`; id 0xFFFFFFFF is
//! reserved for the server's own disconnect notification and must not be
//! sent by clients. Every scene command yields a 4-byte reply: a key for
//! creator commands, else 1 for success and 0 for failure.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("{what} value {value} is not divisible by {step}; the wire format would floor it")]
    NotDivisible { what: &'static str, value: u32, step: u32 },
    #[error("unknown control command tag {0}")]
    UnknownControlTag(u8),
    #[error("control command {tag} expects {expected} parameter bytes, got {got}")]
    ControlParamLength { tag: u8, expected: usize, got: usize },
    #[error("command id 0xFFFFFFFF is reserved for the server")]
    ReservedCommandId,
    #[error("unknown scene command id {0}")]
    UnknownCommandId(u32),
    #[error("scene command {id} parameters malformed: {reason}")]
    SceneParams { id: u32, reason: String },
    #[error("primitive type {0} is out of range (0..=5)")]
    InvalidPrimitive(u32),
    #[error("rgba component {0} is outside [0, 1]")]
    ColorOutOfRange(f32),
}

/// Natural-unit wire divisor for the white balance value command.
pub const WHITE_BALANCE_STEP: u32 = 25;
/// Natural-unit wire divisor for the exposure value.
pub const EXPOSURE_STEP: u32 = 10;

/// Commands of the remote configuration port. Values are natural units;
/// the wire transforms are applied by [`encode_control`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlCommand {
    /// Tag 0: toggle the PV field-of-view display marker.
    MarkerState { enable: u8 },
    /// Tag 1: PV focus control.
    Focus { mode: u32, range: u32, distance: u32, value: u32, driver_fallback: u32 },
    /// Tag 2: PV video temporal denoising mode.
    TemporalDenoising { mode: u32 },
    /// Tag 3: PV white balance preset.
    WhiteBalancePreset { preset: u32 },
    /// Tag 4: PV white balance value in natural units (multiple of 25).
    WhiteBalanceValue { value: u32 },
    /// Tag 5: PV exposure; value in natural units (multiple of 10).
    Exposure { mode: u32, value: u32 },
    /// Tag 6: query the server version; replies with 4x u16.
    GetVersion,
}

impl ControlCommand {
    pub fn tag(&self) -> u8 {
        match self {
            ControlCommand::MarkerState { .. } => 0,
            ControlCommand::Focus { .. } => 1,
            ControlCommand::TemporalDenoising { .. } => 2,
            ControlCommand::WhiteBalancePreset { .. } => 3,
            ControlCommand::WhiteBalanceValue { .. } => 4,
            ControlCommand::Exposure { .. } => 5,
            ControlCommand::GetVersion => 6,
        }
    }
}

/// Parameter byte count that follows each control tag.
pub fn control_param_len(tag: u8) -> Result<usize, ControlError> {
    match tag {
        0 => Ok(1),
        1 => Ok(20),
        2 => Ok(4),
        3 => Ok(4),
        4 => Ok(4),
        5 => Ok(8),
        6 => Ok(0),
        other => Err(ControlError::UnknownControlTag(other)),
    }
}

/// Serialize a control command, applying the /25 and /10 wire transforms.
pub fn encode_control(cmd: &ControlCommand) -> Result<Vec<u8>, ControlError> {
    let mut out = vec![cmd.tag()];
    match *cmd {
        ControlCommand::MarkerState { enable } => out.push(enable),
        ControlCommand::Focus { mode, range, distance, value, driver_fallback } => {
            for v in [mode, range, distance, value, driver_fallback] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        ControlCommand::TemporalDenoising { mode } => out.extend_from_slice(&mode.to_le_bytes()),
        ControlCommand::WhiteBalancePreset { preset } => out.extend_from_slice(&preset.to_le_bytes()),
        ControlCommand::WhiteBalanceValue { value } => {
            if value % WHITE_BALANCE_STEP != 0 {
                return Err(ControlError::NotDivisible {
                    what: "white balance",
                    value,
                    step: WHITE_BALANCE_STEP,
                });
            }
            out.extend_from_slice(&(value / WHITE_BALANCE_STEP).to_le_bytes());
        }
        ControlCommand::Exposure { mode, value } => {
            if value % EXPOSURE_STEP != 0 {
                return Err(ControlError::NotDivisible { what: "exposure", value, step: EXPOSURE_STEP });
            }
            out.extend_from_slice(&mode.to_le_bytes());
            out.extend_from_slice(&(value / EXPOSURE_STEP).to_le_bytes());
        }
        ControlCommand::GetVersion => {}
    }
    Ok(out)
}

/// Parse the parameters following `tag`, undoing the wire transforms so the
/// returned command holds natural values. The server side of
/// [`encode_control`].
pub fn decode_control(tag: u8, params: &[u8]) -> Result<ControlCommand, ControlError> {
    let expected = control_param_len(tag)?;
    if params.len() != expected {
        return Err(ControlError::ControlParamLength { tag, expected, got: params.len() });
    }
    let u32_at = |o: usize| u32::from_le_bytes(params[o..o + 4].try_into().unwrap());
    Ok(match tag {
        0 => ControlCommand::MarkerState { enable: params[0] },
        1 => ControlCommand::Focus {
            mode: u32_at(0),
            range: u32_at(4),
            distance: u32_at(8),
            value: u32_at(12),
            driver_fallback: u32_at(16),
        },
        2 => ControlCommand::TemporalDenoising { mode: u32_at(0) },
        3 => ControlCommand::WhiteBalancePreset { preset: u32_at(0) },
        4 => ControlCommand::WhiteBalanceValue { value: u32_at(0) * WHITE_BALANCE_STEP },
        5 => ControlCommand::Exposure { mode: u32_at(0), value: u32_at(4) * EXPOSURE_STEP },
        6 => ControlCommand::GetVersion,
        _ => unreachable!(),
    })
}

// ---------------------------------------------------------------------------
// Unity IPC
// ---------------------------------------------------------------------------

/// Command id reserved for the server's disconnect notification.
pub const IPC_RESERVED_ID: u32 = 0xFFFF_FFFF;
/// IPC header: u32 command id + u32 parameter size.
pub const IPC_HEADER_LEN: usize = 8;

/// Raw IPC message. The interface is message-agnostic; the remote-scene
/// command set below is one vocabulary built on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpcMessage {
    pub command_id: u32,
    pub params: Vec<u8>,
}

/// Serialize an IPC message. Client-originated messages must not use the
/// reserved id.
pub fn encode_ipc(msg: &IpcMessage) -> Result<Vec<u8>, ControlError> {
    if msg.command_id == IPC_RESERVED_ID {
        return Err(ControlError::ReservedCommandId);
    }
    let mut out = Vec::with_capacity(IPC_HEADER_LEN + msg.params.len());
    out.extend_from_slice(&msg.command_id.to_le_bytes());
    out.extend_from_slice(&(msg.params.len() as u32).to_le_bytes());
    out.extend_from_slice(&msg.params);
    Ok(out)
}

/// Split an IPC header into (command id, parameter size).
pub fn decode_ipc_header(header: &[u8; IPC_HEADER_LEN]) -> (u32, u32) {
    (
        u32::from_le_bytes(header[0..4].try_into().unwrap()),
        u32::from_le_bytes(header[4..8].try_into().unwrap()),
    )
}

/// Unity primitives addressable by `CreatePrimitive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum PrimitiveKind {
    Sphere = 0,
    Capsule = 1,
    Cylinder = 2,
    Cube = 3,
    Plane = 4,
    Quad = 5,
}

impl PrimitiveKind {
    pub fn from_u32(v: u32) -> Result<PrimitiveKind, ControlError> {
        Ok(match v {
            0 => PrimitiveKind::Sphere,
            1 => PrimitiveKind::Capsule,
            2 => PrimitiveKind::Cylinder,
            3 => PrimitiveKind::Cube,
            4 => PrimitiveKind::Plane,
            5 => PrimitiveKind::Quad,
            other => return Err(ControlError::InvalidPrimitive(other)),
        })
    }
}

/// Remote-scene command set. Command id 3 is unassigned and rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneCommand {
    /// Id 0; replies with the new object's key.
    CreatePrimitive { kind: PrimitiveKind },
    /// Id 1.
    SetActive { key: u32, state: u32 },
    /// Id 2. Rotation is a quaternion (X, Y, Z, W).
    SetWorldTransform { key: u32, position: [f32; 3], rotation: [f32; 4], scale: [f32; 3] },
    /// Id 4. Components in [0, 1]; semi-transparency supported.
    SetColor { key: u32, rgba: [f32; 4] },
    /// Id 5. `image` is a JPG or PNG file.
    SetTexture { key: u32, image: Vec<u8> },
    /// Id 6; replies with the new object's key.
    CreateText,
    /// Id 7. UTF-8 text, no terminator; the length comes from the size field.
    SetText { key: u32, font_size: f32, rgba: [f32; 4], text: String },
    /// Id 16.
    Remove { key: u32 },
    /// Id 17.
    RemoveAll,
    /// Id 18: hint to process the following commands in one pass.
    BeginDisplayList,
    /// Id 19.
    EndDisplayList,
    /// Id 20: mode 0 targets objects by key, mode 1 targets the last
    /// created object and ignores keys.
    SetTargetMode { mode: u32 },
}

impl SceneCommand {
    pub fn command_id(&self) -> u32 {
        match self {
            SceneCommand::CreatePrimitive { .. } => 0,
            SceneCommand::SetActive { .. } => 1,
            SceneCommand::SetWorldTransform { .. } => 2,
            SceneCommand::SetColor { .. } => 4,
            SceneCommand::SetTexture { .. } => 5,
            SceneCommand::CreateText => 6,
            SceneCommand::SetText { .. } => 7,
            SceneCommand::Remove { .. } => 16,
            SceneCommand::RemoveAll => 17,
            SceneCommand::BeginDisplayList => 18,
            SceneCommand::EndDisplayList => 19,
            SceneCommand::SetTargetMode { .. } => 20,
        }
    }

    /// Commands whose reply is a key rather than a success flag.
    pub fn is_creator(&self) -> bool {
        matches!(self, SceneCommand::CreatePrimitive { .. } | SceneCommand::CreateText)
    }

    /// The ids assigned by the command set (3 is a hole and stays rejected).
    pub const KNOWN_IDS: [u32; 12] = [0, 1, 2, 4, 5, 6, 7, 16, 17, 18, 19, 20];
}

fn check_rgba(rgba: &[f32; 4]) -> Result<(), ControlError> {
    for &c in rgba {
        if !(0.0..=1.0).contains(&c) {
            return Err(ControlError::ColorOutOfRange(c));
        }
    }
    Ok(())
}

/// Map a scene command onto its IPC message.
pub fn encode_scene(cmd: &SceneCommand) -> Result<IpcMessage, ControlError> {
    let mut params = Vec::new();
    let put_u32 = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_le_bytes());
    let put_f32s = |out: &mut Vec<u8>, vs: &[f32]| {
        for v in vs {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    match cmd {
        SceneCommand::CreatePrimitive { kind } => put_u32(&mut params, *kind as u32),
        SceneCommand::SetActive { key, state } => {
            put_u32(&mut params, *key);
            put_u32(&mut params, *state);
        }
        SceneCommand::SetWorldTransform { key, position, rotation, scale } => {
            put_u32(&mut params, *key);
            put_f32s(&mut params, position);
            put_f32s(&mut params, rotation);
            put_f32s(&mut params, scale);
        }
        SceneCommand::SetColor { key, rgba } => {
            check_rgba(rgba)?;
            put_u32(&mut params, *key);
            put_f32s(&mut params, rgba);
        }
        SceneCommand::SetTexture { key, image } => {
            put_u32(&mut params, *key);
            params.extend_from_slice(image);
        }
        SceneCommand::CreateText => {}
        SceneCommand::SetText { key, font_size, rgba, text } => {
            check_rgba(rgba)?;
            put_u32(&mut params, *key);
            params.extend_from_slice(&font_size.to_le_bytes());
            put_f32s(&mut params, rgba);
            params.extend_from_slice(text.as_bytes());
        }
        SceneCommand::Remove { key } => put_u32(&mut params, *key),
        SceneCommand::RemoveAll
        | SceneCommand::BeginDisplayList
        | SceneCommand::EndDisplayList => {}
        SceneCommand::SetTargetMode { mode } => put_u32(&mut params, *mode),
    }
    Ok(IpcMessage { command_id: cmd.command_id(), params })
}

/// Parse an IPC message back into a scene command. The emulator's decode
/// side of [`encode_scene`]; unknown ids (including the hole at 3) fail.
pub fn decode_scene(msg: &IpcMessage) -> Result<SceneCommand, ControlError> {
    let id = msg.command_id;
    let p = &msg.params[..];
    let need = |n: usize| -> Result<(), ControlError> {
        if p.len() != n {
            Err(ControlError::SceneParams {
                id,
                reason: format!("expected {n} parameter bytes, got {}", p.len()),
            })
        } else {
            Ok(())
        }
    };
    let need_at_least = |n: usize| -> Result<(), ControlError> {
        if p.len() < n {
            Err(ControlError::SceneParams {
                id,
                reason: format!("expected at least {n} parameter bytes, got {}", p.len()),
            })
        } else {
            Ok(())
        }
    };
    let u32_at = |o: usize| u32::from_le_bytes(p[o..o + 4].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(p[o..o + 4].try_into().unwrap());
    let vec3_at = |o: usize| [f32_at(o), f32_at(o + 4), f32_at(o + 8)];
    let vec4_at = |o: usize| [f32_at(o), f32_at(o + 4), f32_at(o + 8), f32_at(o + 12)];

    Ok(match id {
        0 => {
            need(4)?;
            SceneCommand::CreatePrimitive { kind: PrimitiveKind::from_u32(u32_at(0))? }
        }
        1 => {
            need(8)?;
            SceneCommand::SetActive { key: u32_at(0), state: u32_at(4) }
        }
        2 => {
            need(44)?;
            SceneCommand::SetWorldTransform {
                key: u32_at(0),
                position: vec3_at(4),
                rotation: vec4_at(16),
                scale: vec3_at(32),
            }
        }
        4 => {
            need(20)?;
            let rgba = vec4_at(4);
            check_rgba(&rgba)?;
            SceneCommand::SetColor { key: u32_at(0), rgba }
        }
        5 => {
            need_at_least(4)?;
            SceneCommand::SetTexture { key: u32_at(0), image: p[4..].to_vec() }
        }
        6 => {
            need(0)?;
            SceneCommand::CreateText
        }
        7 => {
            need_at_least(24)?;
            let rgba = vec4_at(8);
            check_rgba(&rgba)?;
            let text = std::str::from_utf8(&p[24..])
                .map_err(|e| ControlError::SceneParams { id, reason: e.to_string() })?
                .to_string();
            SceneCommand::SetText { key: u32_at(0), font_size: f32_at(4), rgba, text }
        }
        16 => {
            need(4)?;
            SceneCommand::Remove { key: u32_at(0) }
        }
        17 => {
            need(0)?;
            SceneCommand::RemoveAll
        }
        18 => {
            need(0)?;
            SceneCommand::BeginDisplayList
        }
        19 => {
            need(0)?;
            SceneCommand::EndDisplayList
        }
        20 => {
            need(4)?;
            SceneCommand::SetTargetMode { mode: u32_at(0) }
        }
        other => return Err(ControlError::UnknownCommandId(other)),
    })
}
