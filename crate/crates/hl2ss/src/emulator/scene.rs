//! Remote-scene state machine behind the Unity IPC port.
//!
//! The emulator keeps scene objects as plain data; nothing is rendered.
//! Every applied command returns the protocol's 4-byte value: a fresh key
//! for creator commands, otherwise 1 for success and 0 for failure.

use crate::control::{PrimitiveKind, SceneCommand};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectKind {
    Primitive(PrimitiveKind),
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub kind: ObjectKind,
    pub active: bool,
    pub position: [f32; 3],
    pub rotation: [f32; 4],
    pub scale: [f32; 3],
    pub rgba: [f32; 4],
    pub texture: Option<Vec<u8>>,
    pub text: Option<String>,
    pub font_size: f32,
}

impl SceneObject {
    fn new(kind: ObjectKind) -> SceneObject {
        SceneObject {
            kind,
            active: true,
            position: [0.0; 3],
            rotation: [0.0, 0.0, 0.0, 1.0],
            scale: [1.0; 3],
            rgba: [1.0; 4],
            texture: None,
            text: None,
            font_size: 0.0,
        }
    }
}

pub const REPLY_OK: u32 = 1;
pub const REPLY_FAIL: u32 = 0;

/// All objects created over the IPC port. Keys are unique and never reused
/// within a run; they start at 1 so a key can never read as a failure reply.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneState {
    objects: BTreeMap<u32, SceneObject>,
    next_key: u32,
    target_mode: u32,
    last_key: Option<u32>,
}

impl SceneState {
    pub fn new() -> SceneState {
        SceneState { objects: BTreeMap::new(), next_key: 1, target_mode: 0, last_key: None }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, key: u32) -> Option<&SceneObject> {
        self.objects.get(&key)
    }

    pub fn objects(&self) -> impl Iterator<Item = (u32, &SceneObject)> {
        self.objects.iter().map(|(k, v)| (*k, v))
    }

    pub fn target_mode(&self) -> u32 {
        self.target_mode
    }

    pub fn last_key(&self) -> Option<u32> {
        self.last_key
    }

    fn create(&mut self, kind: ObjectKind) -> u32 {
        let key = self.next_key;
        self.next_key += 1;
        self.objects.insert(key, SceneObject::new(kind));
        self.last_key = Some(key);
        key
    }

    /// In target mode 1 the key parameter is ignored and property commands
    /// apply to the last created object.
    fn resolve(&mut self, key: u32) -> Option<&mut SceneObject> {
        let key = if self.target_mode == 1 { self.last_key? } else { key };
        self.objects.get_mut(&key)
    }

    /// Apply one command, returning the 4-byte reply value.
    pub fn apply(&mut self, cmd: &SceneCommand) -> u32 {
        match cmd {
            SceneCommand::CreatePrimitive { kind } => self.create(ObjectKind::Primitive(*kind)),
            SceneCommand::CreateText => self.create(ObjectKind::Text),
            SceneCommand::SetActive { key, state } => match self.resolve(*key) {
                Some(obj) => {
                    obj.active = *state != 0;
                    REPLY_OK
                }
                None => REPLY_FAIL,
            },
            SceneCommand::SetWorldTransform { key, position, rotation, scale } => {
                match self.resolve(*key) {
                    Some(obj) => {
                        obj.position = *position;
                        obj.rotation = *rotation;
                        obj.scale = *scale;
                        REPLY_OK
                    }
                    None => REPLY_FAIL,
                }
            }
            SceneCommand::SetColor { key, rgba } => match self.resolve(*key) {
                Some(obj) => {
                    obj.rgba = *rgba;
                    REPLY_OK
                }
                None => REPLY_FAIL,
            },
            SceneCommand::SetTexture { key, image } => match self.resolve(*key) {
                Some(obj) => {
                    obj.texture = Some(image.clone());
                    REPLY_OK
                }
                None => REPLY_FAIL,
            },
            SceneCommand::SetText { key, font_size, rgba, text } => match self.resolve(*key) {
                Some(obj) if obj.kind == ObjectKind::Text => {
                    obj.font_size = *font_size;
                    obj.rgba = *rgba;
                    obj.text = Some(text.clone());
                    REPLY_OK
                }
                _ => REPLY_FAIL,
            },
            SceneCommand::Remove { key } => {
                if self.objects.remove(key).is_some() {
                    REPLY_OK
                } else {
                    REPLY_FAIL
                }
            }
            SceneCommand::RemoveAll => {
                self.objects.clear();
                REPLY_OK
            }
            SceneCommand::BeginDisplayList | SceneCommand::EndDisplayList => REPLY_OK,
            SceneCommand::SetTargetMode { mode } => {
                if *mode <= 1 {
                    self.target_mode = *mode;
                    REPLY_OK
                } else {
                    REPLY_FAIL
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn create_and_color_a_cube() {
        let mut scene = SceneState::new();
        let key = scene.apply(&SceneCommand::CreatePrimitive { kind: PrimitiveKind::Cube });
        assert!(key >= 1);
        let ok = scene.apply(&SceneCommand::SetColor { key, rgba: [1.0, 0.0, 0.0, 1.0] });
        assert_eq!(ok, REPLY_OK);
        assert_eq!(scene.len(), 1);
        let obj = scene.get(key).unwrap();
        assert_eq!(obj.kind, ObjectKind::Primitive(PrimitiveKind::Cube));
        assert_eq!(obj.rgba, [1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn unknown_key_fails() {
        let mut scene = SceneState::new();
        assert_eq!(scene.apply(&SceneCommand::SetActive { key: 99, state: 1 }), REPLY_FAIL);
        assert_eq!(scene.apply(&SceneCommand::Remove { key: 99 }), REPLY_FAIL);
    }

    #[test]
    fn keys_are_never_reused() {
        let mut scene = SceneState::new();
        let a = scene.apply(&SceneCommand::CreatePrimitive { kind: PrimitiveKind::Sphere });
        scene.apply(&SceneCommand::Remove { key: a });
        let b = scene.apply(&SceneCommand::CreatePrimitive { kind: PrimitiveKind::Sphere });
        assert_ne!(a, b);
        scene.apply(&SceneCommand::RemoveAll);
        let c = scene.apply(&SceneCommand::CreateText);
        assert_ne!(b, c);
    }

    #[test]
    fn target_mode_1_redirects_to_last_created() {
        let mut scene = SceneState::new();
        assert_eq!(scene.apply(&SceneCommand::SetTargetMode { mode: 1 }), REPLY_OK);
        let key = scene.apply(&SceneCommand::CreateText);
        // the key parameter is ignored in mode 1
        let ok = scene.apply(&SceneCommand::SetText {
            key: 999,
            font_size: 0.5,
            rgba: [0.0, 0.0, 1.0, 1.0],
            text: "hi".into(),
        });
        assert_eq!(ok, REPLY_OK);
        assert_eq!(scene.get(key).unwrap().text.as_deref(), Some("hi"));
    }

    #[test]
    fn remove_all_is_idempotent() {
        let mut scene = SceneState::new();
        assert_eq!(scene.apply(&SceneCommand::RemoveAll), REPLY_OK);
        scene.apply(&SceneCommand::CreatePrimitive { kind: PrimitiveKind::Quad });
        assert_eq!(scene.apply(&SceneCommand::RemoveAll), REPLY_OK);
        assert!(scene.is_empty());
    }

    #[test]
    fn set_text_on_primitive_fails() {
        let mut scene = SceneState::new();
        let key = scene.apply(&SceneCommand::CreatePrimitive { kind: PrimitiveKind::Plane });
        let r = scene.apply(&SceneCommand::SetText {
            key,
            font_size: 1.0,
            rgba: [1.0; 4],
            text: "x".into(),
        });
        assert_eq!(r, REPLY_FAIL);
    }

    #[test]
    fn display_list_hints_are_accepted_noops() {
        let mut scene = SceneState::new();
        assert_eq!(scene.apply(&SceneCommand::BeginDisplayList), REPLY_OK);
        assert_eq!(scene.apply(&SceneCommand::EndDisplayList), REPLY_OK);
        assert_eq!(scene, { let mut s = SceneState::new(); s.apply(&SceneCommand::BeginDisplayList); s });
    }
}
