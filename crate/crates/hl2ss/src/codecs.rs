//! Payload codecs: the lossless depth+AB PNG codec, the RAW passthrough
//! codec, and the plug-in boundary where real video/audio decoders attach.
//!
//! The depth stream packs the 16-bit depth and active-brightness images into
//! one 8-bit RGBA PNG, little-endian within each 16-bit value:
//!
//! ```text
//! channel 0 = depth low byte    channel 2 = AB low byte
//! channel 1 = depth high byte   channel 3 = AB high byte
//! ```
//!
//! Depth pixels flagged invalid by the sigma channel are zeroed before
//! packing; the sigma channel itself never leaves the device.
//!
//! The RAW codec is the identity on bytes behind a 16-byte header and stands
//! in for the H264/HEVC/AAC profiles so the full pipeline runs losslessly
//! and deterministically. Real decoders plug in behind [`PayloadCodec`].

use crate::raster::Image;
use std::io::Cursor;
use thiserror::Error;

/// Depth and AB image width in pixels.
pub const DEPTH_WIDTH: usize = 320;
/// Depth and AB image height in pixels.
pub const DEPTH_HEIGHT: usize = 288;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("image dimensions {got_w}x{got_h} do not match the expected {want_w}x{want_h}")]
    WrongDimensions { want_w: usize, want_h: usize, got_w: usize, got_h: usize },
    #[error("PNG must be 8-bit RGBA, got {0}")]
    WrongPngFormat(String),
    #[error("png encode: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("png decode: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("payload shorter than the {0}-byte raw header")]
    RawTruncated(usize),
    #[error("raw header magic mismatch")]
    RawBadMagic,
}

/// Paired 16-bit depth (millimeters) and active-brightness images.
/// Dimensions are fixed at 320x288; depth 0 denotes an invalid pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthAbImage {
    pub depth: Image<u16>,
    pub ab: Image<u16>,
}

impl DepthAbImage {
    pub fn new() -> DepthAbImage {
        DepthAbImage {
            depth: Image::new(DEPTH_WIDTH, DEPTH_HEIGHT),
            ab: Image::new(DEPTH_WIDTH, DEPTH_HEIGHT),
        }
    }

    pub fn from_images(depth: Image<u16>, ab: Image<u16>) -> Result<DepthAbImage, CodecError> {
        for img in [&depth, &ab] {
            if img.width() != DEPTH_WIDTH || img.height() != DEPTH_HEIGHT {
                return Err(CodecError::WrongDimensions {
                    want_w: DEPTH_WIDTH,
                    want_h: DEPTH_HEIGHT,
                    got_w: img.width(),
                    got_h: img.height(),
                });
            }
        }
        Ok(DepthAbImage { depth, ab })
    }
}

impl Default for DepthAbImage {
    fn default() -> Self {
        DepthAbImage::new()
    }
}

/// 8-bit per-pixel depth validity indicator; nonzero marks invalid depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmaMask(pub Image<u8>);

impl SigmaMask {
    pub fn new() -> SigmaMask {
        SigmaMask(Image::new(DEPTH_WIDTH, DEPTH_HEIGHT))
    }
}

impl Default for SigmaMask {
    fn default() -> Self {
        SigmaMask::new()
    }
}

/// Copy of `img` with depth zeroed wherever the sigma channel is nonzero.
/// AB is unaffected.
pub fn apply_sigma_mask(img: &DepthAbImage, mask: &SigmaMask) -> DepthAbImage {
    let mut out = img.clone();
    for (d, &s) in out.depth.data_mut().iter_mut().zip(mask.0.data()) {
        if s != 0 {
            *d = 0;
        }
    }
    out
}

fn check_depth_dims(w: usize, h: usize) -> Result<(), CodecError> {
    if w != DEPTH_WIDTH || h != DEPTH_HEIGHT {
        return Err(CodecError::WrongDimensions {
            want_w: DEPTH_WIDTH,
            want_h: DEPTH_HEIGHT,
            got_w: w,
            got_h: h,
        });
    }
    Ok(())
}

/// Encode depth+AB as one 320x288 8-bit RGBA PNG, zeroing sigma-invalid
/// depth pixels first. Lossless: [`decode_depth_png`] recovers the masked
/// image exactly.
pub fn encode_depth_png(img: &DepthAbImage, mask: &SigmaMask) -> Result<Vec<u8>, CodecError> {
    check_depth_dims(mask.0.width(), mask.0.height())?;
    let depth = img.depth.data();
    let ab = img.ab.data();
    let sigma = mask.0.data();

    let mut interleaved = vec![0u8; DEPTH_WIDTH * DEPTH_HEIGHT * 4];
    for i in 0..DEPTH_WIDTH * DEPTH_HEIGHT {
        let d = if sigma[i] != 0 { 0 } else { depth[i] };
        let [d_lo, d_hi] = d.to_le_bytes();
        let [ab_lo, ab_hi] = ab[i].to_le_bytes();
        interleaved[i * 4..i * 4 + 4].copy_from_slice(&[d_lo, d_hi, ab_lo, ab_hi]);
    }

    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, DEPTH_WIDTH as u32, DEPTH_HEIGHT as u32);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&interleaved)?;
    }
    Ok(out)
}

/// Decode the 4-channel depth+AB PNG produced by [`encode_depth_png`].
pub fn decode_depth_png(payload: &[u8]) -> Result<DepthAbImage, CodecError> {
    let decoder = png::Decoder::new(Cursor::new(payload));
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0u8; reader.output_buffer_size().expect("png buffer size")];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Rgba || info.bit_depth != png::BitDepth::Eight {
        return Err(CodecError::WrongPngFormat(format!(
            "{:?}/{:?}",
            info.color_type, info.bit_depth
        )));
    }
    check_depth_dims(info.width as usize, info.height as usize)?;

    let n = DEPTH_WIDTH * DEPTH_HEIGHT;
    let mut depth = vec![0u16; n];
    let mut ab = vec![0u16; n];
    for i in 0..n {
        let px = &buf[i * 4..i * 4 + 4];
        depth[i] = u16::from_le_bytes([px[0], px[1]]);
        ab[i] = u16::from_le_bytes([px[2], px[3]]);
    }
    Ok(DepthAbImage {
        depth: Image::from_vec(DEPTH_WIDTH, DEPTH_HEIGHT, depth).unwrap(),
        ab: Image::from_vec(DEPTH_WIDTH, DEPTH_HEIGHT, ab).unwrap(),
    })
}

// ---------------------------------------------------------------------------
// RAW codec and the decoder plug-in boundary
// ---------------------------------------------------------------------------

/// Magic prefix of RAW-coded payloads.
pub const RAW_MAGIC: [u8; 8] = *b"HL2SRAW0";
/// Header: magic + u32 width + u32 height, little-endian.
pub const RAW_HEADER_LEN: usize = 16;

/// An uncompressed frame as it crosses the codec boundary. The meaning of
/// `width`/`height` is per-stream (e.g. the microphone uses width = samples
/// per channel, height = channels).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

/// Codec boundary for the profile-selected video/audio payloads. The RAW
/// test codec ships here; H264/HEVC/AAC implementations plug in behind the
/// same interface.
pub trait PayloadCodec: Send + Sync {
    fn id(&self) -> &'static str;
    fn encode(&self, frame: &RawFrame) -> Result<Vec<u8>, CodecError>;
    fn decode(&self, payload: &[u8]) -> Result<RawFrame, CodecError>;
}

/// Identity codec: 16-byte header carrying (width, height), then the frame
/// bytes verbatim.
#[derive(Debug, Clone, Copy, Default)]
pub struct RawCodec;

impl PayloadCodec for RawCodec {
    fn id(&self) -> &'static str {
        "raw"
    }

    fn encode(&self, frame: &RawFrame) -> Result<Vec<u8>, CodecError> {
        let mut out = Vec::with_capacity(RAW_HEADER_LEN + frame.data.len());
        out.extend_from_slice(&RAW_MAGIC);
        out.extend_from_slice(&frame.width.to_le_bytes());
        out.extend_from_slice(&frame.height.to_le_bytes());
        out.extend_from_slice(&frame.data);
        Ok(out)
    }

    fn decode(&self, payload: &[u8]) -> Result<RawFrame, CodecError> {
        if payload.len() < RAW_HEADER_LEN {
            return Err(CodecError::RawTruncated(RAW_HEADER_LEN));
        }
        if payload[..8] != RAW_MAGIC {
            return Err(CodecError::RawBadMagic);
        }
        let width = u32::from_le_bytes(payload[8..12].try_into().unwrap());
        let height = u32::from_le_bytes(payload[12..16].try_into().unwrap());
        Ok(RawFrame { width, height, data: payload[RAW_HEADER_LEN..].to_vec() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_with(pixels: &[(usize, usize, u16)]) -> Image<u16> {
        let mut img = Image::new(DEPTH_WIDTH, DEPTH_HEIGHT);
        for &(x, y, v) in pixels {
            img.put(x, y, v);
        }
        img
    }

    #[test]
    fn all_zero_roundtrip() {
        let img = DepthAbImage::new();
        let png = encode_depth_png(&img, &SigmaMask::new()).unwrap();
        assert_eq!(decode_depth_png(&png).unwrap(), img);
    }

    #[test]
    fn single_pixel_depth_survives() {
        let img = DepthAbImage {
            depth: image_with(&[(10, 20, 1000)]),
            ab: image_with(&[(10, 20, 77)]),
        };
        let png = encode_depth_png(&img, &SigmaMask::new()).unwrap();
        let back = decode_depth_png(&png).unwrap();
        assert_eq!(back.depth.get(10, 20), 1000);
        assert_eq!(back.ab.get(10, 20), 77);
        assert_eq!(back, img);
    }

    #[test]
    fn sigma_invalid_pixel_decodes_to_zero_depth() {
        let img = DepthAbImage {
            depth: image_with(&[(10, 20, 1000)]),
            ab: image_with(&[(10, 20, 77)]),
        };
        let mut mask = SigmaMask::new();
        mask.0.put(10, 20, 255);
        let back = decode_depth_png(&encode_depth_png(&img, &mask).unwrap()).unwrap();
        assert_eq!(back.depth.get(10, 20), 0);
        // AB is not gated by sigma.
        assert_eq!(back.ab.get(10, 20), 77);
        assert_eq!(back, apply_sigma_mask(&img, &mask));
    }

    #[test]
    fn truncated_png_is_an_error() {
        let img = DepthAbImage::new();
        let png = encode_depth_png(&img, &SigmaMask::new()).unwrap();
        assert!(decode_depth_png(&png[..png.len() / 2]).is_err());
        assert!(decode_depth_png(&[]).is_err());
    }

    #[test]
    fn wrong_dimensions_are_rejected() {
        // A well-formed 321x288 RGBA PNG must fail the dimension check.
        let mut bytes = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut bytes, 321, 288);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&vec![0u8; 321 * 288 * 4]).unwrap();
        }
        assert!(matches!(
            decode_depth_png(&bytes),
            Err(CodecError::WrongDimensions { got_w: 321, .. })
        ));
    }

    #[test]
    fn grayscale_png_is_rejected() {
        let mut bytes = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut bytes, 320, 288);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&vec![0u8; 320 * 288]).unwrap();
        }
        assert!(matches!(decode_depth_png(&bytes), Err(CodecError::WrongPngFormat(_))));
    }

    #[test]
    fn channel_packing_is_little_endian() {
        let img = DepthAbImage {
            depth: image_with(&[(0, 0, 0x1234)]),
            ab: image_with(&[(0, 0, 0xABCD)]),
        };
        let png_bytes = encode_depth_png(&img, &SigmaMask::new()).unwrap();
        // Check the first pixel through an independent decode path.
        let decoded = lodepng::decode32(&png_bytes).unwrap();
        assert_eq!(decoded.width, DEPTH_WIDTH);
        assert_eq!(decoded.height, DEPTH_HEIGHT);
        let px = decoded.buffer[0];
        assert_eq!([px.r, px.g, px.b, px.a], [0x34, 0x12, 0xCD, 0xAB]);
        assert_eq!(px.r as u16 | (px.g as u16) << 8, 0x1234);
    }

    #[test]
    fn raw_codec_roundtrip() {
        let codec = RawCodec;
        let empty = RawFrame { width: 0, height: 0, data: vec![] };
        assert_eq!(codec.decode(&codec.encode(&empty).unwrap()).unwrap(), empty);

        let frame = RawFrame {
            width: 640,
            height: 480,
            data: (0..640 * 480).map(|i| (i * 31 % 251) as u8).collect(),
        };
        let bytes = codec.encode(&frame).unwrap();
        assert_eq!(bytes.len(), RAW_HEADER_LEN + frame.data.len());
        assert_eq!(codec.decode(&bytes).unwrap(), frame);
    }

    #[test]
    fn raw_codec_rejects_bad_magic() {
        let codec = RawCodec;
        let mut bytes = codec.encode(&RawFrame { width: 1, height: 1, data: vec![7] }).unwrap();
        bytes[0] ^= 0xFF;
        assert!(matches!(codec.decode(&bytes), Err(CodecError::RawBadMagic)));
        assert!(matches!(codec.decode(&bytes[..8]), Err(CodecError::RawTruncated(_))));
    }
}
