//! Scene, camera, and image serialization.
//!
//! Loading never activates parameters: PLY fields map one-to-one onto the
//! raw (pre-sigmoid, pre-exp) Gaussian fields. Metric-grade images go
//! through PFM; PNG output is 8-bit sRGB for viewing only.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use stochsplat_core::math::{Mat3, Vec3, Vec4};
use stochsplat_core::scene::{Camera, Gaussian3D, Scene};
use stochsplat_core::Image;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed PLY header at byte {offset}: {message}")]
    MalformedHeader { offset: usize, message: String },
    #[error("unsupported PLY encoding at byte {offset}: only binary_little_endian 1.0 is supported")]
    UnsupportedEncoding { offset: usize },
    #[error("unexpected PLY property at byte {offset}: expected `{expected}`, found `{found}`")]
    UnexpectedProperty { offset: usize, expected: String, found: String },
    #[error("truncated PLY payload at byte {offset}: need {needed} bytes, {available} available")]
    TruncatedPayload { offset: usize, needed: usize, available: usize },
    #[error("camera JSON parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid camera {index}: {message}")]
    InvalidCamera { index: usize, message: String },
    #[error("image encode error: {0}")]
    Image(#[from] image::ImageError),
    #[error("malformed PFM: {0}")]
    Pfm(String),
}

/// Vertex property schema of the splat interchange format, in file order.
const PLY_PROPERTIES: [&str; 62] = [
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "f_rest_0", "f_rest_1",
    "f_rest_2", "f_rest_3", "f_rest_4", "f_rest_5", "f_rest_6", "f_rest_7", "f_rest_8",
    "f_rest_9", "f_rest_10", "f_rest_11", "f_rest_12", "f_rest_13", "f_rest_14", "f_rest_15",
    "f_rest_16", "f_rest_17", "f_rest_18", "f_rest_19", "f_rest_20", "f_rest_21", "f_rest_22",
    "f_rest_23", "f_rest_24", "f_rest_25", "f_rest_26", "f_rest_27", "f_rest_28", "f_rest_29",
    "f_rest_30", "f_rest_31", "f_rest_32", "f_rest_33", "f_rest_34", "f_rest_35", "f_rest_36",
    "f_rest_37", "f_rest_38", "f_rest_39", "f_rest_40", "f_rest_41", "f_rest_42", "f_rest_43",
    "f_rest_44", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
];

/// Loads a binary-little-endian splat PLY into raw Gaussian parameters.
pub fn load_ply(path: &Path) -> Result<Scene, IoError> {
    let bytes = fs::read(path)?;
    parse_ply(&bytes)
}

pub fn parse_ply(bytes: &[u8]) -> Result<Scene, IoError> {
    let mut offset = 0usize;
    let mut next_line = |bytes: &[u8]| -> Result<(usize, String), IoError> {
        let start = offset;
        let rest = &bytes[offset..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or(IoError::MalformedHeader {
            offset: start,
            message: "unterminated header line".into(),
        })?;
        offset = start + end + 1;
        let line = String::from_utf8_lossy(&rest[..end]).trim_end_matches('\r').to_string();
        Ok((start, line))
    };

    let (off, magic) = next_line(bytes)?;
    if magic != "ply" {
        return Err(IoError::MalformedHeader { offset: off, message: format!("expected `ply`, found `{magic}`") });
    }
    let (off, format) = next_line(bytes)?;
    if format != "format binary_little_endian 1.0" {
        return Err(IoError::UnsupportedEncoding { offset: off });
    }

    // skip comments, then require the vertex element
    let (off, element) = loop {
        let (off, line) = next_line(bytes)?;
        if !line.starts_with("comment") {
            break (off, line);
        }
    };
    let count: usize = element
        .strip_prefix("element vertex ")
        .and_then(|n| n.parse().ok())
        .ok_or(IoError::MalformedHeader {
            offset: off,
            message: format!("expected `element vertex N`, found `{element}`"),
        })?;

    for expected in PLY_PROPERTIES {
        let (off, line) = next_line(bytes)?;
        let want = format!("property float {expected}");
        if line != want {
            return Err(IoError::UnexpectedProperty { offset: off, expected: want, found: line });
        }
    }
    let (off, end) = next_line(bytes)?;
    if end != "end_header" {
        return Err(IoError::MalformedHeader { offset: off, message: format!("expected `end_header`, found `{end}`") });
    }

    let needed = count * 62 * 4;
    let payload = &bytes[offset..];
    if payload.len() < needed {
        return Err(IoError::TruncatedPayload { offset, needed, available: payload.len() });
    }

    let mut gaussians = Vec::with_capacity(count);
    for i in 0..count {
        let row = &payload[i * 62 * 4..(i + 1) * 62 * 4];
        let f = |k: usize| LittleEndian::read_f32(&row[k * 4..k * 4 + 4]) as f64;
        let mut sh = [[0.0; 3]; 16];
        sh[0] = [f(6), f(7), f(8)];
        // f_rest is channel-major: 15 R coefficients, then 15 G, then 15 B
        for k in 0..15 {
            sh[k + 1] = [f(9 + k), f(9 + 15 + k), f(9 + 30 + k)];
        }
        gaussians.push(Gaussian3D {
            position: Vec3::new(f(0), f(1), f(2)),
            sh_coeffs: sh,
            opacity_logit: f(54),
            log_scale: Vec3::new(f(55), f(56), f(57)),
            rotation: Vec4::new(f(58), f(59), f(60), f(61)),
        });
    }
    Ok(Scene { gaussians, sh_degree: 3 })
}

/// Writes the canonical binary splat PLY (normals zeroed, no comments).
pub fn save_ply(scene: &Scene, path: &Path) -> Result<(), IoError> {
    let bytes = serialize_ply(scene);
    fs::write(path, bytes)?;
    Ok(())
}

pub fn serialize_ply(scene: &Scene) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", scene.gaussians.len()).as_bytes());
    for p in PLY_PROPERTIES {
        out.extend_from_slice(format!("property float {p}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    let mut buf = [0u8; 4];
    let mut put = |out: &mut Vec<u8>, v: f64| {
        LittleEndian::write_f32(&mut buf, v as f32);
        out.extend_from_slice(&buf);
    };
    for g in &scene.gaussians {
        for k in 0..3 {
            put(&mut out, g.position[k]);
        }
        for _ in 0..3 {
            put(&mut out, 0.0); // normals unused
        }
        for ch in 0..3 {
            put(&mut out, g.sh_coeffs[0][ch]);
        }
        for ch in 0..3 {
            for k in 0..15 {
                put(&mut out, g.sh_coeffs[k + 1][ch]);
            }
        }
        put(&mut out, g.opacity_logit);
        for k in 0..3 {
            put(&mut out, g.log_scale[k]);
        }
        for k in 0..4 {
            put(&mut out, g.rotation[k]);
        }
    }
    out
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct CameraRecord {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major world-to-camera rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
}

impl CameraRecord {
    pub fn to_camera(&self) -> Camera {
        let r = &self.rotation;
        Camera {
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            rotation: Mat3::new(r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8]),
            translation: Vec3::new(self.translation[0], self.translation[1], self.translation[2]),
            near: 0.01,
            far: 1000.0,
        }
    }

    pub fn from_camera(id: &str, cam: &Camera) -> Self {
        let r = &cam.rotation;
        CameraRecord {
            id: id.to_string(),
            width: cam.width,
            height: cam.height,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            rotation: [
                r[(0, 0)], r[(0, 1)], r[(0, 2)],
                r[(1, 0)], r[(1, 1)], r[(1, 2)],
                r[(2, 0)], r[(2, 1)], r[(2, 2)],
            ],
            translation: [cam.translation[0], cam.translation[1], cam.translation[2]],
            image_path: None,
        }
    }
}

/// Loads a camera set, validating rotation orthonormality.
pub fn load_cameras(path: &Path) -> Result<Vec<CameraRecord>, IoError> {
    let text = fs::read_to_string(path)?;
    let records: Vec<CameraRecord> = serde_json::from_str(&text)?;
    for (index, rec) in records.iter().enumerate() {
        let cam = rec.to_camera();
        let err = (cam.rotation.transpose() * cam.rotation - Mat3::identity()).abs().max();
        if err > 1e-4 {
            return Err(IoError::InvalidCamera {
                index,
                message: format!("rotation not orthonormal (deviation {err:.2e})"),
            });
        }
        if rec.width == 0 || rec.height == 0 {
            return Err(IoError::InvalidCamera { index, message: "zero image dimension".into() });
        }
    }
    Ok(records)
}

pub fn save_cameras(records: &[CameraRecord], path: &Path) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(records)?;
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Png8,
    Pfm,
}

fn srgb_encode(linear: f64) -> u8 {
    let c = linear.clamp(0.0, 1.0);
    let v = if c <= 0.003_130_8 { 12.92 * c } else { 1.055 * c.powf(1.0 / 2.4) - 0.055 };
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes a linear image: PNG8 with sRGB encoding, or lossless float PFM.
pub fn write_image(img: &Image, path: &Path, format: ImageFormat) -> Result<(), IoError> {
    match format {
        ImageFormat::Png8 => {
            let mut buf = image::RgbImage::new(img.width, img.height);
            for y in 0..img.height {
                for x in 0..img.width {
                    let p = img.get(x, y);
                    buf.put_pixel(
                        x,
                        y,
                        image::Rgb([srgb_encode(p[0]), srgb_encode(p[1]), srgb_encode(p[2])]),
                    );
                }
            }
            buf.save_with_format(path, image::ImageFormat::Png)?;
            Ok(())
        }
        ImageFormat::Pfm => {
            let mut file = fs::File::create(path)?;
            write!(file, "PF\n{} {}\n-1.0\n", img.width, img.height)?;
            let mut row = Vec::with_capacity(img.width as usize * 12);
            // PFM stores rows bottom to top
            for y in (0..img.height).rev() {
                row.clear();
                for x in 0..img.width {
                    let p = img.get(x, y);
                    for ch in 0..3 {
                        let mut b = [0u8; 4];
                        LittleEndian::write_f32(&mut b, p[ch] as f32);
                        row.extend_from_slice(&b);
                    }
                }
                file.write_all(&row)?;
            }
            Ok(())
        }
    }
}

/// Reads a little-endian color PFM.
pub fn read_pfm(path: &Path) -> Result<Image, IoError> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let mut token = || -> Result<String, IoError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::Pfm("unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).to_string())
    };
    let magic = token()?;
    if magic != "PF" {
        return Err(IoError::Pfm(format!("expected `PF`, found `{magic}`")));
    }
    let width: u32 = token()?.parse().map_err(|_| IoError::Pfm("bad width".into()))?;
    let height: u32 = token()?.parse().map_err(|_| IoError::Pfm("bad height".into()))?;
    let scale: f64 = token()?.parse().map_err(|_| IoError::Pfm("bad scale".into()))?;
    if scale >= 0.0 {
        return Err(IoError::Pfm("big-endian PFM not supported".into()));
    }
    pos += 1; // single whitespace after the scale line
    let needed = width as usize * height as usize * 12;
    if bytes.len() < pos + needed {
        return Err(IoError::Pfm(format!(
            "payload truncated: need {needed} bytes, have {}",
            bytes.len() - pos
        )));
    }
    let mut img = Image::new(width, height);
    for row in 0..height {
        let y = height - 1 - row;
        for x in 0..width {
            let base = pos + (row as usize * width as usize + x as usize) * 12;
            let mut p = [0.0; 3];
            for ch in 0..3 {
                p[ch] = LittleEndian::read_f32(&bytes[base + ch * 4..base + ch * 4 + 4]) as f64;
            }
            img.set(x, y, p);
        }
    }
    Ok(img)
}
