//! Splat scenes, camera poses and segmentation masks, plus their file formats.
//!
//! Splats are read from and written to binary little-endian PLY using the
//! usual trained-splat vertex layout. Opacity and scale stay in
//! pre-activation space (logit / log) everywhere outside the renderer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Quat, Vec3};

/// Higher-order spherical-harmonic color coefficients, `width` per Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct RestColors {
    pub width: usize,
    pub values: Vec<f64>,
}

impl RestColors {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    pub centers: Vec<Vec3>,
    /// `[w, x, y, z]`, unnormalized as stored.
    pub rotations: Vec<Quat>,
    /// Opacity logits.
    pub opacities: Vec<f64>,
    /// Per-axis log-scales.
    pub scales: Vec<Vec3>,
    /// Degree-0 SH coefficients.
    pub colors_dc: Vec<Vec3>,
    pub colors_rest: Option<RestColors>,
}

impl GaussianScene {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Checks array lengths agree, the scene is non-empty and every value is finite.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let rest_ok = self
            .colors_rest
            .as_ref()
            .is_none_or(|r| r.values.len() == n * r.width);
        if self.rotations.len() != n
            || self.opacities.len() != n
            || self.scales.len() != n
            || self.colors_dc.len() != n
            || !rest_ok
        {
            return Err(Error::Shape(format!(
                "attribute arrays disagree on the Gaussian count {n}"
            )));
        }
        for i in 0..n {
            let finite = self.centers[i].iter().all(|v| v.is_finite())
                && self.rotations[i].iter().all(|v| v.is_finite())
                && self.opacities[i].is_finite()
                && self.scales[i].iter().all(|v| v.is_finite())
                && self.colors_dc[i].iter().all(|v| v.is_finite())
                && self
                    .colors_rest
                    .as_ref()
                    .is_none_or(|r| r.row(i).iter().all(|v| v.is_finite()));
            if !finite {
                return Err(Error::InvalidValue { index: i });
            }
        }
        Ok(())
    }

    /// New scene holding the Gaussians at `ids`, in that order.
    pub fn select(&self, ids: &[usize]) -> GaussianScene {
        GaussianScene {
            centers: ids.iter().map(|&i| self.centers[i]).collect(),
            rotations: ids.iter().map(|&i| self.rotations[i]).collect(),
            opacities: ids.iter().map(|&i| self.opacities[i]).collect(),
            scales: ids.iter().map(|&i| self.scales[i]).collect(),
            colors_dc: ids.iter().map(|&i| self.colors_dc[i]).collect(),
            colors_rest: self.colors_rest.as_ref().map(|r| RestColors {
                width: r.width,
                values: ids.iter().flat_map(|&i| r.row(i).iter().copied()).collect(),
            }),
        }
    }
}

/// A pinhole camera. `rotation` maps world to camera coordinates and `center`
/// is the camera position in world space.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub rotation: Mat3,
    pub center: Vec3,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// 8-bit segmentation mask; nonzero pixels are inside.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl Mask {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }
}

// ---------------------------------------------------------------------------
// PLY

const BASE_PROPS: [&str; 9] = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"];
const TAIL_PROPS: [&str; 8] = [
    "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
];

/// Property names of the canonical vertex layout with `rest` higher-order SH
/// coefficients.
pub fn canonical_properties(rest: usize) -> Vec<String> {
    BASE_PROPS
        .iter()
        .map(|s| s.to_string())
        .chain((0..rest).map(|i| format!("f_rest_{i}")))
        .chain(TAIL_PROPS.iter().map(|s| s.to_string()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, ScalarType)>,
}

impl Element {
    fn stride(&self) -> usize {
        self.props.iter().map(|(_, t)| t.size()).sum()
    }
}

fn parse_header(bytes: &[u8]) -> Result<(Vec<Element>, usize)> {
    const END: &[u8] = b"end_header";
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let nl = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse("PLY header is not terminated".into()))?;
        let raw = &bytes[pos..pos + nl];
        pos += nl + 1;
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        if raw == END {
            break;
        }
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::Parse("PLY header is not ASCII".into()))?;
        lines.push(line.to_string());
    }

    let mut it = lines.iter();
    if it.next().map(|s| s.trim()) != Some("ply") {
        return Err(Error::Parse("missing 'ply' magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    for line in it {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::Parse(format!("unsupported PLY format '{fmt}'")));
                }
                saw_format = true;
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", ..] => {
                return Err(Error::Parse("list properties are not supported".into()));
            }
            ["property", ty, name] => {
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| Error::Parse(format!("unknown property type '{ty}'")))?;
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Parse("property before any element".into()))?;
                el.props.push((name.to_string(), ty));
            }
            _ => return Err(Error::Parse(format!("unrecognized header line '{line}'"))),
        }
    }
    if !saw_format {
        return Err(Error::Parse("missing format line".into()));
    }
    Ok((elements, pos))
}

/// Parses a binary little-endian splat PLY.
pub fn parse_ply(bytes: &[u8]) -> Result<GaussianScene> {
    let (elements, body_start) = parse_header(bytes)?;
    let mut offset = body_start;
    let mut vertex = None;
    for el in &elements {
        if el.name == "vertex" {
            vertex = Some((el, offset));
            break;
        }
        offset += el.count * el.stride();
    }
    let (el, offset) = vertex.ok_or_else(|| Error::Parse("no vertex element".into()))?;
    let n = el.count;
    if n == 0 {
        return Err(Error::EmptyInput);
    }

    let col = |name: &str| el.props.iter().position(|(p, _)| p == name);
    let need = |name: &str| col(name).ok_or_else(|| Error::Parse(format!("missing property '{name}'")));
    let mut rest_cols = Vec::new();
    while let Some(c) = col(&format!("f_rest_{}", rest_cols.len())) {
        rest_cols.push(c);
    }
    let pos_cols = [need("x")?, need("y")?, need("z")?];
    let dc_cols = [need("f_dc_0")?, need("f_dc_1")?, need("f_dc_2")?];
    let opacity_col = need("opacity")?;
    let scale_cols = [need("scale_0")?, need("scale_1")?, need("scale_2")?];
    let rot_cols = [need("rot_0")?, need("rot_1")?, need("rot_2")?, need("rot_3")?];

    let stride = el.stride();
    let expected = offset + n * stride;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    let mut starts = Vec::with_capacity(el.props.len());
    let mut acc = 0;
    for (_, t) in &el.props {
        starts.push(acc);
        acc += t.size();
    }

    let mut scene = GaussianScene {
        centers: Vec::with_capacity(n),
        rotations: Vec::with_capacity(n),
        opacities: Vec::with_capacity(n),
        scales: Vec::with_capacity(n),
        colors_dc: Vec::with_capacity(n),
        colors_rest: (!rest_cols.is_empty()).then(|| RestColors {
            width: rest_cols.len(),
            values: Vec::with_capacity(n * rest_cols.len()),
        }),
    };
    for i in 0..n {
        let rec = &bytes[offset + i * stride..offset + (i + 1) * stride];
        let get = |c: usize| {
            let v = el.props[c].1.read(&rec[starts[c]..]);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidValue { index: i })
            }
        };
        scene.centers.push([get(pos_cols[0])?, get(pos_cols[1])?, get(pos_cols[2])?]);
        scene.colors_dc.push([get(dc_cols[0])?, get(dc_cols[1])?, get(dc_cols[2])?]);
        scene.opacities.push(get(opacity_col)?);
        scene.scales.push([get(scale_cols[0])?, get(scale_cols[1])?, get(scale_cols[2])?]);
        scene.rotations.push([
            get(rot_cols[0])?,
            get(rot_cols[1])?,
            get(rot_cols[2])?,
            get(rot_cols[3])?,
        ]);
        if let Some(rest) = scene.colors_rest.as_mut() {
            for &c in &rest_cols {
                rest.values.push(get(c)?);
            }
        }
    }
    Ok(scene)
}

/// Serializes a scene to the canonical splat PLY layout with zeroed normals.
/// Values are stored as 32-bit floats.
pub fn write_ply(scene: &GaussianScene) -> Vec<u8> {
    let n = scene.len();
    let rest = scene.colors_rest.as_ref().map_or(0, |r| r.width);
    let props = canonical_properties(rest);
    let mut header = format!("ply\nformat binary_little_endian 1.0\nelement vertex {n}\n");
    for p in &props {
        header.push_str("property float ");
        header.push_str(p);
        header.push('\n');
    }
    header.push_str("end_header\n");

    let mut out = Vec::with_capacity(header.len() + n * props.len() * 4);
    out.extend_from_slice(header.as_bytes());
    let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for i in 0..n {
        scene.centers[i].iter().for_each(|&v| put(v));
        (0..3).for_each(|_| put(0.0));
        scene.colors_dc[i].iter().for_each(|&v| put(v));
        if let Some(r) = &scene.colors_rest {
            r.row(i).iter().for_each(|&v| put(v));
        }
        put(scene.opacities[i]);
        scene.scales[i].iter().for_each(|&v| put(v));
        scene.rotations[i].iter().for_each(|&v| put(v));
    }
    out
}

// ---------------------------------------------------------------------------
// Cameras

#[derive(Debug, Serialize, Deserialize)]
struct CameraFile {
    cameras: Vec<CameraRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CameraRecord {
    rotation: Vec<f64>,
    center: Vec<f64>,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Parses the JSON camera list. Rotations may be `[w, x, y, z]` quaternions
/// or row-major 3x3 matrices.
pub fn load_cameras(text: &[u8]) -> Result<Vec<CameraPose>> {
    let file: CameraFile =
        serde_json::from_slice(text).map_err(|e| Error::Parse(format!("camera file: {e}")))?;
    file.cameras
        .into_iter()
        .enumerate()
        .map(|(index, rec)| {
            let rotation = match rec.rotation.as_slice() {
                &[w, x, y, z] => {
                    let q = [w, x, y, z];
                    if !(geom::quat_norm(q) > 1e-12) {
                        return Err(Error::InvalidRotation { index });
                    }
                    geom::quat_to_mat(q)
                }
                r if r.len() == 9 => [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]],
                r => {
                    return Err(Error::Parse(format!(
                        "camera {index}: rotation has {} entries, expected 4 or 9",
                        r.len()
                    )))
                }
            };
            if !(geom::orthonormality_error(&rotation) <= ORTHONORMAL_TOL)
                || geom::det(&rotation) <= 0.0
            {
                return Err(Error::InvalidRotation { index });
            }
            let center: Vec3 = rec.center.as_slice().try_into().map_err(|_| {
                Error::Parse(format!("camera {index}: center must have 3 entries"))
            })?;
            let finite = center.iter().chain([&rec.fx, &rec.fy, &rec.cx, &rec.cy]).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Parse(format!("camera {index}: non-finite value")));
            }
            if rec.fx <= 0.0 || rec.fy <= 0.0 {
                return Err(Error::Parse(format!("camera {index}: focal lengths must be positive")));
            }
            Ok(CameraPose {
                rotation,
                center,
                fx: rec.fx,
                fy: rec.fy,
                cx: rec.cx,
                cy: rec.cy,
                width: rec.width,
                height: rec.height,
            })
        })
        .collect()
}

/// Writes cameras with matrix-form rotations.
pub fn write_cameras(cameras: &[CameraPose]) -> Vec<u8> {
    let file = CameraFile {
        cameras: cameras
            .iter()
            .map(|c| CameraRecord {
                rotation: c.rotation.iter().flatten().copied().collect(),
                center: c.center.to_vec(),
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                width: c.width,
                height: c.height,
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("camera records serialize");
    out.push(b'\n');
    out
}

// ---------------------------------------------------------------------------
// Masks

/// Parses a binary (P5) PGM. Samples with `maxval != 255` are rescaled to 0..=255.
pub fn load_mask(bytes: &[u8]) -> Result<Mask> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("PGM header is truncated".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(Error::Parse(format!("expected PGM magic P5, found '{magic}'")));
    }
    let mut number = |what: &str| -> Result<usize> {
        let t = token()?;
        t.parse()
            .map_err(|_| Error::Parse(format!("bad PGM {what} '{t}'")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("PGM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let sample = if maxval > 255 { 2 } else { 1 };
    let expected = pos + width * height * sample;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    let raster = &bytes[pos..expected];
    let values = if sample == 1 {
        raster
            .iter()
            .map(|&v| rescale(v as usize, maxval))
            .collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| rescale(u16::from_be_bytes([c[0], c[1]]) as usize, maxval))
            .collect()
    };
    Ok(Mask {
        width,
        height,
        values,
    })
}

fn rescale(v: usize, maxval: usize) -> u8 {
    if maxval == 255 {
        return v.min(255) as u8;
    }
    let v = v.min(maxval);
    ((v * 255 + maxval / 2) / maxval) as u8
}

pub fn write_mask(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend_from_slice(&mask.values);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_vertex_ply(rest: usize, f: impl Fn(&str) -> f32) -> Vec<u8> {
        let props = canonical_properties(rest);
        let mut out = format!("ply\nformat binary_little_endian 1.0\nelement vertex 1\n");
        for p in &props {
            out.push_str(&format!("property float {p}\n"));
        }
        out.push_str("end_header\n");
        let mut bytes = out.into_bytes();
        for p in &props {
            bytes.extend_from_slice(&f(p).to_le_bytes());
        }
        bytes
    }

    #[test]
    fn single_record() {
        let bytes = one_vertex_ply(0, |p| if p == "x" { 1.0 } else { 0.0 });
        let scene = parse_ply(&bytes).unwrap();
        assert_eq!(scene.len(), 1);
        assert_eq!(scene.centers[0], [1.0, 0.0, 0.0]);
        assert!(scene.colors_rest.is_none());
        assert_eq!(write_ply(&scene), bytes);
    }

    #[test]
    fn degree_three_layout_has_62_properties() {
        assert_eq!(canonical_properties(45).len(), 62);
        let bytes = one_vertex_ply(45, |p| if p.starts_with('n') { 0.0 } else { p.len() as f32 });
        let scene = parse_ply(&bytes).unwrap();
        let rest = scene.colors_rest.as_ref().unwrap();
        assert_eq!(rest.width, 45);
        assert_eq!(rest.values[10], "f_rest_10".len() as f64);
        assert_eq!(write_ply(&scene), bytes);
    }

    #[test]
    fn header_omits_rest_when_absent() {
        let scene = parse_ply(&one_vertex_ply(0, |_| 0.5)).unwrap();
        let text = String::from_utf8_lossy(&write_ply(&scene)).into_owned();
        assert!(text.contains("element vertex 1\n"));
        assert!(!text.contains("f_rest"));
    }

    #[test]
    fn property_order_follows_header() {
        let mut props = canonical_properties(0);
        props.reverse();
        let mut text = String::from("ply\nformat binary_little_endian 1.0\nelement vertex 1\n");
        for p in &props {
            text.push_str(&format!("property float {p}\n"));
        }
        text.push_str("end_header\n");
        let mut bytes = text.into_bytes();
        for p in &props {
            let v: f32 = match p.as_str() {
                "y" => 2.0,
                "rot_0" => 1.0,
                _ => 0.0,
            };
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let scene = parse_ply(&bytes).unwrap();
        assert_eq!(scene.centers[0], [0.0, 2.0, 0.0]);
        assert_eq!(scene.rotations[0], [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn errors() {
        let good = one_vertex_ply(0, |_| 0.0);
        assert!(matches!(
            parse_ply(&good[..good.len() - 1]),
            Err(Error::TruncatedPayload { .. })
        ));
        assert!(matches!(parse_ply(b"ply\nformat ascii 1.0\nend_header\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_ply(b"not a ply"), Err(Error::Parse(_))));
        let nan = one_vertex_ply(0, |p| if p == "opacity" { f32::NAN } else { 0.0 });
        assert!(matches!(parse_ply(&nan), Err(Error::InvalidValue { index: 0 })));
    }

    #[test]
    fn cameras_from_quaternion_and_matrix() {
        let text = br#"{"cameras": [
            {"rotation": [1, 0, 0, 0], "center": [0, 0, 0], "fx": 100, "fy": 100, "cx": 0, "cy": 0, "width": 64, "height": 48},
            {"rotation": [0.7071068, 0, 0, 0.7071068], "center": [1, 2, 3], "fx": 50, "fy": 60, "cx": 32, "cy": 24, "width": 64, "height": 48}
        ]}"#;
        let cams = load_cameras(text).unwrap();
        assert_eq!(cams[0].rotation, geom::IDENTITY);
        let row = cams[1].rotation[0];
        assert!((row[0]).abs() < 1e-6 && (row[1] + 1.0).abs() < 1e-6 && row[2].abs() < 1e-6);

        let again = load_cameras(&write_cameras(&cams)).unwrap();
        assert_eq!(again, cams);
    }

    #[test]
    fn camera_rejects_scaled_rotation() {
        let text = br#"{"cameras": [{"rotation": [1.5,0,0, 0,1,0, 0,0,1], "center": [0,0,0],
            "fx": 1, "fy": 1, "cx": 0, "cy": 0, "width": 1, "height": 1}]}"#;
        assert!(matches!(load_cameras(text), Err(Error::InvalidRotation { index: 0 })));
        assert!(matches!(load_cameras(b"{\"cams\": []}"), Err(Error::Parse(_))));
    }

    #[test]
    fn masks() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 0, 0]);
        let m = load_mask(&bytes).unwrap();
        assert_eq!((m.width, m.height), (2, 2));
        assert_eq!(m.get(1, 0), 255);
        assert_eq!(m.values.iter().filter(|&&v| v != 0).count(), 1);
        assert_eq!(write_mask(&m), bytes);

        let empty = load_mask(b"P5 1 1 255\n\0").unwrap();
        assert!(empty.is_empty());

        let mut low = b"P5\n# comment\n3 1\n15\n".to_vec();
        low.extend_from_slice(&[0, 5, 15]);
        assert_eq!(load_mask(&low).unwrap().values, vec![0, 85, 255]);

        assert!(matches!(load_mask(b"P2\n1 1\n255\n0"), Err(Error::Parse(_))));
    }
}
