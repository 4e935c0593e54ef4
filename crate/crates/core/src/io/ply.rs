use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use super::{io_err, read_json, IoError};
use crate::geometry::RigidTransform;
use crate::metrics::MeshModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Parser<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, offset: usize, msg: impl Into<String>) -> IoError {
        IoError::Parse {
            path: self.path.to_path_buf(),
            offset,
            msg: msg.into(),
        }
    }

    /// Next header line without its terminator, and its starting offset.
    fn line(&mut self) -> Result<(usize, &'a str), IoError> {
        let start = self.pos;
        let rest = &self.bytes[start..];
        let Some(n) = rest.iter().position(|&b| b == b'\n') else {
            return Err(self.err(start, "header ends before end_header"));
        };
        self.pos = start + n + 1;
        let raw = &rest[..n];
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        std::str::from_utf8(raw)
            .map(|s| (start, s))
            .map_err(|_| self.err(start, "header is not ASCII"))
    }

    fn header(&mut self) -> Result<(Encoding, Vec<Element>), IoError> {
        let (at, magic) = self.line()?;
        if magic.trim() != "ply" {
            return Err(self.err(at, "missing 'ply' magic"));
        }
        let mut encoding = None;
        let mut elements: Vec<Element> = Vec::new();
        loop {
            let (at, line) = self.line()?;
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["end_header"] => break,
                [] | ["comment", ..] | ["obj_info", ..] => {}
                ["format", enc, _version] => {
                    encoding = Some(match *enc {
                        "ascii" => Encoding::Ascii,
                        "binary_little_endian" => Encoding::BinaryLe,
                        other => {
                            return Err(IoError::Unsupported {
                                path: self.path.to_path_buf(),
                                msg: format!("encoding '{other}' (only ascii and binary_little_endian are read)"),
                            })
                        }
                    })
                }
                ["element", name, count] => {
                    let count = count.parse().map_err(|_| self.err(at, format!("bad element count '{count}'")))?;
                    elements.push(Element {
                        name: name.to_string(),
                        count,
                        properties: Vec::new(),
                    });
                }
                ["property", "list", ct, it, name] => {
                    let (Some(ct), Some(it)) = (Scalar::parse(ct), Scalar::parse(it)) else {
                        return Err(self.err(at, format!("bad list property types in '{line}'")));
                    };
                    let el = elements.last_mut().ok_or_else(|| self.err(at, "property before any element"))?;
                    el.properties.push(Property::List(name.to_string(), ct, it));
                }
                ["property", ty, name] => {
                    let ty = Scalar::parse(ty).ok_or_else(|| self.err(at, format!("unknown property type '{ty}'")))?;
                    let el = elements.last_mut().ok_or_else(|| self.err(at, "property before any element"))?;
                    el.properties.push(Property::Scalar(name.to_string(), ty));
                }
                _ => return Err(self.err(at, format!("unrecognized header line '{line}'"))),
            }
        }
        let encoding = encoding.ok_or_else(|| self.err(0, "missing format line"))?;
        Ok((encoding, elements))
    }

    fn binary(&mut self, ty: Scalar) -> Result<f64, IoError> {
        let n = ty.size();
        if self.pos + n > self.bytes.len() {
            return Err(self.err(self.pos, "truncated body"));
        }
        let v = ty.read_le(&self.bytes[self.pos..self.pos + n]);
        self.pos += n;
        Ok(v)
    }

    fn token(&mut self) -> Result<(usize, &'a str), IoError> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(start, "truncated body"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map(|s| (start, s))
            .map_err(|_| self.err(start, "body is not ASCII"))
    }

    fn value(&mut self, enc: Encoding, ty: Scalar) -> Result<(usize, f64), IoError> {
        match enc {
            Encoding::BinaryLe => {
                let at = self.pos;
                Ok((at, self.binary(ty)?))
            }
            Encoding::Ascii => {
                let (at, tok) = self.token()?;
                let v: f64 = tok.parse().map_err(|_| self.err(at, format!("bad number '{tok}'")))?;
                Ok((at, v))
            }
        }
    }
}

fn as_index(p: &Parser<'_>, at: usize, v: f64, what: &str) -> Result<usize, IoError> {
    if v >= 0.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(p.err(at, format!("{what} {v} is not a non-negative integer")))
    }
}

/// Vertices and fan-triangulated faces of an ASCII or binary little-endian
/// PLY. Errors carry the byte offset of the offending token.
pub fn parse_ply(path: &Path, bytes: &[u8]) -> Result<(Vec<Vector3<f64>>, Vec<[usize; 3]>), IoError> {
    let mut p = Parser { path, bytes, pos: 0 };
    let (enc, elements) = p.header()?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        let xyz: Vec<Option<usize>> = ["x", "y", "z"]
            .iter()
            .map(|n| el.properties.iter().position(|q| matches!(q, Property::Scalar(m, _) if m == n)))
            .collect();
        let is_vertex = el.name == "vertex";
        if is_vertex && xyz.iter().any(Option::is_none) {
            return Err(p.err(0, "vertex element lacks x, y or z"));
        }
        let is_face = el.name == "face";
        for _ in 0..el.count {
            let mut scalars = vec![0.0; el.properties.len()];
            for (k, prop) in el.properties.iter().enumerate() {
                match prop {
                    Property::Scalar(_, ty) => scalars[k] = p.value(enc, *ty)?.1,
                    Property::List(name, ct, it) => {
                        let (at, n) = p.value(enc, *ct)?;
                        let n = as_index(&p, at, n, "list length")?;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            let (at, v) = p.value(enc, *it)?;
                            idx.push((at, v));
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            if n < 3 {
                                return Err(p.err(at, format!("face with {n} vertices")));
                            }
                            let idx = idx
                                .into_iter()
                                .map(|(at, v)| as_index(&p, at, v, "vertex index"))
                                .collect::<Result<Vec<_>, _>>()?;
                            for w in 1..n - 1 {
                                triangles.push([idx[0], idx[w], idx[w + 1]]);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                let c = |i: usize| scalars[xyz[i].expect("checked")];
                vertices.push(Vector3::new(c(0), c(1), c(2)));
            }
        }
    }
    if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
        return Err(p.err(p.pos, format!("face {t:?} indexes past {} vertices", vertices.len())));
    }
    Ok((vertices, triangles))
}

/// `models/obj_000001.ply` → `models/obj_000001.sym.json`.
pub fn symmetry_path(ply: &Path) -> PathBuf {
    ply.with_extension("sym.json")
}

/// Symmetries as row-major 4×4 matrices in model units; a missing file means
/// the identity only.
pub fn load_symmetries(path: &Path, unit_scale: f64) -> Result<Vec<RigidTransform>, IoError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let rows: Vec<Vec<f64>> = read_json(path)?;
    rows.iter()
        .map(|m| {
            let m: [f64; 16] = m
                .as_slice()
                .try_into()
                .map_err(|_| super::format_err(path, format!("symmetry has {} entries, need 16", m.len())))?;
            let t = RigidTransform::from_row_major(&m)?;
            Ok(RigidTransform::new(*t.rotation(), t.translation() * unit_scale)?)
        })
        .collect()
}

/// Reads a mesh, multiplies coordinates by `unit_scale` (1 for meters,
/// 0.001 for millimeters) and attaches the sidecar symmetries.
pub fn load_mesh_ply(path: &Path, unit_scale: f64) -> Result<MeshModel, IoError> {
    if !(unit_scale.is_finite() && unit_scale > 0.0) {
        return Err(IoError::Invalid(format!("unit scale must be positive, got {unit_scale}")));
    }
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let (vertices, triangles) = parse_ply(path, &bytes)?;
    let vertices = vertices.into_iter().map(|v| v * unit_scale).collect();
    let syms = load_symmetries(&symmetry_path(path), unit_scale)?;
    Ok(MeshModel::new(vertices, triangles, syms)?)
}

/// ASCII PLY with shortest round-trip float formatting.
pub fn write_ply_ascii(path: &Path, vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> Result<(), IoError> {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        vertices.len(),
        triangles.len()
    );
    for v in vertices {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    for t in triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    std::fs::write(path, s).map_err(io_err(path))
}
