//! Point cloud file formats: ASCII XYZ and a PLY vertex subset.
//!
//! XYZ: one point per line, first three whitespace-separated fields are
//! x y z, `#` lines and blank lines are skipped, extra columns are ignored.
//!
//! PLY: `ascii` and `binary_little_endian` bodies. Only the `x`, `y`, `z`
//! properties of the `vertex` element are read; every other element and
//! property (including list properties) is parsed and skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

/// Reads a cloud, picking the format from the extension (`.ply` or
/// anything else as XYZ).
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let is_ply = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    if is_ply {
        read_ply(path)
    } else {
        read_xyz(path)
    }
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_xyz(&text).map_err(|(line, message)| Error::parse(path, line, message))
}

fn parse_xyz(text: &str) -> std::result::Result<PointCloud, (usize, String)> {
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut coord = [0.0; 3];
        for c in &mut coord {
            let field = fields
                .next()
                .ok_or_else(|| (n + 1, "expected three coordinates".to_string()))?;
            *c = field
                .parse::<f64>()
                .map_err(|e| (n + 1, format!("bad coordinate `{field}`: {e}")))?;
            if !c.is_finite() {
                return Err((n + 1, format!("non-finite coordinate `{field}`")));
            }
        }
        points.push(Point3::new(coord[0], coord[1], coord[2]));
    }
    PointCloud::new(points).map_err(|e| (0, e.to_string()))
}

/// Writes ASCII XYZ using the shortest decimal form that reads back exactly.
pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_xyz(cloud)).map_err(|e| Error::io(path, e))
}

pub fn format_xyz(cloud: &PointCloud) -> String {
    let mut out = Vec::with_capacity(cloud.len() * 48);
    for p in cloud {
        writeln!(out, "{:e} {:e} {:e}", p.x, p.y, p.z).expect("write to vec");
    }
    String::from_utf8(out).expect("ascii output")
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
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_offset: usize,
    lines: usize,
}

fn parse_header(bytes: &[u8]) -> std::result::Result<Header, (usize, String)> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or((line_no + 1, "unterminated header".to_string()))?;
        let line = std::str::from_utf8(&bytes[offset..offset + end])
            .map_err(|_| (line_no + 1, "header is not UTF-8".to_string()))?
            .trim_end_matches('\r')
            .trim();
        offset += end + 1;
        line_no += 1;
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        let bad = |msg: &str| (line_no, msg.to_string());
        match keyword {
            "ply" if line_no == 1 => {}
            _ if line_no == 1 => return Err(bad("missing `ply` magic")),
            "format" => {
                format = Some(match words.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some(other) => return Err((line_no, format!("unsupported format `{other}`"))),
                    None => return Err(bad("missing format")),
                });
            }
            "comment" | "obj_info" | "" => {}
            "element" => {
                let name = words.next().ok_or(bad("element without name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or(bad("element without count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements.last_mut().ok_or(bad("property before element"))?;
                let first = words.next().ok_or(bad("empty property"))?;
                let prop = if first == "list" {
                    let count = words.next().and_then(Scalar::parse).ok_or(bad("bad list count type"))?;
                    let item = words.next().and_then(Scalar::parse).ok_or(bad("bad list item type"))?;
                    Property::List { count, item }
                } else {
                    let ty = Scalar::parse(first).ok_or((line_no, format!("unknown type `{first}`")))?;
                    let name = words.next().ok_or(bad("property without name"))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                element.properties.push(prop);
            }
            "end_header" => break,
            other => return Err((line_no, format!("unexpected header keyword `{other}`"))),
        }
    }
    Ok(Header {
        format: format.ok_or((line_no, "missing format line".to_string()))?,
        elements,
        body_offset: offset,
        lines: line_no,
    })
}

fn xyz_slots(element: &Element) -> Option<[usize; 3]> {
    let find = |axis: &str| {
        element.properties.iter().position(
            |p| matches!(p, Property::Scalar { name, ty } if name == axis && matches!(ty, Scalar::F32 | Scalar::F64)),
        )
    };
    Some([find("x")?, find("y")?, find("z")?])
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes).map_err(|(line, message)| Error::parse(path, line, message))
}

fn parse_ply(bytes: &[u8]) -> std::result::Result<PointCloud, (usize, String)> {
    let header = parse_header(bytes)?;
    let vertex = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or((header.lines, "no vertex element".to_string()))?;
    let slots = xyz_slots(&header.elements[vertex])
        .ok_or((header.lines, "vertex element lacks float x, y, z".to_string()))?;
    let body = &bytes[header.body_offset..];
    let points = match header.format {
        Format::Ascii => read_ascii_body(body, &header, vertex, slots)?,
        Format::BinaryLe => read_binary_body(body, &header, vertex, slots)?,
    };
    PointCloud::new(points).map_err(|e| (header.lines, e.to_string()))
}

fn read_ascii_body(
    body: &[u8],
    header: &Header,
    vertex: usize,
    slots: [usize; 3],
) -> std::result::Result<Vec<Point3>, (usize, String)> {
    let text = std::str::from_utf8(body).map_err(|_| (header.lines + 1, "body is not UTF-8".to_string()))?;
    let mut rows = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut points = Vec::new();
    for (e_idx, element) in header.elements.iter().enumerate() {
        for _ in 0..element.count {
            let (n, row) = rows
                .next()
                .ok_or((header.lines, format!("truncated `{}` element", element.name)))?;
            let line = header.lines + n + 1;
            let mut tokens = row.split_whitespace();
            let mut next = || -> std::result::Result<f64, (usize, String)> {
                let tok = tokens.next().ok_or((line, "too few values".to_string()))?;
                tok.parse::<f64>().map_err(|e| (line, format!("bad value `{tok}`: {e}")))
            };
            let mut xyz = [0.0; 3];
            for (p_idx, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { .. } => {
                        let v = next()?;
                        if e_idx == vertex {
                            if let Some(axis) = slots.iter().position(|&s| s == p_idx) {
                                xyz[axis] = v;
                            }
                        }
                    }
                    Property::List { .. } => {
                        let count = next()?;
                        for _ in 0..count as usize {
                            next()?;
                        }
                    }
                }
            }
            if e_idx == vertex {
                points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
    }
    Ok(points)
}

fn read_binary_body(
    body: &[u8],
    header: &Header,
    vertex: usize,
    slots: [usize; 3],
) -> std::result::Result<Vec<Point3>, (usize, String)> {
    let truncated = || (header.lines, "truncated binary body".to_string());
    let mut pos = 0usize;
    let mut take = |n: usize| -> std::result::Result<&[u8], (usize, String)> {
        let s = body.get(pos..pos + n).ok_or_else(truncated)?;
        pos += n;
        Ok(s)
    };
    let mut points = Vec::new();
    for (e_idx, element) in header.elements.iter().enumerate() {
        for _ in 0..element.count {
            let mut xyz = [0.0; 3];
            for (p_idx, prop) in element.properties.iter().enumerate() {
                match *prop {
                    Property::Scalar { ty, .. } => {
                        let v = ty.decode_le(take(ty.size())?);
                        if e_idx == vertex {
                            if let Some(axis) = slots.iter().position(|&s| s == p_idx) {
                                xyz[axis] = v;
                            }
                        }
                    }
                    Property::List { count, item } => {
                        let n = count.decode_le(take(count.size())?);
                        if n < 0.0 {
                            return Err((header.lines, "negative list length".to_string()));
                        }
                        take(n as usize * item.size())?;
                    }
                }
            }
            if e_idx == vertex {
                points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
        if e_idx == vertex {
            // nothing after the vertex block is needed
            break;
        }
    }
    Ok(points)
}
