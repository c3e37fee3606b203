use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Mesh, MeshError, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self, MeshError> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::Ply),
            other => Err(MeshError::UnsupportedFormat(
                other.unwrap_or("<none>").to_string(),
            )),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> MeshError {
    MeshError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads an OBJ or PLY file. The format is taken from `format` or, when
/// absent, from the file extension.
pub fn load_mesh(path: &Path, format: Option<MeshFormat>) -> Result<Mesh, MeshError> {
    let format = match format {
        Some(f) => f,
        None => MeshFormat::from_path(path)?,
    };
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    match format {
        MeshFormat::Obj => {
            let text = String::from_utf8_lossy(&bytes);
            parse_obj(&text)
        }
        MeshFormat::Ply => parse_ply(&bytes),
    }
}

/// Writes a mesh. PLY output carries labels and optional per-face colors;
/// OBJ output carries geometry only.
pub fn save_mesh(
    mesh: &Mesh,
    path: &Path,
    format: MeshFormat,
    encoding: PlyEncoding,
    face_colors: Option<&[[u8; 3]]>,
) -> Result<(), MeshError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        MeshFormat::Obj => write_obj(mesh, &mut w),
        MeshFormat::Ply => write_ply(mesh, encoding, face_colors, &mut w),
    };
    res.and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn fan(poly: &[usize], out: &mut Vec<[usize; 3]>) {
    for i in 1..poly.len().saturating_sub(1) {
        out.push([poly[0], poly[i], poly[i + 1]]);
    }
}

pub(crate) fn parse_obj(text: &str) -> Result<Mesh, MeshError> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces = Vec::new();
    let mut face_lines = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut p = [0.0f64; 3];
                for c in &mut p {
                    let tok = tokens.next().ok_or_else(|| MeshError::Parse {
                        line,
                        message: "vertex needs 3 coordinates".into(),
                    })?;
                    *c = tok.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("bad coordinate {tok:?}"),
                    })?;
                }
                if !p.iter().all(|c| c.is_finite()) {
                    return Err(MeshError::NonFinite {
                        vertex: vertices.len(),
                    });
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in tokens {
                    let idx_tok = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_tok.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("bad face index {tok:?}"),
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(MeshError::Parse {
                            line,
                            message: "face index 0 is invalid".into(),
                        });
                    };
                    if resolved < 0 {
                        return Err(MeshError::Parse {
                            line,
                            message: format!("relative index {idx} before first vertex"),
                        });
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: "face needs at least 3 vertices".into(),
                    });
                }
                let before = faces.len();
                fan(&poly, &mut faces);
                face_lines.extend(std::iter::repeat_n(line, faces.len() - before));
            }
            _ => {}
        }
    }
    for (fi, f) in faces.iter().enumerate() {
        if let Some(&bad) = f.iter().find(|&&i| i >= vertices.len()) {
            return Err(MeshError::Parse {
                line: face_lines[fi],
                message: format!(
                    "vertex index {} out of range ({} vertices)",
                    bad + 1,
                    vertices.len()
                ),
            });
        }
    }
    Mesh::new(vertices, faces)
}

fn write_obj<W: Write>(mesh: &Mesh, w: &mut W) -> std::io::Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {:?} {:?} {:?}", v[0], v[1], v[2])?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
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
    fn parse(name: &str) -> Option<Scalar> {
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
}

#[derive(Debug, Clone)]
enum PropKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Body {
    Ascii,
    Binary { little: bool },
}

struct Header {
    body: Body,
    elements: Vec<Element>,
    /// Byte offset of the first body byte.
    body_start: usize,
    /// Number of header lines, used to report body line numbers.
    header_lines: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, MeshError> {
    let mut pos = 0;
    let mut lineno = 0;
    let mut body = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(MeshError::Parse {
                line: lineno + 1,
                message: "unterminated PLY header".into(),
            })?;
        let line = String::from_utf8_lossy(&bytes[pos..pos + end]);
        let line = line.trim_end_matches('\r').trim();
        pos += end + 1;
        lineno += 1;
        let err = |message: String| MeshError::Parse {
            line: lineno,
            message,
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        if lineno == 1 {
            if toks != ["ply"] {
                return Err(err("missing 'ply' magic".into()));
            }
            continue;
        }
        match toks.first().copied() {
            Some("format") => {
                body = Some(match toks.get(1).copied() {
                    Some("ascii") => Body::Ascii,
                    Some("binary_little_endian") => Body::Binary { little: true },
                    Some("binary_big_endian") => Body::Binary { little: false },
                    other => return Err(err(format!("unknown format {other:?}"))),
                });
            }
            Some("element") => {
                if toks.len() != 3 {
                    return Err(err("malformed element line".into()));
                }
                let count = toks[2]
                    .parse()
                    .map_err(|_| err(format!("bad element count {:?}", toks[2])))?;
                elements.push(Element {
                    name: toks[1].to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err("property before any element".into()))?;
                let kind = if toks.get(1) == Some(&"list") {
                    if toks.len() != 5 {
                        return Err(err("malformed list property".into()));
                    }
                    PropKind::List {
                        count: Scalar::parse(toks[2])
                            .ok_or_else(|| err(format!("unknown type {:?}", toks[2])))?,
                        item: Scalar::parse(toks[3])
                            .ok_or_else(|| err(format!("unknown type {:?}", toks[3])))?,
                    }
                } else {
                    if toks.len() != 3 {
                        return Err(err("malformed property".into()));
                    }
                    PropKind::Scalar(
                        Scalar::parse(toks[1])
                            .ok_or_else(|| err(format!("unknown type {:?}", toks[1])))?,
                    )
                };
                el.props.push(Property {
                    name: toks[toks.len() - 1].to_string(),
                    kind,
                });
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(err(format!("unexpected header keyword {other:?}"))),
        }
    }
    Ok(Header {
        body: body.ok_or(MeshError::Parse {
            line: lineno,
            message: "missing format line".into(),
        })?,
        elements,
        body_start: pos,
        header_lines: lineno,
    })
}

/// Pulls scalar values out of a PLY body regardless of encoding.
enum BodyReader<'a> {
    Ascii {
        lines: std::iter::Enumerate<std::str::Lines<'a>>,
        tokens: Vec<&'a str>,
        next: usize,
        line: usize,
        first_line: usize,
    },
    Binary {
        bytes: &'a [u8],
        pos: usize,
        little: bool,
    },
}

impl<'a> BodyReader<'a> {
    fn line(&self) -> usize {
        match self {
            BodyReader::Ascii { line, first_line, .. } => first_line + line,
            BodyReader::Binary { .. } => 0,
        }
    }

    fn err(&self, message: String) -> MeshError {
        match self {
            BodyReader::Binary { pos, .. } => MeshError::Parse {
                line: 0,
                message: format!("{message} (binary body offset {pos})"),
            },
            _ => MeshError::Parse {
                line: self.line(),
                message,
            },
        }
    }

    /// Starts a new element instance. ASCII instances occupy one line each.
    fn begin_instance(&mut self) -> Result<(), MeshError> {
        if let BodyReader::Ascii {
            lines,
            tokens,
            next,
            line,
            ..
        } = self
        {
            loop {
                match lines.next() {
                    Some((i, l)) => {
                        *line = i + 1;
                        let t: Vec<&str> = l.split_whitespace().collect();
                        if !t.is_empty() {
                            *tokens = t;
                            *next = 0;
                            return Ok(());
                        }
                    }
                    None => return Err(self.err("unexpected end of PLY body".into())),
                }
            }
        }
        Ok(())
    }

    fn read(&mut self, ty: Scalar) -> Result<f64, MeshError> {
        match self {
            BodyReader::Ascii { tokens, next, .. } => {
                let tok = tokens.get(*next).copied();
                *next += 1;
                match tok {
                    Some(t) => t
                        .parse::<f64>()
                        .map_err(|_| self.err(format!("bad number {t:?}"))),
                    None => Err(self.err("too few values on line".into())),
                }
            }
            BodyReader::Binary { bytes, pos, little } => {
                let n = ty.size();
                if *pos + n > bytes.len() {
                    return Err(self.err("truncated binary body".into()));
                }
                let b = &bytes[*pos..*pos + n];
                *pos += n;
                let le = *little;
                macro_rules! get {
                    ($t:ty) => {{
                        let arr = b.try_into().unwrap();
                        if le {
                            <$t>::from_le_bytes(arr)
                        } else {
                            <$t>::from_be_bytes(arr)
                        }
                    }};
                }
                Ok(match ty {
                    Scalar::I8 => b[0] as i8 as f64,
                    Scalar::U8 => b[0] as f64,
                    Scalar::I16 => get!(i16) as f64,
                    Scalar::U16 => get!(u16) as f64,
                    Scalar::I32 => get!(i32) as f64,
                    Scalar::U32 => get!(u32) as f64,
                    Scalar::F32 => get!(f32) as f64,
                    Scalar::F64 => get!(f64),
                })
            }
        }
    }
}

pub(crate) fn parse_ply(bytes: &[u8]) -> Result<Mesh, MeshError> {
    let header = parse_header(bytes)?;
    let body = &bytes[header.body_start..];
    let mut reader = match header.body {
        Body::Ascii => BodyReader::Ascii {
            lines: std::str::from_utf8(body)
                .map_err(|_| MeshError::Parse {
                    line: header.header_lines + 1,
                    message: "ASCII body is not UTF-8".into(),
                })?
                .lines()
                .enumerate(),
            tokens: Vec::new(),
            next: 0,
            line: 0,
            first_line: header.header_lines,
        },
        Body::Binary { little } => BodyReader::Binary {
            bytes: body,
            pos: 0,
            little,
        },
    };

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut vertex_labels: Vec<i32> = Vec::new();
    let mut has_vlabel = false;
    let mut faces = Vec::new();
    let mut face_labels: Vec<i32> = Vec::new();
    let mut has_flabel = false;
    let mut face_lines = Vec::new();

    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        if is_vertex {
            has_vlabel = el.props.iter().any(|p| p.name == "label");
            for axis in ["x", "y", "z"] {
                if !el.props.iter().any(|p| p.name == axis) {
                    return Err(MeshError::Parse {
                        line: header.header_lines,
                        message: format!("vertex element lacks property {axis}"),
                    });
                }
            }
        }
        if is_face {
            has_flabel = el.props.iter().any(|p| p.name == "label");
        }
        for _ in 0..el.count {
            reader.begin_instance()?;
            let mut pos = [0.0; 3];
            let mut label = super::UNLABELED;
            let mut poly: Vec<usize> = Vec::new();
            for prop in &el.props {
                match &prop.kind {
                    PropKind::Scalar(ty) => {
                        let v = reader.read(*ty)?;
                        match (is_vertex, is_face, prop.name.as_str()) {
                            (true, _, "x") => pos[0] = v,
                            (true, _, "y") => pos[1] = v,
                            (true, _, "z") => pos[2] = v,
                            (_, _, "label") if is_vertex || is_face => label = v as i32,
                            _ => {}
                        }
                    }
                    PropKind::List { count, item } => {
                        let n = reader.read(*count)?;
                        if n < 0.0 {
                            return Err(reader.err("negative list length".into()));
                        }
                        let wanted = is_face
                            && (prop.name == "vertex_indices" || prop.name == "vertex_index");
                        for _ in 0..n as usize {
                            let v = reader.read(*item)?;
                            if wanted {
                                if v < 0.0 {
                                    return Err(reader.err("negative vertex index".into()));
                                }
                                poly.push(v as usize);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                if !pos.iter().all(|c| c.is_finite()) {
                    return Err(MeshError::NonFinite {
                        vertex: vertices.len(),
                    });
                }
                vertices.push(pos);
                vertex_labels.push(label);
            } else if is_face {
                if poly.len() < 3 {
                    return Err(reader.err("face needs at least 3 vertices".into()));
                }
                let before = faces.len();
                fan(&poly, &mut faces);
                for _ in before..faces.len() {
                    face_labels.push(label);
                    face_lines.push(reader.line());
                }
            }
        }
    }
    for (fi, f) in faces.iter().enumerate() {
        if let Some(&bad) = f.iter().find(|&&i| i >= vertices.len()) {
            return Err(MeshError::Parse {
                line: face_lines[fi],
                message: format!("vertex index {bad} out of range ({} vertices)", vertices.len()),
            });
        }
    }
    let mut mesh = Mesh::new(vertices, faces)?;
    if has_vlabel {
        mesh.vertex_labels = Some(vertex_labels);
    }
    if has_flabel {
        mesh.face_labels = Some(face_labels);
    }
    Ok(mesh)
}

fn write_ply<W: Write>(
    mesh: &Mesh,
    encoding: PlyEncoding,
    face_colors: Option<&[[u8; 3]]>,
    w: &mut W,
) -> std::io::Result<()> {
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply")?;
    writeln!(w, "format {fmt} 1.0")?;
    writeln!(w, "element vertex {}", mesh.vertices.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    if mesh.vertex_labels.is_some() {
        writeln!(w, "property int label")?;
    }
    writeln!(w, "element face {}", mesh.faces.len())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    if mesh.face_labels.is_some() {
        writeln!(w, "property int label")?;
    }
    if face_colors.is_some() {
        writeln!(w, "property uchar red")?;
        writeln!(w, "property uchar green")?;
        writeln!(w, "property uchar blue")?;
    }
    writeln!(w, "end_header")?;
    match encoding {
        PlyEncoding::Ascii => {
            for (i, v) in mesh.vertices.iter().enumerate() {
                write!(w, "{:?} {:?} {:?}", v[0], v[1], v[2])?;
                if let Some(l) = &mesh.vertex_labels {
                    write!(w, " {}", l[i])?;
                }
                writeln!(w)?;
            }
            for (i, f) in mesh.faces.iter().enumerate() {
                write!(w, "3 {} {} {}", f[0], f[1], f[2])?;
                if let Some(l) = &mesh.face_labels {
                    write!(w, " {}", l[i])?;
                }
                if let Some(c) = face_colors {
                    write!(w, " {} {} {}", c[i][0], c[i][1], c[i][2])?;
                }
                writeln!(w)?;
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            for (i, v) in mesh.vertices.iter().enumerate() {
                for c in v {
                    w.write_all(&c.to_le_bytes())?;
                }
                if let Some(l) = &mesh.vertex_labels {
                    w.write_all(&l[i].to_le_bytes())?;
                }
            }
            for (i, f) in mesh.faces.iter().enumerate() {
                w.write_all(&[3u8])?;
                for &idx in f {
                    w.write_all(&(idx as i32).to_le_bytes())?;
                }
                if let Some(l) = &mesh.face_labels {
                    w.write_all(&l[i].to_le_bytes())?;
                }
                if let Some(c) = face_colors {
                    w.write_all(&c[i])?;
                }
            }
        }
    }
    Ok(())
}
