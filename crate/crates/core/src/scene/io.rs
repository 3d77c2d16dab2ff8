//! Asset file formats: OBJ and binary little-endian PLY meshes, PNG images
//! and masks, and the `DPTH` float depth raster.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::math::Vec3;

use super::types::{DepthImage, MaskImage, TriangleMesh};
use super::SceneError;

fn io_err(path: &Path, e: impl std::fmt::Display) -> SceneError {
    SceneError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn fmt_err(path: &Path, msg: impl Into<String>) -> SceneError {
    SceneError::Format {
        path: path.to_path_buf(),
        message: msg.into(),
    }
}

/// Loads a mesh by extension (`.obj` or `.ply`) and validates it.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh, SceneError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let mesh = match ext.as_str() {
        "obj" => read_obj(path)?,
        "ply" => read_ply_mesh(path)?,
        _ => return Err(fmt_err(path, "unsupported mesh extension (expected .obj or .ply)")),
    };
    mesh.validated().map_err(|e| fmt_err(path, e.to_string()))
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh, SceneError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    parse_obj(BufReader::new(file)).map_err(|m| fmt_err(path, m))
}

/// OBJ subset: `v x y z [r g b]` and polygonal `f` records (fan-triangulated).
pub fn parse_obj(reader: impl BufRead) -> Result<TriangleMesh, String> {
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut any_color = false;
    let mut triangles = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let nums: Vec<f64> = it
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| format!("line {}: {}", lineno + 1, e))?;
                if nums.len() < 3 {
                    return Err(format!("line {}: vertex needs 3 coordinates", lineno + 1));
                }
                vertices.push(Vec3::new(nums[0], nums[1], nums[2]));
                if nums.len() >= 6 {
                    any_color = true;
                    colors.push(Vec3::new(nums[3], nums[4], nums[5]));
                } else {
                    colors.push(Vec3::repeat(1.0));
                }
            }
            Some("f") => {
                let n = vertices.len() as i64;
                let idx: Vec<u32> = it
                    .map(|tok| {
                        let first = tok.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|e| format!("line {}: {}", lineno + 1, e))?;
                        let resolved = if i < 0 { n + i } else { i - 1 };
                        if resolved < 0 {
                            return Err(format!("line {}: bad face index {}", lineno + 1, i));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<_, String>>()?;
                if idx.len() < 3 {
                    return Err(format!("line {}: face needs 3 indices", lineno + 1));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let mut mesh = TriangleMesh::new(vertices, triangles);
    if any_color {
        mesh.colors = Some(colors);
    }
    Ok(mesh)
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<(), SceneError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        for (i, v) in mesh.vertices.iter().enumerate() {
            match &mesh.colors {
                Some(c) => writeln!(w, "v {} {} {} {} {} {}", v.x, v.y, v.z, c[i].x, c[i].y, c[i].z)?,
                None => writeln!(w, "v {} {} {}", v.x, v.y, v.z)?,
            }
        }
        for t in &mesh.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        w.flush()
    })();
    res.map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyScalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyScalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn name(self) -> &'static str {
        match self {
            Self::I8 => "char",
            Self::U8 => "uchar",
            Self::I16 => "short",
            Self::U16 => "ushort",
            Self::I32 => "int",
            Self::U32 => "uint",
            Self::F32 => "float",
            Self::F64 => "double",
        }
    }

    fn read(self, r: &mut impl Read) -> std::io::Result<f64> {
        macro_rules! rd {
            ($t:ty) => {{
                let mut b = [0u8; std::mem::size_of::<$t>()];
                r.read_exact(&mut b)?;
                <$t>::from_le_bytes(b) as f64
            }};
        }
        Ok(match self {
            Self::I8 => rd!(i8),
            Self::U8 => rd!(u8),
            Self::I16 => rd!(i16),
            Self::U16 => rd!(u16),
            Self::I32 => rd!(i32),
            Self::U32 => rd!(u32),
            Self::F32 => rd!(f32),
            Self::F64 => rd!(f64),
        })
    }

    fn write(self, w: &mut impl Write, v: f64) -> std::io::Result<()> {
        match self {
            Self::I8 => w.write_all(&(v as i8).to_le_bytes()),
            Self::U8 => w.write_all(&(v as u8).to_le_bytes()),
            Self::I16 => w.write_all(&(v as i16).to_le_bytes()),
            Self::U16 => w.write_all(&(v as u16).to_le_bytes()),
            Self::I32 => w.write_all(&(v as i32).to_le_bytes()),
            Self::U32 => w.write_all(&(v as u32).to_le_bytes()),
            Self::F32 => w.write_all(&(v as f32).to_le_bytes()),
            Self::F64 => w.write_all(&v.to_le_bytes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlyProperty {
    Scalar { name: String, ty: PlyScalar },
    List { name: String, count: PlyScalar, item: PlyScalar },
}

impl PlyProperty {
    pub fn name(&self) -> &str {
        match self {
            Self::Scalar { name, .. } | Self::List { name, .. } => name,
        }
    }
}

/// One PLY element with its data stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct PlyElement {
    pub name: String,
    pub count: usize,
    pub properties: Vec<PlyProperty>,
    /// One entry per property; scalars hold `count` values, lists hold
    /// concatenated items with `list_offsets` marking rows.
    pub scalars: Vec<Vec<f64>>,
    pub lists: Vec<Vec<Vec<u32>>>,
}

impl PlyElement {
    pub fn new(name: &str, properties: Vec<PlyProperty>) -> Self {
        let n = properties.len();
        Self {
            name: name.to_string(),
            count: 0,
            properties,
            scalars: vec![Vec::new(); n],
            lists: vec![Vec::new(); n],
        }
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.properties
            .iter()
            .position(|p| matches!(p, PlyProperty::Scalar { name: n, .. } if n == name))
            .map(|i| self.scalars[i].as_slice())
    }

    pub fn list(&self, name: &str) -> Option<&[Vec<u32>]> {
        self.properties
            .iter()
            .position(|p| matches!(p, PlyProperty::List { name: n, .. } if n == name))
            .map(|i| self.lists[i].as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlyData {
    pub elements: Vec<PlyElement>,
}

impl PlyData {
    pub fn element(&self, name: &str) -> Option<&PlyElement> {
        self.elements.iter().find(|e| e.name == name)
    }
}

pub fn read_ply(path: &Path) -> Result<PlyData, SceneError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    parse_ply(&mut BufReader::new(file)).map_err(|m| fmt_err(path, m))
}

pub fn parse_ply(r: &mut impl BufRead) -> Result<PlyData, String> {
    let mut line = String::new();
    let next_line = |r: &mut dyn BufRead, line: &mut String| -> Result<(), String> {
        line.clear();
        let n = r.read_line(line).map_err(|e| e.to_string())?;
        if n == 0 {
            return Err("unexpected end of PLY header".into());
        }
        Ok(())
    };
    next_line(r, &mut line)?;
    if line.trim() != "ply" {
        return Err("missing `ply` magic".into());
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut counts = Vec::new();
    loop {
        next_line(r, &mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(format!("unsupported PLY format `{fmt}`"));
                }
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let c: usize = count.parse().map_err(|_| format!("bad element count `{count}`"))?;
                elements.push(PlyElement::new(name, Vec::new()));
                counts.push(c);
            }
            ["property", "list", cty, ity, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                let count = PlyScalar::parse(cty).ok_or(format!("bad type `{cty}`"))?;
                let item = PlyScalar::parse(ity).ok_or(format!("bad type `{ity}`"))?;
                el.properties.push(PlyProperty::List {
                    name: name.to_string(),
                    count,
                    item,
                });
                el.scalars.push(Vec::new());
                el.lists.push(Vec::new());
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                let ty = PlyScalar::parse(ty).ok_or(format!("bad type `{ty}`"))?;
                el.properties.push(PlyProperty::Scalar {
                    name: name.to_string(),
                    ty,
                });
                el.scalars.push(Vec::new());
                el.lists.push(Vec::new());
            }
            ["end_header"] => break,
            other => return Err(format!("unrecognized header line `{}`", other.join(" "))),
        }
    }
    for (el, &count) in elements.iter_mut().zip(&counts) {
        el.count = count;
        for (i, p) in el.properties.iter().enumerate() {
            if matches!(p, PlyProperty::Scalar { .. }) {
                el.scalars[i].reserve(count);
            } else {
                el.lists[i].reserve(count);
            }
        }
        for _ in 0..count {
            for i in 0..el.properties.len() {
                match &el.properties[i] {
                    PlyProperty::Scalar { ty, .. } => {
                        let v = ty.read(r).map_err(|e| format!("{} data: {e}", el.name))?;
                        el.scalars[i].push(v);
                    }
                    PlyProperty::List { count, item, .. } => {
                        let n = count.read(r).map_err(|e| format!("{} data: {e}", el.name))? as usize;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            let v = item.read(r).map_err(|e| format!("{} data: {e}", el.name))?;
                            if v < 0.0 {
                                return Err("negative list entry".into());
                            }
                            items.push(v as u32);
                        }
                        el.lists[i].push(items);
                    }
                }
            }
        }
    }
    Ok(PlyData { elements })
}

pub fn write_ply(path: &Path, data: &PlyData) -> Result<(), SceneError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    encode_ply(&mut w, data)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

pub fn encode_ply(w: &mut impl Write, data: &PlyData) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    for el in &data.elements {
        writeln!(w, "element {} {}", el.name, el.count)?;
        for p in &el.properties {
            match p {
                PlyProperty::Scalar { name, ty } => writeln!(w, "property {} {}", ty.name(), name)?,
                PlyProperty::List { name, count, item } => {
                    writeln!(w, "property list {} {} {}", count.name(), item.name(), name)?
                }
            }
        }
    }
    writeln!(w, "end_header")?;
    for el in &data.elements {
        for row in 0..el.count {
            for (i, p) in el.properties.iter().enumerate() {
                match p {
                    PlyProperty::Scalar { ty, .. } => ty.write(w, el.scalars[i][row])?,
                    PlyProperty::List { count, item, .. } => {
                        let items = &el.lists[i][row];
                        count.write(w, items.len() as f64)?;
                        for &v in items {
                            item.write(w, v as f64)?;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn read_ply_mesh(path: &Path) -> Result<TriangleMesh, SceneError> {
    let data = read_ply(path)?;
    let v = data.element("vertex").ok_or_else(|| fmt_err(path, "no vertex element"))?;
    let (x, y, z) = match (v.column("x"), v.column("y"), v.column("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(fmt_err(path, "vertex element lacks x/y/z")),
    };
    let vertices = (0..v.count).map(|i| Vec3::new(x[i], y[i], z[i])).collect();
    let colors = match (v.column("red"), v.column("green"), v.column("blue")) {
        (Some(r), Some(g), Some(b)) => {
            let uchar = v.properties.iter().any(
                |p| matches!(p, PlyProperty::Scalar { name, ty: PlyScalar::U8 } if name == "red"),
            );
            let s = if uchar { 1.0 / 255.0 } else { 1.0 };
            Some((0..v.count).map(|i| Vec3::new(r[i] * s, g[i] * s, b[i] * s)).collect())
        }
        _ => None,
    };
    let mut triangles = Vec::new();
    if let Some(f) = data.element("face") {
        let lists = f
            .list("vertex_indices")
            .or_else(|| f.list("vertex_index"))
            .ok_or_else(|| fmt_err(path, "face element lacks vertex_indices"))?;
        for poly in lists {
            for k in 1..poly.len().saturating_sub(1) {
                triangles.push([poly[0], poly[k], poly[k + 1]]);
            }
        }
    }
    Ok(TriangleMesh {
        vertices,
        triangles,
        colors,
    })
}

pub fn write_ply_mesh(path: &Path, mesh: &TriangleMesh) -> Result<(), SceneError> {
    let mut props = vec![
        PlyProperty::Scalar { name: "x".into(), ty: PlyScalar::F64 },
        PlyProperty::Scalar { name: "y".into(), ty: PlyScalar::F64 },
        PlyProperty::Scalar { name: "z".into(), ty: PlyScalar::F64 },
    ];
    if mesh.colors.is_some() {
        for c in ["red", "green", "blue"] {
            props.push(PlyProperty::Scalar { name: c.into(), ty: PlyScalar::F64 });
        }
    }
    let mut v = PlyElement::new("vertex", props);
    v.count = mesh.vertices.len();
    for (i, p) in mesh.vertices.iter().enumerate() {
        v.scalars[0].push(p.x);
        v.scalars[1].push(p.y);
        v.scalars[2].push(p.z);
        if let Some(c) = &mesh.colors {
            v.scalars[3].push(c[i].x);
            v.scalars[4].push(c[i].y);
            v.scalars[5].push(c[i].z);
        }
    }
    let mut f = PlyElement::new(
        "face",
        vec![PlyProperty::List {
            name: "vertex_indices".into(),
            count: PlyScalar::U8,
            item: PlyScalar::U32,
        }],
    );
    f.count = mesh.triangles.len();
    f.lists[0] = mesh.triangles.iter().map(|t| t.to_vec()).collect();
    write_ply(path, &PlyData { elements: vec![v, f] })
}

pub fn read_rgb(path: &Path) -> Result<image::RgbImage, SceneError> {
    let img = image::open(path).map_err(|e| io_err(path, e))?;
    Ok(img.to_rgb8())
}

pub fn write_rgb(path: &Path, img: &image::RgbImage) -> Result<(), SceneError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| io_err(path, e))
}

/// Reads a mask PNG; a pixel is set when its luma exceeds 127.
pub fn read_mask(path: &Path) -> Result<MaskImage, SceneError> {
    let img = image::open(path).map_err(|e| io_err(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    Ok(MaskImage {
        width: w,
        height: h,
        values: img.pixels().map(|p| p.0[0] > 127).collect(),
    })
}

pub fn write_mask(path: &Path, mask: &MaskImage) -> Result<(), SceneError> {
    let img = image::GrayImage::from_fn(mask.width, mask.height, |x, y| {
        image::Luma([if mask.get(x, y) { 255 } else { 0 }])
    });
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| io_err(path, e))
}

pub const DEPTH_MAGIC: &[u8; 4] = b"DPTH";

/// `DPTH` raster: 16-byte header (magic, u32 width, u32 height, u32
/// reserved) followed by row-major little-endian f32 depths.
pub fn encode_depth(depth: &DepthImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * depth.values.len());
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&depth.width.to_le_bytes());
    out.extend_from_slice(&depth.height.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in &depth.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_depth(bytes: &[u8]) -> Result<DepthImage, String> {
    if bytes.len() < 16 || &bytes[0..4] != DEPTH_MAGIC {
        return Err("missing DPTH header".into());
    }
    let u32_at = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let (w, h) = (u32_at(4), u32_at(8));
    let n = w as usize * h as usize;
    if bytes.len() != 16 + 4 * n {
        return Err(format!(
            "DPTH payload is {} bytes, expected {} for {}x{}",
            bytes.len() - 16,
            4 * n,
            w,
            h
        ));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(DepthImage {
        width: w,
        height: h,
        values,
    })
}

pub fn read_depth(path: &Path) -> Result<DepthImage, SceneError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_depth(&bytes).map_err(|m| fmt_err(path, m))
}

pub fn write_depth(path: &Path, depth: &DepthImage) -> Result<(), SceneError> {
    fs::write(path, encode_depth(depth)).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_parses_polygons_colors_and_negative_indices() {
        let src = "# quad\nv 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 1 1 0 0 0 1\nv 0 1 0 1 1 1\nf 1/1 2/2 3/3 -1\n";
        let m = parse_obj(src.as_bytes()).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.colors.as_ref().unwrap()[1], Vec3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn ply_mesh_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        let mesh = TriangleMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.5, 0.0, 0.0), Vec3::new(0.0, 2.5, 0.1)],
            vec![[0, 1, 2]],
        )
        .with_uniform_color(Vec3::new(0.25, 0.5, 0.75));
        write_ply_mesh(&path, &mesh).unwrap();
        assert_eq!(read_mesh(&path).unwrap(), mesh);
    }

    #[test]
    fn depth_header_layout() {
        let d = DepthImage::from_fn(3, 2, |x, y| if x == 1 { f64::NAN } else { 1.0 + y as f64 });
        let bytes = encode_depth(&d);
        assert_eq!(&bytes[0..4], b"DPTH");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 16 + 24);
        let back = decode_depth(&bytes).unwrap();
        assert_eq!(back.get(0, 1), Some(2.0));
        assert_eq!(back.get(1, 0), None);
        assert!(decode_depth(&bytes[..20]).is_err());
    }
}
