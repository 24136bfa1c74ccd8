//! ASCII PLY for labeled clouds and class-carrying meshes.
//!
//! Cloud schema: `x y z` doubles plus a `label` int (predicted class) and,
//! when ground truth is attached, a `class` int. Mesh schema: `x y z`
//! doubles plus a `class` int per vertex and a face list. Class codes
//! follow `TissueClass::code`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::cloud::{LabeledPointCloud, TissueClass};
use crate::geometry::{Point3, TriangleMesh};

use super::FormatError;

/// A mesh plus its per-vertex tissue classes.
#[derive(Debug, Clone)]
pub struct MeshPayload {
    pub mesh: TriangleMesh,
    pub classes: Vec<TissueClass>,
}

pub fn write_labeled_cloud_ply(
    path: &Path,
    cloud: &LabeledPointCloud,
) -> Result<(), FormatError> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let has_truth = cloud.ground_truth().is_some();
    (|| -> std::io::Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "comment frame {}", cloud.frame)?;
        writeln!(w, "element vertex {}", cloud.len())?;
        writeln!(w, "property double x")?;
        writeln!(w, "property double y")?;
        writeln!(w, "property double z")?;
        writeln!(w, "property int label")?;
        if has_truth {
            writeln!(w, "property int class")?;
        }
        writeln!(w, "end_header")?;
        for i in 0..cloud.len() {
            let p = &cloud.points()[i];
            let label = cloud.labels()[i].code();
            if let Some(truth) = cloud.ground_truth() {
                writeln!(w, "{} {} {} {} {}", p.x, p.y, p.z, label, truth[i].code())?;
            } else {
                writeln!(w, "{} {} {} {}", p.x, p.y, p.z, label)?;
            }
        }
        w.flush()
    })()
    .map_err(|e| FormatError::io(path, e))
}

pub fn write_mesh_ply(
    path: &Path,
    mesh: &TriangleMesh,
    classes: &[TissueClass],
) -> Result<(), FormatError> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "element vertex {}", mesh.vertices().len())?;
        writeln!(w, "property double x")?;
        writeln!(w, "property double y")?;
        writeln!(w, "property double z")?;
        writeln!(w, "property int class")?;
        writeln!(w, "element face {}", mesh.triangles().len())?;
        writeln!(w, "property list uchar int vertex_indices")?;
        writeln!(w, "end_header")?;
        for (v, c) in mesh.vertices().iter().zip(classes) {
            writeln!(w, "{} {} {} {}", v.x, v.y, v.z, c.code())?;
        }
        for t in mesh.triangles() {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        w.flush()
    })()
    .map_err(|e| FormatError::io(path, e))
}

struct PlyHeader {
    vertex_count: usize,
    face_count: usize,
    vertex_props: Vec<String>,
    frame: Option<String>,
    data_start: usize,
}

fn parse_header(path: &Path, lines: &[String]) -> Result<PlyHeader, FormatError> {
    if lines.first().map(String::as_str) != Some("ply") {
        return Err(FormatError::parse(path, 1, "missing 'ply' magic"));
    }
    let mut vertex_count = None;
    let mut face_count = 0usize;
    let mut vertex_props = Vec::new();
    let mut frame = None;
    let mut current_element: Option<String> = None;
    for (i, line) in lines.iter().enumerate().skip(1) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", "1.0"] => {}
            ["comment", "frame", name] => frame = Some((*name).to_string()),
            ["comment", ..] => {}
            ["element", "vertex", n] => {
                current_element = Some("vertex".into());
                vertex_count = Some(n.parse::<usize>().map_err(|_| {
                    FormatError::parse(path, i + 1, "bad vertex count")
                })?);
            }
            ["element", "face", n] => {
                current_element = Some("face".into());
                face_count = n
                    .parse::<usize>()
                    .map_err(|_| FormatError::parse(path, i + 1, "bad face count"))?;
            }
            ["element", ..] => {
                return Err(FormatError::parse(path, i + 1, "unsupported element"));
            }
            ["property", "list", ..] => {}
            ["property", _ty, name] => {
                if current_element.as_deref() == Some("vertex") {
                    vertex_props.push((*name).to_string());
                }
            }
            ["end_header"] => {
                return Ok(PlyHeader {
                    vertex_count: vertex_count
                        .ok_or_else(|| FormatError::parse(path, i + 1, "no vertex element"))?,
                    face_count,
                    vertex_props,
                    frame,
                    data_start: i + 1,
                });
            }
            [] => {}
            _ => {
                return Err(FormatError::parse(path, i + 1, format!("unrecognized: {line}")));
            }
        }
    }
    Err(FormatError::parse(path, lines.len(), "missing end_header"))
}

fn read_lines(path: &Path) -> Result<Vec<String>, FormatError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<String>>>()
        .map_err(|e| FormatError::io(path, e))
}

fn class_from_code(path: &Path, line: usize, code: i64) -> Result<TissueClass, FormatError> {
    u16::try_from(code)
        .ok()
        .and_then(TissueClass::from_code)
        .ok_or_else(|| FormatError::parse(path, line, format!("invalid class code {code}")))
}

pub fn read_labeled_cloud_ply(path: &Path) -> Result<LabeledPointCloud, FormatError> {
    let lines = read_lines(path)?;
    let header = parse_header(path, &lines)?;
    let props = &header.vertex_props;
    let find = |name: &str| props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(FormatError::structure(path, "cloud needs x, y, z properties")),
    };
    let ilabel = find("label");
    let iclass = find("class");

    let mut points = Vec::with_capacity(header.vertex_count);
    let mut labels = Vec::with_capacity(header.vertex_count);
    let mut truth = Vec::with_capacity(header.vertex_count);
    for k in 0..header.vertex_count {
        let line_no = header.data_start + k;
        let line = lines
            .get(line_no)
            .ok_or_else(|| FormatError::parse(path, line_no + 1, "unexpected end of file"))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < props.len() {
            return Err(FormatError::parse(path, line_no + 1, "too few fields"));
        }
        let coord = |idx: usize| -> Result<f64, FormatError> {
            fields[idx]
                .parse::<f64>()
                .map_err(|_| FormatError::parse(path, line_no + 1, "bad float"))
        };
        let p = Point3::new(coord(ix)?, coord(iy)?, coord(iz)?);
        if !p.is_finite() {
            return Err(FormatError::parse(path, line_no + 1, "non-finite coordinate"));
        }
        points.push(p);
        if let Some(il) = ilabel {
            let code: i64 = fields[il]
                .parse()
                .map_err(|_| FormatError::parse(path, line_no + 1, "bad label"))?;
            labels.push(class_from_code(path, line_no + 1, code)?);
        } else {
            labels.push(TissueClass::Background);
        }
        if let Some(ic) = iclass {
            let code: i64 = fields[ic]
                .parse()
                .map_err(|_| FormatError::parse(path, line_no + 1, "bad class"))?;
            truth.push(class_from_code(path, line_no + 1, code)?);
        }
    }
    let frame = header.frame.unwrap_or_else(|| "world".to_string());
    let mut cloud = LabeledPointCloud::new(frame, points, labels)?;
    if iclass.is_some() {
        cloud = cloud.with_ground_truth(truth)?;
    }
    Ok(cloud)
}

pub fn read_mesh_ply(path: &Path) -> Result<MeshPayload, FormatError> {
    let lines = read_lines(path)?;
    let header = parse_header(path, &lines)?;
    let props = &header.vertex_props;
    let find = |name: &str| props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(FormatError::structure(path, "mesh needs x, y, z properties")),
    };
    let iclass = find("class");

    let mut vertices = Vec::with_capacity(header.vertex_count);
    let mut classes = Vec::with_capacity(header.vertex_count);
    for k in 0..header.vertex_count {
        let line_no = header.data_start + k;
        let line = lines
            .get(line_no)
            .ok_or_else(|| FormatError::parse(path, line_no + 1, "unexpected end of file"))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < props.len() {
            return Err(FormatError::parse(path, line_no + 1, "too few fields"));
        }
        let coord = |idx: usize| -> Result<f64, FormatError> {
            fields[idx]
                .parse::<f64>()
                .map_err(|_| FormatError::parse(path, line_no + 1, "bad float"))
        };
        vertices.push(Point3::new(coord(ix)?, coord(iy)?, coord(iz)?));
        if let Some(ic) = iclass {
            let code: i64 = fields[ic]
                .parse()
                .map_err(|_| FormatError::parse(path, line_no + 1, "bad class"))?;
            classes.push(class_from_code(path, line_no + 1, code)?);
        } else {
            classes.push(TissueClass::Healthy);
        }
    }
    let mut triangles = Vec::with_capacity(header.face_count);
    for k in 0..header.face_count {
        let line_no = header.data_start + header.vertex_count + k;
        let line = lines
            .get(line_no)
            .ok_or_else(|| FormatError::parse(path, line_no + 1, "unexpected end of file"))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "3" {
            return Err(FormatError::parse(
                path,
                line_no + 1,
                "only triangle faces are supported",
            ));
        }
        let mut tri = [0u32; 3];
        for (slot, f) in tri.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse()
                .map_err(|_| FormatError::parse(path, line_no + 1, "bad vertex index"))?;
        }
        triangles.push(tri);
    }
    let mesh = TriangleMesh::new(vertices, triangles)?;
    Ok(MeshPayload { mesh, classes })
}
