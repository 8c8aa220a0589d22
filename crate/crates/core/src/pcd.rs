//! PCD v0.7 reader and writer for pose-annotated clouds.
//!
//! Only `x y z` and an optional scalar `label` field are interpreted; other
//! fields are skipped. The sensor pose travels in the `VIEWPOINT` line as
//! `tx ty tz qw qx qy qz`. Coordinates are written as 64-bit floats so a
//! binary round trip is bit-exact.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Label, LabeledCloud, Point3, Pose, ScanFrame};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PcdEncoding {
    Ascii,
    #[default]
    Binary,
}

/// Everything a PCD file carries that this crate cares about.
#[derive(Clone, Debug, PartialEq)]
pub struct PcdCloud {
    pub points: Vec<Point3>,
    pub labels: Option<Vec<Label>>,
    pub pose: Pose,
    /// Points dropped because a coordinate was NaN or infinite.
    pub dropped_non_finite: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PcdData {
    Scan(ScanFrame),
    Labeled(LabeledCloud),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Float,
    Signed,
    Unsigned,
}

#[derive(Clone, Debug)]
struct Field {
    name: String,
    size: usize,
    kind: Kind,
    count: usize,
}

impl Field {
    fn decode(&self, bytes: &[u8]) -> Result<f64> {
        let v = match (self.kind, self.size) {
            (Kind::Float, 4) => f32::from_le_bytes(bytes.try_into().unwrap()) as f64,
            (Kind::Float, 8) => f64::from_le_bytes(bytes.try_into().unwrap()),
            (Kind::Signed, 1) => i8::from_le_bytes(bytes.try_into().unwrap()) as f64,
            (Kind::Signed, 2) => i16::from_le_bytes(bytes.try_into().unwrap()) as f64,
            (Kind::Signed, 4) => i32::from_le_bytes(bytes.try_into().unwrap()) as f64,
            (Kind::Signed, 8) => i64::from_le_bytes(bytes.try_into().unwrap()) as f64,
            (Kind::Unsigned, 1) => bytes[0] as f64,
            (Kind::Unsigned, 2) => u16::from_le_bytes(bytes.try_into().unwrap()) as f64,
            (Kind::Unsigned, 4) => u32::from_le_bytes(bytes.try_into().unwrap()) as f64,
            (Kind::Unsigned, 8) => u64::from_le_bytes(bytes.try_into().unwrap()) as f64,
            _ => {
                return Err(Error::UnsupportedFormat(format!(
                    "field `{}` has unsupported SIZE {} for its TYPE",
                    self.name, self.size
                )))
            }
        };
        Ok(v)
    }
}

struct Header {
    fields: Vec<Field>,
    points: usize,
    pose: Pose,
    binary: bool,
}

fn header_err(line: usize, message: impl Into<String>) -> Error {
    Error::PcdHeader {
        line,
        message: message.into(),
    }
}

/// Parses the header, returning it and the byte offset where the data starts.
fn parse_header(bytes: &[u8]) -> Result<(Header, usize)> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut names: Option<Vec<String>> = None;
    let mut sizes: Option<Vec<usize>> = None;
    let mut kinds: Option<Vec<Kind>> = None;
    let mut counts: Option<Vec<usize>> = None;
    let mut width: Option<usize> = None;
    let mut height: Option<usize> = None;
    let mut points: Option<usize> = None;
    let mut pose = Pose::identity();
    let mut saw_version = false;

    loop {
        if offset >= bytes.len() {
            return Err(header_err(line_no + 1, "header ended before a DATA line"));
        }
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |p| offset + p);
        line_no += 1;
        let raw = &bytes[offset..end];
        offset = (end + 1).min(bytes.len());
        let line = std::str::from_utf8(raw)
            .map_err(|_| header_err(line_no, "header line is not valid UTF-8"))?
            .trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().unwrap().to_ascii_uppercase();
        let rest: Vec<&str> = tokens.collect();
        if !saw_version && key != "VERSION" {
            return Err(header_err(line_no, format!("expected VERSION, found `{line}`")));
        }
        let parse_usizes = |what: &str| -> Result<Vec<usize>> {
            rest.iter()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| header_err(line_no, format!("bad {what} value `{t}`")))
                })
                .collect()
        };
        let single = |what: &str| -> Result<usize> {
            match rest.as_slice() {
                [t] => t
                    .parse::<usize>()
                    .map_err(|_| header_err(line_no, format!("bad {what} value `{t}`"))),
                _ => Err(header_err(line_no, format!("{what} takes exactly one value"))),
            }
        };
        match key.as_str() {
            "VERSION" => {
                match rest.as_slice() {
                    ["0.7"] | [".7"] => {}
                    _ => return Err(header_err(line_no, format!("unsupported version `{line}`"))),
                }
                saw_version = true;
            }
            "FIELDS" => names = Some(rest.iter().map(|s| s.to_string()).collect()),
            "SIZE" => sizes = Some(parse_usizes("SIZE")?),
            "TYPE" => {
                kinds = Some(
                    rest.iter()
                        .map(|t| match *t {
                            "F" => Ok(Kind::Float),
                            "I" => Ok(Kind::Signed),
                            "U" => Ok(Kind::Unsigned),
                            other => Err(header_err(line_no, format!("bad TYPE `{other}`"))),
                        })
                        .collect::<Result<_>>()?,
                )
            }
            "COUNT" => counts = Some(parse_usizes("COUNT")?),
            "WIDTH" => width = Some(single("WIDTH")?),
            "HEIGHT" => height = Some(single("HEIGHT")?),
            "POINTS" => points = Some(single("POINTS")?),
            "VIEWPOINT" => {
                let vals: Vec<f64> = rest
                    .iter()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| header_err(line_no, format!("bad VIEWPOINT value `{t}`")))
                    })
                    .collect::<Result<_>>()?;
                if vals.len() != 7 {
                    return Err(header_err(line_no, "VIEWPOINT needs 7 values (tx ty tz qw qx qy qz)"));
                }
                pose = Pose::from_parts([vals[0], vals[1], vals[2]], [vals[3], vals[4], vals[5], vals[6]])
                    .map_err(|e| header_err(line_no, e.to_string()))?;
            }
            "DATA" => {
                let binary = match rest.as_slice() {
                    ["ascii"] => false,
                    ["binary"] => true,
                    [other] => {
                        return Err(Error::UnsupportedFormat(format!("PCD DATA encoding `{other}`")))
                    }
                    _ => return Err(header_err(line_no, "DATA takes exactly one value")),
                };
                let names = names.ok_or_else(|| header_err(line_no, "missing FIELDS line"))?;
                let n = names.len();
                let sizes = sizes.ok_or_else(|| header_err(line_no, "missing SIZE line"))?;
                let kinds = kinds.ok_or_else(|| header_err(line_no, "missing TYPE line"))?;
                let counts = counts.unwrap_or_else(|| vec![1; n]);
                if sizes.len() != n || kinds.len() != n || counts.len() != n {
                    return Err(header_err(
                        line_no,
                        "FIELDS, SIZE, TYPE and COUNT lengths disagree",
                    ));
                }
                let fields: Vec<Field> = names
                    .into_iter()
                    .zip(sizes)
                    .zip(kinds)
                    .zip(counts)
                    .map(|(((name, size), kind), count)| Field {
                        name,
                        size,
                        kind,
                        count,
                    })
                    .collect();
                for axis in ["x", "y", "z"] {
                    if !fields.iter().any(|f| f.name == axis) {
                        return Err(header_err(line_no, format!("FIELDS lacks `{axis}`")));
                    }
                }
                let points = match (points, width, height) {
                    (Some(p), _, _) => p,
                    (None, Some(w), Some(h)) => w * h,
                    _ => return Err(header_err(line_no, "missing POINTS line")),
                };
                if let (Some(w), Some(h)) = (width, height) {
                    if w * h != points {
                        return Err(header_err(line_no, "WIDTH*HEIGHT disagrees with POINTS"));
                    }
                }
                return Ok((
                    Header {
                        fields,
                        points,
                        pose,
                        binary,
                    },
                    offset,
                ));
            }
            other => return Err(header_err(line_no, format!("unknown header key `{other}`"))),
        }
    }
}

pub fn parse_pcd(bytes: &[u8]) -> Result<PcdCloud> {
    let (header, data_start) = parse_header(bytes)?;
    let data = &bytes[data_start..];
    let index_of = |name: &str| header.fields.iter().position(|f| f.name == name);
    let (ix, iy, iz) = (index_of("x").unwrap(), index_of("y").unwrap(), index_of("z").unwrap());
    let ilabel = index_of("label");

    // Flatten fields to per-scalar slots; a field with COUNT > 1 takes several.
    let mut slot_of_field = Vec::with_capacity(header.fields.len());
    let mut byte_of_field = Vec::with_capacity(header.fields.len());
    let (mut slots, mut stride) = (0usize, 0usize);
    for f in &header.fields {
        slot_of_field.push(slots);
        byte_of_field.push(stride);
        slots += f.count;
        stride += f.size * f.count;
    }

    let mut points = Vec::with_capacity(header.points);
    let mut labels = ilabel.map(|_| Vec::with_capacity(header.points));
    let mut dropped = 0usize;
    let mut push = |vals: [f64; 3], label: Option<f64>, row: usize| -> Result<()> {
        let p = Point3::new(vals[0], vals[1], vals[2]);
        if !p.is_finite() {
            dropped += 1;
            return Ok(());
        }
        points.push(p);
        if let (Some(labels), Some(l)) = (labels.as_mut(), label) {
            let tag = if l == 0.0 {
                Label::Static
            } else if l == 1.0 {
                Label::Dynamic
            } else {
                return Err(Error::PcdData(format!("point {row} has label {l}, expected 0 or 1")));
            };
            labels.push(tag);
        }
        Ok(())
    };

    if header.binary {
        let needed = stride * header.points;
        if data.len() < needed {
            return Err(Error::PcdData(format!(
                "binary payload has {} bytes, header promises {needed}",
                data.len()
            )));
        }
        for (row, rec) in data[..needed].chunks_exact(stride.max(1)).enumerate() {
            let read = |fi: usize| -> Result<f64> {
                let f = &header.fields[fi];
                let at = byte_of_field[fi];
                f.decode(&rec[at..at + f.size])
            };
            let label = ilabel.map(&read).transpose()?;
            push([read(ix)?, read(iy)?, read(iz)?], label, row)?;
        }
    } else {
        let text = std::str::from_utf8(data)
            .map_err(|_| Error::PcdData("ascii payload is not valid UTF-8".into()))?;
        let mut rows = 0usize;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if rows == header.points {
                return Err(Error::PcdData(format!(
                    "more data rows than the {} POINTS declared",
                    header.points
                )));
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != slots {
                return Err(Error::PcdData(format!(
                    "row {rows} has {} values, expected {slots}",
                    toks.len()
                )));
            }
            let read = |fi: usize| -> Result<f64> {
                let t = toks[slot_of_field[fi]];
                parse_ascii_scalar(t)
                    .ok_or_else(|| Error::PcdData(format!("row {rows}: bad number `{t}`")))
            };
            let label = ilabel.map(&read).transpose()?;
            push([read(ix)?, read(iy)?, read(iz)?], label, rows)?;
            rows += 1;
        }
        if rows != header.points {
            return Err(Error::PcdData(format!(
                "found {rows} data rows, header declares {}",
                header.points
            )));
        }
    }

    if dropped > 0 {
        log::warn!("dropped {dropped} points with non-finite coordinates");
    }
    Ok(PcdCloud {
        points,
        labels,
        pose: header.pose,
        dropped_non_finite: dropped,
    })
}

fn parse_ascii_scalar(t: &str) -> Option<f64> {
    match t.to_ascii_lowercase().as_str() {
        "nan" | "-nan" => Some(f64::NAN),
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => t.parse().ok(),
    }
}

pub fn read_pcd(path: impl AsRef<Path>) -> Result<PcdCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).with_path(path))?;
    parse_pcd(&bytes).map_err(|e| e.with_path(path))
}

/// Loads a PCD file as a scan (no `label` field) or a labeled cloud.
///
/// The scan index is taken from the numeric file stem (`004390.pcd` → 4390), 0 otherwise.
pub fn load_pcd(path: impl AsRef<Path>) -> Result<PcdData> {
    let path = path.as_ref();
    let cloud = read_pcd(path)?;
    match cloud.labels {
        Some(labels) => Ok(PcdData::Labeled(LabeledCloud::new(cloud.points, labels)?)),
        None => {
            let index = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u64>().ok())
                .unwrap_or(0);
            ScanFrame::new(index, cloud.pose, cloud.points)
                .map(PcdData::Scan)
                .map_err(|e| e.with_path(path))
        }
    }
}

pub fn write_pcd<W: Write>(
    mut w: W,
    points: &[Point3],
    labels: Option<&[Label]>,
    pose: &Pose,
    encoding: PcdEncoding,
) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidInput("refusing to write an empty cloud".into()));
    }
    if let Some(labels) = labels {
        if labels.len() != points.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
    }
    let n = points.len();
    let vp = pose.to_viewpoint();
    writeln!(w, "# .PCD v0.7 - Point Cloud Data file format")?;
    writeln!(w, "VERSION 0.7")?;
    if labels.is_some() {
        writeln!(w, "FIELDS x y z label")?;
        writeln!(w, "SIZE 8 8 8 4")?;
        writeln!(w, "TYPE F F F U")?;
        writeln!(w, "COUNT 1 1 1 1")?;
    } else {
        writeln!(w, "FIELDS x y z")?;
        writeln!(w, "SIZE 8 8 8")?;
        writeln!(w, "TYPE F F F")?;
        writeln!(w, "COUNT 1 1 1")?;
    }
    writeln!(w, "WIDTH {n}")?;
    writeln!(w, "HEIGHT 1")?;
    writeln!(
        w,
        "VIEWPOINT {} {} {} {} {} {} {}",
        vp[0], vp[1], vp[2], vp[3], vp[4], vp[5], vp[6]
    )?;
    writeln!(w, "POINTS {n}")?;
    match encoding {
        PcdEncoding::Ascii => {
            writeln!(w, "DATA ascii")?;
            for (i, p) in points.iter().enumerate() {
                // `{}` on f64 prints the shortest string that parses back to the same value.
                match labels {
                    Some(l) => writeln!(w, "{} {} {} {}", p.x, p.y, p.z, l[i].as_u8())?,
                    None => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
                }
            }
        }
        PcdEncoding::Binary => {
            writeln!(w, "DATA binary")?;
            let stride = if labels.is_some() { 28 } else { 24 };
            let mut buf = Vec::with_capacity(stride * n);
            for (i, p) in points.iter().enumerate() {
                buf.extend_from_slice(&p.x.to_le_bytes());
                buf.extend_from_slice(&p.y.to_le_bytes());
                buf.extend_from_slice(&p.z.to_le_bytes());
                if let Some(l) = labels {
                    buf.extend_from_slice(&(l[i].as_u8() as u32).to_le_bytes());
                }
            }
            w.write_all(&buf)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_pcd(
    path: impl AsRef<Path>,
    points: &[Point3],
    labels: Option<&[Label]>,
    pose: &Pose,
    encoding: PcdEncoding,
) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::from(e).with_path(path))?;
    write_pcd(BufWriter::new(file), points, labels, pose, encoding).map_err(|e| e.with_path(path))
}
