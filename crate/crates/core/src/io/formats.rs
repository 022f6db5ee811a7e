//! SPCL (structured pointcloud), SVOL (scene volume) and PCLS (classifier)
//! little-endian binary formats.
//!
//! Readers never trust header counts: the declared payload size is computed
//! with checked arithmetic and compared against the actual byte count before
//! anything is allocated.

use std::fs;
use std::path::Path;

use nalgebra::Point3;

use super::FormatError;
use crate::cloud::StructuredPointCloud;
use crate::error::{Error, Result};
use crate::likelihood::check_compatible;
use crate::scene::{CellTag, ClassifierField, GridGeometry, SceneField};

pub const OBJECT_MAGIC: [u8; 4] = *b"SPC1";
pub const SCENE_MAGIC: [u8; 4] = *b"SVL1";
pub const CLASSIFIER_MAGIC: [u8; 4] = *b"PCL1";

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::TruncatedPayload {
                needed: (self.pos + n) as u64,
                available: self.buf.len() as u64,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let found = &self.buf[..self.buf.len().min(4)];
        if found != expected {
            return Err(FormatError::BadMagic {
                expected,
                found: found.to_vec(),
            });
        }
        self.pos = 4;
        Ok(())
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32, FormatError> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn finite_f32(&mut self, what: &str) -> Result<f32, FormatError> {
        let v = self.f32()?;
        if !v.is_finite() {
            return Err(FormatError::NonFiniteValue(format!("{what} is {v}")));
        }
        Ok(v)
    }

    /// Ensures exactly `n` more bytes follow the header.
    fn expect_payload(&self, n: Option<usize>) -> Result<(), FormatError> {
        let n = n.ok_or_else(|| FormatError::InvalidHeader("declared size overflows".into()))?;
        let have = self.remaining();
        if have < n {
            return Err(FormatError::TruncatedPayload {
                needed: (self.pos as u64).saturating_add(n as u64),
                available: self.buf.len() as u64,
            });
        }
        if have > n {
            return Err(FormatError::TrailingBytes {
                trailing: (have - n) as u64,
            });
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| Error::InvalidInput(format!("{v} does not fit the u32 header field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

fn invalid(e: Error) -> Error {
    match e {
        Error::Format(f) => Error::Format(f),
        other => Error::Format(FormatError::Malformed(other.to_string())),
    }
}

pub fn encode_object(obj: &StructuredPointCloud) -> Result<Vec<u8>> {
    let d = obj.dim();
    let mut out = Vec::with_capacity(13 + obj.len() * (3 + d) * 4);
    out.extend_from_slice(&OBJECT_MAGIC);
    put_u32(&mut out, obj.len())?;
    put_u32(&mut out, d)?;
    out.push(0);
    for (p, z) in obj.iter() {
        for c in p.iter() {
            put_f32(&mut out, *c);
        }
        for c in z {
            put_f32(&mut out, *c);
        }
    }
    Ok(out)
}

pub fn decode_object(bytes: &[u8]) -> Result<StructuredPointCloud> {
    let mut r = Reader::new(bytes);
    r.magic(OBJECT_MAGIC)?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let normalize = match r.u8()? {
        0 => false,
        1 => true,
        f => return Err(FormatError::InvalidHeader(format!("normalize flag {f}")).into()),
    };
    if n == 0 || d == 0 {
        return Err(FormatError::InvalidHeader(format!("{n} points of dimension {d}")).into());
    }
    let stride = d.checked_add(3).and_then(|s| s.checked_mul(4));
    r.expect_payload(stride.and_then(|s| s.checked_mul(n)))?;
    let mut points = Vec::with_capacity(n);
    let mut desc = Vec::with_capacity(n * d);
    for _ in 0..n {
        let mut p = [0.0; 3];
        for c in &mut p {
            *c = r.finite_f32("point coordinate")? as f64;
        }
        points.push(Point3::from(p));
        for _ in 0..d {
            desc.push(r.finite_f32("point descriptor")? as f64);
        }
    }
    let cloud = if normalize {
        StructuredPointCloud::new_normalized(points, desc, d)
    } else {
        StructuredPointCloud::new(points, desc, d)
    };
    cloud.map_err(invalid)
}

fn put_grid(out: &mut Vec<u8>, g: &GridGeometry) -> Result<()> {
    for n in g.dims() {
        put_u32(out, n)?;
    }
    for c in g.origin().iter() {
        put_f32(out, *c);
    }
    put_f32(out, g.voxel_size());
    Ok(())
}

fn read_grid(r: &mut Reader<'_>) -> Result<GridGeometry> {
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let mut origin = [0.0; 3];
    for c in &mut origin {
        *c = r.finite_f32("grid origin")? as f64;
    }
    let voxel = r.finite_f32("voxel size")? as f64;
    GridGeometry::new(Point3::from(origin), voxel, dims)
        .map_err(|e| FormatError::InvalidHeader(e.to_string()).into())
}

pub fn encode_scene(scene: &SceneField) -> Result<Vec<u8>> {
    let d = scene.dim();
    let n = scene.geometry().cell_count();
    let mut out = Vec::with_capacity(32 + n * (1 + 4 * d));
    out.extend_from_slice(&SCENE_MAGIC);
    put_grid(&mut out, scene.geometry())?;
    put_u32(&mut out, d)?;
    for idx in 0..n {
        out.push(scene.tag(idx) as u8);
        for c in scene.cell_descriptor(idx) {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_scene(bytes: &[u8]) -> Result<SceneField> {
    let mut r = Reader::new(bytes);
    r.magic(SCENE_MAGIC)?;
    let g = read_grid(&mut r)?;
    let d = r.u32()? as usize;
    if d == 0 {
        return Err(FormatError::InvalidHeader("descriptor dimension 0".into()).into());
    }
    let n = g.cell_count();
    let stride = d.checked_mul(4).and_then(|s| s.checked_add(1));
    r.expect_payload(stride.and_then(|s| s.checked_mul(n)))?;
    let mut tags = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    for idx in 0..n {
        let raw = r.u8()?;
        let tag = CellTag::from_u8(raw)
            .ok_or_else(|| FormatError::Malformed(format!("cell {idx} has tag {raw}")))?;
        tags.push(tag);
        for _ in 0..d {
            let v = r.finite_f32("cell descriptor")?;
            if tag != CellTag::Regular && v != 0.0 {
                return Err(FormatError::Malformed(format!(
                    "non-regular cell {idx} carries descriptor data"
                ))
                .into());
            }
            data.push(v);
        }
    }
    SceneField::from_cells(g, d, tags, data).map_err(invalid)
}

pub fn encode_classifier(cls: &ClassifierField) -> Result<Vec<u8>> {
    let n = cls.geometry().cell_count();
    let mut out = Vec::with_capacity(36 + 4 * n);
    out.extend_from_slice(&CLASSIFIER_MAGIC);
    put_grid(&mut out, cls.geometry())?;
    put_f32(&mut out, cls.c_min());
    for v in cls.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_classifier(bytes: &[u8]) -> Result<ClassifierField> {
    let mut r = Reader::new(bytes);
    r.magic(CLASSIFIER_MAGIC)?;
    let g = read_grid(&mut r)?;
    let c_min = r.finite_f32("c_min")?;
    if c_min >= 0.0 {
        return Err(FormatError::NonFiniteValue(format!("c_min {c_min} must be negative")).into());
    }
    let n = g.cell_count();
    r.expect_payload(n.checked_mul(4))?;
    let mut values = Vec::with_capacity(n);
    for idx in 0..n {
        let v = r.finite_f32("classifier value")?;
        if v > 0.0 || v < c_min {
            return Err(FormatError::NonFiniteValue(format!(
                "classifier cell {idx} holds {v}, outside [{c_min}, 0]"
            ))
            .into());
        }
        values.push(v);
    }
    ClassifierField::new(g, values, c_min as f64).map_err(invalid)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FormatError::Io(e).into())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| FormatError::Io(e).into())
}

pub fn load_object(path: impl AsRef<Path>) -> Result<StructuredPointCloud> {
    decode_object(&read(path.as_ref())?)
}

pub fn save_object(obj: &StructuredPointCloud, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &encode_object(obj)?)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneField> {
    decode_scene(&read(path.as_ref())?)
}

pub fn save_scene(scene: &SceneField, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &encode_scene(scene)?)
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<ClassifierField> {
    decode_classifier(&read(path.as_ref())?)
}

pub fn save_classifier(cls: &ClassifierField, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &encode_classifier(cls)?)
}

/// Loads an object, scene and classifier and checks that they fit together.
pub fn load_inputs(
    object: impl AsRef<Path>,
    scene: impl AsRef<Path>,
    classifier: impl AsRef<Path>,
) -> Result<(StructuredPointCloud, SceneField, ClassifierField)> {
    let obj = load_object(object)?;
    let scene = load_scene(scene)?;
    let cls = load_classifier(classifier)?;
    check_compatible(&obj, &scene, &cls)?;
    Ok((obj, scene, cls))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_scene() -> SceneField {
        let g = GridGeometry::new(Point3::new(-1.0, 0.5, 2.0), 0.25, [2, 1, 1]).unwrap();
        SceneField::from_cells(g, 2, vec![CellTag::Regular, CellTag::Empty], vec![0.6, 0.8, 0.0, 0.0])
            .unwrap()
    }

    #[test]
    fn scene_header_layout() {
        let bytes = encode_scene(&tiny_scene()).unwrap();
        assert_eq!(&bytes[..4], &[0x53, 0x56, 0x4C, 0x31]);
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(bytes[28..32].try_into().unwrap()), 0.25);
        assert_eq!(u32::from_le_bytes(bytes[32..36].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 36 + 2 * (1 + 8));
        assert_eq!(bytes[36], 2);
        assert_eq!(decode_scene(&bytes).unwrap(), tiny_scene());
    }

    #[test]
    fn typed_errors() {
        let bytes = encode_scene(&tiny_scene()).unwrap();
        assert!(matches!(
            decode_scene(b"XXXX"),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));
        assert!(matches!(
            decode_scene(&bytes[..bytes.len() - 1]),
            Err(Error::Format(FormatError::TruncatedPayload { .. }))
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            decode_scene(&extra),
            Err(Error::Format(FormatError::TrailingBytes { trailing: 1 }))
        ));
        let mut bad_tag = bytes;
        bad_tag[36] = 7;
        assert!(matches!(decode_scene(&bad_tag), Err(Error::Format(FormatError::Malformed(_)))));
    }

    #[test]
    fn positive_classifier_value_rejected() {
        let g = GridGeometry::new(Point3::origin(), 1.0, [1, 1, 1]).unwrap();
        let cls = ClassifierField::constant(g, 0.0, -10.0).unwrap();
        let mut bytes = encode_classifier(&cls).unwrap();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&0.5f32.to_le_bytes());
        assert!(matches!(
            decode_classifier(&bytes),
            Err(Error::Format(FormatError::NonFiniteValue(_)))
        ));
    }

    #[test]
    fn object_normalize_flag() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&OBJECT_MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.push(1);
        for v in [0.0f32, 0.0, 0.0, 3.0, 4.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let obj = decode_object(&bytes).unwrap();
        assert!((obj.descriptor(0)[0] - 0.6).abs() < 1e-12);
        bytes[12] = 0;
        assert!(decode_object(&bytes).is_err());
    }
}
