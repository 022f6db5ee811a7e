//! Dense voxel realizations of the scene descriptor field and the object
//! classifier.
//!
//! Both grids sample their values at voxel centers and are queried at
//! continuous coordinates by trilinear interpolation over the eight
//! surrounding centers. Descriptor cells carry one of three tags:
//!
//! * `Regular`: an observed surface with a unit descriptor,
//! * `Empty`: observed free space; any interpolation that touches it with
//!   nonzero weight is `Empty`,
//! * `Null`: unobserved; contributes no weight.
//!
//! Grid geometry and stored values are kept at single precision so that the
//! in-memory field is exactly what the on-disk formats hold.

use nalgebra::{Point3, Vector3};

use crate::cloud::{dot, norm, StructuredPointCloud};
use crate::error::{Error, Result};
use crate::ext::ExtReal;

/// Fractional offsets closer than this (in voxel units) to a voxel center
/// snap onto it, making center queries exact.
const CENTER_SNAP: f64 = 1e-9;

/// Default floor for classifier log-probabilities.
pub const DEFAULT_C_MIN: f64 = -1e4;

#[inline]
fn to_f32_exact(v: f64) -> f64 {
    v as f32 as f64
}

/// Axis-aligned voxel grid: `dims[0] × dims[1] × dims[2]` cubes of side
/// `voxel_size` starting at `origin`, indexed x-fastest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridGeometry {
    origin: Point3<f64>,
    voxel_size: f64,
    dims: [usize; 3],
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Stencil {
    pub idx: [Option<usize>; 8],
    pub w: [f64; 8],
}

impl GridGeometry {
    pub fn new(origin: Point3<f64>, voxel_size: f64, dims: [usize; 3]) -> Result<Self> {
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(Error::InvalidInput(format!(
                "voxel size must be positive, got {voxel_size}"
            )));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("grid origin is not finite".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidInput(format!("grid dims must be positive, got {dims:?}")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::InvalidInput("grid is too large".into()))?;
        Ok(Self {
            origin,
            voxel_size,
            dims,
        })
    }

    /// Smallest grid with the given voxel size that covers `lo..=hi` with at
    /// least one voxel of padding on every side. Voxel boundaries fall on
    /// integer multiples of the (single-precision) voxel size.
    pub fn covering(lo: Point3<f64>, hi: Point3<f64>, voxel_size: f64) -> Result<Self> {
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(Error::InvalidInput(format!(
                "voxel size must be positive, got {voxel_size}"
            )));
        }
        let v = to_f32_exact(voxel_size);
        let mut origin = Point3::origin();
        let mut dims = [0usize; 3];
        for a in 0..3 {
            origin[a] = to_f32_exact(((lo[a] / v).floor() - 1.0) * v);
            let top = ((hi[a] - origin[a]) / v).floor();
            if !(0.0..=1e7).contains(&top) {
                return Err(Error::InvalidInput("grid extent is invalid".into()));
            }
            dims[a] = top as usize + 2;
        }
        Self::new(origin, v, dims)
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Upper corner of the grid's bounding box.
    pub fn max_corner(&self) -> Point3<f64> {
        self.origin
            + Vector3::new(
                self.dims[0] as f64,
                self.dims[1] as f64,
                self.dims[2] as f64,
            ) * self.voxel_size
    }

    pub fn flat_index(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn center(&self, [i, j, k]: [usize; 3]) -> Point3<f64> {
        let v = self.voxel_size;
        Point3::new(
            self.origin.x + (i as f64 + 0.5) * v,
            self.origin.y + (j as f64 + 0.5) * v,
            self.origin.z + (k as f64 + 0.5) * v,
        )
    }

    pub fn contains(&self, x: &Point3<f64>) -> bool {
        (0..3).all(|a| {
            let rel = (x[a] - self.origin[a]) / self.voxel_size;
            rel >= 0.0 && rel <= self.dims[a] as f64
        })
    }

    /// Index of the voxel containing `x`, if inside the grid.
    pub fn voxel_of(&self, x: &Point3<f64>) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let rel = ((x[a] - self.origin[a]) / self.voxel_size).floor();
            if !(rel >= 0.0 && rel < self.dims[a] as f64) {
                return None;
            }
            out[a] = rel as usize;
        }
        Some(out)
    }

    /// Trilinear stencil over the eight voxel centers around `x`. Returns
    /// `None` outside the bounding box; corners that fall off the grid have
    /// index `None`.
    pub(crate) fn stencil(&self, x: &Point3<f64>) -> Option<Stencil> {
        let mut base = [0i64; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let rel = (x[a] - self.origin[a]) / self.voxel_size;
            if !(rel >= 0.0 && rel <= self.dims[a] as f64) {
                return None;
            }
            let u = rel - 0.5;
            let mut i0 = u.floor();
            let mut f = u - i0;
            if f < CENTER_SNAP {
                f = 0.0;
            } else if f > 1.0 - CENTER_SNAP {
                f = 0.0;
                i0 += 1.0;
            }
            base[a] = i0 as i64;
            frac[a] = f;
        }
        let mut st = Stencil {
            idx: [None; 8],
            w: [0.0; 8],
        };
        for corner in 0..8 {
            let mut w = 1.0;
            let mut cell = [0usize; 3];
            let mut inside = true;
            for a in 0..3 {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                let i = base[a] + bit as i64;
                if i < 0 || i >= self.dims[a] as i64 {
                    inside = false;
                } else {
                    cell[a] = i as usize;
                }
            }
            st.w[corner] = w;
            st.idx[corner] = inside.then(|| self.flat_index(cell));
        }
        Some(st)
    }
}

/// Tag of a stored scene cell. Discriminants match the on-disk encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CellTag {
    Empty = 0,
    Null = 1,
    Regular = 2,
}

impl CellTag {
    pub fn from_u8(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(CellTag::Empty),
            1 => Some(CellTag::Null),
            2 => Some(CellTag::Regular),
            _ => None,
        }
    }
}

/// Value of the scene field at a point.
#[derive(Clone, Debug, PartialEq)]
pub enum DescriptorValue {
    Regular(Vec<f64>),
    Empty,
    Null,
}

/// Extended inner product: `z·b` for regular descriptors, `0` for
/// unobserved space and `-∞` for observed free space.
pub fn similarity(a: &DescriptorValue, b: &[f64]) -> ExtReal {
    match a {
        DescriptorValue::Regular(z) => ExtReal::Finite(dot(z, b)),
        DescriptorValue::Null => ExtReal::Finite(0.0),
        DescriptorValue::Empty => ExtReal::NegInf,
    }
}

/// Voxelized scene descriptor field.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneField {
    geometry: GridGeometry,
    dim: usize,
    tags: Vec<CellTag>,
    /// `cell_count × dim`, zeros for non-regular cells.
    data: Vec<f32>,
}

impl SceneField {
    /// Wraps raw cells, validating sizes and regular-cell norms.
    pub fn from_cells(
        geometry: GridGeometry,
        dim: usize,
        tags: Vec<CellTag>,
        data: Vec<f32>,
    ) -> Result<Self> {
        let n = geometry.cell_count();
        if dim == 0 {
            return Err(Error::InvalidInput("descriptor dimension must be positive".into()));
        }
        if tags.len() != n || Some(data.len()) != n.checked_mul(dim) {
            return Err(Error::InvalidInput(format!(
                "expected {n} cells of dimension {dim}, got {} tags and {} values",
                tags.len(),
                data.len()
            )));
        }
        for (idx, (tag, z)) in tags.iter().zip(data.chunks_exact(dim)).enumerate() {
            if *tag == CellTag::Regular {
                let nrm = z.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt();
                if !nrm.is_finite() || (nrm - 1.0).abs() > crate::cloud::UNIT_NORM_TOLERANCE {
                    return Err(Error::InvalidInput(format!(
                        "regular cell {idx} has descriptor norm {nrm}"
                    )));
                }
            }
        }
        Ok(Self {
            geometry,
            dim,
            tags,
            data,
        })
    }

    /// A field with every cell set to `tag` (which must not be `Regular`).
    pub fn uniform(geometry: GridGeometry, dim: usize, tag: CellTag) -> Result<Self> {
        if tag == CellTag::Regular {
            return Err(Error::InvalidInput("uniform field cannot be regular".into()));
        }
        let n = geometry.cell_count();
        Self::from_cells(geometry, dim, vec![tag; n], vec![0.0; n * dim])
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tags(&self) -> &[CellTag] {
        &self.tags
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn tag(&self, idx: usize) -> CellTag {
        self.tags[idx]
    }

    pub fn cell_descriptor(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Flat indices of all regular cells in x-fastest order.
    pub fn regular_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.tags
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == CellTag::Regular)
            .map(|(i, _)| i)
    }

    /// Interpolated descriptor at `x`.
    pub fn query_descriptor(&self, x: &Point3<f64>) -> DescriptorValue {
        let mut buf = vec![0.0; self.dim];
        match self.interpolate_into(x, &mut buf) {
            CellTag::Regular => DescriptorValue::Regular(buf),
            CellTag::Empty => DescriptorValue::Empty,
            CellTag::Null => DescriptorValue::Null,
        }
    }

    /// Extended similarity between the field at `x` and the unit vector `b`.
    pub fn similarity_at(&self, x: &Point3<f64>, b: &[f64], scratch: &mut [f64]) -> ExtReal {
        match self.interpolate_into(x, scratch) {
            CellTag::Regular => ExtReal::Finite(dot(scratch, b)),
            CellTag::Null => ExtReal::Finite(0.0),
            CellTag::Empty => ExtReal::NegInf,
        }
    }

    /// Writes the unit descriptor at `x` into `out` when the result is
    /// `Regular`; `out` is clobbered otherwise.
    pub(crate) fn interpolate_into(&self, x: &Point3<f64>, out: &mut [f64]) -> CellTag {
        let Some(st) = self.geometry.stencil(x) else {
            return CellTag::Null;
        };
        // Empty dominates regardless of what else is nearby.
        for c in 0..8 {
            if st.w[c] > 0.0 {
                if let Some(idx) = st.idx[c] {
                    if self.tags[idx] == CellTag::Empty {
                        return CellTag::Empty;
                    }
                }
            }
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut contributors = 0;
        let mut last = 0;
        for c in 0..8 {
            let w = st.w[c];
            if w <= 0.0 {
                continue;
            }
            let Some(idx) = st.idx[c] else { continue };
            if self.tags[idx] != CellTag::Regular {
                continue;
            }
            contributors += 1;
            last = idx;
            for (o, &z) in out.iter_mut().zip(self.cell_descriptor(idx)) {
                *o += w * z as f64;
            }
        }
        match contributors {
            0 => CellTag::Null,
            1 => {
                for (o, &z) in out.iter_mut().zip(self.cell_descriptor(last)) {
                    *o = z as f64;
                }
                CellTag::Regular
            }
            _ => {
                let n = norm(out);
                if n <= f64::MIN_POSITIVE {
                    // Exactly cancelling neighbors carry no direction.
                    return CellTag::Null;
                }
                out.iter_mut().for_each(|o| *o /= n);
                CellTag::Regular
            }
        }
    }
}

/// Voxelizes a structured pointcloud on a grid covering its bounding box plus
/// one voxel of padding.
///
/// Occupied voxels hold the renormalized mean descriptor of their points
/// (a single point's descriptor is stored as is). Point-free voxels are
/// `Empty` where `observed_empty` holds for their index and `Null` otherwise.
pub fn build_scene_field(
    points: &StructuredPointCloud,
    voxel_size: f64,
    observed_empty: impl Fn([usize; 3]) -> bool,
) -> Result<SceneField> {
    let (lo, hi) = bounding_box(points.points())?;
    let geometry = GridGeometry::covering(lo, hi, voxel_size)?;
    build_scene_field_on(points, geometry, observed_empty)
}

/// [`build_scene_field`] on an explicit grid. Every point must lie inside.
pub fn build_scene_field_on(
    points: &StructuredPointCloud,
    geometry: GridGeometry,
    observed_empty: impl Fn([usize; 3]) -> bool,
) -> Result<SceneField> {
    let d = points.dim();
    let n = geometry.cell_count();
    let mut sums = vec![0.0f64; n * d];
    let mut counts = vec![0u32; n];
    let mut single = vec![usize::MAX; n];
    for (i, (p, z)) in points.iter().enumerate() {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index: i });
        }
        let cell = geometry.voxel_of(p).ok_or_else(|| {
            Error::InvalidInput(format!("point {i} lies outside the scene grid"))
        })?;
        let idx = geometry.flat_index(cell);
        counts[idx] += 1;
        single[idx] = i;
        for (s, &c) in sums[idx * d..(idx + 1) * d].iter_mut().zip(z) {
            *s += c;
        }
    }
    let mut tags = Vec::with_capacity(n);
    let mut data = vec![0.0f32; n * d];
    for idx in 0..n {
        let out = &mut data[idx * d..(idx + 1) * d];
        match counts[idx] {
            0 => {
                tags.push(if observed_empty(geometry.unflatten(idx)) {
                    CellTag::Empty
                } else {
                    CellTag::Null
                });
            }
            1 => {
                for (o, &c) in out.iter_mut().zip(points.descriptor(single[idx])) {
                    *o = c as f32;
                }
                tags.push(CellTag::Regular);
            }
            _ => {
                let s = &sums[idx * d..(idx + 1) * d];
                let nrm = norm(s);
                if nrm <= f64::MIN_POSITIVE {
                    tags.push(CellTag::Null);
                    continue;
                }
                for (o, &c) in out.iter_mut().zip(s) {
                    *o = (c / nrm) as f32;
                }
                tags.push(CellTag::Regular);
            }
        }
    }
    SceneField::from_cells(geometry, d, tags, data)
}

pub(crate) fn bounding_box(points: &[Point3<f64>]) -> Result<(Point3<f64>, Point3<f64>)> {
    let first = points.first().ok_or(Error::EmptyInput)?;
    let mut lo = *first;
    let mut hi = *first;
    for (i, p) in points.iter().enumerate() {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index: i });
        }
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    Ok((lo, hi))
}

/// Voxelized object classifier storing `log p_O` floored at `c_min`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierField {
    geometry: GridGeometry,
    values: Vec<f32>,
    c_min: f32,
}

impl ClassifierField {
    pub fn new(geometry: GridGeometry, values: Vec<f32>, c_min: f64) -> Result<Self> {
        if !(c_min.is_finite() && c_min < 0.0) {
            return Err(Error::InvalidInput(format!("c_min must be negative, got {c_min}")));
        }
        let c_min = c_min as f32;
        if values.len() != geometry.cell_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} classifier values, got {}",
                geometry.cell_count(),
                values.len()
            )));
        }
        if let Some(i) = values
            .iter()
            .position(|v| !(v.is_finite() && *v <= 0.0 && *v >= c_min))
        {
            return Err(Error::InvalidInput(format!(
                "classifier value {} at cell {i} is outside [{c_min}, 0]",
                values[i]
            )));
        }
        Ok(Self {
            geometry,
            values,
            c_min,
        })
    }

    /// Every cell set to `value`.
    pub fn constant(geometry: GridGeometry, value: f64, c_min: f64) -> Result<Self> {
        let n = geometry.cell_count();
        Self::new(geometry, vec![value as f32; n], c_min)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn c_min(&self) -> f64 {
        self.c_min as f64
    }

    /// Interpolated log-probability at `x`, clamped to `[c_min, 0]`. Space
    /// outside the grid is at the floor.
    pub fn query(&self, x: &Point3<f64>) -> f64 {
        let c_min = self.c_min as f64;
        let Some(st) = self.geometry.stencil(x) else {
            return c_min;
        };
        let mut acc = 0.0;
        for c in 0..8 {
            let w = st.w[c];
            if w <= 0.0 {
                continue;
            }
            let v = st.idx[c].map_or(c_min, |idx| self.values[idx] as f64);
            acc += w * v;
        }
        acc.clamp(c_min, 0.0)
    }
}

pub fn query_descriptor(field: &SceneField, x: &Point3<f64>) -> DescriptorValue {
    field.query_descriptor(x)
}

pub fn query_classifier(field: &ClassifierField, x: &Point3<f64>) -> f64 {
    field.query(x)
}
