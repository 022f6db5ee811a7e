use nalgebra::Point3;

use crate::error::{Error, Result};

/// Descriptor norms must be within this of one.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Points with unit-norm feature descriptors attached.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredPointCloud {
    points: Vec<Point3<f64>>,
    /// Row-major `N × d`.
    descriptors: Vec<f64>,
    dim: usize,
}

impl StructuredPointCloud {
    /// Validates and wraps points and row-major descriptors.
    pub fn new(points: Vec<Point3<f64>>, descriptors: Vec<f64>, dim: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if dim == 0 || descriptors.len() != points.len() * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} descriptor values for {} points of dimension {dim}, got {}",
                points.len() * dim,
                points.len(),
                descriptors.len()
            )));
        }
        if let Some(index) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFiniteCoordinate { index });
        }
        for (i, z) in descriptors.chunks_exact(dim).enumerate() {
            let norm = norm(z);
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "descriptor {i} has norm {norm}, expected unit length"
                )));
            }
        }
        Ok(Self {
            points,
            descriptors,
            dim,
        })
    }

    /// Like [`new`](Self::new) but normalizes every descriptor first.
    pub fn new_normalized(
        points: Vec<Point3<f64>>,
        mut descriptors: Vec<f64>,
        dim: usize,
    ) -> Result<Self> {
        if dim > 0 {
            for (i, z) in descriptors.chunks_exact_mut(dim).enumerate() {
                let n = norm(z);
                if !(n.is_finite() && n > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "descriptor {i} cannot be normalized"
                    )));
                }
                z.iter_mut().for_each(|c| *c /= n);
            }
        }
        Self::new(points, descriptors, dim)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn descriptors(&self) -> &[f64] {
        &self.descriptors
    }

    pub fn descriptor(&self, i: usize) -> &[f64] {
        &self.descriptors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point3<f64>, &[f64])> {
        self.points.iter().zip(self.descriptors.chunks_exact(self.dim))
    }

    /// Concatenation of two clouds with the same descriptor dimension.
    pub fn concat(&self, other: &StructuredPointCloud) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::InvalidInput("descriptor dimensions differ".into()));
        }
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let mut descriptors = self.descriptors.clone();
        descriptors.extend_from_slice(&other.descriptors);
        Ok(Self {
            points,
            descriptors,
            dim: self.dim,
        })
    }

    /// Subset of the points selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let descriptors = indices
            .iter()
            .flat_map(|&i| self.descriptor(i).iter().copied())
            .collect();
        Self::new(points, descriptors, self.dim)
    }
}

pub(crate) fn norm(z: &[f64]) -> f64 {
    z.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
