//! Point clouds and the weak/strong augmentation operators.

pub(crate) mod augment;

pub use augment::{
    anisotropic_scale, elastic_deform, f_strong, f_weak, jitter, random_point_removal, AugmentConfig,
};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// `N` points in 3D with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f32; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Validation("point cloud has no points".into()));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::Validation(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud { points })
    }

    pub(crate) fn from_unchecked(points: Vec<[f32; 3]>) -> Self {
        debug_assert!(!points.is_empty());
        PointCloud { points }
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().flatten().all(|c| c.is_finite())
    }

    /// Flattens to an `N×3` tensor.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.points.iter().flatten().map(|c| T::lit(f64::from(*c))).collect();
        Tensor::new(&[self.points.len(), 3], data).expect("N×3 layout")
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> ([f32; 3], [f32; 3]) {
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    /// Translates the centroid to the origin and scales the farthest point
    /// onto the unit sphere. A cloud of coincident points is only centered.
    pub fn normalized(&self) -> PointCloud {
        let n = self.points.len() as f64;
        let mut c = [0.0f64; 3];
        for p in &self.points {
            for a in 0..3 {
                c[a] += f64::from(p[a]);
            }
        }
        c.iter_mut().for_each(|v| *v /= n);
        let centered: Vec<[f64; 3]> = self
            .points
            .iter()
            .map(|p| [f64::from(p[0]) - c[0], f64::from(p[1]) - c[1], f64::from(p[2]) - c[2]])
            .collect();
        let r = centered
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .fold(0.0, f64::max);
        let s = if r > 0.0 { 1.0 / r } else { 1.0 };
        PointCloud::from_unchecked(
            centered
                .iter()
                .map(|p| [(p[0] * s) as f32, (p[1] * s) as f32, (p[2] * s) as f32])
                .collect(),
        )
    }
}
