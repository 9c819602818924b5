//! Two-class point sets laid out along rays from the origin.
//!
//! `Dir2` gives every ray a single class, so labels depend on direction
//! only. `Dir1` alternates classes along the radii of every ray, which no
//! positively homogeneous classifier can reproduce.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Normalization};
use crate::error::{config_err, Result};
use crate::numerics::Tensor;

pub const MIN_RADIUS: f64 = 0.2;
pub const MAX_RADIUS: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RayVariant {
    Dir1,
    Dir2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub direction: [f64; 2],
    pub radii: Vec<f64>,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RayDataset2D {
    pub variant: RayVariant,
    pub rays: Vec<Ray>,
    /// `[N, 2]`, rays in order, radii increasing within each ray
    pub points: Tensor,
    pub labels: Vec<usize>,
}

/// Builds a ray dataset. Directions are evenly spaced with a random jitter of
/// at most a quarter of the spacing; radii are evenly spaced over `[0.2, 2]`.
pub fn make_ray_dataset(variant: RayVariant, rays: usize, per_ray: usize, rng: &mut impl Rng) -> Result<RayDataset2D> {
    if rays < 2 || per_ray < 2 {
        return Err(config_err!("ray dataset needs at least 2 rays and 2 points per ray, got {rays} x {per_ray}"));
    }
    let spacing = 2.0 * PI / rays as f64;
    let radii: Vec<f64> =
        (0..per_ray).map(|j| MIN_RADIUS + (MAX_RADIUS - MIN_RADIUS) * j as f64 / (per_ray - 1) as f64).collect();
    let mut out_rays = Vec::with_capacity(rays);
    let mut points = Vec::with_capacity(rays * per_ray * 2);
    let mut labels = Vec::with_capacity(rays * per_ray);
    for k in 0..rays {
        let angle = k as f64 * spacing + rng.gen_range(-0.25..0.25) * spacing;
        let direction = [angle.cos(), angle.sin()];
        let ray_labels: Vec<usize> = match variant {
            RayVariant::Dir2 => vec![k % 2; per_ray],
            RayVariant::Dir1 => (0..per_ray).map(|j| j % 2).collect(),
        };
        for (&r, &label) in radii.iter().zip(&ray_labels) {
            points.push(r * direction[0]);
            points.push(r * direction[1]);
            labels.push(label);
        }
        out_rays.push(Ray { direction, radii: radii.clone(), labels: ray_labels });
    }
    let ds = RayDataset2D { variant, rays: out_rays, points: Tensor::new(vec![rays * per_ray, 2], points)?, labels };
    ds.check()?;
    Ok(ds)
}

impl RayDataset2D {
    /// Checks the variant's labelling invariant.
    pub fn check(&self) -> Result<()> {
        let ok = match self.variant {
            RayVariant::Dir2 => self.rays.iter().all(|r| r.labels.windows(2).all(|w| w[0] == w[1])),
            RayVariant::Dir1 => self.rays.iter().any(|r| r.labels.iter().any(|&l| l != r.labels[0])),
        };
        if ok {
            Ok(())
        } else {
            Err(config_err!("{:?} labelling invariant violated", self.variant))
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_labeled(&self) -> LabeledDataset {
        LabeledDataset::new(self.points.clone(), self.labels.clone(), 2, Normalization::IDENTITY)
            .expect("ray labels are binary")
    }

    /// `x,y,label` lines with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,label\n");
        for (i, label) in self.labels.iter().enumerate() {
            let p = self.points.row(i);
            let _ = writeln!(out, "{},{},{}", p[0], p[1], label);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dir1_rays_carry_both_classes() {
        let ds = make_ray_dataset(RayVariant::Dir1, 5, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for ray in &ds.rays {
            assert!(ray.labels.contains(&0) && ray.labels.contains(&1));
        }
        assert_eq!(ds.len(), 20);
    }

    #[test]
    fn dir2_two_rays_are_separable_through_origin() {
        let ds = make_ray_dataset(RayVariant::Dir2, 2, 3, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let (a, b) = (ds.rays[0].direction, ds.rays[1].direction);
        // Normal of the bisector separating the two directions.
        let n = [a[0] - b[0], a[1] - b[1]];
        for (i, &label) in ds.labels.iter().enumerate() {
            let p = ds.points.row(i);
            let side = n[0] * p[0] + n[1] * p[1];
            assert!(if label == ds.rays[0].labels[0] { side > 0.0 } else { side < 0.0 });
        }
    }

    #[test]
    fn radii_span_the_configured_band() {
        let ds = make_ray_dataset(RayVariant::Dir2, 3, 5, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for ray in &ds.rays {
            assert_eq!(ray.radii.first(), Some(&MIN_RADIUS));
            assert_eq!(ray.radii.last(), Some(&MAX_RADIUS));
            assert!((ray.direction[0].hypot(ray.direction[1]) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn too_few_rays_or_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(make_ray_dataset(RayVariant::Dir1, 1, 4, &mut rng).is_err());
        assert!(make_ray_dataset(RayVariant::Dir2, 3, 1, &mut rng).is_err());
    }

    #[test]
    fn csv_layout() {
        let ds = make_ray_dataset(RayVariant::Dir1, 2, 2, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let csv = ds.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(1).unwrap().ends_with(",0"));
    }
}
