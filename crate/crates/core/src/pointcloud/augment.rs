use super::PointCloud;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub jitter_sigma: f64,
    pub jitter_clip: f64,
    pub scale_low: f64,
    pub scale_high: f64,
    pub elastic_grid: usize,
    pub elastic_mag: f64,
    pub removal_frac_low: f64,
    pub removal_frac_high: f64,
    /// Adds occlusion-style point removal to the strong augmentation.
    pub enable_removal: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            jitter_sigma: 0.01,
            jitter_clip: 0.05,
            scale_low: 0.8,
            scale_high: 1.2,
            elastic_grid: 3,
            elastic_mag: 0.05,
            removal_frac_low: 0.1,
            removal_frac_high: 0.4,
            enable_removal: true,
        }
    }
}

impl AugmentConfig {
    /// No-op configuration: every operator becomes the identity.
    pub fn identity() -> Self {
        AugmentConfig {
            jitter_sigma: 0.0,
            jitter_clip: 0.0,
            scale_low: 1.0,
            scale_high: 1.0,
            elastic_grid: 2,
            elastic_mag: 0.0,
            removal_frac_low: 0.0,
            removal_frac_high: 0.0,
            enable_removal: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.jitter_sigma >= 0.0 && self.jitter_clip >= 0.0 && self.elastic_mag >= 0.0) {
            return bad("augmentation magnitudes must be non-negative");
        }
        if !(self.scale_low > 0.0 && self.scale_low <= self.scale_high) {
            return bad("scale range must satisfy 0 < scale_low <= scale_high");
        }
        if self.elastic_grid < 2 {
            return bad("elastic_grid must be at least 2");
        }
        if !(0.0 <= self.removal_frac_low
            && self.removal_frac_low <= self.removal_frac_high
            && self.removal_frac_high < 1.0)
        {
            return bad("removal fractions must satisfy 0 <= low <= high < 1");
        }
        Ok(())
    }
}

/// Adds `clamp(N(0, sigma²), -clip, clip)` to every coordinate.
pub fn jitter(pc: &PointCloud, sigma: f64, clip: f64, rng: &mut Rng) -> PointCloud {
    if sigma == 0.0 {
        return pc.clone();
    }
    let points = pc
        .points()
        .iter()
        .map(|p| {
            let mut q = *p;
            for c in &mut q {
                let d = (sigma * rng.normal()).clamp(-clip, clip);
                *c = (f64::from(*c) + d) as f32;
            }
            q
        })
        .collect();
    PointCloud::from_unchecked(points)
}

/// Multiplies each axis by its own factor drawn from `U[low, high]`.
pub fn anisotropic_scale(pc: &PointCloud, rng: &mut Rng, low: f64, high: f64) -> PointCloud {
    let f = [
        rng.uniform_in(low, high),
        rng.uniform_in(low, high),
        rng.uniform_in(low, high),
    ];
    scale_axes(pc, f)
}

pub(crate) fn scale_axes(pc: &PointCloud, f: [f64; 3]) -> PointCloud {
    let points = pc
        .points()
        .iter()
        .map(|p| {
            [
                (f64::from(p[0]) * f[0]) as f32,
                (f64::from(p[1]) * f[1]) as f32,
                (f64::from(p[2]) * f[2]) as f32,
            ]
        })
        .collect();
    PointCloud::from_unchecked(points)
}

/// Smooth random warp: a `grid³` lattice of Gaussian displacement vectors
/// spans the bounding box and each point moves by the trilinear
/// interpolation of its cell's eight corners.
pub fn elastic_deform(pc: &PointCloud, grid: usize, magnitude: f64, rng: &mut Rng) -> PointCloud {
    let grid = grid.max(2);
    if magnitude == 0.0 {
        return pc.clone();
    }
    let (lo, hi) = pc.bounds();
    if (0..3).all(|a| hi[a] <= lo[a]) {
        return pc.clone();
    }
    let lattice: Vec<[f64; 3]> = (0..grid * grid * grid)
        .map(|_| {
            [
                magnitude * rng.normal(),
                magnitude * rng.normal(),
                magnitude * rng.normal(),
            ]
        })
        .collect();
    let points = pc
        .points()
        .iter()
        .map(|p| {
            let d = lattice_displacement(&lattice, grid, lo, hi, *p);
            [
                (f64::from(p[0]) + d[0]) as f32,
                (f64::from(p[1]) + d[1]) as f32,
                (f64::from(p[2]) + d[2]) as f32,
            ]
        })
        .collect();
    PointCloud::from_unchecked(points)
}

/// Lattice index `(i, j, k)` → flat index, x-major.
fn lattice_index(grid: usize, i: usize, j: usize, k: usize) -> usize {
    (i * grid + j) * grid + k
}

fn lattice_displacement(lattice: &[[f64; 3]], grid: usize, lo: [f32; 3], hi: [f32; 3], p: [f32; 3]) -> [f64; 3] {
    let mut cell = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let extent = f64::from(hi[a]) - f64::from(lo[a]);
        let t = if extent > 0.0 {
            (f64::from(p[a]) - f64::from(lo[a])) / extent * (grid - 1) as f64
        } else {
            0.0
        };
        let c = (t.floor().max(0.0) as usize).min(grid - 2);
        cell[a] = c;
        frac[a] = (t - c as f64).clamp(0.0, 1.0);
    }
    let mut out = [0.0f64; 3];
    for corner in 0..8 {
        let (dx, dy, dz) = (corner >> 2 & 1, corner >> 1 & 1, corner & 1);
        let w = [dx, dy, dz]
            .iter()
            .zip(frac)
            .map(|(d, f)| if *d == 1 { f } else { 1.0 - f })
            .product::<f64>();
        if w == 0.0 {
            continue;
        }
        let v = lattice[lattice_index(grid, cell[0] + dx, cell[1] + dy, cell[2] + dz)];
        for a in 0..3 {
            out[a] += w * v[a];
        }
    }
    out
}

/// Deletes the `⌊frac·N⌋` points nearest a random anchor (anchor included)
/// and refills to `N` by duplicating uniformly drawn survivors.
pub fn random_point_removal(pc: &PointCloud, frac: f64, rng: &mut Rng) -> PointCloud {
    let n = pc.len();
    let k = ((frac.clamp(0.0, 1.0) * n as f64).floor() as usize).min(n - 1);
    if k == 0 {
        return pc.clone();
    }
    let anchor = pc.points()[rng.below(n)];
    let dist = |p: &[f32; 3]| {
        (0..3)
            .map(|a| {
                let d = f64::from(p[a]) - f64::from(anchor[a]);
                d * d
            })
            .sum::<f64>()
    };
    let mut order: Vec<(f64, usize)> = pc.points().iter().enumerate().map(|(i, p)| (dist(p), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut removed = vec![false; n];
    for &(_, i) in &order[..k] {
        removed[i] = true;
    }
    let mut points: Vec<[f32; 3]> = pc
        .points()
        .iter()
        .zip(&removed)
        .filter(|(_, r)| !**r)
        .map(|(p, _)| *p)
        .collect();
    let survivors = points.len();
    for _ in 0..k {
        let p = points[rng.below(survivors)];
        points.push(p);
    }
    PointCloud::from_unchecked(points)
}

/// Weak augmentation `f'`: jitter only.
pub fn f_weak(pc: &PointCloud, cfg: &AugmentConfig, rng: &mut Rng) -> PointCloud {
    jitter(pc, cfg.jitter_sigma, cfg.jitter_clip, rng)
}

/// Strong augmentation `f''`: jitter, elastic warp, per-axis scaling, then
/// point removal when enabled.
pub fn f_strong(pc: &PointCloud, cfg: &AugmentConfig, rng: &mut Rng) -> PointCloud {
    let x = jitter(pc, cfg.jitter_sigma, cfg.jitter_clip, rng);
    let x = elastic_deform(&x, cfg.elastic_grid, cfg.elastic_mag, rng);
    let x = anisotropic_scale(&x, rng, cfg.scale_low, cfg.scale_high);
    if cfg.enable_removal {
        let frac = rng.uniform_in(cfg.removal_frac_low, cfg.removal_frac_high);
        random_point_removal(&x, frac, rng)
    } else {
        x
    }
}
