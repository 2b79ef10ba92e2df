//! Procedural two-domain benchmark and its on-disk layout.
//!
//! A dataset directory holds `manifest.tsv` (`path<TAB>label<TAB>domain`)
//! and one binary file per sample: `"PCD1"`, `u32 LE` point count `N`, then
//! `N×3` interleaved `f32 LE` coordinates.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pointcloud::augment::scale_axes;
use crate::pointcloud::{jitter, random_point_removal, PointCloud};
use crate::rng::{Purpose, Rng};

pub const MANIFEST: &str = "manifest.tsv";
const MANIFEST_HEADER: &str = "path\tlabel\tdomain";
const CLOUD_MAGIC: &[u8; 4] = b"PCD1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Source = 0,
    Target = 1,
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(Error::Validation(format!("unknown domain {other:?}"))),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "source",
            Domain::Target => "target",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Sphere,
    Box,
    Cylinder,
    Cone,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Cylinder, ShapeKind::Cone];

    /// Class `id` in `0..K`.
    pub fn from_class(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::Validation(format!("no shape class {id}; at most {} classes", Self::ALL.len())))
    }
}

/// Primitive dimensions before normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeParams {
    Sphere { radius: f64 },
    /// Half-extents along x, y, z.
    Box { half: [f64; 3] },
    Cylinder { radius: f64, half_height: f64 },
    Cone { radius: f64, height: f64 },
}

impl ShapeParams {
    /// Draws dimensions for `kind` from its class range.
    pub fn sample(kind: ShapeKind, rng: &mut Rng) -> Self {
        match kind {
            ShapeKind::Sphere => ShapeParams::Sphere {
                radius: rng.uniform_in(0.5, 1.5),
            },
            ShapeKind::Box => ShapeParams::Box {
                half: [rng.uniform_in(0.3, 1.0), rng.uniform_in(0.3, 1.0), rng.uniform_in(0.3, 1.0)],
            },
            ShapeKind::Cylinder => ShapeParams::Cylinder {
                radius: rng.uniform_in(0.3, 0.8),
                half_height: rng.uniform_in(0.3, 1.0),
            },
            ShapeKind::Cone => ShapeParams::Cone {
                radius: rng.uniform_in(0.3, 0.9),
                height: rng.uniform_in(0.6, 2.0),
            },
        }
    }
}

fn disk(rng: &mut Rng, r: f64) -> (f64, f64) {
    let rho = r * rng.uniform().sqrt();
    let phi = 2.0 * PI * rng.uniform();
    (rho * phi.cos(), rho * phi.sin())
}

/// `n` points uniformly distributed over the primitive's surface, in its
/// own frame (z up, centered on the bounding box).
pub fn sample_surface(params: &ShapeParams, n: usize, rng: &mut Rng) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| match *params {
            ShapeParams::Sphere { radius } => {
                let v = [rng.normal(), rng.normal(), rng.normal()];
                let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(f64::MIN_POSITIVE);
                [radius * v[0] / norm, radius * v[1] / norm, radius * v[2] / norm]
            }
            ShapeParams::Box { half } => {
                // face pairs weighted by area
                let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
                let total: f64 = areas.iter().sum();
                let mut u = rng.uniform() * total;
                let mut axis = 2;
                for (a, area) in areas.iter().enumerate() {
                    if u < *area {
                        axis = a;
                        break;
                    }
                    u -= area;
                }
                let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                let mut p = [0.0; 3];
                for (a, c) in p.iter_mut().enumerate() {
                    *c = if a == axis {
                        sign * half[a]
                    } else {
                        rng.uniform_in(-half[a], half[a])
                    };
                }
                p
            }
            ShapeParams::Cylinder { radius, half_height } => {
                let side = 2.0 * PI * radius * 2.0 * half_height;
                let caps = 2.0 * PI * radius * radius;
                if rng.uniform() * (side + caps) < side {
                    let phi = 2.0 * PI * rng.uniform();
                    [radius * phi.cos(), radius * phi.sin(), rng.uniform_in(-half_height, half_height)]
                } else {
                    let (x, y) = disk(rng, radius);
                    let z = if rng.uniform() < 0.5 { -half_height } else { half_height };
                    [x, y, z]
                }
            }
            ShapeParams::Cone { radius, height } => {
                let slant = (radius * radius + height * height).sqrt();
                let side = PI * radius * slant;
                let base = PI * radius * radius;
                if rng.uniform() * (side + base) < side {
                    // fraction of the way from apex to rim; density ∝ t
                    let t = rng.uniform().sqrt();
                    let phi = 2.0 * PI * rng.uniform();
                    [t * radius * phi.cos(), t * radius * phi.sin(), height / 2.0 - t * height]
                } else {
                    let (x, y) = disk(rng, radius);
                    [x, y, -height / 2.0]
                }
            }
        })
        .collect()
}

/// One normalized shape of class `kind` with `n` points, randomly sized and
/// rotated about the vertical axis.
pub fn generate_shape(kind: ShapeKind, n: usize, rng: &mut Rng) -> Result<PointCloud> {
    if n < 8 {
        return Err(Error::Validation(format!("need at least 8 points per shape, got {n}")));
    }
    let params = ShapeParams::sample(kind, rng);
    let yaw = 2.0 * PI * rng.uniform();
    let (s, c) = yaw.sin_cos();
    let pts = sample_surface(&params, n, rng)
        .into_iter()
        .map(|p| [(c * p[0] - s * p[1]) as f32, (s * p[0] + c * p[1]) as f32, p[2] as f32])
        .collect();
    Ok(PointCloud::new(pts)?.normalized())
}

/// Acquisition nuisances of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub role: Domain,
    pub noise_sigma: f64,
    pub occlusion_frac: f64,
    pub scale_bias: [f64; 3],
}

impl DomainSpec {
    pub fn source() -> Self {
        DomainSpec {
            role: Domain::Source,
            noise_sigma: 0.0,
            occlusion_frac: 0.0,
            scale_bias: [1.0; 3],
        }
    }

    /// Noisy, occluded and squashed: the synthetic-to-real shift.
    pub fn target() -> Self {
        DomainSpec {
            role: Domain::Target,
            noise_sigma: 0.02,
            occlusion_frac: 0.3,
            scale_bias: [1.3, 1.0, 0.45],
        }
    }

    pub fn for_role(role: Domain) -> Self {
        match role {
            Domain::Source => Self::source(),
            Domain::Target => Self::target(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && (0.0..1.0).contains(&self.occlusion_frac)) {
            return Err(Error::Config("domain noise must be >= 0 and occlusion in [0, 1)".into()));
        }
        if self.scale_bias.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("domain scale bias must be positive".into()));
        }
        Ok(())
    }
}

/// Applies the domain's noise, occlusion and per-axis scale bias.
pub fn apply_domain(pc: &PointCloud, spec: &DomainSpec, rng: &mut Rng) -> PointCloud {
    let x = jitter(pc, spec.noise_sigma, 5.0 * spec.noise_sigma, rng);
    let x = random_point_removal(&x, spec.occlusion_frac, rng);
    if spec.scale_bias == [1.0; 3] {
        x
    } else {
        scale_axes(&x, spec.scale_bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub cloud: PointCloud,
    pub label: usize,
    pub domain: Domain,
}

#[derive(Debug, Clone)]
pub struct DomainData {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub num_classes: usize,
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub points: usize,
    pub seed: u64,
    pub domain: DomainSpec,
}

impl GenerateConfig {
    /// Benchmark defaults: K = 4, 100 + 25 samples per class, N = 256.
    pub fn benchmark(role: Domain, seed: u64) -> Self {
        GenerateConfig {
            num_classes: 4,
            per_class_train: 100,
            per_class_test: 25,
            points: 256,
            seed,
            domain: DomainSpec::for_role(role),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > ShapeKind::ALL.len() {
            return Err(Error::Validation(format!(
                "class count must be in 2..={}, got {}",
                ShapeKind::ALL.len(),
                self.num_classes
            )));
        }
        if self.per_class_train == 0 {
            return Err(Error::Validation("per-class sample count must be positive".into()));
        }
        if self.points < 8 {
            return Err(Error::Validation(format!("need at least 8 points, got {}", self.points)));
        }
        self.domain.validate()
    }
}

fn generate_split(cfg: &GenerateConfig, split: u64, per_class: usize) -> Result<Vec<Sample>> {
    let root = Rng::new(cfg.seed);
    let mut out = Vec::with_capacity(per_class * cfg.num_classes);
    // class-interleaved order: sample i has label i % K
    for i in 0..per_class {
        for class in 0..cfg.num_classes {
            let tags = [cfg.domain.role as u64, split, class as u64, i as u64];
            let clean = generate_shape(ShapeKind::from_class(class)?, cfg.points, &mut root.fork(Purpose::Generate, &tags))?;
            let cloud = apply_domain(&clean, &cfg.domain, &mut root.fork(Purpose::Domain, &tags));
            out.push(Sample {
                cloud,
                label: class,
                domain: cfg.domain.role,
            });
        }
    }
    Ok(out)
}

/// Deterministic function of `(cfg.seed, cfg)`.
pub fn generate_domain(cfg: &GenerateConfig) -> Result<DomainData> {
    cfg.validate()?;
    Ok(DomainData {
        train: generate_split(cfg, 0, cfg.per_class_train)?,
        test: generate_split(cfg, 1, cfg.per_class_test)?,
    })
}

pub fn encode_cloud(pc: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + pc.len() * 12);
    out.extend_from_slice(CLOUD_MAGIC);
    out.extend_from_slice(&(pc.len() as u32).to_le_bytes());
    for c in pc.points().iter().flatten() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

pub fn decode_cloud(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < 4 {
        return Err(Error::format(0, "truncated magic"));
    }
    if &bytes[..4] != CLOUD_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"PCD1\""));
    }
    if bytes.len() < 8 {
        return Err(Error::format(4, "truncated point count"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = n
        .checked_mul(12)
        .and_then(|b| b.checked_add(8))
        .ok_or_else(|| Error::format(4, "point count overflows"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            bytes.len().min(expected),
            format!("payload length {} does not match {n} points", bytes.len() - 8),
        ));
    }
    if n == 0 {
        return Err(Error::format(4, "point count is zero"));
    }
    let mut pts = Vec::with_capacity(n);
    for (i, chunk) in bytes[8..].chunks_exact(12).enumerate() {
        let mut p = [0.0f32; 3];
        for (a, c) in p.iter_mut().enumerate() {
            *c = f32::from_le_bytes(chunk[a * 4..a * 4 + 4].try_into().unwrap());
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::format(8 + i * 12, "non-finite coordinate"));
        }
        pts.push(p);
    }
    Ok(PointCloud::from_unchecked(pts))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: usize,
    pub domain: Domain,
}

/// Parses manifest text; labels must be below `num_classes`.
pub fn parse_manifest(text: &str, num_classes: usize) -> Result<Vec<ManifestEntry>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == MANIFEST_HEADER => {}
        _ => return Err(Error::format(0, format!("manifest header must be {MANIFEST_HEADER:?}"))),
    }
    let mut offset = MANIFEST_HEADER.len() + 1;
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line_start = offset;
        offset += line.len() + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::format(line_start, format!("line {}: expected 3 tab-separated fields", lineno + 2)));
        }
        let path = fields[0];
        if path.is_empty() || path.contains("..") || path.starts_with('/') {
            return Err(Error::Validation(format!("line {}: unsafe sample path {path:?}", lineno + 2)));
        }
        let label: usize = fields[1]
            .parse()
            .map_err(|_| Error::format(line_start, format!("line {}: bad label {:?}", lineno + 2, fields[1])))?;
        if label >= num_classes {
            return Err(Error::Validation(format!(
                "line {}: label {label} not below class count {num_classes}",
                lineno + 2
            )));
        }
        out.push(ManifestEntry {
            path: path.to_string(),
            label,
            domain: fields[2].parse()?,
        });
    }
    Ok(out)
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::from(MANIFEST_HEADER);
    s.push('\n');
    for e in entries {
        s.push_str(&format!("{}\t{}\t{}\n", e.path, e.label, e.domain));
    }
    s
}

/// Writes `manifest.tsv` plus `00000.pcd`, `00001.pcd`, ... into `dir`.
pub fn write_dataset(dir: &Path, samples: &[Sample]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{i:05}.pcd");
        let path = dir.join(&name);
        std::fs::write(&path, encode_cloud(&s.cloud)).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            path: name,
            label: s.label,
            domain: s.domain,
        });
    }
    let path = dir.join(MANIFEST);
    std::fs::write(&path, format_manifest(&entries)).map_err(|e| Error::io(&path, e))
}

pub fn read_dataset(dir: &Path, num_classes: usize) -> Result<Vec<Sample>> {
    let mpath = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let entries = parse_manifest(&text, num_classes)?;
    let mut out = Vec::with_capacity(entries.len());
    let mut n_points = None;
    for e in entries {
        let path = dir.join(&e.path);
        let bytes = std::fs::read(&path).map_err(|err| Error::io(&path, err))?;
        let cloud = decode_cloud(&bytes).map_err(|err| match err {
            Error::Format { offset, msg } => Error::Format {
                offset,
                msg: format!("{}: {msg}", path.display()),
            },
            other => other,
        })?;
        if *n_points.get_or_insert(cloud.len()) != cloud.len() {
            return Err(Error::Validation(format!(
                "{}: {} points, expected {} like the rest of the dataset",
                path.display(),
                cloud.len(),
                n_points.unwrap()
            )));
        }
        out.push(Sample {
            cloud,
            label: e.label,
            domain: e.domain,
        });
    }
    Ok(out)
}
