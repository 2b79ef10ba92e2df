//! PointNet-style encoder (shared per-point MLP + max pool), the classifier
//! head, and the student/EMA-teacher pair.

use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;
use crate::rng::Rng;
use crate::tensor::{argmax, Graph, ParameterStore, Scalar, Tensor, Var};

pub const ENCODER_PREFIX: &str = "encoder.";
pub const HEAD_PREFIX: &str = "head.";
pub const STUDENT_PREFIX: &str = "student/";
pub const TEACHER_PREFIX: &str = "teacher/";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Per-point MLP widths, starting at 3 and ending at the descriptor width D.
    pub point_mlp_widths: Vec<usize>,
    /// Head widths, starting at D and ending at the class count K.
    pub head_widths: Vec<usize>,
}

impl EncoderConfig {
    pub fn new(descriptor_dim: usize, num_classes: usize) -> Self {
        EncoderConfig {
            point_mlp_widths: vec![3, 64, 128, descriptor_dim],
            head_widths: vec![descriptor_dim, 64, num_classes],
        }
    }

    pub fn descriptor_dim(&self) -> usize {
        *self.point_mlp_widths.last().unwrap_or(&0)
    }

    pub fn num_classes(&self) -> usize {
        *self.head_widths.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.point_mlp_widths;
        let h = &self.head_widths;
        if p.len() < 2 || p[0] != 3 {
            return Err(Error::Config(format!("point MLP widths must start at 3: {p:?}")));
        }
        if h.len() < 2 || h[0] != self.descriptor_dim() {
            return Err(Error::Config(format!(
                "head widths {h:?} must start at descriptor width {}",
                self.descriptor_dim()
            )));
        }
        if p.iter().chain(h).any(|w| *w == 0) || self.num_classes() < 2 {
            return Err(Error::Config("layer widths must be positive and K >= 2".into()));
        }
        Ok(())
    }

    /// Recovers the architecture from a parameter store's weight shapes.
    pub fn from_params<T: Scalar>(store: &ParameterStore<T>) -> Result<Self> {
        let widths = |prefix: &str| -> Result<Vec<usize>> {
            let n = layer_count(store, prefix);
            if n == 0 {
                return Err(Error::Validation(format!("no {prefix}* layers in parameters")));
            }
            let mut w = vec![store.get(&weight_name(prefix, 0))?.rows()];
            for i in 0..n {
                w.push(store.get(&weight_name(prefix, i))?.cols());
            }
            Ok(w)
        };
        let cfg = EncoderConfig {
            point_mlp_widths: widths(ENCODER_PREFIX)?,
            head_widths: widths(HEAD_PREFIX)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn weight_name(prefix: &str, i: usize) -> String {
    format!("{prefix}l{i}.weight")
}

fn bias_name(prefix: &str, i: usize) -> String {
    format!("{prefix}l{i}.bias")
}

fn layer_count<T: Scalar>(store: &ParameterStore<T>, prefix: &str) -> usize {
    (0..).take_while(|i| store.contains(&weight_name(prefix, *i))).count()
}

/// Uniform in ±√(6/(fan_in+fan_out)), the Glorot range.
pub fn glorot<T: Scalar>(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::lit(rng.uniform_in(-bound, bound)))
        .collect();
    Tensor::new(&[fan_in, fan_out], data).expect("fan_in×fan_out")
}

fn init_mlp<T: Scalar>(store: &mut ParameterStore<T>, prefix: &str, widths: &[usize], rng: &mut Rng) -> Result<()> {
    for (i, w) in widths.windows(2).enumerate() {
        store.insert(weight_name(prefix, i), glorot(w[0], w[1], rng))?;
        store.insert(bias_name(prefix, i), Tensor::zeros(&[w[1]]))?;
    }
    Ok(())
}

/// Fresh student parameters (encoder and head).
pub fn init_student<T: Scalar>(cfg: &EncoderConfig, rng: &mut Rng) -> Result<ParameterStore<T>> {
    cfg.validate()?;
    let mut store = ParameterStore::new();
    init_mlp(&mut store, ENCODER_PREFIX, &cfg.point_mlp_widths, rng)?;
    init_mlp(&mut store, HEAD_PREFIX, &cfg.head_widths, rng)?;
    Ok(store)
}

/// Whether parameters enter the graph as trainable leaves or constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    Trainable,
    Frozen,
}

fn bind<T: Scalar>(g: &mut Graph<T>, store: &ParameterStore<T>, name: &str, binding: Binding) -> Result<Var> {
    match binding {
        Binding::Trainable => g.param_from(store, name),
        Binding::Frozen => Ok(g.constant(store.get(name)?.clone())),
    }
}

/// Dense layers with ReLU between them (not after the last).
fn mlp<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    mut x: Var,
    binding: Binding,
) -> Result<Var> {
    let n = layer_count(store, prefix);
    for i in 0..n {
        let w = bind(g, store, &weight_name(prefix, i), binding)?;
        let b = bind(g, store, &bias_name(prefix, i), binding)?;
        x = g.matmul(x, w)?;
        x = g.add_bias(x, b)?;
        if i + 1 < n {
            x = g.relu(x);
        }
    }
    Ok(x)
}

/// Global descriptors for a batch of clouds of equal size, `B×D`.
pub fn encode_batch<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    clouds: &[&PointCloud],
    binding: Binding,
) -> Result<Var> {
    let n = clouds.first().map_or(0, |c| c.len());
    if n == 0 {
        return Err(Error::Validation("encode needs at least one non-empty cloud".into()));
    }
    if let Some(c) = clouds.iter().find(|c| c.len() != n) {
        return Err(Error::Dimension {
            op: "encode_batch",
            lhs: vec![n, 3],
            rhs: vec![c.len(), 3],
        });
    }
    let data: Vec<T> = clouds
        .iter()
        .flat_map(|c| c.points().iter().flatten())
        .map(|v| T::lit(f64::from(*v)))
        .collect();
    let x = g.constant(Tensor::new(&[clouds.len() * n, 3], data)?);
    let h = mlp(g, store, ENCODER_PREFIX, x, binding)?;
    g.segment_max(h, n)
}

/// Descriptor `g` of one cloud, `1×D`.
pub fn encode<T: Scalar>(g: &mut Graph<T>, store: &ParameterStore<T>, pc: &PointCloud, binding: Binding) -> Result<Var> {
    encode_batch(g, store, &[pc], binding)
}

/// Head logits, `B×K`.
pub fn classify_logits<T: Scalar>(g: &mut Graph<T>, store: &ParameterStore<T>, desc: Var, binding: Binding) -> Result<Var> {
    mlp(g, store, HEAD_PREFIX, desc, binding)
}

/// Class confidences `p̂`: head logits through a unit-temperature softmax.
pub fn classify<T: Scalar>(g: &mut Graph<T>, store: &ParameterStore<T>, desc: Var, binding: Binding) -> Result<Var> {
    let logits = classify_logits(g, store, desc, binding)?;
    g.row_softmax(logits, T::one())
}

/// Arg-max class, ties to the lowest index.
pub fn predict_label<T: PartialOrd + Copy>(p: &[T]) -> usize {
    argmax(p)
}

/// Descriptors and class confidences for many clouds, without gradients.
pub fn infer<T: Scalar>(
    store: &ParameterStore<T>,
    clouds: &[&PointCloud],
    batch: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut desc = Vec::new();
    let mut probs = Vec::new();
    let (mut d, mut k) = (0, 0);
    for chunk in clouds.chunks(batch.max(1)) {
        let mut g = Graph::new();
        let e = encode_batch(&mut g, store, chunk, Binding::Frozen)?;
        let p = classify(&mut g, store, e, Binding::Frozen)?;
        d = g.value(e).cols();
        k = g.value(p).cols();
        desc.extend_from_slice(g.value(e).data());
        probs.extend_from_slice(g.value(p).data());
    }
    Ok((
        Tensor::new(&[clouds.len(), d], desc)?,
        Tensor::new(&[clouds.len(), k], probs)?,
    ))
}

/// Student (encoder + head) and an EMA teacher holding encoder weights only.
#[derive(Debug, Clone)]
pub struct DualEncoder<T> {
    pub config: EncoderConfig,
    pub student: ParameterStore<T>,
    pub teacher: ParameterStore<T>,
    pub momentum: f64,
}

impl<T: Scalar> DualEncoder<T> {
    /// Fresh student; the teacher starts as an exact copy of its encoder.
    pub fn new(config: EncoderConfig, momentum: f64, rng: &mut Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::Config(format!("EMA momentum must lie in [0, 1], got {momentum}")));
        }
        let student = init_student(&config, rng)?;
        let teacher = Self::teacher_from(&student);
        Ok(DualEncoder {
            config,
            student,
            teacher,
            momentum,
        })
    }

    fn teacher_from(student: &ParameterStore<T>) -> ParameterStore<T> {
        let mut teacher = ParameterStore::new();
        for (name, t) in student.iter().filter(|(n, _)| n.starts_with(ENCODER_PREFIX)) {
            teacher.insert(name, t.detached()).expect("unique names");
        }
        teacher
    }

    /// `teacher ← m·teacher + (1−m)·student`, element-wise.
    pub fn ema_update(&mut self) -> Result<()> {
        let m = T::lit(self.momentum);
        let one_minus = T::lit(1.0 - self.momentum);
        for (name, t) in self.teacher.iter_mut() {
            let s = self.student.get(name)?;
            if s.shape() != t.shape() {
                return Err(Error::State(format!(
                    "teacher/student shape mismatch for {name}: {:?} vs {:?}",
                    t.shape(),
                    s.shape()
                )));
            }
            for (tv, sv) in t.data_mut().iter_mut().zip(s.data()) {
                *tv = m * *tv + one_minus * *sv;
            }
        }
        Ok(())
    }

    /// Student parameters only, prefixed `student/`: the inference model.
    pub fn inference_params(&self) -> Result<ParameterStore<T>> {
        let mut out = ParameterStore::new();
        self.student.merge_prefixed(STUDENT_PREFIX, &mut out)?;
        Ok(out)
    }

    /// Student and teacher, prefixed `student/` and `teacher/`.
    pub fn full_params(&self) -> Result<ParameterStore<T>> {
        let mut out = self.inference_params()?;
        self.teacher.merge_prefixed(TEACHER_PREFIX, &mut out)?;
        Ok(out)
    }
}
