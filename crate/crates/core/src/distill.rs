//! Self-distillation objective: tempered softmax over descriptors for the
//! student and the EMA teacher, matched with a cross-entropy.

use crate::dataset::Domain;
use crate::error::{Error, Result};
use crate::network::{classify_logits, encode_batch, Binding, DualEncoder};
use crate::pointcloud::{f_strong, f_weak, AugmentConfig, PointCloud};
use crate::rng::{Purpose, Rng};
use crate::tensor::{Graph, Scalar, Tensor, Var};

/// Where the consistency loss is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSpace {
    /// Global descriptors `g` (self-distillation).
    Feature,
    /// Classifier logits (knowledge-distillation baseline).
    Output,
}

impl std::str::FromStr for LossSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "feature" => Ok(LossSpace::Feature),
            "output" => Ok(LossSpace::Output),
            other => Err(Error::Config(format!("loss_space must be feature|output, got {other:?}"))),
        }
    }
}

impl std::fmt::Display for LossSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossSpace::Feature => "feature",
            LossSpace::Output => "output",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    pub tau_student: f64,
    pub tau_teacher: f64,
    pub loss_space: LossSpace,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            tau_student: 0.5,
            tau_teacher: 0.5,
            loss_space: LossSpace::Feature,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_student > 0.0 && self.tau_teacher > 0.0) {
            return Err(Error::Config("distillation temperatures must be positive".into()));
        }
        Ok(())
    }
}

/// Re-enters `v` as a constant if it carries gradient.
fn stop_gradient<T: Scalar>(g: &mut Graph<T>, v: Var) -> Var {
    if g.requires_grad(v) {
        let t = g.value(v).clone();
        g.constant(t)
    } else {
        v
    }
}

/// `(q, q̃)`: student and teacher rows through their tempered softmax. The
/// teacher side is always a constant.
pub fn tempered_distributions<T: Scalar>(
    g: &mut Graph<T>,
    student: Var,
    teacher: Var,
    cfg: &DistillConfig,
) -> Result<(Var, Var)> {
    if g.value(student).shape() != g.value(teacher).shape() {
        return Err(Error::Dimension {
            op: "tempered_distributions",
            lhs: g.value(student).shape().to_vec(),
            rhs: g.value(teacher).shape().to_vec(),
        });
    }
    let teacher = stop_gradient(g, teacher);
    let q = g.row_softmax(student, T::lit(cfg.tau_student))?;
    let q_t = g.row_softmax(teacher, T::lit(cfg.tau_teacher))?;
    Ok((q, q_t))
}

/// `−Σ_d q̃ log q`, averaged over rows.
pub fn sd_loss<T: Scalar>(g: &mut Graph<T>, teacher: Var, student: Var, cfg: &DistillConfig) -> Result<Var> {
    let (q, q_t) = tempered_distributions(g, student, teacher, cfg)?;
    g.cross_entropy(q_t, q)
}

/// Row entropies `H(p)` of a row-stochastic tensor.
pub fn entropy_rows<T: Scalar>(p: &Tensor<T>) -> Vec<f64> {
    (0..p.rows())
        .map(|r| {
            p.row(r)
                .iter()
                .map(|v| v.as_f64())
                .filter(|v| *v > 0.0)
                .map(|v| -v * v.ln())
                .sum()
        })
        .collect()
}

/// Mean over descriptor dimensions of the across-batch variance; a value
/// near zero signals collapse.
pub fn descriptor_variance<T: Scalar>(desc: &Tensor<T>) -> f64 {
    let (b, d) = (desc.rows(), desc.cols());
    if b < 2 || d == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for c in 0..d {
        let col: Vec<f64> = (0..b).map(|r| desc.get(r, c).as_f64()).collect();
        let mean = col.iter().sum::<f64>() / b as f64;
        total += col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / b as f64;
    }
    total / d as f64
}

/// Clouds of one domain with stable sample ids for stream derivation.
#[derive(Debug, Clone)]
pub struct DomainBatch<'a> {
    pub domain: Domain,
    pub clouds: Vec<&'a PointCloud>,
    pub ids: Vec<u64>,
}

impl<'a> DomainBatch<'a> {
    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    /// Weakly (`f'`) augmented copies.
    pub fn weak(&self, aug: &AugmentConfig, rng: &Rng, epoch: u64) -> Vec<PointCloud> {
        self.augmented(aug, rng, epoch, Purpose::WeakAug)
    }

    /// Strongly (`f''`) augmented copies.
    pub fn strong(&self, aug: &AugmentConfig, rng: &Rng, epoch: u64) -> Vec<PointCloud> {
        self.augmented(aug, rng, epoch, Purpose::StrongAug)
    }

    fn augmented(&self, aug: &AugmentConfig, rng: &Rng, epoch: u64, purpose: Purpose) -> Vec<PointCloud> {
        self.clouds
            .iter()
            .zip(&self.ids)
            .map(|(pc, id)| {
                let mut r = rng.fork(purpose, &[self.domain as u64, *id, epoch]);
                match purpose {
                    Purpose::WeakAug => f_weak(pc, aug, &mut r),
                    _ => f_strong(pc, aug, &mut r),
                }
            })
            .collect()
    }
}

/// Graph nodes and augmented inputs produced by one distillation step.
#[derive(Debug)]
pub struct DistillOutput {
    pub sd_source: Var,
    pub sd_target: Var,
    /// Student descriptors of the strongly augmented source batch.
    pub student_source: Var,
    pub student_target: Var,
    pub weak_source: Vec<PointCloud>,
    pub weak_target: Vec<PointCloud>,
}

fn domain_sd<T: Scalar>(
    g: &mut Graph<T>,
    dual: &DualEncoder<T>,
    strong: &[PointCloud],
    weak: &[PointCloud],
    cfg: &DistillConfig,
) -> Result<(Var, Var)> {
    let strong_refs: Vec<&PointCloud> = strong.iter().collect();
    let weak_refs: Vec<&PointCloud> = weak.iter().collect();
    let student = encode_batch(g, &dual.student, &strong_refs, Binding::Trainable)?;
    let teacher = encode_batch(g, &dual.teacher, &weak_refs, Binding::Frozen)?;
    let loss = match cfg.loss_space {
        LossSpace::Feature => sd_loss(g, teacher, student, cfg)?,
        LossSpace::Output => {
            let s_logits = classify_logits(g, &dual.student, student, Binding::Trainable)?;
            let t_logits = classify_logits(g, &dual.student, teacher, Binding::Frozen)?;
            sd_loss(g, t_logits, s_logits, cfg)?
        }
    };
    Ok((loss, student))
}

/// Student sees `f''(x)`, teacher sees `f'(x)`, for both domains. Returns
/// the per-domain losses without touching parameters.
pub fn distill_step<T: Scalar>(
    g: &mut Graph<T>,
    dual: &DualEncoder<T>,
    source: &DomainBatch<'_>,
    target: &DomainBatch<'_>,
    aug: &AugmentConfig,
    cfg: &DistillConfig,
    rng: &Rng,
    epoch: u64,
) -> Result<DistillOutput> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::Validation("distill_step needs non-empty batches".into()));
    }
    let strong_s = source.strong(aug, rng, epoch);
    let weak_s = source.weak(aug, rng, epoch);
    let strong_t = target.strong(aug, rng, epoch);
    let weak_t = target.weak(aug, rng, epoch);
    let (sd_source, student_source) = domain_sd(g, dual, &strong_s, &weak_s, cfg)?;
    let (sd_target, student_target) = domain_sd(g, dual, &strong_t, &weak_t, cfg)?;
    Ok(DistillOutput {
        sd_source,
        sd_target,
        student_source,
        student_target,
        weak_source: weak_s,
        weak_target: weak_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::EncoderConfig;
    use crate::tensor::{fd_check, Adam, AdamConfig};

    fn t(shape: &[usize], d: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, d).unwrap()
    }

    #[test]
    fn constant_descriptors_give_uniform_distributions() {
        let mut g = Graph::new();
        let s = g.input(t(&[1, 4], &[0.3; 4]));
        let te = g.constant(t(&[1, 4], &[-2.0; 4]));
        let (q, qt) = tempered_distributions(&mut g, s, te, &DistillConfig::default()).unwrap();
        assert!(g.value(q).data().iter().all(|v| (*v - 0.25).abs() < 1e-15));
        assert!(g.value(qt).data().iter().all(|v| (*v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn reference_distribution_at_half_temperature() {
        let mut g = Graph::new();
        let s = g.input(t(&[1, 2], &[1.0, 0.0]));
        let te = g.constant(t(&[1, 2], &[1.0, 0.0]));
        let (q, _) = tempered_distributions(&mut g, s, te, &DistillConfig::default()).unwrap();
        let e2 = 2f64.exp();
        assert!((g.value(q).data()[0] - e2 / (e2 + 1.0)).abs() < 1e-15);
        assert!((g.value(q).data()[1] - 1.0 / (e2 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn tempered_gradient_matches_finite_differences() {
        let x = t(&[2, 3], &[0.2, -0.4, 1.1, 0.0, 0.7, -0.3]);
        let r = fd_check(|g, v| g.row_softmax(v, 0.5), &x, 1e-5, 1e-6).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn equal_distributions_give_entropy() {
        let mut g = Graph::new();
        let s = g.input(t(&[1, 2], &[0.0, 0.0]));
        let te = g.constant(t(&[1, 2], &[0.0, 0.0]));
        let l = sd_loss(&mut g, te, s, &DistillConfig::default()).unwrap();
        assert!((g.value(l).item() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn teacher_side_gets_no_gradient_even_if_trainable() {
        let mut g = Graph::new();
        let s = g.input(t(&[1, 3], &[0.1, 0.2, 0.3]));
        let te = g.input(t(&[1, 3], &[0.3, 0.2, 0.1]));
        let l = sd_loss(&mut g, te, s, &DistillConfig::default()).unwrap();
        let grads = g.backward(l).unwrap();
        assert!(grads.get(te).is_none());
        assert!(grads.get(s).is_some());
    }

    #[test]
    fn loss_is_shift_invariant() {
        let cfg = DistillConfig::default();
        let eval = |shift_s: f64, shift_t: f64| {
            let mut g = Graph::new();
            let s = g.input(t(&[1, 3], &[0.1 + shift_s, -0.5 + shift_s, 0.9 + shift_s]));
            let te = g.constant(t(&[1, 3], &[0.4 + shift_t, 0.2 + shift_t, -0.1 + shift_t]));
            let l = sd_loss(&mut g, te, s, &cfg).unwrap();
            g.value(l).item()
        };
        assert!((eval(0.0, 0.0) - eval(3.5, -7.25)).abs() < 1e-6);
    }

    #[test]
    fn descriptor_variance_cases() {
        assert_eq!(descriptor_variance(&t(&[3, 2], &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0])), 0.0);
        // column 0: {0, 2} → var 1; column 1: {0, 0} → 0; mean 0.5
        assert_eq!(descriptor_variance(&t(&[2, 2], &[0.0, 0.0, 2.0, 0.0])), 0.5);
    }

    fn tiny_setup() -> (DualEncoder<f64>, Vec<PointCloud>, Vec<PointCloud>) {
        let cfg = EncoderConfig {
            point_mlp_widths: vec![3, 8, 16],
            head_widths: vec![16, 8, 3],
        };
        let dual = DualEncoder::new(cfg, 0.9, &mut Rng::new(1)).unwrap();
        let mut r = Rng::new(2);
        let mut mk = || {
            PointCloud::new((0..24).map(|_| [r.normal() as f32, r.normal() as f32, r.normal() as f32]).collect())
                .unwrap()
        };
        let src: Vec<PointCloud> = (0..3).map(|_| mk()).collect();
        let tgt: Vec<PointCloud> = (0..3).map(|_| mk()).collect();
        (dual, src, tgt)
    }

    fn batch(domain: Domain, clouds: &[PointCloud]) -> DomainBatch<'_> {
        DomainBatch {
            domain,
            clouds: clouds.iter().collect(),
            ids: (0..clouds.len() as u64).collect(),
        }
    }

    #[test]
    fn identity_aug_with_teacher_equal_student_gives_mean_entropy() {
        let (dual, src, tgt) = tiny_setup();
        let cfg = DistillConfig::default();
        let mut g = Graph::new();
        let out = distill_step(
            &mut g,
            &dual,
            &batch(Domain::Source, &src),
            &batch(Domain::Target, &tgt),
            &AugmentConfig::identity(),
            &cfg,
            &Rng::new(3),
            0,
        )
        .unwrap();
        let q = g.row_softmax(out.student_source, cfg.tau_student).unwrap();
        let h = entropy_rows(g.value(q));
        let mean_h = h.iter().sum::<f64>() / h.len() as f64;
        assert!((g.value(out.sd_source).item() - mean_h).abs() < 1e-12);
    }

    fn run_trajectory(steps: usize) -> Vec<f64> {
        let (mut dual, src, tgt) = tiny_setup();
        let cfg = DistillConfig::default();
        let aug = AugmentConfig {
            enable_removal: false,
            ..AugmentConfig::default()
        };
        let mut adam = Adam::new(AdamConfig::with_lr(1e-2));
        let rng = Rng::new(4);
        let mut losses = Vec::new();
        for step in 0..steps {
            let mut g = Graph::new();
            let out = distill_step(
                &mut g,
                &dual,
                &batch(Domain::Source, &src),
                &batch(Domain::Target, &tgt),
                &aug,
                &cfg,
                &rng,
                // fixed tiny batch: same augmentation every step
                0,
            )
            .unwrap();
            let total = g.add(out.sd_source, out.sd_target).unwrap();
            losses.push(g.value(total).item());
            let grads = g.backward(total).unwrap();
            dual.student.zero_grads();
            g.accumulate_param_grads(&grads, &mut dual.student).unwrap();
            assert!(dual.teacher.iter().all(|(_, t)| t.grad().is_none()));
            adam.step(&mut dual.student).unwrap();
            dual.ema_update().unwrap();
            let _ = step;
        }
        losses
    }

    #[test]
    fn loss_decreases_on_a_fixed_batch() {
        let losses = run_trajectory(50);
        let ups = losses.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(losses[49] < losses[0], "{losses:?}");
        assert!(ups <= 5, "{ups} non-monotone steps: {losses:?}");
    }

    #[test]
    fn trajectory_is_deterministic() {
        let a = run_trajectory(5);
        let b = run_trajectory(5);
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
