//! Two-step training: distillation-regularized source training that seeds
//! the pseudo-labels, then rounds of self-training and graph refinement.

use log::info;

use crate::dataset::{Domain, Sample};
use crate::distill::{descriptor_variance, distill_step, DistillConfig, DomainBatch};
use crate::error::{Error, Result};
use crate::graph_refine::{build_graph, calibrate_epsilon, gcn_predict, select_confident, train_gcn, GcnConfig};
use crate::metrics::{Metric, MetricRecord, Split};
use crate::network::{classify, encode_batch, infer, predict_label, Binding, DualEncoder, EncoderConfig};
use crate::pointcloud::{AugmentConfig, PointCloud};
use crate::rng::{Purpose, Rng};
use crate::tensor::{Adam, AdamConfig, Graph, ParameterStore, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub step1_epochs: usize,
    pub rounds: usize,
    pub epochs_per_round: usize,
    /// θ used by the refinement at the end of each round.
    pub theta: Vec<f64>,
    /// Target-loss weight of samples not yet vetted by refinement.
    pub lambda_nc: f64,
}

/// `rounds` values spaced evenly from `start` to `end`.
pub fn linear_theta(start: f64, end: f64, rounds: usize) -> Vec<f64> {
    match rounds {
        0 => Vec::new(),
        1 => vec![end],
        _ => (0..rounds)
            .map(|r| match r {
                r if r + 1 == rounds => end,
                r => start + (end - start) * r as f64 / (rounds - 1) as f64,
            })
            .collect(),
    }
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            step1_epochs: 60,
            rounds: 5,
            epochs_per_round: 20,
            theta: linear_theta(0.2, 1.0, 5),
            lambda_nc: 0.2,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != self.rounds {
            return Err(Error::Config(format!(
                "theta schedule has {} entries for {} rounds",
                self.theta.len(),
                self.rounds
            )));
        }
        if self.theta.iter().any(|t| !(0.0..=1.0).contains(t)) || self.theta.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("theta schedule must be non-decreasing within [0, 1]".into()));
        }
        if self.theta.last().is_some_and(|t| *t != 1.0) {
            return Err(Error::Config("theta schedule must end at 1".into()));
        }
        if !(self.lambda_nc >= 0.0) {
            return Err(Error::Config("lambda_nc must be non-negative".into()));
        }
        Ok(())
    }
}

/// How the graph similarity threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsilonMode {
    Fixed,
    /// Bisected each round to reach the target mean node degree.
    Calibrated,
}

impl std::str::FromStr for EpsilonMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(EpsilonMode::Fixed),
            "calibrated" => Ok(EpsilonMode::Calibrated),
            other => Err(Error::Config(format!("epsilon_mode must be fixed|calibrated, got {other:?}"))),
        }
    }
}

impl std::fmt::Display for EpsilonMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EpsilonMode::Fixed => "fixed",
            EpsilonMode::Calibrated => "calibrated",
        })
    }
}

/// Which loss terms and phases are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Toggles {
    pub sd_step1: bool,
    pub sd_step2: bool,
    pub self_training: bool,
    pub refinement: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            sd_step1: true,
            sd_step2: true,
            self_training: true,
            refinement: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub ema_momentum: f64,
    pub distill: DistillConfig,
    pub augment: AugmentConfig,
    pub lr: f64,
    /// Samples drawn from each domain per step.
    pub batch_size: usize,
    pub schedule: TrainSchedule,
    pub toggles: Toggles,
    pub epsilon_mode: EpsilonMode,
    pub epsilon: f64,
    pub target_degree: f64,
    pub gcn: GcnConfig,
    pub eval_batch: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            encoder: EncoderConfig::new(256, 4),
            ema_momentum: 0.995,
            distill: DistillConfig::default(),
            augment: AugmentConfig::default(),
            lr: 1e-3,
            batch_size: 32,
            schedule: TrainSchedule::default(),
            toggles: Toggles::default(),
            epsilon_mode: EpsilonMode::Fixed,
            epsilon: 0.95,
            target_degree: 10.0,
            gcn: GcnConfig::default(),
            eval_batch: 64,
        }
    }
}

impl PipelineConfig {
    /// Reduced model and schedule sized for the generated toy benchmark on
    /// a single CPU core.
    pub fn benchmark() -> Self {
        PipelineConfig {
            encoder: EncoderConfig {
                point_mlp_widths: vec![3, 32, 64, 128],
                head_widths: vec![128, 64, 4],
            },
            batch_size: 16,
            schedule: TrainSchedule {
                step1_epochs: 60,
                rounds: 5,
                epochs_per_round: 10,
                theta: linear_theta(0.2, 1.0, 5),
                lambda_nc: 0.2,
            },
            epsilon_mode: EpsilonMode::Calibrated,
            eval_batch: 100,
            ..PipelineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.distill.validate()?;
        self.augment.validate()?;
        self.schedule.validate()?;
        self.gcn.validate()?;
        if !(0.0..=1.0).contains(&self.ema_momentum) {
            return Err(Error::Config("ema_momentum must lie in [0, 1]".into()));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 || self.eval_batch == 0 {
            return Err(Error::Config("lr, batch_size and eval_batch must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon must lie in [-1, 1], got {}", self.epsilon)));
        }
        if !(self.target_degree >= 1.0) {
            return Err(Error::Config(format!("target_degree must be >= 1, got {}", self.target_degree)));
        }
        Ok(())
    }
}

/// Pseudo-label per target sample and whether it is in the confident set.
/// Each sample is in exactly one of the two sets by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabelState {
    labels: Vec<usize>,
    confident: Vec<bool>,
    updated_round: Vec<usize>,
}

impl PseudoLabelState {
    /// All samples non-confident.
    pub fn new(labels: Vec<usize>) -> Self {
        let n = labels.len();
        PseudoLabelState {
            labels,
            confident: vec![false; n],
            updated_round: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn is_confident(&self, i: usize) -> bool {
        self.confident[i]
    }

    pub fn updated_round(&self, i: usize) -> usize {
        self.updated_round[i]
    }

    pub fn confident_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.confident[i]).collect()
    }

    pub fn non_confident_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.confident[i]).collect()
    }

    pub fn num_confident(&self) -> usize {
        self.confident.iter().filter(|c| **c).count()
    }

    /// Replaces the label of sample `i` and moves it to the confident set.
    pub fn promote(&mut self, i: usize, label: usize, round: usize) {
        self.labels[i] = label;
        self.confident[i] = true;
        self.updated_round[i] = round;
    }

    /// Disjointness and coverage of the confident / non-confident split.
    pub fn check_partition(&self) -> Result<()> {
        let c = self.confident_indices();
        let nc = self.non_confident_indices();
        let mut all: Vec<usize> = c.iter().chain(&nc).copied().collect();
        all.sort_unstable();
        if all.len() != self.len() || all.iter().enumerate().any(|(i, v)| i != *v) {
            return Err(Error::State("pseudo-label sets do not partition the target samples".into()));
        }
        Ok(())
    }

    /// Fraction of labels equal to `truth`.
    pub fn accuracy(&self, truth: &[usize]) -> f64 {
        accuracy(&self.labels, truth)
    }
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}

/// Arg-max predictions of the student for `samples`.
pub fn predict(student: &ParameterStore<f32>, samples: &[Sample], batch: usize) -> Result<Vec<usize>> {
    let clouds: Vec<&PointCloud> = samples.iter().map(|s| &s.cloud).collect();
    let (_, probs) = infer(student, &clouds, batch)?;
    Ok((0..probs.rows()).map(|i| predict_label(probs.row(i))).collect())
}

pub fn evaluate(student: &ParameterStore<f32>, samples: &[Sample], batch: usize) -> Result<f64> {
    let truth: Vec<usize> = samples.iter().map(|s| s.label).collect();
    Ok(accuracy(&predict(student, samples, batch)?, &truth))
}

/// Labeled source, unlabeled target training set, and a labeled target test
/// set used only for reporting. Target training labels are read only to
/// report pseudo-label accuracy.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub source: Vec<Sample>,
    pub target: Vec<Sample>,
    pub target_test: Vec<Sample>,
}

impl TrainData {
    fn validate(&self, num_classes: usize) -> Result<()> {
        if self.source.is_empty() || self.target.is_empty() {
            return Err(Error::Config("source and target training sets must be non-empty".into()));
        }
        if let Some(s) = self.source.iter().chain(&self.target_test).find(|s| s.label >= num_classes) {
            return Err(Error::Validation(format!("label {} not below class count {num_classes}", s.label)));
        }
        Ok(())
    }

    fn target_truth(&self) -> Vec<usize> {
        self.target.iter().map(|s| s.label).collect()
    }
}

fn one_hot(labels: &[usize], k: usize) -> Tensor<f32> {
    let mut t = Tensor::zeros(&[labels.len(), k]);
    for (i, l) in labels.iter().enumerate() {
        t.data_mut()[i * k + l] = 1.0;
    }
    t
}

#[derive(Debug, Default, Clone, Copy)]
struct EpochStats {
    ce_src: f64,
    ce_tgt: f64,
    sd: f64,
    variance: f64,
    correct: usize,
    seen: usize,
    batches: usize,
}

/// Target supervision for a step-2 epoch.
struct TargetSupervision<'a> {
    state: &'a PseudoLabelState,
    lambda_nc: f64,
}

/// Training state shared by both steps.
pub struct Trainer<'d> {
    pub cfg: PipelineConfig,
    data: &'d TrainData,
    root: Rng,
    pub metrics: Vec<MetricRecord>,
}

impl<'d> Trainer<'d> {
    pub fn new(cfg: PipelineConfig, data: &'d TrainData) -> Result<Self> {
        cfg.validate()?;
        data.validate(cfg.encoder.num_classes())?;
        let root = Rng::new(cfg.seed);
        Ok(Trainer {
            cfg,
            data,
            root,
            metrics: Vec::new(),
        })
    }

    fn record(&mut self, round: usize, epoch: usize, split: Split, metric: Metric, value: f64) {
        self.metrics.push(MetricRecord {
            round,
            epoch,
            split,
            metric,
            value,
        });
    }

    fn fresh_model(&self, phase: u64) -> Result<DualEncoder<f32>> {
        DualEncoder::new(self.cfg.encoder.clone(), self.cfg.ema_momentum, &mut self.root.fork(Purpose::Init, &[phase]))
    }

    /// One pass over the source set with an equal number of target samples
    /// per step.
    fn epoch(
        &self,
        dual: &mut DualEncoder<f32>,
        opt: &mut Adam<f32>,
        round: usize,
        epoch: usize,
        sd: bool,
        sup: Option<&TargetSupervision<'_>>,
    ) -> Result<EpochStats> {
        let (ns, nt) = (self.data.source.len(), self.data.target.len());
        let k = self.cfg.encoder.num_classes();
        let shuffle = self.root.fork(Purpose::Shuffle, &[round as u64, epoch as u64]);
        let mut perm_s: Vec<usize> = (0..ns).collect();
        let mut perm_t: Vec<usize> = (0..nt).collect();
        shuffle.derive(&[Domain::Source as u64]).shuffle(&mut perm_s);
        shuffle.derive(&[Domain::Target as u64]).shuffle(&mut perm_t);
        // augmentation streams are keyed by (round, epoch, domain, sample)
        let aug_rng = self.root.derive(&[round as u64]);
        let mut stats = EpochStats::default();
        for (b, src_idx) in perm_s.chunks(self.cfg.batch_size).enumerate() {
            let tgt_idx: Vec<usize> = (0..src_idx.len()).map(|i| perm_t[(b * self.cfg.batch_size + i) % nt]).collect();
            let source = DomainBatch {
                domain: Domain::Source,
                clouds: src_idx.iter().map(|&i| &self.data.source[i].cloud).collect(),
                ids: src_idx.iter().map(|&i| i as u64).collect(),
            };
            let target = DomainBatch {
                domain: Domain::Target,
                clouds: tgt_idx.iter().map(|&i| &self.data.target[i].cloud).collect(),
                ids: tgt_idx.iter().map(|&i| i as u64).collect(),
            };
            let labels: Vec<usize> = src_idx.iter().map(|&i| self.data.source[i].label).collect();

            let mut g: Graph<f32> = Graph::new();
            let mut terms: Vec<Var> = Vec::new();
            let (student_src, weak_tgt) = if sd {
                let out = distill_step(&mut g, dual, &source, &target, &self.cfg.augment, &self.cfg.distill, &aug_rng, epoch as u64)?;
                stats.sd += f64::from(g.value(out.sd_source).item() + g.value(out.sd_target).item());
                terms.push(out.sd_source);
                terms.push(out.sd_target);
                (out.student_source, out.weak_target)
            } else {
                let strong = source.strong(&self.cfg.augment, &aug_rng, epoch as u64);
                let refs: Vec<&PointCloud> = strong.iter().collect();
                let desc = encode_batch(&mut g, &dual.student, &refs, Binding::Trainable)?;
                let weak = if sup.is_some() {
                    target.weak(&self.cfg.augment, &aug_rng, epoch as u64)
                } else {
                    Vec::new()
                };
                (desc, weak)
            };
            let probs = classify(&mut g, &dual.student, student_src, Binding::Trainable)?;
            let y = g.constant(one_hot(&labels, k));
            let ce_src = g.cross_entropy(y, probs)?;
            terms.push(ce_src);
            stats.ce_src += f64::from(g.value(ce_src).item());
            stats.variance += descriptor_variance(g.value(student_src));
            let pred = g.value(probs).argmax_rows();
            stats.correct += pred.iter().zip(&labels).filter(|(a, b)| a == b).count();
            stats.seen += labels.len();

            if let Some(sup) = sup {
                let refs: Vec<&PointCloud> = weak_tgt.iter().collect();
                let desc = encode_batch(&mut g, &dual.student, &refs, Binding::Trainable)?;
                let probs_t = classify(&mut g, &dual.student, desc, Binding::Trainable)?;
                let pl: Vec<usize> = tgt_idx.iter().map(|&i| sup.state.labels()[i]).collect();
                let weights: Vec<f32> = tgt_idx
                    .iter()
                    .map(|&i| if sup.state.is_confident(i) { 1.0 } else { sup.lambda_nc as f32 })
                    .collect();
                let yt = g.constant(one_hot(&pl, k));
                let ce_tgt = g.weighted_cross_entropy(yt, probs_t, weights)?;
                stats.ce_tgt += f64::from(g.value(ce_tgt).item());
                terms.push(ce_tgt);
            }

            let mut loss = terms[0];
            for t in &terms[1..] {
                loss = g.add(loss, *t)?;
            }
            if !g.value(loss).is_finite() {
                return Err(Error::Numeric(format!("non-finite loss in round {round}, epoch {epoch}, batch {b}")));
            }
            let grads = g.backward(loss)?;
            g.accumulate_param_grads(&grads, &mut dual.student)?;
            opt.step(&mut dual.student)?;
            dual.ema_update()?;
            stats.batches += 1;
        }
        Ok(stats)
    }

    fn log_epoch(&mut self, round: usize, epoch: usize, stats: &EpochStats, dual: &DualEncoder<f32>, step2: bool) -> Result<()> {
        let nb = stats.batches.max(1) as f64;
        self.record(round, epoch, Split::SourceTrain, Metric::Accuracy, stats.correct as f64 / stats.seen.max(1) as f64);
        self.record(round, epoch, Split::SourceTrain, Metric::LossCeSrc, stats.ce_src / nb);
        self.record(round, epoch, Split::SourceTrain, Metric::LossSd, stats.sd / nb);
        self.record(round, epoch, Split::SourceTrain, Metric::DescriptorVariance, stats.variance / nb);
        if step2 {
            self.record(round, epoch, Split::Pseudo, Metric::LossCeTgt, stats.ce_tgt / nb);
        }
        if !self.data.target_test.is_empty() {
            let acc = evaluate(&dual.student, &self.data.target_test, self.cfg.eval_batch)?;
            self.record(round, epoch, Split::TargetTest, Metric::Accuracy, acc);
        }
        Ok(())
    }

    /// Source cross-entropy on strongly augmented inputs plus, when enabled,
    /// the distillation loss on both domains.
    pub fn step1_train(&mut self) -> Result<DualEncoder<f32>> {
        let mut dual = self.fresh_model(0)?;
        let mut opt = Adam::new(AdamConfig::with_lr(self.cfg.lr));
        for epoch in 0..self.cfg.schedule.step1_epochs {
            let stats = self.epoch(&mut dual, &mut opt, 0, epoch, self.cfg.toggles.sd_step1, None)?;
            self.log_epoch(0, epoch, &stats, &dual, false)?;
            info!(
                "step1 epoch {epoch}: ce {:.4} sd {:.4} acc {:.3}",
                stats.ce_src / stats.batches.max(1) as f64,
                stats.sd / stats.batches.max(1) as f64,
                stats.correct as f64 / stats.seen.max(1) as f64
            );
        }
        Ok(dual)
    }

    /// Arg-max of the classifier on every unaugmented target sample, all
    /// placed in the non-confident set.
    pub fn init_pseudo_labels(&self, student: &ParameterStore<f32>) -> Result<PseudoLabelState> {
        let state = PseudoLabelState::new(predict(student, &self.data.target, self.cfg.eval_batch)?);
        state.check_partition()?;
        Ok(state)
    }

    /// `e` epochs of source CE + λ-weighted pseudo-label CE on weakly
    /// augmented target inputs (+ distillation when enabled).
    pub fn selftrain_round(
        &mut self,
        dual: &mut DualEncoder<f32>,
        opt: &mut Adam<f32>,
        state: &PseudoLabelState,
        round: usize,
    ) -> Result<()> {
        state.check_partition()?;
        if state.len() != self.data.target.len() {
            return Err(Error::State(format!("{} pseudo-labels for {} target samples", state.len(), self.data.target.len())));
        }
        let sup = TargetSupervision {
            state,
            lambda_nc: self.cfg.schedule.lambda_nc,
        };
        for epoch in 0..self.cfg.schedule.epochs_per_round {
            let stats = self.epoch(dual, opt, round, epoch, self.cfg.toggles.sd_step2, Some(&sup))?;
            self.log_epoch(round, epoch, &stats, dual, true)?;
            self.record(round, epoch, Split::Pseudo, Metric::Accuracy, state.accuracy(&self.data.target_truth()));
        }
        Ok(())
    }

    /// Re-labels the top θ of each class by the score of a GCN over the
    /// descriptor graph and marks them confident. With refinement off the
    /// pseudo-labels stay as they are.
    pub fn refine_round(
        &self,
        student: &ParameterStore<f32>,
        state: &mut PseudoLabelState,
        theta: f64,
        round: usize,
    ) -> Result<RoundReport> {
        let truth = self.data.target_truth();
        let before = state.accuracy(&truth);
        if !self.cfg.toggles.refinement {
            return Ok(RoundReport {
                round,
                theta,
                pseudo_acc_before: before,
                pseudo_acc_after: before,
                selected: 0,
                confident: state.num_confident(),
                epsilon: None,
                mean_degree: None,
            });
        }
        let clouds: Vec<&PointCloud> = self.data.target.iter().map(|s| &s.cloud).collect();
        let (desc, probs) = infer(student, &clouds, self.cfg.eval_batch)?;
        let epsilon = match self.cfg.epsilon_mode {
            EpsilonMode::Fixed => self.cfg.epsilon,
            EpsilonMode::Calibrated => calibrate_epsilon(&desc, self.cfg.target_degree)?.epsilon,
        };
        let graph = build_graph(desc, probs, epsilon)?;
        let labels: Vec<Option<usize>> = state.labels().iter().map(|l| Some(*l)).collect();
        let gcn_rng = self.root.fork(Purpose::Gcn, &[round as u64]);
        let (model, _) = train_gcn(&graph, &labels, &self.cfg.gcn, &gcn_rng)?;
        let (scores, epsilon, degree) = (gcn_predict(&graph, &model)?, Some(epsilon), Some(graph.mean_degree()));
        let sel = select_confident(&scores, theta)?;
        for &i in &sel.confident {
            state.promote(i, sel.predicted[i], round);
        }
        state.check_partition()?;
        let report = RoundReport {
            round,
            theta,
            pseudo_acc_before: before,
            pseudo_acc_after: state.accuracy(&truth),
            selected: sel.confident.len(),
            confident: state.num_confident(),
            epsilon,
            mean_degree: degree,
        };
        info!(
            "round {round}: theta {theta:.2} pseudo acc {:.3} -> {:.3}, confident {}",
            report.pseudo_acc_before, report.pseudo_acc_after, report.confident
        );
        Ok(report)
    }

    /// Step 2 from an initial pseudo-labeling; the student is re-initialized.
    pub fn step2(&mut self, mut state: PseudoLabelState) -> Result<(DualEncoder<f32>, Vec<RoundReport>)> {
        let mut dual = self.fresh_model(1)?;
        let mut opt = Adam::new(AdamConfig::with_lr(self.cfg.lr));
        let mut reports = Vec::with_capacity(self.cfg.schedule.rounds);
        for r in 0..self.cfg.schedule.rounds {
            let round = r + 1;
            self.selftrain_round(&mut dual, &mut opt, &state, round)?;
            let theta = self.cfg.schedule.theta[r];
            reports.push(self.refine_round(&dual.student, &mut state, theta, round)?);
        }
        Ok((dual, reports))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub theta: f64,
    pub pseudo_acc_before: f64,
    pub pseudo_acc_after: f64,
    pub selected: usize,
    pub confident: usize,
    pub epsilon: Option<f64>,
    pub mean_degree: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Step1Output {
    pub dual: DualEncoder<f32>,
    pub pseudo: PseudoLabelState,
    pub init_pseudo_accuracy: f64,
    pub metrics: Vec<MetricRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Student weights only, prefixed `student/`.
    pub inference: ParameterStore<f32>,
    pub metrics: Vec<MetricRecord>,
    pub init_pseudo_accuracy: f64,
    pub rounds: Vec<RoundReport>,
    pub target_test_accuracy: f64,
}

pub fn run_step1(cfg: &PipelineConfig, data: &TrainData) -> Result<Step1Output> {
    let mut t = Trainer::new(cfg.clone(), data)?;
    let dual = t.step1_train()?;
    let pseudo = t.init_pseudo_labels(&dual.student)?;
    let init_pseudo_accuracy = pseudo.accuracy(&data.target_truth());
    info!("initial pseudo-label accuracy {init_pseudo_accuracy:.3}");
    Ok(Step1Output {
        dual,
        pseudo,
        init_pseudo_accuracy,
        metrics: t.metrics,
    })
}

/// Continues from a finished step 1. `cfg` may differ from the step-1
/// configuration only in step-2 settings.
pub fn run_from_step1(cfg: &PipelineConfig, data: &TrainData, step1: &Step1Output) -> Result<RunOutput> {
    let mut t = Trainer::new(cfg.clone(), data)?;
    t.metrics = step1.metrics.clone();
    let (student, rounds) = if cfg.toggles.self_training && cfg.schedule.rounds > 0 {
        let (dual, rounds) = t.step2(step1.pseudo.clone())?;
        (dual.student, rounds)
    } else {
        (step1.dual.student.clone(), Vec::new())
    };
    let target_test_accuracy = if data.target_test.is_empty() {
        f64::NAN
    } else {
        evaluate(&student, &data.target_test, cfg.eval_batch)?
    };
    let mut inference = ParameterStore::new();
    student.merge_prefixed(crate::network::STUDENT_PREFIX, &mut inference)?;
    Ok(RunOutput {
        inference,
        metrics: t.metrics,
        init_pseudo_accuracy: step1.init_pseudo_accuracy,
        rounds,
        target_test_accuracy,
    })
}

pub fn run_full(cfg: &PipelineConfig, data: &TrainData) -> Result<RunOutput> {
    let step1 = run_step1(cfg, data)?;
    run_from_step1(cfg, data, &step1)
}
