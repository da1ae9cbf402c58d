//! Desk-scale depth correction driven by the correspondence loss.
//!
//! The optimization variable is the set of first-view-set depth maps. Second
//! view-set renders, features and masks always come from the clean scene, so
//! `corr_diff` acts as pseudo ground truth while `corr_NeRF` follows the
//! current depths.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correlation::{CorrelationConfig, SmoothingNorm};
use crate::error::{Error, Result, StallDiagnostics};
use crate::filter::{CorrespondenceSet, FilterConfig, StageCounts};
use crate::loss::{pair_loss, reproject_correspondences, HuberConfig};
use crate::maps::DepthMap;
use crate::pipeline::{match_pair, observe, ViewObservation};
use crate::rig::{CameraRig, DeltaAlpha};
use crate::scene::{
    inject_infidelity, render_back_depth, render_depth_opacity, Corruption, FeatureSpec, InfidelityKind,
    InfidelitySpec, SdfScene,
};
use crate::schedule::{Mode, Schedule};

/// Consecutive correspondence iterations without any surviving match before giving up.
pub const STALL_LIMIT: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_lambda_corr")]
    pub lambda_corr: f64,
    #[serde(default)]
    pub lambda_sds_proxy: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_policy")]
    pub delta_alpha: DeltaAlpha,
}

fn default_lr() -> f64 {
    0.01
}

fn default_lambda_corr() -> f64 {
    0.1
}

fn default_k() -> usize {
    3
}

fn default_policy() -> DeltaAlpha {
    DeltaAlpha::RANDOM
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            lambda_corr: default_lambda_corr(),
            lambda_sds_proxy: 0.0,
            k: default_k(),
            noise_sigma: 0.0,
            seed: 0,
            delta_alpha: default_policy(),
        }
    }
}

impl CorrectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.lambda_corr >= 0.0) || !(self.lambda_sds_proxy >= 0.0) {
            return Err(Error::Config("loss weights must be >= 0".into()));
        }
        if self.k == 0 || self.k.is_multiple_of(2) {
            return Err(Error::InvalidKernel(self.k));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }

    fn correlation(&self) -> CorrelationConfig {
        CorrelationConfig {
            mutual_nn: true,
            k: self.k,
            smoothing: SmoothingNorm::default(),
        }
    }
}

/// Update applied on prior (non-correspondence) iterations.
pub trait PriorHook: Sync {
    /// `anchors` are the depths the run started from.
    fn step(&self, t: usize, depths: &mut [DepthMap], anchors: &[DepthMap], lr: f64);
}

pub struct NoPrior;

impl PriorHook for NoPrior {
    fn step(&self, _t: usize, _depths: &mut [DepthMap], _anchors: &[DepthMap], _lr: f64) {}
}

/// Gradient of `weight / 2 * |depth - anchor|^2`: pulls back toward the corrupted start.
pub struct PriorPull {
    pub weight: f64,
}

impl PriorHook for PriorPull {
    fn step(&self, _t: usize, depths: &mut [DepthMap], anchors: &[DepthMap], lr: f64) {
        for (depth, anchor) in depths.iter_mut().zip(anchors) {
            for (d, a) in depth.values.iter_mut().zip(&anchor.values) {
                if DepthMap::is_hit(*d) && DepthMap::is_hit(*a) {
                    let v = *d as f64;
                    *d = (v - lr * self.weight * (v - *a as f64)) as f32;
                }
            }
        }
    }
}

/// Inputs of one correction experiment.
#[derive(Debug, Clone)]
pub struct CorrectionProblem {
    pub scene: SdfScene,
    /// Base rig; its second view set is used for checkpoint heatmaps.
    pub rig: CameraRig,
    pub ground_truth: Vec<DepthMap>,
    pub corrupted: Vec<Corruption>,
}

impl CorrectionProblem {
    /// Renders the first view set and corrupts view `i` with seed `spec.seed + i`.
    pub fn with_infidelity(scene: SdfScene, rig: CameraRig, spec: &InfidelitySpec) -> Result<Self> {
        let mut ground_truth = Vec::with_capacity(rig.n);
        let mut corrupted = Vec::with_capacity(rig.n);
        for (i, cam) in rig.v1.iter().enumerate() {
            let (depth, opacity) = render_depth_opacity(&scene, cam)?;
            let back = match spec.kind {
                InfidelityKind::MissingSurface => Some(render_back_depth(&scene, cam)?),
                InfidelityKind::Concavity => None,
            };
            let view_spec = InfidelitySpec {
                seed: spec.seed.wrapping_add(i as u64),
                ..spec.clone()
            };
            corrupted.push(inject_infidelity(&depth, &opacity, &view_spec, back.as_ref())?);
            ground_truth.push(depth);
        }
        Ok(Self {
            scene,
            rig,
            ground_truth,
            corrupted,
        })
    }

    /// Starts from the clean renders.
    pub fn uncorrupted(scene: SdfScene, rig: CameraRig) -> Result<Self> {
        let mut ground_truth = Vec::with_capacity(rig.n);
        for cam in &rig.v1 {
            ground_truth.push(render_depth_opacity(&scene, cam)?.0);
        }
        let corrupted = ground_truth
            .iter()
            .map(|d| Corruption {
                depth: d.clone(),
                mask: vec![false; d.values.len()],
            })
            .collect();
        Ok(Self {
            scene,
            rig,
            ground_truth,
            corrupted,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CorrectionSettings {
    pub schedule: Schedule,
    pub correction: CorrectionConfig,
    pub filter: FilterConfig,
    pub huber: HuberConfig,
    /// Iterations whose starting state gets disparity heatmaps; `T` means the final state.
    pub checkpoints: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub t: usize,
    pub mode: Mode,
    pub delta_alpha: Option<f64>,
    pub loss: Option<f64>,
    pub n_active: Option<usize>,
    /// Mean absolute depth error on corrupted pixels.
    pub made: f64,
    /// Mean absolute change on uncorrupted foreground pixels.
    pub clean_drift: f64,
}

/// `|corr_diff - corr_NeRF|` per source pixel, zero where no match survived.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisparityMap {
    pub pair: (usize, usize),
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: usize,
    pub heatmaps: Vec<DisparityMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionTrace {
    pub made_initial: f64,
    pub made_final: f64,
    pub made_reduction: f64,
    pub clean_drift_final: f64,
    pub corr_iterations: usize,
    pub records: Vec<IterationRecord>,
    #[serde(skip)]
    pub checkpoints: Vec<Checkpoint>,
    #[serde(skip)]
    pub initial_depths: Vec<DepthMap>,
    #[serde(skip)]
    pub final_depths: Vec<DepthMap>,
}

/// `100 * (1 - final / initial)`; zero when there was nothing to correct.
pub fn made_reduction(initial: f64, final_: f64) -> f64 {
    if initial > 0.0 {
        100.0 * (1.0 - final_ / initial)
    } else {
        0.0
    }
}

fn mean_abs(depths: &[DepthMap], reference: &[DepthMap], select: impl Fn(usize, usize) -> bool) -> f64 {
    let (mut sum, mut n) = (0.0f64, 0usize);
    for (v, (d, r)) in depths.iter().zip(reference).enumerate() {
        for (i, (a, b)) in d.values.iter().zip(&r.values).enumerate() {
            if select(v, i) && a.is_finite() && b.is_finite() {
                sum += (*a as f64 - *b as f64).abs();
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Second-view-set observations and filtered matches for one azimuth offset.
struct PairContext {
    delta_alpha: f64,
    targets: Vec<ViewObservation>,
    forward: Vec<CorrespondenceSet>,
    backward: Vec<CorrespondenceSet>,
}

struct Runner<'a> {
    problem: &'a CorrectionProblem,
    settings: &'a CorrectionSettings,
    features: FeatureSpec,
    sources: Vec<ViewObservation>,
}

impl Runner<'_> {
    fn context(&self, delta_alpha: f64) -> Result<PairContext> {
        let rig = self.problem.rig.with_offset(*self.problem.rig.v1[0].intrinsics(), delta_alpha)?;
        let cfg = &self.settings;
        let corr = cfg.correction.correlation();
        let mut targets = Vec::with_capacity(rig.n);
        let mut forward = Vec::with_capacity(rig.n);
        let mut backward = Vec::with_capacity(rig.n);
        for (i, cam) in rig.v2.iter().enumerate() {
            let target = observe(&self.problem.scene, cam, &self.features, &cfg.filter)?;
            let m = match_pair(&self.sources[i], &target, (i, rig.n + i), &corr, &cfg.filter)?;
            forward.push(m.forward);
            backward.push(m.backward);
            targets.push(target);
        }
        Ok(PairContext {
            delta_alpha,
            targets,
            forward,
            backward,
        })
    }

    fn disparity(&self, ctx: &PairContext, depths: &[DepthMap]) -> Vec<DisparityMap> {
        ctx.forward
            .iter()
            .enumerate()
            .map(|(i, set)| {
                let src = &self.sources[i];
                let (w, h) = (src.depth.width, src.depth.height);
                let pixels: Vec<[usize; 2]> = set.matches.iter().map(|m| m.source).collect();
                let reps = reproject_correspondences(&depths[i], &src.camera, &ctx.targets[i].camera, &pixels);
                let mut values = vec![0.0; w * h];
                for (m, r) in set.matches.iter().zip(reps) {
                    if let Some(r) = r {
                        values[m.source[1] * w + m.source[0]] = (m.target - r.pixel).norm();
                    }
                }
                DisparityMap {
                    pair: set.pair,
                    width: w,
                    height: h,
                    values,
                }
            })
            .collect()
    }
}

/// Runs the schedule with the prior hook implied by `lambda_sds_proxy`.
pub fn run_depth_correction(problem: &CorrectionProblem, settings: &CorrectionSettings) -> Result<CorrectionTrace> {
    let w = settings.correction.lambda_sds_proxy;
    if w > 0.0 {
        run_depth_correction_with(problem, settings, &PriorPull { weight: w })
    } else {
        run_depth_correction_with(problem, settings, &NoPrior)
    }
}

pub fn run_depth_correction_with(
    problem: &CorrectionProblem,
    settings: &CorrectionSettings,
    prior: &dyn PriorHook,
) -> Result<CorrectionTrace> {
    settings.schedule.validate()?;
    settings.correction.validate()?;
    settings.filter.validate()?;
    settings.huber.validate()?;
    let n = problem.rig.n;
    if problem.ground_truth.len() != n || problem.corrupted.len() != n {
        return Err(Error::Config(format!("expected {n} depth maps per view set")));
    }
    let cfg = &settings.correction;
    let k = problem.rig.v1[0].intrinsics();
    let features = FeatureSpec::two_layer(k.width, k.height, cfg.noise_sigma, cfg.seed);
    let mut sources = Vec::with_capacity(n);
    for cam in &problem.rig.v1 {
        sources.push(observe(&problem.scene, cam, &features, &settings.filter)?);
    }
    let runner = Runner {
        problem,
        settings,
        features,
        sources,
    };

    let anchors: Vec<DepthMap> = problem.corrupted.iter().map(|c| c.depth.clone()).collect();
    let masks: Vec<&[bool]> = problem.corrupted.iter().map(|c| c.mask.as_slice()).collect();
    let gt = &problem.ground_truth;
    let made = |d: &[DepthMap]| mean_abs(d, gt, |v, i| masks[v][i]);
    let drift = |d: &[DepthMap]| mean_abs(d, &anchors, |v, i| !masks[v][i]);

    let mut depths = anchors.clone();
    let base = runner.context(problem.rig.delta_alpha)?;
    let mut cached: Option<PairContext> = None;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let step = cfg.lr * cfg.lambda_corr;
    let mut stalled = 0usize;
    let mut records = Vec::with_capacity(settings.schedule.total_iters);
    let mut checkpoints = Vec::new();
    let total = settings.schedule.total_iters;

    for t in 0..total {
        if settings.checkpoints.contains(&t) {
            checkpoints.push(Checkpoint {
                t,
                heatmaps: runner.disparity(&base, &depths),
            });
        }
        let mode = settings.schedule.mode(t)?;
        let mut record = IterationRecord {
            t,
            mode,
            delta_alpha: None,
            loss: None,
            n_active: None,
            made: 0.0,
            clean_drift: 0.0,
        };
        match mode {
            Mode::Corr => {
                let da = cfg.delta_alpha.sample(&mut rng);
                let ctx = if da.to_bits() == base.delta_alpha.to_bits() {
                    &base
                } else {
                    if cached.as_ref().is_none_or(|c| c.delta_alpha.to_bits() != da.to_bits()) {
                        cached = Some(runner.context(da)?);
                    }
                    cached.as_ref().expect("context just built")
                };
                let (mut loss, mut active, mut survivors) = (0.0, 0usize, 0usize);
                for i in 0..n {
                    let src = &runner.sources[i];
                    let dst = &ctx.targets[i];
                    let fwd = pair_loss(&ctx.forward[i], &depths[i], &src.camera, &dst.camera, &settings.huber)?;
                    let bwd = pair_loss(&ctx.backward[i], &dst.depth, &dst.camera, &src.camera, &settings.huber)?;
                    loss += fwd.total + bwd.total;
                    active += fwd.n_active + bwd.n_active;
                    survivors += ctx.forward[i].len() + ctx.backward[i].len();
                    if step > 0.0 {
                        for (d, g) in depths[i].values.iter_mut().zip(&fwd.grad_depth.values) {
                            if *g != 0.0 && DepthMap::is_hit(*d) {
                                *d = (*d as f64 - step * g) as f32;
                            }
                        }
                    }
                }
                if survivors == 0 {
                    stalled += 1;
                    if stalled >= STALL_LIMIT {
                        let stage_counts: Vec<StageCounts> = ctx
                            .forward
                            .iter()
                            .chain(&ctx.backward)
                            .map(|s| s.counts)
                            .collect();
                        return Err(Error::Stalled {
                            iterations: stalled,
                            t,
                            diagnostics: Box::new(StallDiagnostics {
                                delta_alpha: da,
                                stage_counts,
                            }),
                        });
                    }
                } else {
                    stalled = 0;
                }
                record.delta_alpha = Some(da);
                record.loss = Some(loss);
                record.n_active = Some(active);
            }
            Mode::Sds => prior.step(t, &mut depths, &anchors, cfg.lr),
        }
        record.made = made(&depths);
        record.clean_drift = drift(&depths);
        records.push(record);
    }
    if settings.checkpoints.contains(&total) {
        checkpoints.push(Checkpoint {
            t: total,
            heatmaps: runner.disparity(&base, &depths),
        });
    }

    let made_initial = made(&anchors);
    let made_final = made(&depths);
    Ok(CorrectionTrace {
        made_initial,
        made_final,
        made_reduction: made_reduction(made_initial, made_final),
        clean_drift_final: drift(&depths),
        corr_iterations: settings.schedule.corr_count(),
        records,
        checkpoints,
        initial_depths: anchors,
        final_depths: depths,
    })
}
