//! Lifting and landing transports along a learned field, the two-phase leap,
//! and the resumable counterfactual search built from repeated leaps.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::codec::GenerativeCodec;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::oracle::{ClassifierOracle, OracleError};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const DEFAULT_EULER_STEPS: usize = 100;

/// Anything that yields a velocity `v(t, z, c)`.
pub trait VelocityField<T: Scalar>: Send + Sync {
    fn latent_dim(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn velocity(&self, t: T, z: &[T], class: usize) -> Result<Vec<T>>;

    fn velocity_batch(&self, t: T, z: &Matrix<T>, classes: &[usize]) -> Result<Matrix<T>> {
        let mut out = Vec::with_capacity(z.rows() * z.cols());
        for (row, &c) in z.iter_rows().zip(classes) {
            out.extend(self.velocity(t, row, c)?);
        }
        Matrix::from_vec(z.rows(), z.cols(), out)
    }
}

impl<T: Scalar> VelocityField<T> for FlowField<T> {
    fn latent_dim(&self) -> usize {
        FlowField::latent_dim(self)
    }

    fn n_classes(&self) -> usize {
        FlowField::n_classes(self)
    }

    fn velocity(&self, t: T, z: &[T], class: usize) -> Result<Vec<T>> {
        self.eval(t, z, class)
    }

    fn velocity_batch(&self, t: T, z: &Matrix<T>, classes: &[usize]) -> Result<Matrix<T>> {
        self.eval_batch(t, z, classes)
    }
}

/// Closure-backed field, mostly for analytic test fields.
pub struct FnField<F> {
    pub latent_dim: usize,
    pub n_classes: usize,
    pub f: F,
}

impl<T, F> VelocityField<T> for FnField<F>
where
    T: Scalar,
    F: Fn(T, &[T], usize) -> Vec<T> + Send + Sync,
{
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn velocity(&self, t: T, z: &[T], class: usize) -> Result<Vec<T>> {
        Ok((self.f)(t, z, class))
    }
}

fn check_time<T: Scalar>(t: T) -> Result<()> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::Config(format!("integration time {t} outside [0, 1]")));
    }
    Ok(())
}

/// Explicit Euler from `t_from` to `t_to`: `z ← z + Δt·γ·v(t, z, c)` with
/// `Δt = (t_to − t_from) / steps`. A zero `gamma` returns `z` untouched.
pub fn integrate<T: Scalar, F: VelocityField<T> + ?Sized>(
    field: &F,
    z: &[T],
    class: usize,
    t_from: T,
    t_to: T,
    gamma: T,
    steps: usize,
) -> Result<Vec<T>> {
    check_time(t_from)?;
    check_time(t_to)?;
    if steps == 0 {
        return Err(Error::Config("euler_steps must be at least 1".into()));
    }
    if z.len() != field.latent_dim() {
        return Err(Error::shape("integrate", field.latent_dim(), z.len()));
    }
    if class >= field.n_classes() {
        return Err(Error::LabelRange {
            label: class,
            n_classes: field.n_classes(),
        });
    }
    let mut z = z.to_vec();
    if gamma.is_zero() {
        return Ok(z);
    }
    let dt = (t_to - t_from) / T::from_usize(steps).unwrap();
    let scale = dt * gamma;
    for step in 0..steps {
        let t = t_from + T::from_usize(step).unwrap() * dt;
        let v = field.velocity(t, &z, class)?;
        if v.len() != z.len() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integration { step });
        }
        for (zi, vi) in z.iter_mut().zip(&v) {
            *zi += scale * *vi;
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integration { step });
        }
    }
    Ok(z)
}

/// Row-wise [`integrate`] where every row carries its own class.
pub fn integrate_batch<T: Scalar, F: VelocityField<T> + ?Sized>(
    field: &F,
    z: &Matrix<T>,
    classes: &[usize],
    t_from: T,
    t_to: T,
    gamma: T,
    steps: usize,
) -> Result<Matrix<T>> {
    check_time(t_from)?;
    check_time(t_to)?;
    if steps == 0 {
        return Err(Error::Config("euler_steps must be at least 1".into()));
    }
    if z.cols() != field.latent_dim() || classes.len() != z.rows() {
        return Err(Error::shape("integrate_batch", field.latent_dim(), z.cols()));
    }
    let mut z = z.clone();
    if gamma.is_zero() {
        return Ok(z);
    }
    let dt = (t_to - t_from) / T::from_usize(steps).unwrap();
    let scale = dt * gamma;
    for step in 0..steps {
        let t = t_from + T::from_usize(step).unwrap() * dt;
        let v = field.velocity_batch(t, &z, classes)?;
        if !v.is_finite() {
            return Err(Error::Integration { step });
        }
        z.axpy_inplace(scale, &v);
        if !z.is_finite() {
            return Err(Error::Integration { step });
        }
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeapConfig {
    pub gamma_lift: f64,
    pub gamma_land: f64,
    #[serde(default = "default_steps")]
    pub euler_steps: usize,
}

fn default_steps() -> usize {
    DEFAULT_EULER_STEPS
}

impl LeapConfig {
    pub fn new(gamma_lift: f64, gamma_land: f64) -> Self {
        Self {
            gamma_lift,
            gamma_land,
            euler_steps: DEFAULT_EULER_STEPS,
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.euler_steps = steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.euler_steps == 0 {
            return Err(Error::Config("euler_steps must be at least 1".into()));
        }
        for (name, g) in [("gamma_lift", self.gamma_lift), ("gamma_land", self.gamma_land)] {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {g}")));
            }
        }
        Ok(())
    }
}

/// Lift `z_source` to `t = 0` under `y_c`, then land it at `t = 1` under
/// `y_target`.
pub fn leap<T: Scalar, F: VelocityField<T> + ?Sized>(
    field: &F,
    z_source: &[T],
    y_c: usize,
    y_target: usize,
    config: &LeapConfig,
) -> Result<Vec<T>> {
    Ok(leap_with_lift(field, z_source, y_c, y_target, config)?.1)
}

/// Like [`leap`], also returning the lifted point.
pub fn leap_with_lift<T: Scalar, F: VelocityField<T> + ?Sized>(
    field: &F,
    z_source: &[T],
    y_c: usize,
    y_target: usize,
    config: &LeapConfig,
) -> Result<(Vec<T>, Vec<T>)> {
    config.validate()?;
    let lifted = integrate(field, z_source, y_c, T::one(), T::zero(), T::lit(config.gamma_lift), config.euler_steps)?;
    let landed = integrate(field, &lifted, y_target, T::zero(), T::one(), T::lit(config.gamma_land), config.euler_steps)?;
    Ok((lifted, landed))
}

pub fn leap_batch<T: Scalar, F: VelocityField<T> + ?Sized>(
    field: &F,
    z: &Matrix<T>,
    y_c: &[usize],
    y_target: &[usize],
    config: &LeapConfig,
) -> Result<Matrix<T>> {
    config.validate()?;
    let lifted = integrate_batch(field, z, y_c, T::one(), T::zero(), T::lit(config.gamma_lift), config.euler_steps)?;
    integrate_batch(field, &lifted, y_target, T::zero(), T::one(), T::lit(config.gamma_land), config.euler_steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeapFactualConfig {
    pub n_blend: usize,
    pub gamma_blend: f64,
    pub n_inject: usize,
    pub gamma_inject_lift: f64,
    pub gamma_inject_land: f64,
    pub euler_steps: usize,
    pub early_stop: bool,
}

impl Default for LeapFactualConfig {
    fn default() -> Self {
        Self::morpho()
    }
}

impl LeapFactualConfig {
    /// Digit-scale settings: 15 blending leaps at 0.1, then 5 injection
    /// leaps lifting at 0 and landing at 0.1.
    pub fn morpho() -> Self {
        Self {
            n_blend: 15,
            gamma_blend: 0.1,
            n_inject: 5,
            gamma_inject_lift: 0.0,
            gamma_inject_land: 0.1,
            euler_steps: DEFAULT_EULER_STEPS,
            early_stop: true,
        }
    }

    /// Same settings with injection disabled (standard counterfactuals).
    /// Blending only for [`CeMode::Ce`]; the configured injection for
    /// [`CeMode::Reliable`].
    pub fn for_mode(&self, mode: CeMode) -> Self {
        match mode {
            CeMode::Ce => self.clone().without_injection(),
            CeMode::Reliable => self.clone(),
        }
    }

    pub fn without_injection(mut self) -> Self {
        self.n_inject = 0;
        self
    }

    pub fn blend_leap(&self) -> LeapConfig {
        LeapConfig {
            gamma_lift: self.gamma_blend,
            gamma_land: self.gamma_blend,
            euler_steps: self.euler_steps,
        }
    }

    pub fn inject_leap(&self) -> LeapConfig {
        LeapConfig {
            gamma_lift: self.gamma_inject_lift,
            gamma_land: self.gamma_inject_land,
            euler_steps: self.euler_steps,
        }
    }

    /// Hard errors for unusable settings; returns advisory warnings for
    /// settings that run but defeat the purpose of a phase.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.blend_leap().validate()?;
        self.inject_leap().validate()?;
        let mut warnings = Vec::new();
        if self.n_blend > 0 && self.gamma_blend >= 1.0 {
            warnings.push(format!(
                "gamma_blend = {} >= 1 replaces class information instead of blending it",
                self.gamma_blend
            ));
        }
        if self.n_inject > 0 && self.gamma_inject_lift >= self.gamma_inject_land {
            warnings.push(format!(
                "gamma_inject_lift = {} >= gamma_inject_land = {}: lifting cancels the injection",
                self.gamma_inject_lift, self.gamma_inject_land
            ));
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// The encoded input before any leap.
    Source,
    Lift,
    Land,
    /// A query the oracle declined to answer; the run waits on the same point.
    Pending,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub leap: usize,
    pub phase: Phase,
    pub t: f64,
    pub z: Vec<f64>,
    /// Oracle answer for landed/source points; conditioning label for lifts.
    pub label: Option<usize>,
    pub wall_ms: u64,
}

/// Wire form of one trajectory entry (one JSON Lines record).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub leap: usize,
    pub phase: Phase,
    pub t: f64,
    pub z: Vec<f32>,
    pub label: Option<usize>,
    pub wall_ms: u64,
}

impl From<&TrajectoryEntry> for TrajectoryRecord {
    fn from(e: &TrajectoryEntry) -> Self {
        Self {
            leap: e.leap,
            phase: e.phase,
            t: e.t,
            z: e.z.iter().map(|&v| v as f32).collect(),
            label: e.label,
            wall_ms: e.wall_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub entries: Vec<TrajectoryEntry>,
    pub final_label: Option<usize>,
    pub stopped_early: bool,
}

impl Trajectory {
    pub fn source(&self) -> Option<&TrajectoryEntry> {
        self.entries.first()
    }

    /// Landed points in leap order.
    pub fn landings(&self) -> impl Iterator<Item = &TrajectoryEntry> {
        self.entries.iter().filter(|e| e.phase == Phase::Land)
    }

    /// Oracle answers in query order (source first).
    pub fn label_sequence(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| matches!(e.phase, Phase::Source | Phase::Land | Phase::Pending))
            .filter_map(|e| e.label)
            .collect()
    }

    pub fn records(&self) -> Vec<TrajectoryRecord> {
        self.entries.iter().map(TrajectoryRecord::from).collect()
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut w, &r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Parses a JSON Lines trajectory export, rejecting records that do not
/// match the schema or violate entry ordering.
pub fn parse_trajectory_jsonl(input: impl BufRead) -> Result<Vec<TrajectoryRecord>> {
    let mut out: Vec<TrajectoryRecord> = Vec::new();
    let mut offset = 0;
    for line in input.lines() {
        let line = line?;
        let len = line.len() + 1;
        if line.trim().is_empty() {
            offset += len;
            continue;
        }
        let rec: TrajectoryRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            offset,
            reason: e.to_string(),
        })?;
        let ok = match out.last() {
            None => rec.phase == Phase::Source && rec.leap == 0,
            Some(prev) => rec.phase != Phase::Source && rec.leap >= prev.leap && rec.z.len() == prev.z.len(),
        };
        if !ok {
            return Err(Error::Parse {
                offset,
                reason: format!("record out of order: leap {} {:?}", rec.leap, rec.phase),
            });
        }
        out.push(rec);
        offset += len;
    }
    if out.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    Ok(out)
}

/// Plain counterfactuals stop after blending; reliable ones add injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CeMode {
    Ce,
    Reliable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Blending,
    Injecting,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    AwaitingLabel,
    Done,
}

/// A counterfactual search as an explicit state machine. Each oracle answer
/// is fed through [`LeapRun::supply_label`], which advances leaps until the
/// next query is needed or the run finishes. Local and remote oracles drive
/// the exact same transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct LeapRun<T> {
    config: LeapFactualConfig,
    target: usize,
    n_classes: usize,
    z: Vec<T>,
    y_c: Option<usize>,
    blend_done: usize,
    inject_done: usize,
    stage: Stage,
    awaiting: bool,
    queries: usize,
    trajectory: Trajectory,
}

fn to_f64<T: Scalar>(z: &[T]) -> Vec<f64> {
    z.iter().map(|v| v.to_f64_lossy()).collect()
}

impl<T: Scalar> LeapRun<T> {
    /// Starts a run at an encoded source; the first query asks for its label.
    pub fn new(z_source: Vec<T>, target: usize, n_classes: usize, config: LeapFactualConfig) -> Result<Self> {
        config.validate()?;
        if target >= n_classes {
            return Err(Error::LabelRange {
                label: target,
                n_classes,
            });
        }
        let trajectory = Trajectory {
            entries: vec![TrajectoryEntry {
                leap: 0,
                phase: Phase::Source,
                t: 1.0,
                z: to_f64(&z_source),
                label: None,
                wall_ms: 0,
            }],
            ..Default::default()
        };
        Ok(Self {
            config,
            target,
            n_classes,
            z: z_source,
            y_c: None,
            blend_done: 0,
            inject_done: 0,
            stage: Stage::Blending,
            awaiting: true,
            queries: 0,
            trajectory,
        })
    }

    pub fn config(&self) -> &LeapFactualConfig {
        &self.config
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn latent(&self) -> &[T] {
        &self.z
    }

    /// Latent whose decoded sample needs a label, if any.
    pub fn pending_latent(&self) -> Option<&[T]> {
        self.awaiting.then_some(self.z.as_slice())
    }

    pub fn current_label(&self) -> Option<usize> {
        self.y_c
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn blend_leaps(&self) -> usize {
        self.blend_done
    }

    pub fn inject_leaps(&self) -> usize {
        self.inject_done
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn is_done(&self) -> bool {
        self.stage == Stage::Done
    }

    pub fn status(&self) -> RunStatus {
        if self.is_done() {
            RunStatus::Done
        } else {
            RunStatus::AwaitingLabel
        }
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn into_parts(self) -> (Vec<T>, Trajectory) {
        (self.z, self.trajectory)
    }

    /// Records that the oracle declined to answer. The run stays on the same
    /// point and asks again.
    pub fn skip(&mut self, wall_ms: u64) -> Result<()> {
        if !self.awaiting {
            return Err(Error::NotAwaitingLabel);
        }
        let leap = self.blend_done + self.inject_done;
        self.trajectory.entries.push(TrajectoryEntry {
            leap,
            phase: Phase::Pending,
            t: 1.0,
            z: to_f64(&self.z),
            label: None,
            wall_ms,
        });
        Ok(())
    }

    /// Accepts the oracle's answer for the pending point and advances. On
    /// error the run is left exactly as it was.
    pub fn supply_label<F: VelocityField<T> + ?Sized>(&mut self, label: usize, field: &F, wall_ms: u64) -> Result<RunStatus> {
        if !self.awaiting {
            return Err(Error::NotAwaitingLabel);
        }
        if label >= self.n_classes {
            return Err(Error::LabelRange {
                label,
                n_classes: self.n_classes,
            });
        }
        if field.n_classes() != self.n_classes || field.latent_dim() != self.z.len() {
            return Err(Error::shape(
                "LeapRun::supply_label",
                format!("{} classes / dim {}", self.n_classes, self.z.len()),
                format!("{} classes / dim {}", field.n_classes(), field.latent_dim()),
            ));
        }
        let mut next = self.clone();
        next.answer(label, field, wall_ms)?;
        *self = next;
        Ok(self.status())
    }

    fn answer<F: VelocityField<T> + ?Sized>(&mut self, label: usize, field: &F, wall_ms: u64) -> Result<()> {
        let last = self.trajectory.entries.last_mut().expect("trajectory starts with the source");
        last.label = Some(label);
        self.y_c = Some(label);
        self.queries += 1;
        self.awaiting = false;

        if self.stage == Stage::Blending {
            let reached = self.config.early_stop && label == self.target;
            if self.blend_done < self.config.n_blend && !reached {
                self.blend_done += 1;
                return self.step(field, label, self.config.blend_leap(), wall_ms);
            }
            if reached && self.blend_done < self.config.n_blend {
                self.trajectory.stopped_early = true;
            }
            self.stage = Stage::Injecting;
        }
        if self.stage == Stage::Injecting && self.inject_done < self.config.n_inject {
            self.inject_done += 1;
            return self.step(field, label, self.config.inject_leap(), wall_ms);
        }
        self.stage = Stage::Done;
        self.trajectory.final_label = Some(label);
        Ok(())
    }

    fn step<F: VelocityField<T> + ?Sized>(&mut self, field: &F, y_c: usize, leap_cfg: LeapConfig, wall_ms: u64) -> Result<()> {
        let (lifted, landed) = leap_with_lift(field, &self.z, y_c, self.target, &leap_cfg)?;
        let leap = self.blend_done + self.inject_done;
        self.trajectory.entries.push(TrajectoryEntry {
            leap,
            phase: Phase::Lift,
            t: 0.0,
            z: to_f64(&lifted),
            label: Some(y_c),
            wall_ms,
        });
        self.trajectory.entries.push(TrajectoryEntry {
            leap,
            phase: Phase::Land,
            t: 1.0,
            z: to_f64(&landed),
            label: None,
            wall_ms,
        });
        self.z = landed;
        self.awaiting = true;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeapOutcome<T> {
    Done { x_ce: Vec<T>, run: LeapRun<T> },
    /// The oracle had no answer; resume with [`drive`] once it does.
    Suspended(LeapRun<T>),
}

/// Answers queries from `oracle` until the run finishes or the oracle
/// suspends. `clock` supplies the timestamp stored on new entries.
pub fn drive<T, C, O, F>(
    run: &mut LeapRun<T>,
    codec: &C,
    oracle: &O,
    field: &F,
    mut clock: impl FnMut() -> u64,
) -> Result<RunStatus>
where
    T: Scalar,
    C: GenerativeCodec<T> + ?Sized,
    O: ClassifierOracle<T> + ?Sized,
    F: VelocityField<T> + ?Sized,
{
    while let Some(z) = run.pending_latent() {
        let x = codec.decode_one(z)?;
        let label = match oracle.predict(&x) {
            Ok(label) => label,
            Err(OracleError::Suspended) => return Ok(RunStatus::AwaitingLabel),
            Err(OracleError::Model(e)) => return Err(e),
            Err(e) => return Err(Error::Oracle(e.to_string())),
        };
        run.supply_label(label, field, clock())?;
    }
    Ok(RunStatus::Done)
}

/// Encodes `x`, runs blending then injection leaps against `oracle`, and
/// decodes the result. Entry timestamps are zero.
pub fn leapfactual<T, C, O, F>(
    x: &[T],
    target: usize,
    codec: &C,
    oracle: &O,
    field: &F,
    config: &LeapFactualConfig,
) -> Result<LeapOutcome<T>>
where
    T: Scalar,
    C: GenerativeCodec<T> + ?Sized,
    O: ClassifierOracle<T> + ?Sized,
    F: VelocityField<T> + ?Sized,
{
    if codec.latent_dim() != field.latent_dim() || oracle.n_classes() != field.n_classes() {
        return Err(Error::shape(
            "leapfactual",
            format!("latent {} / {} classes", field.latent_dim(), field.n_classes()),
            format!("latent {} / {} classes", codec.latent_dim(), oracle.n_classes()),
        ));
    }
    let z = codec.encode_one(x)?;
    let run = LeapRun::new(z, target, field.n_classes(), config.clone())?;
    resume(run, codec, oracle, field)
}

/// Continues a suspended run.
pub fn resume<T, C, O, F>(mut run: LeapRun<T>, codec: &C, oracle: &O, field: &F) -> Result<LeapOutcome<T>>
where
    T: Scalar,
    C: GenerativeCodec<T> + ?Sized,
    O: ClassifierOracle<T> + ?Sized,
    F: VelocityField<T> + ?Sized,
{
    match drive(&mut run, codec, oracle, field, || 0)? {
        RunStatus::Done => Ok(LeapOutcome::Done {
            x_ce: codec.decode_one(run.latent())?,
            run,
        }),
        RunStatus::AwaitingLabel => Ok(LeapOutcome::Suspended(run)),
    }
}

/// Result of [`leapfactual_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLeapOutcome<T> {
    pub z: Matrix<T>,
    /// Final oracle label per row.
    pub labels: Vec<usize>,
    pub source_labels: Vec<usize>,
    pub blend_leaps: Vec<usize>,
    pub inject_leaps: Vec<usize>,
}

/// Row-parallel counterfactual search with the same per-row semantics as
/// [`LeapRun`]: a row stops blending once its label equals its target (when
/// early stopping is on), and every row then receives all injection leaps.
/// `label_fn` labels a batch of latents (decode + classify).
pub fn leapfactual_batch<T, F>(
    z: &Matrix<T>,
    targets: &[usize],
    field: &F,
    config: &LeapFactualConfig,
    mut label_fn: impl FnMut(&Matrix<T>) -> Result<Vec<usize>>,
) -> Result<BatchLeapOutcome<T>>
where
    T: Scalar,
    F: VelocityField<T> + ?Sized,
{
    config.validate()?;
    if targets.len() != z.rows() {
        return Err(Error::shape("leapfactual_batch", z.rows(), targets.len()));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= field.n_classes()) {
        return Err(Error::LabelRange {
            label: bad,
            n_classes: field.n_classes(),
        });
    }
    let mut z = z.clone();
    let mut labels = label_fn(&z)?;
    let source_labels = labels.clone();
    let mut blend_leaps = vec![0; z.rows()];
    let blend = config.blend_leap();
    for _ in 0..config.n_blend {
        let active: Vec<usize> = (0..z.rows())
            .filter(|&i| !(config.early_stop && labels[i] == targets[i]))
            .collect();
        if active.is_empty() {
            break;
        }
        let y_c: Vec<usize> = active.iter().map(|&i| labels[i]).collect();
        let y_t: Vec<usize> = active.iter().map(|&i| targets[i]).collect();
        let moved = leap_batch(field, &z.select_rows(&active), &y_c, &y_t, &blend)?;
        let new_labels = label_fn(&moved)?;
        for (k, &i) in active.iter().enumerate() {
            z.row_mut(i).copy_from_slice(moved.row(k));
            labels[i] = new_labels[k];
            blend_leaps[i] += 1;
        }
    }
    let inject = config.inject_leap();
    for _ in 0..config.n_inject {
        z = leap_batch(field, &z, &labels, targets, &inject)?;
        labels = label_fn(&z)?;
    }
    Ok(BatchLeapOutcome {
        z,
        labels,
        source_labels,
        blend_leaps,
        inject_leaps: vec![config.n_inject; targets.len()],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendDiagnostics {
    pub alpha_estimate: f64,
    pub labels: Vec<usize>,
}

/// Coefficient `α` of the least-squares fit `z − r ≈ α c_s + (1 − α) c_t`.
pub fn blend_alpha(z: &[f64], residual: &[f64], c_source: &[f64], c_target: &[f64]) -> Result<f64> {
    let n = z.len();
    if residual.len() != n || c_source.len() != n || c_target.len() != n {
        return Err(Error::shape("blend_alpha", n, residual.len()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let axis = c_source[i] - c_target[i];
        num += (z[i] - residual[i] - c_target[i]) * axis;
        den += axis * axis;
    }
    if den == 0.0 {
        return Err(Error::UndefinedAlpha);
    }
    Ok(num / den)
}

/// `α` after every landing, with the residual taken from the source entry.
pub fn alpha_series(trajectory: &Trajectory, c_source: &[f64], c_target: &[f64]) -> Result<Vec<f64>> {
    let source = trajectory.source().ok_or(Error::Empty("trajectory"))?;
    let residual: Vec<f64> = source.z.iter().zip(c_source).map(|(z, c)| z - c).collect();
    trajectory
        .landings()
        .map(|e| blend_alpha(&e.z, &residual, c_source, c_target))
        .collect()
}

/// Measures where the final point sits between the source and target centers.
pub fn measure_blend(trajectory: &Trajectory, c_source: &[f64], c_target: &[f64]) -> Result<BlendDiagnostics> {
    let source = trajectory.source().ok_or(Error::Empty("trajectory"))?;
    let last = trajectory.landings().last().unwrap_or(source);
    let residual: Vec<f64> = source.z.iter().zip(c_source).map(|(z, c)| z - c).collect();
    Ok(BlendDiagnostics {
        alpha_estimate: blend_alpha(&last.z, &residual, c_source, c_target)?,
        labels: trajectory.label_sequence(),
    })
}
