//! Deterministic kinematic simulation of a ground filming robot.
//!
//! The robot is a unicycle carrying a pan/tilt camera at a fixed height. It
//! observes a static upright rectangular subject standing on the ground plane.
//! The camera frame is 120 × 80 units, so the framing target is the exact
//! centre (60, 40) and the subject area is reported in percent of the frame.
//!
//! The core API is functional ([`reset`] / [`step`] map states to new
//! states); [`Sim`] wraps it behind the [`Environment`] trait used by the
//! trainers, the teleop service and the twin environment.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rewards::StepDeltas;

pub const FRAME_WIDTH: f64 = 120.0;
pub const FRAME_HEIGHT: f64 = 80.0;
pub const FRAME_CENTER_X: f64 = FRAME_WIDTH / 2.0;
pub const FRAME_CENTER_Y: f64 = FRAME_HEIGHT / 2.0;

/// Length of the observation vector for both tasks.
pub const OBS_DIM: usize = 10;

/// Feature names, in order. Hashed into dataset manifests.
pub const OBS_FEATURES: [&str; OBS_DIM] = [
    "area_norm",
    "cx_norm",
    "cy_norm",
    "d_area",
    "d_cx",
    "d_cy",
    "prev_throttle",
    "prev_steering",
    "prev_pan_rate",
    "prev_tilt_rate",
];

// Observation scales: per-step changes are divided by these before clamping.
const D_AREA_SCALE: f64 = 0.5;
const D_CX_SCALE: f64 = 6.0;
const D_CY_SCALE: f64 = 4.0;

const MIN_DEPTH: f64 = 1e-6;

/// Wraps an angle into (-π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Base,
    Full,
}

impl Task {
    pub fn action_dim(self) -> usize {
        match self {
            Task::Base => 2,
            Task::Full => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Base => "base",
            Task::Full => "full",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Task::Base),
            "full" => Ok(Task::Full),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

/// The five canonical start positions, P1 (left) to P5 (right).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StartPosition {
    P1,
    P2,
    P3,
    P4,
    P5,
}

impl StartPosition {
    pub const ALL: [StartPosition; 5] = [
        StartPosition::P1,
        StartPosition::P2,
        StartPosition::P3,
        StartPosition::P4,
        StartPosition::P5,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Lateral offset in units of the configured span: +1 is far left.
    fn lateral_fraction(self) -> f64 {
        match self {
            StartPosition::P1 => 1.0,
            StartPosition::P2 => 0.5,
            StartPosition::P3 => 0.0,
            StartPosition::P4 => -0.5,
            StartPosition::P5 => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StartPosition::P1 => "P1",
            StartPosition::P2 => "P2",
            StartPosition::P3 => "P3",
            StartPosition::P4 => "P4",
            StartPosition::P5 => "P5",
        }
    }
}

impl fmt::Display for StartPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StartPosition {
    type Err = Error;

    /// Accepts `P1`..`P5` and the canonical aliases `left`, `centre`/`center`, `right`.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" | "left" => Ok(StartPosition::P1),
            "p2" => Ok(StartPosition::P2),
            "p3" | "centre" | "center" => Ok(StartPosition::P3),
            "p4" => Ok(StartPosition::P4),
            "p5" | "right" => Ok(StartPosition::P5),
            other => Err(Error::Config(format!("unknown start position '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraState {
    /// Radians relative to the robot heading, positive to the left.
    pub pan: f64,
    /// Radians relative to horizontal, positive up.
    pub tilt: f64,
    pub height: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectSpec {
    /// Ground position of the subject's centre line.
    pub position: [f64; 2],
    pub width: f64,
    pub height: f64,
}

impl Default for SubjectSpec {
    fn default() -> Self {
        SubjectSpec {
            position: [0.0, 0.0],
            width: 0.5,
            height: 1.7,
        }
    }
}

/// How an episode chooses its start pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Start {
    Preset(StartPosition),
    /// Uniformly one of P1..P5, drawn from the episode seed.
    AnyPreset,
    Pose(Pose),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StartRepr {
    Name(String),
    Pose(Pose),
}

impl Serialize for Start {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Start::Preset(p) => StartRepr::Name(p.name().to_string()).serialize(s),
            Start::AnyPreset => StartRepr::Name("any".to_string()).serialize(s),
            Start::Pose(p) => StartRepr::Pose(*p).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Start {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match StartRepr::deserialize(d)? {
            StartRepr::Name(name) if name.eq_ignore_ascii_case("any") => Ok(Start::AnyPreset),
            StartRepr::Name(name) => name
                .parse()
                .map(Start::Preset)
                .map_err(serde::de::Error::custom),
            StartRepr::Pose(p) => Ok(Start::Pose(p)),
        }
    }
}

impl FromStr for Start {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("any") {
            Ok(Start::AnyPreset)
        } else {
            s.parse().map(Start::Preset)
        }
    }
}

/// Commanded action; every component lies in [-1, 1].
///
/// Base-task actions carry zero camera rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub throttle: f64,
    pub steering: f64,
    pub pan_rate: f64,
    pub tilt_rate: f64,
}

impl Action {
    pub fn zero() -> Self {
        Action::default()
    }

    /// Builds an action from a policy output vector, clamping to [-1, 1].
    pub fn from_slice(task: Task, values: &[f64]) -> Result<Self> {
        if values.len() != task.action_dim() {
            return Err(Error::Dimension {
                expected: task.action_dim(),
                got: values.len(),
                context: "action",
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        let c = |v: f64| v.clamp(-1.0, 1.0);
        Ok(match task {
            Task::Base => Action {
                throttle: c(values[0]),
                steering: c(values[1]),
                pan_rate: 0.0,
                tilt_rate: 0.0,
            },
            Task::Full => Action {
                throttle: c(values[0]),
                steering: c(values[1]),
                pan_rate: c(values[2]),
                tilt_rate: c(values[3]),
            },
        })
    }

    pub fn to_vec(&self, task: Task) -> Vec<f64> {
        match task {
            Task::Base => vec![self.throttle, self.steering],
            Task::Full => vec![self.throttle, self.steering, self.pan_rate, self.tilt_rate],
        }
    }

    fn is_finite(&self) -> bool {
        self.throttle.is_finite()
            && self.steering.is_finite()
            && self.pan_rate.is_finite()
            && self.tilt_rate.is_finite()
    }

    fn clamped(&self, task: Task) -> Self {
        let c = |v: f64| v.clamp(-1.0, 1.0);
        let full = task == Task::Full;
        Action {
            throttle: c(self.throttle),
            steering: c(self.steering),
            pan_rate: if full { c(self.pan_rate) } else { 0.0 },
            tilt_rate: if full { c(self.tilt_rate) } else { 0.0 },
        }
    }
}

/// Subject bounding box in frame units; `area` is percent of the frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub area: f64,
}

impl BoundingBox {
    pub fn center_in_frame(&self) -> bool {
        (0.0..=FRAME_WIDTH).contains(&self.cx) && (0.0..=FRAME_HEIGHT).contains(&self.cy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Running,
    Success,
    Truncated,
    SubjectLost,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        self != Status::Running
    }

    pub fn name(self) -> &'static str {
        match self {
            Status::Running => "Running",
            Status::Success => "Success",
            Status::Truncated => "Truncated",
            Status::SubjectLost => "SubjectLost",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub task: Task,
    pub start: Start,
    pub max_steps: usize,
    pub dt: f64,
    /// Success threshold on subject area, percent of frame.
    pub area_target: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub pan_rate_max: f64,
    pub tilt_rate_max: f64,
    pub pan_max: f64,
    pub tilt_max: f64,
    /// Half-width of the uniform jitter added to x, y (m) and heading (rad) at reset.
    pub start_noise: f64,
    /// Time constant of the first-order smoothing on throttle and steering; 0 disables it.
    pub actuator_tau: f64,
    pub camera_height: f64,
    pub hfov_deg: f64,
    pub subject: SubjectSpec,
    /// Distance of the P1..P5 arc from the subject.
    pub start_radius: f64,
    /// Lateral offset of P1 (and, mirrored, P5) from the subject axis.
    pub start_span: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            task: Task::Base,
            start: Start::AnyPreset,
            max_steps: 1500,
            dt: 1.0 / 30.0,
            area_target: 10.0,
            v_max: 1.5,
            omega_max: 1.5,
            pan_rate_max: 1.0,
            tilt_rate_max: 0.5,
            pan_max: 1.0,
            tilt_max: 0.6,
            start_noise: 0.1,
            actuator_tau: 0.1,
            camera_height: 1.2,
            hfov_deg: 90.0,
            subject: SubjectSpec::default(),
            start_radius: 4.0,
            start_span: 2.0,
        }
    }
}

impl EpisodeConfig {
    pub fn for_task(task: Task) -> Self {
        EpisodeConfig {
            task,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.dt,
            self.area_target,
            self.v_max,
            self.omega_max,
            self.pan_rate_max,
            self.tilt_rate_max,
            self.pan_max,
            self.tilt_max,
            self.start_noise,
            self.actuator_tau,
            self.camera_height,
            self.hfov_deg,
            self.subject.position[0],
            self.subject.position[1],
            self.subject.width,
            self.subject.height,
            self.start_radius,
            self.start_span,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("episode config contains non-finite values".into()));
        }
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.max_steps < 1 {
            return bad("max_steps must be >= 1");
        }
        if self.dt <= 0.0 {
            return bad("dt must be > 0");
        }
        if self.area_target <= 0.0 {
            return bad("area_target must be > 0");
        }
        if self.subject.width <= 0.0 || self.subject.height <= 0.0 {
            return bad("subject width and height must be > 0");
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return bad("hfov_deg must lie in (0, 180)");
        }
        if self.v_max < 0.0
            || self.omega_max < 0.0
            || self.pan_rate_max < 0.0
            || self.tilt_rate_max < 0.0
            || self.pan_max < 0.0
            || self.tilt_max < 0.0
            || self.start_noise < 0.0
            || self.actuator_tau < 0.0
        {
            return bad("actuator limits, start_noise and actuator_tau must be >= 0");
        }
        if self.start_span.abs() > self.start_radius {
            return bad("start_span must not exceed start_radius");
        }
        Ok(())
    }

    pub fn hfov(&self) -> f64 {
        self.hfov_deg.to_radians()
    }

    /// Nominal (jitter-free) pose of a preset start position.
    ///
    /// Presets sit on an arc of `start_radius` around the subject, spread
    /// laterally over ±`start_span`, all heading along +x towards the
    /// subject's plane so off-centre starts see the subject off-axis.
    pub fn preset_pose(&self, position: StartPosition) -> Pose {
        let lateral = position.lateral_fraction() * self.start_span;
        let back = (self.start_radius * self.start_radius - lateral * lateral).sqrt();
        Pose::new(
            self.subject.position[0] - back,
            self.subject.position[1] + lateral,
            0.0,
        )
    }

    fn smoothing_alpha(&self, dt: f64) -> f64 {
        if self.actuator_tau <= 0.0 {
            1.0
        } else {
            1.0 - (-dt / self.actuator_tau).exp()
        }
    }
}

/// Ten normalized framing features, each clamped to [-1, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; OBS_DIM] = values.try_into().map_err(|_| Error::Dimension {
            expected: OBS_DIM,
            got: values.len(),
            context: "observation",
        })?;
        Ok(Observation(arr))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub pose: Pose,
    pub camera: CameraState,
    pub subject: SubjectSpec,
    pub step: usize,
    pub status: Status,
    /// Realized preset, if the episode started from one.
    pub start_position: Option<StartPosition>,
    pub prev_action: Action,
    pub prev_bbox: BoundingBox,
    /// Smoothed throttle and steering commands.
    pub throttle_cmd: f64,
    pub steering_cmd: f64,
    /// Commanded heading, pan and tilt rates (rad/s) from the previous step.
    pub rates: [f64; 3],
    pub rng: ChaCha8Rng,
}

/// Result of one simulation step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: SimState,
    pub observation: Observation,
    pub status: Status,
    pub deltas: StepDeltas,
}

/// Pinhole projection of the subject's upright rectangle.
///
/// Returns `None` when any corner lies behind the image plane.
pub fn project_subject(
    pose: &Pose,
    camera: &CameraState,
    subject: &SubjectSpec,
    hfov: f64,
) -> Option<BoundingBox> {
    let focal = FRAME_CENTER_X / (hfov / 2.0).tan();
    let yaw = pose.heading + camera.pan;
    let (sy, cy) = yaw.sin_cos();
    let (st, ct) = camera.tilt.sin_cos();
    let forward = [cy * ct, sy * ct, st];
    let right = [sy, -cy, 0.0];
    let up = [-cy * st, -sy * st, ct];
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];

    let half = subject.width / 2.0;
    let mut x_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y_range = (f64::INFINITY, f64::NEG_INFINITY);
    for (dy, z) in [(-half, 0.0), (half, 0.0), (-half, subject.height), (half, subject.height)] {
        let d = [
            subject.position[0] - pose.x,
            subject.position[1] + dy - pose.y,
            z - camera.height,
        ];
        let depth = dot(&d, &forward);
        if depth <= MIN_DEPTH {
            return None;
        }
        let xn = dot(&d, &right) / depth;
        let yn = dot(&d, &up) / depth;
        x_range = (x_range.0.min(xn), x_range.1.max(xn));
        y_range = (y_range.0.min(yn), y_range.1.max(yn));
    }
    let width = focal * (x_range.1 - x_range.0);
    let height = focal * (y_range.1 - y_range.0);
    Some(BoundingBox {
        cx: FRAME_CENTER_X + focal * (x_range.0 + x_range.1) / 2.0,
        cy: FRAME_CENTER_Y - focal * (y_range.0 + y_range.1) / 2.0,
        area: 100.0 * width * height / (FRAME_WIDTH * FRAME_HEIGHT),
    })
}

fn observe(
    cfg: &EpisodeConfig,
    bbox: &BoundingBox,
    prev_bbox: &BoundingBox,
    prev_action: &Action,
) -> Observation {
    let c = |v: f64| v.clamp(-1.0, 1.0);
    let full = cfg.task == Task::Full;
    Observation([
        c(2.0 * bbox.area / cfg.area_target - 1.0),
        c((bbox.cx - FRAME_CENTER_X) / FRAME_CENTER_X),
        c((bbox.cy - FRAME_CENTER_Y) / FRAME_CENTER_Y),
        c((bbox.area - prev_bbox.area) / D_AREA_SCALE),
        c((bbox.cx - prev_bbox.cx) / D_CX_SCALE),
        c((bbox.cy - prev_bbox.cy) / D_CY_SCALE),
        prev_action.throttle,
        prev_action.steering,
        if full { prev_action.pan_rate } else { 0.0 },
        if full { prev_action.tilt_rate } else { 0.0 },
    ])
}

/// Starts an episode: places the robot at the configured start plus seeded jitter.
pub fn reset(cfg: &EpisodeConfig, seed: u64) -> Result<(SimState, Observation)> {
    reset_with_offset(cfg, seed, Pose { x: 0.0, y: 0.0, heading: 0.0 })
}

/// Like [`reset`], with an extra offset added to the jittered start pose.
pub fn reset_with_offset(
    cfg: &EpisodeConfig,
    seed: u64,
    offset: Pose,
) -> Result<(SimState, Observation)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Always consume the preset draw so a fixed preset and AnyPreset share a jitter stream.
    let drawn = StartPosition::ALL[rng.random_range(0..StartPosition::ALL.len())];
    let (base, start_position) = match cfg.start {
        Start::Preset(p) => (cfg.preset_pose(p), Some(p)),
        Start::AnyPreset => (cfg.preset_pose(drawn), Some(drawn)),
        Start::Pose(p) => (p, None),
    };
    let mut jitter = || cfg.start_noise * (2.0 * rng.random::<f64>() - 1.0);
    let (jx, jy, jh) = (jitter(), jitter(), jitter());
    let pose = Pose::new(
        base.x + jx + offset.x,
        base.y + jy + offset.y,
        base.heading + jh + offset.heading,
    );
    if !(pose.x.is_finite() && pose.y.is_finite() && pose.heading.is_finite()) {
        return Err(Error::Config("start pose is not finite".into()));
    }
    let camera = CameraState {
        pan: 0.0,
        tilt: 0.0,
        height: cfg.camera_height,
    };
    let bbox = project_subject(&pose, &camera, &cfg.subject, cfg.hfov())
        .filter(BoundingBox::center_in_frame)
        .ok_or_else(|| Error::Config("subject not visible from the start pose".into()))?;
    let prev_action = Action::zero();
    let obs = observe(cfg, &bbox, &bbox, &prev_action);
    let state = SimState {
        pose,
        camera,
        subject: cfg.subject,
        step: 0,
        status: Status::Running,
        start_position,
        prev_action,
        prev_bbox: bbox,
        throttle_cmd: 0.0,
        steering_cmd: 0.0,
        rates: [0.0; 3],
        rng,
    };
    Ok((state, obs))
}

/// Advances the episode by one step of `cfg.dt`.
pub fn step(cfg: &EpisodeConfig, state: &SimState, action: &Action) -> Result<StepOutcome> {
    step_with_dt(cfg, state, action, cfg.dt)
}

/// Advances the episode by one step of an explicit duration.
pub fn step_with_dt(
    cfg: &EpisodeConfig,
    state: &SimState,
    action: &Action,
    dt: f64,
) -> Result<StepOutcome> {
    if !action.is_finite() {
        return Err(Error::NonFinite("action"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config("step duration must be positive".into()));
    }
    if state.status.is_terminal() || state.step >= cfg.max_steps {
        return Err(Error::EpisodeOver);
    }
    let action = action.clamped(cfg.task);
    let mut next = state.clone();

    let alpha = cfg.smoothing_alpha(dt);
    next.throttle_cmd += alpha * (action.throttle - next.throttle_cmd);
    next.steering_cmd += alpha * (action.steering - next.steering_cmd);

    let v = cfg.v_max * next.throttle_cmd;
    let w = cfg.omega_max * next.steering_cmd;
    let h = state.pose.heading;
    let (x, y) = if w.abs() < 1e-12 {
        (
            state.pose.x + v * dt * h.cos(),
            state.pose.y + v * dt * h.sin(),
        )
    } else {
        let r = v / w;
        let h1 = h + w * dt;
        (
            state.pose.x + r * (h1.sin() - h.sin()),
            state.pose.y - r * (h1.cos() - h.cos()),
        )
    };
    next.pose = Pose::new(x, y, h + w * dt);

    let pan_rate = cfg.pan_rate_max * action.pan_rate;
    let tilt_rate = cfg.tilt_rate_max * action.tilt_rate;
    next.camera.pan = (state.camera.pan + pan_rate * dt).clamp(-cfg.pan_max, cfg.pan_max);
    next.camera.tilt = (state.camera.tilt + tilt_rate * dt).clamp(-cfg.tilt_max, cfg.tilt_max);

    // A subject whose centre has left the frame counts as unseen: no area credit.
    let projected =
        project_subject(&next.pose, &next.camera, &state.subject, cfg.hfov()).filter(BoundingBox::center_in_frame);
    let bbox = projected.unwrap_or(state.prev_bbox);
    let rates = [w, pan_rate, tilt_rate];
    let deltas = StepDeltas {
        d_area: if projected.is_some() {
            bbox.area - state.prev_bbox.area
        } else {
            0.0
        },
        d_steer_rate: rates[0] - state.rates[0],
        d_pan_rate: rates[1] - state.rates[1],
        d_tilt_rate: rates[2] - state.rates[2],
    };

    next.step += 1;
    next.status = match projected {
        Some(b) if b.area >= cfg.area_target => Status::Success,
        Some(_) if next.step >= cfg.max_steps => Status::Truncated,
        Some(_) => Status::Running,
        None => Status::SubjectLost,
    };

    let observation = observe(cfg, &bbox, &state.prev_bbox, &action);
    next.prev_action = action;
    next.prev_bbox = bbox;
    next.rates = rates;
    Ok(StepOutcome {
        status: next.status,
        state: next,
        observation,
        deltas,
    })
}

/// Common interface of the simulator and its perturbed twin.
pub trait Environment {
    fn config(&self) -> &EpisodeConfig;
    fn reset(&mut self, seed: u64) -> Result<Observation>;
    fn step(&mut self, action: &Action) -> Result<StepOutcome>;
    fn state(&self) -> &SimState;

    fn task(&self) -> Task {
        self.config().task
    }
    fn bbox(&self) -> BoundingBox {
        self.state().prev_bbox
    }
}

/// Single-owner simulator instance.
#[derive(Clone, Debug)]
pub struct Sim {
    config: EpisodeConfig,
    state: SimState,
    observation: Observation,
}

impl Sim {
    pub fn new(config: EpisodeConfig, seed: u64) -> Result<Self> {
        let (state, observation) = reset(&config, seed)?;
        Ok(Sim {
            config,
            state,
            observation,
        })
    }

    pub fn observation(&self) -> Observation {
        self.observation
    }

    /// Resets with an additional offset on the start pose.
    pub fn reset_offset(&mut self, seed: u64, offset: Pose) -> Result<Observation> {
        let (state, obs) = reset_with_offset(&self.config, seed, offset)?;
        self.state = state;
        self.observation = obs;
        Ok(obs)
    }

    pub fn step_dt(&mut self, action: &Action, dt: f64) -> Result<StepOutcome> {
        let out = step_with_dt(&self.config, &self.state, action, dt)?;
        self.state = out.state.clone();
        self.observation = out.observation;
        Ok(out)
    }
}

impl Environment for Sim {
    fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    fn reset(&mut self, seed: u64) -> Result<Observation> {
        let (state, obs) = reset(&self.config, seed)?;
        self.state = state;
        self.observation = obs;
        Ok(obs)
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        let dt = self.config.dt;
        self.step_dt(action, dt)
    }

    fn state(&self) -> &SimState {
        &self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_noise(start: StartPosition) -> EpisodeConfig {
        EpisodeConfig {
            start: Start::Preset(start),
            start_noise: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn wrap_angle_range() {
        for a in [-10.0, -PI, -PI + 1e-12, 0.0, PI, PI + 1e-9, 3.0 * PI, 100.0] {
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI, "{a} -> {w}");
        }
        assert_eq!(wrap_angle(-PI), PI);
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = EpisodeConfig {
            start: Start::Preset(StartPosition::P3),
            ..Default::default()
        };
        let a = reset(&cfg, 7).unwrap();
        let b = reset(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = reset(&cfg, 8).unwrap();
        assert_ne!(a.0.pose, c.0.pose);
    }

    #[test]
    fn centre_start_is_centred() {
        let (state, obs) = reset(&no_noise(StartPosition::P3), 0).unwrap();
        assert_eq!(state.prev_bbox.cx, 60.0);
        assert_eq!(obs.0[1], 0.0);
        assert_eq!(&obs.0[3..], &[0.0; 7]);
    }

    #[test]
    fn any_preset_matches_explicit_preset_stream() {
        let any = EpisodeConfig::default();
        for seed in 0..20 {
            let (s, _) = reset(&any, seed).unwrap();
            let p = s.start_position.unwrap();
            let fixed = EpisodeConfig {
                start: Start::Preset(p),
                ..Default::default()
            };
            let (t, _) = reset(&fixed, seed).unwrap();
            assert_eq!(s.pose, t.pose);
        }
    }

    #[test]
    fn presets_span_left_to_right() {
        let cfg = EpisodeConfig::default();
        let ys: Vec<f64> = StartPosition::ALL.iter().map(|&p| cfg.preset_pose(p).y).collect();
        assert!(ys.windows(2).all(|w| w[0] > w[1]));
        for p in StartPosition::ALL {
            let pose = cfg.preset_pose(p);
            let r = (pose.x * pose.x + pose.y * pose.y).sqrt();
            assert!((r - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reset_rejects_invisible_subject() {
        let cfg = EpisodeConfig {
            start: Start::Pose(Pose::new(-4.0, 0.0, PI)),
            ..Default::default()
        };
        assert!(matches!(reset(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn null_action_keeps_pose() {
        let cfg = no_noise(StartPosition::P2);
        let (s, _) = reset(&cfg, 0).unwrap();
        let out = step(&cfg, &s, &Action::zero()).unwrap();
        assert_eq!(out.state.pose, s.pose);
        assert_eq!(out.state.prev_bbox.area, s.prev_bbox.area);
        assert_eq!(out.deltas.d_area, 0.0);
    }

    #[test]
    fn straight_advance_without_smoothing() {
        let cfg = EpisodeConfig {
            actuator_tau: 0.0,
            ..no_noise(StartPosition::P3)
        };
        let (s, _) = reset(&cfg, 0).unwrap();
        let a = Action {
            throttle: 1.0,
            ..Action::zero()
        };
        let out = step(&cfg, &s, &a).unwrap();
        assert!((out.state.pose.x - s.pose.x - 0.05).abs() < 1e-12);
        assert_eq!(out.state.pose.y, s.pose.y);
    }

    #[test]
    fn arc_step_matches_fine_substep_integration() {
        let cfg = EpisodeConfig {
            actuator_tau: 0.0,
            ..no_noise(StartPosition::P2)
        };
        let (s, _) = reset(&cfg, 0).unwrap();
        for (throttle, steering) in [(1.0, 0.7), (0.3, -1.0), (-0.5, 0.2)] {
            let a = Action {
                throttle,
                steering,
                ..Action::zero()
            };
            let out = step(&cfg, &s, &a).unwrap();
            let (v, w) = (cfg.v_max * throttle, cfg.omega_max * steering);
            let n = 10_000;
            let h = cfg.dt / n as f64;
            let (mut x, mut y, mut th) = (s.pose.x, s.pose.y, s.pose.heading);
            for _ in 0..n {
                let mid = th + 0.5 * w * h;
                x += v * h * mid.cos();
                y += v * h * mid.sin();
                th += w * h;
            }
            assert!((out.state.pose.x - x).abs() < 1e-9, "x {} vs {x}", out.state.pose.x);
            assert!((out.state.pose.y - y).abs() < 1e-9, "y {} vs {y}", out.state.pose.y);
            assert!((out.state.pose.heading - th).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_action_rejected() {
        let cfg = no_noise(StartPosition::P3);
        let (s, _) = reset(&cfg, 0).unwrap();
        let a = Action {
            throttle: f64::NAN,
            ..Action::zero()
        };
        assert!(matches!(step(&cfg, &s, &a), Err(Error::NonFinite(_))));
        assert!(Action::from_slice(Task::Base, &[0.0, f64::INFINITY]).is_err());
        assert!(Action::from_slice(Task::Full, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn truncates_at_max_steps() {
        let cfg = EpisodeConfig {
            max_steps: 3,
            ..no_noise(StartPosition::P3)
        };
        let mut sim = Sim::new(cfg, 0).unwrap();
        let mut last = Status::Running;
        for _ in 0..3 {
            last = sim.step(&Action::zero()).unwrap().status;
        }
        assert_eq!(last, Status::Truncated);
        assert!(matches!(sim.step(&Action::zero()), Err(Error::EpisodeOver)));
    }

    #[test]
    fn hard_turn_loses_subject() {
        let cfg = no_noise(StartPosition::P1);
        let mut sim = Sim::new(cfg, 0).unwrap();
        let a = Action {
            throttle: 0.0,
            steering: -1.0,
            ..Action::zero()
        };
        let mut status = Status::Running;
        for _ in 0..200 {
            status = sim.step(&a).unwrap().status;
            if status.is_terminal() {
                break;
            }
        }
        assert_eq!(status, Status::SubjectLost);
    }

    #[test]
    fn camera_angles_are_clamped() {
        let cfg = EpisodeConfig {
            task: Task::Full,
            ..no_noise(StartPosition::P3)
        };
        let mut sim = Sim::new(cfg.clone(), 0).unwrap();
        let a = Action {
            pan_rate: 1.0,
            tilt_rate: 1.0,
            ..Action::zero()
        };
        for _ in 0..100 {
            if sim.step(&a).unwrap().status.is_terminal() {
                break;
            }
            assert!(sim.state().camera.pan <= cfg.pan_max);
            assert!(sim.state().camera.tilt <= cfg.tilt_max);
        }
    }

    #[test]
    fn base_task_ignores_camera_rates() {
        let cfg = no_noise(StartPosition::P3);
        let (s, _) = reset(&cfg, 0).unwrap();
        let a = Action {
            pan_rate: 1.0,
            tilt_rate: -1.0,
            ..Action::zero()
        };
        let out = step(&cfg, &s, &a).unwrap();
        assert_eq!(out.state.camera, s.camera);
        assert_eq!(out.observation.0[8], 0.0);
        assert_eq!(out.observation.0[9], 0.0);
    }

    #[test]
    fn start_serde_forms() {
        let s: Start = serde_json::from_str("\"P2\"").unwrap();
        assert_eq!(s, Start::Preset(StartPosition::P2));
        let s: Start = serde_json::from_str("\"any\"").unwrap();
        assert_eq!(s, Start::AnyPreset);
        let s: Start = serde_json::from_str(r#"{"x":-3.0,"y":0.5,"heading":0.1}"#).unwrap();
        assert!(matches!(s, Start::Pose(_)));
        let back: Start = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, back);
    }
}
