//! Evaluation and reporting.
//!
//! Trials are deterministic policy rollouts recorded per step. Running the
//! same seeds in the simulator and in a perturbed [`TwinEnv`] gives paired
//! outcomes whose rank correlation (SRCC) measures how well simulated results
//! predict the twin's.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::ArtifactHeader;
use crate::demos::Dataset;
use crate::error::{Error, Result};
use crate::nn::GaussianPolicy;
use crate::ppo::{eval_seed, mean_std};
use crate::rewards::{task_reward, RewardWeights};
use crate::sim::{
    Action, BoundingBox, EpisodeConfig, Environment, Observation, Pose, Sim, SimState, Start, StartPosition,
    Status, StepOutcome, FRAME_CENTER_X, FRAME_CENTER_Y, OBS_DIM,
};

pub const TRIAL_LOG_VERSION: u32 = 1;

/// Framing targets: area (percent of frame), x and y (frame units).
pub const TARGET_AREA: f64 = 10.0;
pub const TARGET_X: f64 = FRAME_CENTER_X;
pub const TARGET_Y: f64 = FRAME_CENTER_Y;

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
///
/// `Ok(None)` when either series is constant (undefined).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
            context: "spearman series",
        });
    }
    if a.len() < 2 {
        return Err(Error::Data("spearman needs at least two pairs".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("spearman input"));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - mean) * (y - mean);
        saa += (x - mean) * (x - mean);
        sbb += (y - mean) * (y - mean);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

/// Qualitative label for a correlation value.
pub fn srcc_band(rho: Option<f64>) -> &'static str {
    match rho {
        None => "undefined",
        Some(r) if r <= 0.0 => "negative",
        Some(r) if r < 0.4 => "weak",
        Some(r) if r < 0.6 => "moderate",
        Some(r) if r < 0.8 => "strong",
        Some(_) => "very strong",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Sim,
    Twin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub area: f64,
    pub cx: f64,
    pub cy: f64,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub policy: String,
    pub env: EnvKind,
    pub start: StartPosition,
    pub seed: u64,
    pub cumulative_reward: f64,
    pub final_bbox: BoundingBox,
    pub series: Vec<SeriesPoint>,
    pub status: Status,
}

impl TrialRecord {
    /// Cumulative reward equals the re-summed series and the last point is the final bbox.
    pub fn check(&self) -> Result<()> {
        let total: f64 = self.series.iter().map(|p| p.reward).sum();
        if total != self.cumulative_reward {
            return Err(Error::Data(format!(
                "trial {} seed {}: cumulative reward {} != series sum {total}",
                self.policy, self.seed, self.cumulative_reward
            )));
        }
        if let Some(last) = self.series.last() {
            if (last.area, last.cx, last.cy) != (self.final_bbox.area, self.final_bbox.cx, self.final_bbox.cy) {
                return Err(Error::Data("final bbox differs from the last series point".into()));
            }
        }
        Ok(())
    }
}

/// Perturbations applied by the twin environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinConfig {
    /// Multiplier on every action component.
    pub actuator_gain: f64,
    /// Extra multiplier on steering only.
    pub steering_gain: f64,
    /// Each step's dt is scaled by a uniform draw in `[1 − j, 1 + j]`.
    pub dt_jitter: f64,
    /// Gaussian noise added to observations seen by the policy.
    pub obs_noise: f64,
    /// Gaussian offset (metres) on the start position.
    pub start_offset: f64,
    pub seed: u64,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig {
            actuator_gain: 0.9,
            steering_gain: 1.0,
            dt_jitter: 0.1,
            obs_noise: 0.01,
            start_offset: 0.05,
            seed: 0x7_1111,
        }
    }
}

impl TwinConfig {
    /// A twin identical to the simulator.
    pub fn identity() -> Self {
        TwinConfig {
            actuator_gain: 1.0,
            steering_gain: 1.0,
            dt_jitter: 0.0,
            obs_noise: 0.0,
            start_offset: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.actuator_gain.is_finite()
            && self.steering_gain.is_finite()
            && (0.0..1.0).contains(&self.dt_jitter)
            && self.obs_noise.is_finite()
            && self.obs_noise >= 0.0
            && self.start_offset.is_finite()
            && self.start_offset >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("invalid twin perturbation settings".into()))
        }
    }
}

/// Perturbed copy of the simulator sharing its interface.
#[derive(Clone, Debug)]
pub struct TwinEnv {
    sim: Sim,
    twin: TwinConfig,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    offset: Normal<f64>,
}

impl TwinEnv {
    pub fn new(config: EpisodeConfig, twin: TwinConfig, seed: u64) -> Result<Self> {
        twin.validate()?;
        let mut env = TwinEnv {
            sim: Sim::new(config, seed)?,
            noise: Normal::new(0.0, twin.obs_noise).map_err(|e| Error::Config(e.to_string()))?,
            offset: Normal::new(0.0, twin.start_offset).map_err(|e| Error::Config(e.to_string()))?,
            rng: ChaCha8Rng::seed_from_u64(0),
            twin,
        };
        env.reset(seed)?;
        Ok(env)
    }

    pub fn twin_config(&self) -> &TwinConfig {
        &self.twin
    }

    fn noisy(&mut self, obs: Observation) -> Observation {
        if self.twin.obs_noise == 0.0 {
            return obs;
        }
        let mut v = obs.0;
        for x in v.iter_mut() {
            *x = (*x + self.noise.sample(&mut self.rng)).clamp(-1.0, 1.0);
        }
        Observation(v)
    }
}

impl Environment for TwinEnv {
    fn config(&self) -> &EpisodeConfig {
        self.sim.config()
    }

    fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ self.twin.seed.rotate_left(17));
        let offset = Pose {
            x: self.offset.sample(&mut self.rng),
            y: self.offset.sample(&mut self.rng),
            heading: 0.0,
        };
        let obs = self.sim.reset_offset(seed, offset)?;
        Ok(self.noisy(obs))
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        let g = self.twin.actuator_gain;
        let scaled = Action {
            throttle: (action.throttle * g).clamp(-1.0, 1.0),
            steering: (action.steering * g * self.twin.steering_gain).clamp(-1.0, 1.0),
            pan_rate: (action.pan_rate * g).clamp(-1.0, 1.0),
            tilt_rate: (action.tilt_rate * g).clamp(-1.0, 1.0),
        };
        let j = self.twin.dt_jitter;
        let scale = if j > 0.0 { self.rng.random_range(1.0 - j..=1.0 + j) } else { 1.0 };
        let dt = self.sim.config().dt * scale;
        let mut out = self.sim.step_dt(&scaled, dt)?;
        out.observation = self.noisy(out.observation);
        Ok(out)
    }

    fn state(&self) -> &SimState {
        self.sim.state()
    }
}

/// Runs one deterministic episode of `policy` and records it.
pub fn run_trial<E: Environment>(
    env: &mut E,
    policy: &GaussianPolicy,
    policy_id: &str,
    kind: EnvKind,
    start: StartPosition,
    seed: u64,
    weights: &RewardWeights,
) -> Result<TrialRecord> {
    if policy.obs_dim() != OBS_DIM || policy.act_dim() != env.task().action_dim() {
        return Err(Error::TaskMismatch {
            expected: env.task().to_string(),
            found: format!("policy with {} action components", policy.act_dim()),
        });
    }
    let task = env.task();
    let mut obs = env.reset(seed)?;
    let mut series = Vec::new();
    let mut total = 0.0;
    loop {
        let a = Action::from_slice(task, &policy.deterministic_action(obs.as_slice())?)?;
        let out = env.step(&a)?;
        let reward = task_reward(task, &out.deltas, weights);
        total += reward;
        let b = out.state.prev_bbox;
        series.push(SeriesPoint {
            area: b.area,
            cx: b.cx,
            cy: b.cy,
            reward,
        });
        obs = out.observation;
        if out.status.is_terminal() {
            return Ok(TrialRecord {
                policy: policy_id.to_string(),
                env: kind,
                start,
                seed,
                cumulative_reward: total,
                final_bbox: b,
                series,
                status: out.status,
            });
        }
    }
}

/// Seeds used for `episodes` trials from one start; shared by sim and twin.
pub fn trial_seeds(base_seed: u64, start: StartPosition, episodes: usize) -> Vec<u64> {
    (0..episodes)
        .map(|i| eval_seed(base_seed, start.index() * 1_000_000 + i))
        .collect()
}

/// Runs `episodes` trials per start in the simulator and, if given, in the twin with the same seeds.
#[allow(clippy::too_many_arguments)]
pub fn run_trials(
    policy: &GaussianPolicy,
    policy_id: &str,
    env_cfg: &EpisodeConfig,
    twin: Option<&TwinConfig>,
    starts: &[StartPosition],
    episodes: usize,
    weights: &RewardWeights,
    base_seed: u64,
) -> Result<Vec<TrialRecord>> {
    let mut trials = Vec::new();
    for &start in starts {
        let cfg = EpisodeConfig {
            start: Start::Preset(start),
            ..env_cfg.clone()
        };
        let seeds = trial_seeds(base_seed, start, episodes);
        let Some(&first) = seeds.first() else { continue };
        let mut sim = Sim::new(cfg.clone(), first)?;
        for &seed in &seeds {
            trials.push(run_trial(&mut sim, policy, policy_id, EnvKind::Sim, start, seed, weights)?);
        }
        if let Some(tc) = twin {
            let mut tw = TwinEnv::new(cfg.clone(), tc.clone(), first)?;
            for &seed in &seeds {
                trials.push(run_trial(&mut tw, policy, policy_id, EnvKind::Twin, start, seed, weights)?);
            }
        }
    }
    Ok(trials)
}

/// Trial-log JSONL: a header line, then one [`TrialRecord`] per line.
pub fn save_trial_log(path: &Path, header: &ArtifactHeader, trials: &[TrialRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for t in trials {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_trial_log(path: &Path) -> Result<(ArtifactHeader, Vec<TrialRecord>)> {
    let mut lines = BufReader::new(std::fs::File::open(path)?).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty trial log", path.display())))??;
    let header: ArtifactHeader = serde_json::from_str(&first)?;
    if header.format_version != TRIAL_LOG_VERSION {
        return Err(Error::Version {
            expected: TRIAL_LOG_VERSION,
            found: header.format_version,
        });
    }
    let mut trials = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            let t: TrialRecord = serde_json::from_str(&line)?;
            t.check()?;
            trials.push(t);
        }
    }
    Ok((header, trials))
}

/// Mean absolute final-framing deviations and their relative percentages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramingErrors {
    pub trials: usize,
    pub area: f64,
    pub x: f64,
    pub y: f64,
    pub area_pct: f64,
    pub x_pct: f64,
    pub y_pct: f64,
}

pub fn framing_errors(trials: &[&TrialRecord], targets: (f64, f64, f64)) -> Result<FramingErrors> {
    if trials.is_empty() {
        return Err(Error::Empty("trials"));
    }
    let n = trials.len() as f64;
    let mean = |f: &dyn Fn(&BoundingBox) -> f64| trials.iter().map(|t| f(&t.final_bbox)).sum::<f64>() / n;
    let area = mean(&|b| (b.area - targets.0).abs());
    let x = mean(&|b| (b.cx - targets.1).abs());
    let y = mean(&|b| (b.cy - targets.2).abs());
    Ok(FramingErrors {
        trials: trials.len(),
        area,
        x,
        y,
        area_pct: area / targets.0 * 100.0,
        x_pct: x / targets.1 * 100.0,
        y_pct: y / targets.2 * 100.0,
    })
}

/// `(base − ours) / base × 100`; undefined when the baseline error is zero.
pub fn improvement_pct(base: f64, ours: f64) -> Option<f64> {
    (base != 0.0).then(|| (base - ours) / base * 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let (mean, std) = mean_std(values);
        MeanStd { mean, std }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SrccSet {
    pub reward: Option<f64>,
    pub area: Option<f64>,
    pub x: Option<f64>,
    pub y: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub area: Option<f64>,
    pub x: Option<f64>,
    pub y: Option<f64>,
}

/// Per-environment summary of final outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcomes {
    pub reward: MeanStd,
    pub area: f64,
    pub x: f64,
    pub y: f64,
    pub success_rate: f64,
}

fn outcomes(trials: &[&TrialRecord]) -> Outcomes {
    let n = trials.len() as f64;
    let mean = |f: &dyn Fn(&TrialRecord) -> f64| trials.iter().map(|t| f(t)).sum::<f64>() / n;
    Outcomes {
        reward: MeanStd::of(trials.iter().map(|t| t.cumulative_reward)),
        area: mean(&|t| t.final_bbox.area),
        x: mean(&|t| t.final_bbox.cx),
        y: mean(&|t| t.final_bbox.cy),
        success_rate: mean(&|t| f64::from(u8::from(t.status == Status::Success))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: String,
    pub start: StartPosition,
    pub sim: Outcomes,
    pub twin: Option<Outcomes>,
    /// Sim-vs-twin rank correlation over paired seeds; empty without twin trials.
    pub srcc: SrccSet,
    /// Framing errors of the deployment-side trials (twin when present, else sim).
    pub errors: FramingErrors,
    pub improvement: Option<Improvement>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<ReportRow>,
    pub weights: Option<RewardWeights>,
}

/// SRCC per metric over trials paired by seed.
pub fn paired_srcc(sim: &[&TrialRecord], twin: &[&TrialRecord]) -> Result<SrccSet> {
    let by_seed: BTreeMap<u64, &TrialRecord> = twin.iter().map(|t| (t.seed, *t)).collect();
    let mut pairs = Vec::new();
    for s in sim {
        let t = by_seed
            .get(&s.seed)
            .ok_or_else(|| Error::Data(format!("twin trial for seed {} missing", s.seed)))?;
        pairs.push((*s, *t));
    }
    if pairs.len() != twin.len() {
        return Err(Error::Data("sim and twin trials are not paired one-to-one".into()));
    }
    if pairs.len() < 2 {
        return Ok(SrccSet::default());
    }
    let metric = |f: fn(&TrialRecord) -> f64| -> Result<Option<f64>> {
        let a: Vec<f64> = pairs.iter().map(|(s, _)| f(s)).collect();
        let b: Vec<f64> = pairs.iter().map(|(_, t)| f(t)).collect();
        spearman(&a, &b)
    };
    Ok(SrccSet {
        reward: metric(|t| t.cumulative_reward)?,
        area: metric(|t| t.final_bbox.area)?,
        x: metric(|t| t.final_bbox.cx)?,
        y: metric(|t| t.final_bbox.cy)?,
    })
}

/// Groups trials by (policy, start) and summarizes them; `baseline` adds improvement columns.
pub fn build_report(trials: &[TrialRecord], baseline: Option<&[TrialRecord]>) -> Result<MetricReport> {
    if trials.is_empty() {
        return Err(Error::Empty("trials"));
    }
    type Paired<'a> = (Vec<&'a TrialRecord>, Vec<&'a TrialRecord>);
    let mut groups: BTreeMap<(String, StartPosition), Paired> = BTreeMap::new();
    for t in trials {
        t.check()?;
        let g = groups.entry((t.policy.clone(), t.start)).or_default();
        match t.env {
            EnvKind::Sim => g.0.push(t),
            EnvKind::Twin => g.1.push(t),
        }
    }
    let base_errors = match baseline {
        Some(b) => Some(build_report(b, None)?),
        None => None,
    };
    let targets = (TARGET_AREA, TARGET_X, TARGET_Y);
    let mut rows = Vec::new();
    for ((policy, start), (sim, twin)) in groups {
        let deployed = if twin.is_empty() { &sim } else { &twin };
        let errors = framing_errors(deployed, targets)?;
        let srcc = if !sim.is_empty() && !twin.is_empty() {
            paired_srcc(&sim, &twin)?
        } else {
            SrccSet::default()
        };
        let improvement = base_errors.as_ref().and_then(|b| {
            b.rows.iter().find(|r| r.start == start).map(|r| Improvement {
                area: improvement_pct(r.errors.area, errors.area),
                x: improvement_pct(r.errors.x, errors.x),
                y: improvement_pct(r.errors.y, errors.y),
            })
        });
        let sim_out = if sim.is_empty() { outcomes(&twin) } else { outcomes(&sim) };
        rows.push(ReportRow {
            policy,
            start,
            sim: sim_out,
            twin: (!twin.is_empty() && !sim.is_empty()).then(|| outcomes(&twin)),
            srcc,
            errors,
            improvement,
        });
    }
    Ok(MetricReport { rows, weights: None })
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.prec$}"))
}

fn opt_csv(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl MetricReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "policy,start,reward_sim_mean,reward_sim_std,reward_twin_mean,reward_twin_std,\
             area_sim,area_twin,area_srcc,x_sim,x_twin,x_srcc,y_sim,y_twin,y_srcc,reward_srcc,\
             area_err,area_err_pct,x_err,x_err_pct,y_err,y_err_pct,\
             area_improvement_pct,x_improvement_pct,y_improvement_pct\n",
        );
        for r in &self.rows {
            let t = r.twin;
            let imp = r.improvement;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.policy,
                r.start,
                r.sim.reward.mean,
                r.sim.reward.std,
                opt_csv(t.map(|t| t.reward.mean)),
                opt_csv(t.map(|t| t.reward.std)),
                r.sim.area,
                opt_csv(t.map(|t| t.area)),
                opt_csv(r.srcc.area),
                r.sim.x,
                opt_csv(t.map(|t| t.x)),
                opt_csv(r.srcc.x),
                r.sim.y,
                opt_csv(t.map(|t| t.y)),
                opt_csv(r.srcc.y),
                opt_csv(r.srcc.reward),
                r.errors.area,
                r.errors.area_pct,
                r.errors.x,
                r.errors.x_pct,
                r.errors.y,
                r.errors.y_pct,
                opt_csv(imp.and_then(|i| i.area)),
                opt_csv(imp.and_then(|i| i.x)),
                opt_csv(imp.and_then(|i| i.y)),
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        if let Some(w) = &self.weights {
            let _ = writeln!(
                out,
                "Reward weights: lambda_area {}, lambda_steer {}, lambda_cam {}\n",
                w.lambda_area, w.lambda_steer, w.lambda_cam
            );
        }
        out.push_str("| Policy | Start | Reward sim | Reward twin | Area sim | Area twin | Area SRCC | X sim | X twin | X SRCC | Y sim | Y twin | Y SRCC |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let t = r.twin;
            let cell = |v: Option<f64>| opt(v, 2);
            let band = |v: Option<f64>| format!("{} ({})", opt(v, 2), srcc_band(v));
            let _ = writeln!(
                out,
                "| {} | {} | {:.2} ± {:.2} | {} | {:.2} | {} | {} | {:.2} | {} | {} | {:.2} | {} | {} |",
                r.policy,
                r.start,
                r.sim.reward.mean,
                r.sim.reward.std,
                t.map_or_else(|| "-".to_string(), |t| format!("{:.2} ± {:.2}", t.reward.mean, t.reward.std)),
                r.sim.area,
                cell(t.map(|t| t.area)),
                band(r.srcc.area),
                r.sim.x,
                cell(t.map(|t| t.x)),
                band(r.srcc.x),
                r.sim.y,
                cell(t.map(|t| t.y)),
                band(r.srcc.y),
            );
        }
        out.push_str("\n| Policy | Start | Area error | X error | Y error | Area impr. % | X impr. % | Y impr. % |\n");
        out.push_str("|---|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let e = r.errors;
            let imp = |f: fn(&Improvement) -> Option<f64>| {
                r.improvement.map_or_else(|| "-".to_string(), |i| opt(f(&i), 1))
            };
            let _ = writeln!(
                out,
                "| {} | {} | {:.2} ({:.1}%) | {:.2} ({:.1}%) | {:.2} ({:.1}%) | {} | {} | {} |",
                r.policy,
                r.start,
                e.area,
                e.area_pct,
                e.x,
                e.x_pct,
                e.y,
                e.y_pct,
                imp(|i| i.area),
                imp(|i| i.x),
                imp(|i| i.y),
            );
        }
        out
    }
}

/// Runs paired sim/twin trials for a policy and summarizes them.
#[allow(clippy::too_many_arguments)]
pub fn srcc_eval(
    policy: &GaussianPolicy,
    policy_id: &str,
    env_cfg: &EpisodeConfig,
    twin: &TwinConfig,
    starts: &[StartPosition],
    episodes: usize,
    weights: &RewardWeights,
    base_seed: u64,
) -> Result<(MetricReport, Vec<TrialRecord>)> {
    let trials = run_trials(policy, policy_id, env_cfg, Some(twin), starts, episodes, weights, base_seed)?;
    let mut report = build_report(&trials, None)?;
    report.weights = Some(*weights);
    Ok((report, trials))
}

/// One seed's learning curve: (step, mean episodic reward).
#[derive(Clone, Debug, PartialEq)]
pub struct SeedCurve {
    pub seed: Option<u64>,
    pub points: Vec<(f64, f64)>,
}

/// Parses a learning-curve CSV, skipping `#` lines and rows without finished episodes.
pub fn parse_curve_csv(text: &str) -> Result<SeedCurve> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Data("curve file has no header".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Data(format!("curve file lacks column '{name}'")))
    };
    let (si, ri) = (find("step")?, find("mean_ep_reward")?);
    let seed_i = cols.iter().position(|c| *c == "seed");
    let mut seed = None;
    let mut points = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |i: usize| f.get(i).copied().ok_or_else(|| Error::Data(format!("curve row {n}: too few fields")));
        let step: f64 = get(si)?.parse().map_err(|_| Error::Data(format!("curve row {n}: bad step")))?;
        let reward: f64 = get(ri)?
            .parse()
            .map_err(|_| Error::Data(format!("curve row {n}: bad reward")))?;
        if let Some(i) = seed_i {
            seed = get(i)?.parse().ok();
        }
        if reward.is_finite() {
            points.push((step, reward));
        }
    }
    Ok(SeedCurve { seed, points })
}

/// Linear interpolation of a sorted curve; `None` outside its step range.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let (first, last) = (points.first()?, points.last()?);
    if x < first.0 || x > last.0 {
        return None;
    }
    let i = points.partition_point(|p| p.0 < x);
    if points[i].0 == x {
        return Some(points[i].1);
    }
    let (a, b) = (points[i - 1], points[i]);
    Some(a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertBand {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Handcrafted-return band of a demonstration dataset.
pub fn expert_band(dataset: &Dataset) -> Result<ExpertBand> {
    let returns: Vec<f64> = dataset
        .trajectories
        .iter()
        .map(|t| t.transitions.iter().map(|x| x.reward).sum())
        .collect();
    if returns.is_empty() {
        return Err(Error::Empty("expert dataset"));
    }
    Ok(ExpertBand {
        mean: returns.iter().sum::<f64>() / returns.len() as f64,
        min: returns.iter().copied().fold(f64::INFINITY, f64::min),
        max: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub steps: Vec<f64>,
    pub mean: Vec<f64>,
    /// Population standard deviation across seeds.
    pub std: Vec<f64>,
    pub seeds: usize,
    pub expert: Option<ExpertBand>,
}

/// Mean ± σ across seeds on the coarsest step grid; other curves are linearly resampled onto it.
pub fn aggregate_curves(curves: &[SeedCurve], expert: Option<ExpertBand>) -> Result<AggregateCurve> {
    if curves.is_empty() {
        return Err(Error::Empty("curves"));
    }
    let grid = curves
        .iter()
        .filter(|c| !c.points.is_empty())
        .min_by_key(|c| c.points.len())
        .ok_or(Error::Empty("curve points"))?;
    let (mut steps, mut mean, mut std) = (Vec::new(), Vec::new(), Vec::new());
    for &(x, _) in &grid.points {
        let vals: Option<Vec<f64>> = curves.iter().map(|c| interpolate(&c.points, x)).collect();
        if let Some(v) = vals {
            let (m, s) = mean_std(v);
            steps.push(x);
            mean.push(m);
            std.push(s);
        }
    }
    Ok(AggregateCurve {
        steps,
        mean,
        std,
        seeds: curves.len(),
        expert,
    })
}

impl AggregateCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mean_ep_reward,std_ep_reward,seeds");
        if self.expert.is_some() {
            out.push_str(",expert_mean,expert_min,expert_max");
        }
        out.push('\n');
        for i in 0..self.steps.len() {
            let _ = write!(out, "{},{},{},{}", self.steps[i], self.mean[i], self.std[i], self.seeds);
            if let Some(e) = self.expert {
                let _ = write!(out, ",{},{},{}", e.mean, e.min, e.max);
            }
            out.push('\n');
        }
        out
    }
}
