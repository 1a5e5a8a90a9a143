//! Self-checks run by `dolly verify`.
//!
//! Each check compares a library computation against an independent oracle.
//! A [`Fault`] corrupts one library result before comparison, to confirm the
//! corresponding check is able to fail.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::demos::{record_scripted_dataset, Dataset, Diversity};
use crate::error::{Error, Result};
use crate::evalkit::spearman;
use crate::gail::discriminator_loss;
use crate::nn::{Discriminator, Mlp};
use crate::ppo::compute_gae;
use crate::rewards::RewardWeights;
use crate::sim::{
    project_subject, BoundingBox, CameraState, EpisodeConfig, Pose, SubjectSpec, Task, FRAME_CENTER_X,
    FRAME_CENTER_Y, FRAME_HEIGHT, FRAME_WIDTH, OBS_DIM,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    Gradient,
    Gae,
    Projection,
    Srcc,
    Dataset,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(Fault::Gradient),
            "gae" => Ok(Fault::Gae),
            "projection" => Ok(Fault::Projection),
            "srcc" => Ok(Fault::Srcc),
            "dataset" => Ok(Fault::Dataset),
            other => Err(Error::Config(format!("unknown fault '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<12} {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

/// `‖a − b‖ / max(‖a‖ + ‖b‖, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm.max(1e-30)
}

/// Central finite-difference gradient of `f` at `params`.
pub fn numeric_gradient(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Worst relative error over random networks in policy, value and discriminator shapes.
pub fn gradient_check(nets: usize, seed: u64, fault: bool) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: [&[usize]; 4] = [
        &[OBS_DIM, 64, 64, 2],
        &[OBS_DIM, 64, 64, 1],
        &[OBS_DIM + 2, 64, 64, 1],
        &[OBS_DIM + 4, 64, 64, 1],
    ];
    let mut worst: f64 = 0.0;
    for k in 0..nets {
        let sizes = shapes[k % shapes.len()];
        let net = Mlp::init(sizes, 1.0, &mut rng)?;
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..sizes[sizes.len() - 1]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, cache) = net.forward(&x)?;
        let mut analytic = net.backward(&cache, &c)?.params;
        if fault {
            analytic[0] += 1e-2;
        }
        let numeric = numeric_gradient(net.params(), 1e-6, |p| {
            let m = Mlp::from_params(sizes, p.to_vec()).expect("same shape");
            let out = m.predict(&x).expect("valid input");
            out.iter().zip(&c).map(|(o, w)| o * w).sum()
        });
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok(worst)
}

/// Relative error of the discriminator cross-entropy gradient on a random batch.
pub fn discriminator_gradient_check(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let disc = Discriminator::new(OBS_DIM, 2, &[16, 16], &mut rng)?;
    let mut batch = || {
        let mut b = crate::demos::ExpertBatch::default();
        for _ in 0..6 {
            b.observations.push((0..OBS_DIM).map(|_| rng.random_range(-1.0..1.0)).collect());
            b.actions.push((0..2).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        b
    };
    let (e, a) = (batch(), batch());
    let analytic = discriminator_loss(&disc, &e, &a)?.grads;
    let sizes = disc.net.sizes().to_vec();
    let numeric = numeric_gradient(disc.net.params(), 1e-6, |p| {
        let d = Discriminator {
            net: Mlp::from_params(&sizes, p.to_vec()).expect("same shape"),
        };
        discriminator_loss(&d, &e, &a).expect("valid batch").loss
    });
    Ok(relative_error(&analytic, &numeric))
}

/// Discounted TD-residual sums computed term by term.
pub fn gae_bruteforce(r: &[f64], v: &[f64], done: &[bool], boot: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let mut out = vec![0.0; n];
    for t in 0..n {
        let mut weight = 1.0;
        for k in t..n {
            let next = if k + 1 < n { v[k + 1] } else { boot };
            let delta = r[k] + if done[k] { 0.0 } else { gamma * next } - v[k];
            out[t] += weight * delta;
            if done[k] {
                break;
            }
            weight *= gamma * lambda;
        }
    }
    out
}

/// Worst absolute GAE deviation over random 20-step buffers.
pub fn gae_check(buffers: usize, seed: u64, fault: bool) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..buffers {
        let n = 20;
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        let boot = rng.random_range(-3.0..3.0);
        let (mut adv, _) = compute_gae(&r, &v, &d, boot, 0.99, 0.95)?;
        if fault {
            adv[n - 1] += 1e-3;
        }
        for (a, b) in adv.iter().zip(gae_bruteforce(&r, &v, &d, boot, 0.99, 0.95)) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Bounding box from per-corner azimuth/elevation angles in the camera frame.
pub fn projection_oracle(pose: &Pose, camera: &CameraState, subject: &SubjectSpec, hfov: f64) -> Option<BoundingBox> {
    let f = FRAME_CENTER_X / (hfov / 2.0).tan();
    let yaw = pose.heading + camera.pan;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (dy, z) in [(-0.5, 0.0), (0.5, 0.0), (-0.5, 1.0), (0.5, 1.0)] {
        let wx = subject.position[0] - pose.x;
        let wy = subject.position[1] + dy * subject.width - pose.y;
        let wz = z * subject.height - camera.height;
        // Rotate the world offset by −yaw about z, then by −tilt about the new lateral axis.
        let ahead = wx * yaw.cos() + wy * yaw.sin();
        let left = -wx * yaw.sin() + wy * yaw.cos();
        let depth = ahead * camera.tilt.cos() + wz * camera.tilt.sin();
        let up = -ahead * camera.tilt.sin() + wz * camera.tilt.cos();
        if depth <= 1e-6 {
            return None;
        }
        let azimuth = (-left).atan2(depth);
        let elevation = up.atan2(left.hypot(depth));
        xs.push(f * azimuth.tan());
        ys.push(f * elevation.tan() / azimuth.cos());
    }
    let (x0, x1) = (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = (ys.iter().copied().fold(f64::INFINITY, f64::min), ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    Some(BoundingBox {
        cx: FRAME_CENTER_X + (x0 + x1) / 2.0,
        cy: FRAME_CENTER_Y - (y0 + y1) / 2.0,
        area: 100.0 * (x1 - x0) * (y1 - y0) / (FRAME_WIDTH * FRAME_HEIGHT),
    })
}

/// Worst relative deviation from the oracle over random poses with the subject in front.
pub fn projection_check(samples: usize, seed: u64, fault: bool) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subject = SubjectSpec::default();
    let hfov = PI / 2.0;
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    while compared < samples {
        let dist = rng.random_range(1.0..6.0);
        let bearing = rng.random_range(-PI..PI);
        let pose = Pose::new(
            subject.position[0] - dist * bearing.cos(),
            subject.position[1] - dist * bearing.sin(),
            bearing + rng.random_range(-0.6..0.6),
        );
        let camera = CameraState {
            pan: rng.random_range(-1.0..1.0),
            tilt: rng.random_range(-0.6..0.6),
            height: rng.random_range(0.3..2.0),
        };
        let lib = project_subject(&pose, &camera, &subject, hfov);
        let oracle = projection_oracle(&pose, &camera, &subject, hfov);
        match (lib, oracle) {
            (Some(mut a), Some(b)) => {
                if fault {
                    a.cx += 1e-6;
                }
                let rel = |x: f64, y: f64| (x - y).abs() / (1.0 + y.abs());
                let dev = rel(a.cx, b.cx).max(rel(a.cy, b.cy)).max(rel(a.area, b.area));
                worst = worst.max(dev);
                compared += 1;
            }
            (None, None) => {}
            _ => return Err(Error::Data("projection visibility disagrees with oracle".into())),
        }
    }
    Ok(worst)
}

/// On-axis projection with the camera at the subject's mid-height.
pub fn on_axis_center() -> Option<(f64, f64)> {
    let subject = SubjectSpec::default();
    let pose = Pose::new(subject.position[0] - 3.0, subject.position[1], 0.0);
    let camera = CameraState {
        pan: 0.0,
        tilt: 0.0,
        height: subject.height / 2.0,
    };
    project_subject(&pose, &camera, &subject, PI / 2.0).map(|b| (b.cx, b.cy))
}

/// `1 − 6Σd² / (n(n² − 1))` for tie-free data.
pub fn rank_difference_rho(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64 + 1.0;
        }
        r
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Worst deviation of `spearman` from the rank-difference formula on random permutations.
pub fn srcc_check(cases: usize, seed: u64, fault: bool) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let fixed = [
        (vec![1.0, 2.0, 3.0], vec![10.0, 20.0, 30.0], 1.0),
        (vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0], -1.0),
        (vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 3.0, 2.0, 4.0], 0.8),
    ];
    for (a, b, want) in fixed {
        let got = spearman(&a, &b)?.ok_or(Error::Data("spearman undefined on a fixed case".into()))?;
        worst = worst.max((got - want).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let n = rng.random_range(3..40);
        let a: Vec<f64> = (0..n).map(|i| i as f64 + rng.random::<f64>() * 0.5).collect();
        let mut b: Vec<f64> = (0..n).map(|i| i as f64 * 1.5).collect();
        b.shuffle(&mut rng);
        let mut got = spearman(&a, &b)?.ok_or(Error::Data("spearman undefined".into()))?;
        if fault {
            got += 1e-3;
        }
        worst = worst.max((got - rank_difference_rho(&a, &b)).abs());
    }
    Ok(worst)
}

/// Saves and reloads a scripted dataset; also checks the loader's rejections.
pub fn dataset_check(trajectories: usize, fault: bool) -> Result<String> {
    let env = EpisodeConfig::for_task(Task::Base);
    let ds = record_scripted_dataset(&env, Diversity::High, trajectories, 7, &RewardWeights::default(), true)?;
    let dir = std::env::temp_dir().join(format!("dolly-verify-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("roundtrip.demos.jsonl");
    ds.save(&path)?;
    let mut back = Dataset::load(&path)?;
    if fault {
        back.trajectories[0].transitions[0].action[0] += 1e-12;
    }
    let identical = back == ds;

    let mut broken = ds.clone();
    broken.trajectories[0].transitions[1].observation[0] += 0.5;
    let bad_path = dir.join("broken.demos.jsonl");
    broken.save(&bad_path)?;
    let chaining_rejected = Dataset::load(&bad_path).is_err();
    let mismatch_rejected = matches!(
        Dataset::load_for_task(&path, Task::Full),
        Err(Error::TaskMismatch { .. })
    );
    let _ = std::fs::remove_dir_all(&dir);
    if identical && chaining_rejected && mismatch_rejected {
        Ok(format!("{trajectories} trajectories identical after round-trip; corruption and task mismatch rejected"))
    } else {
        Err(Error::Data(format!(
            "round-trip identical: {identical}, chaining rejected: {chaining_rejected}, task mismatch rejected: {mismatch_rejected}"
        )))
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let t = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, e.to_string()),
    };
    CheckResult {
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Runs every check; `fault` corrupts the named computation.
pub fn run_all(fault: Option<Fault>) -> Vec<CheckResult> {
    let is = |f: Fault| fault == Some(f);
    vec![
        timed("gradients", || {
            let mlp = gradient_check(10, 11, is(Fault::Gradient))?;
            let disc = discriminator_gradient_check(12)?;
            let worst = mlp.max(disc);
            Ok((worst < 1e-4, format!("max relative error {worst:.2e} (tolerance 1e-4)")))
        }),
        timed("gae", || {
            let worst = gae_check(100, 21, is(Fault::Gae))?;
            Ok((worst < 1e-10, format!("max deviation {worst:.2e} over 100 buffers (tolerance 1e-10)")))
        }),
        timed("projection", || {
            let worst = projection_check(1000, 31, is(Fault::Projection))?;
            let centre = on_axis_center();
            let ok = worst < 1e-9 && centre == Some((FRAME_CENTER_X, FRAME_CENTER_Y));
            Ok((ok, format!("max relative deviation {worst:.2e} over 1000 poses; on-axis centre {centre:?}")))
        }),
        timed("srcc", || {
            let worst = srcc_check(200, 41, is(Fault::Srcc))?;
            Ok((worst < 1e-12, format!("max deviation {worst:.2e} from rank-difference formula")))
        }),
        timed("dataset", || Ok((true, dataset_check(25, is(Fault::Dataset))?))),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for r in run_all(None) {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn every_fault_is_caught_by_its_check() {
        let faults = [
            (Fault::Gradient, "gradients"),
            (Fault::Gae, "gae"),
            (Fault::Projection, "projection"),
            (Fault::Srcc, "srcc"),
            (Fault::Dataset, "dataset"),
        ];
        for (fault, name) in faults {
            let results = run_all(Some(fault));
            for r in results {
                assert_eq!(r.passed, r.name != name, "fault {fault:?}: {r}");
            }
        }
    }
}
