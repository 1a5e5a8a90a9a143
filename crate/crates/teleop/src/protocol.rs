//! JSON messages exchanged over `/ws/teleop`.

use dolly_core::sim::{BoundingBox, CameraState, Pose, StartPosition, Status, Task};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Action {
        seq: u64,
        throttle: f64,
        steering: f64,
        #[serde(default)]
        pan: f64,
        #[serde(default)]
        tilt: f64,
    },
    Reset {
        #[serde(default)]
        start_position: Option<StartPosition>,
        #[serde(default)]
        seed: u64,
        task: Task,
    },
    RecordStart,
    RecordStop {
        save: bool,
    },
    /// Replays trajectory `index` of a dataset file in the dataset directory.
    Replay {
        file: String,
        index: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Idle,
    Live,
    Recording,
    Replay,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireBox {
    pub cx: f64,
    pub cy: f64,
    pub area: f64,
}

impl From<BoundingBox> for WireBox {
    fn from(b: BoundingBox) -> Self {
        WireBox {
            cx: b.cx,
            cy: b.cy,
            area: b.area,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State {
        tick: u64,
        seq_acked: Option<u64>,
        pose: Pose,
        camera: CameraState,
        bbox: WireBox,
        reward: f64,
        done: bool,
        mode: Mode,
        /// Episode status behind `done`.
        status: Status,
        task: Task,
        /// No fresh input within the timeout; the sim is held.
        paused: bool,
        recording_len: usize,
    },
    RecordResult {
        saved: bool,
        file: Option<String>,
        trajectories: Option<usize>,
        transitions: usize,
    },
    Error {
        message: String,
    },
}
