"""Smoke test for the `dolly` extension module.

Build and install first:  pip install ./crates/py --no-build-isolation
Then run:                 python python/smoke_test.py
"""

import json
import math
import tempfile
from pathlib import Path

import dolly


def check_sim():
    sim = dolly.Sim(task="full", start="P3", seed=7)
    assert len(sim.observation) == dolly.OBS_DIM == len(dolly.OBS_FEATURES)
    assert sim.action_dim == 4
    area0 = sim.bbox[2]
    total, done, steps = 0.0, False, 0
    while not done and steps < 200:
        _, r, done, status = sim.step([0.6, 0.0, 0.0, 0.0])
        total += r
        steps += 1
    assert sim.bbox[2] > area0, "driving straight at the subject should enlarge it"
    assert math.isfinite(total)
    print(f"sim: {steps} steps, status {status}, area {area0:.2f} -> {sim.bbox[2]:.2f}")

    a, b = dolly.Sim(seed=3), dolly.Sim(seed=3)
    for _ in range(50):
        assert a.step([0.4, 0.2]) == b.step([0.4, 0.2])


def check_math():
    assert dolly.reward("base", 1.0, 2.0) == 1.0 - 0.5 * 4.0
    assert dolly.reward("full", 0.0, 0.0, 1.0, 1.0, weights=(1.0, 0.5, 0.25)) == -0.5
    adv, ret = dolly.compute_gae([1.0, 1.0], [0.0, 0.0], [False, True], 5.0, 0.5, 1.0)
    assert adv == [1.5, 1.0] and ret == adv
    assert dolly.spearman([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0
    assert dolly.spearman([1, 2, 3], [5, 5, 5]) is None
    print("math: reward, gae and spearman agree with hand values")


def check_pipeline():
    with tempfile.TemporaryDirectory() as d:
        demos = Path(d) / "demos.jsonl"
        ckpt = Path(d) / "gail.ckpt.json"
        assert dolly.record_demos("base", demos, count=5, diversity="high", seed=1) == 5
        mean, std, success = dolly.train("gail", "base", 2048, seed=0, demos=demos, checkpoint=ckpt)
        assert math.isfinite(mean) and std >= 0.0 and 0.0 <= success <= 1.0
        policy = dolly.Policy.load(ckpt)
        assert (policy.algo, policy.task) == ("gail", "base")
        act = policy.act(dolly.Sim().observation)
        assert len(act) == 2 and all(-1.0 <= x <= 1.0 for x in act)
        print(f"pipeline: gail 2048 steps, final mean reward {mean:.3f}")


def check_verify():
    results = dolly.verify()
    assert all(passed for _, passed, _ in results), results
    failed = [name for name, passed, _ in dolly.verify("gae") if not passed]
    assert failed == ["gae"], failed
    assert json.loads(dolly.default_config())["reward"]["lambda_area"] == 1.0
    print(f"verify: {len(results)} checks pass, injected fault caught")


if __name__ == "__main__":
    check_sim()
    check_math()
    check_pipeline()
    check_verify()
    print("smoke test passed")
