import json

import numpy as np
import pytest

from artsplat.errors import ConfigurationError
from artsplat.harness.experiment import (ExperimentConfig, MetricsReport, RigConfig, TrialResult,
                                         aggregate, run_experiment, with_seeds)
from artsplat.optim import OptimizeConfig


def small_config(**kw):
    base = dict(template="drawer", seeds=(0, 1), rig=RigConfig(count=2, resolution=64),
                noise="none", n_frames=3, opt=OptimizeConfig(max_iters=3))
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def report(tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    return run_experiment(small_config(out_dir=str(out))), out


def test_noiseless_drawer_recovers_and_succeeds(report):
    rep, _ = report
    assert len(rep.trials) == 2 and all(t.error is None for t in rep.trials)
    for t in rep.trials:
        assert t.initial_ae < 0.5 and t.final_ae < 3.0
        assert t.success_before and t.success_after
        assert t.initial_oe is None
    assert rep.aggregates["success_rate_after"] == 1.0
    assert rep.aggregates["n_failed"] == 0


def test_report_files_round_trip(report):
    rep, out = report
    loaded = MetricsReport.load(out)
    assert loaded.aggregates == loaded.recompute_aggregates() == rep.aggregates
    assert [t.to_dict() for t in loaded.trials] == [t.to_dict() for t in rep.trials]
    cfg = ExperimentConfig.from_dict(loaded.config)
    assert cfg.seeds == (0, 1) and cfg.template == "drawer"
    rows = (out / "report.csv").read_text().splitlines()
    assert len(rows) == 3
    assert "runtimes" not in json.loads((out / "report.json").read_text())
    assert (out / "timings.json").exists()
    assert (out / "seed000_part0" / "refined_cam0.ppm").exists()


def test_report_is_reproducible(report, tmp_path):
    rep, out = report
    again = run_experiment(small_config(out_dir=str(tmp_path), seeds=(1,)))
    assert again.trials[0].to_dict() == rep.trials[1].to_dict()


def test_aggregates_hand_computed():
    trials = [TrialResult(0, 0, "revolute", 20.0, 1.0, 2.0, 0.5, 0.1, 1.0, 1.0, False, False,
                          False, True, 5, 0.1),
              TrialResult(1, 0, "revolute", 10.0, 3.0, 1.0, 0.1, 1.0, 1.0, 1.0, False, False,
                          True, True, 5, 0.1),
              TrialResult(2, 0, "revolute", error="boom")]
    agg = aggregate(trials)
    assert agg["n_trials"] == 3 and agg["n_failed"] == 1
    assert agg["median_initial_ae"] == 15.0 and agg["median_final_ae"] == 1.5
    assert agg["success_rate_before"] == pytest.approx(1 / 3)
    assert agg["success_rate_after"] == pytest.approx(2 / 3)
    assert agg["fraction_improved"] == 1.0
    assert agg["ae_reduction"] == pytest.approx(10.0)


@pytest.mark.parametrize("bad", [dict(template="toaster"), dict(seeds=()), dict(n_frames=1),
                                 dict(success_fraction=0.0), dict(workers=0),
                                 dict(target_delta=-1.0), dict(noise="loud")])
def test_config_rejected_before_any_work(bad):
    with pytest.raises(ConfigurationError):
        small_config(**bad)


def test_config_dict_round_trip_and_unknown_keys():
    cfg = small_config()
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"template": "door", "colour": 1})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"rig": {"count": 2, "fov": 3}})
    assert ExperimentConfig.from_dict({"seeds": 3}).seeds == (0, 1, 2)
    assert with_seeds(cfg, [5]).seeds == (5,)
    with pytest.raises(ConfigurationError):
        RigConfig(resolution=16)


def test_rig_spans_requested_arc():
    from artsplat.harness.experiment import camera_rig
    from artsplat.harness.objects import generate_object
    obj = generate_object("door", 0)
    cams = camera_rig(obj, RigConfig(count=3, span_deg=90, elevation_deg=0))
    dirs = [c.center - obj.center for c in cams]
    dirs = [d / np.linalg.norm(d) for d in dirs]
    ang = np.degrees(np.arccos(np.clip(dirs[0] @ dirs[2], -1, 1)))
    assert ang == pytest.approx(90.0, abs=1e-9)
    assert all(np.linalg.norm(c.center - obj.center) == pytest.approx(1.5 * obj.scale) for c in cams)
