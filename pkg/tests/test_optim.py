import json

import numpy as np
import pytest

from splatdistill.camera import orbit, reference_camera
from splatdistill.diffusion import ViewSet, make_schedule, oracle_detail, oracle_target
from splatdistill.optim import (
    AdamState,
    OptimizationError,
    Oracles,
    RunConfig,
    adam_step,
    group_rates,
    lr_at,
    moving_average,
    optimize,
    prune,
    prune_mask,
)
from splatdistill.renderer import render
from splatdistill.scene import SceneGradients, sphere_init

SCH = make_schedule()


def test_position_rate_schedule():
    cfg = RunConfig(iterations=11)
    assert lr_at(0, cfg) == 1e-3
    assert lr_at(10, cfg) == 2e-5
    assert lr_at(5, cfg) == pytest.approx(np.sqrt(1e-3 * 2e-5))
    rates = [lr_at(i, cfg) for i in range(11)]
    assert all(a > b for a, b in zip(rates, rates[1:]))
    with pytest.raises(OptimizationError):
        lr_at(11, cfg)
    assert group_rates(3, cfg)["opacity"] == 5e-2


def test_adam_matches_hand_rolled_reference(rng):
    sc = sphere_init(4, 0.5, 0)
    state = AdamState.for_scene(sc)
    ref = {k: v.copy() for k, v in sc.params().items()}
    m = {k: np.zeros_like(v) for k, v in ref.items()}
    v = {k: np.zeros_like(x) for k, x in ref.items()}
    lrs = group_rates(0, RunConfig())
    groups = {"mu": "position", "log_scale": "scale", "rotation": "rotation", "sh": "sh", "opacity_logit": "opacity"}
    for step in range(1, 4):
        g = SceneGradients(**{k: rng.normal(size=x.shape) for k, x in ref.items()})
        adam_step(state, sc, g, lrs)
        for name, grad in g.items():
            m[name] = 0.9 * m[name] + 0.1 * grad
            v[name] = 0.999 * v[name] + 0.001 * grad**2
            mh = m[name] / (1 - 0.9**step)
            vh = v[name] / (1 - 0.999**step)
            ref[name] = ref[name] - lrs[groups[name]] * mh / (np.sqrt(vh) + 1e-15)
    for name in ref:
        np.testing.assert_allclose(getattr(sc, name), ref[name], rtol=1e-12, atol=1e-15)
    assert state.step == 3


def test_first_adam_step_moves_each_param_by_its_rate():
    sc = sphere_init(3, 0.5, 0)
    before = sc.copy()
    g = SceneGradients.zeros_like(sc)
    g.mu[:] = 5.0
    lrs = group_rates(0, RunConfig())
    adam_step(AdamState.for_scene(sc), sc, g, lrs)
    np.testing.assert_allclose(before.mu - sc.mu, lrs["position"], rtol=1e-12)
    np.testing.assert_array_equal(sc.sh, before.sh)


def test_adam_shape_mismatch(rng):
    sc = sphere_init(3, 0.5, 0)
    g = SceneGradients.zeros_like(sphere_init(4, 0.5, 0))
    with pytest.raises(OptimizationError, match="shape"):
        adam_step(AdamState.for_scene(sc), sc, g, group_rates(0, RunConfig()))


def test_prune_keeps_at_least_one():
    sc = sphere_init(5, 0.5, 0, opacity=0.005)
    sc.opacity_logit[2] += 0.5
    assert prune_mask(sc, 0.01).tolist() == [False, False, True, False, False]
    sc.opacity_logit[:] = -10
    sc.opacity_logit[3] = -9
    assert len(prune(sc, 0.01)) == 1


@pytest.mark.parametrize("kwargs", [dict(iterations=0), dict(lr_position_end=2e-3), dict(setting="z"),
                                    dict(prune_opacity_below=1.0), dict(ddim_steps_2d=0)])
def test_config_validation(kwargs):
    with pytest.raises(OptimizationError):
        RunConfig(**kwargs).validate()


def test_config_digest_tracks_fields():
    a, b = RunConfig(), RunConfig()
    assert a.digest() == b.digest()
    b.distillation.lambda_2d = 0.2
    assert a.digest() != b.digest()
    assert "lambda_2d" in a.flat() and "distillation" not in a.flat()


def _small_problem(size=24):
    target = sphere_init(40, 0.3, 5, opacity=0.8)
    target.sh[:, 0, 0] += 1.0
    cams = orbit(4, width=size, height=size)
    views = ViewSet(cams, [render(target, c).color for c in cams], reference_camera(size, size))
    return views


def test_optimize_reduces_loss_and_reports():
    views = _small_problem()
    oracle = oracle_target(views, 0.0, SCH)
    cfg = RunConfig(setting="b", iterations=60, resolution=24, prune_every=30)
    scene, report = optimize(sphere_init(60, 0.4, 1), Oracles(oracle, views), cfg, SCH, eval_views=views)
    assert len(report.rows) == 60 and report.iterations == 60
    loss = report.column("loss3d")
    assert loss[-15:].mean() < loss[:15].mean()
    assert report.rows[0][2] == "" and report.rows[0][1] == "b"
    assert np.isfinite(report.final_psnr)
    scene.check()


def test_optimize_is_deterministic_and_checkpoints(tmp_path):
    views = _small_problem(16)
    o3 = oracle_target(views, 1.0, SCH, condition_kinds=("pose",))
    o2 = oracle_detail(views, 1.0, 1.0, 0, SCH, condition_kinds=("text",))
    cfg = RunConfig(setting="e", iterations=6, resolution=16, checkpoint_every=3, seed=4)
    seen = []
    runs = [optimize(sphere_init(20, 0.4, 0), Oracles(o3, views, o2), cfg, SCH,
                     checkpoint=lambda it, s: seen.append(it)) for _ in range(2)]
    assert seen == [3, 6, 3, 6]
    (s1, r1), (s2, r2) = runs
    assert r1.rows == r2.rows
    assert np.array_equal(s1.mu, s2.mu)
    r1.write_csv(tmp_path / "a.csv")
    r2.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    r1.write_json(tmp_path / "s.json")
    assert json.loads((tmp_path / "s.json").read_text())["iterations"] == 6


def test_optimize_requires_2d_oracle_for_hybrid():
    views = _small_problem(16)
    with pytest.raises(OptimizationError, match="2D oracle"):
        optimize(sphere_init(5, 0.4, 0), Oracles(oracle_target(views, 0, SCH), views),
                 RunConfig(setting="e", iterations=2, resolution=16), SCH)


def test_input_scene_not_modified():
    views = _small_problem(16)
    init = sphere_init(10, 0.4, 0)
    before = init.copy()
    optimize(init, Oracles(oracle_target(views, 0, SCH), views), RunConfig(setting="b", iterations=3, resolution=16), SCH)
    np.testing.assert_array_equal(init.mu, before.mu)


def test_moving_average():
    np.testing.assert_allclose(moving_average([1, 2, 3, 4], 2), [1.5, 2.5, 3.5])
    assert moving_average([1], 3).size == 0


def test_view_size_must_match_resolution():
    views = _small_problem(16)
    with pytest.raises(OptimizationError, match="resolution"):
        optimize(sphere_init(5, 0.4, 0), Oracles(oracle_target(views, 0, SCH), views),
                 RunConfig(setting="b", iterations=2, resolution=24), SCH)
