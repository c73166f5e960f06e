import os

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from surfvote import io
from surfvote._core.graph import CompGraph
from surfvote._core.op import Input
from surfvote.trainer import (
    LOG_S,
    METRIC_FIELDS,
    LossParts,
    Trainer,
    build_iteration_graph,
    init_state,
    total_loss_neus,
    total_loss_with_curvature,
    train_iteration,
    view_psnr,
)

from tests.helpers.data import tiny_config, tiny_dataset
from tests.helpers.fixtures import teardown
from tests.helpers.gradcheck import numerical_gradient, relative_error


@pytest.fixture
def dataset():
    return tiny_dataset()


def run(config, dataset, iterations):
    state = init_state(config)
    for _ in range(iterations):
        train_iteration(state, dataset)
    return state


def assert_same_parameters(first, second):
    for name, value in first.parameters().items():
        assert_array_equal(second.parameters()[name], value)


class TestTotalLoss:
    def test_neus(self):
        parts = LossParts(l_rgb=0.5, l_eik=0.2, l_geo=0.3)
        assert total_loss_neus(parts, 0.1, 0.1) == pytest.approx(0.55)

    def test_zero_weights_leave_rgb(self):
        parts = LossParts(l_rgb=0.5, l_eik=0.2, l_geo=0.3)
        assert total_loss_neus(parts, 0.0, 0.0) == pytest.approx(0.5)

    def test_with_curvature(self):
        parts = LossParts(l_rgb=0.5, l_eik=0.2, l_geo=0.3, l_curv=1.0)
        assert total_loss_with_curvature(parts, 0.1, 0.1, 0.01) == pytest.approx(0.56)

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            total_loss_neus(LossParts(l_rgb=0.5), -0.1, 0.0)

    def test_symbolic(self, teardown):
        l_rgb = Input(shape=(), name="l_rgb")
        total = total_loss_neus(LossParts(l_rgb=l_rgb, l_eik=0.2), 0.5, 0.0)
        assert CompGraph(l_rgb, total).forward(np.array(1.0)) == pytest.approx(1.1)


class TestTrainIteration:
    def test_metrics(self, dataset, teardown):
        state = init_state(tiny_config())
        metrics = train_iteration(state, dataset)
        assert list(metrics) == METRIC_FIELDS
        assert (metrics["iteration"], metrics["view"]) == (0, 0)
        assert metrics["l_rgb"] >= 0 and metrics["l_eik"] >= 0
        # no snapshot yet, so no refinement terms
        assert metrics["l_geo"] is None and metrics["l_curv"] is None
        assert (state.iteration, state.view_cursor) == (1, 1)
        assert state.metric_log == [metrics]

    def test_views_are_visited_round_robin(self, dataset, teardown):
        state = run(tiny_config(), dataset, 6)
        assert [row["view"] for row in state.metric_log] == [0, 1, 2, 3, 0, 1]

    def test_parameters_move(self, dataset, teardown):
        state = init_state(tiny_config())
        before = {k: v.copy() for k, v in state.parameters().items()}
        for _ in range(3):
            train_iteration(state, dataset)
        moved = [
            not np.array_equal(before[k], v) for k, v in state.parameters().items()
        ]
        assert any(moved)
        assert state.optimizer.step_count == 3

    def test_refinement_starts_after_first_refresh(self, dataset, teardown):
        state = run(tiny_config(), dataset, 5)
        assert state.buffer.epoch == 1
        assert all(row["l_geo"] is None for row in state.metric_log[:4])
        last = state.metric_log[4]
        assert last["l_geo"] is not None and np.isfinite(last["l_geo"])
        assert last["total"] >= last["l_rgb"]

    def test_matches_baseline_until_first_refresh(self, dataset, teardown):
        refined = run(tiny_config("loss.w_geo=0.1"), dataset, 4)
        baseline = run(tiny_config("loss.w_geo=0"), dataset, 4)
        assert_same_parameters(refined, baseline)
        # the fourth view refreshed the buffer
        assert refined.buffer.snapshot is not None
        assert refined.buffer.snapshot.n_valid > 0
        assert baseline.buffer.snapshot is None

    def test_buffer_settings_do_not_affect_baseline(self, dataset, teardown):
        first = run(tiny_config("loss.w_geo=0", "buffer.resolution=4"), dataset, 6)
        second = run(
            tiny_config("loss.w_geo=0", "buffer.contrast=2.0", "buffer.hit_mode=ray"),
            dataset,
            6,
        )
        assert_same_parameters(first, second)
        assert first.buffer.epoch == second.buffer.epoch == 0

    def test_curvature_variant(self, dataset, teardown):
        state = run(tiny_config("variant=neus+curvature"), dataset, 2)
        assert all(row["l_curv"] >= 0 for row in state.metric_log)

    def test_non_finite_loss(self, dataset, tmp_path, teardown):
        state = init_state(tiny_config())
        state.color_field.parameters()["color/b0"][...] = np.nan
        before = state.parameters()["sdf/w0"].copy()
        with pytest.warns(UserWarning, match="Non-finite loss"):
            assert train_iteration(state, dataset, out_dir=str(tmp_path)) is None
        assert_array_equal(state.parameters()["sdf/w0"], before)
        assert state.optimizer.step_count == 0
        assert state.buffer.n_recorded == 0
        assert state.iteration == 1 and state.metric_log == []
        assert state.buffer.views_seen == state.view_cursor == 1
        assert os.listdir(str(tmp_path / "diagnostics")) == ["iteration_000000.npz"]

    def test_skipped_view_keeps_refresh_schedule(self, dataset, teardown):
        state = init_state(tiny_config())
        bias = state.color_field.parameters()["color/b0"]
        saved = bias.copy()
        bias[...] = np.nan
        with pytest.warns(UserWarning, match="Non-finite loss"):
            assert train_iteration(state, dataset) is None
        bias[...] = saved
        for _ in range(len(dataset) - 1):
            assert train_iteration(state, dataset) is not None
        assert state.buffer.views_seen == state.view_cursor == len(dataset)
        assert state.buffer.epoch == 1

    def test_point_dumps(self, dataset, tmp_path, teardown):
        state = init_state(tiny_config("dump_points_every=1"))
        for _ in range(5):
            train_iteration(state, dataset, out_dir=str(tmp_path))
        names = sorted(os.listdir(str(tmp_path / "points")))
        assert names == ["xq_000004.ply", "xt_000004.ply"]
        assert io.read_points(str(tmp_path / "points" / "xt_000004.ply")).shape == (
            64,
            3,
        )


@pytest.mark.parametrize("name", [LOG_S, "sdf/b2", "color/b1"])
def test_iteration_gradient(name, dataset, teardown):
    state = init_state(tiny_config("render.perturb=false", "rays_per_batch=6"))
    rays, target, _ = dataset.sample_batch(0, 6, rng=0)
    iteration_graph = build_iteration_graph(state, rays, target)
    graph, bound = iteration_graph.graph, iteration_graph.bound
    feed = bound.feed()
    graph.forward(feed)
    symbolic = bound.named(graph.backward(wrt=bound.tensors))[name]

    tensor = bound[name]

    def loss(value):
        shifted = dict(feed)
        shifted[tensor] = value
        return float(graph.forward(shifted))

    numerical = numerical_gradient(loss, feed[tensor])
    assert relative_error(symbolic, numerical) < 1e-4


class TestTrainer:
    def test_run_writes_outputs(self, dataset, tmp_path, teardown):
        trainer = Trainer(tiny_config(), dataset, out_dir=str(tmp_path))
        state = trainer.run(3)
        assert state.iteration == 3
        rows = io.read_csv(str(tmp_path / "metrics.csv"))
        assert len(rows) == 3
        assert list(rows[0]) == METRIC_FIELDS
        assert [row["iteration"] for row in rows] == ["0", "1", "2"]
        assert rows[0]["l_cd"] == ""
        assert os.path.exists(trainer.checkpoint_path)

    def test_run_to_configured_iterations(self, dataset, teardown):
        trainer = Trainer(tiny_config("iterations=4"), dataset)
        trainer.run(1)
        assert trainer.run().iteration == 4
        assert trainer.checkpoint_path is None

    def test_evaluate_without_reference(self, dataset, teardown):
        assert Trainer(tiny_config(), dataset).evaluate() is None

    def test_evaluate(self, dataset, tmp_path, teardown):
        from surfvote.scene import load_scene, sample_scene_surface

        reference = sample_scene_surface(load_scene("sphere"), 200, rng=0)
        trainer = Trainer(
            tiny_config(), dataset, out_dir=str(tmp_path), reference_points=reference
        )
        report = trainer.evaluate()
        assert report is not None
        assert np.isfinite(report.unmasked_cd)
        assert 0.0 <= report.noise_ratio <= 100.0
        rows = io.read_csv(str(tmp_path / "eval_log.csv"))
        assert rows[0]["iteration"] == "0"

    def test_evaluation_curve(self, dataset, tmp_path, teardown):
        from surfvote.scene import load_scene, sample_scene_surface

        reference = sample_scene_surface(load_scene("sphere"), 200, rng=0)
        config = tiny_config("evaluation.eval_every=2")
        Trainer(
            config, dataset, out_dir=str(tmp_path), reference_points=reference
        ).run(4)
        rows = io.read_csv(str(tmp_path / "eval_log.csv"))
        assert [row["iteration"] for row in rows] == ["2", "4"]


def test_view_psnr(dataset, teardown):
    state = init_state(tiny_config())
    scores = view_psnr(state, dataset, views=[0, 2], chunk_size=50)
    assert len(scores) == 2
    assert all(np.isfinite(score) for score in scores)
    assert_allclose(scores, view_psnr(state, dataset, views=[0, 2], chunk_size=50))
