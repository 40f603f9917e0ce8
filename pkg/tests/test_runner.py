import pytest

from locgraph.errors import DataError
from locgraph.harness.config import RunConfig, load_config
from locgraph.harness.runner import loop_closure_edges, run_mapping
from locgraph.harness.sensors import SequenceFrame
from locgraph.geometry import Transform2


@pytest.fixture(scope="module")
def loop_run(loop_world):
    _, _, frames = loop_world
    return run_mapping(frames, RunConfig())


def test_single_frame_gives_one_node(loop_world):
    _, _, frames = loop_world
    res = run_mapping(frames[:1], RunConfig())
    assert len(res.graph.nodes) == 1 and res.graph.n_edges == 0
    assert res.case_counts() == {"new_node": 1}


def test_loop_world_connected_with_closure(loop_run):
    assert len(loop_run.graph.components()) == 1
    assert loop_run.case_counts().get("loop_closure", 0) >= 1
    assert loop_closure_edges(loop_run.outcomes)
    assert all(k in loop_run.graph.edges for k in loop_closure_edges(loop_run.outcomes))


def test_same_input_same_graph_bytes(loop_world, loop_run):
    _, _, frames = loop_world
    again = run_mapping(frames, RunConfig())
    assert again.graph.to_bytes() == loop_run.graph.to_bytes()
    assert again.step_log() == loop_run.step_log()


def test_perf_stats(loop_world, loop_run):
    s = loop_run.perf.summary()
    assert s["frames"] == len(loop_world[2])
    assert s["update_time_mean_s"] < 0.2
    assert s["peak_rss_mb"] > 0
    assert s["map_size_mb"] * 1e6 == len(loop_run.graph.to_bytes())
    assert s["loop_closure_calls"] == len(loop_run.localizations)


def test_eager_mode_runs(loop_world):
    _, _, frames = loop_world
    cfg = load_config(overrides=["localizer.mode=eager", "localizer.stride=5"])
    res = run_mapping(frames, cfg)
    assert len(res.graph.components()) == 1
    assert len(res.localizations) <= len(frames) // 5 + 1


def test_missing_external_descriptor_is_data_error(loop_world):
    _, _, frames = loop_world
    with pytest.raises(DataError, match="frame 0"):
        run_mapping(frames[:1], load_config(overrides=["encoder=external"]))


def test_frame_without_data_is_data_error():
    with pytest.raises(DataError, match="frame 7"):
        run_mapping([SequenceFrame(7, 0.0, Transform2())], RunConfig())
