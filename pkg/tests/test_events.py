from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgefuse.events import (PRESETS, EventStream, StreamFormatError, SynthConfigError, SynthSceneConfig,
                             frames_from_stream, read_stream, synth_stream, voxelize, write_stream)
from edgefuse.events.stream import make_events
from edgefuse.events.voxel import EventDataError
from edgefuse.core.rng import Rng


def random_events(rng, n, w=32, h=24, t_max=1000):
    return make_events(np.sort(rng.integers(0, t_max, (n,))).astype(np.uint64), rng.integers(0, w, (n,)),
                       rng.integers(0, h, (n,)), rng.integers(0, 2, (n,)))


def test_voxelize_empty_and_single():
    none = make_events([], [], [], [])
    assert not voxelize(none, 8, 8, (0, 10)).counts.any()
    f = voxelize(make_events([5], [3], [5], [1]), 8, 8, (0, 10))
    assert f.counts.shape == (2, 8, 8)
    assert f.counts[1, 5, 3] == 1 and f.counts.sum() == 1


def test_voxelize_matches_tally():
    ev = random_events(Rng(1), 1000)
    frame = voxelize(ev, 24, 32, (100, 900))
    tally = Counter((int(e["p"]), int(e["y"]), int(e["x"])) for e in ev if 100 <= e["t"] < 900)
    want = np.zeros((2, 24, 32))
    for (p, y, x), c in tally.items():
        want[p, y, x] = c
    assert np.array_equal(frame.counts, want)
    assert frame.n_events == sum(tally.values())


def test_voxelize_out_of_bounds_names_record():
    ev = make_events([0, 1, 2], [1, 40, 2], [1, 1, 1], [0, 1, 0])
    with pytest.raises(EventDataError, match="event 1"):
        voxelize(ev, 8, 8, (0, 10))


def test_voxelize_rejects_empty_window():
    with pytest.raises(ValueError):
        voxelize(make_events([], [], [], []), 4, 4, (5, 5))


@given(st.integers(0, 10_000))
@settings(max_examples=25)
def test_voxelize_permutation_invariant(seed):
    rng = Rng(seed)
    ev = random_events(rng, 60, t_max=3)
    shuffled = ev[rng.permutation(len(ev))]
    shuffled = shuffled[np.argsort(shuffled["t"], kind="stable")]
    assert np.array_equal(voxelize(ev, 24, 32, (0, 3)).counts, voxelize(shuffled, 24, 32, (0, 3)).counts)


def test_frames_cover_stream():
    ev = random_events(Rng(2), 500, t_max=1000)
    frames = frames_from_stream(ev, 24, 32, 100)
    assert len(frames) == 10
    assert sum(f.n_events for f in frames) == 500
    assert frames[3].window == (300, 400)


def test_stream_sizes_and_roundtrip():
    assert len(write_stream(EventStream(4, 4, make_events([], [], [], [])))) == 16
    assert len(write_stream(EventStream(4, 4, make_events([7], [1], [2], [1])))) == 29
    ev = random_events(Rng(3), 10_000, t_max=1 << 40)
    buf = write_stream(EventStream(32, 24, ev))
    back = read_stream(buf)
    assert (back.width, back.height) == (32, 24)
    assert back.events.tobytes() == ev.tobytes()
    assert write_stream(back) == buf


@pytest.mark.parametrize("mutate,msg", [
    (lambda b: b"EVS2" + b[4:], "magic"),
    (lambda b: b[:-1], "declares"),
    (lambda b: b[:10], "truncated"),
])
def test_stream_rejects_corruption(mutate, msg):
    buf = write_stream(EventStream(4, 4, make_events([1, 2], [0, 1], [0, 1], [0, 1])))
    with pytest.raises(StreamFormatError, match=msg):
        read_stream(mutate(buf))


def test_stream_requires_sorted_times():
    with pytest.raises(StreamFormatError):
        write_stream(EventStream(4, 4, make_events([5, 1], [0, 0], [0, 0], [0, 0])))


def test_synth_static_scene_after_onset():
    res = synth_stream(replace(PRESETS["tiny"], speed=0.0))
    assert res.frames[0].n_events > 0
    assert all(f.n_events == 0 for f in res.frames[1:])


def test_synth_full_flicker_activates_everything():
    cfg = SynthSceneConfig(height=64, width=64, patch_size=16, frames=4, object="flicker", activity_fraction=1.0)
    res = synth_stream(cfg)
    assert all(len(t) == 16 for t in res.truth)


def test_synth_desk_activity_window():
    res = synth_stream(PRESETS["desk"])
    assert res.config.n_patches == 196
    assert 23 <= res.mean_active <= 36


def test_synth_events_only_in_truth_patches():
    res = synth_stream(PRESETS["tiny"])
    p = res.config.patch_size
    for frame, truth in zip(res.frames, res.truth):
        touched = frame.counts.sum(axis=0).reshape(8, p, 8, p).sum(axis=(1, 3)).reshape(-1) > 0
        assert set(np.flatnonzero(touched)) == set(truth.tolist())


def test_synth_deterministic():
    a, b = synth_stream(PRESETS["tiny"]), synth_stream(PRESETS["tiny"])
    assert a.events.tobytes() == b.events.tobytes()
    assert all(np.array_equal(x, y) for x, y in zip(a.rgb, b.rgb))


@pytest.mark.parametrize("kw", [dict(activity_fraction=1.5), dict(object="blob"), dict(height=60),
                                dict(speed=-1.0)])
def test_synth_config_errors(kw):
    with pytest.raises(SynthConfigError):
        replace(PRESETS["tiny"], **kw)


def test_synth_impossible_activity():
    with pytest.raises(SynthConfigError, match="not achievable"):
        synth_stream(replace(PRESETS["tiny"], object="flicker", activity_fraction=0.3))
