"""Worked input/output examples for each operation, frozen as regression tests.

Expected numbers marked "oracle" were computed independently (mpmath, hand
substitution or brute force) before being written down here.
"""

import json
import math

import numpy as np
import pytest

from oracles import brute_force_matchable, normal_cdf_mp
from touchmap.cli import EXIT_CONFIG, EXIT_DEGENERATE, EXIT_OK, main
from touchmap.frames import (DegenerateSequenceError, Frame, FrameSequence, SensorLayout,
                             load_sequence, preset_layout, save_sequence, sequence_stats,
                             stats_of_values, validate_sequence)
from touchmap.plot import plot_artifact
from touchmap.preprocess import (DenseSequence, Detection, build_detections, detection_probability,
                                 gaussian_blur, gaussian_kernel_1d, local_maxima_mask, upsample)
from touchmap.render import (ActuatorSignal, RenderParams, assemble, butterworth_lowpass,
                             butterworth_sos, despike, postprocess, scale_output, sos_response)
from touchmap.synth import SynthParams, synthesize
from touchmap.tracking import (TrackingParams, Trajectory, build_graph, detection_cost,
                               map_log_posterior, p_link, solve_tracking)
from touchmap.workspace import (SelectionResult, Transform, WorkspaceArray, containing, feasible,
                                minimal_conflicts, score, search_transforms, select, weight_d)

ARR = WorkspaceArray.grid()


def det(t, x, p=0.9, v=1.0):
    return Detection(t, (float(x[0]), float(x[1])), v, p)


# ------------------------------------------------------------------ frames


def test_parse_small_csv(tmp_path):
    p = tmp_path / "s.csv"
    rows = ["#layout grid 2 2 0", "#pitch 25.4", "#rate 20.0", "t,row,col,psi"]
    rows += [f"{t},{k // 2},{k % 2},{float(k)}" for t in range(2) for k in range(4)]
    p.write_text("\n".join(rows) + "\n")
    seq = load_sequence(p)
    assert len(seq) == 2 and seq.layout.n_cells == 4
    assert seq.frames[1].values.tolist() == [0.0, 1.0, 2.0, 3.0]


def test_large_sleeve_header(tmp_path):
    lay = preset_layout("large_sleeve")
    p = tmp_path / "l.csv"
    save_sequence(FrameSequence.from_grids(lay, np.ones((1,) + lay.shape)), p)
    assert load_sequence(p).layout.n_cells == 142
    assert sum(1 for line in p.read_text().splitlines() if line.startswith("#layout")) == 3


def test_stats_examples():
    s = stats_of_values([5.0] * 7)
    assert (s.mean, s.stdev) == (5.0, 0.0)
    s = stats_of_values([0.0, 2.0, 0.0, 2.0])
    assert (s.mean, s.stdev) == (1.0, 1.0)
    rng = np.random.default_rng(0)
    seq = FrameSequence.from_grids(SensorLayout.rectangle(3, 4), rng.normal(size=(3, 3, 4)))
    vals = np.concatenate([f.values for f in seq.frames])
    mean = math.fsum(vals) / vals.size
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / vals.size)
    got = sequence_stats(seq)
    assert abs(got.mean - mean) <= 1e-12 and abs(got.stdev - sd) <= 1e-12


def test_validate_examples():
    lay = SensorLayout.rectangle(1, 2)
    good = FrameSequence(lay, (Frame(0, np.array([1.0, 2.0])), Frame(1, np.array([1.0, 2.0]))))
    assert validate_sequence(good) == []
    gap = FrameSequence(lay, (Frame(0, np.array([1.0, 2.0])), Frame(2, np.array([1.0, 2.0]))))
    assert any("non-consecutive time index" in v for v in validate_sequence(gap))
    nan = FrameSequence(lay, (Frame(0, np.array([np.nan, 2.0])),))
    assert any("non-finite value" in v for v in validate_sequence(nan))


# -------------------------------------------------------------- preprocess


def _seq(grids):
    grids = np.asarray(grids, float)
    return FrameSequence.from_grids(SensorLayout.rectangle(*grids.shape[1:]), grids)


def test_upsample_examples():
    d = upsample(_seq(np.full((1, 2, 3), 2.0)), 7)
    assert (d.frames == 2.0).all()
    g = np.arange(4.0).reshape(1, 2, 2)
    assert np.array_equal(upsample(_seq(g), 1).frames, g)
    # no pixel centre lies exactly midway between the two cell centres for
    # an odd factor; the straddling pair sits at 3/7 and 4/7 (oracle)
    row = upsample(_seq([[[0.0, 1.0]]]), 7).frames[0, 0]
    assert abs(row[6] - 3 / 7) <= 1e-12 and abs(row[7] - 4 / 7) <= 1e-12
    assert abs(np.interp(6.5, [6, 7], row[6:8]) - 0.5) <= 1e-12


def _impulse(mask, r, c):
    img = np.zeros(mask.shape)
    img[r, c] = 1.0
    return DenseSequence(np.where(mask, img, np.nan)[None], mask, 1.0)


def test_blur_examples():
    mask = np.ones((30, 30), bool)
    mask[:, 20:] = False
    const = DenseSequence(np.where(mask, 1.7, np.nan)[None], mask, 1.0)
    out = gaussian_blur(const, 3.0).frames[0]
    assert np.abs(out[mask] - 1.7).max() <= 1e-12

    # frame large enough that no output window touching the impulse is clipped
    full = np.ones((50, 50), bool)
    out = gaussian_blur(_impulse(full, 25, 25), 3.0).frames[0]
    k = gaussian_kernel_1d(3.0)
    np.testing.assert_allclose(out[16:35, 16:35], np.outer(k, k), atol=1e-15)
    assert abs(out.sum() - 1.0) <= 1e-12

    # next to the mask edge only the mass-conserving mode sums to one
    out = gaussian_blur(_impulse(mask, 15, 19), 3.0, mode="scatter").frames[0]
    assert abs(out[mask].sum() - 1.0) <= 1e-9


def test_probability_examples():
    stats = sequence_stats(_seq([[[0.0, 1.0], [2.0, 3.0]]]))
    p = detection_probability(stats.mean + 1.25 * stats.stdev, stats)
    assert abs(p - 0.49) <= 1e-12
    assert detection_probability(stats.mean + 1e6 * stats.stdev, stats) == pytest.approx(0.98)
    oracle = 0.98 * normal_cdf_mp(-1.25)
    assert oracle == pytest.approx(0.1035368, abs=5e-8)
    assert abs(detection_probability(stats.mean, stats) - oracle) <= 1e-12


def test_maxima_examples():
    f = np.ones((3, 3))
    f[1, 1] = 5
    m = np.ones((3, 3), bool)
    assert np.argwhere(local_maxima_mask(f, m)).tolist() == [[1, 1]]
    assert local_maxima_mask(np.full((3, 3), 2.0), m).all()
    two = np.zeros((5, 9))
    two[2, 1], two[2, 7] = 3.0, 4.0
    got = local_maxima_mask(two, np.ones_like(two, bool))
    # exhaustive scan oracle
    want = np.zeros_like(got)
    for r in range(5):
        for c in range(9):
            nb = two[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2]
            want[r, c] = two[r, c] >= nb.max()
    assert np.array_equal(got, want) and got[2, 1] and got[2, 7]


def test_build_detections_examples():
    with pytest.raises(DegenerateSequenceError):
        build_detections(_seq(np.zeros((3, 2, 2))))
    seq = synthesize("hold", SynthParams(n_frames=10, col=3.0, row=1.0))
    dense, dets = build_detections(seq)
    apex = (3.5 * 25.4, 1.5 * 25.4)
    for t in range(10):
        here = [d for d in dets if d.t == t]
        assert len(here) <= int(dense.mask.sum())
        best = max(here, key=lambda d: d.value)
        assert best.x == pytest.approx(apex)


# ---------------------------------------------------------------- tracking


def test_p_link_examples():
    a = det(0, (0, 0))
    assert p_link(a, det(1, (0, 0))) == 1.0
    assert p_link(a, det(1, (50, 0))) == 0.0
    assert p_link(a, det(1, (25, 0))) == 0.5


def test_cost_examples():
    assert detection_cost(0.5) == 0.0
    assert detection_cost(0.98) == pytest.approx(-3.8918, abs=5e-5)
    g = build_graph([det(0, (0, 0)), det(1, (60, 0))], TrackingParams(k_d=50))
    assert list(g.link_arcs()) == []


def test_solve_examples():
    assert solve_tracking([]) == []
    five = [det(t, (0, 0), 0.98) for t in range(5)]
    out = solve_tracking(five)
    assert len(out) == 1 and len(out[0]) == 5
    assert solve_tracking(five[:4]) == []
    two = [det(t, (0, 0), 0.97) for t in range(6)] + [det(t, (500, 0), 0.97) for t in range(6)]
    out = solve_tracking(two)
    assert sorted(len(t) for t in out) == [6, 6]


def test_posterior_examples():
    dets = [det(0, (0, 0), 0.3), det(1, (0, 0), 0.8)]
    assert map_log_posterior(dets, []) == pytest.approx(math.log(0.7) + math.log(0.2), abs=1e-15)
    one = [det(0, (0, 0), 0.49)]
    got = map_log_posterior(one, [Trajectory(0, tuple(one))], TrackingParams(entry_cost=8))
    assert got == pytest.approx(math.log(0.49) - 16, abs=1e-12)


# --------------------------------------------------------------- workspace


def test_containment_examples():
    m = Transform((5.0, 7.0))
    assert containing((79.0, 57.0), ARR, m) == [(1, 2)]
    assert containing((5.0 + 18.5, 7.0 + 50.0), ARR, m) == [(1, 0), (1, 1)]
    assert containing((5.0, 7.0 - 19.5), ARR, m) == []


def test_feasible_examples():
    assert not feasible([(0, (0.0, 30.0))], ARR)
    assert not feasible([(0, (0.0, 0.0)), (1, (1.0, 1.0))], ARR)
    assert feasible([(0, (0.0, 0.0)), (1, (37.0, 0.0))], ARR)


def test_conflict_examples():
    a = Trajectory(0, tuple(det(t, (0, 0)) for t in range(3)))
    b = Trajectory(1, tuple(det(t, (2, 1)) for t in range(3)))
    cs = minimal_conflicts([a, b], ARR)
    assert [(c.ids, c.time) for c in cs] == [(frozenset({0, 1}), 0)]

    w = Trajectory(2, (det(0, (0, 0)), det(1, (0, 30)), det(2, (0, 0))))
    assert [(c.ids, c.time) for c in minimal_conflicts([w], ARR)] == [(frozenset({2}), 1)]

    three = [Trajectory(k, (det(0, x),)) for k, x in enumerate([(0, 0), (3, 0), (74, 0)])]
    cs = [c.ids for c in minimal_conflicts(three, ARR)]
    assert cs == [frozenset({0, 1})]
    nb = [set(containing(t.detections[0].x, ARR)) for t in three]
    assert brute_force_matchable([nb[0], nb[2]]) and brute_force_matchable([nb[1], nb[2]])
    assert not brute_force_matchable(nb)


def test_weight_examples():
    ws = ARR.by_index((0, 0))
    assert weight_d((0, 0), ws) == pytest.approx(1.0608, abs=1e-15)
    assert weight_d((18.5, 0), ws) == pytest.approx(1.02, abs=1e-15)
    assert weight_d((9.25, 0), ws) == pytest.approx(1.0506, abs=1e-15)


def test_score_examples():
    one = Trajectory(0, (det(0, (37, 50), 0.49),))
    oracle = math.log(0.49 / 0.51 * 1.0608)
    assert oracle == pytest.approx(0.01902, abs=5e-6)
    assert score(one, ARR) == pytest.approx(oracle, abs=1e-15)
    # P = 0.5 leaves only the weight term
    half = Trajectory(0, (det(0, (37, 50), 0.5),))
    assert score(half, ARR) == pytest.approx(math.log(1.0608), abs=1e-15)
    out = Trajectory(0, (det(0, (0, 30), 0.9), det(1, (500, 500), 0.9)))
    assert score(out, ARR) == 0.0


def test_select_examples():
    res = select(["A", "B", "C"], [frozenset("AB")], {"A": 5.0, "B": 3.0, "C": 2.0})
    assert set(res.chosen) == {"A", "C"} and res.total_score == 7.0
    res = select([0, 1], [], {0: -1.0, 1: -2.0})
    assert res.chosen == () and res.total_score == 0.0
    res = select([0, 1, 2], [], {0: 1.0, 1: -2.0, 2: 0.5})
    assert res.chosen == (0, 2)


def test_search_examples():
    trajs = [Trajectory(0, tuple(det(t, (10.0, 0.0), 0.9) for t in range(3)))]
    ident = search_transforms(trajs, ARR, [Transform()])
    direct = select(trajs, minimal_conflicts(trajs, ARR), {0: score(trajs[0], ARR)}, ARR)
    assert ident.chosen == direct.chosen and ident.total_score == direct.total_score

    res = search_transforms(trajs, ARR, [Transform(), Transform((10.0, 0.0))])
    assert res.transform.translation == (10.0, 0.0)
    assert res.total_score > ident.total_score

    sym = [Trajectory(0, tuple(det(t, (18.5, 0.0), 0.9) for t in range(3)))]
    res = search_transforms(sym, ARR, [Transform((5.0, 0.0)), Transform((32.0, 0.0))])
    assert res.transform.translation == (5.0, 0.0)


# ------------------------------------------------------------------ render


def _flat_dense(n_t=2):
    grids = np.zeros((n_t, 4, 8))
    grids[:, 0, :] = np.arange(8) * 0.1
    return upsample(_seq(grids), 7)


def test_assemble_examples():
    dense = _flat_dense()
    xs, ys = dense.pixel_centers()
    m = Transform((xs[3], ys[3]))
    p01 = tuple(m.apply([37.0, 0.0]).tolist())
    tr = Trajectory(0, (Detection(0, p01, 1.2, 0.9),))
    sel = SelectionResult((0,), m, 1.0, {(0, 0): (0, 1)})
    raw = assemble(sel, [tr], dense, ARR)
    pix = {}
    gx, gy = np.meshgrid(xs, ys)
    for ws, (cx, cy) in zip(ARR.workspaces, m.apply(ARR.centers)):
        inside = (np.hypot(gx - cx, gy - cy) <= ws.radius + 1e-9) & dense.mask
        pix[ws.index] = dense.frames[0][inside].max()
    assert raw[0, 1, 0] == 1.2
    assert raw[0, 0, 0] == pix[(0, 0)] and raw[0, 2, 0] == pix[(0, 2)]
    assert raw[0, 3, 0] == 0 and (raw[1, :, 0] == 0).all()
    assert (raw[:, :, 1] == 0).all()

    a = Trajectory(0, (Detection(0, tuple(m.apply([0.0, 0.0]).tolist()), 0.7, 0.9),))
    b = Trajectory(1, (Detection(0, tuple(m.apply([74.0, 0.0]).tolist()), 0.8, 0.9),))
    sel = SelectionResult((0, 1), m, 1.0, {(0, 0): (0, 0), (1, 0): (0, 2)})
    raw = assemble(sel, [a, b], dense, ARR)
    assert raw[0, 0, 0] == 0.7 and raw[0, 2, 0] == 0.8
    assert raw[0, 1, 0] == pix[(0, 1)] and raw[0, 3, 0] == pix[(0, 3)]


def test_despike_examples():
    assert despike([0, 0, 1, 0, 0], 1 / 8).tolist() == [0, 0, 0, 0, 0]
    ramp = np.linspace(0, 1, 9)
    assert np.array_equal(despike(ramp), ramp)
    out = despike([0, 0.05, 0.1, 0.05, 0], 1 / 8)
    np.testing.assert_allclose(out, [0, 0.05, 0.05, 0.05, 0], atol=1e-15)
    assert despike([0.0, 9.0]).tolist() == [0.0, 9.0]


def test_filter_examples():
    y = butterworth_lowpass(np.full(400, 1.3), 20.0)
    assert abs(y[-1] - 1.3) <= 1e-6
    sos = butterworth_sos(5, 4.0, 20.0)
    h4, h8 = np.abs(sos_response(sos, [4.0, 8.0], 20.0))
    assert abs(h4 - 1 / math.sqrt(2)) <= 1e-6
    r = math.tan(0.4 * math.pi) / math.tan(0.2 * math.pi)
    assert r == pytest.approx(4.236, abs=5e-4)
    assert 20 * math.log10(h8) == pytest.approx(20 * math.log10(1 / math.sqrt(1 + r ** 10)), abs=1e-9)
    assert 20 * math.log10(h8) == pytest.approx(-62.7, abs=0.05)


def test_scale_examples():
    assert scale_output([0.0, 2.96, 3.5]).tolist() == [0.0, 1.0, 1.0]


def test_render_examples():
    out = postprocess(np.zeros((2, 4, 25)), 20.0, RenderParams())
    assert (out == 0).all()
    sig = ActuatorSignal(out, 20.0)
    assert sig.grid == (2, 4) and len(sig) == 25


# --------------------------------------------------------------------- cli


def test_cli_examples(tmp_path):
    save_sequence(synthesize("stroke"), tmp_path / "s.csv")
    out = tmp_path / "o"
    assert main(["pipeline", "--input", str(tmp_path / "s.csv"), "--out-dir", str(out)]) == EXIT_OK
    assert len(json.loads((out / "selection.json").read_text())["chosen"]) >= 1
    save_sequence(_seq(np.zeros((4, 2, 2))), tmp_path / "z.csv")
    assert main(["pipeline", "--input", str(tmp_path / "z.csv"), "--out-dir", str(out)]) == EXIT_DEGENERATE
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"input": "does-not-exist.csv", "render": {"cutoff": 10.0}}))
    assert main(["pipeline", "--config", str(bad)]) == EXIT_CONFIG


def test_synth_examples(tmp_path):
    seq = synthesize("stroke", SynthParams(n_frames=10, velocity=1.0, start_col=0.0, cols=12))
    apex = [int(np.argmax(g[1])) for g in seq.grids()]
    assert apex == list(range(10))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    save_sequence(synthesize("squeeze", SynthParams(noise=0.1), seed=3), a)
    save_sequence(synthesize("squeeze", SynthParams(noise=0.1), seed=3), b)
    assert a.read_bytes() == b.read_bytes()
    tap = synthesize("tap", SynthParams(duration=2))
    assert sum(bool(f.values.any()) for f in tap.frames) == 2


def test_plot_examples(tmp_path):
    save_sequence(synthesize("squeeze"), tmp_path / "s.csv")
    out = tmp_path / "o"
    main(["pipeline", "--input", str(tmp_path / "s.csv"), "--out-dir", str(out)])
    ids = {line.split(",")[0] for line in (out / "trajectories.csv").read_text().splitlines()[1:]}
    svg = plot_artifact(out / "trajectories.csv", tmp_path / "t.svg")
    assert svg.count("<polyline") == len(ids) == 2
    svg = plot_artifact(out / "selection.json", tmp_path / "w.svg")
    assert svg.count('class="workspace"') == 8
    doc = json.loads((out / "selection.json").read_text())
    tx, ty = doc["transform"]["translation"]
    assert doc["workspaces"][0]["center"] == [tx, ty]
    empty = tmp_path / "empty.csv"
    empty.write_text("traj_id,t,x_mm,y_mm,value,prob\n")
    svg = plot_artifact(empty, tmp_path / "e.svg", frames=tmp_path / "s.csv")
    assert "<polyline" not in svg and 'class="grid"' in svg
