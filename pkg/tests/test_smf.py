import math

import numpy as np
import pytest

from oracles import batch_means_se
from ttessel.geometry import ConvexPolygon, Line
from ttessel.models import ExponentialModel
from ttessel.smf import MOVE_CODES, ChainFrozenError, SmfChain
from ttessel.tessellation import Merge, Split, empty

SQ = ConvexPolygon.rectangle(1.0)
CRTT0 = ExponentialModel.crtt(0.0)


def test_first_split_acceptance_ratio():
    ch = SmfChain(CRTT0, SQ, rng=0)
    tess = ch.state
    plan = tess.plan_split(Split(tess.cell_ids[0], Line(0.0, 0.3)))
    ratio, inc = ch._ratio(plan, "split")
    assert ratio == pytest.approx(4 / math.pi)
    tess.apply(plan)
    merge = tess.plan_merge(Merge(tess.internal_segment_ids[0]))
    back, _ = ch._ratio(merge, "merge")
    assert ratio * back == pytest.approx(1.0)


def test_flips_preserving_blocking_count_are_always_accepted(crtt_states):
    ch = SmfChain(ExponentialModel.crtt(0.64), crtt_states[0].copy(), rng=0)
    seen = 0
    for f in ch.state.enumerate_flips():
        plan = ch.state.plan_flip(f)
        if plan is not None and plan.delta.nb == 0:
            ratio, _ = ch._ratio(plan, "flip")
            assert ratio == 1.0
            seen += 1
    assert seen > 0


def test_run_zero_and_trace_length():
    ch = SmfChain(CRTT0, SQ, rng=1)
    ch.run(0)
    assert ch.iteration == 0 and len(ch.energy_trace) == 0
    ch.run(250)
    assert ch.iteration == 250 and len(ch.energy_trace) == 250
    with pytest.raises(ValueError):
        ch.run(-1)


def test_debug_run_with_full_rebuild():
    ch = SmfChain(ExponentialModel.area((1.0, 50.0)), ConvexPolygon.regular(6, 0.8), rng=2,
                  debug=True, full_rebuild_check=True)
    ch.run(400)
    assert sum(ch.accepted.values()) > 50


def test_split_merge_balance_identity():
    ch = SmfChain(ExponentialModel.angle((2.0, 2.0)), SQ, rng=3)
    ch.run(3000)
    net = ch.accepted["split"] - ch.accepted["merge"]
    assert net == ch.state.statistics_basic()[0]
    moves = np.frombuffer(ch.move_trace, dtype=np.int8)
    assert (moves == 1).sum() == ch.accepted["split"]
    assert (moves == 3).sum() == ch.accepted["flip"]


def test_accepted_splits_and_merges_balance():
    ch = SmfChain(CRTT0, SQ, rng=12)
    ch.run(1000)
    ch.accepted = {"split": 0, "merge": 0, "flip": 0}
    ch.run(30_000)
    s, m = ch.accepted["split"], ch.accepted["merge"]
    assert abs(s - m) < 3 * math.sqrt(s + m)


def test_statistics_track_state():
    model = ExponentialModel.area((0.5, 100.0))
    ch = SmfChain(model, SQ, rng=4)
    ch.run(2000)
    assert np.allclose(ch.statistics, model.t(ch.state), rtol=1e-9, atol=1e-12)
    assert ch.energy == pytest.approx(model.energy(ch.state))


def test_energy_stabilizes_after_burnin():
    ch = SmfChain(ExponentialModel.crtt(0.64), SQ, rng=5)
    ch.run(12_500)
    ch.clear_trace()
    ch.run(40_000)
    e = np.asarray(ch.nseint_trace, dtype=float)
    first, second = e[: len(e) // 2], e[len(e) // 2:]
    se = math.hypot(batch_means_se(first), batch_means_se(second))
    assert abs(first.mean() - second.mean()) < 3 * se


def test_sampling_period_meets_renewal_fraction():
    ch = SmfChain(ExponentialModel.crtt(0.64), SQ, rng=6)
    ch.run(5000)
    start = ch.iteration
    p = ch.sampling_period()
    end = ch.iteration
    curve = ch.renewal_fraction_curve(start, end, [p, p - 1] if p > 1 else [p])
    assert curve[0] >= 0.75
    if p > 1:
        assert not curve[1] >= 0.75
    # segment counts one period apart are weakly correlated
    counts = [s.statistics_basic()[0] for s in ch.iter_samples(300, 0, p)]
    c = np.corrcoef(counts[:-1], counts[1:])[0, 1]
    assert c < 0.5


def test_sampling_period_errors():
    ch = SmfChain(ExponentialModel.crtt(-30.0), SQ, rng=7)
    with pytest.raises(ValueError):
        ch.sampling_period(1.5)
    with pytest.raises(ChainFrozenError):
        ch.sampling_period(pilot=500, max_pilot=2000)


def test_sample_positions():
    ch = SmfChain(CRTT0, SQ, rng=8)
    out = ch.sample(3, 100, 10)
    assert len(out) == 3 and ch.iteration == 120
    live = ch.state.n_cells
    out[-1].split(out[-1].propose_split(np.random.default_rng(0)).op)  # copies are independent
    assert ch.state.n_cells == live and out[-1].n_cells == live + 1
    with pytest.raises(ValueError):
        ch.sample(1, -1, 1)


def test_trace_rows():
    ch = SmfChain(CRTT0, SQ, rng=9)
    ch.run(20)
    rows = list(ch.trace_rows())
    assert [r[0] for r in rows] == list(range(1, 21))
    assert all(len(r) == 6 and r[5] in MOVE_CODES.values() for r in rows)
    ch.clear_trace()
    ch.run(5)
    assert [r[0] for r in ch.trace_rows()] == list(range(21, 26))


def test_invalid_mix():
    with pytest.raises(ValueError):
        SmfChain(CRTT0, SQ, mix=(0.5, 0.5, 0.0))


def test_chain_is_reproducible():
    a = SmfChain(ExponentialModel.crtt(0.64), SQ, rng=10).run(3000)
    b = SmfChain(ExponentialModel.crtt(0.64), SQ, rng=10).run(3000)
    assert list(a.energy_trace) == list(b.energy_trace)
    assert a.state.to_json() == b.state.to_json()


def test_empty_start_from_tessellation():
    ch = SmfChain(CRTT0, empty(SQ), rng=11)
    ch.run(10)
    assert ch.state.n_cells >= 1
