import pytest

from genmpc import agreement
from genmpc.agreement import (
    BOT,
    REFERENCE_ABA_K,
    AbaCore,
    BaCore,
    SbaCore,
    ba_ticks,
    sba_ticks,
)
from genmpc.broadcast import bc_ticks
from genmpc.simnet import CrashSilent, Equivocate

from runners import Feeder, honest_pids, run_cores, threshold_struct


def sba_factory(struct, inputs):
    def fac(env):
        return SbaCore(env, struct, anchor=0,
                       input_fn=lambda me=env.me: inputs[me])
    return fac


# ---------------------------------------------------------------------------
# deadline-gridded agreement
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n,t", [(4, 1), (8, 2)])
def test_sba_sync_validity_exact_deadline(n, t):
    zs = threshold_struct(n, t)
    inputs = {p: ("v", 3) for p in range(1, n + 1)}
    _, log = run_cores(n, sba_factory(zs, inputs), budget=3 * n + 10)
    assert log == {p: (sba_ticks(n, 1), ("v", 3)) for p in range(1, n + 1)}


def test_sba_sync_validity_of_none_input():
    # None is an ordinary agreement value here
    n, zs = 4, threshold_struct(4, 1)
    inputs = dict.fromkeys(range(1, 5))
    _, log = run_cores(4, sba_factory(zs, inputs), budget=30)
    assert log == {p: (12, None) for p in range(1, 5)}


@pytest.mark.parametrize("strat", [Equivocate, CrashSilent])
def test_sba_sync_consistency_mixed_inputs_with_corruption(strat):
    n, zs = 4, threshold_struct(4, 1)
    for seed in range(15):
        corrupt = {(seed % n) + 1: strat()}
        inputs = {p: p % 3 for p in range(1, n + 1)}
        _, log = run_cores(n, sba_factory(zs, inputs), corrupt=corrupt,
                           seed=seed, budget=30)
        hon = honest_pids(n, corrupt)
        outs = {log[p] for p in hon}
        assert len(outs) == 1, (seed, log)
        t, v = outs.pop()
        assert t == sba_ticks(n, 1) and v is not BOT


def test_sba_async_outputs_at_deadline_and_never_split():
    n, zs = 4, threshold_struct(4, 1)
    inputs = {p: p % 2 for p in range(1, n + 1)}
    for seed in range(10):
        net, log = run_cores(n, sba_factory(zs, inputs), mode="async",
                             seed=seed, budget=400)
        assert all(log[p][0] == sba_ticks(n, 1) for p in range(1, n + 1))
        vals = {log[p][1] for p in range(1, n + 1)} - {BOT}
        assert len(vals) <= 1, (seed, log)


def test_sba_async_all_delayed_gives_bot():
    n, zs = 4, threshold_struct(4, 1)
    inputs = {p: 1 for p in range(1, n + 1)}
    net, log = run_cores(n, sba_factory(zs, inputs), mode="async",
                         scheduler="max-delay", budget=300)
    assert log == {p: (sba_ticks(n, 1), BOT) for p in range(1, n + 1)}
    assert not net.trace.timed_out


# ---------------------------------------------------------------------------
# randomized bit agreement
# ---------------------------------------------------------------------------

def aba_factory(struct, inputs):
    def fac(env):
        core = AbaCore(env, struct)
        core.start(inputs[env.me])
        return core
    return fac


def test_aba_same_input_sync_times_match_frozen_constant():
    # the frozen constant is the worst case over both unanimous inputs
    n, zs = 4, threshold_struct(4, 1)
    seen = []
    for b in (1, 0):
        inputs = {p: b for p in range(1, n + 1)}
        net, log = run_cores(n, aba_factory(zs, inputs), budget=60)
        assert {v for _, v in log.values()} == {b}
        times = {t for t, _ in log.values()}
        assert len(times) == 1
        seen.append(times.pop() // net.delta)
    assert max(seen) == REFERENCE_ABA_K, seen


def test_aba_validity_with_corruption():
    n, zs = 4, threshold_struct(4, 1)
    for b in (0, 1):
        for seed in range(5):
            corrupt = {3: Equivocate({"p": 2})}
            inputs = {p: b for p in range(1, n + 1)}
            _, log = run_cores(n, aba_factory(zs, inputs), corrupt=corrupt,
                               seed=seed, budget=80)
            assert all(log[p] == (log[honest_pids(n, corrupt)[0]][0], b)
                       for p in honest_pids(n, corrupt)), (seed, log)


@pytest.mark.parametrize("mode", ["sync", "async"])
def test_aba_mixed_inputs_agree(mode):
    n, zs = 4, threshold_struct(4, 1)
    for seed in range(12):
        inputs = {p: (p + seed) % 2 for p in range(1, n + 1)}
        corrupt = {1: Equivocate({"p": 2})} if seed % 2 else {}
        net, log = run_cores(n, aba_factory(zs, inputs), corrupt=corrupt,
                             mode=mode, seed=seed, budget=1500)
        assert not net.trace.timed_out
        hon = honest_pids(n, corrupt)
        assert all(p in log for p in hon), (seed, log)
        assert len({log[p][1] for p in hon}) == 1, (seed, log)


# ---------------------------------------------------------------------------
# composed bit agreement
# ---------------------------------------------------------------------------

def ba_factory(struct, inputs, feed_at=None):
    def fac(env):
        if feed_at is None or env.me not in feed_at:
            return BaCore(env, struct, my_input=inputs[env.me])
        mk = lambda: BaCore(env, struct)
        return Feeder(env, mk, feed_at[env.me],
                      lambda c: c.set_input(inputs[env.me]))
    return fac


def test_ba_sync_same_input_hits_deadline():
    n, zs = 4, threshold_struct(4, 1)
    for b in (0, 1):
        inputs = {p: b for p in range(1, n + 1)}
        net, log = run_cores(n, ba_factory(zs, inputs), budget=80)
        deadline = ba_ticks(n, net.delta)
        assert all(v == b for _, v in log.values())
        assert all(t <= deadline for t, _ in log.values()), log
        assert len({t for t, _ in log.values()}) == 1


def test_ba_sync_mixed_inputs_agree_by_deadline():
    n, zs = 4, threshold_struct(4, 1)
    for pattern in range(1, 15):
        inputs = {p: (pattern >> (p - 1)) & 1 for p in range(1, n + 1)}
        net, log = run_cores(n, ba_factory(zs, inputs), budget=80)
        vals = {v for _, v in log.values()}
        assert len(vals) == 1, (pattern, log)
        assert all(t <= ba_ticks(n, 1) for t, _ in log.values())


def test_ba_sync_with_corruption():
    n, zs = 4, threshold_struct(4, 1)
    for seed in range(12):
        corrupt = {(seed % n) + 1:
                   CrashSilent() if seed % 2 else Equivocate({"p": 2})}
        inputs = {p: (p + seed) % 2 for p in range(1, n + 1)}
        net, log = run_cores(n, ba_factory(zs, inputs), corrupt=corrupt,
                             seed=seed, budget=200)
        hon = honest_pids(n, corrupt)
        assert all(p in log for p in hon)
        assert len({log[p][1] for p in hon}) == 1, (seed, log)


def test_ba_async_agreement_over_seeds():
    n, zs = 4, threshold_struct(4, 1)
    for seed in range(10):
        inputs = {p: (p + seed) % 2 for p in range(1, n + 1)}
        corrupt = {2: Equivocate({"p": 2})} if seed % 3 == 0 else {}
        net, log = run_cores(n, ba_factory(zs, inputs), corrupt=corrupt,
                             mode="async", seed=seed, budget=2500)
        assert not net.trace.timed_out, seed
        hon = honest_pids(n, corrupt)
        assert all(p in log for p in hon), (seed, log)
        assert len({log[p][1] for p in hon}) == 1, (seed, log)


def test_ba_unanimous_late_inputs_keep_validity():
    # half the parties provide their input two ticks late: their broadcast
    # slots ride the fallback path, the vote branch falls back to own
    # inputs, and unanimity still wins
    n, zs = 4, threshold_struct(4, 1)
    inputs = {p: 1 for p in range(1, n + 1)}
    net, log = run_cores(n, ba_factory(zs, inputs, feed_at={3: 2, 4: 2}),
                         budget=120)
    assert all(log[p][1] == 1 for p in range(1, n + 1)), log


def test_ba_inputs_after_close_still_finish():
    # inputs that show up only after the broadcast deadline leave the vote
    # waiting on set_input; agreement still completes with the right bit
    n, zs = 4, threshold_struct(4, 1)
    late = bc_ticks(n, 1) + 2
    inputs = {p: 1 for p in range(1, n + 1)}
    net, log = run_cores(
        n, ba_factory(zs, inputs, feed_at={3: late, 4: late}), budget=200)
    assert all(log[p][1] == 1 for p in range(1, n + 1)), log
