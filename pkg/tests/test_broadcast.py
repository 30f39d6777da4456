import pytest

from genmpc import broadcast
from genmpc.broadcast import BOT, AcastCore, BcCore, bc_ticks
from genmpc.simnet import CrashSilent, Equivocate, Strategy

from runners import Feeder, Probe, honest_pids, run_cores, threshold_struct


def acast_factory(struct, sender, value):
    def fac(env):
        return AcastCore(env, struct, sender,
                         value=(value if env.me == sender else None))
    return fac


# ---------------------------------------------------------------------------
# reliable broadcast
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n,t", [(4, 1), (6, 1), (8, 2)])
def test_acast_sync_honest_sender_exact_time(n, t):
    zs = threshold_struct(n, t)
    net, log = run_cores(n, acast_factory(zs, 1, ("m", 42)), budget=50)
    assert log == {p: (3 * net.delta, ("m", 42)) for p in range(1, n + 1)}


def test_acast_sync_respects_delay_unit():
    zs = threshold_struct(4, 1)
    _, log = run_cores(4, acast_factory(zs, 1, 5), delta=3, budget=50)
    assert log == {p: (9, 5) for p in range(1, 5)}


def test_acast_sync_with_silent_corrupt_parties():
    # silent corrupt receivers cannot stop delivery of an honest value
    zs = threshold_struct(8, 2)
    corrupt = {7: CrashSilent(), 8: CrashSilent()}
    _, log = run_cores(8, acast_factory(zs, 1, 11), corrupt=corrupt,
                       budget=50)
    assert all(log[p] == (3, 11) for p in honest_pids(8, corrupt))


def test_acast_async_honest_sender_delivers():
    zs = threshold_struct(4, 1)
    for seed in range(10):
        net, log = run_cores(4, acast_factory(zs, 1, 23), mode="async",
                             seed=seed, budget=400)
        assert not net.trace.timed_out
        assert all(log[p][1] == 23 for p in range(1, 5))


@pytest.mark.parametrize("mode", ["sync", "async"])
def test_acast_corrupt_sender_never_splits(mode):
    # an equivocating sender may or may not get a value delivered, but all
    # honest deliveries agree
    zs = threshold_struct(4, 1)
    for seed in range(25):
        _, log = run_cores(
            4, acast_factory(zs, 1, 7), corrupt={1: Equivocate()},
            mode=mode, seed=seed, budget=400)
        got = {log[p][1] for p in honest_pids(4, {1: None}) if p in log}
        assert len(got) <= 1, (seed, log)


class ForgeReady(Strategy):
    """Replaces every outgoing envelope with a ready vote for a bogus value."""

    def transform(self, t, src, dst, tag, body):
        return [(dst, tag, ("ready", "bogus"), 0)]


def test_acast_corrupt_minority_cannot_forge():
    zs = threshold_struct(4, 1)
    corrupt = {2: ForgeReady()}
    _, log = run_cores(4, acast_factory(zs, 1, 7), corrupt=corrupt,
                       budget=50)
    for p in honest_pids(4, corrupt):
        assert log[p] == (3, 7)


def test_acast_drops_malformed_bodies():
    class Garbage(Strategy):
        def transform(self, t, src, dst, tag, body):
            return [(dst, tag, ("init", ["un", "hashable"]), 0),
                    (dst, tag, "flat", 0), (dst, tag, ("init",), 0)]

    zs = threshold_struct(4, 1)
    corrupt = {1: Garbage()}
    _, log = run_cores(4, acast_factory(zs, 1, 7), corrupt=corrupt,
                       budget=50)
    assert not any(p in log for p in honest_pids(4, corrupt))


# ---------------------------------------------------------------------------
# deadline broadcast
# ---------------------------------------------------------------------------

def bc_factory(struct, sender, value, upgrades=None, feed_at=None):
    def fac(env):
        on_up = None
        if upgrades is not None:
            on_up = lambda v, e=env: upgrades.__setitem__(e.me, (e.now, v))
        mk = lambda: BcCore(env, struct, sender,
                            value=(value if env.me == sender
                                   and feed_at is None else None),
                            on_upgrade=on_up)
        if feed_at is not None and env.me == sender:
            return Feeder(env, mk, feed_at, lambda c: c.begin(value))
        return mk()
    return fac


def test_bc_sync_honest_sender_regular_at_deadline():
    n, zs = 4, threshold_struct(4, 1)
    deadline = bc_ticks(n, 1)
    assert deadline == 15
    net, log = run_cores(n, bc_factory(zs, 2, ("blk", 5)), budget=60)
    assert log == {p: (deadline, ("blk", 5)) for p in range(1, n + 1)}


def test_bc_sync_corrupt_sender_consistency_and_fallback_window():
    n, zs = 4, threshold_struct(4, 1)
    deadline = bc_ticks(n, 1)
    for seed in range(20):
        upgrades = {}
        corrupt = {1: Equivocate()}
        net, log = run_cores(n, bc_factory(zs, 1, 9, upgrades=upgrades),
                             corrupt=corrupt, seed=seed, budget=60)
        hon = honest_pids(n, corrupt)
        regs = {p: log[p] for p in hon}
        assert all(t == deadline for t, _ in regs.values())
        vals = {v for _, v in regs.values() if v is not BOT}
        assert len(vals) <= 1, (seed, regs)
        if vals:
            m = vals.pop()
            # every other honest party upgrades to the same value within
            # two delay units of the deadline
            for p in hon:
                core = net.party(p).machine(("core",)).core
                assert core.value == m, (seed, p)
                if regs[p][1] is BOT:
                    up_t, up_v = upgrades[p]
                    assert up_v == m and up_t <= deadline + 2 * net.delta


def test_bc_sync_late_sender_rides_fallback():
    n, zs = 4, threshold_struct(4, 1)
    deadline = bc_ticks(n, 1)
    # begin at 10: the reliable broadcast lands before the deadline but the
    # vote already settled on BOT, so the upgrade happens at the close tick
    upgrades = {}
    net, log = run_cores(n, bc_factory(zs, 1, 6, upgrades=upgrades,
                                       feed_at=10), budget=60)
    assert all(log[p] == (deadline, BOT) for p in range(1, n + 1))
    assert all(upgrades[p] == (deadline, 6) for p in range(1, n + 1))

    # begin after the deadline: upgrade happens on delivery
    upgrades = {}
    net, log = run_cores(n, bc_factory(zs, 1, 6, upgrades=upgrades,
                                       feed_at=deadline + 1), budget=60)
    assert all(log[p] == (deadline, BOT) for p in range(1, n + 1))
    assert all(upgrades[p] == (deadline + 4, 6) for p in range(1, n + 1))


def test_bc_async_fallback_validity():
    # with an honest sender, every honest party ends holding the sent value
    # even when the deadline passes first
    n, zs = 4, threshold_struct(4, 1)
    deadline = bc_ticks(n, 1)
    for seed in range(10):
        net, log = run_cores(n, bc_factory(zs, 3, 8), mode="async",
                             seed=seed, budget=600)
        assert not net.trace.timed_out
        for p in range(1, n + 1):
            t, v = log[p]
            assert t == deadline and v in (8, BOT)
            assert net.party(p).machine(("core",)).core.value == 8


def test_bc_async_regular_outputs_consistent():
    n, zs = 4, threshold_struct(4, 1)
    for seed in range(15):
        corrupt = {2: Equivocate()}
        net, log = run_cores(n, bc_factory(zs, 2, 12), corrupt=corrupt,
                             mode="async", seed=seed, budget=600)
        hon = honest_pids(n, corrupt)
        vals = {log[p][1] for p in hon if log[p][1] is not BOT}
        assert len(vals) <= 1
        finals = {net.party(p).machine(("core",)).core.value
                  for p in hon}
        finals.discard(BOT)
        assert len(finals) <= 1
