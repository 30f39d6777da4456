"""Offline phase: common-subset agreement, shared multiplication, and
multiplication-triple preprocessing.

* AcsMachine -- a group of members each deal a vector of values through
  per-value verified-sharing instances; one bit-agreement slot per member
  settles whether its dealings count. A party votes 1 for a member once
  all of that member's sharings produced output locally, and votes 0 on
  every still-open slot once the members already carrying a 1 decision
  leave out only a tolerable set. The decided 1-set is the common subset:
  identical everywhere, missing only a tolerable part of the group, and
  with every included member's values committed.

* MultMachine -- multiplies two shared values. For every ordered pair of
  addend indices (l, m), the parties holding both addends each share
  their local product through a common-subset instance; the adopted
  sharings are cross-checked by publicly opening their differences. If
  the members agree, the first member's sharing stands for that pair;
  otherwise both addends are opened and the pair falls back to the
  default sharing of their product. The product sharing is the sum of
  all pair summands.

* PreprocessingMachine -- generates multiplication triples: every party
  contributes random pairs through one group-wide common-subset
  instance, the contributions of the surviving members are summed into
  [a] and [b], and [c] comes from one multiplication per triple.

Synchronous deadlines compose: ``acs_ticks`` after a common start every
honest party holds the subset, ``mult_ticks`` covers agreement plus the
two opening rounds, and ``preprocessing_ticks`` stacks one multiplication
on top of the subset round that collects the random pairs.
"""

from collections import namedtuple

from .agreement import BaCore, ba_ticks
from .sharing import SecretSharing, make_rng, view_add, view_sub
from .simnet import Bank, Machine, Net
from .sharing import RecCore
from .structures import (SharingSpec, full_mask, parties_of,
                         q_condition_mixed)
from .vss import VssMachine, vss_ticks

AcsResult = namedtuple("AcsResult", ["cs", "shares"])
"""Common subset as a bitmask plus {(member, index): share view}.

The share dict is live: sharings of subset members that settle after the
subset itself keep landing in it.
"""

TripleBatch = namedtuple("TripleBatch", ["a", "b", "c"])
"""Per-party views of the triple components, one entry per triple."""


def acs_ticks(n, delta):
    """Synchronous output deadline of AcsMachine relative to its start."""
    return vss_ticks(n, delta) + 2 * ba_ticks(n, delta)


def mult_ticks(n, delta):
    """Synchronous output deadline of MultMachine relative to its start."""
    return acs_ticks(n, delta) + 2 * delta


def preprocessing_ticks(n, delta):
    """Synchronous deadline of PreprocessingMachine relative to its start."""
    return acs_ticks(n, delta) + mult_ticks(n, delta)


class AcsMachine(Bank):
    """One common-subset instance over a member group.

    ``group`` is a bitmask of the dealing members; all parties run the
    instance and vote, members also deal. ``nvals`` values are dealt per
    member, each through its own verified-sharing instance, and one
    bit-agreement slot per member aggregates them: the slot only turns 1
    if some honest party saw the member's complete batch. ``inputs`` is
    this party's own value vector (members only).

    The group must not be ruined by one tolerable set of each kind: a
    union of one ``struct`` member and one ``za`` member never covers it,
    so the subset always keeps an honest member.

    Output: AcsResult. In a timely network the subset lands exactly
    ``acs_ticks`` after the start and contains every honest member.
    """

    def __init__(self, struct, za, p, group, nvals=1, inputs=None,
                 quiet=True):
        Bank.__init__(self)
        assert group and group & ~full_mask(struct.n) == 0
        assert q_condition_mixed(struct.n, struct, za, 1, 1, scope=group), \
            "group can be covered by one tolerated set of each kind"
        assert inputs is None or len(inputs) == nvals
        self.struct = struct
        self.za = za
        self.spec = SharingSpec(struct)
        self.p = p
        self.group = group
        self.members = parties_of(group)
        self.nvals = nvals
        self.inputs = inputs
        self.quiet = quiet
        self.shares = {}        # {(member, index): own view of that sharing}
        self.ba_out = {}        # {member: decided bit}
        self.cs = None
        self.share_cb = None    # parent hook: called as share_cb(member, idx)

    def on_start(self):
        Bank.on_start(self)
        net = self.host.net
        me = self.host.pid
        d = net.delta
        a = -(-net.t // d) * d
        self.t_vss = a + vss_ticks(net.n, d)
        self.t_acs = a + acs_ticks(net.n, d)
        self.host.at(self.t_acs, self.tag, ("fin",))
        base = tuple(self.tag)
        for j in self.members:
            for l in range(self.nvals):
                secrets = None
                if j == me and self.inputs is not None:
                    secrets = [self.inputs[l]]
                self.host.spawn(base + ("v", j, l), VssMachine(
                    self.struct, self.za, self.p, j, nsecrets=1,
                    secrets=secrets, quiet=self.quiet), parent=self)
            self.add_slot(("ba", j), lambda env: BaCore(
                env, self.struct, anchor=self.t_vss, quiet=self.quiet))

    # -- votes -----------------------------------------------------------------

    def on_child_output(self, tag, value):
        j, l = tag[-2], tag[-1]
        self.shares[(j, l)] = value[0]
        if all((j, i) in self.shares for i in range(self.nvals)):
            slot = self.slots[("ba", j)]
            if slot.input is None:
                slot.set_input(1)
        if self.share_cb is not None:
            self.share_cb(j, l)

    def on_slot_output(self, sid, value):
        self.ba_out[sid[1]] = value
        ones = 0
        for j, b in self.ba_out.items():
            if b == 1:
                ones |= 1 << (j - 1)
        if self.struct.covers(self.group & ~ones):
            # the members still undecided-or-0 could all be corrupt; stop
            # waiting for them
            for j in self.members:
                slot = self.slots[("ba", j)]
                if slot.input is None:
                    slot.set_input(0)
        self._maybe_finish()

    def on_timer(self, key):
        if key == ("fin",):
            self._maybe_finish()
        else:
            Bank.on_timer(self, key)

    def _maybe_finish(self):
        if self.done or len(self.ba_out) < len(self.members):
            return
        if self.host.net.t < self.t_acs:
            return  # the ("fin",) timer re-checks exactly at the deadline
        self.cs = 0
        for j, b in self.ba_out.items():
            if b == 1:
                self.cs |= 1 << (j - 1)
        self.finish(AcsResult(self.cs, self.shares))


class MultMachine(Bank):
    """Shared multiplication of two values.

    ``va`` and ``vb`` are this party's share views of the factors. Every
    ordered addend-index pair (l, m) gets a common-subset instance over
    the parties holding both addends, each dealing its local product
    a_l*b_m; the surviving sharings are compared by publicly opening the
    differences to the first one, and a mismatch opens both addends and
    replaces the pair's summand with the default sharing of the product.
    The output view is the sum over all pair summands.

    In a timely network every honest party finishes exactly
    ``mult_ticks`` after the start: the subsets land at ``acs_ticks``,
    the difference openings one delay later, and the addend openings of
    mismatched pairs one more.
    """

    def __init__(self, struct, za, p, va, vb, quiet=True):
        Bank.__init__(self)
        self.struct = struct
        self.za = za
        self.spec = SharingSpec(struct)
        self.p = p
        self.va = va
        self.vb = vb
        self.quiet = quiet
        q = self.spec.q
        self.pairs = [(l, m) for l in range(1, q + 1) for m in range(1, q + 1)]
        self.acs = {}        # {(l, m): child machine}
        self.r_sets = {}     # {(l, m): member list of the pair's subset}
        self.rec_open = {}   # {(l, m): tick the difference slot opened}
        self.diffs = {}      # {(l, m): opened difference values}
        self.opened = {}     # {(l, m): (a_l, b_m)} for mismatched pairs
        self.summands = {}   # {(l, m): adopted share view}

    def on_start(self):
        Bank.on_start(self)
        net = self.host.net
        me = self.host.pid
        d = net.delta
        a = -(-net.t // d) * d
        self.t_mult = a + mult_ticks(net.n, d)
        self.host.at(self.t_mult, self.tag, ("fin",))
        base = tuple(self.tag)
        for l, m in self.pairs:
            group = self.spec.holders(l) & self.spec.holders(m)
            inputs = None
            if group >> (me - 1) & 1:
                inputs = [self.va[l] * self.vb[m] % self.p]
            child = AcsMachine(self.struct, self.za, self.p, group,
                               nvals=1, inputs=inputs, quiet=self.quiet)
            self.host.spawn(base + ("acs", l, m), child, parent=self)
            child.share_cb = lambda j, i, pair=(l, m): self._try_pair(pair)
            self.acs[(l, m)] = child

    # -- per-pair settlement -----------------------------------------------------

    def on_child_output(self, tag, value):
        self._try_pair((tag[-2], tag[-1]))

    def _try_pair(self, pair):
        child = self.acs[pair]
        if not child.done or pair in self.r_sets:
            return
        members = parties_of(child.cs)
        if not all((j, 0) in child.shares for j in members):
            return  # a subset member's sharing is still settling
        self.r_sets[pair] = members
        if len(members) == 1:
            self._pair_done(pair, child.shares[(members[0], 0)])
            return
        first = child.shares[(members[0], 0)]
        diffs = [view_sub(first, child.shares[(j, 0)], self.p)
                 for j in members[1:]]
        self.rec_open[pair] = self.host.net.t
        self.add_slot(("d",) + pair, lambda env: RecCore(
            env, self.struct, self.spec, self.p, diffs))

    def on_slot_output(self, sid, vals):
        pair = sid[1:]
        if sid[0] == "d":
            self.diffs[pair] = vals
            if any(vals):
                # the pair's members dealt conflicting products: open both
                # addends and fall back to the default sharing
                l, m = pair
                self.add_slot(("o",) + pair, lambda env: RecCore(
                    env, self.struct, self.spec, self.p,
                    [self.va, self.vb], needs=[(l,), (m,)]))
            else:
                members = self.r_sets[pair]
                self._pair_done(pair, self.acs[pair].shares[(members[0], 0)])
        else:
            av, bv = vals
            self.opened[pair] = (av, bv)
            prod = av * bv % self.p
            self._pair_done(pair, {m: prod if m == 1 else 0
                                   for m in self.spec.shares_of(self.host.pid)})

    def _pair_done(self, pair, view):
        self.summands[pair] = view
        self._maybe_finish()

    def on_timer(self, key):
        if key == ("fin",):
            self._maybe_finish()
        else:
            Bank.on_timer(self, key)

    def _maybe_finish(self):
        if self.done or len(self.summands) < len(self.pairs):
            return
        if self.host.net.t < self.t_mult:
            return
        total = self.summands[self.pairs[0]]
        for pair in self.pairs[1:]:
            total = view_add(total, self.summands[pair], self.p)
        self.finish(total)


class PreprocessingMachine(Machine):
    """Multiplication-triple generation.

    Every party contributes ``ntriples`` random value pairs through one
    group-wide common-subset instance; [a] and [b] of each triple are the
    sums of the surviving members' contributions, and [c] comes from one
    shared multiplication per triple. ``pairs`` overrides this party's
    contributions (by default they are drawn from the run seed).

    Output: TripleBatch of this party's views. In a timely network it
    lands exactly ``preprocessing_ticks`` after the start.
    """

    def __init__(self, struct, za, p, ntriples=1, pairs=None, quiet=True):
        assert pairs is None or len(pairs) == ntriples
        self.struct = struct
        self.za = za
        self.p = p
        self.ntriples = ntriples
        self.pairs = pairs
        self.quiet = quiet
        self.acs = None
        self.cs = None
        self.va = {}
        self.vb = {}
        self.vc = {}
        self.mults_up = False

    def on_start(self):
        net = self.host.net
        me = self.host.pid
        d = net.delta
        a = -(-net.t // d) * d
        self.t_pre = a + preprocessing_ticks(net.n, d)
        self.host.at(self.t_pre, self.tag, ("fin",))
        if self.pairs is None:
            rng = make_rng(net.seed, "triples", me)
            self.pairs = [(rng.randrange(self.p), rng.randrange(self.p))
                          for _ in range(self.ntriples)]
        inputs = [v for ab in self.pairs for v in ab]
        self.acs = AcsMachine(self.struct, self.za, self.p,
                              full_mask(net.n), nvals=2 * self.ntriples,
                              inputs=inputs, quiet=self.quiet)
        self.host.spawn(tuple(self.tag) + ("acs",), self.acs, parent=self)
        self.acs.share_cb = lambda j, l: self._try_mults()

    def on_child_output(self, tag, value):
        if tag[-1] == "acs":
            self._try_mults()
        else:
            self.vc[tag[-1]] = value
            self._maybe_finish()

    def _try_mults(self):
        if self.mults_up or not self.acs.done:
            return
        members = parties_of(self.acs.cs)
        if not all((j, l) in self.acs.shares
                   for j in members for l in range(2 * self.ntriples)):
            return
        self.mults_up = True
        self.cs = self.acs.cs
        for k in range(self.ntriples):
            va = self.acs.shares[(members[0], 2 * k)]
            vb = self.acs.shares[(members[0], 2 * k + 1)]
            for j in members[1:]:
                va = view_add(va, self.acs.shares[(j, 2 * k)], self.p)
                vb = view_add(vb, self.acs.shares[(j, 2 * k + 1)], self.p)
            self.va[k] = va
            self.vb[k] = vb
            self.host.spawn(tuple(self.tag) + ("mult", k), MultMachine(
                self.struct, self.za, self.p, va, vb, quiet=self.quiet),
                parent=self)

    def on_timer(self, key):
        if key == ("fin",):
            self._maybe_finish()

    def _maybe_finish(self):
        if self.done or len(self.vc) < self.ntriples:
            return
        if self.host.net.t < self.t_pre:
            return
        self.finish(TripleBatch(
            tuple(self.va[k] for k in range(self.ntriples)),
            tuple(self.vb[k] for k in range(self.ntriples)),
            tuple(self.vc[k] for k in range(self.ntriples))))


# --------------------------------------------------------------------------
# runners
# --------------------------------------------------------------------------

def _fresh_net(n, mode, delta, scheduler, budget, seed, trace_mode, corrupt,
               monitors):
    net = Net(n, mode=mode, delta=delta, scheduler=scheduler, budget=budget,
              seed=seed, trace_mode=trace_mode)
    net.monitors.extend(monitors)
    corrupt = corrupt or {}
    for pid in range(1, n + 1):
        net.add_party(pid, corrupt.get(pid))
    return net


def acs_run(struct, za, p, group=None, inputs=None, nvals=None, mode="sync",
            seed=0, delta=1, scheduler="eventual", budget=None, corrupt=None,
            quiet=True, until=None, trace_mode="digest", tag=("acs",),
            monitors=()):
    """Run one common-subset instance over a fresh network.

    ``group`` is the member bitmask (default: everyone); ``inputs`` maps
    member id -> its value vector. Returns (net, machines).
    """
    n = struct.n
    if group is None:
        group = full_mask(n)
    inputs = inputs or {}
    if nvals is None:
        nvals = len(next(iter(inputs.values()))) if inputs else 1
    if budget is None:
        budget = 40 * acs_ticks(n, delta)
    net = _fresh_net(n, mode, delta, scheduler, budget, seed, trace_mode,
                     corrupt, monitors)
    machines = {}
    for pid in range(1, n + 1):
        machines[pid] = net.party(pid).spawn(tag, AcsMachine(
            struct, za, p, group, nvals=nvals, inputs=inputs.get(pid),
            quiet=quiet))
    net.run(until=until)
    return net, machines


def share_views(spec, p, value, rng):
    """Deal ``value`` harness-side; returns ({pid: view}, ground truth)."""
    sh = SecretSharing.deal(spec, p, value, rng)
    return {pid: sh.view_of(pid) for pid in range(1, spec.n + 1)}, sh


def mult_run(struct, za, p, a=None, b=None, views_a=None, views_b=None,
             mode="sync", seed=0, delta=1, scheduler="eventual", budget=None,
             corrupt=None, quiet=True, until=None, trace_mode="digest",
             tag=("mult",), monitors=()):
    """Run one shared multiplication over a fresh network.

    Factors come either as plaintext ``a``/``b`` (dealt here from the run
    seed) or as explicit per-party view maps (``views_a``/``views_b``),
    which lets a test hand a corrupt party inconsistent views. Returns
    (net, machines).
    """
    n = struct.n
    spec = SharingSpec(struct)
    if views_a is None:
        rng = make_rng(seed, "mult-in")
        views_a, _ = share_views(spec, p, a, rng)
        views_b, _ = share_views(spec, p, b, rng)
    if budget is None:
        budget = 40 * mult_ticks(n, delta)
    net = _fresh_net(n, mode, delta, scheduler, budget, seed, trace_mode,
                     corrupt, monitors)
    machines = {}
    for pid in range(1, n + 1):
        machines[pid] = net.party(pid).spawn(tag, MultMachine(
            struct, za, p, views_a[pid], views_b[pid], quiet=quiet))
    net.run(until=until)
    return net, machines


def preprocessing_run(struct, za, p, ntriples=1, pairs=None, mode="sync",
                      seed=0, delta=1, scheduler="eventual", budget=None,
                      corrupt=None, quiet=True, until=None,
                      trace_mode="digest", tag=("pre",), monitors=()):
    """Run triple preprocessing over a fresh network.

    ``pairs`` maps party id -> its list of (a, b) contributions; parties
    absent from it draw random ones from the run seed. Returns
    (net, machines).
    """
    n = struct.n
    pairs = pairs or {}
    if budget is None:
        budget = 40 * preprocessing_ticks(n, delta)
    net = _fresh_net(n, mode, delta, scheduler, budget, seed, trace_mode,
                     corrupt, monitors)
    machines = {}
    for pid in range(1, n + 1):
        machines[pid] = net.party(pid).spawn(tag, PreprocessingMachine(
            struct, za, p, ntriples=ntriples, pairs=pairs.get(pid),
            quiet=quiet))
    net.run(until=until)
    return net, machines
