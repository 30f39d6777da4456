"""Agreement cores: repeated-king voting, randomized bit agreement, and
the broadcast-then-vote bit agreement composed from both.

* SbaCore -- deadline-gridded agreement over arbitrary encodable values
  (None plays the role of "no value"). Every party serves as king for one
  3-tick-unit phase. Within a phase: everyone sends its preference; a
  party that sees one value preferred by a full complement set P \\ Z
  proposes it; proposals from a set that cannot be all-corrupt adopt the
  value early, so the phase king's own preference is fixed before the
  king echoes it; at the phase close a full complement set of proposals
  wins outright, otherwise the king's echo is adopted. The final output
  is the last preference if the outright rule fired in the final phase
  and BOT otherwise, which keeps the deadline hard even when message
  delays are unbounded: the grid runs on the local clock alone.

* AbaCore -- message-driven randomized bit agreement with a common coin.
  No deadlines; decisions are announced and an announcement quorum lets
  everyone finish, so the instance terminates even for parties that
  joined late.

* BaCore -- the composition used by higher layers: everyone broadcasts
  its input bit through a deadline-broadcast slot, derives a seed bit
  from the regular outputs, and runs the randomized agreement on the
  seed. Inputs may be provided late; the slot then rides the broadcast
  fallback path and the randomized agreement starts as soon as the input
  arrives.
"""

from functools import partial

from . import broadcast
from .simnet import Core, NsEnv, encode_payload, wire_ok
from .structures import full_mask

BOT = None
_NO = object()

SBA_TICKS_PER_PHASE = 3

# Same-input synchronous runs of AbaCore decide within this many delay
# units of the start (deterministic first two round coins: 1 then 0).
# Frozen here and verified by measurement in the test suite.
REFERENCE_ABA_K = 4


def sba_ticks(n, delta):
    """Output deadline of SbaCore relative to its anchor, in ticks."""
    return SBA_TICKS_PER_PHASE * n * delta


def ba_ticks(n, delta):
    """Synchronous output deadline of BaCore relative to its anchor."""
    return broadcast.bc_ticks(n, delta) + REFERENCE_ABA_K * delta


class SbaCore(Core):
    """One deadline-gridded agreement slot over encodable values.

    Kings are all of 1..n in order, one phase each; with that choice the
    BOT-unless-anchored output rule below cannot split honest outputs,
    because "the only honest king is the final one" forces a single
    honest party.
    """

    def __init__(self, env, struct, anchor, input_fn, quiet=False):
        self.env = env
        self.struct = struct
        self.anchor = anchor
        self.input_fn = input_fn
        self.quiet = quiet
        self.touched = False
        self.pref = BOT
        self.anchored = False
        self.phases = [{"pref": {}, "prop": {}, "king": _NO, "proposed": False,
                        "open": False, "frozen": False, "closed": False}
                       for _ in range(env.n)]
        d = env.delta
        for k in range(env.n):
            base = anchor + SBA_TICKS_PER_PHASE * k * d
            env.at(base, ("open", k))
            env.at(base + 2 * d, ("king", k))
            env.at(base + 3 * d, ("close", k))

    def on_msg(self, src, body):
        self.touched = True
        if not (isinstance(body, tuple) and len(body) == 3):
            return
        kind, k, v = body
        if not (isinstance(k, int) and not isinstance(k, bool)
                and 0 <= k < self.env.n and wire_ok(v)):
            return
        ph = self.phases[k]
        bit = 1 << (src - 1)
        if kind == "pref":
            # preferences feed proposals, which are a pre-freeze action
            if not ph["frozen"] and not ph["closed"]:
                ph["pref"][v] = ph["pref"].get(v, 0) | bit
                if ph["open"]:
                    self._try_propose(k, ph)
        elif kind == "propose":
            # the close-tick scan must only see proposals that were also
            # in time to fix the king's preference, so intake stops at
            # the freeze tick
            if not ph["frozen"] and not ph["closed"]:
                ph["prop"][v] = ph["prop"].get(v, 0) | bit
                if ph["open"]:
                    self._adopt_early(ph)
        elif kind == "king":
            if (src == k + 1 and ph["open"] and not ph["closed"]
                    and ph["king"] is _NO):
                ph["king"] = v

    def _asleep(self):
        # Quiet slots stay silent while nothing distinguishes them from a
        # slot nobody will ever feed: no input, no traffic. Any arriving
        # envelope wakes the slot into normal behavior, so silent phases
        # are exactly the all-absent exchanges they replace, and a slot
        # that would matter to anyone is never silent at the wrong time.
        return self.quiet and not self.touched and self.pref is BOT

    def _try_propose(self, k, ph):
        if ph["proposed"]:
            return
        for v in sorted(ph["pref"], key=encode_payload):
            if self.struct.quorum(ph["pref"][v]):
                ph["proposed"] = True
                self.env.send_all(("propose", k, v))
                return

    def _adopt_early(self, ph):
        for v in sorted(ph["prop"], key=encode_payload):
            if not self.struct.covers(ph["prop"][v]):
                self.pref = v
                return

    def on_timer(self, key):
        if not (isinstance(key, tuple) and len(key) == 2):
            return
        what, k = key
        ph = self.phases[k]
        if what == "open":
            # phase-k traffic from honest parties can only arrive after
            # open(k) fired everywhere (the grid anchor is common), so no
            # catch-up scan over earlier arrivals is needed here
            ph["open"] = True
            if k == 0:
                self.pref = self.input_fn()
            if not self._asleep():
                self.env.send_all(("pref", k, self.pref))
        elif what == "king":
            ph["frozen"] = True
            if self.env.me == k + 1 and not self._asleep():
                self.env.send_all(("king", k, self.pref))
        elif what == "close":
            ph["closed"] = True
            hit = _NO
            for v in sorted(ph["prop"], key=encode_payload):
                if self.struct.quorum(ph["prop"][v]):
                    hit = v
                    break
            if hit is not _NO:
                self.pref = hit
                if k == self.env.n - 1:
                    self.anchored = True
            elif ph["king"] is not _NO:
                self.pref = ph["king"]
            if k == self.env.n - 1:
                self.env.out(self.pref if self.anchored else BOT)


def _is_bit(b):
    return isinstance(b, int) and not isinstance(b, bool) and b in (0, 1)


class AbaCore(Core):
    """One randomized bit-agreement slot (message-driven, no deadlines).

    Per round r: a party entering the round sends ("est", r, b); an est
    value with support that cannot be all-corrupt is relayed once, and it
    enters the round's bin on support from a full complement set. The
    round's first bin value goes out as ("aux", r, b). Once every member
    of some complement set sent an aux whose (first) values all lie in
    the bin, the round resolves: a single resolved value equal to the
    round coin is decided, output, and announced with ("fin", b); with
    two resolved values the coin seeds the next round. Fin support from a
    full complement set outputs (if still undecided) and ends the
    instance. Round coins are 1, then 0, then common random bits.
    """

    def __init__(self, env, struct):
        self.env = env
        self.struct = struct
        self.round = 0          # 0 until start()
        self.decided = False
        self.decision = None
        self.halted = False
        self.fin_sent = False
        self.fin_from = {0: 0, 1: 0}
        self.rounds = {}

    def _rd(self, r):
        rd = self.rounds.get(r)
        if rd is None:
            rd = self.rounds[r] = {"est": {0: 0, 1: 0}, "sent": set(),
                                   "bins": [], "aux_sent": False,
                                   "aux_any": 0, "aux_by": {}}
        return rd

    def start(self, v):
        if self.halted or self.round:
            return
        self.round = 1
        self._send_est(1, v)
        # relay support that accumulated before we started
        for r in sorted(self.rounds):
            rd = self.rounds[r]
            for b in (0, 1):
                if b not in rd["sent"] and rd["est"][b] \
                        and not self.struct.covers(rd["est"][b]):
                    self._send_est(r, b)
        self._pump()

    def _send_est(self, r, b):
        rd = self._rd(r)
        if b not in rd["sent"]:
            rd["sent"].add(b)
            self.env.send_all(("est", r, b))

    def _fin(self, b):
        if not self.fin_sent:
            self.fin_sent = True
            self.env.send_all(("fin", b))

    def _coin(self, r):
        if r == 1:
            return 1
        if r == 2:
            return 0
        return self.env.coin(r)

    def _vals(self, rd):
        if not rd["bins"]:
            return None
        full = full_mask(self.env.n)
        for z in self.struct.maximal:
            a = full & ~z
            if rd["aux_any"] & a == a:
                vs = {rd["aux_by"][p + 1]
                      for p in range(self.env.n) if a >> p & 1}
                if all(v in rd["bins"] for v in vs):
                    return sorted(vs)
        return None

    def _pump(self):
        while self.round and not self.halted:
            rd = self._rd(self.round)
            if not rd["aux_sent"] and rd["bins"]:
                rd["aux_sent"] = True
                self.env.send_all(("aux", self.round, rd["bins"][0]))
            vals = self._vals(rd)
            if vals is None:
                return
            coin = self._coin(self.round)
            if len(vals) == 1:
                est = vals[0]
                if est == coin and not self.decided:
                    self.decided = True
                    self.decision = est
                    self.env.out(est)
                    self._fin(est)
            else:
                est = self.decision if self.decided else coin
            self.round += 1
            self._send_est(self.round, est)

    def on_msg(self, src, body):
        if self.halted or not isinstance(body, tuple):
            return
        bit = 1 << (src - 1)
        if len(body) == 2 and body[0] == "fin":
            b = body[1]
            if not _is_bit(b):
                return
            self.fin_from[b] |= bit
            if self.struct.quorum(self.fin_from[b]):
                if not self.decided:
                    self.decided = True
                    self.decision = b
                    self.env.out(b)
                self.halted = True
            return
        if len(body) != 3:
            return
        kind, r, b = body
        if not (isinstance(r, int) and not isinstance(r, bool) and r >= 1
                and _is_bit(b)):
            return
        rd = self._rd(r)
        if kind == "est":
            rd["est"][b] |= bit
            if (self.round and b not in rd["sent"]
                    and not self.struct.covers(rd["est"][b])):
                self._send_est(r, b)
            if b not in rd["bins"] and self.struct.quorum(rd["est"][b]):
                rd["bins"].append(b)
                self._pump()
        elif kind == "aux":
            if not rd["aux_any"] & bit:
                rd["aux_any"] |= bit
                rd["aux_by"][src] = b
                self._pump()


class BaCore(Core):
    """One bit-agreement slot: n broadcast slots feeding a randomized
    agreement.

    All parties must construct the core at a common anchor tick; the
    input may be set then or any time later (set_input). At the close
    tick anchor + bc_ticks the regular broadcast outputs seed the
    randomized agreement: if the senders without a regular value could
    all be corrupt, the seed is the bit carried by a dominant sub-group
    of the rest (0 preferred) or 1 when there is none; otherwise the seed
    is the party's own input, awaited if still unknown.

    A decision reached before anchor + ba_ticks is held and emitted at
    exactly that tick, so composed protocols can schedule follow-up
    rounds on a fixed grid; a later decision is emitted when it happens.
    """

    def __init__(self, env, struct, anchor=None, my_input=None, quiet=False):
        self.env = env
        self.struct = struct
        self.anchor = env.now if anchor is None else anchor
        self.input = None
        self.closed = False
        self.await_input = False
        self.decision = None
        self.released = False
        self.regular = {}
        self.bcs = {}
        for j in range(1, env.n + 1):
            self.bcs[j] = broadcast.BcCore(
                NsEnv(env, ("bc", j), partial(self._slot_out, j)),
                struct, sender=j, anchor=self.anchor, quiet=quiet)
        self.aba = AbaCore(NsEnv(env, "aba", self._aba_out), struct)
        env.at(self.anchor + broadcast.bc_ticks(env.n, env.delta), ("close",))
        env.at(self.anchor + ba_ticks(env.n, env.delta), ("release",))
        if my_input is not None:
            self.set_input(my_input)

    def set_input(self, b):
        assert _is_bit(b), b
        if self.input is not None:
            return
        self.input = b
        self.bcs[self.env.me].begin(b)
        if self.await_input:
            self.await_input = False
            self.aba.start(b)

    def _slot_out(self, j, v):
        self.regular[j] = v

    def _aba_out(self, v):
        self.decision = v
        if self.env.now >= self.anchor + ba_ticks(self.env.n, self.env.delta):
            self._release()

    def _release(self):
        if self.released or self.decision is None:
            return
        self.released = True
        self.env.out(self.decision)

    def on_msg(self, src, body):
        if not (isinstance(body, tuple) and len(body) == 2):
            return
        ns, sub = body
        if ns == "aba":
            self.aba.on_msg(src, sub)
        elif (isinstance(ns, tuple) and len(ns) == 2 and ns[0] == "bc"
                and ns[1] in self.bcs):
            self.bcs[ns[1]].on_msg(src, sub)

    def on_timer(self, key):
        if key == ("close",):
            self._close()
        elif key == ("release",):
            self._release()
        elif (isinstance(key, tuple) and len(key) == 2
                and isinstance(key[0], tuple) and len(key[0]) == 2
                and key[0][0] == "bc" and key[0][1] in self.bcs):
            self.bcs[key[0][1]].on_timer(key[1])

    def _close(self):
        self.closed = True
        r_mask = 0
        vals = {}
        for j, v in self.regular.items():
            if v is not broadcast.BOT:
                r_mask |= 1 << (j - 1)
                vals[j] = v
        if self.struct.covers(full_mask(self.env.n) & ~r_mask):
            # enough regular outputs that the silent senders could all be
            # corrupt: seed from a dominant sub-group, 0 before 1
            for b in (0, 1):
                strays = 0
                for j, v in vals.items():
                    if v != b:
                        strays |= 1 << (j - 1)
                if self.struct.covers(strays):
                    self.aba.start(b)
                    return
            self.aba.start(1)
        elif self.input is not None:
            self.aba.start(self.input)
        else:
            self.await_input = True
