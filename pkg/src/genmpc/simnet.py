"""Deterministic discrete-event network simulator.

Time is an integer tick counter; one protocol delay unit spans ``delta`` ticks
(default 1), so every protocol deadline is an exact integer tick and timing
assertions are equality checks. Local clocks equal the virtual clock.

Delivery policy:

* sync  -- every envelope is delivered exactly ``delta`` ticks after sending
           (the worst legal case), which also gives per-channel FIFO for free;
* async -- a seeded adversarial scheduler picks a finite delay per envelope.
           Bundled strategies: ``eventual`` (uniform over what fits in the
           budget, capped at 8 delta), ``uniform`` (1..5 delta, capped by the
           budget), ``max-delay`` (everything parked just before the budget).
           All of them deliver honest traffic before the budget runs out.

Corrupt parties run the same state machines as honest ones, but their context
pipes every outgoing envelope through a corruption strategy that may drop,
rewrite (per receiver), or delay it. Arbitrary *incoming* bytes therefore
reach honest machines, which must validate-or-ignore.

One envelope = whatever one sender hands one receiver at one tick for one
instance tag. Composite protocols pack vectors of sub-instance payloads into
single envelopes (one shared delay); standalone suites keep one logical
message per envelope.
"""

import hashlib
import json
import random
from collections import defaultdict


def derive_rng(seed, *labels):
    h = hashlib.blake2b(repr((seed,) + labels).encode(), digest_size=8)
    return random.Random(int.from_bytes(h.digest(), "big"))


def encode_payload(obj):
    """Canonical byte encoding used for digests and size accounting."""
    if obj is None:
        return b"N"
    if obj is True or obj is False:
        return b"T" if obj else b"F"
    if isinstance(obj, int):
        e = str(obj).encode()
        return b"i" + len(e).to_bytes(2, "big") + e
    if isinstance(obj, str):
        e = obj.encode()
        return b"s" + len(e).to_bytes(4, "big") + e
    if isinstance(obj, bytes):
        return b"b" + len(obj).to_bytes(4, "big") + obj
    if isinstance(obj, (tuple, list)):
        parts = [encode_payload(x) for x in obj]
        body = b"".join(parts)
        return b"t" + len(parts).to_bytes(4, "big") + body
    if isinstance(obj, dict):
        items = sorted(obj.items(), key=lambda kv: encode_payload(kv[0]))
        return b"d" + encode_payload([x for kv in items for x in kv])[1:]
    if isinstance(obj, frozenset):
        return b"f" + encode_payload(sorted(obj, key=encode_payload))[1:]
    raise TypeError("unencodable payload: %r" % (obj,))


def payload_digest(obj):
    return hashlib.blake2b(encode_payload(obj), digest_size=8).hexdigest()


def wire_ok(value):
    """True for values protocol cores may tally: hashable and encodable.

    Corrupt parties can put anything on the wire; cores drop what fails
    this check at ingress so dictionaries keyed by value and canonical
    ordering by encode_payload stay total.
    """
    try:
        hash(value)
        encode_payload(value)
    except TypeError:
        return False
    return True


class Trace:
    """Event recorder. Modes: off (counters only), digest, full."""

    def __init__(self, mode="digest"):
        self.mode = mode
        self.events = []
        self.hasher = hashlib.blake2b(digest_size=16)
        self.envelopes = 0
        self.bytes = 0
        self.proto_bytes = defaultdict(int)
        self.proto_count = defaultdict(int)
        self.timed_out = False

    def add(self, t, kind, frm, to, proto, payload):
        enc = None
        if kind == "send":
            self.envelopes += 1
            fam = proto[0] if isinstance(proto, tuple) else proto
            self.proto_count[fam] += 1
            if self.mode != "off":
                enc = encode_payload(payload)
                self.bytes += len(enc)
                self.proto_bytes[fam] += len(enc)
        if self.mode == "off":
            return
        if enc is None:
            enc = encode_payload(payload)
        dig = hashlib.blake2b(enc, digest_size=8).hexdigest()
        line = (t, kind, frm, to, str(proto), dig)
        self.hasher.update(repr(line).encode())
        if self.mode == "full":
            self.events.append(line)

    def digest(self):
        return self.hasher.hexdigest()

    def dump_jsonl(self, fh):
        for t, kind, frm, to, proto, dig in self.events:
            fh.write(json.dumps(
                {"t": t, "kind": kind, "from": frm, "to": to,
                 "proto": proto, "digest": dig}) + "\n")


class Machine:
    """Base protocol state machine; one per (party, instance tag)."""

    host = None
    tag = None
    parent = None
    output = None
    done = False
    done_t = None

    def on_start(self):
        pass

    def on_msg(self, src, body):
        pass

    def on_timer(self, key):
        pass

    def on_child_output(self, tag, value):
        pass

    def finish(self, value):
        if self.done:
            return
        self.done = True
        self.output = value
        self.done_t = self.host.net.t
        self.host.net.trace.add(self.host.net.t, "output", self.host.pid,
                                self.host.pid, self.tag, value)
        if self.parent is not None:
            self.parent.on_child_output(self.tag, value)


class PartyCtx:
    """Per-party execution context: routing, timers, buffered messages."""

    def __init__(self, net, pid):
        self.net = net
        self.pid = pid
        self.machines = {}
        self.buffer = defaultdict(list)
        self.rng = derive_rng(net.seed, "party", pid)

    # -- machine management ------------------------------------------------
    def spawn(self, tag, machine, parent=None):
        assert tag not in self.machines, tag
        machine.host = self
        machine.tag = tag
        machine.parent = parent
        self.machines[tag] = machine
        machine.on_start()
        for src, body in self.buffer.pop(tag, ()):
            machine.on_msg(src, body)
        return machine

    def machine(self, tag):
        return self.machines.get(tag)

    # -- I/O ----------------------------------------------------------------
    def send(self, dst, tag, body):
        self.net.post(self.pid, dst, tag, body)

    def send_all(self, tag, body):
        for dst in range(1, self.net.n + 1):
            self.send(dst, tag, body)

    def at(self, tick, tag, key):
        assert tick >= self.net.t
        self.net.timers[tick].append((self.pid, tag, key))

    def coin(self, tag, rnd):
        return self.net.coin(tag, rnd, honest=not self.is_corrupt())

    def is_corrupt(self):
        return False

    @property
    def now(self):
        return self.net.t

    # -- engine entry points -------------------------------------------------
    def deliver(self, src, tag, body):
        m = self.machines.get(tag)
        if m is None:
            self.buffer[tag].append((src, body))
        else:
            m.on_msg(src, body)

    def fire(self, tag, key):
        m = self.machines.get(tag)
        if m is not None:
            m.on_timer(key)


class CorruptCtx(PartyCtx):
    def __init__(self, net, pid, strategy):
        PartyCtx.__init__(self, net, pid)
        self.strategy = strategy
        strategy.bind(self)

    def is_corrupt(self):
        return True

    def send(self, dst, tag, body):
        for d, tg, b, lag in self.strategy.transform(
                self.net.t, self.pid, dst, tag, body):
            self.net.post(self.pid, d, tg, b, extra_lag=lag)


class Net:
    def __init__(self, n, mode="sync", delta=1, scheduler="eventual",
                 budget=10000, seed=0, trace_mode="digest"):
        assert mode in ("sync", "async")
        self.n = n
        self.mode = mode
        self.delta = delta
        self.scheduler = scheduler
        self.budget = budget
        self.seed = seed
        self.t = 0
        self.trace = Trace(trace_mode)
        self.parties = {}
        self.buckets = defaultdict(list)
        self.timers = defaultdict(list)
        self.monitors = []
        self.flushers = []
        self.sched_rng = derive_rng(seed, "sched")
        self._coins = {}
        self._coin_seen = {}

    # -- setup ----------------------------------------------------------------
    def add_party(self, pid, strategy=None):
        ctx = PartyCtx(self, pid) if strategy is None else \
            CorruptCtx(self, pid, strategy)
        self.parties[pid] = ctx
        return ctx

    def party(self, pid):
        return self.parties[pid]

    def honest_pids(self):
        return [p for p in sorted(self.parties) if not self.parties[p].is_corrupt()]

    # -- common coin ------------------------------------------------------------
    def coin(self, tag, rnd, honest=True):
        key = (tag, rnd)
        if honest:
            if key not in self._coin_seen:
                self._coin_seen[key] = self.t
        elif key not in self._coin_seen:
            return None  # hidden from the adversary until an honest query
        if key not in self._coins:
            h = hashlib.blake2b(
                repr((self.seed, "coin", tag, rnd)).encode(), digest_size=8)
            self._coins[key] = h.digest()[0] & 1
        return self._coins[key]

    # -- transport ---------------------------------------------------------------
    def _delay(self, extra_lag):
        if self.mode == "sync":
            return self.delta + extra_lag
        room = max(1, self.budget - 1 - self.t)
        if self.scheduler == "eventual":
            d = self.sched_rng.randint(1, min(8 * self.delta, room))
        elif self.scheduler == "uniform":
            d = min(self.sched_rng.randint(1, 5 * self.delta), room)
        elif self.scheduler == "max-delay":
            # park near the budget but leave headroom so reply cascades
            # still land before it
            d = max(1, (3 * room) // 4)
        else:
            raise ValueError("unknown scheduler %r" % self.scheduler)
        return min(d + extra_lag, max(1, self.budget - 1 - self.t))

    def post(self, src, dst, tag, body, extra_lag=0):
        if not 1 <= dst <= self.n:
            return
        if extra_lag:
            # a corrupt sender holding an envelope back transmits late; the
            # network itself still honors the mode's delivery bound
            self.buckets[self.t + extra_lag].append(
                ("emit", src, dst, tag, body))
            return
        self.trace.add(self.t, "send", src, dst, tag, body)
        when = self.t + self._delay(0)
        self.buckets[when].append(("msg", src, dst, tag, body))

    # -- main loop ------------------------------------------------------------------
    def run(self, until=None):
        horizon = self.budget if until is None else until
        while True:
            pending = [t for t in self.buckets if t >= self.t]
            tpending = [t for t in self.timers if t >= self.t]
            if not pending and not tpending:
                break
            nxt = min(pending + tpending)
            if nxt > horizon:
                self.trace.timed_out = True
                break
            self.t = nxt
            for kind, src, dst, tag, body in self.buckets.pop(self.t, ()):
                if kind == "emit":
                    self.post(src, dst, tag, body)
                    continue
                self.trace.add(self.t, "deliver", src, dst, tag, body)
                for mon in self.monitors:
                    mon(self.t, src, dst, tag, body)
                self.parties[dst].deliver(src, tag, body)
            todo = self.timers.pop(self.t, [])
            while todo:
                pid, tag, key = todo.pop(0)
                self.trace.add(self.t, "timer", pid, pid, tag, key)
                self.parties[pid].fire(tag, key)
                todo.extend(self.timers.pop(self.t, ()))
            for bank in self.flushers:
                bank.flush()
        return self.trace


# --------------------------------------------------------------------------
# protocol cores and their hosting
# --------------------------------------------------------------------------
#
# Protocol logic lives in "cores": plain event objects with on_msg/on_timer
# methods that talk to the world only through an env handle. The same core
# runs either behind its own instance tag (CoreMachine, one envelope per
# message) or as one slot of a Bank, where every slot's traffic for one
# receiver in one tick is packed into a single vector envelope.

class Core:
    def on_msg(self, src, body):
        pass

    def on_timer(self, key):
        pass


class MachineEnv:
    """I/O surface handed to a core hosted by its own machine."""

    def __init__(self, machine):
        self.m = machine

    @property
    def me(self):
        return self.m.host.pid

    @property
    def n(self):
        return self.m.host.net.n

    @property
    def now(self):
        return self.m.host.net.t

    @property
    def delta(self):
        return self.m.host.net.delta

    def send_all(self, body):
        self.m.host.send_all(self.m.tag, body)

    def send(self, dst, body):
        self.m.host.send(dst, self.m.tag, body)

    def at(self, tick, key):
        self.m.host.at(tick, self.m.tag, key)

    def out(self, value):
        self.m.finish(value)

    def coin(self, rnd, path=()):
        return self.m.host.coin(tuple(self.m.tag) + tuple(path), rnd)


class NsEnv:
    """Namespaced sub-env: lets one core host child cores by prefixing
    message bodies and timer keys with the child's namespace label."""

    def __init__(self, base, ns, out):
        self.base = base
        self.ns = ns
        self._out = out

    @property
    def me(self):
        return self.base.me

    @property
    def n(self):
        return self.base.n

    @property
    def now(self):
        return self.base.now

    @property
    def delta(self):
        return self.base.delta

    def send_all(self, body):
        self.base.send_all((self.ns, body))

    def send(self, dst, body):
        self.base.send(dst, (self.ns, body))

    def at(self, tick, key):
        self.base.at(tick, (self.ns, key))

    def out(self, value):
        self._out(value)

    def coin(self, rnd, path=()):
        return self.base.coin(rnd, (self.ns,) + tuple(path))


class CoreMachine(Machine):
    """Hosts a single protocol core behind its own instance tag."""

    def __init__(self, factory):
        self.factory = factory
        self.core = None

    def on_start(self):
        self.core = self.factory(MachineEnv(self))

    def on_msg(self, src, body):
        self.core.on_msg(src, body)

    def on_timer(self, key):
        self.core.on_timer(key)


class BankSlotEnv:
    """I/O surface for one slot of a Bank."""

    def __init__(self, bank, sid):
        self.bank = bank
        self.sid = sid

    @property
    def me(self):
        return self.bank.host.pid

    @property
    def n(self):
        return self.bank.host.net.n

    @property
    def now(self):
        return self.bank.host.net.t

    @property
    def delta(self):
        return self.bank.host.net.delta

    def send_all(self, body):
        for dst in range(1, self.n + 1):
            self.bank.slot_send(self.sid, dst, body)

    def send(self, dst, body):
        self.bank.slot_send(self.sid, dst, body)

    def at(self, tick, key):
        self.bank.host.at(tick, self.bank.tag, ("slot", self.sid, key))

    def out(self, value):
        self.bank.slot_out(self.sid, value)

    def coin(self, rnd, path=()):
        return self.bank.host.coin(
            tuple(self.bank.tag) + (self.sid,) + tuple(path), rnd)


class Bank(Machine):
    """Many protocol slots behind one instance tag.

    Outgoing slot messages accumulate during a tick and leave as one
    ("vec", ((sid, body), ...)) envelope per receiver when the engine
    flushes at end of tick, so one delay is shared by every slot. Slot
    timers ride the bank's machine timers, keyed ("slot", sid, key);
    subclasses may use other key shapes for their own timers.
    """

    def __init__(self):
        self.slots = {}
        self.outs = {}
        self.pending = {}
        self.stash = defaultdict(list)

    def on_start(self):
        self.host.net.flushers.append(self)

    def add_slot(self, sid, factory):
        assert sid not in self.slots, sid
        core = factory(BankSlotEnv(self, sid))
        self.slots[sid] = core
        for src, body in self.stash.pop(sid, ()):
            core.on_msg(src, body)
        return core

    def slot_send(self, sid, dst, body):
        self.pending.setdefault(dst, []).append((sid, body))

    def slot_out(self, sid, value):
        if sid not in self.outs:
            self.outs[sid] = value
            self.on_slot_output(sid, value)

    def on_slot_output(self, sid, value):
        pass

    def flush(self):
        if not self.pending:
            return
        pending, self.pending = self.pending, {}
        for dst in sorted(pending):
            self.host.send(dst, self.tag, ("vec", tuple(pending[dst])))

    def on_msg(self, src, body):
        if not (isinstance(body, tuple) and len(body) == 2
                and body[0] == "vec" and isinstance(body[1], tuple)):
            return
        for item in body[1]:
            if not (isinstance(item, tuple) and len(item) == 2):
                continue
            sid, sub = item
            try:
                core = self.slots.get(sid)
            except TypeError:
                continue
            if core is None:
                self.stash[sid].append((src, sub))
            else:
                core.on_msg(src, sub)

    def on_timer(self, key):
        if isinstance(key, tuple) and len(key) == 3 and key[0] == "slot":
            core = self.slots.get(key[1])
            if core is not None:
                core.on_timer(key[2])


# --------------------------------------------------------------------------
# corruption strategies
# --------------------------------------------------------------------------

class Strategy:
    """Rewrites outgoing traffic of a corrupt party. Default: pass-through."""

    name = "passthrough"

    def __init__(self, params=None):
        self.params = params or {}
        self.ctx = None
        self.rng = None

    def bind(self, ctx):
        self.ctx = ctx
        self.rng = derive_rng(ctx.net.seed, "strat", ctx.pid)

    def transform(self, t, src, dst, tag, body):
        return [(dst, tag, body, 0)]

    def _key(self, dst, tag):
        h = hashlib.blake2b(
            repr((self.ctx.net.seed, self.ctx.pid, dst, tag)).encode(),
            digest_size=8)
        return int.from_bytes(h.digest(), "big")


class CrashSilent(Strategy):
    """Sends nothing at all, from the beginning of the run."""

    name = "crash-silent"

    def transform(self, t, src, dst, tag, body):
        return []


class DelayMax(Strategy):
    """Honest content, but every envelope held back by a fixed lag."""

    name = "delay-max"

    def transform(self, t, src, dst, tag, body):
        lag = self.params.get("lag", 4 * self.ctx.net.delta)
        return [(dst, tag, body, lag)]


def _mutate_int(v, key, p):
    return (v + 1 + key % (p - 1)) % p if p else v ^ (key & 0xFFFF) or 1


class Equivocate(Strategy):
    """Per-receiver rewrite of the value slot of known message kinds."""

    name = "equivocate"
    # message kinds whose last field is a mutable value
    KINDS = ("init", "echo", "ready", "pref", "propose", "king", "est",
             "aux", "fin", "in")

    def transform(self, t, src, dst, tag, body):
        p = self.params.get("p", 0)
        body = self._walk(body, self._key(dst, tag), p)
        return [(dst, tag, body, 0)]

    def _walk(self, body, key, p):
        if isinstance(body, tuple) and body and body[0] in self.KINDS:
            v = body[-1]
            if isinstance(v, int):
                return body[:-1] + (_mutate_int(v, key, p),)
            if isinstance(v, tuple):  # vector payload: mutate each slot value
                return body[:-1] + (tuple(
                    (s, _mutate_int(x, key + i, p)) if isinstance(x, int) else (s, x)
                    for i, (s, x) in enumerate(v)),)
        if isinstance(body, tuple):
            return tuple(self._walk(x, key, p) for x in body)
        return body


class WrongShare(Strategy):
    """Rewrites field-element share values in point-to-point share traffic."""

    name = "wrong-share"
    KINDS = ("share", "pcheck", "rec", "resolve-val")

    def transform(self, t, src, dst, tag, body):
        return [(dst, tag, self._walk(body, self._key(dst, tag)), 0)]

    def _walk(self, body, key):
        if not isinstance(body, tuple):
            return body
        if body and body[0] in self.KINDS:
            # keep the kind and the first field (an index), garble the
            # value fields, including (index, value) pairs inside vectors
            p = self.params["p"]
            out = []
            for i, x in enumerate(body[1:]):
                if isinstance(x, int) and i >= 1:
                    x = _mutate_int(x, key + i, p)
                elif isinstance(x, tuple):
                    x = tuple(
                        (e[0], _mutate_int(e[1], key + j, p))
                        if isinstance(e, tuple) and len(e) == 2
                        and isinstance(e[1], int) else e
                        for j, e in enumerate(x))
                out.append(x)
            return (body[0],) + tuple(out)
        return tuple(self._walk(x, key) for x in body)


STRATEGIES = {}
for _cls in (Strategy, CrashSilent, DelayMax, Equivocate, WrongShare):
    STRATEGIES[_cls.name] = _cls
