"""Prime field arithmetic and additive sharing over a sharing specification.

A value s is shared as q addends s = s_1 + ... + s_q (mod p), where addend m
is held by every party in S_m. The harness-side ``SecretSharing`` keeps the
full addend vector; each party only ever sees its own view {m: s_m for m with
party in S_m}. All protocol code works on views.

The default sharing of s is (s, 0, ..., 0): public constants enter the
computation this way, so adding a constant touches only addend 1.
"""

import random

from .simnet import Core, NsEnv

P61 = 2**61 - 1  # default prime
P_TEST = 97      # small prime used by the statistical tests


class Field:
    def __init__(self, p=P61):
        self.p = p

    def rand(self, rng):
        return rng.randrange(self.p)

    def __repr__(self):
        return "Field(%d)" % self.p


class SecretSharing:
    """Harness-level ground truth: the full addend vector of one sharing."""

    def __init__(self, spec, p, values):
        assert len(values) == spec.q
        self.spec = spec
        self.p = p
        self.values = [v % p for v in values]

    @classmethod
    def deal(cls, spec, p, secret, rng):
        """Uniformly random addends summing to ``secret``."""
        vals = [rng.randrange(p) for _ in range(spec.q - 1)]
        vals.append((secret - sum(vals)) % p)
        return cls(spec, p, vals)

    @classmethod
    def default(cls, spec, p, secret):
        """The default sharing (s, 0, ..., 0)."""
        return cls(spec, p, [secret % p] + [0] * (spec.q - 1))

    def secret(self):
        return sum(self.values) % self.p

    def addend(self, m):
        return self.values[m - 1]

    def view_of(self, party):
        """The share dict a given party holds: {m: s_m}."""
        return {m: self.values[m - 1] for m in self.spec.shares_of(party)}

    def __add__(self, other):
        return SecretSharing(self.spec, self.p,
                             [(a + b) % self.p
                              for a, b in zip(self.values, other.values)])

    def scale(self, c):
        return SecretSharing(self.spec, self.p,
                             [c * v % self.p for v in self.values])

    def add_const(self, c):
        vals = list(self.values)
        vals[0] = (vals[0] + c) % self.p
        return SecretSharing(self.spec, self.p, vals)


# --- per-party view arithmetic (what the protocol machines actually run) ---

def view_add(a, b, p):
    return {m: (a[m] + b[m]) % p for m in a}

def view_sub(a, b, p):
    return {m: (a[m] - b[m]) % p for m in a}

def view_scale(c, a, p):
    return {m: c * a[m] % p for m in a}

def view_add_const(c, a, p):
    out = dict(a)
    if 1 in out:
        out[1] = (out[1] + c) % p
    return out

def view_zero(spec, party):
    return {m: 0 for m in spec.shares_of(party)}

def beaver_combine(d, e, va, vb, vc, p):
    """Share view of u*v from opened d=u-a, e=v-b and triple views (a,b,c).

    w = d*e + d*b + e*a + c, with the public d*e entering via addend 1.
    """
    out = {}
    for m in vc:
        w = (d * vb[m] + e * va[m] + vc[m]) % p
        if m == 1:
            w = (w + d * e) % p
        out[m] = w
    return out


def make_rng(seed, *labels):
    """Deterministic child RNG derived from a run seed and a label path."""
    import hashlib
    h = hashlib.blake2b(repr((seed,) + labels).encode(), digest_size=8)
    return random.Random(int.from_bytes(h.digest(), "big"))


# --------------------------------------------------------------------------
# protocol cores: public reconstruction and shared multiplication
# --------------------------------------------------------------------------

class RecCore(Core):
    """Opens a batch of shared values to everyone.

    ``views`` is a list of {addend index: share} dicts, one per value.
    Every holder sends each of its shares to all parties; per (value,
    addend) a candidate is accepted once its senders leave out only a
    fraction of the holder set that could be entirely corrupt, which pins
    the true addend: any such sender set overlaps the honest holders.
    Output is the tuple of opened values, within one delay unit of the
    start in a timely network.

    ``needs`` optionally lists, per value, which addend indices make it
    up (default: all of them). A single-addend entry opens one addend of
    a sharing instead of the whole sum.
    """

    def __init__(self, env, struct, spec, p, views, needs=None):
        self.env = env
        self.struct = struct
        self.spec = spec
        self.p = p
        self.k = len(views)
        if needs is None:
            needs = [range(1, spec.q + 1)] * self.k
        self.needs = [frozenset(ms) for ms in needs]
        self.total = sum(len(ms) for ms in self.needs)
        self.first = {}   # (i, m, src) seen -> dedupe repeated senders
        self.tally = {}   # (i, m, v) -> sender mask
        self.got = {}     # (i, m) -> accepted value
        self.finished = False
        pairs = []
        for i, view in enumerate(views):
            for m in sorted(view):
                if m in self.needs[i]:
                    pairs.append(((i, m), view[m] % p))
        if pairs:
            env.send_all(("rec", tuple(pairs)))
        self._check_done()

    def on_msg(self, src, body):
        if not (isinstance(body, tuple) and len(body) == 2
                and body[0] == "rec" and isinstance(body[1], tuple)):
            return
        for pair in body[1]:
            if not (isinstance(pair, tuple) and len(pair) == 2):
                continue
            key, v = pair
            if not (isinstance(key, tuple) and len(key) == 2):
                continue
            i, m = key
            if not (isinstance(i, int) and not isinstance(i, bool)
                    and isinstance(m, int) and not isinstance(m, bool)
                    and isinstance(v, int) and not isinstance(v, bool)
                    and 0 <= i < self.k and 1 <= m <= self.spec.q
                    and 0 <= v < self.p and self.spec.holds(src, m)
                    and m in self.needs[i]):
                continue
            if (i, m, src) in self.first:
                continue
            self.first[(i, m, src)] = True
            mask = self.tally.get((i, m, v), 0) | 1 << (src - 1)
            self.tally[(i, m, v)] = mask
            if ((i, m) not in self.got
                    and self.struct.covers(self.spec.holders(m) & ~mask)):
                self.got[(i, m)] = v
        self._check_done()

    def _check_done(self):
        if self.finished or len(self.got) < self.total:
            return
        self.finished = True
        out = []
        for i in range(self.k):
            out.append(sum(self.got[(i, m)]
                           for m in self.needs[i]) % self.p)
        self.env.out(tuple(out))


class BeaverCore(Core):
    """Computes a share view of u*v from share views of u, v and a
    multiplication triple (a, b, c): opens d = u-a and e = v-b in one
    reconstruction batch, then combines locally. Output is the product's
    share view, one delay unit after the start in a timely network."""

    def __init__(self, env, struct, spec, p, vu, vv, va, vb, vc):
        self.env = env
        self.p = p
        self.va = va
        self.vb = vb
        self.vc = vc
        self.rec = RecCore(NsEnv(env, "r", self._opened), struct, spec, p,
                           [view_sub(vu, va, p), view_sub(vv, vb, p)])

    def _opened(self, vals):
        d, e = vals
        self.env.out(beaver_combine(d, e, self.va, self.vb, self.vc, self.p))

    def on_msg(self, src, body):
        if isinstance(body, tuple) and len(body) == 2 and body[0] == "r":
            self.rec.on_msg(src, body[1])
