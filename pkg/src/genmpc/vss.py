"""Verified secret sharing against general corruption structures.

One instance distributes a vector of secrets from a dealer. Each secret
splits into q addends, one per holder set, and every member of a set
receives that set's addend vector (one component per secret). Holders
then establish that the dealer handed out consistent values, without
leaking them to outsiders:

1. the dealer sends every member its addend vectors;
2. members of each set exchange their vectors pairwise;
3. every party publicly attests, through banked broadcast slots,
   agreement with each peer (OK) or an observed conflict within a
   set (NOK);
4. once the attestation round closes, conflicts that became regular
   broadcast output force the value open: the dealer and the affected
   set's members broadcast it. The dealer also publishes one core per
   set: a subset of pairwise-agreeing members whose complement within
   the set lies in the tolerated structure;
5. one bit agreement settles whether the fast path held for this party:
   cores arrived as regular output, every core is a clique in the
   attestation graph as of the time cores were due, and every forced
   opening was confirmed. On 1, members settle each addend from core
   evidence, in order: the dealer's forced opening confirmed by enough
   core members; the value a dominant part of the core reported
   pairwise by the attestation tick; the value a part of the core that
   the weaker structure cannot absorb eventually reports. On 0, the
   dealer publishes relaxed cores whose complements only need to sit in
   the weaker structure; members inside such a core keep their own
   addend and everyone else adopts the value a dominant part of the
   relaxed core reports.

With an honest dealer and timely delivery every party finishes exactly
``vss_ticks`` after the common start. All broadcast slots of an
instance live in one message bank, so each receiver gets at most one
envelope per sender per tick regardless of how many slots are active.
"""

from .agreement import BaCore, ba_ticks
from .broadcast import BcCore, bc_ticks
from .sharing import SecretSharing, make_rng
from .simnet import Bank, Net
from .structures import SharingSpec, parties_of

OK_BIT = 1


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def vss_ticks(n, delta):
    """Synchronous output deadline of one instance, in ticks."""
    return 2 * delta + 2 * bc_ticks(n, delta) + ba_ticks(n, delta)


def is_clique(mask, edges):
    """True when every pair of parties in ``mask`` is adjacent in ``edges``
    (a dict: party -> bitmask of neighbors)."""
    rest = mask
    while rest:
        b = rest & -rest
        rest &= rest - 1
        if (mask & ~b) & ~edges.get(b.bit_length(), 0):
            return False
    return True


def find_core(set_mask, edges, structure):
    """First clique of the form set minus candidate, in candidate order.

    Scans the structure's maximal sets; the first whose removal from
    ``set_mask`` leaves a clique in ``edges`` yields the core (any
    further agreement only grows cliques, so checking complements of
    maximal sets loses nothing: subsets of cliques are cliques).
    Returns a bitmask, or None when no candidate works yet.
    """
    for z in structure.maximal:
        cand = set_mask & ~z
        if is_clique(cand, edges):
            return cand
    return None


def derive_share(core_mask, reports, structure):
    """Value vector pinned down by reports from core members.

    ``reports`` maps party -> vector. A vector wins once the core
    members NOT reporting it all fit inside one structure member; the
    quorum geometry lets at most one vector qualify, and the party-order
    scan makes the pick deterministic regardless. Returns the winning
    vector or None.
    """
    seen = set()
    for i in parties_of(core_mask):
        v = reports.get(i)
        if v is None or v in seen:
            continue
        seen.add(v)
        mask = 0
        for j in parties_of(core_mask):
            if reports.get(j) == v:
                mask |= 1 << (j - 1)
        if structure.covers(core_mask & ~mask):
            return v
    return None


def _half_edge(half, edges, m, i, j):
    """Record i's attestation toward j for set m; True on a new mutual edge.

    ``half`` holds one-sided attestations, ``edges`` the symmetric closure
    of the mutual ones; both map set index -> {party: neighbor bitmask}.
    """
    h = half.setdefault(m, {})
    cur = h.get(i, 0)
    bj = 1 << (j - 1)
    if cur & bj:
        return False
    h[i] = cur | bj
    if h.get(j, 0) >> (i - 1) & 1:
        e = edges.setdefault(m, {})
        e[i] = e.get(i, 0) | bj
        e[j] = e.get(j, 0) | (1 << (i - 1))
        return True
    return False


def pairwise_check_step(my_vecs, got, common_sets, batch=True):
    """Attestation decisions from the pairwise exchange seen so far.

    ``my_vecs``: {set index: own vector}; ``got``: {(set index, peer):
    vector the peer reported}; ``common_sets``: {peer: set indices
    shared with that peer}. Returns (oks, noks). ``noks`` is the set of
    set indices where two distinct vectors were observed (own versus
    reported, or between two reports). With ``batch``, ``oks`` holds the
    peers whose reports are present and equal to the own vector on every
    shared set; otherwise it holds the individual (set index, peer)
    matches, skipping flagged sets.
    """
    noks = set()
    seen = {}
    for (m, j), v in got.items():
        if m in my_vecs and v != my_vecs[m]:
            noks.add(m)
        if seen.setdefault(m, v) != v:
            noks.add(m)
    oks = set()
    for j, ms in common_sets.items():
        if batch:
            if ms and all(m in my_vecs and got.get((m, j)) == my_vecs[m]
                          for m in ms):
                oks.add(j)
        else:
            for m in ms:
                if (m not in noks and m in my_vecs
                        and got.get((m, j)) == my_vecs[m]):
                    oks.add((m, j))
    return oks, noks


class VssMachine(Bank):
    """One verified-sharing instance (see the module docstring).

    Arguments common to every party: the structure pair (``struct``
    bounds corruption under timely delivery and sizes all broadcast
    quorums; ``za`` bounds it when delays are unbounded and sizes the
    relaxed cores), the field modulus ``p``, the dealer id, and
    ``nsecrets``. The dealer passes ``secrets`` (field elements); its
    length overrides ``nsecrets``. ``rng`` seeds the dealer's addend
    randomness (derived from the run seed when absent).

    ``ok_batch`` switches between one attestation slot per ordered peer
    pair, covering every shared set at once, and one slot per
    (set, pair). ``quiet`` lets slots that never carry a value stay
    silent instead of running the full no-input vote schedule; the
    outcome is the same either way because a slot nobody feeds can only
    ever produce the no-value output.

    Output: tuple of ``nsecrets`` dicts {set index: addend}, covering
    exactly the sets this party belongs to. Inspection fields:
    ``share_t`` (tick the dealer's message landed), ``accepted`` (own
    fast-path verdict), ``ba_out``, ``c_sets``/``e_sets`` (validated
    core masks), ``nok_reg``, ``derived``.
    """

    def __init__(self, struct, za, p, dealer, nsecrets=1, secrets=None,
                 rng=None, ok_batch=True, quiet=True):
        Bank.__init__(self)
        assert secrets is None or len(secrets) >= 1
        self.struct = struct
        self.za = za
        self.spec = SharingSpec(struct)
        self.p = p
        self.dealer = dealer
        self.secrets = None if secrets is None else [s % p for s in secrets]
        self.nsecrets = nsecrets if secrets is None else len(secrets)
        self.rng = rng
        self.ok_batch = ok_batch
        self.quiet = quiet

        self.dealt = None       # dealer only: {m: vector handed to set m}
        self.my_vecs = {}       # {m: own vector} once delivered
        self.share_t = None     # tick the dealer's share message landed
        self.pc = {}            # {(m, j): vector j reported}
        self.pc2 = {}           # frozen copy of pc at the attestation tick
        self.pc_sent = set()    # (m, peer) pairs already sent out
        self.noks = set()       # sets flagged inconsistent at the attestation tick
        self.half = {}          # {m: {i: bitmask i attested agreement with}}
        self.edges = {}         # {m: {i: bitmask of mutual attestations}}
        self.reg_half = {}      # like half, deadline-confirmed attestations only
        self.reg_edges = {}     # like edges, deadline-confirmed attestations only
        self.adj3 = None        # frozen copy of reg_edges when cores were due
        self.nok_reg = set()    # sets whose conflict flag arrived on schedule
        self.c_sets = None      # validated core masks, fast path
        self.c_regular = False  # cores arrived as regular broadcast output
        self.e_sets = None      # validated relaxed core masks
        self.accepted = None    # own fast-path verdict fed to the agreement
        self.ba_out = None
        self.derived = {}       # {m: vector} settled addends
        self.begun = set()      # slots this party already fed a value
        self.es_value = None    # dealer: relaxed cores awaiting their slot
        self.phase = 1

    # -- setup ---------------------------------------------------------------

    def on_start(self):
        Bank.on_start(self)
        net = self.host.net
        me = self.me = self.host.pid
        d = net.delta
        self.my_sets = self.spec.shares_of(me)
        self.common = {}
        for j in range(1, net.n + 1):
            if j == me:
                continue
            ms = tuple(m for m in self.my_sets if self.spec.holds(j, m))
            if ms:
                self.common[j] = ms
        self.pair_sets = {}
        for i in range(1, net.n + 1):
            for j in range(1, net.n + 1):
                if i == j:
                    continue
                ms = tuple(m for m in range(1, self.spec.q + 1)
                           if self.spec.holds(i, m) and self.spec.holds(j, m))
                if ms:
                    self.pair_sets[(i, j)] = ms
        a = -(-net.t // d) * d
        self.t1 = a + d
        self.t2 = a + 2 * d
        self.t3 = self.t2 + bc_ticks(net.n, d)
        self.t4 = self.t3 + bc_ticks(net.n, d)
        self.t5 = self.t4 + ba_ticks(net.n, d)
        if me == self.dealer and self.secrets is not None:
            self._deal()
        self.host.at(self.t1, self.tag, ("pc",))
        self.host.at(self.t2, self.tag, ("ok",))

    def _deal(self):
        rng = self.rng or make_rng(self.host.net.seed, "deal", self.tag,
                                   self.me)
        per = [SecretSharing.deal(self.spec, self.p, s, rng)
               for s in self.secrets]
        self.dealt = {m: tuple(sh.addend(m) for sh in per)
                      for m in range(1, self.spec.q + 1)}
        for dst in range(1, self.host.net.n + 1):
            if dst == self.me:
                continue
            pairs = tuple(((l, m), self.dealt[m][l])
                          for m in self.spec.shares_of(dst)
                          for l in range(self.nsecrets))
            if pairs:
                self.host.send(dst, self.tag, ("share", pairs))
        for m in self.my_sets:
            self.my_vecs[m] = self.dealt[m]
            self.pc[(m, self.me)] = self.dealt[m]
        self.share_t = self.host.net.t

    # -- ingress ---------------------------------------------------------------

    def on_msg(self, src, body):
        if isinstance(body, tuple) and len(body) == 2 and body[0] == "share":
            self._on_share(src, body[1])
        elif isinstance(body, tuple) and len(body) == 2 and body[0] == "pcheck":
            self._on_pcheck(src, body[1])
        else:
            Bank.on_msg(self, src, body)

    def _vec_items(self, pairs, want):
        """Collect {m: vector} from ((secret idx, set idx), value) pairs;
        only complete, in-field vectors for the wanted sets survive."""
        fresh = {m: [None] * self.nsecrets for m in want}
        for item in pairs:
            if not (isinstance(item, tuple) and len(item) == 2):
                continue
            key, v = item
            if not (isinstance(key, tuple) and len(key) == 2):
                continue
            l, m = key
            if not (_is_int(l) and 0 <= l < self.nsecrets and _is_int(m)
                    and m in fresh and _is_int(v) and 0 <= v < self.p
                    and fresh[m][l] is None):
                continue
            fresh[m][l] = v
        return {m: tuple(vals) for m, vals in fresh.items()
                if None not in vals}

    def _on_share(self, src, pairs):
        if src != self.dealer or src == self.me or not isinstance(pairs, tuple):
            return
        got = self._vec_items(
            pairs, [m for m in self.my_sets if m not in self.my_vecs])
        if not got:
            return
        for m, vec in got.items():
            self.my_vecs[m] = vec
            self.pc[(m, self.me)] = vec
        now = self.host.net.t
        if self.share_t is None:
            self.share_t = now
        if now >= self.t1:
            d = self.host.net.delta
            self.host.at(-(-now // d) * d, self.tag, ("pclate",))
        if self.phase >= 2:
            self._late_attests()

    def _on_pcheck(self, src, pairs):
        if src == self.me or src not in self.common \
                or not isinstance(pairs, tuple):
            return
        got = self._vec_items(
            pairs, [m for m in self.common[src] if (m, src) not in self.pc])
        if not got:
            return
        for m, vec in got.items():
            self.pc[(m, src)] = vec
        if self.phase >= 2:
            self._late_attests()
            self._retry(sorted(got))

    # -- schedule ---------------------------------------------------------------

    def on_timer(self, key):
        if key in (("pc",), ("pclate",)):
            self._send_pchecks()
        elif key == ("ok",):
            self._attest_round()
        elif key == ("p4",):
            self._resolve_round()
        elif key == ("acc",):
            self._acceptance()
        elif key == ("es-open",):
            self._open_es_slot()
        else:
            Bank.on_timer(self, key)

    def _send_pchecks(self):
        for j, ms in self.common.items():
            todo = [m for m in ms
                    if m in self.my_vecs and (m, j) not in self.pc_sent]
            if not todo:
                continue
            pairs = tuple(((l, m), self.my_vecs[m][l])
                          for m in todo for l in range(self.nsecrets))
            self.pc_sent.update((m, j) for m in todo)
            self.host.send(j, self.tag, ("pcheck", pairs))

    def _bc_slot(self, sid, sender, anchor, on_upgrade=None):
        self.add_slot(sid, lambda env: BcCore(
            env, self.struct, sender, anchor=anchor,
            on_upgrade=on_upgrade, quiet=self.quiet))

    def _attest_round(self):
        self.phase = 2
        self.pc2 = dict(self.pc)
        for (i, j), ms in sorted(self.pair_sets.items()):
            if self.ok_batch:
                self._bc_slot(("ok", i, j), i, self.t2,
                              on_upgrade=lambda v, s=("ok", i, j):
                              self._ok_out(s, v))
            else:
                for m in ms:
                    self._bc_slot(("ok", m, i, j), i, self.t2,
                                  on_upgrade=lambda v, s=("ok", m, i, j):
                                  self._ok_out(s, v))
        for m in range(1, self.spec.q + 1):
            for i in parties_of(self.spec.holders(m)):
                self._bc_slot(("nok", m, i), i, self.t2)
        oks, self.noks = pairwise_check_step(
            self.my_vecs, self.pc, self.common, self.ok_batch)
        if self.ok_batch:
            for j in sorted(oks):
                self._begin(("ok", self.me, j), OK_BIT)
        else:
            for m, j in sorted(oks):
                self._begin(("ok", m, self.me, j), OK_BIT)
        for m in sorted(self.noks):
            self._begin(("nok", m, self.me), OK_BIT)
        self.host.at(self.t3, self.tag, ("p4",))

    def _late_attests(self):
        oks, _ = pairwise_check_step(
            self.my_vecs, self.pc, self.common, self.ok_batch)
        if self.ok_batch:
            for j in sorted(oks):
                self._begin(("ok", self.me, j), OK_BIT)
        else:
            for m, j in sorted(oks):
                self._begin(("ok", m, self.me, j), OK_BIT)

    def _resolve_round(self):
        self.phase = 3
        # The verdict graph keeps only attestations whose broadcast was
        # confirmed by the deadline vote: a vote-confirmed attestation from an
        # honest sender implies the sender ran the pairwise round on schedule,
        # which is what makes accepted cores evidence of timely dealing.
        # Late attestations (recovered by the broadcast fallback) still land
        # in self.edges and drive value derivation, just never acceptance.
        self.adj3 = {m: dict(d) for m, d in self.reg_edges.items()}
        for m in range(1, self.spec.q + 1):
            senders = set(parties_of(self.spec.holders(m)))
            senders.add(self.dealer)
            for i in sorted(senders):
                self._bc_slot(("res", m, i), i, self.t3)
        self._bc_slot(("cs",), self.dealer, self.t3,
                      on_upgrade=self._cs_upgrade)
        for m in sorted(self.nok_reg):
            if self.me == self.dealer and self.dealt is not None:
                self._begin(("res", m, self.dealer),
                            ("resolve-val",) + self.dealt[m])
            elif m in self.my_vecs:
                self._begin(("res", m, self.me),
                            ("resolve-val",) + self.my_vecs[m])
        if self.me == self.dealer and self.dealt is not None:
            self._try_publish_cs()
        self.host.at(self.t4, self.tag, ("acc",))

    def _acceptance(self):
        self.phase = 4
        ok = self.c_regular and self.c_sets is not None
        if ok:
            for m in range(1, self.spec.q + 1):
                c = self.c_sets[m - 1]
                if not is_clique(c, self.adj3.get(m, {})):
                    ok = False
                    break
                if m in self.nok_reg and self._resolved_value(m, c) is None:
                    ok = False
                    break
        self.accepted = ok
        ba = self.add_slot(("ba",), lambda env: BaCore(
            env, self.struct, anchor=self.t4, quiet=self.quiet))
        ba.set_input(1 if ok else 0)
        self.host.at(self.t5, self.tag, ("es-open",))

    def _open_es_slot(self):
        if self.ba_out == 1:
            return
        self._bc_slot(("es",), self.dealer, self.t5,
                      on_upgrade=self._es_value)
        if self.me == self.dealer and self.es_value is not None:
            self._begin(("es",), self.es_value)

    # -- slot plumbing ------------------------------------------------------------

    def _begin(self, sid, value):
        if sid in self.begun:
            return
        self.begun.add(sid)
        self.slots[sid].begin(value)

    def on_slot_output(self, sid, v):
        kind = sid[0]
        if kind == "ok":
            self._ok_out(sid, v, regular=True)
        elif kind == "nok":
            if v == OK_BIT:
                self.nok_reg.add(sid[1])
        elif kind == "cs":
            masks = self._sets_value(v, "cs-val", self.struct)
            if masks is not None:
                self.c_regular = True
                if self.c_sets is None:
                    self.c_sets = masks
        elif kind == "es":
            self._es_value(v)
        elif kind == "ba":
            self._ba_done(v)

    def _ok_out(self, sid, v, regular=False):
        if v != OK_BIT:
            return
        if self.ok_batch:
            _, i, j = sid
            ms = self.pair_sets.get((i, j), ())
        else:
            _, m, i, j = sid
            ms = (m,)
        for m in ms:
            if regular:
                _half_edge(self.reg_half, self.reg_edges, m, i, j)
            if _half_edge(self.half, self.edges, m, i, j):
                self._edges_changed(m)

    def _edges_changed(self, m):
        if self.phase < 3:
            return
        if self.me == self.dealer and self.dealt is not None:
            if ("cs",) in self.slots and ("cs",) not in self.begun:
                self._try_publish_cs()
            if self.ba_out == 0 and self.es_value is None:
                self._try_publish_es()
        if (self.ba_out == 0 and self.e_sets is not None
                and m in self.my_sets and m not in self.derived):
            self._try_e(m)
            self._maybe_finish()

    def _cs_upgrade(self, v):
        masks = self._sets_value(v, "cs-val", self.struct)
        if masks is not None and self.c_sets is None:
            self.c_sets = masks
            if self.ba_out == 1:
                self._run_c_path()

    def _es_value(self, v):
        masks = self._sets_value(v, "es-val", self.za)
        if masks is not None and self.e_sets is None:
            self.e_sets = masks
            if self.ba_out == 0:
                self._run_e_path()

    def _ba_done(self, v):
        if v not in (0, 1) or self.ba_out is not None:
            return
        self.ba_out = v
        if v == 1:
            self._run_c_path()
        else:
            if self.me == self.dealer and self.dealt is not None:
                self._try_publish_es()
            if self.e_sets is not None:
                self._run_e_path()

    # -- core publication (dealer) ---------------------------------------------

    def _try_publish_cs(self):
        # searched over the deadline-confirmed graph: validators check the
        # published cores against exactly that graph, so anything found here
        # is a clique for them too
        masks = []
        for m in range(1, self.spec.q + 1):
            c = find_core(self.spec.holders(m), self.reg_edges.get(m, {}),
                          self.struct)
            if c is None:
                return
            masks.append(c)
        self._begin(("cs",), ("cs-val",) + tuple(masks))

    def _try_publish_es(self):
        masks = []
        for m in range(1, self.spec.q + 1):
            e = find_core(self.spec.holders(m), self.edges.get(m, {}),
                          self.za)
            if e is None:
                return
            masks.append(e)
        self.es_value = ("es-val",) + tuple(masks)
        if ("es",) in self.slots:
            self._begin(("es",), self.es_value)

    # -- evidence & derivation ---------------------------------------------------

    def _sets_value(self, out, tag, structure):
        q = self.spec.q
        if not (isinstance(out, tuple) and len(out) == q + 1
                and out[0] == tag):
            return None
        masks = out[1:]
        for m, c in enumerate(masks, 1):
            s = self.spec.holders(m)
            if not (_is_int(c) and 0 <= c and c & ~s == 0
                    and structure.covers(s & ~c)):
                return None
        return masks

    def _res_vec(self, out):
        if not (isinstance(out, tuple) and len(out) == self.nsecrets + 1
                and out[0] == "resolve-val"):
            return None
        for v in out[1:]:
            if not (_is_int(v) and 0 <= v < self.p):
                return None
        return out[1:]

    def _resolved_value(self, m, cmask):
        rd = self._res_vec(self.outs.get(("res", m, self.dealer)))
        if rd is None:
            return None
        mask = 0
        for i in parties_of(cmask):
            if self._res_vec(self.outs.get(("res", m, i))) == rd:
                mask |= 1 << (i - 1)
        if self.struct.covers(cmask & ~mask):
            return rd
        return None

    def _reports(self, table, m):
        return {j: vec for (mm, j), vec in table.items() if mm == m}

    def _retry(self, ms):
        if self.ba_out == 1 and self.c_sets is not None:
            for m in ms:
                self._try_rules(m)
            self._maybe_finish()
        elif self.ba_out == 0 and self.e_sets is not None:
            for m in ms:
                self._try_e(m)
            self._maybe_finish()

    def _run_c_path(self):
        if self.done or self.c_sets is None:
            return
        for m in self.my_sets:
            self._try_rules(m)
        self._maybe_finish()

    def _try_rules(self, m):
        if m in self.derived or self.c_sets is None:
            return
        c = self.c_sets[m - 1]
        if m in self.nok_reg:
            v = self._resolved_value(m, c)
            if v is not None:
                self.derived[m] = v
                return
        v = derive_share(c, self._reports(self.pc2, m), self.struct)
        if v is not None:
            self.derived[m] = v
            return
        v = derive_share(c, self._reports(self.pc, m), self.za)
        if v is not None:
            self.derived[m] = v

    def _run_e_path(self):
        if self.done or self.e_sets is None:
            return
        for m in self.my_sets:
            self._try_e(m)
        self._maybe_finish()

    def _try_e(self, m):
        if m in self.derived or self.e_sets is None:
            return
        e = self.e_sets[m - 1]
        if not is_clique(e, self.edges.get(m, {})):
            return
        if e >> (self.me - 1) & 1 and m in self.my_vecs:
            self.derived[m] = self.my_vecs[m]
            return
        v = derive_share(e, self._reports(self.pc, m), self.struct)
        if v is not None:
            self.derived[m] = v

    def _maybe_finish(self):
        if self.done or len(self.derived) < len(self.my_sets):
            return
        self.finish(tuple({m: self.derived[m][l] for m in self.my_sets}
                          for l in range(self.nsecrets)))


def vss_run(struct, za, p, dealer, secrets, nsecrets=None, mode="sync",
            seed=0, delta=1, scheduler="eventual", budget=None,
            corrupt=None, ok_batch=True, quiet=True, until=None,
            trace_mode="digest", tag=("vss",), monitors=()):
    """Run one instance over a fresh network; returns (net, machines).

    ``corrupt`` maps party id -> corruption strategy. Only the dealer's
    machine gets the secrets; everyone else just knows how many there
    are (``nsecrets``, defaulting to len(secrets)). ``monitors`` are
    delivery observers attached to the network before it runs.
    """
    n = struct.n
    L = len(secrets) if nsecrets is None else nsecrets
    if budget is None:
        budget = 40 * vss_ticks(n, delta)
    net = Net(n, mode=mode, delta=delta, scheduler=scheduler,
              budget=budget, seed=seed, trace_mode=trace_mode)
    net.monitors.extend(monitors)
    corrupt = corrupt or {}
    for pid in range(1, n + 1):
        net.add_party(pid, corrupt.get(pid))
    machines = {}
    for pid in range(1, n + 1):
        machines[pid] = net.party(pid).spawn(tag, VssMachine(
            struct, za, p, dealer, nsecrets=L,
            secrets=list(secrets) if pid == dealer else None,
            ok_batch=ok_batch, quiet=quiet))
    net.run(until=until)
    return net, machines
