"""Adversary-structure algebra.

Parties are numbered 1..n and party sets are bitmasks (bit i-1 <=> party i),
so n is capped at 64. An adversary structure is a list of party sets: the
collections of parties an adversary may corrupt at once. Structures are kept
exactly as given (order matters for deterministic tie-breaking downstream);
predicates use the monotone interpretation throughout:

* ``covers(C)``   -- some member contains C (so "C not in Z" means not covered)
* ``quorum(S)``   -- S contains the complement of some member ("all of P\\Z")

Both are superset/subset tests against the maximal members only, which is
equivalent and avoids redundant scans when the structure carries non-maximal
or empty sets (both are accepted).
"""

from dataclasses import dataclass
from itertools import combinations

MAX_PARTIES = 64


def mask_of(parties):
    """Bitmask for an iterable of 1-based party numbers."""
    m = 0
    for p in parties:
        if not 1 <= p <= MAX_PARTIES:
            raise ValueError("party number out of range: %r" % (p,))
        m |= 1 << (p - 1)
    return m


def parties_of(mask):
    """Sorted 1-based party numbers in a bitmask."""
    out = []
    p = 1
    while mask:
        if mask & 1:
            out.append(p)
        mask >>= 1
        p += 1
    return out


def full_mask(n):
    return (1 << n) - 1


def popcount(mask):
    return bin(mask).count("1")


def _maximal(sets):
    """Members not strictly contained in another member (dedup'd)."""
    out = []
    for i, a in enumerate(sets):
        keep = True
        for j, b in enumerate(sets):
            if i != j and a & ~b == 0 and (a != b or j < i):
                keep = False
                break
        out.append(keep)
    return [s for s, k in zip(sets, out) if k]


class AdversaryStructure:
    """A monotone collection of corruptible party sets over scope 1..n.

    ``sets`` preserves the given order (used for canonical scans); empty and
    non-maximal members are legal and kept.
    """

    def __init__(self, n, sets):
        if not 1 <= n <= MAX_PARTIES:
            raise ValueError("n out of range: %r" % (n,))
        scope = full_mask(n)
        for s in sets:
            if s & ~scope:
                raise ValueError(
                    "structure member %s outside scope 1..%d" % (parties_of(s), n))
        self.n = n
        self.sets = list(sets)
        self.maximal = _maximal(self.sets)

    @classmethod
    def from_lists(cls, n, lists):
        return cls(n, [mask_of(g) for g in lists])

    def __len__(self):
        return len(self.sets)

    def __eq__(self, other):
        return (isinstance(other, AdversaryStructure)
                and self.n == other.n and self.sets == other.sets)

    def covers(self, mask):
        """True iff some member contains every party in ``mask``."""
        for z in self.maximal:
            if mask & ~z == 0:
                return True
        return False

    def quorum(self, senders):
        """True iff ``senders`` contains P \\ Z for some member Z."""
        return self.covers(full_mask(self.n) & ~senders)

    def as_lists(self):
        return [parties_of(s) for s in self.sets]


def q_condition(n, struct, k, scope=None):
    """No union of k members of ``struct`` covers ``scope`` (default 1..n)."""
    scope = full_mask(n) if scope is None else scope
    cand = struct.maximal
    if not cand:
        return scope != 0
    if len(cand) <= k:
        u = 0
        for z in cand:
            u |= z
        return u & scope != scope
    for combo in combinations(cand, k):
        u = 0
        for z in combo:
            u |= z
        if u & scope == scope:
            return False
    return True


def q_condition_mixed(n, zs, za, k, kp, scope=None):
    """No union of k members of ``zs`` and kp members of ``za`` covers
    ``scope`` (default 1..n)."""
    scope = full_mask(n) if scope is None else scope

    def unions(struct, count):
        cand = struct.maximal
        if not cand:
            yield 0
            return
        if len(cand) <= count:
            u = 0
            for z in cand:
                u |= z
            yield u
            return
        for combo in combinations(cand, count):
            u = 0
            for z in combo:
                u |= z
            yield u

    for us in unions(zs, k):
        if us & scope == scope:
            return False
        for ua in unions(za, kp):
            if (us | ua) & scope == scope:
                return False
    return True


@dataclass
class ConReport:
    ok: bool
    clause: str = ""
    witness: tuple = ()

    def __bool__(self):
        return self.ok


def check_con(zs, za):
    """Check the joint admissibility conditions on (zs, za).

    Three clauses, reported with a witness on failure:
    1. the two structures differ;
    2. every member of ``za`` lies inside some member of ``zs``;
    3. no union of three ``zs`` members and one ``za`` member covers the scope.
    """
    if zs.n != za.n:
        return ConReport(False, "scope mismatch", (zs.n, za.n))
    if sorted(zs.sets) == sorted(za.sets):
        return ConReport(False, "structures identical", ())
    for z in za.sets:
        if not zs.covers(z):
            return ConReport(False, "containment", (parties_of(z),))
    scope = full_mask(zs.n)
    zs_cand = zs.maximal if len(zs.maximal) > 3 else None
    combos = (combinations(zs.maximal, 3) if zs_cand
              else [tuple(zs.maximal)])
    for combo in combos:
        us = 0
        for z in combo:
            us |= z
        for z4 in (za.maximal or [0]):
            if us | z4 == scope:
                return ConReport(
                    False, "Q(3,1)",
                    tuple(parties_of(z) for z in combo) + (parties_of(z4),))
    return ConReport(True)


class SharingSpec:
    """Ordered share-holder sets derived from a structure: S_m = P \\ Z_m.

    Indexing is 1-based (share m lives with set m), matching the structure's
    given order; q == len(structure).
    """

    def __init__(self, struct):
        scope = full_mask(struct.n)
        self.n = struct.n
        self.sets = [scope & ~z for z in struct.sets]

    @property
    def q(self):
        return len(self.sets)

    def holders(self, m):
        """Bitmask of the holders of share m (1-based)."""
        return self.sets[m - 1]

    def holds(self, party, m):
        return bool(self.sets[m - 1] >> (party - 1) & 1)

    def shares_of(self, party):
        """1-based share indices party holds."""
        bit = 1 << (party - 1)
        return [m + 1 for m, s in enumerate(self.sets) if s & bit]
