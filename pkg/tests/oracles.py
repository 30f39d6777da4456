"""Independently written naive reference implementations used as test oracles.

Everything here works on plain frozensets / dicts and brute force, sharing no
code with the package, so agreement between the two is meaningful evidence.
"""

from itertools import product


def naive_q(n, sets, k):
    """No union of any k subsets (with repetition) covers {1..n}."""
    scope = frozenset(range(1, n + 1))
    families = [frozenset(s) for s in sets]
    if not families:
        return len(scope) > 0
    for combo in product(families, repeat=k):
        u = set()
        for s in combo:
            u |= s
        if u == scope:
            return False
    return True


def naive_q_mixed(n, zs_sets, za_sets, k, kp):
    """No union of k zs-subsets and kp za-subsets covers {1..n}."""
    scope = frozenset(range(1, n + 1))
    zs = [frozenset(s) for s in zs_sets] or [frozenset()]
    za = [frozenset(s) for s in za_sets] or [frozenset()]
    for cs in product(zs, repeat=k):
        for ca in product(za, repeat=kp):
            u = set()
            for s in cs:
                u |= s
            for s in ca:
                u |= s
            if u == scope:
                return False
    return True


def naive_covered(sets, group):
    g = set(group)
    return any(g <= set(s) for s in sets)


def eval_circuit_plaintext(lines, inputs, p):
    """Evaluate the circuit text format directly over Z_p.

    ``lines`` is the raw text split into lines; ``inputs`` maps party -> value.
    Returns the value of the (single) OUTPUT wire.
    """
    wires = {}
    output = None
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, rhs = [part.strip() for part in line.split("=", 1)]
        toks = rhs.split()
        op = toks[0]
        if op == "INPUT":
            wires[name] = inputs.get(int(toks[1]), 0) % p
        elif op == "ADD":
            wires[name] = (wires[toks[1]] + wires[toks[2]]) % p
        elif op == "MUL":
            wires[name] = (wires[toks[1]] * wires[toks[2]]) % p
        elif op == "CMUL":
            wires[name] = (int(toks[1]) * wires[toks[2]]) % p
        elif op == "CADD":
            wires[name] = (int(toks[1]) + wires[toks[2]]) % p
        elif op == "OUTPUT":
            output = wires[toks[1]]
        else:
            raise ValueError("bad op %r" % op)
    if output is None:
        raise ValueError("circuit has no OUTPUT")
    return output


def random_structure(rng, n, max_sets=6, max_size=None):
    """A random list of party subsets of {1..n} (possibly empty/non-maximal)."""
    if max_size is None:
        max_size = n
    count = rng.randint(1, max_sets)
    sets = []
    for _ in range(count):
        size = rng.randint(0, max_size)
        sets.append(sorted(rng.sample(range(1, n + 1), min(size, n))))
    return sets
