"""Reliable broadcast and deadline broadcast with a fallback path.

Two protocol cores live here (see simnet for how cores are hosted):

* AcastCore  -- sender-rooted reliable broadcast. The sender opens with
  ("init", v); receivers echo the first init they see, promote echoes to
  ready votes once a full complement set P \\ Z echoed one value, join the
  ready wave once the ready senders for a value cannot all be corrupt, and
  deliver once the ready senders for one value cover a complement set.
  In a synchronous run an honest sender's value lands at exactly
  3 delay units; across any run, honest parties never deliver two
  different values.

* BcCore -- deadline broadcast. The sender Acasts its value at the slot's
  anchor tick; at anchor + 3d everyone feeds whatever the Acast produced
  (or BOT) into a phase-king agreement vote, and at the close tick
  anchor + (3 + 3n)d the regular output is the agreed value if it matches
  the Acast delivery, else BOT. A BOT regular output is upgraded later
  (fallback) as soon as the Acast delivers; non-BOT regular outputs never
  change.

Late sender inputs are allowed: the slot then skips regular delivery for
everyone (common BOT) and the value still spreads through the fallback
path, which is exactly how composite protocols let stragglers catch up.
"""

from . import agreement
from .simnet import Core, NsEnv, wire_ok

BOT = None

T_ACAST = 3  # delay units from an honest init to every honest delivery


def bc_ticks(n, delta):
    """Regular-output deadline of one broadcast slot, in ticks."""
    return T_ACAST * delta + agreement.sba_ticks(n, delta)


class AcastCore(Core):
    """One sender-rooted reliable-broadcast slot.

    Values must be hashable and non-None (None marks "no output" in the
    layers above, so it is dropped at the wire).
    """

    def __init__(self, env, struct, sender, value=None):
        self.env = env
        self.struct = struct
        self.sender = sender
        self.echoed = False
        self.readied = False
        self.delivered = False
        self.echo_from = {}
        self.ready_from = {}
        if value is not None and env.me == sender:
            env.send_all(("init", value))

    def begin(self, value):
        """Late sender start (used by slots whose input shows up late)."""
        if self.env.me == self.sender:
            self.env.send_all(("init", value))

    def on_msg(self, src, body):
        if not (isinstance(body, tuple) and len(body) == 2
                and body[1] is not None and wire_ok(body[1])):
            return
        kind, v = body
        bit = 1 << (src - 1)
        if kind == "init":
            if src == self.sender and not self.echoed:
                self.echoed = True
                self.env.send_all(("echo", v))
        elif kind == "echo":
            m = self.echo_from.get(v, 0) | bit
            self.echo_from[v] = m
            if not self.readied and self.struct.quorum(m):
                self.readied = True
                self.env.send_all(("ready", v))
        elif kind == "ready":
            m = self.ready_from.get(v, 0) | bit
            self.ready_from[v] = m
            if not self.readied and not self.struct.covers(m):
                self.readied = True
                self.env.send_all(("ready", v))
            if not self.delivered and self.struct.quorum(m):
                self.delivered = True
                self.env.out(v)


class BcCore(Core):
    """One deadline-broadcast slot: reliable broadcast + agreement vote.

    `on_upgrade` (optional) hears fallback upgrades, i.e. a BOT regular
    output turning into the sender's value after the close tick.
    """

    UNSET = object()

    def __init__(self, env, struct, sender, value=None, anchor=None,
                 on_upgrade=None, quiet=False):
        self.env = env
        self.struct = struct
        self.sender = sender
        self.on_upgrade = on_upgrade
        self.acast_value = self.UNSET
        self.sba_value = self.UNSET
        self.regular = self.UNSET    # fixed at the close tick
        self.value = self.UNSET      # current output (may upgrade from BOT)
        self.closed = False
        d = env.delta
        self.anchor = env.now if anchor is None else anchor
        self.acast = AcastCore(NsEnv(env, "a", self._acast_out),
                               struct, sender, value)
        self.sba = agreement.SbaCore(
            NsEnv(env, "s", self._sba_out), struct,
            anchor=self.anchor + T_ACAST * d, input_fn=self._sba_input,
            quiet=quiet)
        env.at(self.anchor + bc_ticks(env.n, d), ("close",))

    def begin(self, value):
        """Sender-side late input; rides the fallback path if past anchor."""
        self.acast.begin(value)

    def _sba_input(self):
        return BOT if self.acast_value is self.UNSET else self.acast_value

    def _acast_out(self, v):
        self.acast_value = v
        if self.closed and self.value is BOT:
            self.value = v
            if self.on_upgrade is not None:
                self.on_upgrade(v)

    def _sba_out(self, v):
        self.sba_value = v

    def on_msg(self, src, body):
        if not (isinstance(body, tuple) and len(body) == 2):
            return
        ns, sub = body
        if ns == "a":
            self.acast.on_msg(src, sub)
        elif ns == "s":
            self.sba.on_msg(src, sub)

    def on_timer(self, key):
        if not (isinstance(key, tuple) and key):
            return
        if key[0] in ("a", "s") and len(key) == 2:
            (self.acast if key[0] == "a" else self.sba).on_timer(key[1])
        elif key == ("close",):
            self.closed = True
            if (self.acast_value is not self.UNSET
                    and self.sba_value == self.acast_value):
                self.regular = self.acast_value
            else:
                self.regular = BOT
            self.value = self.regular
            self.env.out(self.regular)
            if self.regular is BOT and self.acast_value is not self.UNSET:
                # the agreement vote missed it, but the reliable broadcast
                # already delivered: upgrade right away
                self.value = self.acast_value
                if self.on_upgrade is not None:
                    self.on_upgrade(self.acast_value)
