"""Executable checks around the hardness results: extracting firing
schedules from oblivious fire-and-forward protocols, searching for a
caterpillar on which a given schedule provably fails, and measuring
retry schemes for the star network.

The extraction step treats the protocol as a black box.  A state is
replayed against pure silence to read off its firing schedule, then
replayed again with single injected receptions; any behaviour that is
not "fire on schedule unless something just arrived, forward what just
arrived, otherwise stay silent" is reported as NotOblivious.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from .engine import (
    Bounded,
    DuplexMode,
    FireAndForward,
    NodeView,
    Protocol,
    SLEEP_FOREVER,
    Unbounded,
    run,
)
from .protocols import ScheduledFireForwardState, make_protocol
from .trees import Tree, make_caterpillar


class NotOblivious(ValueError):
    """The protocol's transmissions depend on more than (label, time)."""


@dataclasses.dataclass(frozen=True)
class FiringSchedule:
    """Per-label firing steps of an oblivious fire-and-forward protocol."""

    n: int
    T: int
    fires: tuple[tuple[int, ...], ...]

    def to_json(self) -> str:
        doc = {"n": self.n, "T": self.T, "F": [list(f) for f in self.fires]}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "FiringSchedule":
        doc = json.loads(text)
        fires = tuple(tuple(sorted(f)) for f in doc["F"])
        if len(fires) != doc["n"]:
            raise ValueError("schedule lists fires for the wrong number of labels")
        return cls(n=doc["n"], T=doc["T"], fires=fires)

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str) -> "FiringSchedule":
        with open(path) as fh:
            return cls.from_json(fh.read())


def _carried(msg) -> frozenset[int]:
    if isinstance(msg, Unbounded):
        return frozenset(msg.rumors)
    return frozenset((msg.rumor,))


def _replay(state, view, T: int, inject_step: int | None = None, inject_msg=None):
    """Drive one state alone for T steps, honoring its sleep promises
    the way the engine does: an act happens when the promise expires,
    and a reception pulls the next act to the following step.  Returns
    {step: message} for every transmission."""
    out = {}
    wake = max(state.asleep_until, 0)
    t = wake if inject_step is None else min(wake, inject_step)
    while t < T:
        if t == wake:
            view.time = t
            action = state.act(view)
            if action is not None:
                out[t] = action
            wake = max(state.asleep_until, t + 1)
        if inject_step == t:
            view.inbox.append((t, inject_msg))
            wake = min(wake, t + 1)
            inject_step = None
        nxt = wake if inject_step is None else min(wake, inject_step)
        t = max(t + 1, min(nxt, T))
    return out


def _probe_message(kind, rumor: int):
    if kind is Unbounded:
        return Unbounded(rumors=frozenset((rumor,)))
    return kind(rumor=rumor)


def extract_schedule(
    protocol: Protocol,
    T: int | None = None,
    *,
    probes: int = 8,
    probe_seed: int = 0,
) -> FiringSchedule:
    """Read the firing schedule off an oblivious protocol, or raise
    NotOblivious.

    Per label: a silence-fed replay defines the schedule, then each
    probe injects one foreign rumor at step tau and demands the mls
    discipline: scheduled fires still happen (except at tau+1, where
    the arrival must silence them), the injected rumor may be forwarded
    at tau+1 only, and nothing else is ever transmitted.
    """
    if protocol.needs_rng:
        raise NotOblivious("protocol draws randomness")
    if protocol.n is None:
        raise ValueError("protocol must be bound to a network size")
    n = protocol.n
    horizon = T if T is not None else protocol.horizon
    if horizon is None:
        raise ValueError("no horizon known; pass T explicitly")
    mode = protocol.mode if protocol.mode is not None else DuplexMode.FULL
    kind = protocol.message_kind

    all_fires = []
    for label in range(n):
        state = protocol.state_factory(label, n, mode, None)
        silent = _replay(state, NodeView(label, n), horizon)
        for t, msg in silent.items():
            if type(msg) is not kind:
                raise NotOblivious(f"label {label} sent a {type(msg).__name__}")
            if _carried(msg) != {label}:
                raise NotOblivious(
                    f"label {label} transmitted a rumor it never held at step {t}"
                )
        fires = tuple(sorted(silent))
        fire_set = set(fires)

        if n > 1:
            foreign = (label + 1) % n
            taus = {0, max(0, horizon - 2)}
            for f in fires:
                taus.add(f)
                if f > 0:
                    taus.add(f - 1)
            rng = np.random.default_rng([probe_seed, label])
            if horizon > 1:
                taus.update(int(x) for x in rng.integers(0, horizon - 1, size=probes))
            for tau in sorted(taus):
                state = protocol.state_factory(label, n, mode, None)
                seen = _replay(
                    state,
                    NodeView(label, n),
                    horizon,
                    inject_step=tau,
                    inject_msg=_probe_message(kind, foreign),
                )
                for t, msg in seen.items():
                    carried = _carried(msg)
                    if t == tau + 1:
                        if t in fire_set:
                            raise NotOblivious(
                                f"label {label} fired at {t} over a fresh arrival"
                            )
                        if carried != {foreign}:
                            raise NotOblivious(
                                f"label {label} sent {sorted(carried)} at {t}, "
                                f"not the forwarded rumor"
                            )
                    elif t not in fire_set:
                        raise NotOblivious(
                            f"label {label} transmitted off schedule at {t}"
                        )
                    elif carried != {label}:
                        raise NotOblivious(
                            f"label {label} changed its fire payload at {t}"
                        )
                missing = fire_set - set(seen) - {tau + 1}
                if missing:
                    raise NotOblivious(
                        f"label {label} dropped scheduled fires {sorted(missing)} "
                        f"after an arrival at {tau}"
                    )
        all_fires.append(fires)
    return FiringSchedule(n=n, T=horizon, fires=tuple(all_fires))


def schedule_protocol(
    sched: FiringSchedule, *, n_total: int | None = None
) -> Protocol:
    """Replay a firing schedule as a protocol.  Labels beyond the
    schedule (relay nodes on a witness tree) never fire, only forward."""
    fires = sched.fires

    def factory(label, n_, mode_, rng):
        own = fires[label] if label < len(fires) else ()
        return ScheduledFireForwardState(label, own)

    return Protocol(
        name="schedule",
        message_kind=FireAndForward,
        state_factory=factory,
        n=n_total if n_total is not None else sched.n,
    )


def _max_matching(adj: list[list[int]], n_right: int) -> list[int | None]:
    """Kuhn's augmenting paths; adj[i] lists right nodes of left i.
    Returns per-left matched right node (None if unmatched)."""
    match_right: list[int | None] = [None] * n_right
    match_left: list[int | None] = [None] * len(adj)

    def augment(i: int, seen: set[int]) -> bool:
        for r in adj[i]:
            if r in seen:
                continue
            seen.add(r)
            if match_right[r] is None or augment(match_right[r], seen):
                match_right[r] = i
                match_left[i] = r
                return True
        return False

    for i in range(len(adj)):
        augment(i, set())
    return match_left


@dataclasses.dataclass(frozen=True)
class CaterpillarWitness:
    """A caterpillar on which the schedule provably fails to deliver
    the victim's rumor, plus the blocker assignment that kills each of
    the victim's firings.  pairs holds (fire step, blocker label, spine
    position); re-verification by simulation already passed."""

    victim: int
    pairs: tuple[tuple[int, int, int], ...]
    offsets: tuple[int, ...]
    tree: Tree


def _verify_witness(sched: FiringSchedule, victim: int, tree: Tree) -> bool:
    proto = schedule_protocol(sched, n_total=tree.n)
    trace = run(
        tree,
        proto,
        DuplexMode.FULL,
        max_steps=sched.T + 2 * sched.n,
        stop_early=False,
    )
    return victim not in trace.delivery


def find_caterpillar_witness(sched: FiringSchedule) -> CaterpillarWitness | None:
    """Search every victim label for a caterpillar that silences it.

    The victim's leaf sits at the deep end of an n-node spine.  Each of
    its firings at t must be killed in transit: a blocker leaf at spine
    position s fires into the same spine node the rumor crosses at t+s,
    iff t+s is in the blocker's own schedule.  A perfect matching of
    firings to distinct blockers kills every attempt; remaining labels
    sit at position 0 where their fires only add collisions.  Every
    candidate is re-verified by simulation before being returned.
    """
    n = sched.n
    if n < 2:
        return None
    window = n - 1
    for victim in range(n):
        fw = sched.fires[victim]
        others = [u for u in range(n) if u != victim]
        adj = []
        for t in fw:
            row = []
            for idx, u in enumerate(others):
                if any(t <= tp <= t + window for tp in sched.fires[u]):
                    row.append(idx)
            adj.append(row)
        matched = _max_matching(adj, len(others))
        if any(m is None for m in matched):
            continue
        offsets = [0] * n
        pairs = []
        for t, idx in zip(fw, matched):
            u = others[idx]
            tp = min(tp for tp in sched.fires[u] if t <= tp <= t + window)
            offsets[u] = tp - t
            pairs.append((t, u, tp - t))
        tree = make_caterpillar(n, offsets)
        if _verify_witness(sched, victim, tree):
            return CaterpillarWitness(
                victim=victim,
                pairs=tuple(pairs),
                offsets=tuple(offsets),
                tree=tree,
            )
    return None


def delivery_oracle(tree: Tree) -> dict[int, int]:
    """Reference delivery map for a tree: the collision-free round-robin
    relay, which provably gathers everything within n*n steps."""
    proto = make_protocol("rr-bnd", tree.n)
    trace = run(tree, proto, DuplexMode.FULL, max_steps=tree.n * tree.n + tree.n)
    if trace.incomplete:
        raise AssertionError("round-robin relay failed to gather; engine broken")
    return dict(trace.delivery)


# ---------------------------------------------------------------------------
# star-network retry schemes


@dataclasses.dataclass(frozen=True)
class IntervalScheme:
    """Repeated uniform-slot intervals: I = ceil(c ln2 ln n) intervals,
    each of L = ceil(n / ln2) slots; every player picks one uniform slot
    per interval."""

    c: float

    def layout(self, n: int) -> tuple[int, int]:
        intervals = math.ceil(self.c * math.log(2) * math.log(n))
        length = math.ceil(n / math.log(2))
        return max(1, intervals), length


def interval_all_success(
    scheme: IntervalScheme, n: int, trials: int, seed: int = 0
) -> float:
    """Fraction of trials in which every player owns some slot alone in
    at least one interval."""
    intervals, length = scheme.layout(n)
    rng = np.random.default_rng(seed)
    good = 0
    chunk = max(1, 10 ** 6 // max(1, intervals * n))
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        slots = rng.integers(0, length, size=(b, intervals, n))
        base = (np.arange(b)[:, None, None] * intervals + np.arange(intervals)[None, :, None]) * length
        flat = (slots + base).ravel()
        counts = np.bincount(flat, minlength=b * intervals * length)
        alone = counts[(slots + base)] == 1
        good += int(alone.any(axis=1).all(axis=1).sum())
        done += b
    return good / trials


def interval_success_samples(n: int, samples: int, seed: int = 0) -> float:
    """Per-interval success rate of a designated player: fraction of
    intervals in which player 0's slot is chosen by nobody else."""
    length = math.ceil(n / math.log(2))
    rng = np.random.default_rng(seed)
    good = 0
    chunk = max(1, 10 ** 6 // n)
    done = 0
    while done < samples:
        b = min(chunk, samples - done)
        slots = rng.integers(0, length, size=(b, n))
        own = slots[:, 0]
        clash = (slots[:, 1:] == own[:, None]).any(axis=1)
        good += int(b - clash.sum())
        done += b
    return good / samples


def iid_all_success(
    p: float, horizon: int, n: int, trials: int, seed: int = 0
) -> float:
    """Fraction of trials in which every one of n players, transmitting
    independently with probability p per step, fires alone at least
    once within the horizon."""
    rng = np.random.default_rng(seed)
    good = 0
    for _ in range(trials):
        fires = rng.random((horizon, n)) < p
        alone = fires & (fires.sum(axis=1) == 1)[:, None]
        if alone.any(axis=0).all():
            good += 1
    return good / trials
