"""Partition-form coalition game among MUEs and SBSs.

A value function maps a partition of the players to one payoff per player
(an NTU game with externalities: a player's rate depends on how everybody
else is grouped). The module provides Pareto dominance, a brute-force
recursive-core check for small games and the distributed deviate-and-release
formation procedure run in each trial.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from itertools import combinations, product
from typing import Callable, Iterable, Iterator

Player = int
Partition = frozenset  # frozenset[frozenset[Player]]
ValueFunction = Callable[[Partition], dict]

TOL = 1e-9
MAX_CORE_PLAYERS = 6
MAX_POOL = 4  # SBSs an actor considers when assembling a deviation
LOOKAHEAD = 20  # accepted offers screened for stability before falling back to the best


@dataclass(frozen=True)
class Outcome:
    partition: Partition
    payoff: tuple[tuple[Player, float], ...]

    def __getitem__(self, player: Player) -> float:
        return dict(self.payoff)[player]

    @property
    def total(self) -> float:
        return float(sum(v for _, v in self.payoff))

    def blocks(self) -> list[tuple[Player, ...]]:
        return sorted(tuple(sorted(b)) for b in self.partition)


def make_partition(blocks: Iterable[Iterable[Player]]) -> Partition:
    p = frozenset(frozenset(b) for b in blocks)
    seen: set = set()
    for b in p:
        if not b:
            raise ValueError("empty block")
        if seen & b:
            raise ValueError("blocks overlap")
        seen |= b
    return p


def evaluate_partition(vf: ValueFunction, partition: Partition) -> Outcome:
    payoff = vf(partition)
    return Outcome(partition, tuple(sorted((p, float(payoff[p])) for b in partition for p in b)))


def pareto_dominates(y: dict, x: dict, members: Iterable[Player], tol: float = TOL) -> bool:
    """Nobody in ``members`` is worse off under ``y`` and somebody is strictly better."""
    members = list(members)
    if not members:
        return False
    if any(y[i] < x[i] - tol for i in members):
        return False
    return any(y[i] > x[i] + tol for i in members)


def set_partitions(players: Iterable[Player]) -> Iterator[Partition]:
    items = sorted(players)
    if not items:
        yield frozenset()
        return

    def rec(rest):
        if not rest:
            yield []
            return
        first, tail = rest[0], rest[1:]
        for part in rec(tail):
            for i in range(len(part)):
                yield part[:i] + [part[i] | {first}] + part[i + 1:]
            yield part + [frozenset([first])]

    for part in rec(items):
        yield frozenset(frozenset(b) for b in part)


# ---------------------------------------------------------------------------
# recursive core

def recursive_core_bruteforce(vf: ValueFunction, players: Iterable[Player],
                              optimistic: bool = False,
                              max_players: int = MAX_CORE_PLAYERS) -> list[Outcome]:
    """Every undominated outcome of the game, by exhaustive search.

    Coalition S blocks an outcome when it has a partition of itself such that
    its members are Pareto better off against every (``optimistic``: some)
    reaction of the remaining players. The remaining players are expected to
    settle in the core of the residual game they face, or anywhere if that
    residual core is empty.
    """
    players = frozenset(players)
    if len(players) > max_players:
        raise ValueError(f"{len(players)} players is too many for exhaustive search "
                         f"(limit {max_players})")
    memo_payoff: dict[Partition, dict] = {}

    def pay(partition: Partition) -> dict:
        hit = memo_payoff.get(partition)
        if hit is None:
            hit = memo_payoff[partition] = dict(vf(partition))
        return hit

    @lru_cache(maxsize=None)
    def core(residual: frozenset, fixed: Partition) -> tuple[Partition, ...]:
        """Core of the game among ``residual`` with the others arranged as ``fixed``."""
        if not residual:
            return (frozenset(),)
        return tuple(pr for pr in set_partitions(residual)
                     if not _dominated(residual, fixed, pr))

    @lru_cache(maxsize=None)
    def expected(residual: frozenset, fixed: Partition) -> tuple[Partition, ...]:
        c = core(residual, fixed)
        return c if c else tuple(set_partitions(residual))

    def _dominated(residual, fixed, pr) -> bool:
        x = pay(fixed | pr)
        members = sorted(residual)
        for size in range(1, len(members) + 1):
            for s in combinations(members, size):
                s = frozenset(s)
                rest = residual - s
                for ps in set_partitions(s):
                    reactions = expected(rest, fixed | ps)
                    wins = (pareto_dominates(pay(fixed | ps | r), x, s) for r in reactions)
                    if (any(wins) if optimistic else all(wins)):
                        return True
        return False

    found = core(players, frozenset())
    return [evaluate_partition(lambda p: pay(p), p) for p in found]


def in_recursive_core(vf: ValueFunction, partition: Partition, **kw) -> bool:
    players = frozenset(p for b in partition for p in b)
    return partition in {o.partition for o in recursive_core_bruteforce(vf, players, **kw)}


# ---------------------------------------------------------------------------
# distributed formation

@dataclass
class TraceEntry:
    round: int
    actor: Player
    kind: str  # "deviate" or "release"
    proposed: list[Player]
    deltas: dict[str, float]
    committed: bool
    reason: str = ""


@dataclass
class FormationResult:
    partition: Partition
    outcome: Outcome
    trace: list[TraceEntry] = field(default_factory=list)
    total_values: list[float] = field(default_factory=list)
    rounds: int = 0
    converged: bool = False

    def trace_json(self) -> str:
        return json.dumps({
            "rounds": self.rounds,
            "converged": self.converged,
            "total_values": self.total_values,
            "final": self.outcome.blocks(),
            "trace": [asdict(t) for t in self.trace],
        }, indent=2)


def _deviate(partition: Partition, coalition: frozenset, sbss) -> Partition:
    """``coalition`` leaves its blocks and forms on its own.

    A macro user whose block loses all of its SBSs to the coalition follows
    them; everybody else stays where they were.
    """
    touched = {b for b in partition if not b.isdisjoint(coalition)}
    out = set(partition) - touched
    coalition = set(coalition)
    for b in touched:
        rest = b - coalition
        if rest and rest.isdisjoint(sbss):
            coalition |= rest
        elif rest:
            out.add(rest)
    out.add(frozenset(coalition))
    return frozenset(out)


def _move(partition: Partition, player: Player, target: frozenset) -> Partition:
    src = next(b for b in partition if player in b)
    out = set(partition) - {src, target}
    if src - {player}:
        out.add(src - {player})
    out.add(target | {player})
    return frozenset(out)


def _candidates(k: Player, partition: Partition, neighbours: list[Player], sbss,
                max_size: int, max_pool: int) -> list[frozenset]:
    """Coalitions k may propose: k plus SBSs from its block and its interferers' blocks."""
    cur = next(b for b in partition if k in b)
    pool: list[Player] = []
    for j in [p for p in sorted(cur) if p != k] + list(neighbours):
        tb = next(b for b in partition if j in b)
        for p in [j] + sorted(tb - {j}):
            if p in sbss and p != k and p not in pool:
                pool.append(p)
    pool = pool[:max_pool]
    cur_sbs = cur & sbss
    out = []
    for size in range(0, min(max_size - 1, len(pool)) + 1):
        for extra in combinations(pool, size):
            t = frozenset((k,) + extra)
            if t != cur_sbs:
                out.append(t)
    return out


def _coalitions_ok(ev, block: frozenset) -> bool:
    return all(ok for group, ok in ev.coalitions if set(group) <= block)


@dataclass(frozen=True)
class _Context:
    lists: dict
    sbss: frozenset
    max_size: int
    max_pool: int


def _scatter(partition: Partition, before: Partition, keep: Player) -> Partition:
    """Blocks that lost members to the deviation of ``keep``'s coalition break up."""
    out = set()
    for b in partition:
        if b in before or keep in b:
            out.add(b)
        else:
            out.update(frozenset([p]) for p in b)
    return frozenset(out)


def _proposals(net, partition, ev, k, ctx: _Context, tol: float, check_total: bool = True,
               scatter: tuple[bool, ...] = (False,)):
    """Every deviation k can propose, with the reason it is refused ("" if acceptable).

    With ``scatter=(False, True)`` each coalition is also tried with the
    blocks it abandons broken up into singletons.
    """
    total_old = sum(ev.payoff.values())
    seen = set()
    for t, sc in product(
            _candidates(k, partition, ctx.lists[k], ctx.sbss, ctx.max_size, ctx.max_pool),
            scatter):
        cand = _deviate(partition, t, ctx.sbss)
        if sc:
            cand = _scatter(cand, partition, k)
        if cand == partition or cand in seen:
            continue
        seen.add(cand)
        cev = net.evaluate(cand)
        moved = next(blk for blk in cand if k in blk)
        if not _coalitions_ok(cev, moved):
            reason = "draining infeasible"
        elif not pareto_dominates(cev.payoff, ev.payoff, moved, tol):
            reason = "not a Pareto improvement"
        elif check_total and sum(cev.payoff.values()) < total_old - tol:
            reason = "total rate drops"
        else:
            reason = ""
        yield cand, cev, moved, reason


def _unstable(net, partition, ev, actors, ctx: _Context, tol: float) -> bool:
    """Some actor has a Pareto-improving deviation, whatever it does to the total."""
    return any(not reason
               for k in actors
               for *_, reason in _proposals(net, partition, ev, k, ctx, tol, check_total=False,
                                            scatter=(False, True)))


def form_coalitions(net, max_rounds: int = 10, tol: float = TOL,
                    max_pool: int = MAX_POOL, lookahead: int = LOOKAHEAD) -> FormationResult:
    """Deviate-and-release coalition formation on a ``Network``.

    Each round, SBSs in decreasing order of received co-tier interference
    propose coalitions of themselves plus SBSs taken from their own block and
    their detected interferers' blocks; the proposers leave their old blocks
    and form the new one. A proposal is acceptable when draining succeeds,
    no member of the new block loses and somebody gains, and the total rate
    does not drop. Among acceptable proposals the actor prefers its own
    payoff, then the total. Offers after which some touched SBS would again
    deviate profitably (with the abandoned blocks left as they are or broken
    up) are skipped in a first pass; the best offer is taken only when no
    actor has a stable one.

    Then every macro user with a stream below its SIR target offers to join
    the coalition of its strongest co-channel SBS and release streams; the
    move is kept when the user gains, the coalition members do not lose and
    the total rate does not drop. Rounds stop when nothing changes.

    Parameters
    ----------
    net : Network
        Value function and physical state of one trial.
    max_rounds : int
        Upper bound on negotiation rounds.
    tol : float
        Absolute rate tolerance of every comparison.
    max_pool : int
        SBSs an actor considers when assembling a proposal.
    lookahead : int
        Accepted offers screened for stability; 0 disables the screening.
    """
    from .config import Strategy

    partition = frozenset(frozenset([p]) for p in net.players)
    ev = net.evaluate(partition)
    result = FormationResult(partition, evaluate_partition(net, partition))
    result.total_values.append(sum(ev.payoff.values()))
    order = sorted(net.sbss, key=lambda k: (-net.received_interference(k), k))
    ctx = _Context(
        lists={k: net.interferer_list(k) for k in net.sbss},
        sbss=frozenset(net.sbss),
        # draining cannot host more SBSs than the transmit antennas can null for
        max_size=net.cfg.a_sbs // net.cfg.d_sbs,
        max_pool=max_pool,
    )

    for rnd in range(1, max_rounds + 1):
        changed = False
        # stable offers first; an unstable one only when nobody has a stable one
        for strict in ((True, False) if lookahead else (False,)):
            for k in order:
                accepted = []
                for cand, cev, moved, reason in _proposals(net, partition, ev, k, ctx, tol):
                    deltas = {str(p): cev.payoff[p] - ev.payoff[p] for p in sorted(moved)}
                    entry = TraceEntry(rnd, k, "deviate", sorted(moved), deltas, False, reason)
                    result.trace.append(entry)
                    if not reason:
                        accepted.append((cev.payoff[k], sum(cev.payoff.values()), cand, cev, entry))
                if not accepted:
                    continue
                accepted.sort(key=lambda a: (-round(a[0], 9), -a[1]))
                pick = None if strict else accepted[0]
                for a in accepted[:lookahead]:
                    touched = [p for blk in a[2] - partition for p in blk if p in ctx.sbss]
                    if not _unstable(net, a[2], a[3], touched, ctx, tol):
                        pick = a
                        break
                if pick is None:
                    continue
                _, _, partition, ev, entry = pick
                entry.committed = True
                changed = True
            if changed:
                break

        if net.strategy is Strategy.ID_IA:
            for n in net.mues:
                cur = next(b for b in partition if n in b)
                if len(cur) > 1:
                    continue
                sir = ev.mue_sir.get(n)
                d_n = net.mbs_tx[n].streams
                if sir is None or not (sir < net.cfg.delta / d_n).any():
                    continue
                c = net.mue_sub[n]
                co = net.chan_sbs.get(c, [])
                if not co:
                    continue
                k = max(co, key=lambda j: (net.bank.gain(j, n), -j))
                tb = next(b for b in partition if k in b)
                cand = _move(partition, n, tb)
                cev = net.evaluate(cand)
                deltas = {str(p): cev.payoff[p] - ev.payoff[p] for p in sorted(tb | {n})}
                if not cev.released.get(n):
                    reason = "no stream released"
                elif cev.payoff[n] <= ev.payoff[n] + tol:
                    reason = "no gain for the macro user"
                elif any(cev.payoff[p] < ev.payoff[p] - tol for p in tb):
                    reason = "coalition member loses"
                elif sum(cev.payoff.values()) < sum(ev.payoff.values()) - tol:
                    reason = "total rate drops"
                else:
                    reason = ""
                result.trace.append(TraceEntry(rnd, n, "release", sorted(tb | {n}), deltas,
                                               not reason, reason))
                if not reason:
                    partition, ev = cand, cev
                    changed = True

        result.total_values.append(sum(ev.payoff.values()))
        result.rounds = rnd
        if not changed:
            result.converged = True
            break

    result.partition = partition
    result.outcome = evaluate_partition(net, partition)
    return result
