"""Physical state of one Monte Carlo trial and the partition value function.

A ``Network`` fixes everything that does not depend on the coalition
structure: node placement, channel draws, the macro subchannel plan and
water-filling, the SBS subchannel choice made by energy sensing, and each
SBS's non-cooperative precoder. ``Network.evaluate`` then turns a partition
of the players (MUEs and SBSs) into per-player rates.

Subchannels never interact, so evaluation runs per subchannel and caches
the result under the partition restricted to the players on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelBank, Scenario
from .config import ScenarioConfig, Strategy, db_to_linear
from .power import PowerAllocation, StreamCondition, modified_waterfill, waterfill
from .precoding import DrainingProblem, DrainingSolution, ia_feasible, solve_draining
from .rates import (Interferer, build_post_processor, desired_subspace_share, interference_cov,
                    rate_mue, rate_mue_cooperative, rate_sue, rate_sue_cooperative, received_cov)

Partition = frozenset  # frozenset[frozenset[int]]


@dataclass
class Transmission:
    """One transmitter's streams on one subchannel toward its own receiver."""

    tx: int
    rx: int
    sub: int
    h: np.ndarray
    v: np.ndarray
    alloc: PowerAllocation

    @property
    def streams(self) -> int:
        return self.v.shape[1]


@dataclass
class ChannelResult:
    payoff: dict[int, float] = field(default_factory=dict)
    released: dict[int, list[int]] = field(default_factory=dict)
    coalitions: list[tuple[tuple[int, ...], bool]] = field(default_factory=list)
    share_inputs: dict[tuple[int, int], tuple] = field(default_factory=dict)
    mue_sir: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class Evaluation:
    payoff: dict[int, float]
    released: dict[int, list[int]]
    coalitions: list[tuple[tuple[int, ...], bool]]
    share_inputs: dict[tuple[int, int], tuple]
    mue_sir: dict[int, np.ndarray]
    _share: dict | None = field(default=None, repr=False)

    @property
    def share(self) -> dict[tuple[int, int], float | None]:
        """Fraction of each small-cell user's interference inside its signal subspace."""
        if self._share is None:
            self._share = {key: desired_subspace_share(h, v, received_cov(ints, h.shape[0]))
                           for key, (h, v, ints) in self.share_inputs.items()}
        return self._share


def singletons(players) -> Partition:
    return frozenset(frozenset([p]) for p in players)


def block_of(partition: Partition) -> dict[int, frozenset]:
    return {p: b for b in partition for p in b}


class Network:
    def __init__(self, scenario: Scenario, seed: int, strategy: Strategy | None = None):
        self.scenario = scenario
        self.cfg: ScenarioConfig = scenario.cfg
        self.strategy = Strategy(strategy or self.cfg.strategy)
        self.bank = ChannelBank(scenario, seed)
        self.noise = self.cfg.noise_w
        self.mues = [n.id for n in scenario.mues]
        self.sbss = [n.id for n in scenario.sbss]
        self.sue = {k: scenario.sue_of(k).id for k in self.sbss}
        self.players = tuple(self.mues + self.sbss)
        self.kind = {n: "MUE" for n in self.mues} | {k: "SBS" for k in self.sbss}
        n_sub = self.cfg.n_subchannels

        self.mue_sub = {n: i % n_sub for i, n in enumerate(self.mues)}
        self.mbs_tx: dict[int, Transmission] = {}
        for n in self.mues:
            c = self.mue_sub[n]
            h = self.bank.h(0, n, c)
            _, s, vh = np.linalg.svd(h)
            d = self.cfg.d_mue
            v = vh.conj().T[:, :d]
            alloc = waterfill(s[:d] ** 2, self.noise, self.cfg.p_mbs_w)
            self.mbs_tx[n] = Transmission(0, n, c, h, v, alloc)

        self.sbs_tx: dict[int, list[Transmission]] = {}
        for k in self.sbss:
            self.sbs_tx[k] = self._sense_and_start(k)

        self.chan_sbs: dict[int, list[int]] = {}
        self.chan_mue: dict[int, list[int]] = {}
        for k, txs in self.sbs_tx.items():
            for t in txs:
                self.chan_sbs.setdefault(t.sub, []).append(k)
        for n, c in self.mue_sub.items():
            self.chan_mue.setdefault(c, []).append(n)
        self._chan_cache: dict[tuple, ChannelResult] = {}
        self._eval_cache: dict[Partition, Evaluation] = {}
        self._drain_cache: dict[tuple, DrainingSolution | None] = {}
        self._here: dict[int, frozenset] = {}

    # ------------------------------------------------------------------ setup

    def sensed_energy(self, k: int) -> np.ndarray:
        """Received power per subchannel at SBS k's user from everything already on air."""
        sue = self.sue[k]
        energy = np.zeros(self.cfg.n_subchannels)
        for n, t in self.mbs_tx.items():
            energy[t.sub] += _rx_power(self.bank.h(0, sue, t.sub), t)
        for j, txs in self.sbs_tx.items():
            for t in txs:
                energy[t.sub] += _rx_power(self.bank.h(j, sue, t.sub), t)
        return energy

    def _sense_and_start(self, k: int) -> list[Transmission]:
        from .sim import select_subchannels

        cfg = self.cfg
        d = cfg.d_sbs
        budget = d if self.strategy is Strategy.FREQUENCY_REUSE else 1
        chans = select_subchannels(k, self.sensed_energy(k), budget)
        sue = self.sue[k]
        out = []
        per_chan = 1 if self.strategy is Strategy.FREQUENCY_REUSE else d
        for c in chans:
            h = self.bank.h(k, sue, c)
            v = np.linalg.svd(h)[2].conj().T[:, :per_chan]
            alloc = PowerAllocation(np.full(per_chan, cfg.p_sbs_w / d), cfg.p_sbs_w)
            out.append(Transmission(k, sue, c, h, v, alloc))
        return out

    # ------------------------------------------------------------ discovery

    def _threshold(self) -> float:
        return self.noise * db_to_linear(self.cfg.detect_inr_db)

    def detected_mues(self, k: int, c: int) -> list[int]:
        thr = self._threshold()
        return [n for n in self.chan_mue.get(c, [])
                if self.cfg.p_sbs_w * self.bank.gain(k, n) >= thr]

    def interferer_list(self, k: int) -> list[int]:
        """Co-channel SBSs heard at k's user above the detection threshold, strongest first."""
        thr = self._threshold()
        sue = self.sue[k]
        level: dict[int, float] = {}
        for t in self.sbs_tx[k]:
            for j in self.chan_sbs.get(t.sub, []):
                if j == k:
                    continue
                p = self.cfg.p_sbs_w * self.bank.gain(j, sue)
                if p >= thr:
                    level[j] = max(level.get(j, 0.0), p)
        return sorted(level, key=lambda j: (-level[j], j))

    def received_interference(self, k: int) -> float:
        sue = self.sue[k]
        total = 0.0
        for t in self.sbs_tx[k]:
            for j in self.chan_sbs.get(t.sub, []):
                if j != k:
                    total += self.cfg.p_sbs_w * self.bank.gain(j, sue)
        return total

    def subchannels_of(self, player: int) -> list[int]:
        if self.kind[player] == "MUE":
            return [self.mue_sub[player]]
        return [t.sub for t in self.sbs_tx[player]]

    # ----------------------------------------------------------- evaluation

    def evaluate(self, partition: Partition) -> Evaluation:
        hit = self._eval_cache.get(partition)
        if hit is not None:
            return hit
        blocks = block_of(partition)
        ev = Evaluation({p: 0.0 for p in self.players}, {}, [], {}, {})
        chans = sorted(set(self.chan_sbs) | set(self.chan_mue))
        for c in chans:
            res = self._evaluate_channel(c, blocks)
            for p, r in res.payoff.items():
                ev.payoff[p] += r
            ev.released.update(res.released)
            ev.coalitions.extend(res.coalitions)
            ev.share_inputs.update(res.share_inputs)
            ev.mue_sir.update(res.mue_sir)
        self._eval_cache[partition] = ev
        return ev

    def __call__(self, partition: Partition) -> dict[int, float]:
        return self.evaluate(partition).payoff

    def _channel_key(self, c: int, blocks: dict[int, frozenset]) -> tuple:
        here = self._here.get(c)
        if here is None:
            here = self._here[c] = frozenset(self.chan_sbs.get(c, [])) | frozenset(
                self.chan_mue.get(c, []))
        return (c, frozenset(blocks[p] & here for p in here))

    def _evaluate_channel(self, c: int, blocks: dict[int, frozenset]) -> ChannelResult:
        key = self._channel_key(c, blocks)
        hit = self._chan_cache.get(key)
        if hit is not None:
            return hit
        res = ChannelResult()
        cfg = self.cfg
        sbs_here = sorted(self.chan_sbs.get(c, []))
        mue_here = sorted(self.chan_mue.get(c, []))
        tx_of = {k: next(t for t in self.sbs_tx[k] if t.sub == c) for k in sbs_here}

        # 1) coalitions drain on this subchannel
        active: dict[int, Transmission] = dict(tx_of)
        coalition_of: dict[int, DrainingSolution] = {}
        seen = set()
        for k in sbs_here:
            group = tuple(sorted(j for j in blocks[k] if j in tx_of))
            if len(group) < 2 or group in seen:
                continue
            seen.add(group)
            sol = self._drain(c, group, tx_of)
            res.coalitions.append((group, sol is not None))
            if sol is None:
                continue
            for j in group:
                t = tx_of[j]
                active[j] = Transmission(j, t.rx, c, t.h, sol.precoders[j], t.alloc)
                coalition_of[j] = sol

        # 2) macro users, releasing streams when cooperative
        mbs_active: dict[int, Transmission] = {}
        for n in mue_here:
            t = self.mbs_tx[n]
            interferers = [Interferer(self.bank.h(k, n, c), a.v, a.alloc) for k, a in active.items()]
            coop = (self.strategy is Strategy.ID_IA
                    and any(self.kind[p] == "SBS" and p in tx_of for p in blocks[n]))
            rate, final_tx, released, sir = self._mue_rate(n, t, interferers, coop)
            res.payoff[n] = rate
            res.released[n] = released
            res.mue_sir[n] = sir
            mbs_active[n] = final_tx

        # 3) small-cell users
        for k in sbs_here:
            a = active[k]
            sue = self.sue[k]
            sol = coalition_of.get(k)
            mbs_int = [Interferer(self.bank.h(0, sue, c), m.v, m.alloc) for m in mbs_active.values()]
            all_sbs = [Interferer(self.bank.h(j, sue, c), o.v, o.alloc)
                       for j, o in active.items() if j != k]
            if sol is not None:
                outside = [Interferer(self.bank.h(j, sue, c), o.v, o.alloc)
                           for j, o in active.items() if j != k and j not in sol.precoders]
                rep = rate_sue_cooperative(k, sol, outside, mbs_int, a.alloc, self.noise, sue)
            else:
                r_sbs = received_cov(all_sbs, cfg.b_ue)
                r_mbs = received_cov(mbs_int, cfg.b_ue)
                pp = build_post_processor(a.h, a.v, r_sbs + r_mbs)
                rep = rate_sue(a.h, a.v, pp, pp.g, a.alloc, pp.q @ r_sbs @ pp.q.conj().T,
                               pp.q @ r_mbs @ pp.q.conj().T, self.noise, sue)
            res.payoff[k] = res.payoff.get(k, 0.0) + rep.rate
            res.share_inputs[(k, c)] = (a.h, a.v, all_sbs + mbs_int)
        self._chan_cache[key] = res
        return res

    def _drain(self, c: int, group: tuple[int, ...], tx_of) -> DrainingSolution | None:
        # a coalition's design only depends on its own members and the sensed environment
        key = (c, group)
        if key not in self._drain_cache:
            self._drain_cache[key] = self._design(c, group, tx_of)
        return self._drain_cache[key]

    def _design(self, c: int, group: tuple[int, ...], tx_of) -> DrainingSolution | None:
        cfg = self.cfg
        mues = sorted({n for k in group for n in self.detected_mues(k, c)})
        if self.strategy is Strategy.IA_ONLY:
            for k in group:
                peers = [tx_of[j].streams for j in group if j != k]
                mue_streams = [self.mbs_tx[n].streams for n in self.detected_mues(k, c)]
                if not ia_feasible(cfg.a_sbs, tx_of[k].streams, mue_streams, peers):
                    return None
        served = {k: tx_of[k].h for k in group}
        cross = {(j, k): self.bank.h(j, self.sue[k], c) for j in group for k in group if j != k}
        # the SIR target compares received powers, so fold stream powers into the channels
        # (SBS streams share power equally, so one scalar per SBS suffices)
        mue_links = {(k, n): self.bank.h(k, n, c) * float(_amplitude(tx_of[k]).mean())
                     for k in group for n in mues}
        mue_signal = {n: self.mbs_tx[n].h @ self.mbs_tx[n].v * _amplitude(self.mbs_tx[n])
                      for n in mues}
        strength = {k: sum(cfg.p_sbs_w * self.bank.gain(j, self.sue[k]) for j in group if j != k)
                    for k in group}
        # outside interference as sensed before anybody cooperates
        outside = {}
        for k in group:
            sue = self.sue[k]
            ints = [Interferer(self.bank.h(j, sue, c), t.v, t.alloc)
                    for j, t in tx_of.items() if j not in group]
            ints += [Interferer(self.bank.h(0, sue, c), m.v, m.alloc)
                     for m in self.mbs_tx.values() if m.sub == c]
            outside[k] = received_cov(ints, cfg.b_ue)
        p = DrainingProblem(group, served, cross, {k: tx_of[k].streams for k in group},
                            cfg.delta, mue_links, mue_signal, strength, outside, self.noise)
        sol = solve_draining(p, max_iters=cfg.draining_iters)
        return sol if sol is not None and sol.feasible else None

    def _mue_rate(self, n: int, t: Transmission, interferers, coop: bool):
        b = self.cfg.b_ue
        r = received_cov(interferers, b)
        pp = build_post_processor(t.h, t.v, r)
        icov = pp.q @ r @ pp.q.conj().T
        base = rate_mue(t.h, t.v, pp, pp.g, t.alloc, icov, self.noise, n)
        d = t.streams
        gram = t.v.conj().T @ t.h.conj().T @ pp.g @ t.h @ t.v
        inv_diag = np.real(np.diag(np.linalg.pinv(gram)))
        i_d = np.real(np.diag(icov))
        with np.errstate(divide="ignore"):
            sir = np.where(i_d > 0, (t.alloc.powers / d) / np.where(i_d > 0, i_d, 1.0), np.inf)
        if not coop or d == 1:
            return base.rate, t, [], sir
        gains = 1.0 / np.maximum(inv_diag, 1e-300)
        conds = [StreamCondition(s, float(gains[s]), float(self.noise + i_d[s] * gains[s]),
                                 float(sir[s])) for s in range(d)]
        alloc, released = modified_waterfill(conds, t.alloc.budget, self.cfg.delta, d)
        if not released:
            return base.rate, t, [], sir
        kept = list(alloc.streams)
        v2 = t.v[:, kept]
        pp2 = build_post_processor(t.h, v2, r)
        alloc2 = PowerAllocation(alloc.powers, alloc.budget)
        rep = rate_mue_cooperative(t.h, v2, pp2, pp2.g, alloc2, pp2.q @ r @ pp2.q.conj().T,
                                   self.noise, n)
        if rep.rate < base.rate:
            return base.rate, t, [], sir
        return rep.rate, Transmission(0, n, t.sub, t.h, v2, alloc2), released, sir


def _amplitude(t: Transmission) -> np.ndarray:
    """Per-stream amplitude sqrt(P_s / d), the weighting used for every received stream."""
    return np.sqrt(t.alloc.powers / t.streams)


def _rx_power(h: np.ndarray, t: Transmission) -> float:
    hv = h @ t.v
    return float(np.sum(np.abs(hv) ** 2 * t.alloc.powers[None, :]))
