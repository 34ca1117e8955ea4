"""Monte Carlo orchestration: one trial per seeded drop, then aggregation.

Each trial places the nodes, draws channels, water-fills the macro links,
lets the SBSs sense and pick subchannels, and then either keeps every player
alone (frequency reuse) or runs coalition formation (IA-only, ID+IA).
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import place_scenario
from .config import ScenarioConfig, Strategy

CDF_POINTS = 100


def select_subchannels(sbs, sensed_energy, budget: int) -> tuple[int, ...]:
    """The ``budget`` quietest subchannels, lowest index first on ties."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    e = np.asarray(sensed_energy, dtype=float)
    budget = min(budget, e.size)
    order = np.lexsort((np.arange(e.size), e))
    return tuple(sorted(int(c) for c in order[:budget]))


def strategy_frequency_reuse(net):
    """Non-cooperative baseline: everyone alone on the sensed subchannels.

    The frequency-reuse network carries one stream per subchannel over d_k
    subchannels; that is fixed when the network is built with this strategy.
    """
    from .network import singletons

    if net.strategy is not Strategy.FREQUENCY_REUSE:
        raise ValueError("network was not built for frequency reuse")
    return singletons(net.players)


@dataclass
class TrialResult:
    trial: int
    strategy: str
    sue_rates: dict[int, float]
    mue_rates: dict[int, float]
    blocks: list[tuple[int, ...]]
    sbs_block_sizes: list[int]
    share: list[float]
    released: int
    rounds: int
    converged: bool

    def row(self) -> dict:
        sue = list(self.sue_rates.values())
        mue = list(self.mue_rates.values())
        coalitions = [s for s in self.sbs_block_sizes if s >= 2]
        return {
            "trial": self.trial,
            "strategy": self.strategy,
            "mean_sue_rate": _mean(sue),
            "mean_mue_rate": _mean(mue),
            "sum_sue_rate": float(sum(sue)),
            "sum_mue_rate": float(sum(mue)),
            "avg_coalition_size": _mean(self.sbs_block_sizes),
            "coalition_count": len(coalitions),
            "interference_in_desired_subspace": _mean(self.share) * 100 if self.share else 0.0,
            "released_streams": self.released,
            "rounds": self.rounds,
            "converged": int(self.converged),
        }


@dataclass
class MetricsReport:
    avg_payoff_sue: float
    avg_payoff_mue: float | None
    avg_coalition_size: float
    coalition_count: float
    interference_in_desired_subspace: float
    se_cdf: list[tuple[float, float]]
    rows: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "trials": len(self.rows),
            "avg_payoff_sue": self.avg_payoff_sue,
            "avg_payoff_mue": "" if self.avg_payoff_mue is None else self.avg_payoff_mue,
            "avg_coalition_size": self.avg_coalition_size,
            "coalition_count": self.coalition_count,
            "interference_in_desired_subspace": self.interference_in_desired_subspace,
        }


def _mean(xs) -> float:
    xs = list(xs)
    return float(np.mean(xs)) if xs else 0.0


def trial_seed(cfg: ScenarioConfig, trial: int) -> tuple[np.random.Generator, int]:
    ss = np.random.SeedSequence([cfg.seed, trial])
    place_ss, chan_ss = ss.spawn(2)
    return np.random.default_rng(place_ss), int(chan_ss.generate_state(1)[0])


def build_network(cfg: ScenarioConfig, trial: int, strategy: Strategy | None = None):
    from .network import Network

    rng, chan_seed = trial_seed(cfg, trial)
    scenario = place_scenario(cfg, rng, seed=chan_seed)
    return Network(scenario, chan_seed, strategy or cfg.strategy)


def run_trial(cfg: ScenarioConfig, trial: int) -> TrialResult:
    """One seeded drop under ``cfg.strategy``; identical for identical (cfg, trial)."""
    from .game import form_coalitions

    cfg.check()
    net = build_network(cfg, trial)
    if net.strategy is Strategy.FREQUENCY_REUSE:
        partition = strategy_frequency_reuse(net)
        rounds, converged = 0, True
    else:
        res = form_coalitions(net, cfg.max_rounds)
        partition, rounds, converged = res.partition, res.rounds, res.converged
    ev = net.evaluate(partition)
    sbs = set(net.sbss)
    sizes = [len(b & sbs) for b in partition if b & sbs]
    share = [s for _, s in sorted(ev.share.items()) if s is not None]
    return TrialResult(
        trial=trial,
        strategy=net.strategy.value,
        sue_rates={k: ev.payoff[k] for k in net.sbss},
        mue_rates={n: ev.payoff[n] for n in net.mues},
        blocks=sorted(tuple(sorted(b)) for b in partition),
        sbs_block_sizes=sizes,
        share=share,
        released=sum(len(v) for v in ev.released.values()),
        rounds=rounds,
        converged=converged,
    )


class TrialError(RuntimeError):
    """A trial failed; ``trial`` identifies the seeded drop."""

    def __init__(self, trial: int, strategy: str, cause: str):
        super().__init__(f"trial {trial} ({strategy}) failed: {cause}")
        self.trial = trial
        self.strategy = strategy

    def __reduce__(self):
        return (TrialError, (self.trial, self.strategy, str(self).split(" failed: ", 1)[1]))


def _run_one(args):
    cfg, trial = args
    try:
        return run_trial(cfg, trial)
    except Exception as exc:  # noqa: BLE001 - re-raised with the trial id
        raise TrialError(trial, cfg.strategy.value, f"{type(exc).__name__}: {exc}") from exc


def run_trials(cfg: ScenarioConfig, trials: int | None = None, workers: int = 1
               ) -> list[TrialResult]:
    """Run trials 0..trials-1; results come back in trial order for any worker count."""
    n = cfg.trials if trials is None else trials
    jobs = [(cfg, t) for t in range(n)]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs, chunksize=max(1, n // (4 * workers))))


def empirical_cdf(samples, points: int = CDF_POINTS) -> list[tuple[float, float]]:
    if not len(samples):
        return []
    probs = np.linspace(0.0, 1.0, points)
    return [(float(x), float(p)) for x, p in zip(np.quantile(samples, probs), probs)]


def aggregate(results: list[TrialResult]) -> MetricsReport:
    if not results:
        raise ValueError("nothing to aggregate")
    rows = [r.row() for r in results]
    sue = [x for r in results for x in r.sue_rates.values()]
    have_mue = any(r.mue_rates for r in results)
    return MetricsReport(
        avg_payoff_sue=_mean(row["mean_sue_rate"] for row in rows),
        avg_payoff_mue=_mean(row["mean_mue_rate"] for row in rows) if have_mue else None,
        avg_coalition_size=_mean(row["avg_coalition_size"] for row in rows),
        coalition_count=_mean(row["coalition_count"] for row in rows),
        interference_in_desired_subspace=_mean(
            row["interference_in_desired_subspace"] for row in rows),
        se_cdf=empirical_cdf(sue),
        rows=rows,
    )


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(rows[0]))
    for row in rows:
        w.writerow([_fmt(v) for v in row.values()])
    return buf.getvalue()
