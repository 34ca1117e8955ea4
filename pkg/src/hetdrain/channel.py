"""Scenario geometry and per-subchannel MIMO channel generation.

Propagation: outdoor path loss 15.3 + 37.6 log10(d), lognormal shadowing,
a 12 dB wall term on indoor/outdoor links and block-flat Rayleigh fading.
Channel matrices are oriented receiver x transmitter (B x A).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, db_to_linear

MAX_PLACEMENT_ATTEMPTS = 10_000


class NodeKind(str, enum.Enum):
    MBS = "MBS"
    MUE = "MUE"
    SBS = "SBS"
    SUE = "SUE"


class PlacementError(ConfigError):
    """A link violates a forbidden-drop radius, or placement cannot succeed."""


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    position: tuple[float, float]
    antennas: int
    indoor: bool
    serving: int | None = None  # id of the serving transmitter for receivers

    @property
    def is_transmitter(self) -> bool:
        return self.kind in (NodeKind.MBS, NodeKind.SBS)


@dataclass(frozen=True)
class LinkChannel:
    tx: int
    rx: int
    subchannel: int
    h: np.ndarray


def distance(a: Node, b: Node) -> float:
    return math.hypot(a.position[0] - b.position[0], a.position[1] - b.position[1])


def forbidden_radius(tx: Node, rx: Node, cfg: ScenarioConfig | None = None) -> float:
    cfg = cfg or ScenarioConfig()
    if NodeKind.MBS in (tx.kind, rx.kind):
        return cfg.macro_exclusion_m
    return cfg.sbs_exclusion_m


def path_loss_db(d: float, min_distance: float = 0.0) -> float:
    if d < min_distance:
        raise PlacementError(f"distance {d:.3g} m is inside the forbidden radius {min_distance} m")
    if d <= 0:
        raise PlacementError("co-located nodes")
    return 15.3 + 37.6 * math.log10(d)


def crosses_wall(tx: Node, rx: Node) -> bool:
    return tx.indoor != rx.indoor


def total_loss_db(tx: Node, rx: Node, shadow_draw: float = 0.0,
                  cfg: ScenarioConfig | None = None) -> float:
    cfg = cfg or ScenarioConfig()
    loss = path_loss_db(distance(tx, rx), forbidden_radius(tx, rx, cfg)) + shadow_draw
    if crosses_wall(tx, rx):
        loss += cfg.wall_loss_db
    return loss


def rayleigh(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. unit-variance circularly-symmetric complex Gaussian entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def draw_channel(tx: Node, rx: Node, subchannel: int, rng: np.random.Generator,
                 loss_db: float | None = None, shadow_draw: float = 0.0,
                 cfg: ScenarioConfig | None = None) -> LinkChannel:
    if loss_db is None:
        loss_db = total_loss_db(tx, rx, shadow_draw, cfg)
    w = rayleigh(rng, (rx.antennas, tx.antennas))
    return LinkChannel(tx.id, rx.id, subchannel, math.sqrt(db_to_linear(-loss_db)) * w)


def link_rng(seed: int, tx: int, rx: int, subchannel: int) -> np.random.Generator:
    """Generator owned by a single (seed, link, subchannel) triple."""
    return np.random.default_rng(np.random.SeedSequence([seed, tx, rx, subchannel]))


# ---------------------------------------------------------------------------
# scenario

@dataclass
class Scenario:
    cfg: ScenarioConfig
    seed: int
    nodes: list[Node] = field(default_factory=list)

    def by_kind(self, kind: NodeKind) -> list[Node]:
        return [n for n in self.nodes if n.kind is kind]

    @property
    def mbs(self) -> Node:
        return self.nodes[0]

    @property
    def mues(self) -> list[Node]:
        return self.by_kind(NodeKind.MUE)

    @property
    def sbss(self) -> list[Node]:
        return self.by_kind(NodeKind.SBS)

    @property
    def sues(self) -> list[Node]:
        return self.by_kind(NodeKind.SUE)

    def sue_of(self, sbs_id: int) -> Node:
        for n in self.nodes:
            if n.kind is NodeKind.SUE and n.serving == sbs_id:
                return n
        raise KeyError(sbs_id)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.cfg.to_dict(),
            "nodes": [
                {"id": n.id, "kind": n.kind.value, "position": list(n.position),
                 "antennas": n.antennas, "indoor": n.indoor, "serving": n.serving}
                for n in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        nodes = [Node(d["id"], NodeKind(d["kind"]), tuple(d["position"]), d["antennas"],
                      d["indoor"], d.get("serving")) for d in data["nodes"]]
        return cls(ScenarioConfig.from_dict(data["config"]), data["seed"], nodes)


def dump_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2, sort_keys=True))


def load_scenario(path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text()))


def _uniform_disc(rng: np.random.Generator, center, radius: float) -> tuple[float, float]:
    r = radius * math.sqrt(rng.random())
    phi = 2 * math.pi * rng.random()
    return (center[0] + r * math.cos(phi), center[1] + r * math.sin(phi))


def _place(rng, center, radius, ok) -> tuple[float, float]:
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        p = _uniform_disc(rng, center, radius)
        if ok(p):
            return p
    raise PlacementError(f"no legal position found after {MAX_PLACEMENT_ATTEMPTS} draws")


def place_scenario(cfg: ScenarioConfig, rng: np.random.Generator, seed: int = 0) -> Scenario:
    """Uniform drop of MUEs and SBSs in the macrocell, one SUE per SBS.

    Positions violating a forbidden-drop radius are re-drawn.
    """
    R = cfg.cell_radius_m
    origin = (0.0, 0.0)

    def far_from_mbs(p):
        return math.hypot(*p) >= cfg.macro_exclusion_m

    def inside(p):
        return math.hypot(*p) <= R

    nodes = [Node(0, NodeKind.MBS, origin, cfg.a_mbs, indoor=False)]
    mue_pos = [_place(rng, origin, R, far_from_mbs) for _ in range(cfg.n_mue)]

    def clear_of(points, p, radius):
        return all(math.dist(p, q) >= radius for q in points)

    sbs_pos: list[tuple[float, float]] = []
    for _ in range(cfg.n_sbs):
        sbs_pos.append(_place(rng, origin, R, lambda p: far_from_mbs(p)
                              and clear_of(mue_pos, p, cfg.sbs_exclusion_m)))
    sue_pos = []
    lo, hi = cfg.small_cell_radius_m
    for center in sbs_pos:
        radius = lo + (hi - lo) * rng.random()
        sue_pos.append(_place(rng, center, radius, lambda p: inside(p) and far_from_mbs(p)
                              and clear_of(sbs_pos, p, cfg.sbs_exclusion_m)))

    next_id = 1
    for p in mue_pos:
        nodes.append(Node(next_id, NodeKind.MUE, p, cfg.b_ue, indoor=False, serving=0))
        next_id += 1
    sbs_ids = []
    for p in sbs_pos:
        nodes.append(Node(next_id, NodeKind.SBS, p, cfg.a_sbs, indoor=True))
        sbs_ids.append(next_id)
        next_id += 1
    for sid, p in zip(sbs_ids, sue_pos):
        nodes.append(Node(next_id, NodeKind.SUE, p, cfg.b_ue, indoor=True, serving=sid))
        next_id += 1
    return Scenario(cfg, seed, nodes)


# ---------------------------------------------------------------------------
# per-trial channel store

class ChannelBank:
    """Lazily drawn channels of one Monte Carlo trial.

    Shadowing is one N(0, sigma) draw per (tx, rx) pair, shared by all
    subchannels. Fading for transmitter ``tx`` on ``subchannel`` comes from a
    generator keyed by (seed, tx, subchannel), so a channel never depends on
    the order in which channels are requested.
    """

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.cfg = scenario.cfg
        self.seed = seed
        n = len(scenario.nodes)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0FFEE]))
        self.shadow_db = rng.normal(0.0, self.cfg.shadowing_std_db, size=(n, n))
        self._gain: dict[tuple[int, int], float] = {}
        self._fading: dict[tuple[int, int], np.ndarray] = {}
        self._cache: dict[tuple[int, int, int], np.ndarray] = {}

    def node(self, nid: int) -> Node:
        return self.scenario.nodes[nid]

    def is_desired(self, tx: int, rx: int) -> bool:
        return self.node(rx).serving == tx

    def loss_db(self, tx: int, rx: int) -> float:
        t, r = self.node(tx), self.node(rx)
        if self.cfg.power_control and self.is_desired(tx, rx):
            # compensation removes the deterministic terms of the desired link only
            return float(self.shadow_db[tx, rx])
        return total_loss_db(t, r, float(self.shadow_db[tx, rx]), self.cfg)

    def gain(self, tx: int, rx: int) -> float:
        key = (tx, rx)
        g = self._gain.get(key)
        if g is None:
            g = self._gain[key] = float(db_to_linear(-self.loss_db(tx, rx)))
        return g

    def _block(self, tx: int, subchannel: int) -> np.ndarray:
        key = (tx, subchannel)
        w = self._fading.get(key)
        if w is None:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, tx, subchannel]))
            n = len(self.scenario.nodes)
            w = self._fading[key] = rayleigh(rng, (n, self.cfg.b_ue, self.node(tx).antennas))
        return w

    def h(self, tx: int, rx: int, subchannel: int) -> np.ndarray:
        key = (tx, rx, subchannel)
        m = self._cache.get(key)
        if m is None:
            w = self._block(tx, subchannel)[rx][: self.node(rx).antennas]
            m = self._cache[key] = math.sqrt(self.gain(tx, rx)) * w
        return m

    def link(self, tx: int, rx: int, subchannel: int) -> LinkChannel:
        return LinkChannel(tx, rx, subchannel, self.h(tx, rx, subchannel))
