"""Interference-draining precoder design for a coalition of small cells.

The solver is an alternating leakage minimisation. Transmit precoders are
re-chosen one SBS at a time from the near-null space of the co-tier leakage
they cause at the other members' receive subspaces, preferring directions
that also spare detected macro users, then the desired link. Receive
subspaces are then reset to the least-interfered directions at each SUE.
Co-tier leakage is the descent objective, so it never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import orthogonality_residual

EPS_LEAK = 1e-6
NULL_TOL = 1e-12
TINY = 1e-12


class DimensionError(ValueError):
    pass


@dataclass
class DrainingProblem:
    """One coalition on one subchannel.

    ``served[k]``      channel SBS k -> its SUE (B x A_k)
    ``cross[(j, k)]``  channel SBS j -> SUE of SBS k
    ``mue_links[(k, n)]`` channel SBS k -> detected MUE n
    ``mue_signal[n]``  MBS signal at MUE n, H_0n V_n over its retained streams
    """

    coalition: tuple[int, ...]
    served: dict[int, np.ndarray]
    cross: dict[tuple[int, int], np.ndarray]
    streams: dict[int, int]
    delta: float
    mue_links: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    mue_signal: dict[int, np.ndarray] = field(default_factory=dict)
    strength: dict[int, float] = field(default_factory=dict)  # sweep-order key
    # interference from outside the coalition at each member's user (watts, B x B)
    outside_cov: dict[int, np.ndarray] = field(default_factory=dict)
    noise: float = 0.0

    def validate(self) -> None:
        for k in self.coalition:
            if k not in self.served:
                raise DimensionError(f"no desired channel for SBS {k}")
            h = self.served[k]
            if self.streams[k] > min(h.shape):
                raise DimensionError(f"SBS {k}: {self.streams[k]} streams exceed {h.shape}")
        for j in self.coalition:
            for k in self.coalition:
                if j == k:
                    continue
                h = self.cross.get((j, k))
                if h is None:
                    raise DimensionError(f"missing cross channel {j}->{k}")
                if h.shape != (self.served[k].shape[0], self.served[j].shape[1]):
                    raise DimensionError(f"cross channel {j}->{k} has shape {h.shape}")
        for (k, n), h in self.mue_links.items():
            if n not in self.mue_signal:
                raise DimensionError(f"MUE {n} has no signal matrix")
            if h.shape[1] != self.served[k].shape[1] or h.shape[0] != self.mue_signal[n].shape[0]:
                raise DimensionError(f"MUE link {k}->{n} has shape {h.shape}")

    def mues_of(self, k: int) -> list[int]:
        return sorted(n for (kk, n) in self.mue_links if kk == k)


@dataclass
class DrainingSolution:
    problem: DrainingProblem
    precoders: dict[int, np.ndarray]
    receive_bases: dict[int, np.ndarray]  # B x d_k orthonormal receive subspace per SUE
    leakage: dict[tuple[int, int], float]
    mue_sir: dict[tuple[int, int], float]
    feasible: bool
    history: list[float] = field(default_factory=list)
    iterations: int = 0
    # every receive direction left clean by the other members (contains receive_bases)
    receive_spaces: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def post_processors(self) -> dict[int, np.ndarray]:
        """Receive filters Q_i (d x B) as the conjugate transpose of the receive bases."""
        return {k: u.conj().T for k, u in self.receive_bases.items()}


def ia_feasible(a_k: int, own_streams: int, mue_streams, peer_streams) -> bool:
    """Antenna-count condition for nulling toward macro users and coalition peers."""
    return a_k >= sum(mue_streams) + sum(peer_streams) + own_streams


def _unit(h: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(h)
    return h / n if n > 0 else h


def _top_right(h: np.ndarray, d: int) -> np.ndarray:
    return np.linalg.svd(h)[2].conj().T[:, :d]


def _top_left(m: np.ndarray, d: int) -> np.ndarray:
    return np.linalg.svd(m)[0][:, :d]


def _full_null(p: DrainingProblem, k: int, norm: dict) -> np.ndarray | None:
    """Transmit directions of k silent at every peer's antennas, if there are enough."""
    a = p.served[k].shape[1]
    cov = np.zeros((a, a), dtype=complex)
    for j in p.coalition:
        if j != k:
            cov += norm[(k, j)].conj().T @ norm[(k, j)]
    null, _ = _near_null(cov, NULL_TOL)
    return null if null.shape[1] >= p.streams[k] else None


def _near_null(cov: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    w, u = np.linalg.eigh(0.5 * (cov + cov.conj().T))
    scale = max(1.0, float(np.abs(w).max()) if w.size else 1.0)
    return u[:, w <= tol * scale], (w, u)


def _protect_projectors(p: DrainingProblem) -> dict[int, np.ndarray]:
    """Projector onto each MUE's received signal subspace."""
    out = {}
    for n, sig in p.mue_signal.items():
        u, s, _ = np.linalg.svd(sig, full_matrices=False)
        r = int(np.count_nonzero(s > 1e-10 * s[0])) if s.size and s[0] > 0 else 0
        out[n] = u[:, :r] @ u[:, :r].conj().T
    return out


def mue_power_ratio(p: DrainingProblem, k: int, n: int, v: np.ndarray,
                    proj: np.ndarray | None = None) -> float:
    """||H_0n V_n||^2 / ||P_n H_kn V_k||^2 with unit-power streams (inf if fully nulled)."""
    if proj is None:
        proj = _protect_projectors(p)[n]
    num = np.linalg.norm(p.mue_signal[n]) ** 2
    den = np.linalg.norm(proj @ p.mue_links[(k, n)] @ v) ** 2
    if den <= TINY ** 2 * max(num, 1e-300):
        return float("inf")
    return float(num / den)


def pair_residual(u_k: np.ndarray, h_jk: np.ndarray, v_j: np.ndarray) -> float:
    """How far the interference j -> k is from orthogonal to k's receive subspace."""
    hv = _unit(h_jk) @ v_j
    n = np.linalg.norm(hv)
    if n <= TINY:
        return 0.0
    if hv.shape[1] == 1 and u_k.shape[1] and np.allclose(u_k.conj().T @ u_k,
                                                          np.eye(u_k.shape[1]), atol=1e-10):
        # one stream against an orthonormal basis: no orthonormalisation needed
        return float(np.linalg.norm(u_k.conj().T @ hv) / n)
    return orthogonality_residual(u_k, hv)


def co_tier_leakage(p: DrainingProblem, v: dict, u: dict, norm: dict) -> float:
    total = 0.0
    for j in p.coalition:
        for k in p.coalition:
            if j != k:
                total += float(np.linalg.norm(u[k].conj().T @ norm[(j, k)] @ v[j]) ** 2)
    return total


def _mue_costs(p: DrainingProblem) -> dict[int, np.ndarray]:
    """M_k with tr(V^H M_k V) <= 1 sufficient for every detected MUE's SIR target."""
    protect = _protect_projectors(p)
    out = {}
    for k in p.coalition:
        a = p.served[k].shape[1]
        c = np.zeros((a, a), dtype=complex)
        for n in p.mues_of(k):
            m = protect[n] @ p.mue_links[(k, n)]
            scale = np.linalg.norm(p.mue_signal[n]) ** 2
            c += p.delta * (m.conj().T @ m) / scale
        out[k] = c
    return out


def _receiver_first(p: DrainingProblem, norm: dict, mue_cov: dict) -> DrainingSolution | None:
    """One-shot design around receivers fixed against the outside interference.

    Each user keeps the receive directions a lone receiver would use (zero
    forcing after removing the dominant outside interference); every member
    then transmits in the null space of the others' receive directions. Needs
    A_k >= sum of the peers' streams + d_k; returns None otherwise.
    """
    from .rates import build_post_processor

    members = list(p.coalition)
    u = {}
    for k in members:
        h = p.served[k]
        v0 = _top_right(h, p.streams[k])
        pp = build_post_processor(h, v0, p.outside_cov.get(k))
        u[k] = np.linalg.svd(pp.q.conj().T, full_matrices=False)[0][:, : p.streams[k]]
    v = {}
    for k in members:
        a = p.served[k].shape[1]
        cov = np.zeros((a, a), dtype=complex)
        for j in members:
            if j != k:
                m = u[j].conj().T @ norm[(k, j)]
                cov += m.conj().T @ m
        null, _ = _near_null(cov, NULL_TOL)
        if null.shape[1] < p.streams[k]:
            return None
        v[k] = _best_within(null, u[k].conj().T @ p.served[k], mue_cov[k], p.streams[k])
    history = [co_tier_leakage(p, {k: _top_right(p.served[k], p.streams[k]) for k in members},
                               u, norm), co_tier_leakage(p, v, u, norm)]
    spaces = {k: _receive_space(p, k, v, norm, u[k]) for k in members}
    sol = DrainingSolution(p, v, u, {}, {}, False, history, 1, spaces)
    co_ok, cross_ok = check_draining(sol, p)
    sol.feasible = co_ok and cross_ok
    return sol


DESIGNS = ("auto", "receiver_first", "alternating")


def solve_draining(p: DrainingProblem, max_iters: int = 500, tol: float = 1e-8,
                   exact: float = 1e-20, design: str = "auto") -> DrainingSolution | None:
    """Design the coalition's precoders and receive subspaces, then run the draining checks.

    ``"alternating"`` is the leakage minimisation; it stops after
    ``max_iters`` sweeps, when a sweep lowers the co-tier leakage by less than
    ``tol`` relative, or once leakage falls below ``exact``.
    ``"receiver_first"`` needs ``p.outside_cov`` and enough antennas and
    returns None when either is missing. ``"auto"`` tries receiver-first and
    falls back to alternating.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if design not in DESIGNS:
        raise ValueError(f"unknown design {design!r}")
    p.validate()
    members = list(p.coalition)
    order = sorted(members, key=lambda k: (-p.strength.get(k, 0.0), k))
    norm = {key: _unit(h) for key, h in p.cross.items()}
    mue_cov = _mue_costs(p)

    if design != "alternating" and p.outside_cov and len(members) > 1:
        sol = _receiver_first(p, norm, mue_cov)
        if sol is not None or design == "receiver_first":
            return sol
    elif design == "receiver_first":
        return None
    full = {k: _full_null(p, k, norm) for k in members}
    v = {k: _top_right(p.served[k], p.streams[k]) for k in members}
    u = {k: _update_receive(p, k, v, norm) for k in members}
    history = [co_tier_leakage(p, v, u, norm)]
    it = 0
    if len(members) > 1 or any(np.any(c) for c in mue_cov.values()):
        for it in range(1, max_iters + 1):
            for k in order:
                v[k] = _update_transmit(p, k, u, norm, mue_cov[k], full[k])
            for k in order:
                u[k] = _update_receive(p, k, v, norm)
            history.append(co_tier_leakage(p, v, u, norm))
            prev, cur = history[-2], history[-1]
            if cur <= exact or prev - cur < tol * prev:
                break

    spaces = {k: _receive_space(p, k, v, norm, u[k]) for k in members}
    sol = DrainingSolution(p, v, u, {}, {}, False, history, it, spaces)
    co_ok, cross_ok = check_draining(sol, p)
    sol.feasible = co_ok and cross_ok
    return sol


def _update_transmit(p: DrainingProblem, k: int, u: dict, norm: dict,
                     mue_cov: np.ndarray, full_null: np.ndarray | None = None) -> np.ndarray:
    d = p.streams[k]
    if full_null is not None:
        # enough antennas to be silent at the peers whatever their receivers do
        return _best_within(full_null, p.served[k], mue_cov, d)
    a = p.served[k].shape[1]
    cov = np.zeros((a, a), dtype=complex)
    for j in p.coalition:
        if j != k:
            m = u[j].conj().T @ norm[(k, j)]
            cov += m.conj().T @ m
    null, (w, vecs) = _near_null(cov, NULL_TOL)
    if null.shape[1] < d:
        return vecs[:, :d]
    return _best_within(null, p.served[k], mue_cov, d)


def _top_eig(m: np.ndarray, d: int) -> np.ndarray:
    w, u = np.linalg.eigh(0.5 * (m + m.conj().T))
    return u[:, ::-1][:, :d]


def _best_within(basis: np.ndarray, h: np.ndarray, mue_cov: np.ndarray, d: int) -> np.ndarray:
    """Strongest desired directions in span(basis) keeping tr(V^H M V) <= 1.

    ``mue_cov`` is scaled so that tr(V^H M V) <= 1 guarantees every detected
    MUE its SIR target. The trade-off maximises tr(V^H (D - lam M) V) and
    bisects on lam >= 0; if no lam meets the budget the least-leaking
    directions are returned.
    """
    if basis.shape[1] == d:
        return basis
    hd = h @ basis
    dm = hd.conj().T @ hd
    if not np.any(mue_cov):
        return basis @ _top_eig(dm, d)
    mm = basis.conj().T @ mue_cov @ basis

    def pick(lam):
        w = _top_eig(dm - lam * mm, d)
        return w, float(np.trace(w.conj().T @ mm @ w).real)

    w, cost = pick(0.0)
    if cost <= 1.0:
        return basis @ w
    scale = float(np.linalg.norm(dm)) / max(float(np.linalg.norm(mm)), 1e-300)
    hi = scale
    w_hi, c_hi = pick(hi)
    for _ in range(60):
        if c_hi <= 1.0:
            break
        hi *= 10.0
        w_hi, c_hi = pick(hi)
    if c_hi > 1.0:
        # budget unreachable: leak as little as possible, desired gain breaks ties
        sub, (w2, vecs2) = _near_null(mm, NULL_TOL)
        if sub.shape[1] >= d:
            return basis @ sub @ _top_eig(sub.conj().T @ dm @ sub, d)
        return basis @ vecs2[:, :d]
    lo = 0.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        w_mid, c_mid = pick(mid)
        if c_mid <= 1.0:
            hi, w_hi = mid, w_mid
        else:
            lo = mid
        if hi - lo <= 1e-6 * hi:
            break
    return basis @ w_hi


def _update_receive(p: DrainingProblem, k: int, v: dict, norm: dict) -> np.ndarray:
    d = p.streams[k]
    b = p.served[k].shape[0]
    cov = np.zeros((b, b), dtype=complex)
    for j in p.coalition:
        if j != k:
            m = norm[(j, k)] @ v[j]
            cov += m @ m.conj().T
    null, (w, vecs) = _near_null(cov, NULL_TOL)
    if null.shape[1] < d:
        return vecs[:, :d]
    if null.shape[1] == d:
        return null
    return null @ _top_left(null.conj().T @ p.served[k] @ v[k], d)


def _receive_space(p: DrainingProblem, k: int, v: dict, norm: dict, u_k: np.ndarray
                   ) -> np.ndarray:
    """All receive directions at k's user where the peers' interference is drained."""
    b = p.served[k].shape[0]
    cov = np.zeros((b, b), dtype=complex)
    for j in p.coalition:
        if j != k:
            m = norm[(j, k)] @ v[j]
            cov += m @ m.conj().T
    w, vecs = np.linalg.eigh(0.5 * (cov + cov.conj().T))
    space = vecs[:, w <= EPS_LEAK ** 2]
    return space if space.shape[1] > u_k.shape[1] else u_k


def check_draining(sol: DrainingSolution, p: DrainingProblem,
                   eps_leak: float = EPS_LEAK) -> tuple[bool, bool]:
    """(co-tier orthogonality holds, every detected MUE keeps SIR >= delta)."""
    leakage = {}
    for j in p.coalition:
        for k in p.coalition:
            if j != k:
                leakage[(j, k)] = pair_residual(sol.receive_bases[k], p.cross[(j, k)],
                                                sol.precoders[j])
    protect = _protect_projectors(p)
    mue_sir = {(k, n): mue_power_ratio(p, k, n, sol.precoders[k], protect[n])
               for (k, n) in p.mue_links}
    sol.leakage, sol.mue_sir = leakage, mue_sir
    co_ok = all(r <= eps_leak for r in leakage.values())
    cross_ok = all(s >= p.delta for s in mue_sir.values())
    return co_ok, cross_ok
