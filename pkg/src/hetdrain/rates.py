"""Achievable-rate engine for macro and small-cell receivers.

Every receiver uses a zero-forcing post-processor Q = (G H V)^+, where G
projects out the dominant interference directions. With that choice the
per-stream SINR of the parallel-channel decomposition is

    (P_d / (sigma^2 d)) / ( [(V^H H^H G H V)^-1]_dd + [Q R Q^H]_dd / sigma^2 )

with R the received interference covariance in watts. Each interfering
stream s of a transmitter with d_t streams contributes P_s / d_t, the same
"power over stream count" weighting applied to the desired streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_matrix, dominant_direction, hermitian_eig, null_projector, Subspace
from .power import PowerAllocation

RANK_GUARD = 1e-10


@dataclass(frozen=True)
class PostProcessor:
    """Receive filter ``q`` (d x B) and the interference-nulling projector ``g`` (B x B)."""

    q: np.ndarray
    g: np.ndarray
    degenerate: bool = False

    @property
    def streams(self) -> int:
        return self.q.shape[0]


@dataclass(frozen=True)
class Interferer:
    h: np.ndarray  # channel from the interfering transmitter to this receiver
    v: np.ndarray  # its precoder
    alloc: PowerAllocation


@dataclass
class RateReport:
    node: int
    rate: float
    per_stream: list[float] = field(default_factory=list)
    dof_used: int = 0


def zf_post_processor(h: np.ndarray, v: np.ndarray, g: np.ndarray) -> PostProcessor:
    m = g @ h @ v
    return PostProcessor(np.linalg.pinv(m), g)


def build_post_processor(desired: np.ndarray, precoder: np.ndarray,
                         interference_cov: np.ndarray | None, streams: int | None = None,
                         space: np.ndarray | None = None) -> PostProcessor:
    """Zero-forcing receiver after projecting out the dominant interference.

    At most B - streams interference directions are removed so the desired
    streams keep enough room. If the projection still collapses the desired
    signal, the plain zero-forcing filter is returned flagged as degenerate.
    With ``space`` (orthonormal columns) the receiver first restricts itself
    to that subspace and nulls interference inside it.
    """
    if space is not None:
        inner = build_post_processor(
            space.conj().T @ as_matrix(desired), precoder,
            None if interference_cov is None else space.conj().T @ interference_cov @ space,
            streams)
        g = space @ inner.g @ space.conj().T
        return PostProcessor(np.linalg.pinv(g @ as_matrix(desired) @ as_matrix(precoder)), g,
                             inner.degenerate)
    h, v = as_matrix(desired), as_matrix(precoder)
    b = h.shape[0]
    streams = v.shape[1] if streams is None else streams
    if interference_cov is None or not np.any(interference_cov):
        sub = Subspace.empty(b)
    else:
        sub = dominant_direction(interference_cov)
        room = b - streams
        if sub.dim > room:
            _, vecs = hermitian_eig(interference_cov)
            sub = Subspace(vecs[:, :room])
    g = null_projector(sub)
    m = g @ h @ v
    s = np.linalg.svd(m, compute_uv=False)
    if s.size < streams or s[0] == 0 or s[streams - 1] <= RANK_GUARD * s[0]:
        eye = np.eye(b, dtype=complex)
        return PostProcessor(np.linalg.pinv(h @ v), eye, degenerate=True)
    return PostProcessor(np.linalg.pinv(m), g)


def subspace_post_processor(h: np.ndarray, v: np.ndarray, basis: np.ndarray) -> PostProcessor:
    """Zero-forcing receiver restricted to the receive subspace spanned by ``basis``."""
    return zf_post_processor(h, v, basis @ basis.conj().T)


def received_cov(interferers, b: int) -> np.ndarray:
    """Interference covariance (watts) at the receive antennas."""
    cols = []
    for it in interferers:
        d = it.v.shape[1]
        if it.alloc.streams == tuple(range(d)):
            amp = np.sqrt(it.alloc.powers / d)
        else:
            amp = np.zeros(d)
            amp[list(it.alloc.streams)] = np.sqrt(it.alloc.powers / d)
        cols.append((it.h @ it.v) * amp)
    if not cols:
        return np.zeros((b, b), dtype=complex)
    m = np.hstack(cols)
    return m @ m.conj().T


def interference_cov(interferers, q: np.ndarray | PostProcessor | None = None,
                     b: int | None = None) -> np.ndarray:
    """Interference covariance after post-processing, Q R Q^H (watts).

    Without ``q`` the receive-antenna covariance is returned.
    """
    if isinstance(q, PostProcessor):
        q = q.q
    if b is None:
        if q is not None:
            b = q.shape[1]
        elif interferers:
            b = interferers[0].h.shape[0]
        else:
            raise ValueError("cannot infer receive dimension")
    cov = received_cov(interferers, b)
    if q is None:
        return cov
    return q @ cov @ q.conj().T


def _noise_term(h, v, g):
    """Diagonal of (V^H H^H G H V)^+ and a mask of streams the rank guard keeps."""
    m = v.conj().T @ h.conj().T @ g @ h @ v
    w, u = np.linalg.eigh(0.5 * (m + m.conj().T))
    top = w.max() if w.size else 0.0
    if top <= 0:
        return np.full(m.shape[0], np.inf), np.zeros(m.shape[0], bool)
    good = w > RANK_GUARD * top
    inv_diag = (np.abs(u[:, good]) ** 2 / w[good]).sum(axis=1)
    # streams with weight on the null space of the Gram matrix cannot be resolved
    leak = (np.abs(u[:, ~good]) ** 2).sum(axis=1)
    ok = leak <= 1e-8
    return inv_diag, ok


def parallel_rates(desired, v, g, alloc: PowerAllocation, icov: np.ndarray, noise: float
                   ) -> list[float]:
    h, v = as_matrix(desired), as_matrix(v)
    d = v.shape[1]
    if alloc.powers.size != d:
        raise ValueError(f"{alloc.powers.size} powers for {d} streams")
    if icov.shape != (d, d):
        raise ValueError(f"interference covariance is {icov.shape}, expected {(d, d)}")
    if g.shape != (h.shape[0], h.shape[0]):
        raise ValueError("projector does not match the receive dimension")
    inv_diag, ok = _noise_term(h, v, g)
    out = []
    for k in range(d):
        p = alloc.powers[k]
        if p <= 0 or not ok[k]:
            out.append(0.0)
            continue
        denom = inv_diag[k] + icov[k, k].real / noise
        out.append(math.log2(1.0 + (p / (noise * d)) / denom))
    return out


def _report(node, per_stream, alloc) -> RateReport:
    return RateReport(node, float(sum(per_stream)), per_stream,
                      sum(1 for r, p in zip(per_stream, alloc.powers) if p > 0 and r > 0))


def _check_q(q, v):
    if q is not None:
        qm = q.q if isinstance(q, PostProcessor) else q
        if qm.shape[0] != v.shape[1]:
            raise ValueError("post-processor rows do not match the stream count")


def rate_mue(desired, v, q, g, alloc: PowerAllocation, icov: np.ndarray, noise: float,
             node: int = -1) -> RateReport:
    """Macro-user rate over its streams, interference from co-channel SBSs in ``icov``."""
    _check_q(q, as_matrix(v))
    return _report(node, parallel_rates(desired, v, g, alloc, icov, noise), alloc)


def rate_sue(desired, v, q, g, alloc: PowerAllocation, icov_sbs: np.ndarray,
             icov_mbs: np.ndarray, noise: float, node: int = -1) -> RateReport:
    _check_q(q, as_matrix(v))
    return _report(node, parallel_rates(desired, v, g, alloc, icov_sbs + icov_mbs, noise), alloc)


def rate_mue_cooperative(desired, v, q, g, modified_alloc: PowerAllocation, icov: np.ndarray,
                         noise: float, node: int = -1) -> RateReport:
    """Macro-user rate after stream release.

    ``v``, ``q``, ``g`` and ``icov`` describe the retained streams only and
    ``modified_alloc`` carries their powers, so the stream count in the SNR
    split is the retained count.
    """
    v = as_matrix(v)
    if modified_alloc.powers.size != v.shape[1]:
        raise ValueError("modified allocation must cover exactly the retained streams")
    return rate_mue(desired, v, q, g, modified_alloc, icov, noise, node)


def rate_sue_cooperative(member: int, sol, outside_interferers, mbs_interferers,
                         alloc: PowerAllocation, noise: float, node: int = -1) -> RateReport:
    """Small-cell user rate inside a draining coalition.

    Interference from the other coalition members is drained, so only the
    SBSs outside the coalition and the MBS remain in the denominator. The
    receiver keeps to the drained receive space and, when that space has
    room to spare, also nulls the strongest outside interference in it.
    """
    if member not in sol.precoders:
        raise KeyError(f"SBS {member} is not part of the coalition")
    h = sol.problem.served[member]
    v = sol.precoders[member]
    space = sol.receive_spaces.get(member, sol.receive_bases[member])
    if space.shape[1] > v.shape[1]:
        outside = received_cov(list(outside_interferers) + list(mbs_interferers), h.shape[0])
        pp = build_post_processor(h, v, outside, space=space)
    else:
        pp = subspace_post_processor(h, v, space)
    icov_k = interference_cov(outside_interferers, pp.q, h.shape[0])
    icov_n = interference_cov(mbs_interferers, pp.q, h.shape[0])
    return rate_sue(h, v, pp, pp.g, alloc, icov_k, icov_n, noise, node)


def desired_subspace_share(h: np.ndarray, v: np.ndarray, cov: np.ndarray) -> float | None:
    """Fraction of received interference power inside span(H V); None without interference."""
    total = float(np.trace(cov).real)
    if total <= 0:
        return None
    basis = np.linalg.svd(h @ v, full_matrices=False)[0][:, : v.shape[1]]
    inside = float(np.trace(basis.conj().T @ cov @ basis).real)
    return min(1.0, max(0.0, inside / total))
