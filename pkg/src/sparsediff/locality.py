"""Numerical checks of the locality estimate and its two ingredients: the
linear Gronwall inequality and the Carne-Varopoulos heat-kernel bound."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .diffusion import DriftSpec, NoiseSource, build_interaction, simulate
from .errors import HypothesisViolation, ResourceLimitError
from .graph_models import distances
from .network import MarkedNetwork, rooted_ball_network

DEFAULT_DIM_CAP = 2000


def matrix_exponential(M, t: float = 1.0, cap: int = DEFAULT_DIM_CAP) -> np.ndarray:
    """exp(t M) by scaling and squaring with a Pade core (scipy)."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("square matrix required")
    if A.shape[0] > cap:
        raise ResourceLimitError(f"dimension {A.shape[0]} exceeds cap {cap}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return linalg.expm(t * A)


# ---------------------------------------------------------------------------
# Gronwall


@dataclass(frozen=True)
class GronwallResult:
    ok: bool
    max_violation: float          # max of u - exp(tM) a (<= slack when ok)
    hypothesis_residual: float    # max of u - (a + int M u)


def _cumulative_integral(times, f, quadrature):
    dt = np.diff(times)[:, None]
    if quadrature == "trapezoid":
        pieces = 0.5 * dt * (f[1:] + f[:-1])
    elif quadrature == "left":
        pieces = dt * f[:-1]
    else:
        raise ValueError("quadrature must be 'trapezoid' or 'left'")
    return np.vstack([np.zeros((1, f.shape[1])), np.cumsum(pieces, axis=0)])


def gronwall_check(times, u, a, M, tol: float = 1e-8, slack: float = 1e-8,
                   quadrature: str = "trapezoid") -> GronwallResult:
    """Check u(t) <= exp(t M) a(t) given u(t) <= a(t) + int_0^t M u(s) ds.

    ``u`` and ``a`` have shape (len(times), n); ``a`` must be nonnegative and
    nondecreasing and ``M`` entrywise nonnegative.  The hypothesis is checked
    by quadrature on the given grid (relative tolerance ``tol`` on values
    above one) and a violation raises ``HypothesisViolation``.  ``"left"``
    quadrature matches forward-Euler data exactly.
    """
    t = np.asarray(times, dtype=float)
    U = np.atleast_2d(np.asarray(u, dtype=float).T).T.reshape(t.size, -1)
    A = np.atleast_2d(np.asarray(a, dtype=float).T).T.reshape(t.size, -1)
    Mm = np.atleast_2d(np.asarray(M, dtype=float))
    if np.any(Mm < 0):
        raise HypothesisViolation("M must be entrywise nonnegative")
    if np.any(A < -tol) or np.any(np.diff(A, axis=0) < -tol):
        raise HypothesisViolation("a must be nonnegative and nondecreasing")
    rhs = A + _cumulative_integral(t, U @ Mm.T, quadrature)
    resid = U - rhs
    hyp = float(np.max(resid / np.maximum(1.0, np.abs(rhs))))
    if hyp > tol:
        raise HypothesisViolation(f"integral inequality fails by {hyp:.3e}", hyp)
    viol = -math.inf
    for k, tk in enumerate(t):
        env = matrix_exponential(Mm, tk) @ A[k]
        viol = max(viol, float(np.max(U[k] - env)))
    return GronwallResult(viol <= slack, viol, hyp)


# ---------------------------------------------------------------------------
# Heat kernel


def heat_kernel(net: MarkedNetwork, s: float, cap: int = DEFAULT_DIM_CAP) -> np.ndarray:
    """q_s(v, u) = e^{-s} exp(s Q)_{vu} / mu_u with Q_{vu} = mu_vu / mu_v.

    This is the transition density, with respect to the weights mu, of the
    continuous-time random walk jumping at rate one along Q.  It is symmetric
    in (v, u) and sum_u q_s(v, u) mu_u = 1.
    """
    mu = net.vertex_weight()
    if np.any(mu <= 0):
        raise ValueError("every vertex needs positive weight")
    if net.n > cap:
        raise ResourceLimitError(f"dimension {net.n} exceeds cap {cap}")
    Q = build_interaction(net).to_dense().T  # row v holds mu_vu / mu_v
    return math.exp(-s) * matrix_exponential(Q, s, cap) / mu[None, :]


def carne_varopoulos_bound(R: float, s: float, mu_v: float, mu_u: float) -> float:
    """exp(-s - R log(R / (e s))) / max(mu_v, mu_u), valid for R >= e s."""
    if s == 0:
        return 0.0 if R > 0 else 1.0 / max(mu_v, mu_u)
    return math.exp(-s - R * math.log(R / (math.e * s))) / max(mu_v, mu_u)


@dataclass(frozen=True)
class AuditRow:
    v: int
    u: int
    R: int
    s: float
    exact: float
    bound: float
    slack: float


def carne_varopoulos_audit(net: MarkedNetwork, s: float, pairs=None,
                           q: np.ndarray | None = None) -> list[AuditRow]:
    """Compare the exact heat kernel with the off-diagonal bound.

    Default ``pairs``: every ordered pair at finite distance R >= e s.
    Explicit pairs violating R >= e s raise ``ValueError``.
    """
    mu = net.vertex_weight()
    if q is None:
        q = heat_kernel(net, s)
    D = np.array([distances(net.graph, v) for v in range(net.n)])
    if pairs is None:
        pairs = [(v, u) for v in range(net.n) for u in range(net.n)
                 if D[v, u] >= 0 and D[v, u] >= math.e * s]
    rows = []
    for v, u in pairs:
        R = int(D[v, u])
        if R < 0:
            continue  # different components: the kernel vanishes
        if R < math.e * s:
            raise ValueError(f"pair ({v},{u}) has R={R} < e*s")
        b = carne_varopoulos_bound(R, s, mu[v], mu[u])
        ex = float(q[v, u])
        rows.append(AuditRow(int(v), int(u), R, float(s), ex, b, b - ex))
    return rows


# ---------------------------------------------------------------------------
# Locality experiment


def _rlogr(r: float) -> float:
    return 0.0 if r <= 0 else r * math.log(r)


@dataclass
class LocalityReport:
    radii: list
    gaps: list
    boundary_sizes: list
    envelope: list
    fitted_C: float
    strictly_decreasing: bool
    decay_onset: int | None
    meta: dict = field(default_factory=dict)

    def rows(self):
        return [(r, b, g, e, self.fitted_C) for r, b, g, e in
                zip(self.radii, self.boundary_sizes, self.gaps, self.envelope)]


def fit_envelope(radii, gaps, boundary_sizes, s: int = 0):
    """Smallest C with gap_r <= C |boundary_r| exp(-(r-s) log(r-s)); returns (C, envelope)."""
    shape = np.array([b * math.exp(-_rlogr(r - s)) for r, b in zip(radii, boundary_sizes)])
    g = np.asarray(gaps, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(shape > 0, g / shape, np.where(g > 0, np.inf, 0.0))
    C = float(ratios.max()) if ratios.size else 0.0
    return C, (C * shape).tolist()


def decay_summary(radii, gaps):
    """Strict decrease flag and the smallest radius from which gaps decrease strictly."""
    g = list(gaps)
    dec = all(g[i + 1] < g[i] for i in range(len(g) - 1))
    onset = None
    for i in range(len(g)):
        if all(g[j + 1] < g[j] for j in range(i, len(g) - 1)):
            onset = radii[i]
            break
    return dec, onset


def locality_experiment(net: MarkedNetwork, root: int, s: int, radii, drift: DriftSpec,
                        T: float, dt: float, seed: int, reference_radius: int | None = None,
                        noise: NoiseSource | None = None, return_paths: bool = False):
    """Sup-gap on the s-ball around ``root`` between the reference solution
    (largest radius) and truncated solutions on r-balls, shared noise.

    The boundary size for radius r is that of the r-ball inside ``net``; the
    envelope uses the distance r - s between the observation set and the
    truncation boundary.
    """
    radii = sorted(int(r) for r in radii)
    if radii and radii[0] < s:
        raise ValueError("radii must be >= s")
    ref_r = reference_radius if reference_radius is not None else max(radii)
    noise = noise or NoiseSource(seed)
    ref_ball = rooted_ball_network(net, root, ref_r)
    ref = simulate(ref_ball.network, drift, T, dt, noise)
    h0 = rooted_ball_network(net, root, s).to_parent
    ref_cols = {int(i): j for j, i in enumerate(ref.ids)}
    gaps, bsizes, extra = [], [], {}
    for r in radii:
        b = rooted_ball_network(net, root, r)
        tr = simulate(b.network, drift, T, dt, noise)
        tcols = {int(i): j for j, i in enumerate(tr.ids)}
        ids = net.ids[h0]
        diff = np.abs(tr.paths[:, [tcols[int(i)] for i in ids]] - ref.paths[:, [ref_cols[int(i)] for i in ids]])
        gaps.append(float(diff.max()))
        bsizes.append(int(b.boundary.size))
        if return_paths:
            extra[r] = (b, tr)
    C, env = fit_envelope(radii, gaps, bsizes, s)
    dec, onset = decay_summary(radii, gaps)
    rep = LocalityReport(radii, gaps, bsizes, env, C, dec, onset,
                         {"T": T, "dt": dt, "seed": seed, "s": s, "reference_radius": ref_r,
                          "drift": drift.describe()})
    if return_paths:
        return rep, (ref_ball, ref), extra
    return rep


def harvest_gronwall_system(net: MarkedNetwork, root: int, r: int, drift: DriftSpec,
                            T: float, dt: float, seed: int, reference_radius: int | None = None,
                            record_every: int = 1):
    """Gap vectors on the r-ball H against a larger reference system.

    Returns ``(times, u, a, M)`` with u_v(t) = |theta_v - theta^H_v|, v in H,
    a = 2 C T on the boundary of H (zero elsewhere) and M = C (Pbar + I)^T,
    Pbar the interaction matrix of H.  The pair satisfies the integral
    inequality u <= a + int M u for the exact dynamics and, with left-endpoint
    quadrature, for forward-Euler paths.
    """
    noise = NoiseSource(seed)
    ref_r = reference_radius if reference_radius is not None else r + 2
    ref_ball = rooted_ball_network(net, root, ref_r)
    H = rooted_ball_network(net, root, r)
    ref = simulate(ref_ball.network, drift, T, dt, noise, record_every=record_every)
    tr = simulate(H.network, drift, T, dt, noise, record_every=record_every)
    cols = {int(i): j for j, i in enumerate(ref.ids)}
    u = np.abs(tr.paths - ref.paths[:, [cols[int(i)] for i in tr.ids]])
    C = drift.C
    Pbar = build_interaction(H.network).to_dense()
    # boundary of H relative to the reference network
    in_ref = rooted_ball_network(ref_ball.network, int(np.searchsorted(ref_ball.network.ids, net.ids[root])), r)
    bmask = np.zeros(H.network.n)
    bmask[in_ref.boundary] = 1.0
    a = np.tile(2.0 * C * T * bmask, (u.shape[0], 1))
    M = C * (Pbar + np.eye(H.network.n)).T
    return tr.times, u, a, M
