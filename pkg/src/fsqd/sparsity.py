"""Lorenz curves, Gini coefficients and subspace/shot resource bounds.

Weights are measurement probabilities ``|c_I|^2`` of a state in the
computational basis. A :class:`WeightDistribution` may list fewer than
``N = 2**n`` weights; the missing entries are implicit zeros, which keeps
large-n empirical distributions cheap.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .mps import MPO, MPS, SampleCounts, bits_to_int, bits_to_str, int_to_bits

DENSE_CAP = 24


@dataclass(frozen=True)
class WeightDistribution:
    """Probability weights over ``2**n`` basis states.

    ``weights`` is either the full dense vector indexed by basis integer, or
    an arbitrary list of the non-zero weights (``indices`` optionally records
    which basis states they belong to). ``estimator`` labels where the
    weights came from, e.g. ``"exact"`` or ``"empirical"``.
    """

    n: int
    weights: np.ndarray
    estimator: str = "exact"
    indices: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if np.any(w < -1e-15):
            raise ValidationError("weights must be non-negative")
        w = np.clip(w, 0.0, None)
        if self.n < 1:
            raise ValidationError("n must be positive")
        if self.n <= 62 and w.size > 2**self.n:
            raise ValidationError(f"{w.size} weights exceed 2^{self.n} basis states")
        total = w.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"weights must sum to 1, got {total:.12f}")
        object.__setattr__(self, "weights", w)

    @property
    def N(self) -> float:
        return float(2**self.n)

    @property
    def implicit_zeros(self) -> float:
        return self.N - self.weights.size

    @classmethod
    def from_amplitudes(cls, amps: np.ndarray) -> "WeightDistribution":
        amps = np.asarray(amps)
        n = int(round(math.log2(amps.size)))
        if 2**n != amps.size:
            raise ValidationError("amplitude vector length is not a power of two")
        w = np.abs(amps) ** 2
        return cls(n, w / w.sum(), "exact")

    @classmethod
    def from_counts(cls, counts: SampleCounts) -> "WeightDistribution":
        w = counts.counts / counts.total_shots
        idx = np.array([bits_to_int(b) for b in counts.bits], dtype=object)
        return cls(counts.n, w, "empirical", idx)

    @classmethod
    def from_mps(cls, s: MPS) -> "WeightDistribution":
        from .oracle import mps_to_dense

        if s.n > DENSE_CAP:
            raise ValidationError(f"exact weights need n <= {DENSE_CAP}; use from_counts instead")
        return cls.from_amplitudes(mps_to_dense(s))


@dataclass(frozen=True)
class LorenzCurve:
    """Piecewise-linear Lorenz curve of a weight distribution.

    ``sorted_weights`` are the explicit weights in ascending order; ``zeros``
    leading zero weights are implicit, so the grid has ``zeros + k`` cells.
    """

    sorted_weights: np.ndarray
    zeros: float
    N: float

    @property
    def cumulative(self) -> np.ndarray:
        """``L(I/N)`` at the explicit grid points ``I = zeros + 0, ..., zeros + k``."""
        return np.concatenate([[0.0], np.cumsum(self.sorted_weights)])

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Grid abscissae ``x = I / N`` and values ``L(x)``, including ``(0, 0)`` when zeros exist."""
        k = self.sorted_weights.size
        xs = (self.zeros + np.arange(k + 1)) / self.N
        ys = self.cumulative
        if self.zeros > 0:
            xs = np.concatenate([[0.0], xs])
            ys = np.concatenate([[0.0], ys])
        return xs, ys

    def __call__(self, x):
        xs, ys = self.grid()
        return np.interp(x, xs, ys)

    def derivative(self, x: float) -> float:
        """Right-derivative ``N * w`` of the cell starting at or containing ``x``."""
        if x >= 1.0:
            return float(self.N * self.sorted_weights[-1])
        cell = math.floor(x * self.N + 1e-9)
        j = cell - self.zeros
        if j < 0:
            return 0.0
        return float(self.N * self.sorted_weights[int(j)])

    def inverse(self, y: float) -> float:
        """``sup{x : L(x) <= y}`` on the piecewise-linear curve."""
        if y >= 1.0:
            return 1.0
        if y < 0:
            raise ValidationError("Lorenz inverse needs y >= 0")
        cum = self.cumulative
        # Last grid index whose value does not exceed y.
        j = int(np.searchsorted(cum, y, side="right")) - 1
        w = self.sorted_weights[j]  # next cell exists because cum[-1] = 1 > y
        frac = (y - cum[j]) / w if w > 0 else 0.0
        return float((self.zeros + j + frac) / self.N)


def lorenz(w: WeightDistribution) -> LorenzCurve:
    return LorenzCurve(np.sort(w.weights), w.implicit_zeros, w.N)


def gini(w: WeightDistribution | LorenzCurve) -> float:
    """``G = 1 - 2 sum_I w_I (N - I + 1/2) / N`` with weights sorted ascending."""
    curve = lorenz(w) if isinstance(w, WeightDistribution) else w
    s = curve.sorted_weights
    k = s.size
    # Explicit weights occupy the top k positions, so N - I + 1/2 = k - j + 1/2.
    rank = k - np.arange(1, k + 1) + 0.5
    return float(1.0 - 2.0 * np.dot(s / s.sum(), rank) / curve.N)


def lorenz_area_gini(curve: LorenzCurve) -> float:
    """``1 - 2 * integral L`` by the trapezoid rule on the grid."""
    xs, ys = curve.grid()
    return float(1.0 - 2.0 * np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs)))


# --------------------------------------------------------------------------
# resource bounds


@dataclass(frozen=True)
class ResourceBound:
    epsilon: float
    epsilon_tilde: float
    eta: float
    rho: float
    N_R_sufficient: int
    N_S_sufficient: int
    N_R_lower: int | None = None
    N_S_lower: int | None = None
    degenerate: bool = False


def rescaled_error(epsilon: float, rho: float, real_amplitudes: bool = False) -> float:
    """``eps / (2 sqrt(2) rho)``, or ``eps / (2 rho)`` for real amplitudes."""
    return epsilon / ((2.0 if real_amplitudes else 2.0 * math.sqrt(2.0)) * rho)


def theorem_bounds(
    curve: LorenzCurve,
    epsilon: float,
    rho: float,
    eta: float,
    real_amplitudes: bool = False,
) -> ResourceBound:
    """Sufficient subspace size ``(1 - L^-1(et^2)) N`` and shot count for it.

    Counts are rounded up. If the rescaled error is at least one the bound
    is trivially met and ``N_R = 1`` is returned with ``degenerate`` set.
    """
    if epsilon <= 0 or eta <= 0 or rho <= 0:
        raise ValidationError("epsilon, eta and rho must be positive")
    et = rescaled_error(epsilon, rho, real_amplitudes)
    if et >= 1.0:
        return ResourceBound(epsilon, et, eta, rho, 1, 1, degenerate=True)
    x = curve.inverse(et**2)
    n_r_real = (1.0 - x) * curve.N
    n_r = max(1, math.ceil(n_r_real - 1e-9))
    slope = curve.derivative(x) / curve.N
    n_s = max(1, math.ceil(math.log(n_r / eta) / slope - 1e-9)) if slope > 0 else 1
    return ResourceBound(epsilon, et, eta, rho, n_r, n_s)


def corollary_bounds(G: float, n: int, epsilon_tilde: float, eta: float) -> tuple[int, int]:
    """Lower bounds ``(1 - G) N (1 - et^2)`` and ``N_R log(N_R / eta)``, rounded down."""
    if not 0.0 <= G < 1.0:
        raise ValidationError("G must lie in [0, 1)")
    if not 0.0 < epsilon_tilde < 1.0:
        raise ValidationError("epsilon_tilde must lie in (0, 1)")
    nr_real = (1.0 - G) * 2.0**n * (1.0 - epsilon_tilde**2)
    n_r = max(1, math.floor(nr_real + 1e-9))
    n_s = max(1, math.floor(n_r * math.log(n_r / eta) + 1e-9)) if n_r / eta > 1 else 1
    return n_r, n_s


def approx_intersection(curve: LorenzCurve, G: float | None = None) -> float:
    """Value ``L(x)`` at the crossing ``x > G`` of the curve with ``(x - G) / (1 - G)``.

    The corollary's lower bounds hold for rescaled errors whose square is
    below this value.
    """
    G = gini(curve) if G is None else G
    xs, ys = curve.grid()
    la = np.where(xs >= G, (xs - G) / (1.0 - G), 0.0)
    diff = ys - la
    # Past G the approximation starts below the curve and ends equal at x = 1.
    mask = xs > G
    idx = np.nonzero(mask & (diff <= 0))[0]
    if idx.size == 0:
        return 1.0
    j = idx[0]
    if j == 0 or not mask[j - 1]:
        return float(ys[j])
    # Linear interpolation of the sign change on [x_{j-1}, x_j].
    d0, d1 = diff[j - 1], diff[j]
    t = d0 / (d0 - d1) if d0 != d1 else 0.0
    return float(ys[j - 1] + t * (ys[j] - ys[j - 1]))


def coupon_collector_shots(n_r: int) -> float:
    """Expected shots ``N_R * H(N_R)`` to see ``N_R`` equiprobable outcomes."""
    if n_r < 1:
        raise ValidationError("N_R must be >= 1")
    return float(n_r * np.sum(1.0 / np.arange(1, n_r + 1)))


def miss_probability(weights: np.ndarray, top: int, n_shots: int) -> float:
    """``sum (1 - w)^N_S`` over the ``top`` largest weights (union bound on a miss)."""
    w = np.sort(np.asarray(weights))[::-1][:top]
    return float(np.sum((1.0 - w) ** n_shots))


# --------------------------------------------------------------------------
# synthetic distributions and closed forms


def exponential_weights(n: int, lam: float) -> np.ndarray:
    """Ascending weights ``~ exp(-lam (N - I))`` for ``I = 1..N``."""
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    k = np.arange(2**n)[::-1].astype(float)  # N - I
    w = np.exp(-lam * k)
    return w / w.sum()


def powerlaw_weights(n: int, lam: float, gamma: float) -> np.ndarray:
    """Ascending weights ``~ (N - I + 1/lam)^(-gamma)`` for ``I = 1..N``."""
    if lam <= 0 or gamma <= 1:
        raise ValidationError("power law needs lambda > 0 and gamma > 1")
    k = np.arange(2**n)[::-1].astype(float)
    w = (k + 1.0 / lam) ** (-gamma)
    return w / w.sum()


@dataclass(frozen=True)
class AnalyticCurve:
    """Continuum Lorenz curve with closed-form derivative, inverse and Gini."""

    kind: str
    lam: float
    gamma: float | None
    n: int
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    one_minus_gini: float
    asymptotic: bool

    @property
    def gini(self) -> float:
        return 1.0 - self.one_minus_gini


def analytic_curve(kind: str, lam: float, n: int, gamma: float | None = None) -> AnalyticCurve:
    """Closed-form Lorenz curve for exponential or power-law weight decay.

    ``asymptotic`` is False when ``lam * N < 10`` (the closed forms assume
    ``lam * N >> 1``).
    """
    if lam <= 0:
        raise ValidationError("lambda must be positive")
    N = 2.0**n
    ln = lam * N
    if kind == "exponential":
        value = lambda x: np.exp(-ln * (1.0 - np.asarray(x)))
        deriv = lambda x: ln * np.exp(-ln * (1.0 - np.asarray(x)))
        inv = lambda y: 1.0 - np.log(1.0 / np.asarray(y)) / ln
        omg = 2.0 * (1.0 - math.exp(-ln)) / ln
    elif kind == "powerlaw":
        if gamma is None or gamma <= 1:
            raise ValidationError("power law needs gamma > 1")
        g = float(gamma)
        value = lambda x: ln ** (1 - g) * (1 + 1 / ln - np.asarray(x)) ** (1 - g)
        deriv = lambda x: (g - 1) * ln ** (1 - g) * (1 + 1 / ln - np.asarray(x)) ** (-g)
        inv = lambda y: 1 + 1 / ln - np.asarray(y) ** (1 / (1 - g)) / ln
        if abs(g - 2.0) < 1e-12:
            omg = 2.0 * math.log(1.0 + ln) / ln
        elif g > 2:
            omg = 2.0 / ((g - 2.0) * ln)
        else:
            raise ValidationError("closed-form Gini is available for gamma >= 2 only")
    else:
        raise ValidationError(f"unknown curve kind {kind!r}")
    return AnalyticCurve(kind, lam, gamma, n, value, deriv, inv, omg, ln >= 10)


# --------------------------------------------------------------------------
# scaling fits and spectral norms


@dataclass(frozen=True)
class GiniScalingFit:
    points: tuple[tuple[int, float], ...]
    g: float
    c: float
    residuals: tuple[float, ...]


def fit_gini_scaling(points: Iterable[tuple[int, float]]) -> GiniScalingFit:
    """Least squares ``log2[(1 - G) 2^n] = g n + c``."""
    pts = tuple((int(n), float(G)) for n, G in points)
    if len(pts) < 3:
        raise ValidationError("need at least 3 points")
    ns = np.array([p[0] for p in pts], dtype=float)
    # log2[(1 - G) 2^n] = log2(1 - G) + n
    y = np.array([math.log2(1.0 - p[1]) for p in pts]) + ns
    design = np.column_stack([ns, np.ones_like(ns)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return GiniScalingFit(pts, float(coef[0]), float(coef[1]), tuple(float(r) for r in resid))


def spectral_norm(h: MPO, mode: str = "exact", term_norms: Sequence[float] | None = None) -> float:
    """Largest |eigenvalue| of ``h``.

    ``mode="exact"`` diagonalises the dense matrix (n <= 14).
    ``mode="term_bound"`` returns the sum of the local-term operator norms in
    ``term_norms``, an upper bound by the triangle inequality.
    """
    if not h.hermitian:
        raise ValidationError("spectral_norm requires a Hermitian-flagged MPO")
    if mode == "exact":
        from .oracle import MAX_MATRIX_SITES, mpo_to_dense

        if h.n > MAX_MATRIX_SITES:
            raise ValidationError(f"exact spectral norm needs n <= {MAX_MATRIX_SITES}")
        m = mpo_to_dense(h)
        return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))))
    if mode == "term_bound":
        if term_norms is None:
            raise ValidationError("term_bound mode needs the local term norms")
        return float(np.sum(np.abs(term_norms)))
    raise ValidationError(f"unknown spectral-norm mode {mode!r}")


def ising_term_norms(n: int, J: float, hx: float, hz: float) -> list[float]:
    """Operator norms of the local terms of the open Ising chain."""
    return [abs(J)] * (n - 1) + [abs(hx)] * n + [abs(hz)] * n


# --------------------------------------------------------------------------
# IO and reports


def distribution_csv(w: WeightDistribution) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bitstring", "weight"])
    if w.indices is None:
        if w.weights.size != 2**w.n:
            raise ValidationError("sparse weights need basis indices for CSV export")
        idx = range(w.weights.size)
    else:
        idx = w.indices
    for i, wt in zip(idx, w.weights):
        writer.writerow([bits_to_str(int_to_bits(int(i), w.n)), repr(float(wt))])
    return buf.getvalue()


def distribution_from_csv(text: str, estimator: str = "file") -> WeightDistribution:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["bitstring", "weight"]:
        raise ValidationError("distribution CSV must start with a 'bitstring,weight' header")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValidationError("distribution CSV has no rows")
    n = len(body[0][0])
    idx = np.array([int(r[0], 2) for r in body], dtype=object)
    w = np.array([float(r[1]) for r in body])
    return WeightDistribution(n, w, estimator, idx)


def save_distribution_binary(path, w: WeightDistribution) -> None:
    """Dense little-endian float64 array of all ``2**n`` weights (numpy ``.npy``)."""
    if w.n > DENSE_CAP:
        raise ValidationError(f"binary dense export is limited to n <= {DENSE_CAP}")
    dense = np.zeros(2**w.n, dtype="<f8")
    if w.indices is None:
        dense[: w.weights.size] = w.weights
    else:
        dense[np.array(w.indices, dtype=np.int64)] = w.weights
    with open(path, "wb") as fh:
        np.save(fh, dense, allow_pickle=False)


def load_distribution_binary(path) -> WeightDistribution:
    dense = np.load(path, allow_pickle=False)
    n = int(round(math.log2(dense.size)))
    return WeightDistribution(n, dense, "file")


@dataclass
class SparsityReport:
    n: int
    estimator: str
    gini: float
    one_minus_gini_times_N: float
    lorenz_area_gini: float
    bounds: list[dict] = field(default_factory=list)

    def to_text(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def sparsity_report(
    w: WeightDistribution,
    epsilons_tilde: Sequence[float] = (),
    eta: float = 0.01,
) -> SparsityReport:
    """Gini summary plus theorem/corollary counts at the given rescaled errors (``rho = 1``)."""
    curve = lorenz(w)
    G = gini(curve)
    rep = SparsityReport(w.n, w.estimator, G, (1.0 - G) * w.N, lorenz_area_gini(curve))
    for et in epsilons_tilde:
        tb = theorem_bounds(curve, et * 2.0 * math.sqrt(2.0), 1.0, eta)
        nr_lo, ns_lo = corollary_bounds(G, w.n, et, eta) if G < 1 else (1, 1)
        rep.bounds.append(
            {
                "epsilon_tilde": et,
                "eta": eta,
                "N_R_sufficient": tb.N_R_sufficient,
                "N_S_sufficient": tb.N_S_sufficient,
                "N_R_lower": nr_lo,
                "N_S_lower": ns_lo,
            }
        )
    return rep


def lorenz_csv(curve: LorenzCurve, max_points: int = 4096) -> str:
    xs, ys = curve.grid()
    if xs.size > max_points:
        keep = np.unique(np.linspace(0, xs.size - 1, max_points).astype(int))
        xs, ys = xs[keep], ys[keep]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "L"])
    for x, y in zip(xs, ys):
        writer.writerow([repr(float(x)), repr(float(y))])
    return buf.getvalue()
