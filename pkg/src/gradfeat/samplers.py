"""Weight-sampling strategies: given a dataset and a count, produce neurons.

All strategies draw i.i.d. hyperplanes (a, b) with unit normal ``a``:

* ``uniform``            -- a uniform on the sphere, b uniform on [-R, R]
* ``active-subspace``    -- a from the angular central Gaussian of the gradient
                            covariance ``G G^T``, b uniform
* ``local-gradient``     -- a along a data gradient, hyperplane through the
                            point, point picked proportional to ``|g_k|``
* ``nonlocal-gradient``  -- gradients mixed over a spatial radius ``delta_w``
                            before normalizing, offsets jittered
* ``nonlocal-hessian``   -- same construction from Hessian actions (s=2)
* ``integral-density``   -- rejection sampling from the data estimate of the
                            exact representation density
* ``residual``           -- stagewise resampling from the gradients of the
                            current fit's residual

The spatial mixing weights are ``w(x, x') = exp(-|x - x'| / (2 delta_w))``,
truncated to zero below 1e-6.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .activation import PsiTable, eval_psi
from .geometry import GaussianFactor, NeuronSet, sample_acg
from .regression import RidgeModel, eval_model_gradient

logger = logging.getLogger(__name__)

WEIGHT_TRUNCATION = 1e-6
SAMPLER_KINDS = (
    "uniform",
    "active-subspace",
    "local-gradient",
    "nonlocal-gradient",
    "nonlocal-hessian",
    "integral-density",
    "residual",
)


class MissingGradientsError(ValueError):
    """Sampler needs gradient data but the dataset has none."""


class MissingHessiansError(ValueError):
    """Sampler needs Hessian data but the dataset has none."""


class MissingRhoError(ValueError):
    """rho_mode='known' but the dataset carries no density values."""


class AllZeroGradientsError(ValueError):
    """Every gradient is zero; no direction information available."""


class ZeroTraceError(ValueError):
    """All mixture covariances have zero trace."""


class DeltaZeroError(ValueError):
    """Residual sampling needs a smoothed model (delta > 0)."""


class AcceptanceCollapseError(RuntimeError):
    """Rejection sampling acceptance rate fell below 1e-4."""


@dataclass(frozen=True)
class DataSet:
    """Standardized regression data inside the ball of radius ``R``.

    Gradients ``G`` (K x d), Hessians ``H`` (K x d x d) and density values
    ``rho`` are optional; samplers raise when a required block is missing.
    """

    X: np.ndarray
    y: np.ndarray
    G: np.ndarray | None = None
    H: np.ndarray | None = None
    R: float = 1.0
    rho: np.ndarray | None = None

    def __post_init__(self) -> None:
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y lengths differ")
        radii = np.linalg.norm(X, axis=1)
        if radii.size and radii.max() > self.R + 1e-9:
            raise ValueError(f"point at radius {radii.max():.12g} outside ball R={self.R}")
        if self.G is not None:
            G = np.asarray(self.G, dtype=float)
            if G.shape != X.shape:
                raise ValueError(f"gradient block has shape {G.shape}, expected {X.shape}")
            object.__setattr__(self, "G", G)
        if self.H is not None:
            H = np.asarray(self.H, dtype=float)
            if H.shape != (X.shape[0], X.shape[1], X.shape[1]):
                raise ValueError(f"Hessian block has shape {H.shape}")
            if np.max(np.abs(H - np.transpose(H, (0, 2, 1)))) > 1e-10:
                raise ValueError("Hessians are not symmetric")
            object.__setattr__(self, "H", H)
        if self.rho is not None:
            rho = np.asarray(self.rho, dtype=float).ravel()
            if rho.shape[0] != X.shape[0]:
                raise ValueError("rho length differs from X")
            object.__setattr__(self, "rho", rho)

    @property
    def n_points(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def with_gradients(self, G) -> "DataSet":
        return replace(self, G=np.asarray(G, dtype=float))

    @classmethod
    def minimal(cls, d: int, R: float = 1.0) -> "DataSet":
        """Geometry-only dataset (one point at the origin); for kernel oracles."""
        return cls(X=np.zeros((1, d)), y=np.zeros(1), R=R)


@dataclass(frozen=True)
class SamplerSpec:
    """Tagged sampling strategy with its hyperparameters."""

    kind: str
    delta_w: float | None = None
    order_m: int = 0
    safety: float = 1.5
    kappa: float = 2.0
    n0: int = 8
    base: "SamplerSpec | None" = None
    rho_mode: str = "constant"

    def __post_init__(self) -> None:
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.kind in ("nonlocal-gradient", "nonlocal-hessian"):
            if self.delta_w is None or not self.delta_w > 0.0:
                raise ValueError(f"{self.kind} needs delta_w > 0")
        if self.kind == "integral-density":
            if self.safety < 1.0:
                raise ValueError("safety factor must be >= 1")
            if self.rho_mode not in ("known", "constant"):
                raise ValueError(f"unknown rho_mode {self.rho_mode!r}")
        if self.kind == "residual":
            if self.base is None or self.base.kind not in ("local-gradient", "nonlocal-gradient"):
                raise ValueError("residual base must be local-gradient or nonlocal-gradient")
            if not self.kappa > 1.0:
                raise ValueError("kappa must exceed 1")
            if self.n0 < 1:
                raise ValueError("n0 must be >= 1")

    @classmethod
    def uniform(cls) -> "SamplerSpec":
        return cls(kind="uniform")

    @classmethod
    def active_subspace(cls) -> "SamplerSpec":
        return cls(kind="active-subspace")

    @classmethod
    def local_gradient(cls) -> "SamplerSpec":
        return cls(kind="local-gradient")

    @classmethod
    def nonlocal_gradient(cls, delta_w: float) -> "SamplerSpec":
        return cls(kind="nonlocal-gradient", delta_w=delta_w)

    @classmethod
    def nonlocal_hessian(cls, delta_w: float) -> "SamplerSpec":
        return cls(kind="nonlocal-hessian", delta_w=delta_w)

    @classmethod
    def integral_density(
        cls, order_m: int = 0, safety: float = 1.5, rho_mode: str = "constant"
    ) -> "SamplerSpec":
        return cls(kind="integral-density", order_m=order_m, safety=safety, rho_mode=rho_mode)

    @classmethod
    def residual(cls, base: "SamplerSpec", kappa: float = 2.0, n0: int = 8) -> "SamplerSpec":
        return cls(kind="residual", base=base, kappa=kappa, n0=n0)

    @property
    def label(self) -> str:
        if self.kind == "residual":
            return f"residual-{self.base.kind}"
        return self.kind


def sphere_surface_area(d: int) -> float:
    """Surface area of the unit sphere in R^d: 2 pi^(d/2) / Gamma(d/2)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def uniform_parameter_density(d: int, R: float) -> float:
    """Constant density 1/m_R of the uniform law, m_R = 2 R |S^(d-1)|."""
    return 1.0 / (2.0 * R * sphere_surface_area(d))


def _unit_rows(Z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    norms = np.linalg.norm(Z, axis=1)
    while np.any(norms < 1e-300):
        bad = norms < 1e-300
        Z[bad] = rng.standard_normal((int(bad.sum()), Z.shape[1]))
        norms = np.linalg.norm(Z, axis=1)
    return Z / norms[:, None]


def sample_uniform(ds: DataSet, n: int, rng: np.random.Generator) -> NeuronSet:
    """a uniform on the sphere (normalized Gaussian), b uniform on [-R, R]."""
    A = _unit_rows(rng.standard_normal((n, ds.dim)), rng)
    b = rng.uniform(-ds.R, ds.R, size=n)
    return NeuronSet(A, b)


def _require_gradients(ds: DataSet) -> np.ndarray:
    if ds.G is None:
        raise MissingGradientsError("dataset has no gradient data")
    return ds.G


def sample_active_subspace(ds: DataSet, n: int, rng: np.random.Generator) -> NeuronSet:
    """a from the angular central Gaussian of ``C = G G^T``, b uniform."""
    G = _require_gradients(ds)
    if not np.any(G):
        raise AllZeroGradientsError("all gradients are zero")
    factor = GaussianFactor.from_matrix(G.T)
    A = sample_acg(factor, rng, size=n)
    b = rng.uniform(-ds.R, ds.R, size=n)
    return NeuronSet(A, b)


def sample_local_gradient(ds: DataSet, n: int, rng: np.random.Generator) -> NeuronSet:
    """Hyperplanes through data points, normal to their gradients.

    The source point is drawn with probability ``|g_k| / sum_k |g_k|`` (zero
    gradients excluded), the overall sign of ``(a, b)`` is symmetrized.
    """
    G = _require_gradients(ds)
    norms = np.linalg.norm(G, axis=1)
    total = norms.sum()
    if total <= 0.0:
        raise AllZeroGradientsError("all gradients are zero")
    idx = np.flatnonzero(norms > 0.0)
    ks = idx[rng.choice(idx.size, size=n, p=norms[idx] / norms[idx].sum())]
    signs = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    A = G[ks] / norms[ks, None]
    b = -np.sum(A * ds.X[ks], axis=1)
    return NeuronSet(A * signs[:, None], b * signs)


def _mixing_row(X: np.ndarray, k: int, delta_w: float) -> np.ndarray:
    dist = np.linalg.norm(X - X[k], axis=1)
    w = np.exp(-dist / (2.0 * delta_w))
    w[w < WEIGHT_TRUNCATION] = 0.0
    return w


def _mixture_trace_weights(X: np.ndarray, sq_norms: np.ndarray, delta_w: float) -> np.ndarray:
    """sqrt(tr C_k) with tr C_k = sum_k' w_{k,k'}^2 * sq_norms[k'], chunked in k."""
    K = X.shape[0]
    out = np.empty(K)
    step = max(1, int(2**22 // max(K, 1)))
    for lo in range(0, K, step):
        hi = min(K, lo + step)
        dist = np.linalg.norm(X[lo:hi, None, :] - X[None, :, :], axis=2)
        w = np.exp(-dist / (2.0 * delta_w))
        w[w < WEIGHT_TRUNCATION] = 0.0
        out[lo:hi] = (w**2) @ sq_norms
    return np.sqrt(out)


def sample_nonlocal_gradient(
    ds: DataSet, n: int, delta_w: float, rng: np.random.Generator
) -> NeuronSet:
    """Directions from spatially mixed gradients, offsets jittered by N(0, delta_w^2).

    Per neuron: pick a source point k proportional to ``sqrt(tr C_k)`` with
    ``tr C_k = sum_k' w_{k,k'}^2 |g_k'|^2``, form ``g~ = G (w_k * xi)`` with
    standard normal ``xi``, set ``a = g~/|g~|`` and ``b = -a.x_k + eps``.
    """
    G = _require_gradients(ds)
    if not delta_w > 0.0:
        raise ValueError("delta_w must be positive")
    sqrt_tr = _mixture_trace_weights(ds.X, np.sum(G**2, axis=1), delta_w)
    total = sqrt_tr.sum()
    if total <= 0.0:
        raise ZeroTraceError("all mixture covariances are zero")
    ks = rng.choice(ds.n_points, size=n, p=sqrt_tr / total)
    A = np.empty((n, ds.dim))
    b = np.empty(n)
    for i, k in enumerate(ks):
        w = _mixing_row(ds.X, k, delta_w)
        gt = np.zeros(ds.dim)
        while np.linalg.norm(gt) < 1e-300:
            gt = (w * rng.standard_normal(ds.n_points)) @ G
        a = gt / np.linalg.norm(gt)
        A[i] = a
        b[i] = -a @ ds.X[k] + delta_w * rng.standard_normal()
    return NeuronSet(A, b)


def sample_nonlocal_hessian(
    ds: DataSet, n: int, delta_w: float, rng: np.random.Generator
) -> NeuronSet:
    """Directions from spatially mixed Hessian actions ``sum_k' w H_k' xi_k'``.

    Mixture weights use the Frobenius norms, ``tr C_k = sum_k' w^2 |H_k'|_F^2``.
    One standard normal d-vector is drawn per point with nonzero mixing weight.
    """
    if ds.H is None:
        raise MissingHessiansError("dataset has no Hessian data")
    if not delta_w > 0.0:
        raise ValueError("delta_w must be positive")
    sq_frob = np.sum(ds.H**2, axis=(1, 2))
    sqrt_tr = _mixture_trace_weights(ds.X, sq_frob, delta_w)
    total = sqrt_tr.sum()
    if total <= 0.0:
        raise ZeroTraceError("all mixture covariances are zero")
    ks = rng.choice(ds.n_points, size=n, p=sqrt_tr / total)
    A = np.empty((n, ds.dim))
    b = np.empty(n)
    for i, k in enumerate(ks):
        w = _mixing_row(ds.X, k, delta_w)
        active = np.flatnonzero(w)
        ht = np.zeros(ds.dim)
        while np.linalg.norm(ht) < 1e-300:
            xi = rng.standard_normal((active.size, ds.dim))
            ht = np.einsum("k,kij,kj->i", w[active], ds.H[active], xi)
        a = ht / np.linalg.norm(ht)
        A[i] = a
        b[i] = -a @ ds.X[k] + delta_w * rng.standard_normal()
    return NeuronSet(A, b)


def _resolve_rho(ds: DataSet, rho_mode: str) -> np.ndarray | float:
    if rho_mode == "known":
        if ds.rho is None:
            raise MissingRhoError("rho_mode='known' but dataset has no density values")
        return ds.rho
    if rho_mode == "constant":
        return 1.0
    raise ValueError(f"unknown rho_mode {rho_mode!r}")


def eval_integral_density(
    ds: DataSet, psi: PsiTable, a, b, rho_mode: str = "constant"
) -> float | np.ndarray:
    """Data estimate of the representation density,
    ``|1/K sum_k (a.g_k) psi(a.x_k + b) / rho(x_k)|``.

    Accepts a single ``(a, b)`` or batches with ``a`` of shape (n, d) and
    ``b`` of shape (n,).
    """
    G = _require_gradients(ds)
    rho = _resolve_rho(ds, rho_mode)
    a = np.asarray(a, dtype=float)
    scalar = a.ndim == 1
    A = np.atleast_2d(a)
    B = np.atleast_1d(np.asarray(b, dtype=float))
    args = A @ ds.X.T + B[:, None]
    vals = eval_psi(psi, args)
    proj = A @ G.T
    out = np.abs(np.mean(proj * vals / rho, axis=1))
    return float(out[0]) if scalar else out


def _uniform_proposals(d: int, R: float, n: int, rng: np.random.Generator):
    A = _unit_rows(rng.standard_normal((n, d)), rng)
    b = rng.uniform(-R, R, size=n)
    return A, b


def sample_integral_density(
    ds: DataSet,
    psi: PsiTable,
    n: int,
    safety: float,
    rng: np.random.Generator,
    rho_mode: str = "constant",
    pilot_size: int = 10**4,
) -> tuple[NeuronSet, float]:
    """Rejection sampling of the integral density under a pilot-calibrated envelope.

    The envelope is ``safety`` times the density maximum over uniform pilot
    proposals (drawn from a dedicated sub-stream).  If a later proposal
    exceeds the envelope, the envelope is doubled and collection restarts.
    Raises :class:`AcceptanceCollapseError` when fewer than one in 1e4
    proposals is accepted over a 1e6-proposal window.  Returns the accepted
    neurons and the realized acceptance rate.
    """
    if safety < 1.0:
        raise ValueError("safety factor must be >= 1")
    pilot_rng = rng.spawn(1)[0]
    A_pilot, b_pilot = _uniform_proposals(ds.dim, ds.R, pilot_size, pilot_rng)
    envelope = safety * float(np.max(eval_integral_density(ds, psi, A_pilot, b_pilot, rho_mode)))
    if envelope <= 0.0:
        raise AllZeroGradientsError("integral density vanishes identically")

    batch = 8192
    accepted_a: list[np.ndarray] = []
    accepted_b: list[np.ndarray] = []
    n_accepted = 0
    n_proposed = 0
    while n_accepted < n:
        A, b = _uniform_proposals(ds.dim, ds.R, batch, rng)
        dens = eval_integral_density(ds, psi, A, b, rho_mode)
        peak = float(dens.max())
        if peak > envelope:
            envelope *= 2.0
            while envelope < peak:
                envelope *= 2.0
            logger.warning(
                "integral-density envelope violated (%.3g); doubled to %.3g, restarting",
                peak,
                envelope,
            )
            accepted_a.clear()
            accepted_b.clear()
            n_accepted = 0
            n_proposed = 0
            continue
        keep = rng.uniform(size=batch) < dens / envelope
        accepted_a.append(A[keep])
        accepted_b.append(b[keep])
        n_accepted += int(keep.sum())
        n_proposed += batch
        if n_proposed >= 10**6 and n_accepted / n_proposed < 1e-4:
            raise AcceptanceCollapseError(
                f"acceptance rate {n_accepted / n_proposed:.2e} over {n_proposed} proposals"
            )
    A = np.vstack(accepted_a)[:n]
    b = np.concatenate(accepted_b)[:n]
    return NeuronSet(A, b), n_accepted / n_proposed


def residual_schedule(kappa: float, n0: int, n_target: int) -> list[int]:
    """Cumulative stage sizes ``ceil(kappa^i n0)`` truncated at ``n_target``."""
    counts = []
    i = 0
    while True:
        c = min(math.ceil(kappa**i * n0), n_target)
        if counts and c <= counts[-1]:
            c = min(counts[-1] + 1, n_target)
        counts.append(c)
        if c >= n_target:
            return counts
        i += 1


def _sample_base(spec: SamplerSpec, ds: DataSet, n: int, rng: np.random.Generator) -> NeuronSet:
    if spec.kind == "local-gradient":
        return sample_local_gradient(ds, n, rng)
    if spec.kind == "nonlocal-gradient":
        return sample_nonlocal_gradient(ds, n, spec.delta_w, rng)
    raise ValueError(f"unsupported residual base {spec.kind!r}")


def sample_residual(
    ds: DataSet,
    base: SamplerSpec,
    n_target: int,
    kappa: float,
    n0: int,
    fit_callback: Callable[[NeuronSet], RidgeModel],
    rng: np.random.Generator,
) -> tuple[NeuronSet, RidgeModel]:
    """Stagewise sampling from the gradients of the current fit's residual.

    Stage 0 uses the data gradients.  Each later stage fits outer weights on
    all neurons so far (via ``fit_callback``, which performs the full
    cross-validated regression), subtracts the model gradient from the data
    gradients, and samples the next batch from the residual gradients.  An
    exactly fitted stage (all residual gradients zero) stops early with the
    current model.
    """
    _require_gradients(ds)
    if base.kind not in ("local-gradient", "nonlocal-gradient"):
        raise ValueError("residual base must be local-gradient or nonlocal-gradient")
    counts = residual_schedule(kappa, n0, n_target)
    neurons = _sample_base(base, ds, counts[0], rng)
    model: RidgeModel | None = None
    for target in counts[1:]:
        model = fit_callback(neurons)
        if model.activation.s == 1 and model.activation.delta == 0.0:
            raise DeltaZeroError("residual stages need delta > 0 to evaluate model gradients")
        resid = ds.G - eval_model_gradient(model, ds.X)
        try:
            fresh = _sample_base(base, ds.with_gradients(resid), target - len(neurons), rng)
        except (AllZeroGradientsError, ZeroTraceError):
            logger.info("residual gradients vanished at N=%d; stopping early", len(neurons))
            return neurons, model
        neurons = neurons.concat(fresh)
    return neurons, fit_callback(neurons)


@dataclass
class DrawResult:
    """Neurons plus per-strategy extras (acceptance rate, fitted model)."""

    neurons: NeuronSet
    accept_rate: float | None = None
    model: RidgeModel | None = None


def draw(
    spec: SamplerSpec,
    ds: DataSet,
    n: int,
    rng: np.random.Generator,
    psi_table: PsiTable | None = None,
    fit_callback: Callable[[NeuronSet], RidgeModel] | None = None,
) -> DrawResult:
    """Run the strategy described by ``spec`` and normalize the outputs."""
    if n < 1:
        raise ValueError("need at least one neuron")
    if spec.kind == "uniform":
        return DrawResult(sample_uniform(ds, n, rng))
    if spec.kind == "active-subspace":
        return DrawResult(sample_active_subspace(ds, n, rng))
    if spec.kind == "local-gradient":
        return DrawResult(sample_local_gradient(ds, n, rng))
    if spec.kind == "nonlocal-gradient":
        return DrawResult(sample_nonlocal_gradient(ds, n, spec.delta_w, rng))
    if spec.kind == "nonlocal-hessian":
        return DrawResult(sample_nonlocal_hessian(ds, n, spec.delta_w, rng))
    if spec.kind == "integral-density":
        if psi_table is None:
            raise ValueError("integral-density sampling needs a psi table")
        if psi_table.m != spec.order_m:
            raise ValueError(
                f"psi table order {psi_table.m} does not match sampler order {spec.order_m}"
            )
        neurons, rate = sample_integral_density(
            ds, psi_table, n, spec.safety, rng, rho_mode=spec.rho_mode
        )
        return DrawResult(neurons, accept_rate=rate)
    if spec.kind == "residual":
        if fit_callback is None:
            raise ValueError("residual sampling needs a regression callback")
        neurons, model = sample_residual(
            ds, spec.base, n, spec.kappa, spec.n0, fit_callback, rng
        )
        return DrawResult(neurons, model=model)
    raise ValueError(f"unknown sampler kind {spec.kind!r}")


def export_weights_text(neurons: NeuronSet, path) -> None:
    """Write one neuron per line, ``a_1 ... a_d b``, 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(len(neurons)):
            row = np.append(neurons.a[i], neurons.b[i])
            fh.write(" ".join(format(v, ".17g") for v in row) + "\n")
