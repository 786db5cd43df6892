"""Feature matrices, ridge solves, cross-validation, and model evaluation.

The outer-weight problem is ``min_c ||Phi c - y||^2 / (2K) + alpha N |c|^2 / 2``
whose solution can be written through either an N x N (primal) or K x K (dual)
positive-definite system; both paths share one factorization kernel here.
Optional low-degree polynomial columns (constant for s=1, affine for s=2) are
appended unregularized and eliminated by projection before the ridge solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .activation import ActivationSpec, eval_activation, eval_bump
from .geometry import NeuronSet

DEFAULT_ALPHA_GRID = np.logspace(0.0, -12.0, 25)  # descending, brackets both regimes


class NonsmoothModelError(ValueError):
    """Model gradient requested for the Heaviside activation (s=1, delta=0)."""


class FactorizationError(RuntimeError):
    """Cholesky factorization failed; should be impossible for alpha > 0."""


@dataclass(frozen=True)
class RidgeModel:
    """Sampled neurons with fitted outer weights ``c`` and polynomial part.

    ``poly`` holds the unregularized coefficients: ``[p0]`` for s=1,
    ``[p0, p1, ..., pd]`` for s=2 (constant plus linear), or ``None`` when the
    polynomial block is disabled.
    """

    neurons: NeuronSet
    c: np.ndarray
    poly: np.ndarray | None
    activation: ActivationSpec

    def __post_init__(self) -> None:
        if len(self.c) != len(self.neurons):
            raise ValueError("outer weight length does not match neuron count")
        if not np.all(np.isfinite(self.c)):
            raise ValueError("non-finite outer weights")
        if self.poly is not None and not np.all(np.isfinite(self.poly)):
            raise ValueError("non-finite polynomial coefficients")


@dataclass(frozen=True)
class FitReport:
    """Per-alpha errors from cross-validation and the chosen parameter."""

    alpha: float
    alpha_grid: np.ndarray
    train_rmse: np.ndarray
    val_rmse: np.ndarray
    chosen_index: int


def poly_width(activation: ActivationSpec, d: int, include_poly: bool = True) -> int:
    """Number of appended polynomial columns: 1 for s=1, d+1 for s=2, 0 if off."""
    if not include_poly:
        return 0
    return 1 if activation.s == 1 else d + 1


def _poly_columns(X: np.ndarray, activation: ActivationSpec) -> np.ndarray:
    ones = np.ones((X.shape[0], 1))
    if activation.s == 1:
        return ones
    return np.hstack([ones, X])


def feature_matrix(
    X, neurons: NeuronSet, activation: ActivationSpec, include_poly: bool = True
) -> np.ndarray:
    """Matrix ``Phi[k, n] = sigma(a_n . x_k + b_n)``, poly columns appended last."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pre = X @ neurons.a.T + neurons.b
    phi = eval_activation(activation, pre)
    if include_poly:
        phi = np.hstack([phi, _poly_columns(X, activation)])
    return phi


def _solve_spd(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - alpha > 0 prevents this
        raise FactorizationError(str(exc)) from exc


def ridge_solve(phi: np.ndarray, y: np.ndarray, alpha: float, n_poly: int = 0) -> np.ndarray:
    """Solve the ridge problem; the last ``n_poly`` columns are unregularized.

    Uses the primal N x N system when N <= K and the dual K x K system
    otherwise.  The polynomial block is eliminated by projecting features and
    targets onto its orthogonal complement, then recovered by least squares.
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite inputs to ridge solve")
    if not alpha > 0.0:
        raise ValueError(f"regularization must be positive, got {alpha}")

    K = phi.shape[0]
    n_neurons = phi.shape[1] - n_poly
    F = phi[:, :n_neurons]
    if n_poly:
        P = phi[:, n_neurons:]
        Q, Rfac = np.linalg.qr(P)
        F_perp = F - Q @ (Q.T @ F)
        y_perp = y - Q @ (Q.T @ y)
    else:
        F_perp, y_perp = F, y

    if n_neurons <= K:
        A = (F_perp.T @ F_perp) / K
        A[np.diag_indices_from(A)] += alpha * n_neurons
        c = _solve_spd(A, F_perp.T @ y_perp / K)
    else:
        A = (F_perp @ F_perp.T) / n_neurons
        A[np.diag_indices_from(A)] += alpha * K
        c = F_perp.T @ _solve_spd(A, y_perp) / n_neurons

    if not n_poly:
        return c
    q = scipy.linalg.solve_triangular(Rfac, Q.T @ (y - F @ c))
    return np.concatenate([c, q])


def rmse(pred, target) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    target = np.asarray(target, dtype=float).ravel()
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def cross_validate(
    ds_train,
    ds_val,
    neurons: NeuronSet,
    activation: ActivationSpec,
    alpha_grid=None,
    include_poly: bool = True,
) -> tuple[RidgeModel, FitReport]:
    """Grid-search the ridge parameter with the 5-percent rule.

    For each alpha the weights are fitted on the training data only and the
    error is evaluated on the training plus validation points.  The chosen
    alpha is the largest grid value whose validation error is within 5% of
    the smallest observed one.
    """
    grid = DEFAULT_ALPHA_GRID if alpha_grid is None else np.asarray(alpha_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("alpha grid is empty")
    if grid.size > 1 and not np.all(np.diff(grid) < 0):
        raise ValueError("alpha grid must be strictly descending")

    n_poly = poly_width(activation, ds_train.X.shape[1], include_poly)
    phi_train = feature_matrix(ds_train.X, neurons, activation, include_poly)
    phi_val = feature_matrix(ds_val.X, neurons, activation, include_poly)
    phi_union = np.vstack([phi_train, phi_val])
    y_union = np.concatenate([ds_train.y, ds_val.y])

    coefs = []
    train_err = np.empty(grid.size)
    val_err = np.empty(grid.size)
    for i, alpha in enumerate(grid):
        coef = ridge_solve(phi_train, ds_train.y, alpha, n_poly)
        coefs.append(coef)
        train_err[i] = rmse(phi_train @ coef, ds_train.y)
        val_err[i] = rmse(phi_union @ coef, y_union)

    chosen = int(np.argmax(val_err <= 1.05 * val_err.min()))  # first = largest alpha
    coef = coefs[chosen]
    n_neurons = len(neurons)
    model = RidgeModel(
        neurons=neurons,
        c=coef[:n_neurons],
        poly=coef[n_neurons:] if n_poly else None,
        activation=activation,
    )
    report = FitReport(
        alpha=float(grid[chosen]),
        alpha_grid=grid,
        train_rmse=train_err,
        val_rmse=val_err,
        chosen_index=chosen,
    )
    return model, report


def eval_model(model: RidgeModel, X) -> np.ndarray:
    """Predictions ``sum_n c_n sigma(a_n . x + b_n) + p0(x)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    include_poly = model.poly is not None
    phi = feature_matrix(X, model.neurons, model.activation, include_poly)
    coef = np.concatenate([model.c, model.poly]) if include_poly else model.c
    return phi @ coef


def eval_model_gradient(model: RidgeModel, X) -> np.ndarray:
    """Model gradient rows ``sum_n c_n sigma'(a_n . x + b_n) a_n``.

    For s=1 the derivative is the bump ``eta_delta`` (requires delta > 0);
    for s=2 it is the s=1 activation at the same delta, plus the linear part
    of the polynomial block.
    """
    act = model.activation
    if act.s == 1 and act.delta == 0.0:
        raise NonsmoothModelError("Heaviside model has no pointwise gradient")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pre = X @ model.neurons.a.T + model.neurons.b
    if act.s == 1:
        slope = eval_bump(act, pre)
    else:
        slope = eval_activation(ActivationSpec(s=1, delta=act.delta), pre)
    grads = (slope * model.c) @ model.neurons.a
    if act.s == 2 and model.poly is not None:
        grads = grads + model.poly[1:]
    return grads
