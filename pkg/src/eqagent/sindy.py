"""Sparse regression for dynamics.

Builds polynomial/derivative feature libraries, runs sequential
thresholded least squares (STLSQ), and optionally restricts the
coefficient matrix W to the equivariant subspace {W : W B = A W}
induced by a Lie generator A, where B is the generator's action on the
library features.

Conventions: features theta_j are functions of the state (and, for
PDEs, of spatial-derivative columns); the fitted model is
y_i = sum_j W[i, j] * theta_j.  The action matrix stores the expansion
of the Lie derivative of each feature in its rows:
v_A(theta_j) = sum_m B[j, m] * theta_m.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .datasets import DERIV_SUFFIXES, DatasetBundle
from .evaluation import mape
from .expressions import Expression, linear_combination

__all__ = [
    "LibrarySpec",
    "FeatureDescriptor",
    "SindyModel",
    "MissingDerivativeColumnError",
    "NonClosedLibraryError",
    "build_library",
    "stlsq",
    "build_action_matrix",
    "equivariant_nullspace",
    "fit_sindy",
]

_NULLSPACE_RTOL = 1e-10


class MissingDerivativeColumnError(Exception):
    pass


class NonClosedLibraryError(Exception):
    """The Lie derivative of a feature leaves the library span."""


@dataclass(frozen=True)
class LibrarySpec:
    polynomial_degree: int = 3
    derivative_order: int = 2  # PDE bundles only
    include_constant: bool = True
    normalize_columns: bool = False
    threshold: float = 0.05

    def __post_init__(self):
        if self.polynomial_degree < 0:
            raise ValueError("polynomial_degree must be >= 0")
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")


@dataclass(frozen=True)
class FeatureDescriptor:
    """One library term: a monomial in the states times at most one
    spatial-derivative column.

    exponents: per-state monomial exponents (all zero for the constant)
    deriv: None, or (state index, suffix) naming a derivative column
    """

    exponents: tuple
    deriv: tuple | None = None

    def degree(self) -> int:
        return sum(self.exponents)

    def render(self, states) -> str:
        parts = []
        for i, e in enumerate(self.exponents):
            parts.extend([states[i]] * e)
        if self.deriv is not None:
            i, sfx = self.deriv
            parts.append(f"{states[i]}_{sfx}")
        return "*".join(parts) if parts else "1"

    def to_expression(self, states) -> Expression | None:
        factors = []
        for i, e in enumerate(self.exponents):
            factors.extend([Expression.var(states[i])] * e)
        if self.deriv is not None:
            i, sfx = self.deriv
            factors.append(Expression.var(f"{states[i]}_{sfx}"))
        if not factors:
            return None  # the constant feature
        expr = factors[0]
        for f in factors[1:]:
            expr = Expression.binary("*", expr, f)
        return expr

    def evaluate(self, env: dict, states) -> np.ndarray:
        val = None
        for i, e in enumerate(self.exponents):
            if e:
                v = np.asarray(env[states[i]], dtype=np.float64) ** e
                val = v if val is None else val * v
        if self.deriv is not None:
            i, sfx = self.deriv
            v = np.asarray(env[f"{states[i]}_{sfx}"], dtype=np.float64)
            val = v if val is None else val * v
        return val


@dataclass
class SindyModel:
    W: np.ndarray  # (q, p)
    descriptors: list
    states: list
    target_names: list
    spec: LibrarySpec
    diagnostics: dict = field(default_factory=dict)
    lie_generator: np.ndarray | None = None

    @property
    def support(self) -> np.ndarray:
        return self.W != 0.0

    def to_expressions(self) -> list:
        out = []
        for row in self.W:
            terms = [
                (float(c), d.to_expression(self.states))
                for c, d in zip(row, self.descriptors)
                if c != 0.0
            ]
            out.append(linear_combination(terms))
        return out

    def equations(self) -> list:
        return [str(e) for e in self.to_expressions()]

    def predict(self, theta: np.ndarray) -> np.ndarray:
        return theta @ self.W.T


# ---------------------------------------------------------------------------
# Library construction
# ---------------------------------------------------------------------------

def monomial_descriptors(q: int, degree: int, include_constant: bool = True):
    out = []
    if include_constant:
        out.append(FeatureDescriptor((0,) * q))
    for d in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(q), d):
            exps = [0] * q
            for i in combo:
                exps[i] += 1
            out.append(FeatureDescriptor(tuple(exps)))
    return out


def library_descriptors(q: int, spec: LibrarySpec, with_derivatives: bool):
    descs = monomial_descriptors(q, spec.polynomial_degree, spec.include_constant)
    if with_derivatives and spec.derivative_order >= 1:
        for sfx, order in DERIV_SUFFIXES:
            if order > spec.derivative_order:
                continue
            for i in range(q):
                descs.append(FeatureDescriptor((0,) * q, (i, sfx)))
        # degree-1 monomial x first-derivative products keep the RD RHS
        # in-library without blowing up p
        for sfx, order in DERIV_SUFFIXES:
            if order != 1:
                continue
            for m in range(q):
                for i in range(q):
                    exps = [0] * q
                    exps[m] = 1
                    descs.append(FeatureDescriptor(tuple(exps), (i, sfx)))
    return descs


def build_library(bundle: DatasetBundle, spec: LibrarySpec):
    """Feature matrix and descriptors for a bundle.

    Returns (theta, descriptors) where theta has shape (n_rows, p).
    """
    states = bundle.state_names
    q = len(states)
    is_pde = bundle.meta.get("kind") == "pde"
    descs = library_descriptors(q, spec, with_derivatives=is_pde)

    env = bundle.env()
    if is_pde and spec.derivative_order >= 1:
        for d in descs:
            if d.deriv is not None:
                name = f"{states[d.deriv[0]]}_{d.deriv[1]}"
                if name not in env:
                    raise MissingDerivativeColumnError(
                        f"bundle lacks derivative column {name!r}"
                    )
    n = bundle.n_rows
    theta = np.ones((n, len(descs)))
    for j, d in enumerate(descs):
        col = d.evaluate(env, states)
        if col is not None:
            theta[:, j] = col
    return theta, descs


# ---------------------------------------------------------------------------
# Sequential thresholded least squares
# ---------------------------------------------------------------------------

def _masked_lstsq(theta: np.ndarray, y: np.ndarray, active: np.ndarray):
    """Least squares restricted to active columns (min-norm on rank
    deficiency).  Returns (w_full, rank_deficient)."""
    w = np.zeros(theta.shape[1])
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return w, False
    sol, _, rank, _ = np.linalg.lstsq(theta[:, idx], y, rcond=None)
    w[idx] = sol
    return w, rank < idx.size


def stlsq(
    theta: np.ndarray,
    targets: np.ndarray,
    threshold: float,
    normalize_columns: bool = False,
    max_rounds: int = 10,
    descriptors=None,
    states=None,
    target_names=None,
    spec: LibrarySpec | None = None,
) -> SindyModel:
    """Sequential thresholded least squares.

    Alternates plain least squares with hard thresholding of small
    coefficients until the support stabilizes.  With
    ``normalize_columns`` the solve (and the threshold comparison)
    happens in unit-l2-column coordinates and coefficients are rescaled
    back afterwards.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if targets.shape[0] == 1 and theta.shape[0] != 1:
        targets = targets.T
    n, p = theta.shape
    q = targets.shape[1]
    if n < p:
        raise ValueError(f"need at least as many rows ({n}) as columns ({p})")

    norms = np.ones(p)
    if normalize_columns:
        norms = np.linalg.norm(theta, axis=0)
        norms[norms == 0.0] = 1.0
    theta_n = theta / norms

    W = np.zeros((q, p))
    rank_deficient = False
    support_sizes = []
    for i in range(q):
        active = np.ones(p, dtype=bool)
        w = np.zeros(p)
        for _ in range(max_rounds):
            w, rd = _masked_lstsq(theta_n, targets[:, i], active)
            rank_deficient |= rd
            new_active = active & (np.abs(w) >= threshold)
            support_sizes.append(int(np.count_nonzero(active)))
            if new_active.sum() == active.sum():
                break
            active = new_active
        w[~active] = 0.0
        w[np.abs(w) < threshold] = 0.0
        W[i] = w
    W = W / norms  # rescale back to raw-feature coordinates

    preds = theta @ W.T
    diagnostics = {
        "residual": float(np.sum((targets - preds) ** 2)),
        "train_mape": mape(targets, preds),
        "rank_deficient": rank_deficient,
        "all_pruned": bool(np.all(W == 0.0)),
        "support_sizes": support_sizes,
        "constrained": False,
    }
    return SindyModel(
        W=W,
        descriptors=list(descriptors) if descriptors is not None else [],
        states=list(states) if states is not None else [],
        target_names=list(target_names) if target_names is not None else [],
        spec=spec if spec is not None else LibrarySpec(threshold=threshold),
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Equivariance machinery
# ---------------------------------------------------------------------------

def _lie_derivative_terms(desc: FeatureDescriptor, A: np.ndarray):
    """Expansion of v_A(theta) as {descriptor: coefficient}."""
    q = len(desc.exponents)
    out: dict = {}

    def add(d: FeatureDescriptor, c: float):
        if c != 0.0:
            out[d] = out.get(d, 0.0) + c

    # action on the monomial part
    for i in range(q):
        a_i = desc.exponents[i]
        if a_i == 0:
            continue
        for k in range(q):
            exps = list(desc.exponents)
            exps[i] -= 1
            exps[k] += 1
            add(FeatureDescriptor(tuple(exps), desc.deriv), A[i, k] * a_i)
    # action on the derivative factor: linear actions on the dependent
    # variables prolong identically to every derivative tier
    if desc.deriv is not None:
        i, sfx = desc.deriv
        for k in range(q):
            add(FeatureDescriptor(desc.exponents, (k, sfx)), A[i, k])
    return out


def build_action_matrix(descriptors, A: np.ndarray) -> np.ndarray:
    """B with rows holding the library-coordinate expansion of the Lie
    derivative of each feature: v_A(theta_j) = sum_m B[j, m] theta_m."""
    A = np.asarray(A, dtype=np.float64)
    p = len(descriptors)
    index = {d: j for j, d in enumerate(descriptors)}
    B = np.zeros((p, p))
    for j, d in enumerate(descriptors):
        for image, coef in _lie_derivative_terms(d, A).items():
            m = index.get(image)
            if m is None:
                raise NonClosedLibraryError(
                    f"v_A({d.render([f'x{i + 1}' for i in range(len(d.exponents))])}) "
                    f"produces a term outside the library"
                )
            B[j, m] += coef
    return B


def _vec(W: np.ndarray) -> np.ndarray:
    return W.reshape(-1, order="F")


def _unvec(v: np.ndarray, q: int, p: int) -> np.ndarray:
    return v.reshape((q, p), order="F")


def equivariant_nullspace(B: np.ndarray, A: np.ndarray, rtol: float = _NULLSPACE_RTOL):
    """Orthonormal basis of {vec(W) : W B = A W}.

    Computed from the SVD of the Kronecker-structured operator
    B^T (x) I - I (x) A acting on column-major vec(W).  Returns an array
    of shape (q*p, dim); dim may be zero.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    q = A.shape[0]
    p = B.shape[0]
    M = np.kron(B.T, np.eye(q)) - np.kron(np.eye(p), A)
    _, s, Vt = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return np.eye(q * p)
    null_mask = s <= rtol * smax
    basis = Vt[len(s) - int(np.count_nonzero(null_mask)):].T if null_mask.any() else np.zeros((q * p, 0))
    return basis


def _constrained_lstsq(theta, Y, N, q, p, zero_mask=None):
    """Least squares over vec(W) in span(N), optionally with entries
    forced to zero.  Returns W (q, p)."""
    d = N.shape[1]
    if d == 0:
        return np.zeros((q, p))
    Z = np.eye(d)
    if zero_mask is not None and zero_mask.any():
        rows = N[_vec(zero_mask).nonzero()[0], :]
        _, s, Vt = np.linalg.svd(rows, full_matrices=True)
        tol = (s[0] * _NULLSPACE_RTOL) if s.size else 0.0
        rank = int(np.count_nonzero(s > tol))
        Z = Vt[rank:].T
        if Z.shape[1] == 0:
            return np.zeros((q, p))
    cols = N @ Z  # (qp, d')
    G = np.empty((theta.shape[0] * q, cols.shape[1]))
    for k in range(cols.shape[1]):
        Wk = _unvec(cols[:, k], q, p)
        G[:, k] = (theta @ Wk.T).reshape(-1, order="F")
    c, _, _, _ = np.linalg.lstsq(G, Y.reshape(-1, order="F"), rcond=None)
    W = _unvec(cols @ c, q, p)
    if zero_mask is not None:
        W = W.copy()
        W[zero_mask] = 0.0  # exact zeros (solve already satisfies this to fp)
    return W


def fit_sindy(
    bundle: DatasetBundle,
    spec: LibrarySpec | None = None,
    use_symmetry: bool = False,
    lie_generator=None,
    max_rounds: int = 10,
):
    """Fit a sparse dynamics model; returns (SindyModel, expressions).

    The unconstrained path is plain STLSQ.  With ``use_symmetry`` the
    solve is restricted to the equivariant subspace of the given
    generator, and sequential thresholding alternates between hard
    zero-pattern constraints and re-solving jointly inside the subspace.
    """
    spec = spec or LibrarySpec()
    states = bundle.state_names
    target_names = [f"{s}_t" for s in states]
    missing = [t for t in target_names if t not in bundle.names()]
    if missing:
        raise ValueError(f"bundle lacks target columns {missing}")
    theta, descs = build_library(bundle, spec)
    Y = bundle.matrix(target_names)
    q, p = len(states), len(descs)

    if not use_symmetry:
        model = stlsq(
            theta,
            Y,
            spec.threshold,
            normalize_columns=spec.normalize_columns,
            max_rounds=max_rounds,
            descriptors=descs,
            states=states,
            target_names=target_names,
            spec=spec,
        )
        return model, model.to_expressions()

    if lie_generator is None:
        raise ValueError("use_symmetry requires a lie_generator")
    A = np.asarray(lie_generator, dtype=np.float64)
    if A.shape != (q, q):
        raise ValueError(f"lie_generator must be {q}x{q}, got {A.shape}")

    norms = np.ones(p)
    if spec.normalize_columns:
        norms = np.linalg.norm(theta, axis=0)
        norms[norms == 0.0] = 1.0
    theta_n = theta / norms

    B = build_action_matrix(descs, A)
    # theta_n_j = theta_j / s_j transforms with B~ = S^-1 B S
    B_n = B * (norms[np.newaxis, :] / norms[:, np.newaxis])
    N = equivariant_nullspace(B_n, A)
    diagnostics = {"constrained": True, "nullspace_dim": int(N.shape[1])}

    if N.shape[1] == 0:
        W = np.zeros((q, p))
        diagnostics["empty_nullspace"] = True
    else:
        zero_mask = np.zeros((q, p), dtype=bool)
        W_n = _constrained_lstsq(theta_n, Y, N, q, p)
        support_sizes = [int(np.count_nonzero(~zero_mask))]
        for _ in range(max_rounds):
            new_zero = zero_mask | (np.abs(W_n) < spec.threshold)
            if new_zero.sum() == zero_mask.sum():
                break
            zero_mask = new_zero
            W_n = _constrained_lstsq(theta_n, Y, N, q, p, zero_mask)
            support_sizes.append(int(np.count_nonzero(~zero_mask)))
        W_n = W_n.copy()
        W_n[np.abs(W_n) < spec.threshold] = 0.0
        W = W_n / norms
        diagnostics["support_sizes"] = support_sizes
        diagnostics["all_pruned"] = bool(np.all(W == 0.0))
        res = W @ B - A @ W
        diagnostics["equivariance_residual"] = float(np.linalg.norm(res))

    preds = theta @ W.T
    diagnostics["residual"] = float(np.sum((Y - preds) ** 2))
    diagnostics["train_mape"] = mape(Y, preds)
    model = SindyModel(
        W=W,
        descriptors=descs,
        states=states,
        target_names=target_names,
        spec=spec,
        diagnostics=diagnostics,
        lie_generator=A,
    )
    return model, model.to_expressions()
