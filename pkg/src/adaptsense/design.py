"""A-optimal continuous design over a finite measurement ensemble.

Given the restricted operator ``B = A @ Psi_support`` (one row per candidate
measurement), the relaxed design problem is

    minimize    trace((B^H diag(w) B)^{-1})
    subject to  w >= 0,  sum(w) <= m

which is convex in ``w``. It is solved by projected descent with Armijo
backtracking: projected Newton steps on the free weights where possible,
Barzilai-Borwein projected gradient steps otherwise. Weights are then turned
into a discrete plan by sampling ``m`` rows with replacement from ``w/m``,
rejecting draws whose restricted matrix loses rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .recovery import UnidentifiableSupportError

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITERS = 5000
DEFAULT_MAX_REJECTS = 100
RANK_RTOL = 1e-10
# stop once STALL_WINDOW accepted steps improve f by less than STALL_RTOL*tol relative
STALL_WINDOW = 50
STALL_RTOL = 1e-2
ARMIJO = 1e-4
# weights below ACTIVE_EPS*m/n (or the projected-gradient norm) may be held at zero
ACTIVE_EPS = 1e-5


@dataclass(frozen=True)
class DesignWeights:
    weights: np.ndarray
    budget: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise ValueError("weights must be a vector")
        if self.budget <= 0:
            raise ValueError(f"budget must be positive, got {self.budget}")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if w.sum() > self.budget + 1e-9 * max(1.0, self.budget):
            raise ValueError(f"weights sum {w.sum()} exceeds budget {self.budget}")
        object.__setattr__(self, "weights", w)

    @property
    def trace(self) -> float:
        return float(self.weights.sum())


@dataclass
class DesignSolution:
    """Solver output: the best weights plus the accepted-iterate objective history."""

    design: DesignWeights
    objective: float
    history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


@dataclass(frozen=True)
class MeasurementPlan:
    """A length-``m`` sequence of ensemble row indices (repeats allowed)."""

    rows: np.ndarray
    n: int
    draws: int = 1  # plans drawn before this one was accepted, including itself

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        if rows.size and (rows.min() < 0 or rows.max() >= self.n):
            raise ValueError(f"plan row index out of range for n={self.n}")
        object.__setattr__(self, "rows", rows)

    @property
    def m(self) -> int:
        return self.rows.size

    def realized_matrix(self, ensemble_matrix: np.ndarray) -> np.ndarray:
        """Sensing matrix ``A'`` (or ``A' Psi`` when given ``A Psi``) selected by this plan."""
        return np.asarray(ensemble_matrix)[self.rows]


def numerical_rank(mat: np.ndarray, rtol: float = RANK_RTOL) -> int:
    mat = np.atleast_2d(mat)
    if mat.size == 0:
        return 0
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.count_nonzero(sv > rtol * sv[0]))


def _gram(w: np.ndarray, B: np.ndarray) -> np.ndarray:
    return (B.conj().T * w) @ B


def _inverse_gram(w: np.ndarray, B: np.ndarray) -> np.ndarray | None:
    gram = _gram(w, B)
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return None
    diag = np.abs(np.diag(chol))
    # cond(M) ~ (max/min diag of its Cholesky factor)^2; 1e-7 here means cond ~ 1e14
    if not diag.min() > 1e-7 * diag.max():
        return None
    inv_chol = np.linalg.inv(chol)
    return inv_chol.conj().T @ inv_chol


def _weights_of(weights) -> np.ndarray:
    return weights.weights if isinstance(weights, DesignWeights) else np.asarray(weights, dtype=float)


def _objective_and_inverse(w: np.ndarray, B: np.ndarray) -> tuple[float, np.ndarray | None]:
    inv = _inverse_gram(w, B)
    if inv is None:
        return np.inf, None
    val = float(np.trace(inv).real)
    if not (np.isfinite(val) and val > 0):
        return np.inf, None
    return val, inv


def _gradient_from_inverse(B: np.ndarray, inv: np.ndarray) -> np.ndarray:
    proj = B @ inv
    return -(proj.real**2 + proj.imag**2).sum(axis=1) if np.iscomplexobj(proj) else -(proj**2).sum(axis=1)


def design_objective(weights, B: np.ndarray) -> float:
    """``trace((B^H diag(w) B)^{-1})``; ``+inf`` when the weighted Gram matrix is singular."""
    return _objective_and_inverse(_weights_of(weights), np.asarray(B))[0]


def design_gradient(weights, B: np.ndarray) -> np.ndarray:
    """Partial derivatives ``-b_i M^{-2} b_i^H = -||b_i M^{-1}||^2`` with ``M = B^H diag(w) B``."""
    B = np.asarray(B)
    inv = _inverse_gram(_weights_of(weights), B)
    if inv is None:
        raise UnidentifiableSupportError("weighted Gram matrix is singular")
    return _gradient_from_inverse(B, inv)


def project_capped_simplex(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) <= radius}`` (sort-based simplex projection)."""
    v = np.asarray(v, dtype=float)
    clipped = np.maximum(v, 0.0)
    if clipped.sum() <= radius:
        return clipped
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _newton_direction(
    B: np.ndarray, inv: np.ndarray, w: np.ndarray, g: np.ndarray, pg: float, m: float
) -> np.ndarray | None:
    """Newton step restricted to the free weights, keeping ``sum(w)`` fixed.

    A weight is held at its bound when it is (nearly) zero and the gradient,
    shifted by the multiplier estimate of the budget constraint, pushes it
    outward. The Hessian of ``trace(M^{-1})`` has entries
    ``2 Re[(b_i M^{-1} b_j^H)(b_j M^{-2} b_i^H)]`` and rank at most ``2 s^2``,
    so the step is only attempted when the free set is no larger than that.
    """
    n, s = B.shape
    near_zero = w <= min(ACTIVE_EPS * m / n, pg)
    if near_zero.all():
        return None
    nu = -float(np.mean(g[~near_zero]))
    free = np.flatnonzero(~near_zero | (g + nu < 0))
    k = free.size
    if k < 2 or k > 2 * s * s:
        return None
    bf = B[free]
    left = bf @ inv
    p_mat = left @ bf.conj().T
    q_mat = left @ left.conj().T
    hess = 2.0 * np.real(p_mat * q_mat.T)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = hess + (1e-12 * np.trace(hess) / k) * np.eye(k)
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[:k] = -g[free]
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    d = np.zeros(n)
    d[free] = sol[:k]
    return d


def solve_relaxation(
    B: np.ndarray,
    m: float,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    rng: np.random.Generator | None = None,
    method: str = "newton",
) -> DesignSolution:
    """Minimize the A-optimal objective over ``{w >= 0, sum(w) <= m}``.

    Starts from uniform weights ``m/n`` with 1% multiplicative jitter. Every
    iterate is the projection of a trial point back onto the feasible set,
    accepted only under an Armijo decrease test, so the objective history is
    non-increasing. With ``method="newton"`` a projected Newton step on the
    free weights is tried first; the fallback (and ``method="pgd"``) is a
    projected gradient step with Barzilai-Borwein initial length and halving
    backtracking. Stops when ``||w - P(w - grad)|| <= tol*(1 + f)``, when the
    objective improves by less than ``STALL_RTOL*tol`` relative over
    ``STALL_WINDOW`` accepted steps, or after ``max_iters``.

    Raises
    ------
    UnidentifiableSupportError
        If ``B`` does not have full column rank.
    """
    if method not in ("newton", "pgd"):
        raise ValueError(f"unknown method {method!r}")
    B = np.atleast_2d(np.asarray(B))
    n, s = B.shape
    if m <= 0:
        raise ValueError(f"budget must be positive, got {m}")
    if numerical_rank(B) < s:
        raise UnidentifiableSupportError("support not identifiable from ensemble: restricted operator is rank deficient")
    if rng is None:
        rng = np.random.default_rng(0)

    w = project_capped_simplex(np.full(n, m / n) * (1.0 + 0.01 * rng.uniform(-1.0, 1.0, size=n)), m)
    f, inv = _objective_and_inverse(w, B)
    if inv is None:
        w = np.full(n, m / n)
        f, inv = _objective_and_inverse(w, B)
    g = _gradient_from_inverse(B, inv)
    history = [f]
    step = (m / n) / max(np.linalg.norm(g), 1e-300)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        pg = float(np.linalg.norm(w - project_capped_simplex(w - g, m)))
        if pg <= tol * (1.0 + abs(f)):
            converged = True
            break
        accepted = False
        d = _newton_direction(B, inv, w, g, pg, m) if method == "newton" else None
        if d is not None:
            t = 1.0
            for _ in range(30):
                w_new = project_capped_simplex(w + t * d, m)
                f_new, inv_new = _objective_and_inverse(w_new, B)
                if f_new <= f + ARMIJO * float(g @ (w_new - w)) and f_new <= f:
                    accepted = True
                    break
                t *= 0.5
        if not accepted:
            t = step
            for _ in range(60):
                w_new = project_capped_simplex(w - t * g, m)
                f_new, inv_new = _objective_and_inverse(w_new, B)
                if f_new <= f + ARMIJO * float(g @ (w_new - w)):
                    accepted = True
                    break
                t *= 0.5
        if not accepted:
            converged = True
            break
        g_new = _gradient_from_inverse(B, inv_new)
        sk, yk = w_new - w, g_new - g
        sy = float(sk @ yk)
        step = float(sk @ sk) / sy if sy > 0 else 2.0 * t
        w, f, g, inv = w_new, f_new, g_new, inv_new
        history.append(f)
        if len(history) > STALL_WINDOW and history[-STALL_WINDOW - 1] - f <= STALL_RTOL * tol * f:
            converged = True
            break
    w = np.minimum(w, m)
    return DesignSolution(DesignWeights(w, m), f, history, it, converged)


def sampling_pmf(weights) -> np.ndarray:
    """Row probabilities ``w_i / sum(w)`` (equal to ``w_i/m`` when the budget binds)."""
    w = _weights_of(weights)
    total = w.sum()
    if not total > 0:
        raise ValueError("weights are all zero; no sampling distribution")
    p = w / total
    return p / p.sum()


def draw_plan(
    pmf: np.ndarray,
    m: int,
    B: np.ndarray,
    rng: np.random.Generator,
    max_rejects: int = DEFAULT_MAX_REJECTS,
) -> MeasurementPlan:
    """Draw ``m`` rows i.i.d. from ``pmf``, redrawing until ``B[rows]`` has rank ``s``."""
    B = np.atleast_2d(np.asarray(B))
    s = B.shape[1]
    if m < s:
        raise ValueError(f"need at least s={s} measurements, got m={m}")
    pmf = np.asarray(pmf, dtype=float)
    n = pmf.size
    for attempt in range(1, max_rejects + 2):
        rows = rng.choice(n, size=m, p=pmf)
        if numerical_rank(B[np.unique(rows)]) >= s:
            return MeasurementPlan(rows, n, draws=attempt)
    raise UnidentifiableSupportError(f"design cannot identify support: {max_rejects} rank-deficient draws")


def oracle_mse(plan: MeasurementPlan, restricted: np.ndarray, sigma2: float) -> float:
    """Expected squared error ``sigma2 * ||(A' Psi_L)^+||_F^2`` of the pseudoinverse estimator.

    ``restricted`` is the full-ensemble restricted operator ``A Psi_L`` (n x s);
    the plan selects its rows.
    """
    a = plan.realized_matrix(restricted)
    sv = np.linalg.svd(a, compute_uv=False)
    if sv.size < a.shape[1] or sv[-1] <= RANK_RTOL * sv[0]:
        raise UnidentifiableSupportError("realized restricted operator is rank deficient")
    return float(sigma2 * np.sum(1.0 / sv**2))
