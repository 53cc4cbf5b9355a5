"""Population CCA models, parameter-space membership, and rate formulas."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateModelError, ModelConstructionError
from .matcore import write_matrix_csv

ZERO_ROW_TOL = 1e-12
MODEL_STREAM = 0


@dataclass(frozen=True)
class ParamSpace:
    """The constants ``(s_u, s_v, p, m, r, lambda; kappa, M)`` plus ``q``, ``r2`` and ``c0``."""

    p: int
    m: int
    r: int
    s_u: float
    s_v: float
    lam: float
    q: float = 0.0
    r2: int = 0
    kappa: float = 1.05
    M_bound: float = 3.0
    c0: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")
        if not 0.0 < self.c0 < 1.0:
            raise ValueError(f"c0 must lie in (0, 1), got {self.c0}")
        if self.kappa < 1.0:
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")
        if self.kappa * self.lam > 1.0 - self.c0 + 1e-12:
            raise ValueError(
                f"kappa*lambda = {self.kappa * self.lam:.4g} exceeds 1 - c0 = {1 - self.c0:.4g}"
            )
        if self.M_bound <= 1.0:
            raise ValueError(f"M must exceed 1, got {self.M_bound}")
        if not 0.0 <= self.q < 2.0:
            raise ValueError(f"q must lie in [0, 2), got {self.q}")
        if self.p < 1 or self.m < 1:
            raise ValueError("dimensions must be positive")
        if not 1 <= self.r <= min(self.p, self.m):
            raise ValueError(f"r must lie in [1, min(p, m)], got {self.r}")
        if self.r2 < 0 or self.r + self.r2 > min(self.p, self.m):
            raise ValueError(f"r + r2 = {self.r + self.r2} exceeds min(p, m)")
        if self.s_u < 0 or self.s_v < 0:
            raise ValueError("sparsity radii must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "ParamSpace":
        return cls(
            p=int(d["p"]),
            m=int(d["m"]),
            r=int(d["r"]),
            s_u=float(d["s_u"]),
            s_v=float(d["s_v"]),
            lam=float(d["lambda"]),
            q=float(d.get("q", 0.0)),
            r2=int(d.get("r2", 0)),
            kappa=float(d.get("kappa", 1.05)),
            M_bound=float(d.get("M", 3.0)),
            c0=float(d.get("c0", 0.05)),
        )

    def to_dict(self) -> dict:
        return {
            "p": self.p, "m": self.m, "r": self.r, "r2": self.r2, "q": self.q,
            "s_u": self.s_u, "s_v": self.s_v, "lambda": self.lam,
            "kappa": self.kappa, "M": self.M_bound, "c0": self.c0,
        }


@dataclass(frozen=True)
class Covariance:
    """Blocks of a joint covariance; ``n`` is ``None`` for population matrices."""

    sx: np.ndarray
    sy: np.ndarray
    sxy: np.ndarray
    n: int | None = None

    @property
    def p(self) -> int:
        return self.sx.shape[0]

    @property
    def m(self) -> int:
        return self.sy.shape[0]

    def joint(self) -> np.ndarray:
        return np.block([[self.sx, self.sxy], [self.sxy.T, self.sy]])


@dataclass(frozen=True, eq=False)
class CcaModel:
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    U: np.ndarray
    V: np.ndarray
    correlations: np.ndarray
    r: int
    support_u: tuple[int, ...]
    support_v: tuple[int, ...]
    sigma_joint: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.sigma_x.shape[0]

    @property
    def m(self) -> int:
        return self.sigma_y.shape[0]

    @property
    def U1(self) -> np.ndarray:
        return self.U[:, : self.r]

    @property
    def V1(self) -> np.ndarray:
        return self.V[:, : self.r]

    @property
    def U2(self) -> np.ndarray:
        return self.U[:, self.r :]

    @property
    def V2(self) -> np.ndarray:
        return self.V[:, self.r :]

    @property
    def leading_correlations(self) -> np.ndarray:
        return self.correlations[: self.r]

    @property
    def sigma_xy(self) -> np.ndarray:
        return self.sigma_joint[: self.p, self.p :]

    def truth(self) -> np.ndarray:
        """The estimand ``U1 V1'``."""
        return self.U1 @ self.V1.T

    def residual_cross(self) -> np.ndarray:
        """``Sigma_x U2 Lambda2 V2' Sigma_y``."""
        lam2 = self.correlations[self.r :]
        return self.sigma_x @ (self.U2 * lam2) @ self.V2.T @ self.sigma_y

    def population_cov(self) -> Covariance:
        return Covariance(self.sigma_x, self.sigma_y, self.sigma_xy, None)

    @classmethod
    def from_directions(cls, sigma_x, sigma_y, U, V, correlations, r: int) -> "CcaModel":
        """Assemble a model from explicit directions and check its invariants."""
        sigma_x = np.asarray(sigma_x, dtype=float)
        sigma_y = np.asarray(sigma_y, dtype=float)
        U = np.asarray(U, dtype=float).reshape(sigma_x.shape[0], -1)
        V = np.asarray(V, dtype=float).reshape(sigma_y.shape[0], -1)
        lam = np.asarray(correlations, dtype=float).ravel()
        if not (U.shape[1] == V.shape[1] == lam.size):
            raise ValueError("U, V and correlations disagree on the number of directions")
        if not 1 <= r <= lam.size:
            raise ValueError(f"r must lie in [1, {lam.size}], got {r}")
        if np.any(np.diff(lam) > 0) or lam.min() < 0 or lam.max() >= 1:
            raise ValueError("correlations must be nonincreasing in [0, 1)")
        sxy = sigma_x @ (U * lam) @ V.T @ sigma_y
        joint = np.block([[sigma_x, sxy], [sxy.T, sigma_y]])
        joint = 0.5 * (joint + joint.T)
        min_eig = float(np.linalg.eigvalsh(joint)[0])
        if min_eig < -1e-8:
            raise ModelConstructionError(
                f"joint covariance is not PSD (min eigenvalue {min_eig:.3e})"
            )
        support_u = tuple(int(i) for i in np.flatnonzero(np.linalg.norm(U[:, :r], axis=1) > 0))
        support_v = tuple(int(j) for j in np.flatnonzero(np.linalg.norm(V[:, :r], axis=1) > 0))
        model = cls(sigma_x, sigma_y, U, V, lam, int(r), support_u, support_v, joint)
        check_model(model)
        return model

    def export(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(directory / "sigma_x.csv", self.sigma_x)
        write_matrix_csv(directory / "sigma_y.csv", self.sigma_y)
        write_matrix_csv(directory / "U.csv", self.U)
        write_matrix_csv(directory / "V.csv", self.V)
        write_matrix_csv(directory / "lambda.csv", self.correlations.reshape(-1, 1))


def check_model(model: CcaModel, tol: float = 1e-8) -> None:
    k = model.correlations.size
    gx = model.U.T @ model.sigma_x @ model.U
    gy = model.V.T @ model.sigma_y @ model.V
    if np.max(np.abs(gx - np.eye(k))) > tol or np.max(np.abs(gy - np.eye(k))) > tol:
        raise ModelConstructionError("directions are not normalized: U'Sx U != I or V'Sy V != I")
    off_u = np.setdiff1d(np.arange(model.p), model.support_u)
    off_v = np.setdiff1d(np.arange(model.m), model.support_v)
    if np.any(model.U1[off_u] != 0) or np.any(model.V1[off_v] != 0):
        raise ModelConstructionError("leading directions have rows outside their supports")


def weak_lq_radius(U, q: float) -> float:
    """``max_j j * ||row_(j)||^q`` over the decreasingly ordered row norms (``0^q = 0``)."""
    if not 0.0 <= q < 2.0:
        raise ValueError(f"q must lie in [0, 2), got {q}")
    U = np.asarray(U, dtype=float)
    norms = np.linalg.norm(U.reshape(U.shape[0], -1), axis=1)
    if q == 0:
        return float(np.count_nonzero(norms > ZERO_ROW_TOL))
    norms = np.sort(norms)[::-1]
    j = np.arange(1, norms.size + 1)
    vals = np.where(norms > 0, j * norms**q, 0.0)
    return float(vals.max()) if vals.size else 0.0


@dataclass(frozen=True)
class EffectiveSparsity:
    k_u: int
    k_v: int
    x_u: float
    x_v: float


def _largest_feasible(bound, dim: int, tol: float = 1e-9) -> float:
    """Largest ``x`` in ``[0, dim]`` with ``x <= bound(x)``, by bisection.

    ``bound(x) - x`` is positive near 0 and has a single sign change.
    """
    if bound(float(dim)) >= dim:
        return float(dim)
    lo, hi = 0.0, float(dim)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= bound(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _fixed_point(s: float, dim: int, n: int, space: ParamSpace, extra: float) -> float:
    nl2 = n * space.lam**2
    if space.q == 0:
        return float(min(s, dim))
    e = space.q / 2.0

    def bound(x):
        if x <= 0:
            return 0.0 if s == 0 else math.inf
        return s * (nl2 / (extra + math.log(math.e * dim / x))) ** e

    return _largest_feasible(bound, dim)


def effective_sparsity(space: ParamSpace, n: int) -> EffectiveSparsity:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    x_u = _fixed_point(space.s_u, space.p, n, space, extra=space.r)
    x_v = _fixed_point(space.s_v, space.m, n, space, extra=space.r)
    return EffectiveSparsity(_ceil(x_u), _ceil(x_v), x_u, x_v)


def _ceil(x: float) -> int:
    # absorb bisection noise just above an integer
    k = math.ceil(x - 1e-9)
    return max(k, 0)


def minimax_rate(space: ParamSpace, n: int) -> float:
    """The squared rate ``eps_n^2`` built from the effective sparsities."""
    es = effective_sparsity(space, n)
    ku, kv = es.k_u, es.k_v
    if ku < 1 or kv < 1:
        raise DegenerateModelError(f"effective sparsity is zero (k_u={ku}, k_v={kv})")
    p, m, r = space.p, space.m, space.r
    return (
        r * (ku + kv) + ku * math.log(math.e * p / ku) + kv * math.log(math.e * m / kv)
    ) / (n * space.lam**2)


def individual_sparsity(t: float, dim: int, space: ParamSpace, n: int) -> tuple[int, float]:
    """``(j, y)`` for column-wise sparsity radius ``t``."""
    nl2 = n * space.lam**2
    r = space.r
    if space.q == 0:
        y = float(min(t, dim))
    else:
        e = space.q / 2.0

        def bound(x):
            if x <= 0:
                return 0.0 if t == 0 else math.inf
            denom = math.log(math.e * dim / (r * x))
            if denom <= 0:
                return 0.0
            return t * (nl2 / denom) ** e

        y = _largest_feasible(bound, dim)
    return _ceil(y), y


def minimax_rate_individual(t_u: float, t_v: float, space: ParamSpace, n: int) -> float:
    ju, _ = individual_sparsity(t_u, space.p, space, n)
    jv, _ = individual_sparsity(t_v, space.m, space, n)
    if ju < 1 or jv < 1:
        raise DegenerateModelError(f"individual sparsity is zero (j_u={ju}, j_v={jv})")
    r = space.r
    return (
        r
        * (ju * math.log(math.e * space.p / (r * ju)) + jv * math.log(math.e * space.m / (r * jv)))
        / (n * space.lam**2)
    )


def effective_support(U1, k: int) -> tuple[int, ...]:
    """Indices of the ``k`` largest row norms, padded with the smallest-index zero rows."""
    U1 = np.asarray(U1, dtype=float)
    if not 0 <= k <= U1.shape[0]:
        raise ValueError(f"k must lie in [0, {U1.shape[0]}], got {k}")
    norms = np.linalg.norm(U1.reshape(U1.shape[0], -1), axis=1)
    order = np.lexsort((np.arange(norms.size), -norms))
    return tuple(sorted(int(i) for i in order[:k]))


# --- covariance families -----------------------------------------------------

def ar1_cov(dim: int, rho: float) -> np.ndarray:
    if not -1.0 < rho < 1.0:
        raise ValueError(f"AR(1) coefficient must lie in (-1, 1), got {rho}")
    idx = np.arange(dim)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def random_spd(rng: np.random.Generator, dim: int, cond: float) -> np.ndarray:
    """``Q diag(w) Q'`` with eigenvalues geometric in ``[cond^-1/2, cond^1/2]``."""
    if cond < 1.0:
        raise ValueError(f"condition number must be >= 1, got {cond}")
    Q, R = np.linalg.qr(rng.standard_normal((dim, dim)))
    Q = Q * np.sign(np.diag(R))
    w = np.sqrt(cond) ** np.linspace(-1.0, 1.0, dim) if dim > 1 else np.ones(1)
    S = (Q * w) @ Q.T
    return 0.5 * (S + S.T)


def make_cov(kind: str, dim: int, param, rng: np.random.Generator) -> np.ndarray:
    if kind == "identity":
        return np.eye(dim)
    if kind == "ar1":
        return ar1_cov(dim, 0.3 if param is None else float(param))
    if kind == "random_spd":
        return random_spd(rng, dim, 2.0 if param is None else float(param))
    raise ValueError(f"unknown covariance kind {kind!r}")


def _gram_schmidt(raw: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Orthonormalize columns in order in the inner product ``<a, b> = a' S b``."""
    out = np.zeros_like(raw)
    for j in range(raw.shape[1]):
        v = raw[:, j].copy()
        for _ in range(2):
            if j:
                v -= out[:, :j] @ (out[:, :j].T @ (S @ v))
        nrm2 = float(v @ S @ v)
        if nrm2 <= 1e-24 * max(1.0, float(raw[:, j] @ S @ raw[:, j])):
            raise ModelConstructionError(f"raw direction {j} is linearly dependent on earlier ones")
        out[:, j] = v / math.sqrt(nrm2)
    return out


def _canonical_signs(W: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(W), axis=0)
    signs = np.sign(W[idx, np.arange(W.shape[1])])
    signs[signs == 0] = 1.0
    return W * signs


def _raw_directions(rng, dim: int, support, r: int, r2: int) -> np.ndarray:
    raw = np.zeros((dim, r + r2))
    support = np.asarray(support, dtype=int)
    raw[support, :r] = rng.standard_normal((support.size, r))
    raw[:, r:] = rng.standard_normal((dim, r2))
    return raw


def build_model(
    space: ParamSpace,
    cov_kind: str = "identity",
    correlations: Sequence[float] | None = None,
    support_u: Sequence[int] | None = None,
    support_v: Sequence[int] | None = None,
    seed: int = 0,
    cov_param: float | None = None,
) -> CcaModel:
    """Draw a population model with sparse leading and dense residual directions.

    Leading columns get Gaussian entries on their supports and residual
    columns are dense; both sets are then Gram-Schmidt orthonormalized in the
    ``Sigma_x`` (resp. ``Sigma_y``) inner product, leading columns first, so
    the leading supports survive.
    """
    r, r2 = space.r, space.r2
    if correlations is None:
        correlations = leading_correlations(space) + [0.0] * r2
    lam = np.asarray(correlations, dtype=float).ravel()
    if lam.size != r + r2:
        raise ValueError(f"expected {r + r2} correlations, got {lam.size}")
    if np.any(np.diff(lam) > 0) or lam.min() < 0 or lam.max() >= 1:
        raise ValueError("correlations must be nonincreasing in [0, 1)")
    if lam[r - 1] < space.lam - 1e-12 or lam[0] > space.kappa * space.lam + 1e-12:
        raise ValueError(
            f"leading correlations must lie in [lambda, kappa*lambda] = "
            f"[{space.lam}, {space.kappa * space.lam}]"
        )
    support_u = _check_support(support_u, space.p, r, "support_u", _default_size(space.s_u, space))
    support_v = _check_support(support_v, space.m, r, "support_v", _default_size(space.s_v, space))

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), MODEL_STREAM])))
    sigma_x = make_cov(cov_kind, space.p, cov_param, rng)
    sigma_y = make_cov(cov_kind, space.m, cov_param, rng)
    U = _gram_schmidt(_raw_directions(rng, space.p, support_u, r, r2), sigma_x)
    V = _gram_schmidt(_raw_directions(rng, space.m, support_v, r, r2), sigma_y)
    U = _canonical_signs(U)
    V = _canonical_signs(V)
    U[np.setdiff1d(np.arange(space.p), support_u), :r] = 0.0
    V[np.setdiff1d(np.arange(space.m), support_v), :r] = 0.0

    sxy = sigma_x @ (U * lam) @ V.T @ sigma_y
    joint = np.block([[sigma_x, sxy], [sxy.T, sigma_y]])
    joint = 0.5 * (joint + joint.T)
    min_eig = float(np.linalg.eigvalsh(joint)[0])
    if min_eig < -1e-8:
        raise ModelConstructionError(
            f"joint covariance is not PSD (min eigenvalue {min_eig:.3e}); "
            "correlations too close to 1 for this geometry"
        )
    model = CcaModel(sigma_x, sigma_y, U, V, lam, r, support_u, support_v, joint)
    check_model(model)
    return model


def _default_size(s: float, space: ParamSpace) -> int:
    # exact sparsity fills floor(s) leading rows; otherwise stay at rank r
    return max(space.r, int(math.floor(s))) if space.q == 0 else space.r


def _check_support(support, dim: int, r: int, name: str, default: int | None = None) -> tuple[int, ...]:
    if support is None:
        support = range(min(dim, default or r))
    s = tuple(sorted(set(int(i) for i in support)))
    if len(s) < r:
        raise ValueError(f"{name} has {len(s)} indices, fewer than r={r}")
    if s[0] < 0 or s[-1] >= dim:
        raise ValueError(f"{name} indices must lie in [0, {dim})")
    return s


def leading_correlations(space: ParamSpace) -> list[float]:
    """Geometric spacing from ``kappa*lambda`` down to ``lambda``; just ``lambda`` when r = 1."""
    if space.r == 1:
        return [space.lam]
    return list(np.geomspace(space.kappa * space.lam, space.lam, space.r))


@dataclass(frozen=True)
class MembershipReport:
    sparsity: bool
    spectrum: bool
    correlations: bool
    radius_u: float
    radius_v: float
    spectrum_bounds: dict
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return self.sparsity and self.spectrum and self.correlations


def validate_membership(model: CcaModel, space: ParamSpace) -> MembershipReport:
    violations = []
    ru = weak_lq_radius(model.U1, space.q)
    rv = weak_lq_radius(model.V1, space.q)
    sparsity = ru <= space.s_u + 1e-9 and rv <= space.s_v + 1e-9
    if ru > space.s_u + 1e-9:
        violations.append(f"weak-lq radius of U1 is {ru:.4g} > s_u = {space.s_u}")
    if rv > space.s_v + 1e-9:
        violations.append(f"weak-lq radius of V1 is {rv:.4g} > s_v = {space.s_v}")

    ex = np.linalg.eigvalsh(model.sigma_x)
    ey = np.linalg.eigvalsh(model.sigma_y)
    bounds = {
        "sigma_x": float(ex[-1]), "sigma_x_inv": float(1.0 / ex[0]),
        "sigma_y": float(ey[-1]), "sigma_y_inv": float(1.0 / ey[0]),
    }
    spectrum = True
    for name, val in bounds.items():
        if not val <= space.M_bound:
            spectrum = False
            violations.append(f"||{name}||_op = {val:.4g} > M = {space.M_bound}")

    lam = model.leading_correlations
    upper = space.kappa * space.lam
    corr_ok = True
    if lam[0] > upper + 1e-12:
        corr_ok = False
        violations.append(f"lambda_1 = {lam[0]:.4g} > kappa*lambda = {upper:.4g}")
    if lam[-1] < space.lam - 1e-12:
        corr_ok = False
        violations.append(f"lambda_r = {lam[-1]:.4g} < lambda = {space.lam:.4g}")
    if np.any(np.diff(lam) > 0):
        corr_ok = False
        violations.append("leading correlations are not nonincreasing")
    if upper > 1 - space.c0 + 1e-12:
        corr_ok = False
        violations.append(f"kappa*lambda = {upper:.4g} > 1 - c0 = {1 - space.c0:.4g}")
    return MembershipReport(sparsity, spectrum, corr_ok, ru, rv, bounds, tuple(violations))


# --- JSON config ---------------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    space: ParamSpace
    cov_kind: str = "identity"
    rho_or_cond: float | None = None
    correlations: tuple[float, ...] | None = None
    support_u: tuple[int, ...] | None = None
    support_v: tuple[int, ...] | None = None
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        def tup(key, conv):
            v = d.get(key)
            return None if v is None else tuple(conv(x) for x in v)

        return cls(
            space=ParamSpace.from_dict(d),
            cov_kind=d.get("cov_kind", "identity"),
            rho_or_cond=d.get("rho_or_cond"),
            correlations=tup("correlations", float),
            support_u=tup("support_u", int),
            support_v=tup("support_v", int),
            seed=int(d.get("seed", 0)),
        )

    @classmethod
    def load(cls, path) -> "ModelConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = self.space.to_dict()
        d.update(
            cov_kind=self.cov_kind,
            rho_or_cond=self.rho_or_cond,
            correlations=None if self.correlations is None else list(self.correlations),
            support_u=None if self.support_u is None else list(self.support_u),
            support_v=None if self.support_v is None else list(self.support_v),
            seed=self.seed,
        )
        return d

    def build(self) -> CcaModel:
        return build_model(
            self.space,
            self.cov_kind,
            self.correlations,
            self.support_u,
            self.support_v,
            seed=self.seed,
            cov_param=self.rho_or_cond,
        )
