"""Pointwise linear algebra on the generalized tangent space T + T*.

Everything here acts on numpy arrays whose trailing axes carry the fiber
indices; any leading axes are treated as a batch (for instance the points of
a grid), so the same functions serve single fibers and whole fields.

Conventions
-----------
* A generalized vector is an array ``(..., 4n)``: the first ``2n`` entries are
  the tangent part, the last ``2n`` the cotangent part.
* A generalized endomorphism is an array ``(..., 4n, 4n)`` with blocks
  ``[[A, beta], [B, D]]`` acting as ``(X, xi) -> (A X + beta xi, B X + D xi)``.
* Two-tensors are stored as the matrix of the map ``T -> T*`` given by
  ``X -> F(X, .)``.  For a 2-form with components ``F_ab`` this matrix is
  ``F.T``.  With this choice ``omega_I = g @ I`` is the usual Kahler form
  ``g(I., .)`` and ``e^K`` adds ``i_X K`` to the cotangent part.
* Duals of endomorphisms are transposes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

ATOL = 1e-10
RTOL = 1e-10


class GeometryError(ValueError):
    """Raised when an input violates a structural precondition."""


def _T(M):
    return np.swapaxes(M, -1, -2)


def _eye_like(M):
    return np.broadcast_to(np.eye(M.shape[-1], dtype=M.dtype), M.shape)


def _maxnorm(M):
    return float(np.max(np.abs(M))) if np.size(M) else 0.0


def commutator(A, B):
    return A @ B - B @ A


def anticommutator(A, B):
    return A @ B + B @ A


def form_commutator(K, E):
    """``[K, E] = K E - E* K`` for a 2-tensor ``K`` and an endomorphism ``E``."""
    return K @ E - _T(E) @ K


def form_anticommutator(K, E):
    """``{K, E} = K E + E* K``."""
    return K @ E + _T(E) @ K


def _within(residual, scale, atol=ATOL, rtol=RTOL):
    return residual <= atol + rtol * scale


# -- generalized vectors and endomorphisms ------------------------------------


def split(v):
    """Split a generalized vector into (tangent, cotangent)."""
    m = v.shape[-1] // 2
    return v[..., :m], v[..., m:]


def join(X, xi):
    X, xi = np.broadcast_arrays(X, xi)
    if X.shape[-1] != xi.shape[-1]:
        raise GeometryError("tangent and cotangent parts differ in dimension")
    return np.concatenate([X, xi], axis=-1)


def blocks(E):
    """Return the four blocks ``(A, beta, B, D)`` of a generalized endomorphism."""
    m = E.shape[-1] // 2
    return E[..., :m, :m], E[..., :m, m:], E[..., m:, :m], E[..., m:, m:]


def from_blocks(A, beta, B, D):
    A, beta, B, D = np.broadcast_arrays(A, beta, B, D)
    top = np.concatenate([A, beta], axis=-1)
    bottom = np.concatenate([B, D], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def neutral_metric(m):
    """Matrix ``P`` of the pairing: ``<v, w> = v @ P @ w``, with ``2m = dim V``."""
    P = np.zeros((2 * m, 2 * m))
    P[:m, m:] = 0.5 * np.eye(m)
    P[m:, :m] = 0.5 * np.eye(m)
    return P


def pairing(v, w):
    """Neutral pairing ``1/2 (xi(Y) + eta(X))``."""
    v = np.asarray(v)
    w = np.asarray(w)
    if v.shape[-1] != w.shape[-1] or v.shape[-1] % 2:
        raise GeometryError(f"fiber dimension mismatch: {v.shape[-1]} vs {w.shape[-1]}")
    X, xi = split(v)
    Y, eta = split(w)
    return 0.5 * (np.sum(xi * Y, axis=-1) + np.sum(eta * X, axis=-1))


def pairing_skew_residual(E):
    """Max of ``<E v, w> + <v, E w>`` over frames, i.e. ``|P E + E^T P|``."""
    P = neutral_metric(E.shape[-1] // 2)
    return _maxnorm(P @ E + _T(E) @ P)


def check_skew(K, name="K"):
    K = np.asarray(K)
    res = _maxnorm(K + _T(K))
    if not _within(res, _maxnorm(K)):
        raise GeometryError(f"{name} is not skew (residual {res:.3e})")
    return K


def b_transform(K):
    """The shear ``e^K``: blocks ``(1, 0, K, 1)``."""
    K = check_skew(K)
    m = K.shape[-1]
    out = np.zeros(K.shape[:-2] + (2 * m, 2 * m), dtype=K.dtype)
    idx = np.arange(2 * m)
    out[..., idx, idx] = 1
    out[..., m:, :m] = K
    return out


def almost_complex_residual(E):
    return _maxnorm(E @ E + _eye_like(E))


def _require_almost_complex(E, name="J", tol=1e-8):
    res = almost_complex_residual(E)
    if res > tol:
        raise GeometryError(f"{name} is not almost complex (|{name}^2 + 1| = {res:.3e})")


def phi_k(J, K, check=True, eK=None):
    """Canonical deformation operator ``Phi_K(J) = J e^K J + e^K``.

    For ``J^2 = -1`` this equals the commutator ``[J, e^K J]`` and the result
    anticommutes with ``J``.  A precomputed ``eK`` skips the shear.
    """
    if check:
        _require_almost_complex(J)
    if eK is None:
        eK = b_transform(K)
    return J @ eK @ J + eK


def projectors(J):
    """Complexified projectors ``(pi_10, pi_01) = (1 - iJ)/2, (1 + iJ)/2``."""
    _require_almost_complex(J)
    one = _eye_like(J)
    return 0.5 * (one - 1j * J), 0.5 * (one + 1j * J)


def fourfold_projectors(J1, J2):
    """Projectors onto ``L1&L2, L1&L2bar, L1bar&L2, L1bar&L2bar``."""
    res = _maxnorm(commutator(J1, J2))
    if res > 1e-8:
        raise GeometryError(f"J1 and J2 do not commute (residual {res:.3e})")
    p1, q1 = projectors(J1)
    p2, q2 = projectors(J2)
    return p1 @ p2, p1 @ q2, q1 @ p2, q1 @ q2


def is_11(K, J, tol=ATOL):
    """Whether the 2-form ``K`` is of type (1,1) for ``J`` (``K J + J* K = 0``).

    Returns ``(flag, residual)`` where ``residual`` is the max-norm of
    ``K J + J* K``; the flag uses ``tol * max(1, |K|)``.
    """
    res = _maxnorm(K @ J + _T(J) @ K)
    return res <= tol * max(1.0, _maxnorm(K)), res


def project_11(K, J):
    """(1,1) part ``(K + J* K J) / 2`` of a 2-form."""
    return 0.5 * (K + _T(J) @ K @ J)


def generalized_metric_form(J1, J2):
    """Symmetric matrix of the bilinear form ``<-J1 J2 v, w>``."""
    P = neutral_metric(J1.shape[-1] // 2)
    M = P @ (-(J1 @ J2))
    return 0.5 * (M + _T(M))


def positivity_margin(J1, J2):
    """Smallest eigenvalue of ``<-J1 J2 ., .>`` relative to the largest."""
    w = np.linalg.eigvalsh(generalized_metric_form(J1, J2))
    return float(np.min(w[..., 0] / w[..., -1]))


def is_positive(S, rel=1e-10):
    w = np.linalg.eigvalsh(0.5 * (S + _T(S)))
    return bool(np.all(w[..., 0] > rel * w[..., -1]))


# -- bihermitian data ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BihermData:
    """Bihermitian tuple ``(g, b, I, J)``; arrays may carry leading batch axes."""

    g: np.ndarray
    b: np.ndarray
    I: np.ndarray  # noqa: E741
    J: np.ndarray

    @cached_property
    def omega_I(self):
        return self.g @ self.I

    @cached_property
    def omega_J(self):
        return self.g @ self.J

    @cached_property
    def g_inv(self):
        return np.linalg.inv(self.g)

    @cached_property
    def sigma(self):
        """Poisson tensor ``1/2 [I, J] g^-1`` as a map ``T* -> T``."""
        return 0.5 * commutator(self.I, self.J) @ self.g_inv

    @cached_property
    def Q(self):
        return -(self.I @ self.J)

    def _nondegenerate(self, cond_max=1e8):
        return bool(np.all(np.linalg.cond(commutator(self.I, self.J)) < cond_max))

    @property
    def F_plus(self):
        """``-2 g (I + J)^-1``, or ``None`` when ``[I, J]`` is degenerate."""
        if not self._nondegenerate():
            return None
        return -2.0 * self.g @ np.linalg.inv(self.I + self.J)

    @property
    def F_minus(self):
        if not self._nondegenerate():
            return None
        return -2.0 * self.g @ np.linalg.inv(self.I - self.J)

    @property
    def Omega(self):
        """Symplectic form ``sigma^-1``, or ``None`` when ``sigma`` is degenerate."""
        if not self._nondegenerate():
            return None
        return np.linalg.inv(self.sigma)

    def residuals(self):
        g, I, J = self.g, self.I, self.J
        return {
            "I^2+1": almost_complex_residual(I),
            "J^2+1": almost_complex_residual(J),
            "g sym": _maxnorm(g - _T(g)),
            "g(I,I)-g": _maxnorm(_T(I) @ g @ I - g),
            "g(J,J)-g": _maxnorm(_T(J) @ g @ J - g),
            "b skew": _maxnorm(self.b + _T(self.b)),
            "sigma skew": _maxnorm(self.sigma + _T(self.sigma)),
        }

    def validate(self, tol=1e-8):
        bad = {k: v for k, v in self.residuals().items() if v > tol * max(1.0, _maxnorm(self.g))}
        if bad:
            raise GeometryError(f"invalid bihermitian data: {bad}")
        if not is_positive(self.g):
            raise GeometryError("metric is not positive definite")
        return self


def gualtieri_map(bh: BihermData):
    """Generalized complex structures ``(J1, J2)`` of bihermitian data."""
    try:
        wI_inv = np.linalg.inv(bh.omega_I)
        wJ_inv = np.linalg.inv(bh.omega_J)
    except np.linalg.LinAlgError as exc:
        raise GeometryError("singular Kahler form") from exc
    I, J = bh.I, bh.J
    eb = b_transform(bh.b)
    emb = b_transform(-bh.b)
    out = []
    for s in (1.0, -1.0):
        U = 0.5 * from_blocks(I + s * J, -(wI_inv - s * wJ_inv), bh.omega_I - s * bh.omega_J, -_T(I + s * J))
        out.append(eb @ U @ emb)
    return out[0], out[1]


def extract_biherm(J1, J2, tol=1e-8):
    """Inverse of :func:`gualtieri_map`.

    Reads ``g`` from the top-right block of ``G = -J1 J2``, sets ``b = -g A``
    from its top-left block, and recovers ``I +- J`` from the top-left blocks
    of ``e^-b J_{1,2} e^b``.
    """
    J1 = np.asarray(J1)
    J2 = np.asarray(J2)
    res = _maxnorm(commutator(J1, J2))
    if res > tol:
        raise GeometryError(f"J1 and J2 do not commute (residual {res:.3e})")
    if not is_positive(generalized_metric_form(J1, J2)):
        raise GeometryError("<-J1 J2 ., .> is not positive definite")
    G = -(J1 @ J2)
    A, g_inv, _, _ = blocks(G)
    if _maxnorm(g_inv - _T(g_inv)) > tol * max(1.0, _maxnorm(g_inv)) or not is_positive(g_inv):
        raise GeometryError("top-right block of G is not symmetric positive definite")
    g = np.linalg.inv(g_inv)
    g = 0.5 * (g + _T(g))
    b = -(g @ A)
    b = 0.5 * (b - _T(b))
    eb, emb = b_transform(b), b_transform(-b)
    P1 = blocks(emb @ J1 @ eb)[0]
    P2 = blocks(emb @ J2 @ eb)[0]
    return BihermData(g=g, b=b, I=P1 + P2, J=P1 - P2)


class Variation(NamedTuple):
    g: np.ndarray
    b: np.ndarray
    omega_I: np.ndarray
    omega_J: np.ndarray
    I: np.ndarray  # noqa: E741
    J: np.ndarray


def induced_variation(bh: BihermData, K, check=True, tol=1e-8):
    """Variation of ``(g, b, omega_I, omega_J, I, J)`` under ``dJ_i/dt = Phi_K(J_i)``.

    ``K`` must be of type (1,1) for ``J``.
    """
    if check:
        ok, res = is_11(K, bh.J, tol)
        if not ok:
            raise GeometryError(f"K is not of type (1,1) for J (residual {res:.3e})")
    I, J = bh.I, bh.J
    return Variation(
        g=-0.5 * form_commutator(K, I),
        b=-0.5 * form_anticommutator(K, I),
        omega_I=-0.5 * form_commutator(K, I) @ I,
        omega_J=-0.5 * form_anticommutator(K, I @ J),
        I=np.zeros_like(I),
        J=0.5 * commutator(I, J) @ bh.g_inv @ K,
    )


# -- sample fibers -------------------------------------------------------------


def standard_complex_structure(m):
    """``I d_{2k} = d_{2k+1}`` on ``R^m``."""
    I = np.zeros((m, m))
    for k in range(0, m, 2):
        I[k + 1, k] = 1.0
        I[k, k + 1] = -1.0
    return I


def quaternion_structures():
    """Left multiplication by ``i`` and ``j`` on ``H = R^4`` in the basis (1, i, j, k)."""
    I = standard_complex_structure(4)
    J = np.zeros((4, 4))
    J[2, 0] = 1.0
    J[3, 1] = -1.0
    J[0, 2] = -1.0
    J[1, 3] = 1.0
    return I, J


def random_orthogonal(rng, m):
    Q, R = np.linalg.qr(rng.standard_normal((m, m)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


def random_biherm(rng, n=2, kind="generic", cond=10.0):
    """Random valid bihermitian fiber of real dimension ``2n``.

    ``kind`` is ``"generic"`` (I, J independent), ``"kaehler"`` (I = J, b = 0),
    ``"commuting"`` ([I, J] = 0) or ``"hyperkaehler"`` (IJ = -JI, n = 2).
    The structures are built orthonormally and pulled back by a random frame
    whose squared condition number is ``cond``.
    """
    m = 2 * n
    Ih = standard_complex_structure(m)
    if kind == "kaehler":
        Jh = Ih
    elif kind == "commuting":
        if n < 2:
            raise GeometryError("commuting fibers need n >= 2")
        k = int(rng.integers(1, n))
        sgn = np.r_[np.ones(2 * k), -np.ones(m - 2 * k)]
        Jh = sgn[:, None] * Ih
    elif kind == "hyperkaehler":
        if n != 2:
            raise GeometryError("hyperkaehler fibers are four-dimensional here")
        Ih, Jh = quaternion_structures()
    elif kind == "generic":
        U = random_orthogonal(rng, m)
        Jh = U @ Ih @ U.T
    else:
        raise ValueError(f"unknown fiber kind {kind!r}")
    scales = np.exp(rng.uniform(0.0, 0.5 * np.log(cond), m))
    P = random_orthogonal(rng, m) * scales  # frame map X_h -> X
    P_inv = np.linalg.inv(P)
    g = P_inv.T @ P_inv
    g = 0.5 * (g + g.T)
    if kind == "kaehler":
        b = np.zeros((m, m))
    else:
        b = rng.standard_normal((m, m))
        b = 0.5 * (b - b.T)
    return BihermData(g=g, b=b, I=P @ Ih @ P_inv, J=P @ Jh @ P_inv)
