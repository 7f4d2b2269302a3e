"""Pseudospectral tensor calculus on flat tori ``R^{2n} / (2 pi Z)^{2n}``.

Fields are plain numpy arrays whose leading ``2n`` axes are the grid and whose
trailing axes are tensor indices.  Forms are stored as fully antisymmetric
component arrays ``F[..., a, b, ...] = F(d_a, d_b, ...)``; endomorphisms as
``E[..., a, b] = E^a_b``; vector fields as ``X[..., a]``.  Connection
coefficients are ``Gamma[..., a, b, c]`` with ``nabla_{d_b} d_c = Gamma^a_bc d_a``.

Derivatives are taken one axis at a time with FFTs (real or complex as the
data requires); the Nyquist mode is dropped from odd derivatives.
"""

from __future__ import annotations

import math
import os
import struct
import warnings
from dataclasses import dataclass
from itertools import permutations

import numpy as np
import scipy.fft as sfft

LEE_SIGN = -1.0


def _workers():
    env = os.environ.get("GK_THREADS")
    return int(env) if env else None


def _perm_sign(p):
    p = list(p)
    s = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            s = -s
    return s


class Grid:
    """Uniform periodic grid with ``N`` points per axis on ``T^{2n}``."""

    def __init__(self, n: int, N: int, dealias: bool = False):
        if N % 2 or N < 8:
            raise ValueError(f"N must be even and >= 8, got {N}")
        self.n = n
        self.N = N
        self.dim = 2 * n
        self.shape = (N,) * self.dim
        self.dealias = dealias
        self.x1d = 2 * np.pi * np.arange(N) / N
        k = np.fft.fftfreq(N, 1.0 / N)
        k_odd = k.copy()
        k_odd[N // 2] = 0.0
        self._k = k_odd
        self._kr = np.fft.rfftfreq(N, 1.0 / N)
        self._kr[-1] = 0.0

    def __repr__(self):
        return f"Grid(n={self.n}, N={self.N})"

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.n, self.N) == (other.n, other.N)

    def __hash__(self):
        return hash((self.n, self.N))

    @property
    def npoints(self):
        return self.N**self.dim

    def coords(self):
        """Coordinate arrays ``x^a`` broadcast to the grid shape."""
        return np.meshgrid(*([self.x1d] * self.dim), indexing="ij")

    def _bshape(self, a, length):
        s = [1] * self.dim
        s[a] = length
        return s

    def partial(self, f, a):
        """Spectral derivative of ``f`` along grid axis ``a``."""
        f = np.asarray(f)
        extra = f.ndim - self.dim
        if np.iscomplexobj(f):
            fh = sfft.fft(f, axis=a, workers=_workers())
            fh *= (1j * self._k).reshape(self._bshape(a, self.N) + [1] * extra)
            return sfft.ifft(fh, axis=a, workers=_workers())
        fh = sfft.rfft(f, axis=a, workers=_workers())
        fh *= (1j * self._kr).reshape(self._bshape(a, self.N // 2 + 1) + [1] * extra)
        return sfft.irfft(fh, n=self.N, axis=a, workers=_workers())

    def grad(self, f):
        """Stack of partials; the derivative index is the first tensor index."""
        return np.stack([self.partial(f, a) for a in range(self.dim)], axis=self.dim)

    def comp_ndim(self, f):
        return np.ndim(f) - self.dim

    def integrate(self, f):
        """Integral over the torus (the trapezoid rule is spectrally exact)."""
        return np.sum(f, axis=tuple(range(self.dim))) * (2 * np.pi / self.N) ** self.dim

    def multiply(self, f, g):
        """Pointwise product, optionally with 3/2-rule dealiasing (scalar fields)."""
        if not self.dealias:
            return f * g
        M = 3 * self.N // 2
        axes = tuple(range(self.dim))
        fp = _pad(sfft.fftn(f, axes=axes), self.N, M, axes)
        gp = _pad(sfft.fftn(g, axes=axes), self.N, M, axes)
        prod = sfft.fftn(sfft.ifftn(fp, axes=axes) * sfft.ifftn(gp, axes=axes), axes=axes)
        out = sfft.ifftn(_truncate(prod, self.N, M, axes), axes=axes) * (M / self.N) ** self.dim
        return out if np.iscomplexobj(f) or np.iscomplexobj(g) else out.real

    def filter_residue(self, f):
        """Imaginary part left after a spectral round trip (realness check)."""
        axes = tuple(range(self.dim))
        return float(np.max(np.abs(sfft.ifftn(sfft.fftn(f, axes=axes), axes=axes).imag)))


def _pad(fh, N, M, axes):
    out = fh
    for a in axes:
        shape = list(out.shape)
        shape[a] = M
        new = np.zeros(shape, dtype=complex)
        lo = [slice(None)] * out.ndim
        lo[a] = slice(0, N // 2)
        hi = [slice(None)] * out.ndim
        hi[a] = slice(N - N // 2, N)
        lo_new = list(lo)
        hi_new = [slice(None)] * out.ndim
        hi_new[a] = slice(M - N // 2, M)
        new[tuple(lo_new)] = out[tuple(lo)]
        new[tuple(hi_new)] = out[tuple(hi)]
        out = new
    return out


def _truncate(fh, N, M, axes):
    out = fh
    for a in axes:
        lo = [slice(None)] * out.ndim
        lo[a] = slice(0, N // 2)
        hi = [slice(None)] * out.ndim
        hi[a] = slice(M - N // 2, M)
        out = np.concatenate([out[tuple(lo)], out[tuple(hi)]], axis=a)
    return out


# -- algebra helpers -----------------------------------------------------------


def maxnorm(f):
    return float(np.max(np.abs(f))) if np.size(f) else 0.0


def antisymmetrize(T, grid):
    """Alternating projection over all tensor indices."""
    k = grid.comp_ndim(T)
    d = grid.dim
    out = np.zeros_like(T)
    perms = list(permutations(range(k)))
    for p in perms:
        out += _perm_sign(p) * np.transpose(T, tuple(range(d)) + tuple(d + i for i in p))
    return out / len(perms)


def wedge1(alpha, beta):
    """Wedge product of two 1-forms."""
    return alpha[..., :, None] * beta[..., None, :] - alpha[..., None, :] * beta[..., :, None]


def pullback_endo(F, E, grid):
    """``F(E., ..., E.)`` for a covariant tensor ``F`` and an endomorphism ``E``."""
    k = grid.comp_ndim(F)
    d = grid.dim
    if k == 0:
        return F
    if k == 1:
        return (F[..., None, :] @ E)[..., 0, :]
    Eb = E.reshape(E.shape[:d] + (1,) * (k - 2) + E.shape[d:])
    out = F
    for i in range(k):
        out = np.moveaxis(np.moveaxis(out, d + i, -1) @ Eb, -1, d + i)
    return out


def interior(X, F, grid):
    """``i_X F`` (contraction in the first slot)."""
    k = grid.comp_ndim(F)
    rest = "bcdefgh"[: k - 1]
    return np.einsum(f"...a,...a{rest}->...{rest}", X, F)


def raise_index(F, g_inv, slot, grid):
    k = grid.comp_ndim(F)
    letters = "abcdefgh"[:k]
    out = letters[:slot] + "z" + letters[slot + 1 :]
    return np.einsum(f"...{letters},...z{letters[slot]}->...{out}", F, g_inv)


def lower_index(F, g, slot, grid):
    return raise_index(F, g, slot, grid)


def inner_forms(alpha, beta, g, grid):
    """Pointwise ``(1/k!) alpha_{a..} beta^{a..}``."""
    k = grid.comp_ndim(alpha)
    g_inv = np.linalg.inv(g)
    b = beta
    for s in range(k):
        b = raise_index(b, g_inv, s, grid)
    axes = tuple(range(grid.dim, grid.dim + k))
    return np.sum(alpha * b, axis=axes) / math.factorial(k)


def l2_inner(alpha, beta, g, grid):
    vol = np.sqrt(np.linalg.det(g))
    return float(grid.integrate(inner_forms(alpha, beta, g, grid) * vol))


# -- exterior calculus ---------------------------------------------------------


def ext_d(f, grid):
    """Exterior derivative of a k-form stored as an antisymmetric array."""
    f = np.asarray(f)
    k = grid.comp_ndim(f)
    d = grid.dim
    D = grid.grad(f)  # derivative index first
    if k == 0:
        return D
    out = D.copy()
    for i in range(1, k + 1):
        # move the derivative index to slot i
        perm = list(range(d)) + [d + j for j in range(1, i + 1)] + [d] + [d + j for j in range(i + 1, k + 1)]
        out += (-1) ** i * np.transpose(D, perm)
    return out


def codiff(F, g, grid):
    """Formal L^2 adjoint of ``d``: ``(d*F)_{b..} = -(1/sqrt g) d_a (sqrt g F^{a}_{b..})``."""
    k = grid.comp_ndim(F)
    if k == 0:
        return np.zeros_like(F)
    g_inv = np.linalg.inv(g)
    vol = np.sqrt(np.linalg.det(g))
    up = F
    for s in range(k):
        up = raise_index(up, g_inv, s, grid)
    up = up * vol[(...,) + (None,) * k]
    div = sum(grid.partial(up[(slice(None),) * grid.dim + (a,)], a) for a in range(grid.dim))
    div = -div / vol[(...,) + (None,) * (k - 1)]
    for s in range(k - 1):
        div = lower_index(div, g, s, grid)
    return div


def apply_complex(F, E, grid, inverse=False):
    """Action ``(E F)(X1..Xk) = F(E X1, ..., E Xk)``; ``inverse`` uses ``E^-1 = -E``."""
    k = grid.comp_ndim(F)
    out = pullback_endo(F, E, grid)
    return (-1) ** k * out if inverse else out


def dc(F, I, grid):
    """``d^c_I = I^-1 d I``; on functions ``-du o I``, on (1,1)-forms ``-dF(I,I,I)``."""
    return apply_complex(ext_d(apply_complex(F, I, grid), grid), I, grid, inverse=True)


def potential_one_form(u, J, grid):
    """``J du`` in the normalization ``d J d u = i d dbar u``, i.e. ``d^c_J u``."""
    return dc(u, J, grid)


def lie(X, T, grid, up=0):
    """Lie derivative of a tensor field; the first ``up`` tensor indices are contravariant."""
    k = grid.comp_ndim(T)
    dX = grid.grad(X)  # dX[..., c, a] = d_c X^a
    dT = grid.grad(T)  # dT[..., c, ...]
    letters = "abefghij"[:k]
    out = np.einsum(f"...c,...c{letters}->...{letters}", X, dT)
    for i in range(k):
        if i < up:
            new = letters[:i] + "z" + letters[i + 1 :]
            # - T^{..c..} d_c X^a
            out = out - np.einsum(f"...{new},...z{letters[i]}->...{letters}", T, dX)
        else:
            new = letters[:i] + "z" + letters[i + 1 :]
            # + T_{..c..} d_b X^c
            out = out + np.einsum(f"...{new},...{letters[i]}z->...{letters}", T, dX)
    return out


def sharp(theta, g):
    return np.einsum("...ab,...b->...a", np.linalg.inv(g), theta)


# -- Courant bracket and Nijenhuis tensor -------------------------------------


def courant_jets(x, dx, y, dy, H=None):
    """Twisted Courant bracket from first jets.

    ``x, y`` are generalized vector fields ``(..., 2m)``; ``dx, dy`` their
    derivatives ``(..., m, 2m)`` with the derivative index first.  ``H`` is a
    3-form ``(..., m, m, m)`` or ``None``.  The term ``d(xi(Y) - eta(X))/2``
    is expanded with the product rule.
    """
    m = x.shape[-1] // 2
    X, xi = x[..., :m], x[..., m:]
    Y, eta = y[..., :m], y[..., m:]
    dX, dxi = dx[..., :m], dx[..., m:]
    dY, deta = dy[..., :m], dy[..., m:]
    bracket = np.einsum("...c,...ca->...a", X, dY) - np.einsum("...c,...ca->...a", Y, dX)
    # L_X eta = X^c d_c eta_b + eta_c d_b X^c
    lx_eta = np.einsum("...c,...cb->...b", X, deta) + np.einsum("...c,...bc->...b", eta, dX)
    ly_xi = np.einsum("...c,...cb->...b", Y, dxi) + np.einsum("...c,...bc->...b", xi, dY)
    # d_b (xi(Y) - eta(X))
    dpair = (
        np.einsum("...bc,...c->...b", dxi, Y)
        + np.einsum("...c,...bc->...b", xi, dY)
        - np.einsum("...bc,...c->...b", deta, X)
        - np.einsum("...c,...bc->...b", eta, dX)
    )
    form = lx_eta - ly_xi + 0.5 * dpair
    if H is not None:
        form = form + np.einsum("...a,...b,...abc->...c", X, Y, H)
    return np.concatenate([bracket, form], axis=-1)


def courant(x, y, grid, H=None, dH_tol=1e-8):
    """Twisted Courant bracket of two generalized vector fields.

    Returns ``(bracket, warn)``; ``warn`` is set when ``|dH|`` exceeds ``dH_tol``.
    """
    warn = False
    if H is not None:
        res = maxnorm(ext_d(H, grid))
        warn = res > dH_tol
        if warn:
            warnings.warn(f"twisting 3-form is not closed (|dH| = {res:.3e})", stacklevel=2)
    return courant_jets(x, grid.grad(x), y, grid.grad(y), H), warn



def frame_courant(x, dx, H=None):
    """Courant brackets of all pairs of frame sections at a batch of points.

    ``x[p, A, :]`` is section ``A`` (tangent then cotangent part),
    ``dx[p, A, c, :]`` its derivative along ``d_c``; ``H[p]`` an optional
    3-form.  Returns ``br[p, A, B, :] = [x_A, x_B]``.
    """
    P, R, M = x.shape
    m = M // 2
    Xt, Xf = x[..., :m], x[..., m:]
    Dt, Df = dx[..., :m], dx[..., m:]  # [p, A, c, comp]

    def along(V, D):
        # out[p, A, B, a] = sum_c V[p, A, c] D[p, B, c, a]
        Dc = np.moveaxis(D, 2, 1).reshape(P, m, R * m)
        return (V @ Dc).reshape(P, R, R, m)

    def against(D, V):
        # out[p, A, B, b] = sum_c D[p, A, b, c] V[p, B, c]
        return np.swapaxes((D.reshape(P, R * m, m) @ np.swapaxes(V, 1, 2)).reshape(P, R, m, R), 2, 3)

    def swap(T):
        return np.swapaxes(T, 1, 2)

    vec = along(Xt, Dt)
    vec = vec - swap(vec)
    lie = along(Xt, Df) + against(Dt, Xf)  # L_{x_A} xi_B
    # d_b (xi_A(X_B)) = d_b xi_A . X_B + xi_A . d_b X_B
    dpair = against(Df, Xt) + swap(against(Dt, Xf))
    form = lie - swap(lie) + 0.5 * (dpair - swap(dpair))
    if H is not None:
        tmp = (Xt @ H.reshape(P, m, m * m)).reshape(P, R, m, m)  # [p, A, b, c]
        form = form + Xt[:, None] @ tmp
    return np.concatenate([vec, form], axis=-1)


def nijenhuis(J, H, grid, points=None, dJ=None, conjugate=False, chunk=1024):
    """Nijenhuis tensor ``N(x, y) = pi_01 [pi_10 x, pi_10 y]`` on the coordinate frame.

    Returns a complex array ``N[p, A, B, :]`` for the flat grid indices in
    ``points`` (all points by default; mind the memory at large ``N``).
    ``conjugate`` swaps the roles of ``pi_10`` and ``pi_01``.
    """
    M = J.shape[-1]
    m = M // 2
    if dJ is None:
        dJ = grid.grad(J)
    Jf = J.reshape((-1, M, M))
    dJf = dJ.reshape((-1, grid.dim, M, M))
    Hf = None if H is None else H.reshape((-1, m, m, m))
    if points is not None:
        points = np.asarray(points)
        Jf, dJf = Jf[points], dJf[points]
        Hf = None if Hf is None else Hf[points]
    s = 1j if conjugate else -1j
    one = np.eye(M)
    out = np.empty((Jf.shape[0], M, M, M), dtype=complex)
    for lo in range(0, Jf.shape[0], chunk):
        Jc = Jf[lo : lo + chunk]
        x = np.swapaxes(0.5 * (one + s * Jc), -1, -2)
        dx = np.moveaxis(0.5 * s * dJf[lo : lo + chunk], -1, 1)
        br = frame_courant(x, dx, None if Hf is None else Hf[lo : lo + chunk])
        out[lo : lo + chunk] = br @ np.swapaxes(0.5 * (one - s * Jc), -1, -2)[:, None]
    return out


def nijenhuis_norm(J, H, grid, dJ=None, conjugate=False, chunk=1024):
    """Max modulus of the Nijenhuis tensor over all frame pairs and grid points."""
    M = J.shape[-1]
    m = M // 2
    if dJ is None:
        dJ = grid.grad(J)
    Jf = J.reshape((-1, M, M))
    dJf = dJ.reshape((-1, grid.dim, M, M))
    Hf = None if H is None else H.reshape((-1, m, m, m))
    s = 1j if conjugate else -1j
    one = np.eye(M)
    worst = 0.0
    for lo in range(0, Jf.shape[0], chunk):
        Jc = Jf[lo : lo + chunk]
        x = np.swapaxes(0.5 * (one + s * Jc), -1, -2)
        dx = np.moveaxis(0.5 * s * dJf[lo : lo + chunk], -1, 1)
        br = frame_courant(x, dx, None if Hf is None else Hf[lo : lo + chunk])
        N = br @ np.swapaxes(0.5 * (one - s * Jc), -1, -2)[:, None]
        worst = max(worst, maxnorm(N))
    return worst


# -- connections and curvature -------------------------------------------------


def levi_civita(g, grid, dg=None):
    """Christoffel symbols ``Gamma^a_bc`` of ``g``."""
    if dg is None:
        dg = grid.grad(g)  # dg[..., e, b, c] = d_e g_bc
    g_inv = np.linalg.inv(g)
    low = 0.5 * (np.einsum("...bdc->...dbc", dg) + np.einsum("...cdb->...dbc", dg) - dg)
    # low[..., d, b, c] = 1/2 (d_b g_dc + d_c g_db - d_d g_bc)
    return np.einsum("...ad,...dbc->...abc", g_inv, low)


def bismut(g, H, grid, dg=None):
    """Bismut connection ``nabla_X Y = D_X Y + 1/2 g^-1 H(X, ., Y)``, i.e. ``Gamma^a_bc += 1/2 g^ad H_bdc``.

    With ``H = d^c_I omega_I`` this connection preserves ``g`` and ``I``.
    """
    G = levi_civita(g, grid, dg)
    return G + 0.5 * np.einsum("...ad,...bdc->...abc", np.linalg.inv(g), H)


def covariant_derivative(T, Gam, grid, up=0):
    """``(nabla T)[..., c, ...] = nabla_c T``; first ``up`` indices contravariant."""
    k = grid.comp_ndim(T)
    out = grid.grad(T)
    letters = "abefghij"[:k]
    for i in range(k):
        new = letters[:i] + "z" + letters[i + 1 :]
        if i < up:
            out = out + np.einsum(f"...{letters[i]}cz,...{new}->...c{letters}", Gam, T)
        else:
            out = out - np.einsum(f"...zc{letters[i]},...{new}->...c{letters}", Gam, T)
    return out


def curvature(Gam, grid):
    """Full curvature ``R[..., a, b, c, d] = (R(d_c, d_d) d_b)^a``."""
    dG = grid.grad(Gam)  # dG[..., e, a, b, c] = d_e Gamma^a_bc
    R = np.einsum("...cadb->...abcd", dG) - np.einsum("...dacb->...abcd", dG)
    R += np.einsum("...ace,...edb->...abcd", Gam, Gam) - np.einsum("...ade,...ecb->...abcd", Gam, Gam)
    return R


def ricci_tensor(Gam, grid):
    """``Rc_bd = R^a_bad`` without forming the full curvature."""
    d = grid.dim
    div = sum(grid.partial(Gam[(slice(None),) * d + (a,)], a) for a in range(d))  # d_a Gamma^a_db
    tr = np.einsum("...aab->...b", Gam)  # Gamma^a_ab
    dtr = grid.grad(tr)  # [..., d, b] = d_d Gamma^a_ab
    Rc = np.swapaxes(div - dtr, -1, -2)
    Rc += np.einsum("...aae,...edb->...bd", Gam, Gam) - np.einsum("...ade,...eab->...bd", Gam, Gam)
    return Rc


def ricci_form_trace(Gam, I, grid):
    """``rho(d_c, d_d) = 1/2 tr(R(d_c, d_d) o I)`` from connection coefficients."""
    d = grid.dim
    # Gamma_c as the matrix (Gamma_c)^a_b = Gamma^a_cb
    Gc = np.einsum("...acb->...cab", Gam)
    trGI = np.einsum("...cab,...ba->...c", Gc, I)  # tr(Gamma_c I)
    dtr = grid.grad(trGI)  # [..., c, d] = d_c tr(Gamma_d I)
    dI = grid.grad(I)  # [..., c, b, a]
    GdI = np.einsum("...dab,...cba->...cd", Gc, dI)  # tr(Gamma_d d_c I)
    comm = np.einsum("...cae,...deb,...ba->...cd", Gc, Gc, I)
    rho = 0.5 * (dtr - GdI - (np.swapaxes(dtr, -1, -2) - np.swapaxes(GdI, -1, -2)) + comm - np.swapaxes(comm, -1, -2))
    del d
    return rho


def torsion_form(g, I, grid):
    """``H = d^c_I omega_I`` with ``omega_I(X, Y) = g(IX, Y)``."""
    omega = np.swapaxes(g @ I, -1, -2)
    return dc(omega, I, grid)


def bismut_ricci(g, I, grid, H=None):
    """Bismut-Ricci form of ``(g, I)`` and its I-type splitting.

    Returns component 2-forms ``(rho, rho_11, rho_20_02)``.
    """
    if H is None:
        H = torsion_form(g, I, grid)
    Gam = bismut(g, H, grid)
    rho = ricci_form_trace(Gam, I, grid)
    rho11 = 0.5 * (rho + pullback_endo(rho, I, grid))
    return rho, rho11, rho - rho11


def lee_form(g, I, grid):
    """Lee form ``theta_I``, normalized so that ``d omega = theta ^ omega`` in real dimension 4."""
    omega = np.swapaxes(g @ I, -1, -2)
    dstar = codiff(omega, g, grid)
    return LEE_SIGN * np.einsum("...a,...ab->...b", dstar, I)


# -- serialization -------------------------------------------------------------

_MAGIC = b"GKTF"
_HEADER = struct.Struct("<4sHHHHHH")


@dataclass
class TensorField:
    """A field with its valence, for storage and exchange.

    ``data`` has shape ``grid.shape + (2n,) * (p + q)`` with the ``q``
    contravariant indices first.  ``antisymmetric`` marks form-type fields.
    """

    grid: Grid
    data: np.ndarray
    p: int = 0
    q: int = 0
    antisymmetric: bool = False

    def __post_init__(self):
        expect = self.grid.shape + (self.grid.dim,) * (self.p + self.q)
        if self.data.shape != expect:
            raise ValueError(f"field shape {self.data.shape} does not match valence {expect}")
        if np.iscomplexobj(self.data):
            if maxnorm(self.data.imag) > 1e-12:
                raise ValueError("TensorField stores real fields only")
            self.data = self.data.real
        if self.antisymmetric and self.p >= 2:
            res = maxnorm(self.data - antisymmetrize(self.data, self.grid))
            if res > 1e-12 * max(1.0, maxnorm(self.data)):
                raise ValueError(f"field flagged antisymmetric is not (residual {res:.3e})")

    def header(self):
        return _HEADER.pack(_MAGIC, 1, self.grid.n, self.grid.N, self.p, self.q, int(self.antisymmetric))

    def to_bytes(self):
        return self.header() + np.ascontiguousarray(self.data, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, buf, offset=0):
        magic, version, n, N, p, q, flags = _HEADER.unpack_from(buf, offset)
        if magic != _MAGIC or version != 1:
            raise ValueError("not a tensor field container")
        grid = Grid(n, N)
        shape = grid.shape + (grid.dim,) * (p + q)
        count = int(np.prod(shape))
        start = offset + _HEADER.size
        data = np.frombuffer(buf, dtype="<f8", count=count, offset=start).reshape(shape).copy()
        return cls(grid, data, p, q, bool(flags & 1)), start + 8 * count

    def summary(self):
        return (
            f"TensorField(n={self.grid.n}, N={self.grid.N}, p={self.p}, q={self.q}, "
            f"antisymmetric={self.antisymmetric}, max|.|={maxnorm(self.data):.3e})"
        )


def save_fields(path, fields: dict):
    """Write named fields into one binary container."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", b"GKST", len(fields)))
        for name, field in fields.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(field.to_bytes())


def load_fields(path):
    buf = open(path, "rb").read()
    magic, count = struct.unpack_from("<4sI", buf, 0)
    if magic != b"GKST":
        raise ValueError("not a state container")
    off = 8
    out = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off : off + ln].decode("utf-8")
        off += ln
        field, off = TensorField.from_bytes(buf, off)
        out[name] = field
    return out
