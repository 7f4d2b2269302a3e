"""Generalized Kähler structures on flat tori and the 2-forms that deform them.

A :class:`GKState` keeps the bihermitian fields ``(g, b, I, J)`` on a grid in
the matrix convention of :mod:`gkgeom.genlin` (2-tensors as maps ``T -> T*``).
Component 2-forms, as used by :mod:`gkgeom.torusfield`, are the transposes.

The generalized complex structures of a state are integrable for the twisted
Courant bracket with the closed 3-form ``twist``.  It is fixed by the initial
data (``TWIST_SIGN * H - db``) and stays constant along canonical flows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import genlin as gl
from . import torusfield as tf

TWIST_SIGN = -1.0


class FlowAbort(RuntimeError):
    """Integration stopped early; carries the last good state and the partial record."""

    def __init__(self, message, state=None, record=None):
        super().__init__(message)
        self.state = state
        self.record = record


def to_components(M):
    """Map-convention 2-tensor field to its component array (and back)."""
    return np.swapaxes(M, -1, -2)


def constant_field(grid, M):
    return np.broadcast_to(np.asarray(M, dtype=float), grid.shape + np.shape(M)).copy()


# -- potentials ----------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """Trigonometric potential ``u = sum_k c_k prod_j sin(m_kj x^j + p_kj)``.

    ``terms`` is a tuple of ``(coefficient, ((axis, frequency, phase), ...))``.
    An optional 1-form ``a`` (same kind of terms per component) serves exact
    deformations ``K = da``.
    """

    terms: tuple = ()
    one_form: tuple = ()

    @staticmethod
    def _eval_terms(terms, grid):
        x = grid.coords()
        u = np.zeros(grid.shape)
        for coef, factors in terms:
            prod = np.full(grid.shape, float(coef))
            for axis, freq, phase in factors:
                prod = prod * np.sin(freq * x[axis] + phase)
            u += prod
        return u

    def field(self, grid):
        return self._eval_terms(self.terms, grid)

    def one_form_field(self, grid):
        a = np.zeros(grid.shape + (grid.dim,))
        for comp, terms in self.one_form:
            a[..., comp] += self._eval_terms(terms, grid)
        return a

    def scaled(self, factor):
        return Potential(tuple((c * factor, f) for c, f in self.terms), self.one_form)

    @classmethod
    def from_spec(cls, spec):
        """Build from a JSON-style dict: ``{"amplitude": e, "modes": [[[axis, m, phase], ...], ...]}``.

        Each mode may carry its own ``coef`` as ``{"coef": c, "factors": [...]}``.
        """
        if spec is None:
            return cls()
        amp = float(spec.get("amplitude", 0.05))
        terms = []
        for mode in spec.get("modes", []):
            if isinstance(mode, dict):
                coef, factors = float(mode.get("coef", 1.0)), mode["factors"]
            else:
                coef, factors = 1.0, mode
            terms.append((amp * coef, tuple((int(a), int(m), float(p)) for a, m, p in factors)))
        return cls(tuple(terms))


def sine_product(amplitude, *pairs):
    """``amplitude * prod sin(x^axis)`` over the given axes, as a one-term potential."""
    return Potential(((amplitude, tuple((a, 1, 0.0) for a in pairs)),))


def default_potential(scenario, amplitude=0.05):
    if scenario == "kaehler":
        return Potential(((amplitude, ((0, 1, 0.0), (2, 1, 0.0))), (0.5 * amplitude, ((1, 1, 0.0), (3, 1, 0.3)))))
    if scenario == "commuting":
        return Potential(((amplitude, ((0, 1, 0.0), (2, 1, 0.0))), (amplitude, ((1, 1, 0.4), (3, 1, 0.0)))))
    if scenario == "joyce":
        return Potential(((amplitude, ((0, 1, 0.0), (2, 1, 0.0))), (amplitude, ((1, 1, 0.0), (3, 1, 0.0)))))
    raise ValueError(f"unknown scenario {scenario!r}")


# -- the state -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GKState:
    grid: tf.Grid
    g: np.ndarray
    b: np.ndarray
    I: np.ndarray  # noqa: E741
    J: np.ndarray
    twist: np.ndarray | None = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    @cached_property
    def bh(self):
        return gl.BihermData(self.g, self.b, self.I, self.J)

    @property
    def omega_I(self):
        return self.bh.omega_I

    @property
    def omega_J(self):
        return self.bh.omega_J

    @property
    def sigma(self):
        return self.bh.sigma

    @cached_property
    def H(self):
        """Torsion ``d^c_I omega_I`` (component 3-form)."""
        return tf.dc(to_components(self.omega_I), self.I, self.grid)

    @cached_property
    def H_J(self):
        return tf.dc(to_components(self.omega_J), self.J, self.grid)

    @cached_property
    def pair(self):
        return gl.gualtieri_map(self.bh)

    @property
    def J1(self):
        return self.pair[0]

    @property
    def J2(self):
        return self.pair[1]

    @cached_property
    def courant_twist(self):
        if self.twist is not None:
            return self.twist
        return natural_twist(self)

    def replace(self, **kw):
        data = dict(grid=self.grid, g=self.g, b=self.b, I=self.I, J=self.J, twist=self.twist, label=self.label, meta=self.meta)
        data.update(kw)
        return GKState(**data)

    def fields(self):
        """Named :class:`TensorField` objects for serialization (components)."""
        gr = self.grid
        out = {
            "g": tf.TensorField(gr, self.g, p=2),
            "b": tf.TensorField(gr, to_components(self.b), p=2, antisymmetric=True),
            "I": tf.TensorField(gr, self.I, p=1, q=1),
            "J": tf.TensorField(gr, self.J, p=1, q=1),
            "H": tf.TensorField(gr, tf.antisymmetrize(self.H, gr), p=3, antisymmetric=True),
        }
        return out

    def certify(self, tol=1e-8, nijenhuis=True):
        """Residuals of the full GK invariant suite and the overall verdict."""
        res = dict(self.bh.residuals())
        scale = max(1.0, tf.maxnorm(self.g))
        res["torsion dcI wI + dcJ wJ"] = tf.maxnorm(self.H + self.H_J)
        res["dH"] = tf.maxnorm(tf.ext_d(self.H, self.grid))
        J1, J2 = self.pair
        res["J1^2+1"] = gl.almost_complex_residual(J1)
        res["J2^2+1"] = gl.almost_complex_residual(J2)
        res["[J1,J2]"] = tf.maxnorm(gl.commutator(J1, J2))
        twist = self.courant_twist
        if nijenhuis:
            res["N(J1)"] = tf.nijenhuis_norm(J1, twist, self.grid)
            res["N(J2)"] = tf.nijenhuis_norm(J2, twist, self.grid)
        margin = gl.positivity_margin(J1, J2)
        ok = all(v <= tol * scale for v in res.values()) and margin > 0
        res["positivity margin"] = margin
        return ok, res

    def require_certified(self, tol=1e-8, nijenhuis=True):
        ok, res = self.certify(tol, nijenhuis)
        if not ok:
            bad = {k: v for k, v in res.items() if k != "positivity margin" and v > tol * max(1.0, tf.maxnorm(self.g))}
            raise gl.GeometryError(f"state {self.label!r} failed certification: {bad or res}")
        return res


def natural_twist(state):
    """Courant twist for which the state's pair is integrable: ``TWIST_SIGN * H - db``."""
    return TWIST_SIGN * state.H - tf.ext_d(to_components(state.b), state.grid)


def _metric_from_kaehler_form(W, I):
    """``g`` from component Kähler form ``W`` with ``W(X, Y) = g(IX, Y)``."""
    return -np.einsum("...ba,...bc->...ac", I, W)


def _check_positive(g, what):
    w = np.linalg.eigvalsh(g)
    if not np.all(w[..., 0] > 1e-10 * w[..., -1]):
        raise gl.GeometryError(f"{what}: metric is not positive definite (min eigenvalue {w[..., 0].min():.3e})")


# -- scenarios -----------------------------------------------------------------


def flat_kaehler_form(m):
    return to_components(gl.standard_complex_structure(m))


def kaehler_torus(n=2, potential: Potential | None = None, N=16, certify=True, cert_tol=1e-8):
    """Flat complex torus with Kähler form ``omega_0 + dd^c u`` and ``I = J``."""
    grid = tf.Grid(n, N)
    m = 2 * n
    I = constant_field(grid, gl.standard_complex_structure(m))
    u = potential.field(grid) if potential is not None else np.zeros(grid.shape)
    W = constant_field(grid, flat_kaehler_form(m)) + tf.ext_d(tf.dc(u, I, grid), grid)
    g = _metric_from_kaehler_form(W, I)
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    _check_positive(g, "kaehler_torus")
    state = GKState(grid, g, np.zeros_like(g), I, I.copy(), label="kaehler")
    state = state.replace(twist=natural_twist(state))
    if certify:
        state.require_certified(cert_tol)
    return state


def commuting_I_J():
    """``I = (j, j)``, ``J = (j, -j)`` on ``T^2 x T^2``."""
    I = gl.standard_complex_structure(4)
    J = I.copy()
    J[2:, 2:] *= -1
    return I, J


def commuting_product(u_plus: Potential | None = None, u_minus: Potential | None = None, N=16, certify=True, cert_tol=1e-8):
    """Product of two Kähler 2-tori with ``I = (J+, J-)`` and ``J = (J+, -J-)``.

    ``u_plus`` should depend on ``x^0, x^1`` only and ``u_minus`` on ``x^2, x^3``.
    """
    grid = tf.Grid(2, N)
    I0, J0 = commuting_I_J()
    I = constant_field(grid, I0)
    J = constant_field(grid, J0)
    W = constant_field(grid, flat_kaehler_form(4))
    for pot, sl in ((u_plus, slice(0, 2)), (u_minus, slice(2, 4))):
        if pot is None:
            continue
        u = pot.field(grid)
        ddc = tf.ext_d(tf.dc(u, I, grid), grid)
        mask = np.zeros((4, 4))
        mask[sl, sl] = 1.0
        if tf.maxnorm(ddc * (1 - mask)) > 1e-10 * max(1.0, tf.maxnorm(ddc)):
            raise gl.GeometryError("factor potential depends on the other factor")
        W = W + ddc
    g = _metric_from_kaehler_form(W, I)
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    _check_positive(g, "commuting_product")
    state = GKState(grid, g, np.zeros_like(g), I, J, label="commuting")
    state = state.replace(twist=natural_twist(state))
    if certify:
        state.require_certified(cert_tol)
    return state


def hyperkaehler_t4(N=16, certify=True, cert_tol=1e-8):
    """Flat T^4 with anticommuting quaternionic ``I, J`` (nondegenerate ``sigma``)."""
    grid = tf.Grid(2, N)
    I0, J0 = gl.quaternion_structures()
    g = constant_field(grid, np.eye(4))
    state = GKState(grid, g, np.zeros_like(g), constant_field(grid, I0), constant_field(grid, J0), label="hyperkaehler")
    state = state.replace(twist=np.zeros(grid.shape + (4, 4, 4)))
    if certify:
        state.require_certified(cert_tol)
    return state


# -- deformation 2-forms -------------------------------------------------------


def potential_two_form(state, u, J=None):
    """``K = d(J du)`` as a map-convention field (closed, (1,1) for an integrable ``J``)."""
    J = state.J if J is None else J
    if isinstance(u, Potential):
        u = u.field(state.grid)
    Kc = tf.ext_d(tf.dc(u, J, state.grid), state.grid)
    return to_components(Kc)


def exact_two_form(state, a):
    """``K = da`` as a map-convention field."""
    if isinstance(a, Potential):
        a = a.one_form_field(state.grid)
    return to_components(tf.ext_d(a, state.grid))


def hamiltonian_vector_field(sigma, u, grid):
    """``sigma(du, .)`` as a vector field (``sigma`` stored as a map ``T* -> T``)."""
    du = tf.ext_d(u, grid)
    return np.einsum("...ba,...b->...a", sigma, du)


def joyce_deform(state, u, t_end=0.2, dt=0.01, cross_tol=1e-8, record=None):
    """Deform a nondegenerate state by the Hamiltonian flow of ``u``.

    ``J`` evolves by ``J' = L_X J`` with ``X = sigma du``; ``F_+`` and ``F_-``
    evolve by ``K = d(J du)``; ``b`` by ``-{K, I}/2``; ``I`` and ``sigma`` are
    fixed.  The metric is read from ``F_+`` and cross-checked against ``F_-``.
    """
    grid = state.grid
    if isinstance(u, Potential):
        u = u.field(grid)
    bh = state.bh
    if bh.F_plus is None:
        raise gl.GeometryError("joyce_deform needs a nondegenerate state ([I, J] invertible)")
    I = state.I
    X = hamiltonian_vector_field(state.sigma, u, grid)

    def rhs(J):
        K = potential_two_form(state, u, J)
        return tf.lie(X, J, grid, up=1), K, -0.5 * gl.form_anticommutator(K, I)

    J, Fp, Fm, b = state.J.copy(), bh.F_plus, bh.F_minus, state.b.copy()
    steps = max(1, int(round(t_end / dt))) if t_end > 0 else 0
    h = t_end / steps if steps else 0.0
    good = state
    for step in range(steps):
        k1 = rhs(J)
        k2 = rhs(J + 0.5 * h * k1[0])
        k3 = rhs(J + 0.5 * h * k2[0])
        k4 = rhs(J + h * k3[0])
        incr = [(a + 2 * b_ + 2 * c + d) * (h / 6) for a, b_, c, d in zip(k1, k2, k3, k4)]
        J = J + incr[0]
        J = 0.5 * (J - np.linalg.inv(J))  # Newton step back onto J^2 = -1
        Fp = Fp + incr[1]
        Fm = Fm + incr[1]
        b = b + incr[2]
        g = -0.5 * Fp @ (I + J)
        g_m = -0.5 * Fm @ (I - J)
        mismatch = tf.maxnorm(g - g_m)
        if record is not None:
            record.append(((step + 1) * h, mismatch))
        if mismatch > cross_tol * max(1.0, tf.maxnorm(g)):
            raise FlowAbort(f"F+/F- metric mismatch {mismatch:.3e} at t={(step + 1) * h:.4f}", state=good)
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        try:
            _check_positive(g, "joyce_deform")
        except gl.GeometryError as exc:
            raise FlowAbort(str(exc), state=good) from exc
        good = state.replace(g=g, b=b, J=J, label="joyce")
        pos = gl.positivity_margin(*good.pair)
        if pos <= 0:
            raise FlowAbort(f"generalized metric lost positivity at t={(step + 1) * h:.4f}", state=state)
    return good.replace(label="joyce", meta={**state.meta, "joyce_t": t_end})


def joyce_state(N=16, potential: Potential | None = None, t_end=1.0, dt=0.05, certify=True, cert_tol=1e-8):
    """Hyperkähler T^4 deformed by the Hamiltonian flow of a trigonometric potential."""
    pot = potential if potential is not None else default_potential("joyce")
    state = joyce_deform(hyperkaehler_t4(N, certify=False), pot, t_end=t_end, dt=dt, cross_tol=cert_tol)
    if certify:
        state.require_certified(cert_tol)
    return state


def build_scenario(name, N=16, potential: Potential | None = None, cert_tol=1e-8, **kw):
    """Scenario constructor by name (``kaehler``, ``commuting``, ``joyce``, ``hyperkaehler``).

    ``potential`` replaces the default Kähler or Joyce potential; the
    commuting product uses ``amplitude * sin x^0 sin x^1`` and
    ``amplitude * sin x^2 sin x^3`` on its two factors.
    """
    if name == "kaehler":
        pot = potential if potential is not None else default_potential("kaehler")
        return kaehler_torus(2, pot, N=N, cert_tol=cert_tol)
    if name == "commuting":
        amp = kw.get("amplitude", 0.05)
        return commuting_product(sine_product(amp, 0, 1), sine_product(amp, 2, 3), N=N, cert_tol=cert_tol)
    if name == "joyce":
        t_def, dt_def = kw.get("t_deform", 1.0), kw.get("dt_deform", 0.05)
        return joyce_state(N, potential, t_end=t_def, dt=dt_def, cert_tol=cert_tol)
    if name == "hyperkaehler":
        return hyperkaehler_t4(N, cert_tol=cert_tol)
    raise ValueError(f"unknown scenario {name!r}")
