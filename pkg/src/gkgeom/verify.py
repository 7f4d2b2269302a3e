"""Named numerical checks for generalized Kähler identities.

Each check takes a state (and whatever it needs) and returns a
:class:`CheckResult`.  Residuals are max-norms; a check passes exactly when
its residual is at most its tolerance.  Randomness comes from an explicit
``seed`` so that a suite run is a pure function of its configuration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from . import flows as fl
from . import genlin as gl
from . import structures as st
from . import torusfield as tf
from .structures import to_components


class UndecidedError(RuntimeError):
    """Every redraw of a sample landed between the pass and fail thresholds."""


@dataclass
class CheckResult:
    name: str
    residual: float
    tolerance: float
    passed: bool
    context: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "residual": _clean(self.residual),
            "tolerance": _clean(self.tolerance),
            "passed": bool(self.passed),
            "context": _clean(self.context),
            "details": _clean(self.details),
        }


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _result(name, residual, tol, state=None, seed=None, **details):
    residual = float(residual)
    ctx = {}
    if state is not None:
        ctx = {"scenario": state.label, "grid": state.grid.N}
    if seed is not None:
        ctx["seed"] = seed
    return CheckResult(name, residual, float(tol), bool(residual <= tol), ctx, details)


# -- random inputs ---------------------------------------------------------------


def random_modes(rng, dim, modes=3, kmax=2):
    """Random integer wavevectors, coefficients and phases."""
    k = rng.integers(-kmax, kmax + 1, size=(modes, dim))
    return k, rng.standard_normal(modes), rng.uniform(0, 2 * np.pi, modes)


def _eval_modes(x, spec):
    k, c, ph = spec
    # x[..., dim] -> scalar
    return np.cos(x @ k.T + ph) @ c


def random_two_form_at(x, rng, modes=3, kmax=2, amplitude=1.0):
    """Band-limited random 2-form (map convention) at points ``x[..., dim]``."""
    dim = x.shape[-1]
    K = np.zeros(x.shape[:-1] + (dim, dim))
    for a in range(dim):
        for b in range(a + 1, dim):
            v = amplitude * _eval_modes(x, random_modes(rng, dim, modes, kmax))
            K[..., a, b] = v
            K[..., b, a] = -v
    return K


def _grid_points(grid):
    return np.moveaxis(grid.coords(), 0, -1)


def random_two_form(grid, rng, modes=3, kmax=2, amplitude=1.0):
    return random_two_form_at(_grid_points(grid), rng, modes, kmax, amplitude)


def random_potential(grid, rng, modes=3, kmax=2, amplitude=0.05):
    return amplitude * _eval_modes(_grid_points(grid), random_modes(rng, grid.dim, modes, kmax))


def random_one_form(grid, rng, modes=3, kmax=2, amplitude=0.1):
    x = _grid_points(grid)
    return np.stack([amplitude * _eval_modes(x, random_modes(rng, grid.dim, modes, kmax)) for _ in range(grid.dim)], -1)


def sample_points(grid, rng, count):
    count = min(count, grid.npoints)
    return np.sort(rng.choice(grid.npoints, count, replace=False))


def _at(F, grid, pts):
    return F.reshape((grid.npoints,) + F.shape[grid.n * 2 :])[pts]


# -- shared pointwise pieces ----------------------------------------------------


def pointwise_phi_flow(J, K, t, substeps=2):
    """``J(t)`` for ``J' = Phi_K(J)`` with ``K`` frozen, by RK4 substeps."""
    if t == 0:
        return J.copy()
    h = t / substeps
    eK = gl.b_transform(K)
    for _ in range(substeps):
        k1 = gl.phi_k(J, K, check=False, eK=eK)
        k2 = gl.phi_k(J + 0.5 * h * k1, K, check=False, eK=eK)
        k3 = gl.phi_k(J + 0.5 * h * k2, K, check=False, eK=eK)
        k4 = gl.phi_k(J + h * k3, K, check=False, eK=eK)
        J = J + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return J


def integrability_condition(Jp, dKp, conjugate=False):
    """``pi_01 (dK(pi_T pi_10 y, pi_T pi_10 x, .))`` on all frame pairs.

    ``Jp[p]`` and the component 3-form ``dKp[p]`` at a batch of points.
    Returns ``C[p, A, B, :]`` for ``x = e_A``, ``y = e_B``; with
    ``conjugate`` the two projectors trade places.
    """
    M = Jp.shape[-1]
    m = M // 2
    s = -1.0 if conjugate else 1.0
    one = np.eye(M)
    p_in = 0.5 * (one - s * 1j * Jp)
    p_out = 0.5 * (one + s * 1j * Jp)
    X = p_in[:, :m, :]  # tangent part of column A
    xi = np.einsum("pyxc,pyB,pxA->pABc", dKp, X, X, optimize=True)
    return np.einsum("pac,pABc->pABa", p_out[:, :, m:], xi, optimize=True)


def _condition_max(J, dKc, grid, pts=None, conjugate=False, chunk=2048):
    M = J.shape[-1]
    m = M // 2
    Jf = J.reshape(-1, M, M)
    dKf = dKc.reshape(-1, m, m, m)
    if pts is not None:
        Jf, dKf = Jf[pts], dKf[pts]
    worst = 0.0
    for lo in range(0, Jf.shape[0], chunk):
        C = integrability_condition(Jf[lo : lo + chunk], dKf[lo : lo + chunk], conjugate)
        worst = max(worst, float(np.abs(C).max()))
    return worst


def nijenhuis_variation_rhs(Jp, Kp, dKp, N):
    """Closed-form ``dN/dt`` at ``t = 0`` along ``J' = Phi_K(J)``, on frame pairs."""
    M = Jp.shape[-1]
    m = M // 2
    p10 = 0.5 * (np.eye(M) - 1j * Jp)
    p01 = 0.5 * (np.eye(M) + 1j * Jp)
    X = p10[:, :m, :]
    xi = np.einsum("pyxc,pyB,pxA->pABc", dKp, X, X)
    t_dk = 1j * np.einsum("pac,pABc->pABa", p01[:, :, m:], xi)
    eK = gl.b_transform(Kp)
    eKJ = eK @ Jp
    t_left = np.einsum("pab,pABb->pABa", Jp @ eK, N)
    t_x = np.einsum("pCA,pCBa->pABa", eKJ, N)
    t_y = np.einsum("pCB,pACa->pABa", eKJ, N)
    return t_dk - 1j * N + t_left + t_x + t_y


def _rhs_on_vectors(Jp, Kp, dKp, N, u, v):
    """The same right-hand side evaluated on given complex vectors ``u[p], v[p]``."""
    M = Jp.shape[-1]
    m = M // 2
    p10 = 0.5 * (np.eye(M) - 1j * Jp)
    p01 = 0.5 * (np.eye(M) + 1j * Jp)
    X = np.einsum("pab,pb->pa", p10, u)[:, :m]
    Y = np.einsum("pab,pb->pa", p10, v)[:, :m]
    xi = np.einsum("pyxc,py,px->pc", dKp, Y, X)
    t_dk = 1j * np.einsum("pac,pc->pa", p01[:, :, m:], xi)

    def Nuv(a, b):
        return np.einsum("pA,pB,pABc->pc", a, b, N)

    eKJ = gl.b_transform(Kp) @ Jp
    base = Nuv(u, v)
    return (
        t_dk
        - 1j * base
        + np.einsum("pab,pb->pa", Jp @ gl.b_transform(Kp), base)
        + Nuv(np.einsum("pab,pb->pa", eKJ, u), v)
        + Nuv(u, np.einsum("pab,pb->pa", eKJ, v))
    )


# -- checks ------------------------------------------------------------------------


def check_nijenhuis_variation(state, K, h=1e-3, points=64, seed=0, tol=5e-4, combos=8, cert_tol=1e-8):
    """Finite-difference derivative of the Nijenhuis tensor along ``J' = Phi_K(J)``.

    ``K`` is a map-convention 2-form field.  Both structures of the pair are
    flowed pointwise to ``+-h`` and the centered difference of ``N`` at
    sampled points is compared with the closed form, both on the frame and
    on ``combos`` random complex vector pairs per point.
    """
    if cert_tol is not None:
        state.require_certified(tol=cert_tol, nijenhuis=False)
    grid = state.grid
    rng = np.random.default_rng(seed)
    pts = sample_points(grid, rng, points)
    H = state.courant_twist
    Kc = to_components(K)
    dKp = _at(tf.ext_d(Kc, grid), grid, pts)
    Kp = _at(K, grid, pts)
    M = state.J1.shape[-1]
    details = {}
    worst = 0.0
    for name, J in (("J1", state.J1), ("J2", state.J2)):
        N0 = tf.nijenhuis(J, H, grid, points=pts)
        Np = tf.nijenhuis(pointwise_phi_flow(J, K, h), H, grid, points=pts)
        Nm = tf.nijenhuis(pointwise_phi_flow(J, K, -h), H, grid, points=pts)
        fd = (Np - Nm) / (2 * h)
        Jp = _at(J, grid, pts)
        rhs = nijenhuis_variation_rhs(Jp, Kp, dKp, N0)
        res = tf.maxnorm(fd - rhs)
        for _ in range(combos):
            u = rng.standard_normal((len(pts), M)) + 1j * rng.standard_normal((len(pts), M))
            v = rng.standard_normal((len(pts), M)) + 1j * rng.standard_normal((len(pts), M))
            lhs = np.einsum("pA,pB,pABc->pc", u, v, fd)
            scale = np.abs(u).max() * np.abs(v).max()
            res = max(res, tf.maxnorm(lhs - _rhs_on_vectors(Jp, Kp, dKp, N0, u, v)) / scale)
        details[name] = {"residual": res, "N": tf.maxnorm(N0), "rhs": tf.maxnorm(rhs)}
        worst = max(worst, res)
    details["h"] = h
    details["dK"] = tf.maxnorm(dKp)
    return _result("nijenhuis_variation", worst, tol, state, seed, **details)


def partial_integrability_residuals(state, K, pts=None):
    """Max residual of the projection condition (and its conjugate) for each structure."""
    grid = state.grid
    dKc = tf.ext_d(to_components(K), grid)
    out = {}
    for name, J in (("J1", state.J1), ("J2", state.J2)):
        out[name] = _condition_max(J, dKc, grid, pts)
        out[name + "_conjugate"] = _condition_max(J, dKc, grid, pts, conjugate=True)
    out["dK"] = tf.maxnorm(dKc)
    return out


def check_partial_integrability(state, K, which=("J1", "J2"), tol=1e-10, points=None, seed=0):
    """Projection condition that keeps ``J_t`` integrable, for the structures in ``which``.

    The tolerance is relative to ``max(1, |K|)``.
    """
    pts = None
    if points is not None:
        pts = sample_points(state.grid, np.random.default_rng(seed), points)
    res = partial_integrability_residuals(state, K, pts)
    worst = max(max(res[w], res[w + "_conjugate"]) for w in which)
    tol = tol * max(1.0, tf.maxnorm(K))
    return _result("partial_integrability", worst, tol, state, seed, which=list(which), **res)


def strictly_weaker_two_form(state, which="J1", amplitude=0.5, point=0, seed=0, rel=1e-10):
    """A non-closed ``K = amplitude sin(x^0) beta`` meeting one structure's projection condition.

    ``beta`` is a constant 2-form without ``dx^0`` legs, drawn from the null
    space of ``beta -> condition(dx^0 ^ beta)`` at one fiber.  When the
    structure is translation invariant the condition then holds everywhere.
    """
    grid = state.grid
    d = grid.dim
    J = (state.J1 if which == "J1" else state.J2).reshape(-1, 2 * d, 2 * d)[point : point + 1]
    pairs = [(i, j) for i in range(1, d) for j in range(i + 1, d)]
    cols = []
    for i, j in pairs:
        beta = np.zeros((d, d))
        beta[i, j], beta[j, i] = 1.0, -1.0
        gamma = np.zeros((d, d, d))
        for perm in permutations((0, i, j)):
            gamma[perm] = tf._perm_sign([(0, i, j).index(v) for v in perm])
        C = integrability_condition(J, gamma[None])
        cols.append(np.concatenate([C.real.ravel(), C.imag.ravel()]))
    A = np.stack(cols, 1)
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    scale = max(1.0, s.max() if s.size else 0.0)
    rank = int(np.sum(s > rel * scale))
    null = vt[rank:]
    if null.shape[0] == 0:
        raise gl.GeometryError(f"the {which} condition has no non-closed solutions of this form")
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal(null.shape[0]) @ null
    coef /= np.abs(coef).max()
    beta = np.zeros((d, d))
    for c, (i, j) in zip(coef, pairs):
        beta[i, j], beta[j, i] = c, -c
    x0 = grid.coords()[0]
    Kc = amplitude * np.sin(x0)[..., None, None] * beta
    return to_components(Kc), {"nullity": int(null.shape[0]), "unknowns": len(pairs)}


def _two_form_kinds(state, rng, kind):
    grid = state.grid
    if kind == "closed_potential":
        return st.potential_two_form(state, random_potential(grid, rng))
    if kind == "closed_exact":
        return st.exact_two_form(state, random_one_form(grid, rng))
    if kind == "random":
        return random_two_form(grid, rng, amplitude=0.1)
    raise ValueError(kind)


def check_dk_equivalence(state, samples=6, seed=0, tol=1e-10, margin=1e-3, points=512, max_redraws=20):
    """Both projection conditions hold exactly when ``dK = 0``.

    Samples cycle through ``K = d(J du)``, exact ``da``, the one-sided
    construction (when the scenario admits one) and random non-closed forms.
    Residuals strictly between ``tol`` and ``margin`` (relative) are
    inconclusive and redrawn.  The residual reported is the number of
    biconditional violations.  The details also carry the smallest singular
    value of ``(omega_I^-1 - omega_J^-1 ; omega_I^-1 + omega_J^-1)``, the
    injectivity that turns the two conditions into ``dK = 0``.
    """
    grid = state.grid
    margin = max(margin, tol)
    rng = np.random.default_rng(seed)
    pts = sample_points(grid, rng, points)
    kinds = ["closed_potential", "closed_exact", "one_sided", "random"]
    violations, redraws, rows = 0, 0, []
    for i in range(samples):
        kind = kinds[i % len(kinds)]
        for _ in range(max_redraws):
            if kind == "one_sided":
                try:
                    K, _ = strictly_weaker_two_form(state, seed=int(rng.integers(1 << 31)))
                except gl.GeometryError:
                    kind = "random"
                    continue
            else:
                K = _two_form_kinds(state, rng, kind)
            res = partial_integrability_residuals(state, K, pts)
            scale = max(1.0, tf.maxnorm(K))
            both = max(res["J1"], res["J2"]) / scale
            dk = res["dK"] / scale
            decided = all(r <= tol or r > margin for r in (both, dk))
            if decided:
                break
            redraws += 1
        else:
            raise UndecidedError("could not draw a decisive sample")
        agree = (both <= tol) == (dk <= tol)
        violations += int(not agree)
        rows.append({"kind": kind, "conditions": both, "dK": dk, "J1": res["J1"] / scale, "J2": res["J2"] / scale})
    wI = np.linalg.inv(_at(state.omega_I, grid, pts))
    wJ = np.linalg.inv(_at(state.omega_J, grid, pts))
    stack = np.concatenate([wI - wJ, wI + wJ], axis=-2)
    smin = float(np.linalg.svd(stack, compute_uv=False)[..., -1].min())
    return _result(
        "dk_equivalence",
        violations,
        0,
        state,
        seed,
        samples=rows,
        redraws=redraws,
        injectivity_min_singular_value=smin,
    )


def compatibility_residuals(J1, J2, J, K):
    """Relative residuals ``(|[Phi_K J1, J2] - [Phi_K J2, J1]|, |K J + J* K|) / |K|``."""
    A = gl.commutator(gl.phi_k(J1, K, check=False), J2) - gl.commutator(gl.phi_k(J2, K, check=False), J1)
    B = K @ J + np.swapaxes(J, -1, -2) @ K
    s = tf.maxnorm(K)
    return tf.maxnorm(A) / s, tf.maxnorm(B) / s


def check_compatibility_equivalence(state, samples=100, seed=0, tol=1e-10, margin=1e-3, points=256, max_redraws=20):
    """Commutation of the deformed pair holds exactly for ``K`` of type (1,1) for ``J``.

    Each sample is a random band-limited ``K`` evaluated at sampled points;
    every other sample is projected to its (1,1) part.  Samples whose
    residuals fall between ``tol`` and ``margin`` are redrawn.  The residual
    is the number of samples where the two sides disagree.
    """
    grid = state.grid
    margin = max(margin, tol)
    rng = np.random.default_rng(seed)
    pts = sample_points(grid, rng, points)
    x = _grid_points(grid).reshape(-1, grid.dim)[pts]
    J1, J2 = (_at(E, grid, pts) for E in state.pair)
    J = _at(state.J, grid, pts)
    violations = redraws = 0
    worst_11 = 0.0
    least_non11 = np.inf
    for i in range(samples):
        for _ in range(max_redraws):
            K = random_two_form_at(x, rng)
            if i % 2 == 0:
                K = gl.project_11(K, J)
            rA, rB = compatibility_residuals(J1, J2, J, K)
            if all(r <= tol or r > margin for r in (rA, rB)):
                break
            redraws += 1
        else:
            raise UndecidedError("could not draw a decisive sample")
        violations += int((rA <= tol) != (rB <= tol))
        if rB <= tol:
            worst_11 = max(worst_11, rA)
        else:
            least_non11 = min(least_non11, rA)
    return _result(
        "compatibility_equivalence",
        violations,
        0,
        state,
        seed,
        samples=samples,
        redraws=redraws,
        worst_commutator_for_11=worst_11,
        least_commutator_for_non_11=least_non11,
    )


def variation_errors(state, K, h):
    """Finite-difference errors of one Euler step of the pair against the induced variation."""
    bh = state.bh
    J1, J2 = state.pair
    nJ1 = J1 + h * gl.phi_k(J1, K, check=False)
    nJ2 = J2 + h * gl.phi_k(J2, K, check=False)
    new = gl.extract_biherm(nJ1, nJ2, tol=1.0)
    v = gl.induced_variation(bh, K, check=False)
    out = {}
    for name in ("g", "b", "omega_I", "omega_J", "I", "J"):
        out[name] = tf.maxnorm((getattr(new, name) - getattr(bh, name)) / h - getattr(v, name))
    return out


def check_variation_formulas(state, K, h=1e-3, tol_factor=10.0, seed=None, k_tol=1e-8):
    """One Euler step of ``J_i' = Phi_K(J_i)``, extracted, against the induced variation.

    The error is first order in ``h``; the tolerance is ``tol_factor * h *
    max(1, |K|)^2``.  The details record the ratio of errors at ``h`` and
    ``h/2`` (2 for a first-order error).
    """
    grid = state.grid
    dk = tf.maxnorm(tf.ext_d(to_components(K), grid))
    ok, r11 = gl.is_11(K, state.J, k_tol)
    if not ok or dk > k_tol * max(1.0, tf.maxnorm(K)):
        raise gl.GeometryError(f"K must be closed and of type (1,1) for J (dK {dk:.2e}, (1,1) {r11:.2e})")
    e1 = variation_errors(state, K, h)
    e2 = variation_errors(state, K, h / 2)
    r1, r2 = max(e1.values()), max(e2.values())
    tol = tol_factor * h * max(1.0, tf.maxnorm(K)) ** 2
    return _result(
        "variation_formulas",
        r1,
        tol,
        state,
        seed,
        errors=e1,
        errors_half=e2,
        ratio=r1 / r2 if r2 > 0 else float("inf"),
    )


def _apply_first(E, T):
    """``T(E X, Y)`` for a component 2-tensor ``T``."""
    return np.einsum("...cx,...cy->...xy", E, T)


def _apply_second(E, T):
    """``T(X, E Y)``."""
    return np.einsum("...xc,...cy->...xy", T, E)


def bismut_identity_residuals(state):
    """Residuals of four identities tying the Bismut-Ricci form to Riemannian data.

    With ``H = d^c_I omega_I``, ``theta`` the Lee form and ``Rc^B(X, Y) =
    tr(Z -> R^B(Z, X) Y)``:

    * ``rho(X, Y) = -Rc^B(X, IY) - (nabla^B_X theta)(IY)``
    * ``rho^{1,1}(X, IY) = Rc - H^2/4 + L_{theta#} g / 2``
    * ``rho^{2,0+0,2}(X, Y) = -(d*H(IX, Y) + d theta(IX, Y)) / 2``
    * ``rho^{2,0+0,2} = -(d(theta o I))^{2,0+0,2}``
    """
    grid, g, I, H = state.grid, state.g, state.I, state.H
    g_inv = np.linalg.inv(g)
    GB = tf.bismut(g, H, grid)
    rho = tf.ricci_form_trace(GB, I, grid)
    rho11 = 0.5 * (rho + tf.pullback_endo(rho, I, grid))
    rho20 = rho - rho11
    theta = tf.lee_form(g, I, grid)

    RcB = np.swapaxes(tf.ricci_tensor(GB, grid), -1, -2)
    nth = tf.covariant_derivative(theta, GB, grid)
    id1 = rho + _apply_second(I, RcB) + _apply_second(I, nth)

    Rc = tf.ricci_tensor(tf.levi_civita(g, grid), grid)
    H2 = np.einsum("...xab,...ycd,...ac,...bd->...xy", H, H, g_inv, g_inv)
    Lg = tf.lie(tf.sharp(theta, g), g, grid)
    id2 = _apply_second(I, rho11) - (Rc - 0.25 * H2 + 0.5 * Lg)

    dsH = tf.codiff(H, g, grid)
    dth = tf.ext_d(theta, grid)
    id3 = rho20 + 0.5 * (_apply_first(I, dsH) + _apply_first(I, dth))

    dIth = tf.ext_d(np.einsum("...c,...ca->...a", theta, I), grid)
    dIth20 = 0.5 * (dIth - tf.pullback_endo(dIth, I, grid))
    id4 = rho20 + dIth20
    return {
        "ricci_contraction": tf.maxnorm(id1),
        "type_11": tf.maxnorm(id2),
        "type_20": tf.maxnorm(id3),
        "type_20_lee": tf.maxnorm(id4),
        "rho": tf.maxnorm(rho),
        "theta": tf.maxnorm(theta),
        "H": tf.maxnorm(H),
    }


def check_bismut_identities(state, tol=1e-5, seed=None):
    res = bismut_identity_residuals(state)
    worst = max(res["ricci_contraction"], res["type_11"], res["type_20"], res["type_20_lee"])
    return _result("bismut_identities", worst, tol, state, seed, **res)


def sigchern2_residuals(state):
    """Lee-vector-field side against the curvature side, with the type sub-check."""
    grid, g, I, J = state.grid, state.g, state.I, state.J
    rho = tf.bismut_ricci(g, I, grid, H=state.H)[0]
    V = tf.sharp(tf.lee_form(g, J, grid) - tf.lee_form(g, I, grid), g)
    LJ = tf.lie(V, J, grid, up=1)
    lhs = np.einsum("...ay,...ax->...xy", g, LJ)
    C = gl.commutator(I, J)
    rhs = _apply_second(C, rho)
    return {
        "identity": tf.maxnorm(lhs - rhs),
        "lhs": tf.maxnorm(lhs),
        "rho_not_11_for_J": tf.maxnorm(rho - tf.pullback_endo(rho, J, grid)),
        "first_slot_residual": tf.maxnorm(lhs - _apply_first(C, rho)),
    }


def check_sigchern2(state, tol=1e-5, seed=None):
    res = sigchern2_residuals(state)
    worst = max(res["identity"], res["rho_not_11_for_J"])
    return _result("sigchern2", worst, tol, state, seed, **res)


def check_gkrf_equivalence(state, cfg=None, tol=1e-5, seed=None):
    """Terminal difference of the two GKRF formulations from the same data."""
    cfg = cfg or fl.FlowConfig(dt=1e-3, steps=10, certify_nijenhuis=False)
    a, rec_a = fl.gkrf_biherm(state, cfg)
    b, rec_b = fl.gkrf_generalized(state, cfg)
    diff = fl.terminal_difference(a, b)
    return _result(
        "gkrf_equivalence",
        diff,
        tol,
        state,
        seed,
        t_end=cfg.t_end,
        dt=cfg.dt,
        change=fl.terminal_difference(a, state),
        biherm=rec_a.summary(),
        generalized=rec_b.summary(),
    )


def corrupted_source(state, kind, seed=0, amplitude=0.05):
    """A ``K`` source that violates exactly one admissibility condition.

    ``non_11``: a fixed exact ``da``, closed but generically not (1,1) for ``J``.
    ``non_closed``: the (1,1) part, for the current ``J``, of a fixed random
    form; generically not closed.
    """
    rng = np.random.default_rng(seed)
    grid = state.grid
    if kind == "non_11":
        K = st.exact_two_form(state, random_one_form(grid, rng, amplitude=amplitude))
        return lambda s: K
    if kind == "non_closed":
        raw = random_two_form(grid, rng, amplitude=amplitude)
        return lambda s: gl.project_11(raw, s.J)
    raise ValueError(f"unknown corruption {kind!r}")


def corruption_outcome(state, source, dt=0.02, steps=5):
    """Flow with a non-admissible ``K`` source and report both certification residuals.

    Returns the shadow-pair commutator and Nijenhuis norms at the end.
    """
    cfg = fl.FlowConfig(
        dt=dt,
        steps=steps,
        k_source=source,
        enforce_k=False,
        abort_on_positivity=False,
        certify_every=steps,
        certify_nijenhuis=False,
    )
    _, rec = fl.canonical_flow(state, cfg)
    S1, S2 = rec.shadow
    twist = state.courant_twist
    K = source(state)
    return {
        "commutator": tf.maxnorm(gl.commutator(S1, S2)),
        "N(J1)": tf.nijenhuis_norm(S1, twist, state.grid),
        "N(J2)": tf.nijenhuis_norm(S2, twist, state.grid),
        "dK": tf.maxnorm(tf.ext_d(to_components(K), state.grid)),
        "is11": gl.is_11(K, state.J)[1],
    }


def check_corruption(state, kind, seed=0, dt=0.02, steps=5, clean_tol=1e-6, dirty_min=1e-4):
    """A corrupted ``K`` trips the certification residual predicted for its kind.

    ``non_11`` must break commutation and keep both structures integrable;
    ``non_closed`` must break integrability and keep commutation.  The
    residual is 0 when the observed failure class matches, 1 otherwise.
    """
    out = corruption_outcome(state, corrupted_source(state, kind, seed), dt, steps)
    nij = max(out["N(J1)"], out["N(J2)"])
    if kind == "non_11":
        match = out["commutator"] > dirty_min and nij < clean_tol
    else:
        match = nij > dirty_min and out["commutator"] < clean_tol
    return _result(f"corruption_{kind}", 0 if match else 1, 0, state, seed, **out)


# -- suite ---------------------------------------------------------------------------


DEFAULT_CHECKS = (
    "nijenhuis_variation",
    "partial_integrability",
    "compatibility_equivalence",
    "dk_equivalence",
    "variation_formulas",
    "bismut_identities",
    "sigchern2",
    "gkrf_equivalence",
)


def _suite_K(state):
    grid = state.grid
    x = grid.coords()
    Kc = np.zeros(grid.shape + (grid.dim,) * 2)
    Kc[..., 1, 2] = np.sin(x[0])
    Kc[..., 2, 1] = -np.sin(x[0])
    return to_components(Kc)


def run_check(name, state, tol=None, seed=0, cert_tol=1e-8, gkrf_steps=10, gkrf_dt=1e-3):
    """Run one named check with suite defaults.

    ``tol`` overrides the tolerance of the residual-type checks; the
    counting checks (equivalences, corruption) and the first-order
    variation check keep their own criteria.
    """
    kw = {} if tol is None else {"tol": tol}
    if name == "nijenhuis_variation":
        return check_nijenhuis_variation(state, _suite_K(state), seed=seed, cert_tol=cert_tol, **kw)
    if name == "partial_integrability":
        u = random_potential(state.grid, np.random.default_rng(seed))
        return check_partial_integrability(state, st.potential_two_form(state, u), seed=seed, **kw)
    if name == "compatibility_equivalence":
        return check_compatibility_equivalence(state, seed=seed, **kw)
    if name == "dk_equivalence":
        return check_dk_equivalence(state, seed=seed, **kw)
    if name == "variation_formulas":
        u = random_potential(state.grid, np.random.default_rng(seed))
        k_tol = 1e-8 if tol is None else max(1e-8, tol)
        return check_variation_formulas(state, st.potential_two_form(state, u), seed=seed, k_tol=k_tol)
    if name == "bismut_identities":
        return check_bismut_identities(state, seed=seed, **kw)
    if name == "sigchern2":
        return check_sigchern2(state, seed=seed, **kw)
    if name == "gkrf_equivalence":
        cfg = fl.FlowConfig(dt=gkrf_dt, steps=gkrf_steps, certify_nijenhuis=False)
        return check_gkrf_equivalence(state, cfg, seed=seed, **kw)
    if name in ("corruption_non_11", "corruption_non_closed"):
        return check_corruption(state, name.split("_", 1)[1], seed=seed)
    raise ValueError(f"unknown check {name!r}")


def run_suite(state, checks=DEFAULT_CHECKS, tol=None, seed=0, **kw):
    return [run_check(name, state, tol=tol, seed=seed, **kw) for name in checks]


def report_json(results):
    """Deterministic JSON text for a list of results."""
    return json.dumps([r.to_dict() for r in results], sort_keys=True, indent=2) + "\n"


def format_table(results):
    lines = [f"{'check':<28} {'residual':>12} {'tolerance':>12}  result"]
    for r in results:
        lines.append(f"{r.name:<28} {r.residual:>12.3e} {r.tolerance:>12.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
