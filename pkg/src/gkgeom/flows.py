"""Canonical deformations and generalized Kähler-Ricci flow on torus states.

The integrated variables are bihermitian fields.  A canonical flow driven by
``K_t`` advances ``(g, b, omega_I, omega_J, I, J)`` with the induced variation
formulas and, in parallel, a shadow copy of the generalized pair ``(J1, J2)``
with ``J_i' = Phi_K(J_i)``.  Monitors compare the two and track the quantities
that canonical flows are supposed to preserve.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import genlin as gl
from . import structures as st
from . import torusfield as tf
from .structures import FlowAbort, GKState, to_components

RICCI_STEP_LIMIT = 0.1


@dataclass
class FlowConfig:
    dt: float = 0.01
    steps: int = 10
    integrator: str = "rk4"
    k_source: str | Callable = "potential"
    potential: st.Potential | None = None
    monitors: tuple = ()
    abort_on_positivity: bool = True
    enforce_k: bool = True
    k_tol: float = 1e-6
    certify_every: int | None = None
    certify_nijenhuis: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if int(self.steps) < 1:
            raise ValueError("steps must be >= 1")
        if self.integrator not in ("rk4", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        self.steps = int(self.steps)

    @property
    def t_end(self):
        return self.dt * self.steps

    @property
    def cert_stride(self):
        return self.certify_every or max(1, math.ceil(self.steps / 10))


@dataclass
class FlowRecord:
    columns: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    certifications: list = field(default_factory=list)
    state: GKState | None = None
    aborted: str | None = None

    def add(self, row: dict):
        for key in row:
            if key not in self.columns:
                self.columns.append(key)
        self.rows.append(row)

    @property
    def times(self):
        return [r["t"] for r in self.rows]

    def column(self, name):
        return np.array([r.get(name, np.nan) for r in self.rows], dtype=float)

    def max(self, name):
        col = self.column(name)
        col = col[~np.isnan(col)]
        return float(col.max()) if col.size else float("nan")

    def to_csv(self, path):
        cols = ["t"] + [c for c in self.columns if c != "t"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow(["" if r.get(c) is None else f"{r[c]:.12e}" for c in cols])

    def summary(self):
        out = {c: self.max(c) for c in self.columns if c != "t"}
        out["t_final"] = self.rows[-1]["t"] if self.rows else 0.0
        out["aborted"] = self.aborted
        return out


# -- K sources ------------------------------------------------------------------


def bismut_ricci_map(state):
    """Bismut-Ricci form of ``(g, I)`` as a map-convention field, with its I-type parts."""
    rho, rho11, rho20 = tf.bismut_ricci(state.g, state.I, state.grid, H=state.H)
    return to_components(rho), to_components(rho11), to_components(rho20)


def make_k_source(cfg: FlowConfig, state: GKState):
    src = cfg.k_source
    if callable(src):
        return src
    if src == "potential":
        pot = cfg.potential if cfg.potential is not None else st.default_potential(state.label or "kaehler")
        u = pot.field(state.grid)
        return lambda s: st.potential_two_form(s, u)
    if src == "exact":
        a = cfg.potential.one_form_field(state.grid)
        K = st.exact_two_form(state, a)
        return lambda s: K
    if src == "bismut_ricci":
        # the canonical deformation that moves omega_I by -rho^{1,1}
        return lambda s: -bismut_ricci_map(s)[0]
    raise ValueError(f"unknown K source {src!r}")


# -- integration ----------------------------------------------------------------


def _rk_combine(y, ks, h, integrator):
    if integrator == "euler":
        return [a + h * k for a, k in zip(y, ks[0])]
    k1, k2, k3, k4 = ks
    return [a + (h / 6) * (p + 2 * q + 2 * r + s) for a, p, q, r, s in zip(y, k1, k2, k3, k4)]


def _rk_step(y, rhs, h, integrator):
    if integrator == "euler":
        return _rk_combine(y, [rhs(y)], h, integrator)
    k1 = rhs(y)
    k2 = rhs([a + 0.5 * h * k for a, k in zip(y, k1)])
    k3 = rhs([a + 0.5 * h * k for a, k in zip(y, k2)])
    k4 = rhs([a + h * k for a, k in zip(y, k3)])
    return _rk_combine(y, [k1, k2, k3, k4], h, integrator)


def _cheap_monitors(state, ref, K, twist0, shadow=None):
    grid = state.grid
    J1, J2 = state.pair
    mon = {
        "I_drift": tf.maxnorm(state.I - ref.I),
        "sigma_drift": tf.maxnorm(state.sigma - ref.sigma),
        "dK": tf.maxnorm(tf.ext_d(to_components(K), grid)),
        "is11_J": gl.is_11(K, state.J)[1],
        "J1^2+1": gl.almost_complex_residual(J1),
        "J2^2+1": gl.almost_complex_residual(J2),
        "[J1,J2]": tf.maxnorm(gl.commutator(J1, J2)),
        "twist_drift": tf.maxnorm(st.natural_twist(state) - twist0),
        "positivity": gl.positivity_margin(J1, J2),
    }
    if shadow is not None:
        S1, S2 = shadow
        mon["shadow_[J1,J2]"] = tf.maxnorm(gl.commutator(S1, S2))
        mon["shadow_mismatch"] = max(tf.maxnorm(S1 - J1), tf.maxnorm(S2 - J2))
    return mon


def _certify(state, twist0, with_nijenhuis):
    _, res = state.certify(nijenhuis=False)
    out = {"cert_torsion": res["torsion dcI wI + dcJ wJ"], "cert_dH": res["dH"]}
    if with_nijenhuis:
        J1, J2 = state.pair
        out["N(J1)"] = tf.nijenhuis_norm(J1, twist0, state.grid)
        out["N(J2)"] = tf.nijenhuis_norm(J2, twist0, state.grid)
    return out


def canonical_flow(state: GKState, cfg: FlowConfig, record: FlowRecord | None = None):
    """Integrate the canonical family driven by ``cfg.k_source``.

    Returns ``(final_state, record)``.  Raises :class:`FlowAbort` with the
    last good state and the partial record on positivity loss or when ``K``
    leaves the admissible class (with ``cfg.enforce_k``).
    """
    grid = state.grid
    record = record if record is not None else FlowRecord()
    source = make_k_source(cfg, state)
    twist0 = state.courant_twist
    ref = state
    I = state.I

    def unpack(y):
        g, b, wI, wJ, J = y[:5]
        return state.replace(g=0.5 * (g + np.swapaxes(g, -1, -2)), b=b, J=J)

    known = {}

    def rhs(y):
        s = unpack(y)
        K = known["K"] if known.get("g") is y[0] else source(s)
        v = gl.induced_variation(s.bh, K, check=False)
        return [v.g, v.b, v.omega_I, v.omega_J, v.J, gl.phi_k(y[5], K, check=False), gl.phi_k(y[6], K, check=False)]

    J1, J2 = state.pair
    y = [state.g, state.b, state.omega_I, state.omega_J, state.J, J1, J2]
    t = 0.0
    K0 = source(state)
    row = {"t": 0.0, **_cheap_monitors(state, ref, K0, twist0, (J1, J2))}
    row["omega_consistency"] = 0.0
    row.update(_certify(state, twist0, cfg.certify_nijenhuis))
    record.add(row)
    current = state
    h = cfg.dt
    for step in range(1, cfg.steps + 1):
        K = K0
        if cfg.enforce_k:
            dk = tf.maxnorm(tf.ext_d(to_components(K), grid))
            r11 = gl.is_11(K, current.J)[1]
            if dk > cfg.k_tol or r11 > cfg.k_tol:
                record.aborted = f"K left the admissible class at t={t:.4f} (dK {dk:.2e}, (1,1) {r11:.2e})"
                raise FlowAbort(record.aborted, state=current, record=record)
        y_prev = y
        known.update(g=y[0], K=K)
        y = _rk_step(y, rhs, h, cfg.integrator)
        t = step * h
        new = unpack(y)
        try:
            st._check_positive(new.g, "flow")
        except gl.GeometryError as exc:
            record.aborted = str(exc)
            record.state = current
            raise FlowAbort(record.aborted, state=current, record=record) from exc
        row = {"t": t}
        Knew = source(new)
        K0 = Knew
        row.update(_cheap_monitors(new, ref, Knew, twist0, (y[5], y[6])))
        row["omega_consistency"] = max(tf.maxnorm(y[2] - new.g @ I), tf.maxnorm(y[3] - new.g @ new.J))
        row["phi_crosscheck"] = max(
            tf.maxnorm(y[5] - y_prev[5] - h * gl.phi_k(y_prev[5], K, check=False)),
            tf.maxnorm(y[6] - y_prev[6] - h * gl.phi_k(y_prev[6], K, check=False)),
        )
        if new.bh.F_plus is not None and cfg.k_source == "potential":
            u = (cfg.potential or st.default_potential(state.label or "kaehler")).field(grid)
            X = st.hamiltonian_vector_field(new.sigma, u, grid)
            row["hamiltonian_residual"] = tf.maxnorm(tf.lie(X, new.J, grid, up=1) - new.sigma @ Knew)
        if step % cfg.cert_stride == 0 or step == cfg.steps:
            row.update(_certify(new, twist0, cfg.certify_nijenhuis))
        record.add(row)
        current = new
        if cfg.abort_on_positivity and not row["positivity"] > 0:
            record.aborted = f"generalized metric lost positivity at t={t:.4f}"
            raise FlowAbort(record.aborted, state=current, record=record)
    final = current.replace(label=state.label, meta={**state.meta, "t": state.meta.get("t", 0.0) + t})
    record.state = final
    record.shadow = (y[5], y[6])
    return final, record


def gkrf_generalized(state: GKState, cfg: FlowConfig):
    """GKRF as the canonical deformation driven by the Bismut-Ricci form of ``(g, I)``."""
    cfg2 = FlowConfig(**{**cfg.__dict__, "k_source": "bismut_ricci"})
    return canonical_flow(state, cfg2)


def lee_vector_field(state):
    """``(theta_J# - theta_I#) / 2``."""
    grid = state.grid
    thI = tf.lee_form(state.g, state.I, grid)
    thJ = tf.lee_form(state.g, state.J, grid)
    return 0.5 * tf.sharp(thJ - thI, state.g)


def gkrf_biherm(state: GKState, cfg: FlowConfig):
    """GKRF in the I-fixed gauge: ``omega_I' = -rho^{1,1}``, ``J' = L_V J`` with the Lee vector field ``V``.

    ``b`` moves with the same rule as the Ricci-driven canonical deformation.
    """
    grid = state.grid
    I = state.I
    record = FlowRecord()
    twist0 = state.courant_twist
    ref = state

    def unpack(y):
        wI, J, b = y
        g = -(wI @ I)
        return state.replace(g=0.5 * (g + np.swapaxes(g, -1, -2)), b=b, J=J)

    def rhs(y):
        s = unpack(y)
        rho, rho11, _ = bismut_ricci_map(s)
        if tf.maxnorm(rho) * cfg.dt > RICCI_STEP_LIMIT:
            raise FlowAbort(f"Bismut-Ricci form too large for dt ({tf.maxnorm(rho):.3e})", state=s, record=record)
        V = lee_vector_field(s)
        return [-rho11, tf.lie(V, y[1], grid, up=1), 0.5 * gl.form_anticommutator(rho, I)]

    y = [state.omega_I, state.J, state.b]
    rho0 = bismut_ricci_map(state)[0]
    record.add({"t": 0.0, **_cheap_monitors(state, ref, -rho0, twist0)})
    current = state
    for step in range(1, cfg.steps + 1):
        try:
            y = _rk_step(y, rhs, cfg.dt, cfg.integrator)
        except FlowAbort as exc:
            record.aborted = str(exc)
            exc.state, exc.record = current, record
            raise
        new = unpack(y)
        try:
            st._check_positive(new.g, "gkrf")
        except gl.GeometryError as exc:
            record.aborted = str(exc)
            raise FlowAbort(record.aborted, state=current, record=record) from exc
        row = {"t": step * cfg.dt}
        row.update(_cheap_monitors(new, ref, -bismut_ricci_map(new)[0], twist0))
        if step % cfg.cert_stride == 0 or step == cfg.steps:
            row.update(_certify(new, twist0, cfg.certify_nijenhuis))
        record.add(row)
        current = new
        if cfg.abort_on_positivity and not row["positivity"] > 0:
            record.aborted = f"generalized metric lost positivity at t={step * cfg.dt:.4f}"
            raise FlowAbort(record.aborted, state=current, record=record)
    record.state = current
    return current, record


def terminal_difference(a: GKState, b: GKState):
    """Max field difference over ``(g, b, I, J)``."""
    return max(tf.maxnorm(a.g - b.g), tf.maxnorm(a.b - b.b), tf.maxnorm(a.I - b.I), tf.maxnorm(a.J - b.J))
