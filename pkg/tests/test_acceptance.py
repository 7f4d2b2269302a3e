"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one ``criterion k: PASS|FAIL ...`` line; the lines are
also collected into a section of the pytest terminal summary.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from gkgeom import flows as fl
from gkgeom import genlin as gl
from gkgeom import structures as st
from gkgeom import torusfield as tf
from gkgeom import verify as vf


def report(k, ok, msg):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} {msg}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def potential_hessian(pot, grid):
    """Exact second derivatives of a trigonometric potential, ``H[..., a, b]``."""
    x = grid.coords()
    d = grid.dim
    H = np.zeros(grid.shape + (d, d))
    for coef, factors in pot.terms:
        # each factor is sin(m x^axis + p); its derivatives are m cos, -m^2 sin
        vals = [(axis, m * x[axis] + p, m) for axis, m, p in factors]
        for a in range(d):
            for b in range(d):
                term = np.full(grid.shape, float(coef))
                orders = {}
                for axis in (a, b):
                    orders[axis] = orders.get(axis, 0) + 1
                for axis, arg, m in vals:
                    k = orders.pop(axis, 0)
                    term = term * (np.sin(arg), m * np.cos(arg), -(m**2) * np.sin(arg))[k]
                if orders:  # a derivative along an axis the term does not depend on
                    term = 0.0
                H[..., a, b] += term
    return H


# -- criterion 1 --------------------------------------------------------------


def test_criterion_1_round_trip():
    rng = np.random.default_rng(2024)
    kinds = ("generic", "kaehler", "commuting", "hyperkaehler")
    t0 = time.perf_counter()
    worst_trip = worst_post = 0.0
    min_margin = np.inf
    for i in range(1000):
        bh = gl.random_biherm(rng, 2, kinds[i % 4])
        J1, J2 = gl.gualtieri_map(bh)
        back = gl.extract_biherm(J1, J2)
        worst_trip = max(worst_trip, *(np.abs(getattr(back, k) - getattr(bh, k)).max() for k in ("g", "b", "I", "J")))
        worst_post = max(
            worst_post,
            gl.almost_complex_residual(J1),
            gl.almost_complex_residual(J2),
            gl.pairing_skew_residual(J1),
            gl.pairing_skew_residual(J2),
            np.abs(gl.commutator(J1, J2)).max(),
        )
        min_margin = min(min_margin, gl.positivity_margin(J1, J2))
    elapsed = time.perf_counter() - t0
    ok = worst_trip < 1e-12 and worst_post < 1e-12 and min_margin > 0 and elapsed < 5
    report(1, ok, f"round trip {worst_trip:.2e}, post-conditions {worst_post:.2e}, min positivity {min_margin:.2e}, {elapsed:.2f}s")


# -- criterion 2 --------------------------------------------------------------


def test_criterion_2_compatibility(kaehler16, commuting16, joyce16):
    t0 = time.perf_counter()
    parts, ok = [], True
    for s in (kaehler16, commuting16, joyce16):
        r = vf.check_compatibility_equivalence(s, samples=100, seed=7, tol=1e-10, margin=1e-3)
        ok &= r.passed
        parts.append(f"{s.label} {int(r.residual)} violations")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    report(2, ok, f"{', '.join(parts)}, {elapsed:.1f}s")


# -- criterion 3 --------------------------------------------------------------


def test_criterion_3_nijenhuis_variation(kaehler16):
    t0 = time.perf_counter()
    K = vf._suite_K(kaehler16)
    r1 = vf.check_nijenhuis_variation(kaehler16, K, h=1e-3)
    r2 = vf.check_nijenhuis_variation(kaehler16, K, h=5e-4)
    elapsed = time.perf_counter() - t0
    ratio = r1.residual / r2.residual
    ok = r1.residual < 5e-4 and ratio >= 4 and elapsed < 120
    report(3, ok, f"residual {r1.residual:.2e} at h=1e-3, {r2.residual:.2e} at h=5e-4, ratio {ratio:.3f}, {elapsed:.1f}s")


# -- criterion 4 --------------------------------------------------------------


def test_criterion_4_strictly_weaker(kaehler16):
    t0 = time.perf_counter()
    K, info = vf.strictly_weaker_two_form(kaehler16, "J1")
    dK = tf.maxnorm(tf.ext_d(st.to_components(K), kaehler16.grid))
    r = vf.check_partial_integrability(kaehler16, K, which=("J1",))
    elapsed = time.perf_counter() - t0
    ok = r.passed and dK > 0.1 and elapsed < 30
    report(4, ok, f"|dK| {dK:.3f}, J1 condition residual {r.residual:.2e} (tol {r.tolerance:.1e}), {elapsed:.1f}s")


# -- criteria 5, 6, 7: canonical flows ------------------------------------------


FLOW_SETUPS = {"kaehler": (0.1, 10), "commuting": (0.1, 10), "joyce": (0.02, 10)}


@pytest.fixture(scope="module")
def canonical_runs(kaehler16, commuting16, joyce16):
    out = {}
    for s in (kaehler16, commuting16, joyce16):
        dt, steps = FLOW_SETUPS[s.label]
        t0 = time.perf_counter()
        cfg = fl.FlowConfig(dt=dt, steps=steps, potential=st.default_potential(s.label))
        final, rec = fl.canonical_flow(s, cfg)
        out[s.label] = (s, final, rec, time.perf_counter() - t0)
    return out


def test_criterion_5_canonical_flows(canonical_runs, commuting16, joyce16):
    elapsed = sum(v[3] for v in canonical_runs.values())
    parts, ok = [], True
    for name, (_, _, rec, _) in canonical_runs.items():
        nij = max(rec.max("N(J1)"), rec.max("N(J2)"))
        comm = rec.max("[J1,J2]")
        pos = float(np.min(rec.column("positivity")))
        ok &= nij < 1e-6 and comm < 1e-9 and pos > 0 and rec.aborted is None
        parts.append(f"{name} N {nij:.1e} comm {comm:.1e} pos {pos:.3f}")
    t0 = time.perf_counter()
    for s in (commuting16, joyce16):
        for kind in ("non_11", "non_closed"):
            r = vf.check_corruption(s, kind)
            ok &= r.passed
            parts.append(f"{s.label}/{kind} {'caught' if r.passed else 'missed'}")
    elapsed += time.perf_counter() - t0
    ok &= elapsed < 600
    report(5, ok, f"{'; '.join(parts)}; {elapsed:.0f}s")


def test_criterion_6_closed_forms(canonical_runs):
    parts, ok = [], True
    s, final, rec, _ = canonical_runs["kaehler"]
    t = rec.times[-1]
    H = potential_hessian(st.default_potential("kaehler"), s.grid)
    I = s.I
    ddc = -np.einsum("...ac,...cb->...ab", H, I) + np.einsum("...bc,...ca->...ab", H, I)
    err = tf.maxnorm(final.omega_I - s.omega_I - t * st.to_components(ddc))
    ok &= err < 1e-8
    parts.append(f"kaehler {err:.2e}")

    s, final, rec, _ = canonical_runs["commuting"]
    t = rec.times[-1]
    H = potential_hessian(st.default_potential("commuting"), s.grid)
    K = np.zeros_like(H)
    lap_plus = H[..., 0, 0] + H[..., 1, 1]
    lap_minus = H[..., 2, 2] + H[..., 3, 3]
    K[..., 0, 1], K[..., 1, 0] = lap_plus, -lap_plus
    K[..., 2, 3], K[..., 3, 2] = -lap_minus, lap_minus
    err = tf.maxnorm(final.omega_I - s.omega_I - t * st.to_components(K))
    ok &= err < 1e-8
    parts.append(f"commuting {err:.2e}")

    _, _, rec, _ = canonical_runs["joyce"]
    ham = rec.max("hamiltonian_residual")
    ok &= ham < 1e-7
    parts.append(f"joyce L_X J - sigma K {ham:.2e}")
    report(6, ok, ", ".join(parts))


def test_criterion_7_sigma_and_I(canonical_runs):
    parts, ok = [], True
    for name, (_, _, rec, _) in canonical_runs.items():
        sd, idr = rec.max("sigma_drift"), rec.max("I_drift")
        ok &= sd < 1e-8 and idr < 1e-8
        parts.append(f"{name} sigma {sd:.1e} I {idr:.1e}")
    report(7, ok, ", ".join(parts))


# -- criterion 8 --------------------------------------------------------------


def _curvature_residuals(state):
    b = vf.bismut_identity_residuals(state)
    c = vf.sigchern2_residuals(state)
    return max(b["ricci_contraction"], b["type_11"], b["type_20"], b["type_20_lee"]), max(c["identity"], c["rho_not_11_for_J"])


def test_criterion_8_curvature_identities(joyce16):
    sig = vf.check_sigchern2(joyce16)
    bis = vf.check_bismut_identities(joyce16)
    study = {}
    for N in (8, 12, 24):
        study[N] = max(_curvature_residuals(st.build_scenario("joyce", N=N, cert_tol=1e-6)))
    study[16] = max(sig.residual, bis.residual)
    levels = sorted(study)
    decay = all(study[a] > study[b] for a, b in zip(levels, levels[1:]))
    ok = sig.residual < 1e-5 and bis.residual < 1e-5 and decay
    trend = ", ".join(f"N={N} {study[N]:.2e}" for N in sorted(study))
    report(8, ok, f"sigchern2 {sig.residual:.2e}, bismut {bis.residual:.2e} at N=16; convergence {trend}")


# -- criterion 9 --------------------------------------------------------------


def test_criterion_9_gkrf(kaehler16, joyce16):
    t0 = time.perf_counter()
    cfg = fl.FlowConfig(dt=1e-3, steps=10, certify_nijenhuis=False)
    rk = vf.check_gkrf_equivalence(kaehler16, cfg, tol=1e-6)
    rj = vf.check_gkrf_equivalence(joyce16, cfg, tol=1e-5)
    elapsed = time.perf_counter() - t0
    ok = rk.passed and rj.passed and elapsed < 900
    report(
        9,
        ok,
        f"kaehler diff {rk.residual:.2e} (change {rk.details['change']:.1e}), "
        f"joyce diff {rj.residual:.2e} (change {rj.details['change']:.1e}), {elapsed:.0f}s",
    )


# -- criterion 10 -------------------------------------------------------------


def test_criterion_10_rk4_order(joyce16):
    t_end = 0.2

    def run(dt):
        cfg = fl.FlowConfig(dt=dt, steps=round(t_end / dt), certify_every=10**6, certify_nijenhuis=False)
        return fl.canonical_flow(joyce16, cfg)[0]

    ref = run(0.025)
    errs = [fl.terminal_difference(run(dt), ref) for dt in (0.2, 0.1, 0.05)]
    factors = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = min(factors) >= 14
    report(10, ok, f"errors {', '.join(f'{e:.2e}' for e in errs)} at dt 0.2/0.1/0.05, factors {factors[0]:.1f}, {factors[1]:.1f}")
