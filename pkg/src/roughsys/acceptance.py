"""The ten acceptance checks, each returning a :class:`CriterionResult`.

Shared by ``roughsys verify`` and ``tests/test_acceptance.py``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as D
from .coefficients import (CarlesonDensity, carleson_density, identity_tensor, lame_tensor,
                           legendre_constants, normalize_a00, zero_top_row)
from .config import from_dict
from .diagnostics import AveragedField
from .grid import ConeSpec, GridFunction, strip
from .profiles import perturbed_identity, random_smooth_boundary, random_smooth_field
from .pullback import flatten_problem, pushforward_coeffs
from .scenarios import run
from .solver import discrete_operator, extend_by_zero, solve_dirichlet


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    seconds: float
    limit: float
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.passed and self.seconds < self.limit

    def line(self) -> str:
        verdict = "PASS" if self.ok else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{verdict}] {self.number:2d}. {self.title} ({self.seconds:.1f}s / {self.limit:.0f}s) {shown}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _timed(number, title, limit):
    def wrap(fn):
        def run_check():
            t0 = time.perf_counter()
            passed, details = fn()
            return CriterionResult(number, title, bool(passed), time.perf_counter() - t0, limit, details)
        run_check.__name__ = fn.__name__
        run_check.__doc__ = fn.__doc__
        return run_check
    return wrap


def lame_normalized(dom, lam=1.0, mu=3.0):
    co = lame_tensor(dom, lam, mu, 0.5 * (mu - lam))
    return zero_top_row(normalize_a00(co))[0]


@_timed(1, "Fubini identity", 10.0)
def fubini():
    dom = strip(2, 64)
    worst = {}
    for a in (0.5, 1.0):
        devs = []
        for seed in range(5):
            u = random_smooth_field(dom, seed)
            s2 = D.square_function(u, ConeSpec(a)).lp_norm(2.0) ** 2
            devs.append(abs(s2 / D.weighted_energy(u) / (2 * a) - 1.0))
        worst[f"max_dev_a{a:g}"] = float(max(devs))
    return all(v <= 0.02 for v in worst.values()), worst


def fourier_error(res: int) -> float:
    dom = strip(2, res)
    x = dom.lateral_coords()[..., 0]
    x0 = dom.node_x0()
    exact = np.cos(2 * np.pi * x)[None] * np.sinh(2 * np.pi * (1 - x0)) / np.sinh(2 * np.pi)
    u, _ = solve_dirichlet(dom, identity_tensor(dom), np.cos(2 * np.pi * x))
    return float(np.sqrt(np.sum((u.values[..., 0] - exact) ** 2) * dom.cell_volume))


@_timed(2, "Solver convergence", 30.0)
def convergence():
    e32, e64 = fourier_error(32), fourier_error(64)
    ratio = e32 / e64
    return 3.6 <= ratio <= 4.4, {"err32": e32, "err64": e64, "ratio": ratio}


@_timed(3, "Lame ellipticity gate", 5.0)
def lame_gate():
    dom = strip(2, 8)
    good = legendre_constants(lame_tensor(dom, 1.0, 3.0, 1.0), rank_one=False).legendre_min
    flat = legendre_constants(lame_tensor(dom, 2.0, 2.0, 0.0), rank_one=False).legendre_min
    return abs(good - 1.0) <= 1e-6 and flat <= 1e-8, {"legendre_1_3": good, "legendre_equal": flat}


LAME_LM = (1.0, 3.0)


def _lame_field(x0, x1, k=2 * np.pi):
    return np.stack([np.exp(-x0) * np.cos(k * x1), x0 ** 2 * np.sin(k * x1)], -1)


def _lame_operator(x0, x1, k=2 * np.pi):
    """``mu Lap u + (lam + mu) grad div u`` for :func:`_lame_field`."""
    lam, mu = LAME_LM
    c, s, e = np.cos(k * x1), np.sin(k * x1), np.exp(-x0)
    lap0 = e * c * (1 - k * k)
    lap1 = (2 - k * k * x0 ** 2) * s
    gd0 = e * c + 2 * k * x0 * c
    gd1 = k * e * s - k * k * x0 ** 2 * s
    return np.stack([mu * lap0 + (lam + mu) * gd0, mu * lap1 + (lam + mu) * gd1], -1)


def equivalence_residual(res: int, L: float = 0.05):
    """Max nodal gap between the flattened discrete operator and the pulled-back ``L u``."""
    lam, mu = LAME_LM
    x = strip(2, res).lateral_coords()[..., 0]
    graph = strip(2, res, phi_samples=L / (2 * np.pi) * np.sin(2 * np.pi * x))
    coeffs = lame_tensor(graph, lam, mu, 0.5 * (mu - lam))
    fr = flatten_problem(graph, coeffs, np.zeros((res, 2)))
    x0 = fr.domain.node_x0() + fr.pmap.s
    x1 = np.broadcast_to(x, x0.shape)
    disc = discrete_operator(fr.domain, fr.coeffs, _lame_field(x0, x1))
    pushed = pushforward_coeffs(fr.pmap, coeffs)
    inv = np.linalg.inv(pushed.A[..., 0, 0, :, :])
    ref = (1 + fr.pmap.ds0)[..., None] * np.einsum("...ab,...b->...a", inv, _lame_operator(x0, x1))
    A = fr.coeffs.A
    a00 = float(np.max(np.abs(A[..., 0, 0, :, :] - np.eye(2))))
    a0j = float(np.max(np.abs(A[..., 0, 1:, :, :])))
    return float(np.max(np.abs(disc - ref[1:-1]))), a00, a0j


@_timed(4, "Normalization postconditions", 60.0)
def normalization():
    r32, a00_32, a0j_32 = equivalence_residual(32)
    r64, a00_64, a0j_64 = equivalence_residual(64)
    defect = max(a00_32, a0j_32, a00_64, a0j_64)
    ratio = r32 / r64
    return defect <= 1e-12 and 3.5 <= ratio <= 4.5, {"defect": defect, "res32": r32,
                                                      "res64": r64, "ratio": ratio}


def tent_norm():
    dom = strip(2, 128, h=1.0, period=2.0)
    lat = dom.cell_lateral_coords()[..., 0]
    lat = np.minimum(lat, dom.period - lat)
    inside = dom.cell_delta() ** 2 + lat[None] ** 2 < 1.0
    return D.carleson_norm(CarlesonDensity(inside.astype(float), dom)).norm


def log_divergent_table(res: int = 128):
    dom = strip(2, res)
    d = np.where(dom.node_delta() > 0, dom.node_delta(), dom.dx0 / 2)
    base = identity_tensor(dom)
    A = base.A * (1.0 + np.sin(np.log(d)) / 10.0)[..., None, None, None, None]
    return D.carleson_norm(carleson_density(base.replace(A, None))).table


def longest_increasing_run(vals) -> int:
    """Number of consecutive scales in the longest strictly increasing stretch."""
    best = cur = 1 if vals else 0
    for a, b in zip(vals, vals[1:]):
        cur = cur + 1 if b > a else 1
        best = max(best, cur)
    return best


@_timed(5, "Carleson machinery", 30.0)
def carleson():
    tent = tent_norm()
    dom = strip(2, 64)
    n1 = D.carleson_norm(carleson_density(perturbed_identity(dom, 0.05))).norm
    n2 = D.carleson_norm(carleson_density(perturbed_identity(dom, 0.1))).norm
    scaling = n2 / n1
    table = log_divergent_table()
    vals = [table[r] for r in sorted(table)]
    run_len = longest_increasing_run(vals)
    ok = abs(tent / (np.pi / 4) - 1) <= 0.03 and abs(scaling - 4.0) <= 1e-10 and run_len >= 4
    return ok, {"tent": tent, "scaling": scaling, "increasing_scales": run_len, "log_table": vals}


def hbar_profile(c=2.0, nus=(0.5, 0.8, 1.0, 1.5, 2.5)):
    dom = strip(2, 64, h=4.0)
    w = np.broadcast_to(c / (1.0 + dom.node_x0()), dom.node_shape).copy()
    field_ = AveragedField(w, GridFunction(np.zeros(dom.node_shape), dom))
    gaps = []
    for nu in nus:
        hb = D.stopping_time(field_, nu, ConeSpec(1.0)).values
        gaps.append(float(np.max(np.abs(hb - max(0.0, c / nu - 1.0)))))
    return max(gaps), dom.dx0


def hbar_slopes(seeds=range(5), a=1.0, fractions=(0.3, 0.6)):
    dom = strip(2, 64)
    co = lame_normalized(dom)
    worst = 0.0
    for seed in seeds:
        u, _ = solve_dirichlet(dom, co, random_smooth_boundary(dom, seed, 2))
        w = D.l2_average(extend_by_zero(u, 2 * dom.h), top_pad=True)
        nt = D.ntmax(w, ConeSpec(a)).values
        for frac in fractions:
            hb = D.stopping_time(w, frac * nt.max(), ConeSpec(a)).values
            worst = max(worst, float(np.max(np.abs(np.roll(hb, -1) - hb)) / dom.dl))
    return worst, dom.dx0 / dom.dl


@_timed(6, "Stopping time", 30.0)
def stopping():
    slope, slack = hbar_slopes()
    gap, layer = hbar_profile()
    ok = slope <= 1.0 + 2 * slack and gap <= layer + 1e-12
    return ok, {"max_slope": slope, "bound": 1.0 + 2 * slack, "profile_gap": gap, "layer": layer}


def _equivalence_cfg(coeffs):
    return from_dict({"scenario": "equivalence",
                      "domain": {"n": 2, "N": 2, "resolutions": [48, 64]},
                      "coeffs": coeffs,
                      "data": {"f": [{"kind": "fourier", "k": 1}, {"kind": "random-smooth", "seed": 0}]},
                      "params": {"p_grid": [1.0, 2.0, 3.0]}})


SMALL_LAME = {"kind": "lame", "lam": {"profile": "sine", "value": 1.0, "amplitude": 0.05},
              "mu": {"profile": "sine", "value": 3.0, "amplitude": 0.05}}


@_timed(7, "S / Ntilde equivalence", 180.0)
def equivalence():
    drifts = {}
    finite = True
    for name, spec in (("identity", {"kind": "identity"}), ("lame", SMALL_LAME)):
        rep = run(_equivalence_cfg(spec))
        drifts[name] = rep.metrics["max_refinement_drift"]
        for row in rep.tables["norms"]["rows"]:
            finite &= row[5] is not None and row[6] is not None and np.isfinite(row[5]) and np.isfinite(row[6])
    return finite and max(drifts.values()) < 0.10, {f"drift_{k}": v for k, v in drifts.items()}


BATTERY = [{"kind": "fourier", "k": 1}, {"kind": "fourier", "k": 2}, {"kind": "bump"},
           {"kind": "random-smooth", "seed": 0}]


@_timed(8, "Strip-height independent solvability", 180.0)
def solvability():
    rep = run(from_dict({"scenario": "dirichlet-l2",
                         "domain": {"n": 2, "N": 2, "resolutions": [64]},
                         "coeffs": {"kind": "lame", "lam": 1.0, "mu": 3.0},
                         "data": {"f": BATTERY},
                         "params": {"h_sweep": [1.0, 2.0, 4.0]}}))
    m = rep.metrics
    return m["C_drift"] < 0.10, {"C": m["C_sweep"], "drift": m["C_drift"]}


GAMMAS = (0.4, 0.2, 0.1, 0.05)


@_timed(9, "Good-lambda trend", 120.0)
def good_lambda():
    rep = run(from_dict({"scenario": "good-lambda",
                         "domain": {"n": 2, "N": 2, "resolutions": [64]},
                         "coeffs": {"kind": "lame", "lam": 1.0, "mu": 3.0},
                         "data": {"f": [{"kind": "random-smooth", "seed": 0}]},
                         "params": {"gamma_grid": list(GAMMAS)}}))
    consts = [row[1] for row in rep.tables["constants"]["rows"]]
    m = rep.metrics
    return bool(m["strictly_decreasing"]) and bool(m["inclusion_holds"]), {
        "C": consts, "inclusion": bool(m["inclusion_holds"])}


@_timed(10, "Lp near 2", 180.0)
def lp_near_two():
    out = {}
    ok = True
    for name, spec in (("identity", {"kind": "identity"}), ("lame", SMALL_LAME)):
        rep = run(from_dict({"scenario": "lp-sweep",
                             "domain": {"n": 2, "N": 2, "resolutions": [64]},
                             "coeffs": spec}))
        ch = rep.metrics["max_adjacent_change"]
        finite = all(r[3] is not None and np.isfinite(r[3]) for r in rep.tables["ratios"]["rows"])
        ok &= finite and ch < 0.25
        out[f"change_{name}"] = ch
    return ok, out


ALL = [fubini, convergence, lame_gate, normalization, carleson, stopping, equivalence,
       solvability, good_lambda, lp_near_two]


def run_all(selected=None):
    checks = ALL if not selected else [c for i, c in enumerate(ALL, 1) if i in selected]
    return [c() for c in checks]
