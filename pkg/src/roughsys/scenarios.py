"""Scenario runners and report emission."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as D
from . import kernels
from .coefficients import (carleson_density, legendre_constants, normalize_a00,
                           zero_top_row)
from .config import ScenarioConfig
from .errors import ConfigError, IoError, RoughSysError
from .grid import ConeSpec, build_domain
from .profiles import boundary_data, build_coefficients, data_label, phi_profile
from .pullback import flatten_problem
from .solver import extend_by_zero, height_sweep, solve_dirichlet

__version__ = "0.1.0"


@dataclass
class ScenarioReport:
    scenario: str
    metrics: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)      # name -> {"columns": [...], "rows": [[...]]}
    provenance: dict = field(default_factory=dict)
    alarms: list = field(default_factory=list)

    def table(self, name: str, columns):
        self.tables[name] = {"columns": list(columns), "rows": []}
        return self.tables[name]["rows"]

    def check(self):
        for k, v in self.metrics.items():
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise RoughSysError(f"metric {k!r} is not finite ({v!r})")
        for name, t in self.tables.items():
            width = len(t["columns"])
            if any(len(r) != width for r in t["rows"]):
                raise RoughSysError(f"table {name!r} is not rectangular")
        return self


@dataclass
class Problem:
    domain: object
    coeffs: object
    normalized: object
    N: int
    flatten_metrics: dict


def _ratio(a, b):
    return a / b if b > 0 else None


def build_problem(cfg: ScenarioConfig, res: int, coeffs_spec=None) -> Problem:
    d = cfg.domain
    n = int(d["n"])
    N = int(d.get("N", n))
    h, period = float(d["h"]), float(d["period"])
    nx0 = int(round(res * h / period)) + 1
    phi = phi_profile(d.get("phi"), n, period, res)
    spec = cfg.coeffs if coeffs_spec is None else coeffs_spec
    if phi is None:
        dom = build_domain(n, h, period, nx0, res)
        coeffs = build_coefficients(spec, dom, N)
        normalized, _ = zero_top_row(normalize_a00(coeffs))
        return Problem(dom, coeffs, normalized, N, {})
    graph = build_domain(n, h, period, nx0, res, phi)
    raw = build_coefficients(spec, graph, N)
    fl = flatten_problem(graph, raw, np.zeros(graph.lat_shape + (N,)),
                         cfg.params.get("gamma"), cfg.params.get("scan_levels"))
    return Problem(fl.domain, fl.coeffs, fl.coeffs, N, fl.metrics)


def _solve(cfg, prob, f):
    return solve_dirichlet(prob.domain, prob.coeffs, f, tol=float(cfg.solver.get("tol", 1e-10)),
                           method=cfg.solver.get("method", "auto"))


def _f_norm(f, dom, p=2.0):
    return D.boundary_lp_norm(np.sqrt(np.sum(f ** 2, axis=-1)), dom, p)


def _provenance(cfg, started, grids, seeds=None):
    return {"config_hash": cfg.hash(), "scenario": cfg.scenario, "grids": grids,
            "seeds": seeds if seeds is not None else [cfg.seed], "backend": kernels.BACKEND,
            "version": __version__, "runtime_s": round(time.perf_counter() - started, 3)}


def _grid_shape(prob):
    return list(prob.domain.node_shape)


def run_dirichlet_l2(cfg: ScenarioConfig) -> ScenarioReport:
    t0 = time.perf_counter()
    rep = ScenarioReport(cfg.scenario)
    rows = rep.table("runs", ["resolution", "data", "f_l2", "ntilde_l2", "s_l2", "weighted_energy",
                              "ratio_ntilde_f", "fubini_ratio", "energy", "residual", "iterations"])
    a = cfg.a
    grids = []
    ratios = []
    for res in cfg.domain["resolutions"]:
        prob = build_problem(cfg, int(res))
        grids.append(_grid_shape(prob))
        for spec in cfg.data_specs:
            f = boundary_data(spec, prob.domain, prob.N, cfg.seed)
            u, st = _solve(cfg, prob, f)
            fl = _f_norm(f, prob.domain)
            nt = D.ntmax_tilde_strip(u, ConeSpec(a)).lp_norm(2.0)
            s = D.square_function(u, ConeSpec(a)).lp_norm(2.0)
            we = D.weighted_energy(u)
            r = _ratio(nt, fl)
            fub = _ratio(s * s, we * D.fubini_constant(prob.domain.n, a))
            if r is not None:
                ratios.append(r)
            rows.append([int(res), data_label(spec), fl, nt, s, we, r, fub, st.energy,
                         st.residual, st.iterations])
    rep.metrics["legendre_min"] = float(legendre_constants(prob.coeffs, rank_one=False).legendre_min)
    rep.metrics["carleson_norm"] = D.carleson_norm(
        carleson_density(prob.normalized), max_levels=cfg.params.get("scan_levels")).norm
    if ratios:
        rep.metrics["max_ratio_ntilde_f"] = float(max(ratios))
    for k, v in prob.flatten_metrics.items():
        rep.metrics[f"flatten_{k}"] = float(v)
    sweep = cfg.params.get("h_sweep")
    if sweep:
        if not prob.domain.is_flat or cfg.domain.get("phi", {}).get("kind", "flat") != "flat":
            raise ConfigError("h_sweep is only available on flat strips")
        _h_sweep(cfg, prob, sweep, rep)
    rep.provenance = _provenance(cfg, t0, grids)
    return rep.check()


def _h_sweep(cfg, prob, heights, rep):
    rows = rep.table("h_sweep", ["data", "h", "ntilde_l2", "ratio_ntilde_f", "l2_diff_next"])
    base = prob.domain
    spec_c = cfg.coeffs
    N = prob.N

    def factory(dom):
        return build_coefficients(spec_c, dom, N)

    per_h = {}
    for spec in cfg.data_specs:
        f = boundary_data(spec, base, N, cfg.seed)
        fl = _f_norm(f, base)
        entries, diffs = height_sweep(base, heights, factory, f, aperture=cfg.a,
                                      tol=float(cfg.solver.get("tol", 1e-10)))
        for k, e in enumerate(entries):
            r = _ratio(e.ntilde_l2, fl)
            rows.append([data_label(spec), e.h, e.ntilde_l2, r, diffs[k] if k < len(diffs) else None])
            if r is not None:
                per_h[e.h] = max(per_h.get(e.h, 0.0), r)
    if per_h:
        cs = [per_h[h] for h in sorted(per_h)]
        for h in sorted(per_h):
            rep.metrics[f"C_h{h:g}"] = per_h[h]
        rep.metrics["C_sweep"] = float(max(cs))
        rep.metrics["C_drift"] = float((max(cs) - min(cs)) / min(cs)) if min(cs) > 0 else 0.0


def run_diagnose(cfg: ScenarioConfig) -> ScenarioReport:
    t0 = time.perf_counter()
    rep = ScenarioReport(cfg.scenario)
    res = int(cfg.domain["resolutions"][-1])
    prob = build_problem(cfg, res)
    dom = prob.domain
    spec = cfg.data_specs[0]
    f = boundary_data(spec, dom, prob.N, cfg.seed)
    u, st = _solve(cfg, prob, f)
    a = cfg.a
    trunc = cfg.cones.get("truncation")
    nt = D.ntmax_tilde_strip(u, ConeSpec(a))
    nn = D.ntmax(u, ConeSpec(a))
    s = D.square_function(u, ConeSpec(a))
    st_ = D.square_function(u, ConeSpec(a, trunc)) if trunc else s
    hl = D.hl_maximal(nt.values, dom)
    w = D.l2_average(extend_by_zero(u, 2 * dom.h), top_pad=True)
    nu = float(cfg.params.get("nu_fraction", 0.5)) * float(nt.values.max())
    hbar = D.stopping_time(w, nu, ConeSpec(a)) if nu > 0 else None
    fmag = np.sqrt(np.sum(f ** 2, axis=-1))
    cols = [f"j{k + 1}" for k in range(dom.n - 1)]
    rows = rep.table("boundary", cols + ["f", "ntilde", "n", "s", "s_trunc", "hl_ntilde", "hbar"])
    for idx in np.ndindex(*dom.lat_shape):
        rows.append([int(i) for i in idx] + [
            float(fmag[idx]), float(nt.values[idx]), float(nn.values[idx]), float(s.values[idx]),
            float(st_.values[idx]), float(hl.values[idx]),
            None if hbar is None else float(hbar.values[idx])])
    rep.metrics.update({"f_l2": _f_norm(f, dom), "ntilde_l2": nt.lp_norm(), "n_l2": nn.lp_norm(),
                        "s_l2": s.lp_norm(), "nu": nu, "energy": st.energy,
                        "residual": st.residual})
    rep.provenance = _provenance(cfg, t0, [list(dom.node_shape)])
    return rep.check()


def run_equivalence(cfg: ScenarioConfig) -> ScenarioReport:
    t0 = time.perf_counter()
    rep = ScenarioReport(cfg.scenario)
    p_grid = [float(p) for p in cfg.params.get("p_grid", [1.0, 2.0, 3.0])]
    alarm = float(cfg.params.get("alarm", 1e3))
    rows = rep.table("norms", ["resolution", "data", "p", "ntilde_p", "s_p", "n_over_s", "s_over_n"])
    a = cfg.a
    found = {}
    grids = []
    for res in cfg.domain["resolutions"]:
        prob = build_problem(cfg, int(res))
        grids.append(_grid_shape(prob))
        for spec in cfg.data_specs:
            f = boundary_data(spec, prob.domain, prob.N, cfg.seed)
            u, _ = _solve(cfg, prob, f)
            nt = D.ntmax_tilde_strip(u, ConeSpec(a))
            s = D.square_function(u, ConeSpec(a))
            for p in p_grid:
                npn, spn = nt.lp_norm(p), s.lp_norm(p)
                ns, sn = _ratio(npn, spn), _ratio(spn, npn)
                rows.append([int(res), data_label(spec), p, npn, spn, ns, sn])
                if ns is not None and sn is not None:
                    found[(int(res), data_label(spec), p)] = (ns, sn)
                    if max(ns, sn) > alarm:
                        rep.alarms.append(f"ratio {max(ns, sn):.3g} above alarm bound at p={p}")
    res_list = [int(r) for r in cfg.domain["resolutions"]]
    if len(res_list) >= 2:
        lo, hi = res_list[-2], res_list[-1]
        drifts = [abs(found[(hi, d, p)][k] / found[(lo, d, p)][k] - 1.0)
                  for (r, d, p) in found if r == hi and (lo, d, p) in found for k in (0, 1)]
        if drifts:
            rep.metrics["max_refinement_drift"] = float(max(drifts))
    if found:
        rep.metrics["max_n_over_s"] = float(max(v[0] for v in found.values()))
        rep.metrics["max_s_over_n"] = float(max(v[1] for v in found.values()))
    rep.provenance = _provenance(cfg, t0, grids)
    return rep.check()


def _with_eps(spec: dict, eps: float) -> dict:
    spec = json.loads(json.dumps(spec))
    kind = spec.get("kind")
    if kind == "perturbed-identity":
        spec["eps"] = eps
        return spec
    if kind == "lame":
        touched = False
        for key in ("lam", "mu"):
            if isinstance(spec.get(key), dict):
                spec[key]["amplitude"] = eps
                touched = True
        if touched:
            return spec
    raise ConfigError("carleson-scan needs perturbed-identity coefficients or Lamé profiles with an amplitude")


def run_carleson_scan(cfg: ScenarioConfig) -> ScenarioReport:
    t0 = time.perf_counter()
    rep = ScenarioReport(cfg.scenario)
    eps_grid = [float(e) for e in cfg.params.get("eps_grid", [0.0, 0.05, 0.1, 0.2])]
    levels = cfg.params.get("scan_levels")
    rows = rep.table("scan", ["eps", "carleson_gradient", "carleson_oscillation", "legendre_min",
                              "ratio_ntilde_f", "a00_defect", "a0j_defect"])
    radii_rows = rep.table("radii", ["eps", "radius", "ratio"])
    res = int(cfg.domain["resolutions"][-1])
    grad_norms, ratios = {}, {}
    for eps in eps_grid:
        prob = build_problem(cfg, res, _with_eps(cfg.coeffs, eps))
        dom, nc = prob.domain, prob.normalized
        rg = D.carleson_norm(carleson_density(nc, "gradient"), max_levels=levels)
        ro = D.carleson_norm(carleson_density(nc, "oscillation"), max_levels=levels)
        a00 = float(np.max(np.abs(nc.A[..., 0, 0, :, :] - np.eye(prob.N))))
        a0j = float(np.max(np.abs(nc.A[..., 0, 1:, :, :]))) if dom.n > 1 else 0.0
        ell = float(legendre_constants(nc, rank_one=False).legendre_min)
        best = 0.0
        for spec in cfg.data_specs:
            f = boundary_data(spec, dom, prob.N, cfg.seed)
            u, _ = _solve(cfg, prob, f)
            r = _ratio(D.ntmax_tilde_strip(u, ConeSpec(cfg.a)).lp_norm(), _f_norm(f, dom))
            best = max(best, r or 0.0)
        grad_norms[eps], ratios[eps] = rg.norm, best
        rows.append([eps, rg.norm, ro.norm, ell, best, a00, a0j])
        for r, v in rg.table.items():
            radii_rows.append([eps, r, v])
        if a00 > 1e-12 or a0j > 1e-12:
            rep.alarms.append(f"normalisation conditions violated at eps={eps}")
    for eps in eps_grid:
        if eps > 0 and 2 * eps in grad_norms and grad_norms[eps] > 0:
            rep.metrics["eps2_scaling"] = grad_norms[2 * eps] / grad_norms[eps]
            break
    e0, e1 = min(eps_grid), max(eps_grid)
    if ratios.get(e0, 0) > 0:
        rep.metrics["ratio_increase"] = ratios[e1] / ratios[e0] - 1.0
    rep.metrics["carleson_max"] = float(max(grad_norms.values()))
    rep.provenance = _provenance(cfg, t0, [[res]])
    return rep.check()


DEFAULT_BATTERY = [{"kind": "fourier", "k": 1}, {"kind": "fourier", "k": 2}, {"kind": "bump"},
                   {"kind": "random-smooth", "seed": 0}, {"kind": "random-smooth", "seed": 1},
                   {"kind": "random-smooth", "seed": 2}]


def run_lp_sweep(cfg: ScenarioConfig) -> ScenarioReport:
    t0 = time.perf_counter()
    rep = ScenarioReport(cfg.scenario)
    p_grid = [float(p) for p in cfg.params.get("p_grid", [1.8, 1.9, 2.0, 2.1, 2.2])]
    battery = cfg.params.get("battery", DEFAULT_BATTERY)
    rows = rep.table("ratios", ["resolution", "data", "p", "ratio_ntilde_f"])
    sup = {}
    grids = []
    for res in cfg.domain["resolutions"]:
        res = int(res)
        prob = build_problem(cfg, res)
        grids.append(_grid_shape(prob))
        for spec in battery:
            f = boundary_data(spec, prob.domain, prob.N, cfg.seed)
            u, _ = _solve(cfg, prob, f)
            nt = D.ntmax_tilde_strip(u, ConeSpec(cfg.a))
            for p in p_grid:
                r = _ratio(nt.lp_norm(p), _f_norm(f, prob.domain, p))
                rows.append([res, data_label(spec), p, r])
                if r is not None:
                    sup[(res, p)] = max(sup.get((res, p), 0.0), r)
    finest = int(cfg.domain["resolutions"][-1])
    vals = [sup[(finest, p)] for p in p_grid if (finest, p) in sup]
    for p, v in zip(p_grid, vals):
        rep.metrics[f"sup_ratio_p{p:g}"] = v
    if len(vals) >= 2:
        rep.metrics["max_adjacent_change"] = float(max(abs(b / a - 1) for a, b in zip(vals, vals[1:])))
    res_list = [int(r) for r in cfg.domain["resolutions"]]
    if len(res_list) >= 2:
        lo = res_list[-2]
        drift = [abs(sup[(finest, p)] / sup[(lo, p)] - 1) for p in p_grid
                 if (finest, p) in sup and (lo, p) in sup]
        if drift:
            rep.metrics["refinement_drift"] = float(max(drift))
    rep.provenance = _provenance(cfg, t0, grids)
    return rep.check()


def run_good_lambda(cfg: ScenarioConfig) -> ScenarioReport:
    t0 = time.perf_counter()
    rep = ScenarioReport(cfg.scenario)
    gammas = [float(g) for g in cfg.params.get("gamma_grid", [0.4, 0.2, 0.1, 0.05])]
    nu_grid = cfg.params.get("nu_grid")
    res = int(cfg.domain["resolutions"][-1])
    prob = build_problem(cfg, res)
    f = boundary_data(cfg.data_specs[0], prob.domain, prob.N, cfg.seed)
    u, _ = _solve(cfg, prob, f)
    area = prob.domain.boundary_cell_area
    rows = rep.table("sets", ["gamma", "nu", "left", "right", "ratio"])
    inclusion = True
    constants = {g: None for g in gammas}
    for g, nu, left, right, above in D.good_lambda_sets(u, cfg.a, cfg.b, gammas, nu_grid):
        inclusion &= bool(np.all(above[left]))
        lm, rm = np.count_nonzero(left) * area, np.count_nonzero(right) * area
        r = _ratio(lm, rm)
        rows.append([g, nu, lm, rm, r])
        if r is not None:
            constants[g] = r if constants[g] is None else max(constants[g], r)
    ctab = rep.table("constants", ["gamma", "C"])
    for g in gammas:
        ctab.append([g, constants[g]])
        if constants[g] is not None:
            rep.metrics[f"C_gamma{g:g}"] = constants[g]
    seq = [constants[g] for g in sorted(gammas, reverse=True)]
    decreasing = all(x is not None for x in seq) and all(b < a for a, b in zip(seq, seq[1:]))
    rep.metrics["strictly_decreasing"] = int(decreasing)
    rep.metrics["inclusion_holds"] = int(inclusion)
    if not decreasing:
        rep.alarms.append("measured C(gamma) is not strictly decreasing in gamma")
    if not inclusion:
        rep.alarms.append("left set escapes {Ntilde > nu}")
    rep.provenance = _provenance(cfg, t0, [list(prob.domain.node_shape)])
    return rep.check()


RUNNERS = {
    "dirichlet-l2": run_dirichlet_l2,
    "diagnose": run_diagnose,
    "equivalence": run_equivalence,
    "carleson-scan": run_carleson_scan,
    "lp-sweep": run_lp_sweep,
    "good-lambda": run_good_lambda,
}


def run(cfg: ScenarioConfig) -> ScenarioReport:
    return RUNNERS[cfg.scenario](cfg)


# emission -----------------------------------------------------------------------

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_ready(report: ScenarioReport, timing: bool) -> dict:
    prov = dict(report.provenance)
    if not timing:
        prov.pop("runtime_s", None)
    return {"scenario": report.scenario, "metrics": report.metrics, "tables": report.tables,
            "provenance": prov, "alarms": report.alarms}


def emit(report: ScenarioReport, fmt: str, path, timing: bool = False) -> list:
    """Write the report under directory ``path``; returns the files written.

    Output is deterministic: run time is left out unless ``timing`` is set.
    """
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown output format {fmt!r}")
    out = Path(path)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        stem = report.scenario.replace("-", "_")
        if fmt == "json":
            target = out / f"{stem}.json"
            target.write_text(json.dumps(_json_ready(report, timing), indent=2, sort_keys=True,
                                         allow_nan=False) + "\n", encoding="utf-8")
            return [target]
        tables = dict(report.tables)
        tables["metrics"] = {"columns": ["name", "value"],
                             "rows": [[k, v] for k, v in report.metrics.items()]}
        prov = _json_ready(report, timing)["provenance"]
        tables["provenance"] = {"columns": ["key", "value"],
                                "rows": [[k, json.dumps(prov[k], sort_keys=True)] for k in sorted(prov)]}
        for name in sorted(tables):
            target = out / f"{stem}_{name}.csv"
            with open(target, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(tables[name]["columns"])
                for row in tables[name]["rows"]:
                    w.writerow([_cell(v) for v in row])
            written.append(target)
    except OSError as exc:
        raise IoError(f"cannot write report to {out}: {exc}") from exc
    return written
