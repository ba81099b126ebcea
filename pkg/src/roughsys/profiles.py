"""Named analytic profiles for graphs, coefficients and boundary data."""
from __future__ import annotations

import numpy as np

from .coefficients import CoefficientField, identity_tensor, lame_tensor
from .errors import ConfigError
from .grid import DomainSpec, GridFunction


def _lat_x(domain: DomainSpec):
    """Lateral node coordinates as a list of arrays of shape ``lat_shape``."""
    c = domain.lateral_coords()
    return [c[..., k] for k in range(domain.n - 1)]


# graphs ----------------------------------------------------------------------

def phi_profile(spec, n: int, period: float, nx_lat: int) -> np.ndarray | None:
    """Graph samples for ``{kind: flat | sine | sawtooth, L: ...}``; ``None`` when flat."""
    spec = spec or {"kind": "flat"}
    kind = spec.get("kind", "flat")
    if kind == "flat":
        return None
    L = float(spec.get("L", 0.0))
    x = np.arange(nx_lat) * period / nx_lat
    grids = np.meshgrid(*([x] * (n - 1)), indexing="ij")
    if kind == "sine":
        # slope amplitude exactly L along each lateral direction
        return sum(L * period / (2 * np.pi) * np.sin(2 * np.pi * g / period) for g in grids)
    if kind == "sawtooth":
        tri = lambda g: L * (period / 4 - np.abs(np.mod(g, period) - period / 2))  # noqa: E731
        return sum(tri(g) for g in grids)
    raise ConfigError(f"unknown graph profile {kind!r}")


# scalar coefficient profiles ----------------------------------------------------

def scalar_profile(spec, domain: DomainSpec) -> np.ndarray:
    """Nodal scalar field from a number or ``{profile: ..., value: ..., ...}``."""
    if isinstance(spec, (int, float)):
        return np.full(domain.node_shape, float(spec))
    if not isinstance(spec, dict):
        raise ConfigError(f"bad scalar profile {spec!r}")
    kind = spec.get("profile", "constant")
    value = float(spec.get("value", 0.0))
    amp = float(spec.get("amplitude", 0.0))
    x0 = domain.node_x0()
    delta = domain.node_delta()
    lat = _lat_x(domain)
    if kind == "constant":
        return np.full(domain.node_shape, value)
    if kind == "sine":
        k = float(spec.get("k", 1))
        shape = np.prod([np.sin(2 * np.pi * k * x / domain.period) for x in lat], axis=0)
        return value + amp * shape[None] * np.cos(np.pi * x0 / domain.h)
    if kind == "log-oscillation":
        d = np.where(delta > 0, delta, domain.dx0 / 2)
        return value * (1.0 + np.sin(np.log(d)) / 10.0)
    raise ConfigError(f"unknown scalar profile {kind!r}")


def _perturbation_shape(domain: DomainSpec, profile: str) -> np.ndarray:
    x0 = domain.node_x0()
    delta = domain.node_delta()
    lat = _lat_x(domain)
    if profile == "smooth":
        s = np.prod([np.cos(2 * np.pi * x / domain.period) for x in lat], axis=0)
        return s[None] * np.cos(np.pi * x0 / (2 * domain.h)) ** 2
    if profile == "log":
        d = np.where(delta > 0, delta, domain.dx0 / 2)
        return np.sin(np.log(d))
    raise ConfigError(f"unknown perturbation profile {profile!r}")


def perturbed_identity(domain: DomainSpec, eps: float, N: int = 1,
                       profile: str = "smooth") -> CoefficientField:
    """``A = I + eps * S`` with ``S`` acting only on the lateral blocks ``i, j >= 1``.

    ``A_0j`` stays equal to ``delta_0j I``, so the field is already normalised
    and its Carleson density scales exactly like ``eps^2``.
    """
    base = identity_tensor(domain, N)
    shape = _perturbation_shape(domain, profile)
    A = base.A.copy()
    for i in range(1, domain.n):
        A[..., i, i, :, :] += eps * shape[..., None, None] * np.eye(N)
    return base.replace(A, None, kind="perturbed-identity", eps=float(eps), profile=profile)


def build_coefficients(spec, domain: DomainSpec, N: int) -> CoefficientField:
    spec = spec or {"kind": "identity"}
    kind = spec.get("kind", "identity")
    if kind == "identity":
        return identity_tensor(domain, N)
    if kind == "perturbed-identity":
        return perturbed_identity(domain, float(spec.get("eps", 0.0)), N,
                                  spec.get("profile", "smooth"))
    if kind == "lame":
        lam = scalar_profile(spec.get("lam", 1.0), domain)
        mu = scalar_profile(spec.get("mu", 3.0), domain)
        r = spec.get("r", "symmetric")
        r = 0.5 * (mu - lam) if r == "symmetric" else scalar_profile(r, domain)
        return lame_tensor(domain, lam, mu, r, N)
    raise ConfigError(f"unknown coefficient kind {kind!r}")


# boundary data ------------------------------------------------------------------

def random_smooth_boundary(domain: DomainSpec, seed: int, N: int = 1, modes: int = 8) -> np.ndarray:
    """Truncated Fourier series with seeded coefficients decaying like ``|k|^-3``."""
    rng = np.random.default_rng(seed)
    lat = _lat_x(domain)
    out = np.zeros(domain.lat_shape + (N,))
    ks = [k for k in np.ndindex(*([2 * modes + 1] * (domain.n - 1)))]
    for a in range(N):
        for kk in ks:
            k = np.array(kk) - modes
            norm = np.linalg.norm(k)
            if norm == 0 or norm > modes or (k[np.nonzero(k)[0][0]] < 0):
                continue
            phase = 2 * np.pi * sum(ki * x for ki, x in zip(k, lat)) / domain.period
            c, s = rng.normal(size=2)
            out[..., a] += (c * np.cos(phase) + s * np.sin(phase)) / norm ** 3
    return out


def boundary_data(spec, domain: DomainSpec, N: int, seed: int = 0) -> np.ndarray:
    """Boundary function of shape ``lat_shape + (N,)`` from a data profile."""
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind", "constant")
    lat = _lat_x(domain)
    P = domain.period
    if kind == "constant":
        val = float(spec.get("value", 1.0))
        return np.full(domain.lat_shape + (N,), val)
    if kind == "fourier":
        k = float(spec.get("k", 1))
        out = np.zeros(domain.lat_shape + (N,))
        for a in range(N):
            trig = np.cos if a % 2 == 0 else np.sin
            out[..., a] = trig(2 * np.pi * k * lat[0] / P)
        return out
    if kind == "bump":
        width = float(spec.get("width", 0.2 * P))
        center = spec.get("center", 0.5 * P)
        center = np.broadcast_to(np.asarray(center, dtype=float), (domain.n - 1,))
        diff = [x - c for x, c in zip(lat, center)]
        diff = [d - P * np.round(d / P) for d in diff]
        r2 = sum(d ** 2 for d in diff) / width ** 2
        prof = np.where(r2 < 1, (1 - r2) ** 2, 0.0)
        return np.repeat(prof[..., None], N, axis=-1)
    if kind == "random-smooth":
        return random_smooth_boundary(domain, int(spec.get("seed", seed)), N,
                                      int(spec.get("modes", 8)))
    if kind == "zero":
        return np.zeros(domain.lat_shape + (N,))
    raise ConfigError(f"unknown data profile {kind!r}")


def data_label(spec) -> str:
    if isinstance(spec, str):
        return spec
    extras = ",".join(f"{k}={spec[k]}" for k in sorted(spec) if k != "kind")
    return f"{spec.get('kind', 'constant')}({extras})"


def random_smooth_field(domain: DomainSpec, seed: int, N: int = 1, modes: int = 4) -> GridFunction:
    """Smooth interior field: products of seeded Fourier modes in ``x0`` and ``x'``."""
    rng = np.random.default_rng(seed)
    x0 = domain.node_delta()
    lat = _lat_x(domain)
    out = np.zeros(domain.node_shape + (N,))
    for a in range(N):
        for j in range(modes + 1):
            for k in np.ndindex(*([modes + 1] * (domain.n - 1))):
                amp = rng.normal() / (1.0 + j * j + sum(q * q for q in k)) ** 1.5
                ph_l, ph_0 = rng.uniform(0, 2 * np.pi, size=2)
                lat_part = np.cos(2 * np.pi * sum(q * x for q, x in zip(k, lat)) / domain.period + ph_l)
                out[..., a] += amp * lat_part[None] * np.cos(np.pi * j * x0 / domain.h + ph_0)
    return GridFunction(out, domain)
