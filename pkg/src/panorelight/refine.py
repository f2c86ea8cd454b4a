"""Joint reflectance/shading refinement under a total-variation energy.

    L(R, S) = ||I - s R*S||^2 + lambda1 |grad R|_1 + lambda2 ||grad S||^2
              + lambda_prox (||R - R0||^2 + ||S - S0||^2)

The l1 term is smoothed (Charbonnier) so plain gradient descent is well
defined. ``s`` is the least-squares scale of ``R*S`` against ``I`` and is
refit every iteration.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .equirect import check_image
from .errors import DomainError, RefinementDiverged
from .geometry import R_MAX

TRACE_FIELDS = ("iteration", "total", "data", "tv_r", "tv_s", "prox")


@dataclass
class RefineConfig:
    lambda1: float = 0.1
    lambda2: float = 10.0
    lambda_prox: float = 0.01
    learning_rate: float = 1e-4
    iterations: int = 1000
    charbonnier_eps: float = 1e-3
    log_every: int = 50
    max_halvings: int = 5
    r_max: float = R_MAX

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda_prox", "charbonnier_eps"):
            if not getattr(self, name) >= 0:
                raise DomainError(f"{name} must be >= 0")
        if not self.learning_rate >= 0:
            raise DomainError("learning_rate must be >= 0")
        if int(self.iterations) < 1:
            raise DomainError("iterations must be >= 1")
        if int(self.log_every) < 1:
            raise DomainError("log_every must be >= 1")
        self.iterations = int(self.iterations)
        self.log_every = int(self.log_every)


@dataclass
class RefineTrace:
    rows: list = field(default_factory=list)  # dicts keyed by TRACE_FIELDS
    scales: list = field(default_factory=list)

    def log(self, iteration, terms):
        self.rows.append({"iteration": iteration, **terms})

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    @property
    def energies(self):
        return self.column("total")

    def to_csv(self, path):
        from .io import atomic_open

        with atomic_open(path, "w") as f:
            writer = csv.DictWriter(f, fieldnames=TRACE_FIELDS)
            writer.writeheader()
            for r in self.rows:
                writer.writerow({k: r[k] if k == "iteration" else repr(float(r[k]))
                                 for k in TRACE_FIELDS})


def spherical_gradient(img):
    """Forward differences ``(gx, gy)``; ``gx`` wraps across the seam, ``gy`` is 0 on the last row."""
    img = np.asarray(img, dtype=np.float64)
    gx = np.roll(img, -1, axis=1) - img
    gy = np.zeros_like(img)
    gy[:-1] = img[1:] - img[:-1]
    return gx, gy


def _gradient_adjoint(gx, gy):
    """Transpose of :func:`spherical_gradient` applied to ``(gx, gy)``."""
    out = np.roll(gx, 1, axis=1) - gx
    out[1:] += gy[:-1]
    out[:-1] -= gy[:-1]
    return out


def _charbonnier(x, eps):
    return np.sqrt(x * x + eps * eps) - eps


def _prepare(I, R, S):
    I = np.asarray(I, dtype=np.float64)
    R = np.asarray(getattr(R, "values", R), dtype=np.float64)
    S = np.asarray(getattr(S, "values", S), dtype=np.float64)
    if not (I.shape == R.shape == S.shape):
        raise DomainError(f"shapes differ: I {I.shape}, R {R.shape}, S {S.shape}")
    return I, R, S


def fit_scale(I, R, S):
    """Least-squares ``s`` for ``I ~ s R*S``; 1 when ``R*S`` vanishes."""
    rs = R * S
    den = float(np.sum(rs * rs))
    if not den > 0:
        return 1.0
    return float(np.sum(rs * I)) / den


def tv_energy(I, R, S, s, cfg=None, R0=None, S0=None):
    """Total energy and its terms (``data``, ``tv_r``, ``tv_s``, ``prox``).

    The proximity term is only included when ``R0`` and ``S0`` are given.
    """
    cfg = cfg or RefineConfig()
    I, R, S = _prepare(I, R, S)
    res = I - s * R * S
    data = float(np.sum(res * res))
    gx, gy = spherical_gradient(R)
    eps = cfg.charbonnier_eps
    tv_r = cfg.lambda1 * float(np.sum(_charbonnier(gx, eps)) + np.sum(_charbonnier(gy, eps)))
    hx, hy = spherical_gradient(S)
    tv_s = cfg.lambda2 * float(np.sum(hx * hx) + np.sum(hy * hy))
    prox = 0.0
    if R0 is not None and S0 is not None:
        prox = cfg.lambda_prox * float(np.sum((R - R0) ** 2) + np.sum((S - S0) ** 2))
    terms = {"total": data + tv_r + tv_s + prox, "data": data, "tv_r": tv_r,
             "tv_s": tv_s, "prox": prox}
    return terms["total"], terms


def energy_gradients(I, R, S, s, cfg=None, R0=None, S0=None):
    """Analytic ``(dL/dR, dL/dS)`` at fixed ``s``."""
    cfg = cfg or RefineConfig()
    I, R, S = _prepare(I, R, S)
    res = I - s * R * S
    g_r = -2.0 * s * S * res
    g_s = -2.0 * s * R * res
    eps = cfg.charbonnier_eps
    if cfg.lambda1:
        gx, gy = spherical_gradient(R)
        with np.errstate(invalid="ignore", divide="ignore"):
            dx = np.nan_to_num(gx / np.sqrt(gx * gx + eps * eps)) if eps else np.sign(gx)
            dy = np.nan_to_num(gy / np.sqrt(gy * gy + eps * eps)) if eps else np.sign(gy)
        g_r += cfg.lambda1 * _gradient_adjoint(dx, dy)
    if cfg.lambda2:
        hx, hy = spherical_gradient(S)
        g_s += 2.0 * cfg.lambda2 * _gradient_adjoint(hx, hy)
    if R0 is not None and S0 is not None and cfg.lambda_prox:
        g_r += 2.0 * cfg.lambda_prox * (R - R0)
        g_s += 2.0 * cfg.lambda_prox * (S - S0)
    return g_r, g_s


def tv_refine(I, R0, S0, cfg=None):
    """Gradient descent on the TV energy from ``(R0, S0)``.

    Each iteration refits ``s``, steps both maps along the negative gradient
    and projects ``R`` onto ``[0, r_max]`` and ``S`` onto ``[0, inf)``. A step
    that raises the energy is halved (up to ``max_halvings`` times) and
    otherwise skipped, so the logged energies never increase.
    Returns ``(R, S, trace)``.
    """
    cfg = cfg or RefineConfig()
    I = check_image(I, name="image")
    I, R0, S0 = _prepare(I, R0, S0)
    if np.any(R0 < 0) or np.any(S0 < 0):
        raise DomainError("initial reflectance and shading must be non-negative")
    R, S = R0.copy(), S0.copy()
    trace = RefineTrace()

    def evaluate(r, s_map):
        scale = fit_scale(I, r, s_map)
        total, terms = tv_energy(I, r, s_map, scale, cfg, R0, S0)
        return scale, total, terms

    s, total, terms = evaluate(R, S)
    if not np.isfinite(total):
        raise RefinementDiverged("energy is not finite at the initialization", trace)
    for it in range(cfg.iterations):
        if it % cfg.log_every == 0:
            trace.log(it, terms)
            trace.scales.append(s)
        if cfg.learning_rate == 0:
            continue
        g_r, g_s = energy_gradients(I, R, S, s, cfg, R0, S0)
        if not (np.all(np.isfinite(g_r)) and np.all(np.isfinite(g_s))):
            raise RefinementDiverged(f"gradient became non-finite at iteration {it}", trace)
        step = cfg.learning_rate
        for _ in range(cfg.max_halvings + 1):
            R_new = np.clip(R - step * g_r, 0.0, cfg.r_max)
            S_new = np.maximum(S - step * g_s, 0.0)
            with np.errstate(over="ignore", invalid="ignore"):
                s_new, total_new, terms_new = evaluate(R_new, S_new)
            if np.isfinite(total_new) and total_new <= total:
                R, S, s, total, terms = R_new, S_new, s_new, total_new, terms_new
                break
            step *= 0.5
    trace.log(cfg.iterations, terms)
    trace.scales.append(s)
    return R, S, trace


def numeric_gradient_check(I, R, S, cfg=None, probes=20, s=None, h=1e-5, rng=None):
    """Largest relative error between analytic and central-difference gradients.

    ``probes`` entries of each of R and S are checked. The proximity term is
    exercised with random anchors ``R0, S0`` near ``R, S``.
    """
    cfg = cfg or RefineConfig()
    I, R, S = _prepare(I, R, S)
    if R.size > 16 * 32 * 3:
        raise DomainError("numeric gradient check is meant for small images (<= 16 x 32)")
    rng = np.random.default_rng(rng)
    s = fit_scale(I, R, S) if s is None else float(s)
    R0 = R + 0.1 * rng.standard_normal(R.shape)
    S0 = S + 0.1 * rng.standard_normal(S.shape)
    g_r, g_s = energy_gradients(I, R, S, s, cfg, R0, S0)

    def f(r, s_map):
        return tv_energy(I, r, s_map, s, cfg, R0, S0)[0]

    worst = 0.0
    for which, grad in ((0, g_r), (1, g_s)):
        picks = rng.choice(R.size, size=min(probes, R.size), replace=False)
        for flat in picks:
            idx = np.unravel_index(flat, R.shape)
            plus = [R.copy(), S.copy()]
            minus = [R.copy(), S.copy()]
            plus[which][idx] += h
            minus[which][idx] -= h
            num = (f(*plus) - f(*minus)) / (2.0 * h)
            ana = grad[idx]
            scale = max(abs(num), abs(ana), 1e-8)
            worst = max(worst, abs(num - ana) / scale)
    return worst
