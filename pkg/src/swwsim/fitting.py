"""Weighted nonlinear least squares and the model fits built on it.

The solver is a damped Gauss-Newton iteration on the weighted residuals
(y - f) / sigma: central-difference Jacobian with a relative step of 1e-6,
multiplicative damping of the normal matrix with column equilibration, and
convergence on either a relative parameter change below 1e-10 or a relative
residual-norm change below 1e-12.  The parameter covariance is the inverse
of the normal matrix at the solution scaled by the reduced chi-square.

Positivity of physical parameters (rates, occupancy prefactors) is imposed
by fitting the square root and transforming the covariance afterwards, so
the solver itself stays unconstrained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import (
    BOLTZMANN,
    PLANCK,
    SpectralBand,
    WaveguideParams,
    bose_einstein_occupancy,
    pair_flux_density,
    read_columns_csv,
    thermal_scatter_flux_density,
    total_flux_model,
    wavelength_to_frequency,
    write_columns_csv,
)
from .instrument import DetectionChain

__all__ = [
    "FitError",
    "Dataset",
    "FitResult",
    "KappaEstimate",
    "least_squares",
    "fit_power_decomposition",
    "fit_bose_einstein",
    "fit_sinc_spectrum",
    "fit_linear_temperature",
    "extract_kappa",
]


class FitError(RuntimeError):
    """Nonlinear solver failure: singular system, divergence, or a model
    that cannot be evaluated."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Weighted observations (x, y, sigma) with strictly positive sigmas."""

    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).copy()
        y = np.asarray(self.y, dtype=float).copy()
        s = np.asarray(self.sigma, dtype=float).copy()
        if not (x.shape == y.shape == s.shape) or x.ndim != 1 or x.size < 2:
            raise ValueError("dataset columns must be 1-d, equal length, >= 2 points")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(s)):
            raise ValueError("x and sigma must be finite")
        if np.any(s <= 0):
            raise ValueError("sigmas must be strictly positive")
        for name, arr in (("x", x), ("y", y), ("sigma", s)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.x.size

    def to_csv(self, path) -> None:
        write_columns_csv(path, ("x", "y", "sigma"), (self.x, self.y, self.sigma))

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        return cls(*read_columns_csv(Path(path), ("x", "y", "sigma")))


@dataclass(frozen=True, eq=False)
class FitResult:
    """Converged (or flagged) least-squares solution.

    params maps every model parameter to its value, including any that were
    held fixed; param_names lists the free parameters in covariance order.
    condition is the condition number of the equilibrated normal matrix, a
    direct flag for degenerate directions.
    """

    param_names: tuple[str, ...]
    params: dict[str, float]
    covariance: np.ndarray
    residual_norm: float
    reduced_chi_square: float
    converged: bool
    iterations: int
    r_squared: float
    condition: float

    def stderr(self, name: str) -> float:
        i = self.param_names.index(name)
        return math.sqrt(max(float(self.covariance[i, i]), 0.0))

    def to_dict(self) -> dict:
        return {
            "param_names": list(self.param_names),
            "params": {k: float(v) for k, v in self.params.items()},
            "covariance": [[float(v) for v in row] for row in self.covariance],
            "residual_norm": float(self.residual_norm),
            "reduced_chi_square": float(self.reduced_chi_square),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "r_squared": float(self.r_squared),
            "condition": float(self.condition),
        }


def _jacobian(model, x, theta, rel_step):
    """Central-difference Jacobian; the actual symmetric step is used in the
    divisor so representable-parameter rounding cancels."""
    p = theta.size
    cols = []
    for j in range(p):
        h = rel_step * abs(theta[j])
        if h == 0.0:
            h = rel_step
        tp = theta.copy()
        tm = theta.copy()
        tp[j] = theta[j] + h
        tm[j] = theta[j] - h
        denom = tp[j] - tm[j]
        cols.append((np.asarray(model(x, tp), dtype=float) - np.asarray(model(x, tm), dtype=float)) / denom)
    return np.column_stack(cols)


def least_squares(
    model,
    data: Dataset,
    init,
    *,
    names: tuple[str, ...] | None = None,
    max_iterations: int = 200,
    rel_step: float = 1e-6,
    param_tol: float = 1e-10,
    residual_tol: float = 1e-12,
) -> FitResult:
    """Minimize sum(((y - model(x, theta)) / sigma)^2) over theta.

    model(x, theta) must accept the full x array and a parameter vector.
    Raises FitError when the damped normal equations are singular (a
    parameter with no effect on the residuals) or when no convergence
    criterion is met within max_iterations.
    """
    theta = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    p = theta.size
    if names is None:
        names = tuple(f"p{i}" for i in range(p))
    if len(names) != p:
        raise ValueError("names length must match the parameter count")
    if len(data) < p + 1:
        raise ValueError("need at least n_params + 1 data points")
    x, y, sig = data.x, data.y, data.sigma

    def weighted_residual(th):
        f = np.asarray(model(x, th), dtype=float)
        return (y - f) / sig

    r = weighted_residual(theta)
    cost = float(r @ r)
    if not np.isfinite(cost):
        raise FitError("model is not evaluable at the initial parameters")

    lam = 1e-3
    converged = False
    iterations = 0
    tiny = np.finfo(float).tiny
    for iterations in range(1, max_iterations + 1):
        jac = _jacobian(model, x, theta, rel_step) / sig[:, None]
        if not np.all(np.isfinite(jac)):
            raise FitError("Jacobian is not finite")
        col_norm = np.sqrt(np.sum(jac * jac, axis=0))
        dead = col_norm == 0.0
        if np.all(dead) or (iterations == 1 and np.any(dead)):
            # a column that is already blind at the starting point is a
            # genuinely unconstrained parameter; later on it just means the
            # iterate pinned that parameter against its boundary
            blind = [names[j] for j in range(p) if dead[j]]
            raise FitError(f"singular normal matrix: no sensitivity to {blind}")
        col_norm = np.where(dead, 1.0, col_norm)
        jac_s = jac / col_norm
        grad = jac_s.T @ r
        grad[dead] = 0.0
        normal = jac_s.T @ jac_s
        accepted = False
        while lam <= 1e14:
            damped = normal + lam * np.diag(np.diag(normal))
            damped[dead, dead] = 1.0
            try:
                step_s = np.linalg.solve(damped, grad)
            except np.linalg.LinAlgError as exc:
                raise FitError("singular normal matrix") from exc
            step = step_s / col_norm
            trial = theta + step
            r_trial = weighted_residual(trial)
            cost_trial = float(r_trial @ r_trial)
            if np.isfinite(cost_trial) and cost_trial <= cost:
                rel_change = float(
                    np.max(np.abs(step) / np.maximum(np.abs(trial), tiny))
                )
                rel_drop = (cost - cost_trial) / max(cost, tiny)
                theta, r, cost = trial, r_trial, cost_trial
                lam = max(lam / 4.0, 1e-12)
                accepted = True
                if rel_change < param_tol or rel_drop < residual_tol:
                    converged = True
                break
            lam *= 10.0
        if not accepted:
            # No damping level lowers the cost: the iterate is at the
            # floating point floor of the objective.
            converged = True
            break
        if converged:
            break
    if not converged:
        raise FitError(f"no convergence after {max_iterations} iterations")

    jac = _jacobian(model, x, theta, rel_step) / sig[:, None]
    col_norm = np.sqrt(np.sum(jac * jac, axis=0))
    col_norm[col_norm == 0.0] = 1.0
    jac_s = jac / col_norm
    normal = jac_s.T @ jac_s
    condition = float(np.linalg.cond(normal))
    dof = max(len(data) - p, 1)
    red_chisq = cost / dof
    cov = red_chisq * (np.linalg.pinv(normal) / np.outer(col_norm, col_norm))

    mean_w = float(np.sum(y / sig**2) / np.sum(1.0 / sig**2))
    ss_tot = float(np.sum(((y - mean_w) / sig) ** 2))
    r_squared = 1.0 - cost / ss_tot if ss_tot > 0 else math.nan

    return FitResult(
        param_names=tuple(names),
        params={n: float(v) for n, v in zip(names, theta)},
        covariance=cov,
        residual_norm=math.sqrt(cost),
        reduced_chi_square=red_chisq,
        converged=True,
        iterations=iterations,
        r_squared=r_squared,
        condition=condition,
    )


def _transform_result(
    res: FitResult, names: tuple[str, ...], values: np.ndarray, jac_diag: np.ndarray
) -> FitResult:
    """Map a result through a diagonal reparameterization theta -> g(theta)."""
    cov = res.covariance * np.outer(jac_diag, jac_diag)
    return replace(
        res,
        param_names=tuple(names),
        params={n: float(v) for n, v in zip(names, values)},
        covariance=cov,
    )


# ---------------------------------------------------------------------------
# model fits
# ---------------------------------------------------------------------------


def fit_power_decomposition(data: Dataset) -> FitResult:
    """Fit flux = a P^2 + b P with a, b >= 0 (x is pump power in W).

    Internally parameterized as a = alpha^2, b = beta^2; the initial point
    solves the two-point linear system through the smallest and largest
    positive powers.
    """
    pos = np.nonzero(data.x > 0)[0]
    if pos.size < 2:
        raise ValueError("need at least two points at positive power")
    i, j = pos[np.argmin(data.x[pos])], pos[np.argmax(data.x[pos])]
    if data.x[i] == data.x[j]:
        raise ValueError("need two distinct positive powers")
    m = np.array(
        [[data.x[i] ** 2, data.x[i]], [data.x[j] ** 2, data.x[j]]], dtype=float
    )
    try:
        a0, b0 = np.linalg.solve(m, np.array([data.y[i], data.y[j]]))
    except np.linalg.LinAlgError as exc:
        raise FitError("degenerate initialization points") from exc
    scale_a = max(abs(data.y[j]), 1e-300) / data.x[j] ** 2
    scale_b = max(abs(data.y[j]), 1e-300) / data.x[j]
    a0 = max(float(a0), 1e-6 * scale_a)
    b0 = max(float(b0), 1e-6 * scale_b)

    def model(x, th):
        return th[0] ** 2 * x**2 + th[1] ** 2 * x

    res = least_squares(
        model, data, np.array([math.sqrt(a0), math.sqrt(b0)]), names=("alpha", "beta")
    )
    alpha, beta = res.params["alpha"], res.params["beta"]
    return _transform_result(
        res,
        ("a", "b"),
        np.array([alpha**2, beta**2]),
        np.array([2.0 * alpha, 2.0 * beta]),
    )


def fit_bose_einstein(
    data: Dataset,
    waveguide: WaveguideParams,
    pump_wavelength: float,
    power: float,
    *,
    fix_temperature: float | None = None,
    fix_kappa: float | None = None,
    init_temperature: float = 300.0,
) -> FitResult:
    """Fit the thermal scattering law to a flux-density spectrum.

    x is the signed detuning (Hz; Stokes and anti-Stokes points may be
    mixed, the emission term follows the sign), y the photon flux density.
    Free parameters are kappa and temperature unless one is pinned.  With
    every point deep in the classical regime the two are degenerate (only
    the product kappa*T is constrained); the covariance reports that.
    """
    if fix_temperature is not None and fix_kappa is not None:
        raise ValueError("cannot fix both parameters")
    if power <= 0:
        raise ValueError("power must be positive")
    nu0 = wavelength_to_frequency(pump_wavelength)

    def flux(nu, kappa, temperature):
        wg = replace(waveguide, kappa=kappa, temperature=temperature)
        return thermal_scatter_flux_density(nu, wg, power, pump_wavelength)

    t_for_init = fix_temperature if fix_temperature is not None else init_temperature
    # classical-limit inversion at the largest |detuning| point
    k = int(np.argmax(np.abs(data.x)))
    nu_k = abs(data.x[k])
    n_k = BOLTZMANN * t_for_init / (PLANCK * nu_k) + (1.0 if data.x[k] < 0 else 0.0)
    denom = n_k * waveguide.length * power / (PLANCK * (nu0 + data.x[k]))
    kappa0 = max(abs(data.y[k]) / denom, 1e-30) if denom > 0 else 1e-30
    if fix_kappa is not None:
        kappa0 = fix_kappa

    free: list[str] = []
    if fix_kappa is None:
        free.append("kappa")
    if fix_temperature is None:
        free.append("temperature")
    if not free:
        raise ValueError("nothing to fit: both parameters fixed")

    def unpack(th):
        vals = {"kappa": fix_kappa, "temperature": fix_temperature}
        for name, v in zip(free, th):
            vals[name] = v**2
        return vals["kappa"], vals["temperature"]

    def model(x, th):
        kappa, temperature = unpack(th)
        return flux(x, kappa, temperature)

    init = np.array(
        [math.sqrt({"kappa": kappa0, "temperature": t_for_init}[n]) for n in free]
    )
    res = least_squares(model, data, init, names=tuple(f"sqrt_{n}" for n in free))
    roots = np.array([res.params[f"sqrt_{n}"] for n in free])
    values = roots**2
    out = _transform_result(res, tuple(free), values, 2.0 * roots)
    full = dict(out.params)
    if fix_kappa is not None:
        full["kappa"] = float(fix_kappa)
    if fix_temperature is not None:
        full["temperature"] = float(fix_temperature)
    return replace(out, params=full)


def fit_sinc_spectrum(
    data: Dataset, waveguide: WaveguideParams, power: float
) -> FitResult:
    """Fit the pair spectral density shape for amplitude and dispersion.

    x is the signed detuning, y the pair flux density.  The amplitude is
    gamma*P*L as one positive free parameter and beta2 is free and signed;
    the initial beta2 comes from a coarse log grid scan on both signs.  Data
    confined to the flat phase-matched plateau leave beta2 unconstrained,
    which shows up as a huge condition number and beta2 variance rather
    than an error.
    """
    if power <= 0:
        raise ValueError("power must be positive")

    # density = (gamma P L)^2 * envelope(beta2); th[0]^2 replaces gamma P L
    def model(x, th):
        amp, beta2 = th[0] ** 2, th[1]
        wg = replace(waveguide, beta2=beta2)
        envelope = np.asarray(pair_flux_density(x, wg, power)) / (
            waveguide.gamma * power * waveguide.length
        ) ** 2
        return amp**2 * envelope

    amp0 = math.sqrt(max(float(np.max(data.y)), 1e-300))
    candidates = np.concatenate(
        [np.geomspace(1e-26, 1e-22, 17), -np.geomspace(1e-26, 1e-22, 17)]
    )
    best_beta2, best_cost = None, math.inf
    for b2 in candidates:
        resid = (data.y - model(data.x, np.array([math.sqrt(amp0), b2]))) / data.sigma
        c = float(resid @ resid)
        if c < best_cost:
            best_beta2, best_cost = b2, c
    res = least_squares(
        model,
        data,
        np.array([math.sqrt(amp0), best_beta2]),
        names=("sqrt_amplitude", "beta2"),
    )
    root = res.params["sqrt_amplitude"]
    return _transform_result(
        res,
        ("amplitude", "beta2"),
        np.array([root**2, res.params["beta2"]]),
        np.array([2.0 * root, 1.0]),
    )


def fit_linear_temperature(data: Dataset) -> FitResult:
    """Weighted straight-line fit flux = slope * T + intercept.

    The initializer is already the exact weighted solution, so the solver
    only confirms it; r_squared is the weighted coefficient of
    determination used to judge linearity.
    """
    w = 1.0 / data.sigma**2
    sw = float(np.sum(w))
    sx = float(np.sum(w * data.x))
    sy = float(np.sum(w * data.y))
    sxx = float(np.sum(w * data.x**2))
    sxy = float(np.sum(w * data.x * data.y))
    det = sw * sxx - sx * sx
    if det == 0:
        raise FitError("degenerate abscissa: all temperatures identical")
    slope0 = (sw * sxy - sx * sy) / det
    intercept0 = (sxx * sy - sx * sxy) / det

    def model(x, th):
        return th[0] * x + th[1]

    return least_squares(
        model, data, np.array([slope0, intercept0]), names=("slope", "intercept")
    )


@dataclass(frozen=True)
class KappaEstimate:
    """Scattering constant inferred from a power-sweep fit, with the
    relative 1-sigma contributions entering the quadrature sum."""

    kappa: float
    sigma: float
    relative_components: dict[str, float]


def extract_kappa(
    power_fit: FitResult,
    waveguide: WaveguideParams,
    pump_wavelength: float,
    bands,
    chain: DetectionChain,
    *,
    guard: float = 10e9,
) -> KappaEstimate:
    """Convert the linear coefficient of a detected-flux power sweep into
    the scattering constant kappa.

    The detected linear coefficient is kappa times a computable factor
    (band integral of the thermal law at unit kappa, times the chain
    throughput), so kappa follows by division.  The relative uncertainty is
    the quadrature sum of the fit error on b, the dB uncertainties of the
    loss budget and the detector efficiency uncertainty: halving the assumed
    transmission doubles kappa, one to one.
    """
    if "b" not in power_fit.params:
        raise ValueError("power_fit must come from fit_power_decomposition")
    if not power_fit.converged:
        raise FitError("power-sweep fit did not converge")
    b = power_fit.params["b"]
    if b <= 0:
        raise FitError("linear coefficient is not positive; kappa undefined")
    sigma_b = power_fit.stderr("b")
    unit_wg = replace(waveguide, kappa=1.0)
    per_kappa = total_flux_model(
        1.0, unit_wg, pump_wavelength, bands, guard=guard
    ).linear
    factor = per_kappa * chain.throughput()
    if factor <= 0:
        raise FitError("zero detection throughput; kappa unconstrained")
    kappa = b / factor
    components = {
        "fit_b": sigma_b / b,
        "losses": chain.losses.relative_sigma(),
        "efficiency": chain.efficiency_rel_sigma,
    }
    sigma = kappa * math.sqrt(sum(v**2 for v in components.values()))
    return KappaEstimate(kappa=kappa, sigma=sigma, relative_components=components)
