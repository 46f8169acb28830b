"""Population inversion of a thermal qubit by jump-triggered drive.

A qubit couples to a thermal bath (emission and absorption jumps, rates
gamma*(nbar+1) and gamma*nbar).  The feedback: after a detected emission,
wait tau0, then apply a resonant coherent drive of strength lam for a
duration tau1; a detected absorption switches the drive off.  Everything
is expressed in the frame rotating at the drive frequency (populations
are invariant under that frame change, which is a sigma_z rotation).

Basis order is (ground, excited); sigma_z = diag(+1, -1) so the ground
state sits at energy -omega/2 when H = -(omega/2) sigma_z.

Closed-form results implemented here and cross-checked against the
numerical steady-state pipeline:

* pe_analytic: steady-state excited population at resonance for nbar > 0;
* tau1_opt: the drive duration maximizing the excited population, a
  function of p = gamma/lam only (finite for p < 4);
* pe_zero_temp: the nbar -> 0 limit at the optimal duration;
* tau0_max: the largest delay that still yields inversion at nbar -> 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from . import linops
from .engine_jump import FeedbackSchedule, Segment, omega_map, steady_unconditional
from .errors import DomainError, ValidationError
from .model import QuantumModel

EMISSION = -1
ABSORPTION = +1

SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
LOWER = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)   # |g><e|
RAISE = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)   # |e><g|
PROJ_E = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)

# Smallest bath occupation the numerical pipeline substitutes for nbar=0;
# below this the drive-off generator is too close to singular.
NBAR_FLOOR = 1e-6


@dataclass(frozen=True)
class InversionParams:
    """Bath and feedback parameters of the inversion protocol."""

    gamma: float          # qubit-bath coupling rate
    nbar: float           # Bose-Einstein occupation of the bath
    lam: float            # drive strength (rotating frame, after RWA)
    tau0: float = 0.0     # feedback delay before the drive turns on
    tau1: float = 0.0     # drive duration
    delta: float = 0.0    # drive detuning; analytic results need 0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValidationError("gamma must be positive")
        if self.lam < 0:
            raise ValidationError("lam must be nonnegative")
        if self.nbar < 0:
            raise ValidationError("nbar must be nonnegative")
        if self.tau0 < 0 or self.tau1 < 0:
            raise ValidationError("tau0 and tau1 must be nonnegative")

    @property
    def p(self) -> float:
        if self.lam == 0:
            return np.inf
        return self.gamma / self.lam


def _jumps(gamma: float, nbar: float) -> dict:
    return {
        EMISSION: np.sqrt(gamma * (nbar + 1)) * LOWER,
        ABSORPTION: np.sqrt(gamma * nbar) * RAISE,
    }


def thermal_model(gamma: float, nbar: float, hamiltonian=None) -> QuantumModel:
    """Thermal qubit with both jump channels monitored."""
    h = np.zeros((2, 2), dtype=complex) if hamiltonian is None else hamiltonian
    return QuantumModel(
        hamiltonian=h,
        jumps=_jumps(gamma, nbar),
        monitored=(EMISSION, ABSORPTION),
    )


def build_schedule(params: InversionParams) -> FeedbackSchedule:
    """Feedback schedule of the inversion protocol.

    Absorption channel: drive always off.  Emission channel: off during
    the delay [0, tau0), on during [tau0, tau0 + tau1), off afterwards.
    Identical jump operators everywhere, so the Omega pipeline applies.
    Degenerate parameters (lam = 0 or tau1 = 0) collapse to the
    no-feedback thermal schedule.
    """
    h_off = -(params.delta / 2) * SIGMA_Z
    h_on = h_off + params.lam * SIGMA_X
    off = thermal_model(params.gamma, params.nbar, h_off)
    on = thermal_model(params.gamma, params.nbar, h_on)

    if params.lam == 0 or params.tau1 == 0:
        emission = (Segment(None, off),)
    elif params.tau0 == 0:
        emission = (Segment(params.tau1, on), Segment(None, off))
    else:
        emission = (
            Segment(params.tau0, off),
            Segment(params.tau1, on),
            Segment(None, off),
        )
    return FeedbackSchedule({
        EMISSION: emission,
        ABSORPTION: (Segment(None, off),),
    })


def pe_numeric(params: InversionParams, tol: float = 1e-8) -> float:
    """Excited population from the Omega steady-state pipeline.

    nbar below the floor is substituted by the floor (with a warning); the
    drive-off no-jump generator is singular at nbar = 0, where the
    analytic zero-temperature limit should be used instead.  Populations
    are frame independent, so no rotating-frame undo is needed.
    """
    if params.nbar < NBAR_FLOOR:
        warnings.warn(
            f"nbar={params.nbar:g} below numerical floor; evaluating at "
            f"{NBAR_FLOOR:g} (use pe_zero_temp for the exact limit)",
            stacklevel=2,
        )
        params = InversionParams(
            gamma=params.gamma, nbar=NBAR_FLOOR, lam=params.lam,
            tau0=params.tau0, tau1=params.tau1, delta=params.delta,
        )
    rho = steady_unconditional(omega_map(build_schedule(params)), tol=tol)
    return float(rho[1, 1].real)


def pe_analytic(params: InversionParams) -> float:
    """Closed-form excited population at resonance (delta = 0, nbar > 0).

    The Rabi-like frequency omega_r = sqrt(gamma^2 - 16 lam^2) is
    evaluated in complex arithmetic throughout: for gamma < 4 lam it is
    imaginary and the hyperbolic terms become trigonometric, with a real
    result either way.
    """
    if params.delta != 0:
        raise DomainError("analytic populations are only provided at delta = 0")
    if params.nbar == 0:
        raise DomainError("nbar = 0 is singular here; use pe_zero_temp")
    if params.lam == 0:
        return params.nbar / (2 * params.nbar + 1)

    gam, nbar, lam = params.gamma, params.nbar, params.lam
    tau0, tau1 = params.tau0, params.tau1
    u = 2 * nbar + 1
    delta = nbar * (nbar + 1) * gam**2 + 4 * lam**2
    omega_r = np.sqrt(complex(gam**2 - 16 * lam**2))

    ep = np.exp(tau1 * omega_r / 2)
    em = np.exp(-tau1 * omega_r / 2)
    psi = 2 * lam**2 * np.exp(-(nbar * tau0 + u * tau1 / 2) * gam) * (
        4 * delta
        + 8 * u * lam**2 * (ep + em)
        - (nbar + 1) * gam * u * (omega_r * (ep - em) + gam * (ep + em))
    )
    xi = (nbar + 1) / (nbar * u * omega_r**2 * delta) * (
        u * omega_r**2 * delta
        - 4 * (1 + nbar) * lam**2 * omega_r**2 * np.exp(-nbar * tau0 * gam)
        - psi
    )
    if abs(xi.imag) > 1e-8 * max(abs(xi.real), 1.0):
        raise DomainError(
            f"analytic expression produced a complex ratio ({xi:.3g})"
        )
    return float(1.0 / (1.0 + xi.real))


def tau1_opt(gamma: float, lam: float) -> float:
    """Drive duration maximizing the excited population.

    Depends only on p = gamma/lam and is finite only for p < 4 (beyond
    that the optimal duration diverges).  The arctangent branch is fixed
    by continuity in p, which reduces to atan2 of the (numerator,
    denominator) pair.
    """
    if gamma <= 0 or lam <= 0:
        raise ValidationError("tau1_opt needs gamma > 0 and lam > 0")
    p = gamma / lam
    if p >= 4:
        raise DomainError(
            f"optimal drive duration diverges for gamma/lam = {p:g} >= 4"
        )
    root = np.sqrt(16 - p * p)
    return float(2 * (np.pi + np.arctan2(p * root, 8 - p * p)) / (lam * root))


def pe_zero_temp(gamma: float, lam: float, tau0: float) -> float:
    """nbar -> 0 limit of the excited population at the optimal duration."""
    if tau0 < 0:
        raise ValidationError("tau0 must be nonnegative")
    t1 = tau1_opt(gamma, lam)
    p = gamma / lam
    return float(1.0 / (2.0 - np.exp(-gamma * t1 / 2) + p * p / 4 + gamma * tau0))


def tau0_max(gamma: float, lam: float) -> float:
    """Largest delay still giving inversion in the nbar -> 0 limit.

    Clamped at zero: for drives too weak relative to the coupling
    (gamma/lam above roughly 1.146) no delay achieves inversion.
    """
    t1 = tau1_opt(gamma, lam)
    p = gamma / lam
    raw = (4 * np.exp(-gamma * t1 / 2) - p * p) / (4 * gamma)
    return float(max(raw, 0.0))


def argmax_tau1(
    gamma: float, lam: float, nbar: float, tau0: float,
    coarse: int = 400, xatol: float = 1e-10,
) -> float:
    """Numerical argmax of pe_analytic over tau1 (independent check).

    Scans one full oscillation period of the driven decay on a coarse
    grid, then polishes with bounded scalar minimization.
    """
    p = gamma / lam
    period = 4 * np.pi / (lam * np.sqrt(max(16 - p * p, 1e-12)))

    def neg_pe(t1):
        return -pe_analytic(InversionParams(
            gamma=gamma, nbar=nbar, lam=lam, tau0=tau0, tau1=float(t1)))

    grid = np.linspace(period / coarse, 1.5 * period, coarse)
    vals = [neg_pe(t) for t in grid]
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    res = scipy.optimize.minimize_scalar(
        neg_pe, bounds=(lo, hi), method="bounded",
        options={"xatol": xatol},
    )
    return float(res.x)


def inversion_threshold(nbar: float = NBAR_FLOOR, tau0: float = 0.0,
                        lo: float = 0.5, hi: float = 2.0) -> float:
    """gamma/lam ratio where the steady population crosses 1/2.

    Solved on pe_analytic with tau1 at its optimum; the bath occupation
    defaults to the numerical floor standing in for the nbar -> 0 limit.
    """
    def gap(p):
        params = InversionParams(gamma=p, nbar=nbar, lam=1.0, tau0=tau0,
                                 tau1=tau1_opt(p, 1.0))
        return pe_analytic(params) - 0.5

    return float(scipy.optimize.brentq(gap, lo, hi, xtol=1e-10))


# Default grids mirroring the published sweep panels.
PANEL_B_RATIOS = (0.1, 0.5, 1.0, 1.145, 1.5)
PANEL_C_RATIOS = (0.1, 0.5, 1.0, 1.145)
PANEL_D_RATIOS = tuple(np.round(np.linspace(0.05, 3.9, 78), 6))


def sweep_figures(panel: str, gamma: float = 1.0) -> tuple[list[str], list[list]]:
    """CSV-ready rows for the inversion summary panels.

    Panel b: excited population vs bath occupation at zero delay and
    optimal duration, per drive ratio, plus the no-feedback reference.
    Panel c: excited population vs delay in the low-temperature limit.
    Panel d: scaled optimal duration and maximum delay vs drive ratio.
    """
    if panel == "b":
        header = ["panel", "gamma_over_lambda", "nbar", "gamma_tau0", "pe"]
        rows: list[list] = []
        nbars = np.concatenate(([NBAR_FLOOR], np.geomspace(0.01, 2.0, 40)))
        for nb in nbars:
            rows.append(["b", np.inf, float(nb), 0.0,
                         float(nb / (2 * nb + 1))])
        for p in PANEL_B_RATIOS:
            lam = gamma / p
            t1 = tau1_opt(gamma, lam)
            for nb in nbars:
                pe = pe_analytic(InversionParams(
                    gamma=gamma, nbar=float(nb), lam=lam, tau0=0.0, tau1=t1))
                rows.append(["b", float(p), float(nb), 0.0, pe])
        return header, rows
    if panel == "c":
        header = ["panel", "gamma_over_lambda", "gamma_tau0", "pe"]
        rows = []
        for p in PANEL_C_RATIOS:
            lam = gamma / p
            for gt0 in np.linspace(0.0, 2.0, 41):
                rows.append(["c", float(p), float(gt0),
                             pe_zero_temp(gamma, lam, gt0 / gamma)])
        return header, rows
    if panel == "d":
        header = ["panel", "gamma_over_lambda", "gamma_tau1_opt",
                  "gamma_tau0_max"]
        rows = []
        for p in PANEL_D_RATIOS:
            lam = gamma / p
            rows.append(["d", float(p),
                         gamma * tau1_opt(gamma, lam),
                         gamma * tau0_max(gamma, lam)])
        return header, rows
    raise ValidationError(f"unknown panel {panel!r}; expected b, c or d")


def richardson_zero_temp(gamma: float, lam: float, tau0: float,
                         nbars=(1e-4, 1e-5, 1e-6)) -> float:
    """Extrapolate pe_numeric to nbar = 0 through a polynomial fit."""
    t1 = tau1_opt(gamma, lam)
    xs = np.asarray(nbars, dtype=float)
    ys = [pe_numeric(InversionParams(gamma=gamma, nbar=float(nb), lam=lam,
                                     tau0=tau0, tau1=t1))
          for nb in xs]
    coeffs = np.polyfit(xs, ys, deg=len(xs) - 1)
    return float(np.polyval(coeffs, 0.0))
