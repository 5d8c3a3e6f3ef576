"""Exact propagation of the ladder amplitudes under the full field.

The state is expanded as psi(t) = sum_n c_n(t) |n> e^{-i eps_n t}; inserting
this into the Schroedinger equation with H = H0 - mu E(t) gives

    i dc_n/dt = -E(t) [ mu_n e^{+i wbar_n t} c_{n-1}
                        + mu_{n+1} e^{-i wbar_{n+1} t} c_{n+1} ],

which is integrated with an adaptive Dormand-Prince 5(4) pair and PI step
control.  No rotating-wave reduction is applied anywhere: the full real
field multiplies both resonant and counter-rotating terms, so this module
is independent of every approximation it is used to check.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .errors import IntegrationFailureError
from .model import ControlField, LadderSystem, transition_frequencies

# Dormand-Prince 5(4) tableau.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (  # b5 - b4: error estimator weights
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


@dataclass(frozen=True)
class PropagationSpec:
    """Time window and error tolerances for one propagation."""

    t_start: float
    t_end: float
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("t_start must precede t_end")
        for tol in (self.rel_tol, self.abs_tol):
            if not (0.0 < tol <= 1e-2):
                raise ValueError("tolerances must lie in (0, 1e-2]")


@dataclass(frozen=True)
class StateCoefficients:
    """Ladder amplitudes c_n at a given time (rotating-frame coefficients)."""

    coeffs: tuple[complex, ...]
    time: float

    def norm_squared(self) -> float:
        return sum(abs(c) ** 2 for c in self.coeffs)


def default_propagation_spec(
    field: ControlField, rel_tol: float = 1e-10, abs_tol: float = 1e-12
) -> PropagationSpec:
    """Window covering the envelope support (the field vanishes outside)."""
    t0, t1 = field.envelope.support()
    return PropagationSpec(t0, t1, rel_tol, abs_tol)


def population(state: StateCoefficients, target_index: int) -> float:
    """|c_target|^2, the occupation of one ladder level."""
    if not 0 <= target_index < len(state.coeffs):
        raise ValueError(
            f"target index {target_index} out of range 0..{len(state.coeffs) - 1}"
        )
    return abs(state.coeffs[target_index]) ** 2


def _make_rhs(system: LadderSystem, field: ControlField):
    wbar = transition_frequencies(system)
    mus = system.dipoles
    n_levels = len(system.energies)
    comps = tuple((c.amplitude, c.frequency, c.phase) for c in field.components)
    env = field.envelope
    cos = math.cos
    cexp = cmath.exp

    def rhs(t: float, c: list[complex]) -> list[complex]:
        st = env.value_scalar(t)
        if st == 0.0:
            return [0.0j] * n_levels
        e = 0.0
        for amp, w, th in comps:
            e += amp * cos(w * t + th)
        factor = 2.0j * st * e
        phases = [cexp(1j * w * t) for w in wbar]
        out = []
        for n in range(n_levels):
            acc = 0.0j
            if n > 0:
                acc += mus[n - 1] * phases[n - 1] * c[n - 1]
            if n < n_levels - 1:
                acc += mus[n] * phases[n].conjugate() * c[n + 1]
            out.append(factor * acc)
        return out

    return rhs


def propagate(
    system: LadderSystem,
    field: ControlField,
    spec: PropagationSpec | None = None,
) -> StateCoefficients:
    """Integrate from the ground state across the pulse; returns c_n(t_end).

    Starts from c_0 = 1 at ``spec.t_start`` (choose it where the envelope is
    negligible, which :func:`default_propagation_spec` does).  The embedded
    4th-order error estimate drives a PI controller; the accepted solution is
    the 5th-order one, so the norm stays within a small multiple of
    ``rel_tol`` of unity.
    """
    if spec is None:
        spec = default_propagation_spec(field)
    rhs = _make_rhs(system, field)
    n_levels = len(system.energies)
    y = [0.0j] * n_levels
    y[0] = 1.0 + 0.0j

    t = spec.t_start
    span = spec.t_end - spec.t_start
    h_max = span / 32.0
    h = min(h_max, span / 1024.0)
    h_min_floor = 16.0 * math.ulp(max(abs(spec.t_start), abs(spec.t_end), 1.0))
    rtol, atol = spec.rel_tol, spec.abs_tol
    err_prev = 1e-4
    f0 = rhs(t, y)

    while t < spec.t_end:
        remaining = spec.t_end - t
        if remaining <= h_min_floor:
            break  # within roundoff of the endpoint; the sliver carries nothing
        h = min(h, remaining)
        if h < h_min_floor:
            raise IntegrationFailureError("step size underflow", t_reached=t)
        ks = [f0]
        for stage in range(1, 7):
            a_row = _A[stage]
            yt = [
                y[i] + h * sum(a_row[j] * ks[j][i] for j in range(stage))
                for i in range(n_levels)
            ]
            ks.append(rhs(t + _C[stage] * h, yt))
        y_new = [
            y[i] + h * sum(_B5[j] * ks[j][i] for j in range(7))
            for i in range(n_levels)
        ]
        err_sq = 0.0
        for i in range(n_levels):
            e_i = h * sum(_E[j] * ks[j][i] for j in range(7))
            scale = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            err_sq += (abs(e_i) / scale) ** 2
        err = math.sqrt(err_sq / n_levels)
        if err <= 1.0:
            t += h
            y = y_new
            f0 = ks[6]  # FSAL
            err = max(err, 1e-10)
            factor = 0.9 * err ** (-0.7 / 5.0) * err_prev ** (0.4 / 5.0)
            err_prev = err
            h = min(h * min(5.0, max(0.2, factor)), h_max)
        else:
            h *= max(0.2, 0.9 * err ** (-0.2))
    return StateCoefficients(tuple(y), t)
