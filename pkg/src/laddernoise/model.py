"""Physical system, control field, and pulse envelope value types.

Everything here is an immutable value: an (N+1)-level ladder with
nearest-neighbour dipole couplings, multi-component control fields

    E(t) = 2 s(t) sum_l A_l cos(omega_l t + theta_l),

and the Gaussian / rectangular envelopes s(t) together with their spectra
S(omega).  Units follow hbar = 1: energies and angular frequencies share one
unit and time is its inverse.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

TWO_SQRT_PI = 2.0 * math.sqrt(math.pi)


@dataclass(frozen=True)
class LadderSystem:
    """Nondegenerate ladder of N+1 levels coupled only to nearest neighbours.

    Parameters
    ----------
    energies : sequence of float
        Level energies eps_n, n = 0..N, strictly increasing.
    dipoles : sequence of float
        Dipole matrix elements mu_n linking level n-1 to level n, n = 1..N.
        All nonzero; one fewer entry than ``energies``.
    """

    energies: tuple[float, ...]
    dipoles: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "energies", tuple(float(e) for e in self.energies))
        object.__setattr__(self, "dipoles", tuple(float(m) for m in self.dipoles))
        if len(self.energies) < 2:
            raise ValueError("ladder needs at least two levels")
        if len(self.dipoles) != len(self.energies) - 1:
            raise ValueError("need exactly one dipole per adjacent level pair")
        if any(b <= a for a, b in zip(self.energies, self.energies[1:])):
            raise ValueError("energies must be strictly increasing")
        if any(m == 0.0 for m in self.dipoles):
            raise ValueError("dipoles must all be nonzero")

    @property
    def n_transitions(self) -> int:
        return len(self.dipoles)


def transition_frequencies(system: LadderSystem) -> tuple[float, ...]:
    """Adjacent level gaps eps_n - eps_{n-1} for n = 1..N (all positive)."""
    e = system.energies
    return tuple(e[n] - e[n - 1] for n in range(1, len(e)))


@dataclass(frozen=True)
class PulseComponent:
    """One monochromatic component of the control field: A cos(w t + theta)."""

    amplitude: float
    phase: float
    frequency: float

    def __post_init__(self):
        if not math.isfinite(self.amplitude) or self.amplitude < 0.0:
            raise ValueError("amplitude must be finite and nonnegative")
        if not (self.frequency > 0.0):
            raise ValueError("frequency must be positive")


@dataclass(frozen=True)
class GaussianEnvelope:
    """Gaussian pulse shape s(t) = exp(-pi t^2 / tau^2).

    The spectrum is S(omega) = tau exp(-omega^2 / sigma^2) with spectral
    width sigma = 2 sqrt(pi)/tau, so the effective duration S(0) equals tau
    exactly.  Time-domain quadrature truncates the support to
    ``+-truncation_halfwidths * tau`` (the tail beyond 8 tau is below
    exp(-64 pi)).
    """

    tau: float
    truncation_halfwidths: float = 8.0

    def __post_init__(self):
        if not (self.tau > 0.0):
            raise ValueError("tau must be positive")
        if not (self.truncation_halfwidths > 0.0):
            raise ValueError("truncation_halfwidths must be positive")

    @property
    def sigma(self) -> float:
        """Spectral width, 2 sqrt(pi) / tau."""
        return TWO_SQRT_PI / self.tau

    @property
    def effective_duration(self) -> float:
        return self.tau

    def support(self) -> tuple[float, float]:
        h = self.truncation_halfwidths * self.tau
        return (-h, h)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-math.pi * t * t / (self.tau * self.tau))

    def value_scalar(self, t: float) -> float:
        return math.exp(-math.pi * t * t / (self.tau * self.tau))

    def spectrum(self, omega):
        omega = np.asarray(omega, dtype=float)
        s = self.sigma
        return (self.tau * np.exp(-(omega * omega) / (s * s))).astype(complex)


@dataclass(frozen=True)
class RectangularEnvelope:
    """Rectangular pulse shape: s(t) = 1 on [0, T], 0 elsewhere.

    S(omega) = (exp(i omega T) - 1)/(i omega), with the removable singularity
    at omega = 0 evaluated as S(0) = T.
    """

    duration: float

    def __post_init__(self):
        if not (self.duration > 0.0):
            raise ValueError("duration must be positive")

    @property
    def effective_duration(self) -> float:
        return self.duration

    def support(self) -> tuple[float, float]:
        return (0.0, self.duration)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return ((t >= 0.0) & (t <= self.duration)).astype(float)

    def value_scalar(self, t: float) -> float:
        return 1.0 if 0.0 <= t <= self.duration else 0.0

    def spectrum(self, omega):
        # (e^{i w T} - 1)/(i w) = [sin(wT) + 2 i sin^2(wT/2)] / w, which is
        # cancellation-free for small w; the w = 0 point is patched to T.
        omega = np.asarray(omega, dtype=float)
        T = self.duration
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (np.sin(omega * T) + 2.0j * np.sin(omega * T / 2.0) ** 2) / omega
        if out.ndim == 0:
            return complex(out) if omega != 0.0 else complex(T)
        out[omega == 0.0] = T
        return out


Envelope = GaussianEnvelope | RectangularEnvelope


@dataclass(frozen=True)
class ControlField:
    """Multi-component pulse: E(t) = 2 s(t) sum_l A_l cos(omega_l t + theta_l).

    When used with the perturbative closed forms the number of components
    must equal the number of ladder transitions, component l near-resonant
    with transition l.  The exact propagator accepts any number of
    components.
    """

    components: tuple[PulseComponent, ...]
    envelope: Envelope

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) < 1:
            raise ValueError("a control field needs at least one component")

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def amplitudes(self) -> tuple[float, ...]:
        return tuple(c.amplitude for c in self.components)

    def value(self, t):
        """Real field E(t); accepts scalars or arrays."""
        t = np.asarray(t, dtype=float)
        carrier = sum(
            c.amplitude * np.cos(c.frequency * t + c.phase) for c in self.components
        )
        out = 2.0 * self.envelope.value(t) * carrier
        return float(out) if out.ndim == 0 else out

    def spectrum(self, omega):
        """Fourier transform f(omega) of E(t); satisfies f(-w) = conj(f(w))."""
        total = 0.0 + 0.0j
        for c in self.components:
            pos = self.envelope.spectrum(np.asarray(omega, float) - c.frequency)
            neg = self.envelope.spectrum(np.asarray(omega, float) + c.frequency)
            total = total + c.amplitude * (
                np.exp(-1j * c.phase) * pos + np.exp(1j * c.phase) * neg
            )
        return total

    def with_amplitudes(self, amplitudes) -> "ControlField":
        if len(amplitudes) != len(self.components):
            raise ValueError("amplitude count must match component count")
        comps = tuple(
            PulseComponent(float(a), c.phase, c.frequency)
            for a, c in zip(amplitudes, self.components)
        )
        return ControlField(comps, self.envelope)


def field_value(field: ControlField, t) -> float:
    """E(t) = 2 s(t) sum_l A_l cos(omega_l t + theta_l)."""
    return field.value(t)


def field_spectrum(field: ControlField, omega) -> complex:
    """f(omega) = sum_l A_l [e^{-i theta_l} S(w - w_l) + e^{i theta_l} S(w + w_l)]."""
    return field.spectrum(omega)


def fluence(amplitudes) -> float:
    """Squared-amplitude budget sum_l A_l^2 of a component list."""
    return float(sum(float(a) ** 2 for a in amplitudes))


@dataclass(frozen=True)
class Detunings:
    """Per-transition detunings delta_k = omega_k - wbar_k and their cumulants.

    ``cumulants[k]`` is Delta_{k+1} = sum_{p <= k+1} delta_p (1-based in the
    physics indexing); the implicit Delta_0 = 0 is not stored.
    """

    deltas: tuple[float, ...]
    cumulants: tuple[float, ...] = field(default=())

    def __post_init__(self):
        deltas = tuple(float(d) for d in self.deltas)
        object.__setattr__(self, "deltas", deltas)
        rebuilt = tuple(itertools.accumulate(deltas))
        if not self.cumulants:
            object.__setattr__(self, "cumulants", rebuilt)
        else:
            cums = tuple(float(c) for c in self.cumulants)
            object.__setattr__(self, "cumulants", cums)
            if len(cums) != len(deltas):
                raise ValueError("cumulants length must match deltas length")
            if any(abs(a - b) > 1e-12 for a, b in zip(rebuilt, cums)):
                raise ValueError("cumulants inconsistent with deltas")

    @classmethod
    def from_deltas(cls, deltas) -> "Detunings":
        return cls(tuple(float(d) for d in deltas))

    @property
    def n(self) -> int:
        return len(self.deltas)

    @property
    def total(self) -> float:
        """Delta_N, the full cumulant detuning."""
        return self.cumulants[-1]


def detunings_for(system: LadderSystem, field: ControlField) -> Detunings:
    """Detunings of each field component from its associated transition.

    Requires one component per transition (component l drives transition l).
    """
    wbar = transition_frequencies(system)
    if len(field.components) != len(wbar):
        raise ValueError(
            f"field has {len(field.components)} components but the ladder has "
            f"{len(wbar)} transitions; the perturbative association needs M = N"
        )
    return Detunings.from_deltas(
        tuple(c.frequency - w for c, w in zip(field.components, wbar))
    )
