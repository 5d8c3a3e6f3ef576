"""Shot-to-shot pulse noise: sampling, Monte Carlo averages, analytic averages.

Each laboratory shot draws independent zero-mean offsets for the component
amplitudes, phases, and frequencies; the observable is the ensemble average
of the single-shot yield.  Sampling is deterministic and order-independent:
shot i uses its own counter-based stream keyed by (seed, i), and the
reduction is a fixed-order pairwise tree, so serial and parallel runs agree
bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import AccuracyWarning, EnsembleEvaluationError, ValidityWarning
from .model import (
    ControlField,
    GaussianEnvelope,
    LadderSystem,
    PulseComponent,
)
from .perturbation import (
    amplitude_time_quadrature,
    closed_form_amplitude,
    transition_yield,
)
from .tdse import default_propagation_spec, population, propagate


@dataclass(frozen=True)
class UniformNoise:
    """Zero-mean uniform offset on [-half_width, +half_width]."""

    half_width: float

    def __post_init__(self):
        if self.half_width < 0.0:
            raise ValueError("half_width must be nonnegative")

    @property
    def variance(self) -> float:
        return self.half_width**2 / 3.0

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(-self.half_width, self.half_width))


@dataclass(frozen=True)
class GaussianNoise:
    """Zero-mean normal offset with the given standard deviation."""

    std: float

    def __post_init__(self):
        if self.std < 0.0:
            raise ValueError("std must be nonnegative")

    @property
    def variance(self) -> float:
        return self.std**2

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.normal(0.0, self.std))


Distribution = UniformNoise | GaussianNoise


def frequency_noise_scaled(d: float, sigma: float) -> GaussianNoise:
    """Gaussian frequency jitter with dimensionless strength ``d``.

    The detuning density has scale d * sigma (spectral width sigma of the
    envelope), i.e. standard deviation d * sigma / sqrt(2).
    """
    return GaussianNoise(d * sigma / math.sqrt(2.0))


@dataclass(frozen=True)
class ComponentNoise:
    """Noise distributions for one pulse component (None = no noise)."""

    amplitude: Distribution | None = None
    phase: Distribution | None = None
    frequency: Distribution | None = None


@dataclass(frozen=True)
class NoiseSpec:
    """Per-component shot-to-shot noise for a whole field."""

    components: tuple[ComponentNoise, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @classmethod
    def quiet(cls, n_components: int) -> "NoiseSpec":
        return cls(tuple(ComponentNoise() for _ in range(n_components)))

    @classmethod
    def amplitude_uniform(cls, half_widths) -> "NoiseSpec":
        return cls(
            tuple(ComponentNoise(amplitude=UniformNoise(g)) for g in half_widths)
        )

    @classmethod
    def phase_uniform(cls, half_widths) -> "NoiseSpec":
        return cls(tuple(ComponentNoise(phase=UniformNoise(g)) for g in half_widths))

    @classmethod
    def frequency_gaussian(cls, d_values, sigma: float) -> "NoiseSpec":
        return cls(
            tuple(
                ComponentNoise(frequency=frequency_noise_scaled(d, sigma))
                for d in d_values
            )
        )

    def amplitude_variances(self) -> tuple[float, ...]:
        return tuple(
            c.amplitude.variance if c.amplitude is not None else 0.0
            for c in self.components
        )

    @property
    def active(self) -> bool:
        return any(
            c.amplitude is not None or c.phase is not None or c.frequency is not None
            for c in self.components
        )


def sample_stream(seed: int, sample_index: int) -> np.random.Generator:
    """Independent counter-based stream for one ensemble sample."""
    return np.random.Generator(
        np.random.Philox(key=np.array([seed, sample_index], dtype=np.uint64))
    )


def sample_field(
    nominal: ControlField, noise: NoiseSpec, rng: np.random.Generator
) -> tuple[ControlField, int]:
    """One noisy realization of ``nominal``; the nominal field is untouched.

    Sampled amplitudes are clamped at zero from below; the number of clamp
    events is returned alongside the field so ensemble statistics can report
    it.  (Uniform amplitude noise with half-width <= A never clamps.)
    """
    if len(noise.components) != len(nominal.components):
        raise ValueError("noise spec length must match component count")
    clamped = 0
    comps = []
    for comp, cn in zip(nominal.components, noise.components):
        amp = comp.amplitude + (cn.amplitude.sample(rng) if cn.amplitude else 0.0)
        if amp < 0.0:
            amp = 0.0
            clamped += 1
        phase = comp.phase + (cn.phase.sample(rng) if cn.phase else 0.0)
        freq = comp.frequency + (cn.frequency.sample(rng) if cn.frequency else 0.0)
        comps.append(PulseComponent(amp, phase, freq))
    return ControlField(tuple(comps), nominal.envelope), clamped


def pairwise_sum(values: np.ndarray) -> float:
    """Fixed-order pairwise-tree reduction (bit-stable for a given array)."""
    n = len(values)
    if n <= 8:
        total = 0.0
        for v in values:
            total += float(v)
        return total
    half = n // 2
    return pairwise_sum(values[:half]) + pairwise_sum(values[half:])


@dataclass(frozen=True)
class EnsembleStats:
    """Noise-averaged yield with its Monte Carlo uncertainty."""

    mean: float
    std_error: float
    samples: int
    seed: int
    clamp_events: int = 0


class Evaluator(Enum):
    TDSE = "tdse"
    PERTURB_TIME = "perturb-time"
    CLOSED_FORM = "closed-form"


def _single_shot_yield(
    system: LadderSystem,
    field: ControlField,
    evaluator: Evaluator,
    target_index: int,
    rel_tol: float,
    abs_tol: float,
) -> float:
    if evaluator is Evaluator.TDSE:
        spec = default_propagation_spec(field, rel_tol, abs_tol)
        return population(propagate(system, field, spec), target_index)
    if target_index != system.n_transitions:
        raise ValueError(
            "perturbative evaluators only produce the top-level yield; use the "
            "tdse evaluator for intermediate targets"
        )
    if evaluator is Evaluator.PERTURB_TIME:
        amp = amplitude_time_quadrature(system, field, rwa=True)
    else:
        amp = closed_form_amplitude(system, field)
    return transition_yield(amp, system, field)


def ensemble_average(
    system: LadderSystem,
    nominal: ControlField,
    noise: NoiseSpec,
    evaluator: Evaluator,
    samples: int,
    seed: int,
    target_index: int | None = None,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-12,
    threads: int = 1,
) -> EnsembleStats:
    """Monte Carlo noise average of the yield over ``samples`` shots.

    Deterministic for fixed (seed, samples) regardless of ``threads``: each
    shot draws from its own (seed, index) stream, yields are stored by index,
    and the reduction is the fixed pairwise tree.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    if target_index is None:
        target_index = system.n_transitions

    yields = np.empty(samples, dtype=float)
    clamp_counts = np.zeros(samples, dtype=int)

    def evaluate(i: int):
        try:
            fld, clamp_counts[i] = sample_field(
                nominal, noise, sample_stream(seed, i)
            )
            yields[i] = _single_shot_yield(
                system, fld, evaluator, target_index, rel_tol, abs_tol
            )
        except Exception as exc:  # annotate with the failing sample
            raise EnsembleEvaluationError(i, exc) from exc

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(evaluate, range(samples)))
    else:
        for i in range(samples):
            evaluate(i)

    mean = pairwise_sum(yields) / samples
    dev_sq = (yields - mean) ** 2
    sample_var = pairwise_sum(dev_sq) / (samples - 1)
    std_error = math.sqrt(sample_var / samples)
    return EnsembleStats(mean, std_error, samples, seed, int(clamp_counts.sum()))


# ---------------------------------------------------------------------------
# analytic noise averages
# ---------------------------------------------------------------------------


def amplitude_noise_average(coupling: float, amplitudes, variances) -> float:
    """Amplitude-noise-averaged yield coupling^2 prod_l (A_l^2 + var_l).

    ``coupling`` is the amplitude-independent magnitude |scaled amplitude *
    prod_k mu_k|; uniform noise of half-width gamma has variance gamma^2/3.
    """
    out = coupling**2
    for a, v in zip(amplitudes, variances, strict=True):
        if v < 0.0:
            raise ValueError("variances must be nonnegative")
        out *= float(a) ** 2 + float(v)
    return out


@dataclass(frozen=True, eq=False)
class FreqNoiseKernel:
    """Closed-form Gaussian average over jittered detunings.

    Built from the dimensionless noise strengths d_k, mean detunings, and the
    envelope spectral width; ``b_matrix``/``b_inverse``/``det_b`` are the
    quadratic-form data of the averaging integral, with

        (B^-1)_kj = d_k^2 (delta_kj - 2 d_j^2 / (N (1 + 2 dbar^2))),
        det B     = (1 + 2 dbar^2) / prod d_k^2.
    """

    d: tuple[float, ...]
    delta_bar: tuple[float, ...]
    sigma: float

    def __post_init__(self):
        if any(dk <= 0.0 for dk in self.d):
            raise ValueError("noise strengths d_k must be positive")
        if len(self.d) != len(self.delta_bar):
            raise ValueError("d and delta_bar must have equal length")

    @property
    def n(self) -> int:
        return len(self.d)

    @property
    def d_sq_mean(self) -> float:
        return float(np.mean(np.square(self.d)))

    @property
    def b_matrix(self) -> np.ndarray:
        d = np.asarray(self.d)
        return np.diag(1.0 / d**2) + 2.0 / self.n

    @property
    def b_inverse(self) -> np.ndarray:
        d2 = np.square(np.asarray(self.d))
        return np.diag(d2) - np.outer(d2, d2) * (
            2.0 / (self.n * (1.0 + 2.0 * self.d_sq_mean))
        )

    @property
    def det_b(self) -> float:
        return (1.0 + 2.0 * self.d_sq_mean) / float(np.prod(np.square(self.d)))

    def evaluate(self, delays, delays_conj):
        """Averaging kernel L_N for one or many delay pairs.

        ``delays``/``delays_conj`` have shape (N-1,) or (m, N-1); the result
        is a complex scalar or an (m,) array.
        """
        d = np.asarray(self.d)
        db = np.asarray(self.delta_bar)
        u = np.atleast_2d(np.asarray(delays) - np.asarray(delays_conj))
        # v[k] = sum_{j >= k} u_j for k = 1..N-1, and v[N] = 0
        v = np.concatenate(
            [np.cumsum(u[:, ::-1], axis=1)[:, ::-1], np.zeros((u.shape[0], 1))],
            axis=1,
        )
        v_bar = v.mean(axis=1, keepdims=True)
        c = 2.0 * db / (self.sigma**2 * d**2) - 1j * (v_bar - v) / self.sigma
        quad = np.einsum("mi,ij,mj->m", c, self.b_inverse, c)
        expo = (self.sigma**2 / 4.0) * quad - np.sum(
            db**2 / (d**2 * self.sigma**2)
        )
        out = (1.0 / np.prod(d)) * self.det_b**-0.5 * np.exp(expo)
        return complex(out[0]) if np.asarray(delays).ndim == 1 else out


def frequency_noise_kernel(
    delays, delays_conj, d, delta_bar, sigma: float
) -> complex:
    """Closed form of the detuning-averaged oscillation kernel L_N."""
    return FreqNoiseKernel(tuple(d), tuple(delta_bar), sigma).evaluate(
        delays, delays_conj
    )


@lru_cache(maxsize=4)
def _pair_grid(n: int, nodes: int):
    """Grid over (delays, delays_conj) on [0,R]^(2(N-1)) with damping applied."""
    from .perturbation import _damping_matrix, _truncation_radius

    radius = _truncation_radius(n)
    x, w = np.polynomial.legendre.leggauss(nodes)
    x = radius * (x + 1.0) / 2.0
    w = w * radius / 2.0
    dims = 2 * (n - 1)
    grids = np.meshgrid(*([x] * dims), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wt = np.ones(pts.shape[0])
    for wg in np.meshgrid(*([w] * dims), indexing="ij"):
        wt *= wg.ravel()
    q = _damping_matrix(n)
    tau = pts[:, : n - 1]
    tau_p = pts[:, n - 1 :]
    damping = np.einsum("ij,jk,ik->i", tau, q, tau) + np.einsum(
        "ij,jk,ik->i", tau_p, q, tau_p
    )
    weighted = wt * np.exp(-damping / (4.0 * n))
    tau.setflags(write=False)
    weighted.setflags(write=False)
    return tau, tau_p, weighted


def frequency_noise_average(
    envelope: GaussianEnvelope,
    d,
    delta_bar,
    tol: float = 1e-6,
) -> float:
    """Detuning-noise average of the squared scaled amplitude, N in {2, 3}.

    Evaluates the 2(N-1)-dimensional delay integral with the closed-form
    kernel by tensor quadrature, including the tau^{2N} / ((4 pi)^{N-1} N)
    scale.  Larger ladders should use the Monte Carlo path (the observable is
    itself an expectation value).
    """
    if not isinstance(envelope, GaussianEnvelope):
        raise TypeError("frequency-noise averaging requires a Gaussian envelope")
    n = len(tuple(d))
    if n not in (2, 3):
        raise ValueError(
            "analytic frequency-noise averaging supports N in {2, 3}; use the "
            "Monte Carlo ensemble for larger ladders"
        )
    kernel = FreqNoiseKernel(tuple(d), tuple(delta_bar), envelope.sigma)
    ladder = (32, 64, 128, 256, 512) if n == 2 else (12, 18, 24, 36)
    prev = None
    value = None
    for nodes in ladder:
        tau, tau_p, weighted = _pair_grid(n, nodes)
        total = 0.0
        chunk = 1 << 18
        for lo in range(0, tau.shape[0], chunk):
            hi = lo + chunk
            lvals = kernel.evaluate(tau[lo:hi], tau_p[lo:hi])
            total += float(np.real(np.dot(weighted[lo:hi], lvals)))
        if prev is not None and abs(total - prev) <= tol * max(abs(total), 1e-300):
            value = total
            break
        prev = total
    if value is None:
        warnings.warn(
            "delay-pair quadrature hit its node cap before the requested "
            "tolerance; returning the finest-grid value",
            AccuracyWarning,
            stacklevel=2,
        )
        value = prev
    scale = envelope.tau ** (2 * n) / ((4.0 * math.pi) ** (n - 1) * n)
    return scale * value


def strong_detuning_asymptote(delta_bar, d_sq_mean: float, sigma: float) -> float:
    """Strong-detuning noise-average proxy exp[-4 Dbar_N^2 / (N sigma^2 (1+2 dbar^2))].

    Proportionality only (no absolute prefactor); valid when every mean
    detuning is large compared with its jitter scale sigma*d, otherwise a
    :class:`ValidityWarning` is emitted.
    """
    db = np.asarray(tuple(delta_bar), dtype=float)
    n = len(db)
    if d_sq_mean < 0.0:
        raise ValueError("d_sq_mean must be nonnegative")
    if np.min(np.abs(db)) < 3.0 * sigma * math.sqrt(max(d_sq_mean, 0.0)):
        warnings.warn(
            "strong-detuning asymptote used where detunings are not large "
            "compared with the jitter scale",
            ValidityWarning,
            stacklevel=2,
        )
    total = float(np.sum(db))
    return math.exp(-4.0 * total**2 / (n * sigma**2 * (1.0 + 2.0 * d_sq_mean)))


def rect_noise_limit(n: int, delta_bar: float) -> float:
    """Wide-jitter average of the rectangular-pulse yield: (2N)!/(N!)^4 dbar^-2N.

    Valid when the detuning spread greatly exceeds pi/T (so the oscillation
    averages out) while staying small compared with the mean detuning; the
    caller is responsible for those flags.
    """
    if delta_bar == 0.0:
        raise ValueError("the limit requires a nonzero mean detuning")
    return (
        math.factorial(2 * n)
        / math.factorial(n) ** 4
        * abs(delta_bar) ** (-2.0 * n)
    )
