"""Butterworth bandpass design and application as second-order sections.

The design runs entirely in pole/zero form: analog lowpass prototype,
lowpass-to-bandpass transform, bilinear transform with frequency pre-warping,
then pairing into biquads. Working with poles instead of expanded polynomial
coefficients is what keeps an order-60 bandpass numerically stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import sosfilt

from .model import Epoch, PipelineError

STABILITY_MARGIN = 1e-9


class InvalidBand(PipelineError):
    pass


class UnstableDesign(PipelineError):
    pass


class NonFiniteOutput(PipelineError):
    pass


@dataclass(frozen=True)
class FilterSpec:
    """Bandpass parameters. ``order`` follows ``order_convention``:
    "prototype" counts the analog lowpass prototype order (the resulting
    bandpass has twice that order), "final" counts the bandpass order itself
    and must be even.
    """

    low_hz: float = 8.0
    high_hz: float = 30.0
    order: int = 30
    sample_rate_hz: float = 512.0
    order_convention: str = "prototype"

    def __post_init__(self):
        if not 0.0 < self.low_hz < self.high_hz < self.sample_rate_hz / 2.0:
            raise InvalidBand(
                f"need 0 < low < high < Nyquist, got "
                f"[{self.low_hz}, {self.high_hz}] at {self.sample_rate_hz} Hz")
        if self.order < 1:
            raise InvalidBand(f"order must be >= 1, got {self.order}")
        if self.order_convention not in ("prototype", "final"):
            raise InvalidBand(
                f"unknown order convention {self.order_convention!r}")
        if self.order_convention == "final" and self.order % 2 != 0:
            raise InvalidBand("final bandpass order must be even")

    @property
    def prototype_order(self) -> int:
        if self.order_convention == "final":
            return self.order // 2
        return self.order


@dataclass(frozen=True)
class Biquad:
    """One second-order section: (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    def poles(self) -> np.ndarray:
        return np.roots([1.0, self.a1, self.a2])


@dataclass(frozen=True)
class BiquadCascade:
    sections: tuple[Biquad, ...]
    sample_rate_hz: float

    def __post_init__(self):
        for s in self.sections:
            radii = np.abs(s.poles())
            if radii.size and radii.max() >= 1.0 - STABILITY_MARGIN:
                raise UnstableDesign(
                    f"pole radius {radii.max():.12f} breaches the stability "
                    f"margin")

    def as_sos(self) -> np.ndarray:
        """scipy-compatible (n_sections, 6) coefficient array."""
        return np.array([[s.b0, s.b1, s.b2, 1.0, s.a1, s.a2]
                         for s in self.sections], dtype=np.float64)

    def poles(self) -> np.ndarray:
        return np.concatenate([s.poles() for s in self.sections])


def _prototype_poles(order: int) -> list[complex]:
    """Analog Butterworth lowpass prototype poles (left half plane, |p| = 1)."""
    poles = []
    for k in range(1, order + 1):
        theta = math.pi * (2 * k - 1) / (2 * order)
        poles.append(complex(-math.sin(theta), math.cos(theta)))
    return poles


def _bandpass_pole_pair(p: complex, w0: float, bw: float) -> tuple[complex, complex]:
    # roots of s^2 - p*bw*s + w0^2 = 0, i.e. the lowpass-to-bandpass image of p
    q = p * bw / 2.0
    disc = np.sqrt(np.complex128(q * q - w0 * w0))
    return q + disc, q - disc


def _bilinear(s: complex, fs2: float) -> complex:
    return (fs2 + s) / (fs2 - s)


def _section_from_pole_pair(z1: complex, z2: complex) -> tuple[float, float]:
    """Denominator (a1, a2) for a section with digital poles z1, z2."""
    a1 = -(z1 + z2)
    a2 = z1 * z2
    if abs(a1.imag) > 1e-9 * (1.0 + abs(a1.real)) or \
       abs(a2.imag) > 1e-9 * (1.0 + abs(a2.real)):
        raise UnstableDesign("pole pairing produced complex coefficients")
    return float(a1.real), float(a2.real)


def design_bandpass(spec: FilterSpec) -> BiquadCascade:
    """Digital Butterworth bandpass as a stable biquad cascade.

    Band edges are pre-warped so the -3 dB points land exactly on
    ``spec.low_hz`` and ``spec.high_hz``; every section keeps one zero at DC
    and one at Nyquist, and the overall gain is normalized to 1 at the warped
    band center.
    """
    n = spec.prototype_order
    fs = spec.sample_rate_hz
    fs2 = 2.0 * fs
    w1 = fs2 * math.tan(math.pi * spec.low_hz / fs)
    w2 = fs2 * math.tan(math.pi * spec.high_hz / fs)
    w0 = math.sqrt(w1 * w2)
    bw = w2 - w1

    # digital pole pairs, one (conjugate or real) pair per section
    pole_pairs: list[tuple[complex, complex]] = []
    for p in _prototype_poles(n):
        if p.imag > 1e-12:
            for s_pole in _bandpass_pole_pair(p, w0, bw):
                z = _bilinear(s_pole, fs2)
                pole_pairs.append((z, z.conjugate()))
        elif abs(p.imag) <= 1e-12:
            s_a, s_b = _bandpass_pole_pair(complex(p.real, 0.0), w0, bw)
            z_a, z_b = _bilinear(s_a, fs2), _bilinear(s_b, fs2)
            if abs(s_a.imag) > 1e-12:        # complex conjugate pair
                pole_pairs.append((z_a, z_a.conjugate()))
                # s_b is the conjugate image; already covered
            else:                            # two real poles, one section
                pole_pairs.append((z_a, z_b))
        # poles with negative imaginary part ride along as conjugates

    # most damped sections first
    pole_pairs.sort(key=lambda pair: max(abs(pair[0]), abs(pair[1])))

    for pair in pole_pairs:
        for z in pair:
            if abs(z) >= 1.0 - STABILITY_MARGIN:
                raise UnstableDesign(
                    f"digital pole radius {abs(z):.12f} too close to the "
                    f"unit circle")

    # unit-gain skeleton: numerator (1 - z^-2) puts one zero at DC and one
    # at Nyquist in every section
    denoms = [_section_from_pole_pair(z1, z2) for z1, z2 in pole_pairs]

    # warped band center in rad/sample; |H| is normalized to 1 there
    w_center = 2.0 * math.atan(w0 / fs2)
    e1 = complex(math.cos(-w_center), math.sin(-w_center))
    e2 = e1 * e1
    log_mag = 0.0
    for a1, a2 in denoms:
        num = 1.0 - e2
        den = 1.0 + a1 * e1 + a2 * e2
        log_mag += math.log(abs(num)) - math.log(abs(den))
    gain = math.exp(-log_mag / len(denoms))

    sections = tuple(Biquad(gain, 0.0, -gain, a1, a2) for a1, a2 in denoms)
    return BiquadCascade(sections, fs)


def frequency_response(cascade: BiquadCascade, freqs_hz) -> np.ndarray:
    """Complex response of the cascade at the given frequencies (Hz)."""
    w = 2.0 * np.pi * np.asarray(freqs_hz, dtype=np.float64) / cascade.sample_rate_hz
    e1 = np.exp(-1j * w)
    e2 = e1 * e1
    h = np.ones_like(e1, dtype=np.complex128)
    for s in cascade.sections:
        h *= (s.b0 + s.b1 * e1 + s.b2 * e2) / (1.0 + s.a1 * e1 + s.a2 * e2)
    return h


def impulse_response(cascade: BiquadCascade, n_samples: int) -> np.ndarray:
    x = np.zeros(n_samples)
    x[0] = 1.0
    return sosfilt(cascade.as_sos(), x)


def apply_filter(cascade: BiquadCascade, epoch: Epoch) -> Epoch:
    """Causal forward filtering, zero initial state, channel by channel.

    Each section runs in direct form II transposed; epochs are independent
    trials so the startup transient is accepted rather than carried over.
    """
    out = sosfilt(cascade.as_sos(), epoch.data, axis=1)
    if not np.isfinite(out).all():
        raise NonFiniteOutput("filter produced NaN or Inf output")
    return epoch.with_data(out)


def filter_dataset(cascade: BiquadCascade, dataset):
    return dataset.with_epochs([apply_filter(cascade, e)
                                for e in dataset.epochs])
