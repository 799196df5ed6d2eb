"""BPSK channel models producing LLR frames.

LLRs are positive when bit 0 is more likely.  BPSK maps bit ``b`` to
``1 - 2b``.  Every function accepts a single codeword ``(N,)`` or a batch
``(frames, N)``; random draws happen in a fixed order so a seeded generator
yields bit-identical frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# stands in for an infinite LLR; far above any AWGN LLR at simulated SNRs
LLR_SATURATION = 1e6

CHANNELS = ("awgn", "rayleigh", "bec")


@dataclass(frozen=True)
class LlrFrame:
    llr: np.ndarray
    channel: str
    sigma2: float | None = None
    alpha: np.ndarray | None = None

    def __len__(self):
        return self.llr.shape[-1]


def noise_variance(ebn0_db: float, rc: float) -> float:
    """Per-dimension noise variance for unit-energy BPSK at the given Eb/N0."""
    if not 0.0 < rc <= 1.0:
        raise ValueError("code rate must lie in (0, 1]")
    return 1.0 / (2.0 * rc * 10.0 ** (ebn0_db / 10.0))


def _bpsk(x) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(x, dtype=np.float64)


def awgn_llr(x, ebn0_db: float, rc: float, rng: np.random.Generator, noiseless: bool = False) -> LlrFrame:
    sigma2 = noise_variance(ebn0_db, rc)
    s = _bpsk(x)
    y = s if noiseless else s + rng.normal(0.0, np.sqrt(sigma2), size=s.shape)
    return LlrFrame(2.0 * y / sigma2, "awgn", sigma2)


def rayleigh_llr(
    x,
    ebn0_db: float,
    rc: float,
    rng: np.random.Generator,
    noiseless: bool = False,
    fading=None,
) -> LlrFrame:
    """Fast-fading Rayleigh channel with perfect CSI, ``E[alpha**2] = 1``.

    ``fading`` overrides the drawn coefficients (a scalar or an array); in that
    case no fading draws are taken from ``rng``.
    """
    sigma2 = noise_variance(ebn0_db, rc)
    s = _bpsk(x)
    if fading is None:
        alpha = rng.rayleigh(scale=np.sqrt(0.5), size=s.shape)
    else:
        alpha = np.broadcast_to(np.asarray(fading, dtype=np.float64), s.shape).copy()
    y = alpha * s
    if not noiseless:
        y = y + rng.normal(0.0, np.sqrt(sigma2), size=s.shape)
    return LlrFrame(2.0 * alpha * y / sigma2, "rayleigh", sigma2, alpha)


def bec_llr(x, epsilon: float, rng: np.random.Generator) -> LlrFrame:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    s = _bpsk(x)
    erased = rng.random(size=s.shape) < epsilon
    return LlrFrame(np.where(erased, 0.0, LLR_SATURATION * s), "bec")


@dataclass(frozen=True)
class ChannelConfig:
    """Channel selection as used by the simulator and the CLI."""

    kind: str = "awgn"
    snr_db: float | None = None
    epsilon: float | None = None

    def __post_init__(self):
        if self.kind not in CHANNELS:
            raise ValueError(f"unknown channel {self.kind!r}; choose from {CHANNELS}")
        if self.kind == "bec":
            if self.epsilon is None or not 0.0 <= self.epsilon <= 1.0:
                raise ValueError("bec channel needs epsilon in [0, 1]")
        elif self.snr_db is None:
            raise ValueError(f"{self.kind} channel needs snr_db")

    @property
    def parameter(self) -> float:
        return self.epsilon if self.kind == "bec" else self.snr_db

    def with_parameter(self, value: float) -> "ChannelConfig":
        if self.kind == "bec":
            return ChannelConfig("bec", epsilon=value)
        return ChannelConfig(self.kind, snr_db=value)

    def transmit(self, x, rc: float, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "awgn":
            return awgn_llr(x, self.snr_db, rc, rng).llr
        if self.kind == "rayleigh":
            return rayleigh_llr(x, self.snr_db, rc, rng).llr
        return bec_llr(x, self.epsilon, rng).llr

    def describe(self) -> dict:
        return {"kind": self.kind, "snr_db": self.snr_db, "epsilon": self.epsilon}
