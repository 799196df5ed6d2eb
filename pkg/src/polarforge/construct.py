"""Classical constructions: BEC Bhattacharyya recursion and the Reed-Muller rule."""

from __future__ import annotations

import math

import numpy as np

from .core import AVector, CodeSpec, row_weights


def bhattacharyya_bec(n: int, epsilon: float) -> np.ndarray:
    """Exact bit-channel erasure probabilities of a BEC(epsilon), natural u order.

    Each level maps ``z -> (2z - z**2, z**2)`` into positions ``(2i, 2i + 1)``.
    Beyond ``n = 20`` the recursion runs on ``log z`` so tiny values survive.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > 20:
        return np.exp(bhattacharyya_bec_log(n, epsilon))
    z = np.array([float(epsilon)])
    for _ in range(n):
        out = np.empty(2 * z.size)
        out[0::2] = 2.0 * z - z * z
        out[1::2] = z * z
        z = out
    return z


def bhattacharyya_bec_log(n: int, epsilon: float) -> np.ndarray:
    """Natural log of :func:`bhattacharyya_bec`, stable for large ``n``."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        lz = np.array([math.log(epsilon) if epsilon > 0 else -np.inf])
    for _ in range(n):
        out = np.empty(2 * lz.size)
        # log(2z - z^2) = log z + log(2 - z)
        out[0::2] = lz + np.log(2.0 - np.exp(lz))
        out[1::2] = 2.0 * lz
        lz = out
    return lz


def design_snr_to_epsilon(ebn0_db: float, rc: float) -> float:
    """Surrogate BEC erasure probability for an AWGN design point."""
    if not 0.0 < rc <= 1.0:
        raise ValueError("code rate must lie in (0, 1]")
    return math.exp(-rc * 10.0 ** (ebn0_db / 10.0))


def _select_by_reliability(z: np.ndarray, ones: int) -> AVector:
    # stable sort on descending Z: among equal Z the lower index is frozen first
    order = np.argsort(-z, kind="stable")
    bits = np.zeros(z.size, dtype=np.uint8)
    bits[order[z.size - ones :]] = 1
    return AVector(bits)


def construct_bhattacharyya(
    spec: CodeSpec, design_snr_db: float | None = None, epsilon: float | None = None
) -> AVector:
    """Keep the ``spec.ones`` positions with the smallest Bhattacharyya parameter.

    The channel is given either as an AWGN design SNR (mapped through
    :func:`design_snr_to_epsilon` with the payload rate) or directly as a BEC
    erasure probability.
    """
    if (design_snr_db is None) == (epsilon is None):
        raise ValueError("give exactly one of design_snr_db or epsilon")
    if epsilon is None:
        epsilon = design_snr_to_epsilon(design_snr_db, spec.rate)
    z = bhattacharyya_bec_log(spec.n, epsilon) if spec.n > 20 else bhattacharyya_bec(spec.n, epsilon)
    return _select_by_reliability(z, spec.ones)


def construct_rm(spec: CodeSpec) -> AVector:
    """Reed-Muller rule: heaviest rows of G_N, ties broken by BEC(0.5) reliability."""
    w = row_weights(spec.n)
    z = bhattacharyya_bec(spec.n, 0.5) if spec.n <= 20 else bhattacharyya_bec_log(spec.n, 0.5)
    # lexsort: last key is primary
    order = np.lexsort((-np.arange(spec.N), z, -w))
    bits = np.zeros(spec.N, dtype=np.uint8)
    bits[order[: spec.ones]] = 1
    return AVector(bits)
