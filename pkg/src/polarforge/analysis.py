"""Code diagnostics: weight spectra, frozen-channel charts, mismatch tables."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelConfig
from .core import AVector, CapacityError, CodeSpec, generator_matrix
from .decoder import DecoderConfig
from .sim import StoppingRule, run_point

MAX_ENUM_ONES = 28


# --------------------------------------------------------------------------- weight spectrum


@dataclass(frozen=True)
class WeightSpectrum:
    N: int
    counts: tuple  # counts[d] = number of codewords of weight d

    def as_dict(self) -> dict:
        return {d: c for d, c in enumerate(self.counts) if c}

    @property
    def min_distance(self) -> int:
        nz = [d for d, c in enumerate(self.counts) if c and d > 0]
        return nz[0] if nz else 0

    @property
    def total(self) -> int:
        return sum(self.counts)

    def __getitem__(self, d: int) -> int:
        return self.counts[d] if 0 <= d < len(self.counts) else 0


def _span_table(rows: np.ndarray) -> np.ndarray:
    """All 2^r XOR combinations of packed rows ``(r, W)``."""
    table = np.zeros((1, rows.shape[1]), dtype=np.uint64)
    for r in rows:
        table = np.concatenate([table, table ^ r])
    return table


def _pack(bits: np.ndarray) -> np.ndarray:
    """Pack ``(r, N)`` bits into ``(r, ceil(N/64))`` uint64 words."""
    r, N = bits.shape
    W = -(-N // 64)
    padded = np.zeros((r, W * 64), dtype=np.uint8)
    padded[:, :N] = bits
    return np.packbits(padded, axis=1).view(np.uint64)


def _partial_spectrum(args) -> np.ndarray:
    left, right, N = args
    hist = np.zeros(N + 1, dtype=np.int64)
    step = max(1, (1 << 20) // max(1, right.shape[0]))
    for s in range(0, left.shape[0], step):
        w = np.bitwise_count(left[s : s + step, None, :] ^ right[None, :, :]).sum(axis=-1, dtype=np.int64)
        hist += np.bincount(w.ravel(), minlength=N + 1)
    return hist


def weight_enumerator_bruteforce(a: AVector, workers: int = 1) -> WeightSpectrum:
    """Exact weight spectrum by enumerating every message.

    The generator rows are split into two halves whose spans are tabulated;
    each codeword is one XOR of a left and a right table entry.  Partial
    histograms over slices of the left table are summed, so splitting the work
    across processes does not change the result.
    """
    k = a.ones
    if k > MAX_ENUM_ONES:
        raise CapacityError(f"exhaustive enumeration is limited to {MAX_ENUM_ONES} information bits, got {k}")
    N = a.N
    rows = generator_matrix(a.n)[a.info_positions]
    packed = _pack(rows)
    h = k // 2
    left, right = _span_table(packed[:h]), _span_table(packed[h:])
    if workers > 1 and left.shape[0] > 1:
        parts = np.array_split(left, min(workers * 4, left.shape[0]))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            hist = sum(pool.map(_partial_spectrum, [(p, right, N) for p in parts]))
    else:
        hist = _partial_spectrum((left, right, N))
    return WeightSpectrum(N, tuple(int(c) for c in hist))


# --------------------------------------------------------------------------- frozen-channel chart


def chart_order(z: np.ndarray) -> np.ndarray:
    """Positions sorted by decreasing Z; equal values keep index order."""
    return np.argsort(-np.asarray(z, dtype=np.float64), kind="stable")


def frozen_channel_chart(a: AVector, z, width: int = 128) -> np.ndarray:
    """Boolean ``(N/width, width)`` grid; cell ``True`` marks an information bit.

    Cells follow the channels from least to most reliable, row-major, so a
    reliability-ordered code shows all frozen cells first.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (a.N,):
        raise ValueError("reliability vector length must equal N")
    if width < 1 or a.N % width:
        raise ValueError(f"width {width} does not divide N={a.N}")
    return a.bits[chart_order(z)].astype(bool).reshape(-1, width)


def reliability_inversions(a: AVector, z) -> int:
    """Pairs (frozen i, information j) where channel j is strictly less reliable than i."""
    z = np.asarray(z, dtype=np.float64)
    zf = np.sort(z[a.bits == 0])
    zi = z[a.bits == 1]
    # for each information channel, count frozen channels with smaller Z
    return int(np.searchsorted(zf, zi, side="left").sum())


def chart_to_csv(chart: np.ndarray) -> str:
    return "\n".join(",".join(str(int(v)) for v in row) for row in chart) + "\n"


def chart_to_pgm(chart: np.ndarray) -> bytes:
    """Binary greymap, frozen cells black and information cells white."""
    h, w = chart.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    return header + (chart.astype(np.uint8) * 255).tobytes()


# --------------------------------------------------------------------------- mismatch table


@dataclass
class MismatchTable:
    rows: list
    cols: list
    snr_grid: tuple
    target: float
    cells: dict = field(default_factory=dict)  # (row, col) -> minimal SNR or None

    def entry(self, row, col) -> str:
        v = self.cells[(row, col)]
        return f"> {self.snr_grid[-1]:g}" if v is None else f"{v:g}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["code", *self.cols])
        for r in self.rows:
            w.writerow([r, *(self.entry(r, c) for c in self.cols)])
        return buf.getvalue()


def _named(items, prefix):
    if isinstance(items, dict):
        return list(items.items())
    return [(f"{prefix}{i}", x) for i, x in enumerate(items)]


def mismatch_table(
    spec: CodeSpec,
    avectors,
    decoders,
    target_error: float,
    snr_grid,
    stop: StoppingRule = StoppingRule(),
    seed: int = 0,
    metric: str = "ber",
    channel: str = "awgn",
    workers: int = 1,
) -> MismatchTable:
    """Smallest grid SNR at which each (code, decoder) cell meets ``target_error``.

    The error rate is assumed non-increasing in SNR, so each cell is found by
    bisection over the sorted grid; every run uses ``seed``.  Cells that miss
    the target at the top of the grid hold ``None`` and print as ``"> max"``.
    """
    grid = tuple(sorted(float(s) for s in snr_grid))
    if not grid:
        raise ValueError("snr grid is empty")
    codes = _named(avectors, "code")
    decs = [(d.label(), d) for d in decoders]
    table = MismatchTable([n for n, _ in codes], [n for n, _ in decs], grid, target_error)

    for cname, a in codes:
        for dname, dec in decs:
            memo = {}

            def meets(i):
                if i not in memo:
                    ch = ChannelConfig(channel, snr_db=grid[i])
                    p = run_point(spec, a, dec, ch, stop, seed, workers)
                    memo[i] = (p.ber if metric == "ber" else p.bler) <= target_error
                return memo[i]

            if not meets(len(grid) - 1):
                table.cells[(cname, dname)] = None
                continue
            lo, hi = 0, len(grid) - 1  # invariant: grid[hi] meets the target
            while lo < hi:
                mid = (lo + hi) // 2
                if meets(mid):
                    hi = mid
                else:
                    lo = mid + 1
            table.cells[(cname, dname)] = grid[hi]
    return table
