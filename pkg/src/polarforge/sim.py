"""Seeded Monte-Carlo error-rate engine.

Frames are grouped into stream blocks of :data:`STREAM_BLOCK` frames.  Block
``b`` draws its payloads and channel noise from a Philox stream keyed by
``(seed, b)``, so frame ``i`` sees the same noise whichever worker decodes it
and however the blocks are batched.  Workers return per-frame outcomes and the
stopping rule is applied afterwards, in frame order, which makes every
counter independent of the worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import ChannelConfig
from .core import AVector, CodeSpec, encode, polar_transform
from .decoder import DecoderConfig

STREAM_BLOCK = 256
MAX_TASK_BLOCKS = 16
CSV_COLUMNS = ("snr_db", "frames", "bit_errs", "blk_errs", "ber", "bler", "avg_iters", "seed")


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based generator for one stream block of frames."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


@dataclass(frozen=True)
class StoppingRule:
    min_block_errors: int = 100
    max_frames: int = 1_000_000

    def __post_init__(self):
        if self.min_block_errors < 1 or self.max_frames < 1:
            raise ValueError("stopping rule needs min_block_errors >= 1 and max_frames >= 1")


@dataclass
class SimPoint:
    snr_db: float
    frames: int
    bit_errs: int
    blk_errs: int
    k_payload: int
    seed: int
    decoder: str = ""
    channel: str = "awgn"
    iters_total: int = 0
    bit_errs_sq: int = 0  # sum over frames of squared per-frame bit errors
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def ber(self) -> float:
        return self.bit_errs / (self.frames * self.k_payload) if self.frames else 0.0

    @property
    def bler(self) -> float:
        return self.blk_errs / self.frames if self.frames else 0.0

    @property
    def avg_iters(self) -> float:
        return self.iters_total / self.frames if self.frames else 0.0

    def ber_sigma(self) -> float:
        """Standard error of the BER estimate.

        Bit errors cluster inside failed frames, so the spread is taken from
        the per-frame error counts rather than from a binomial over bits.
        """
        F = self.frames
        if F < 2:
            return 0.0
        mean = self.bit_errs / F
        var = max(self.bit_errs_sq / F - mean * mean, 0.0) * F / (F - 1)
        return math.sqrt(var / F) / self.k_payload

    def bler_sigma(self) -> float:
        p = self.bler
        return math.sqrt(p * (1 - p) / self.frames) if self.frames else 0.0

    def counters(self) -> tuple:
        return (self.frames, self.bit_errs, self.blk_errs, self.iters_total, self.bit_errs_sq)

    def row(self) -> dict:
        return {
            "snr_db": self.snr_db,
            "frames": self.frames,
            "bit_errs": self.bit_errs,
            "blk_errs": self.blk_errs,
            "ber": f"{self.ber:.6e}",
            "bler": f"{self.bler:.6e}",
            "avg_iters": f"{self.avg_iters:.4f}",
            "seed": self.seed,
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(ber=self.ber, bler=self.bler, avg_iters=self.avg_iters)
        return d


@dataclass(frozen=True)
class _Task:
    spec: CodeSpec
    a_bits: bytes
    decoder: DecoderConfig
    channel: ChannelConfig
    seed: int
    start: int  # first frame index, a multiple of STREAM_BLOCK
    stop: int
    all_zero: bool


def _frame_outcomes(task: _Task):
    """Decode frames ``start..stop-1``; returns per-frame (bit errors, block error, iterations)."""
    spec = task.spec
    a = AVector(np.frombuffer(task.a_bits, dtype=np.uint8))
    llrs, payloads = [], []
    for b in range(task.start // STREAM_BLOCK, math.ceil(task.stop / STREAM_BLOCK)):
        rng = block_rng(task.seed, b)
        if task.all_zero:
            msg = np.zeros((STREAM_BLOCK, spec.k), dtype=np.uint8)
        else:
            msg = rng.integers(0, 2, size=(STREAM_BLOCK, spec.k), dtype=np.uint8)
        x = encode(msg, a, spec)
        llr = task.channel.transmit(x, spec.rate, rng)
        lo = max(task.start - b * STREAM_BLOCK, 0)
        hi = min(task.stop - b * STREAM_BLOCK, STREAM_BLOCK)
        llrs.append(llr[lo:hi])
        payloads.append(msg[lo:hi])
    llr = np.concatenate(llrs)
    msg = np.concatenate(payloads)
    u_hat, iters = task.decoder.decode_batch(llr, a, spec)
    if spec.k == spec.N:
        # uncoded: the transform is a bijection, so errors are counted on the
        # transmitted bits and the point reports the raw channel BER
        bit_errs = np.count_nonzero(polar_transform(u_hat) != encode(msg, a, spec), axis=1)
    else:
        est = u_hat[:, a.info_positions[: spec.k]]
        bit_errs = np.count_nonzero(est != msg, axis=1)
    return bit_errs.astype(np.int64), bit_errs > 0, iters.astype(np.int64)


def _task_bounds(max_frames: int):
    """Task frame ranges; sizes grow geometrically so short runs stay cheap."""
    start, blocks = 0, 1
    while start < max_frames:
        stop = min(start + blocks * STREAM_BLOCK, max_frames)
        yield start, stop
        start = stop
        blocks = min(blocks * 2, MAX_TASK_BLOCKS)


def run_point(
    spec: CodeSpec,
    a: AVector,
    decoder: DecoderConfig,
    channel: ChannelConfig,
    stop: StoppingRule = StoppingRule(),
    seed: int = 0,
    workers: int = 1,
    all_zero: bool = False,
    executor: Executor | None = None,
) -> SimPoint:
    """Simulate one operating point until the stopping rule fires."""
    a.check(spec)
    decoder.validate(spec)
    t0 = time.perf_counter()
    proto = dict(spec=spec, a_bits=a.bits.tobytes(), decoder=decoder, channel=channel, seed=seed, all_zero=all_zero)
    bounds = _task_bounds(stop.max_frames)

    frames = bit_errs = blk_errs = iters_total = bit_errs_sq = 0
    done = False

    def absorb(res):
        nonlocal frames, bit_errs, blk_errs, iters_total, bit_errs_sq, done
        be, bl, it = res
        need = stop.min_block_errors - blk_errs
        cum = np.cumsum(bl)
        if cum.size and cum[-1] >= need:
            cut = int(np.searchsorted(cum, need)) + 1
            be, bl, it = be[:cut], bl[:cut], it[:cut]
            done = True
        frames += be.size
        bit_errs += int(be.sum())
        bit_errs_sq += int((be * be).sum())
        blk_errs += int(bl.sum())
        iters_total += int(it.sum())
        if frames >= stop.max_frames:
            done = True

    own_pool = None
    if executor is None and workers > 1:
        own_pool = executor = ProcessPoolExecutor(max_workers=workers)
    try:
        if executor is None:
            for s, e in bounds:
                absorb(_frame_outcomes(_Task(start=s, stop=e, **proto)))
                if done:
                    break
        else:
            wave = max(workers, getattr(executor, "_max_workers", workers))
            while not done:
                batch = [_Task(start=s, stop=e, **proto) for s, e in _take(bounds, wave)]
                if not batch:
                    break
                for res in executor.map(_frame_outcomes, batch):
                    absorb(res)
                    if done:
                        break
    finally:
        if own_pool is not None:
            own_pool.shutdown()

    return SimPoint(
        snr_db=float(channel.parameter),
        frames=frames,
        bit_errs=bit_errs,
        blk_errs=blk_errs,
        k_payload=spec.k,
        seed=seed,
        decoder=decoder.label(),
        channel=channel.kind,
        iters_total=iters_total,
        bit_errs_sq=bit_errs_sq,
        wall_clock=time.perf_counter() - t0,
    )


def _take(it, n):
    out = []
    for x in it:
        out.append(x)
        if len(out) == n:
            break
    return out


def run_sweep(
    spec: CodeSpec,
    a: AVector,
    decoder: DecoderConfig,
    channel: ChannelConfig,
    snr_list=None,
    list_sizes=None,
    bp_iters=None,
    stop: StoppingRule = StoppingRule(),
    seed: int = 0,
    workers: int = 1,
    all_zero: bool = False,
) -> list[SimPoint]:
    """One :class:`SimPoint` per grid entry.

    Exactly one grid may be given: channel parameters (``snr_list``, which holds
    erasure probabilities on the BEC), list sizes or BP iteration limits.  Every
    point reuses ``seed`` so the grid is evaluated on common random numbers.
    """
    grids = [g for g in (snr_list, list_sizes, bp_iters) if g is not None]
    if len(grids) != 1:
        raise ValueError("give exactly one sweep grid")
    if len(grids[0]) == 0:
        raise ValueError("sweep grid is empty")
    points = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        if snr_list is not None:
            jobs = [(decoder, channel.with_parameter(v), {}) for v in snr_list]
        elif list_sizes is not None:
            jobs = [(_replace(decoder, list_size=int(L)), channel, {"list_size": int(L)}) for L in list_sizes]
        else:
            jobs = [(_replace(decoder, bp_iters=int(t)), channel, {"bp_iters": int(t)}) for t in bp_iters]
        for dec, ch, extra in jobs:
            p = run_point(spec, a, dec, ch, stop, seed, workers, all_zero, executor=pool)
            p.extra.update(extra)
            points.append(p)
    finally:
        if pool is not None:
            pool.shutdown()
    return points


def _replace(cfg: DecoderConfig, **kw) -> DecoderConfig:
    d = cfg.describe()
    d.update(kw)
    return DecoderConfig(**d)


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1))


def points_to_csv(points, extra_columns=()) -> str:
    buf = io.StringIO()
    cols = list(extra_columns) + list(CSV_COLUMNS)
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for p in points:
        row = p.row()
        for c in extra_columns:
            row[c] = p.extra.get(c, "")
        w.writerow(row)
    return buf.getvalue()
