"""Polar decoders: SC, SCL, CRC-aided SCL, flooding BP and an exhaustive ML oracle.

All decoders work on batches of LLR frames, shape ``(frames, N)``; the
single-frame functions (``decode_sc`` and friends) wrap the batch kernels and
return a :class:`DecodeResult`.

SC and SCL share one recursion over the natural-order ``F^{(x)n}`` tree.  The
channel LLRs are bit-reversed once on entry, which turns ``G_N = B_N F^{(x)n}``
into the plain Kronecker code.  The check-node rule is min-sum and the path
metric adds ``|llr|`` whenever a path decides against the LLR sign; with these
two choices the metric of a complete path equals the correlation discrepancy
``sum |llr_j| [x_j != hard(llr_j)]``, so a list that holds every codeword
returns the ML codeword.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import LLR_SATURATION, LlrFrame
from .core import (
    AVector,
    CapacityError,
    CodeSpec,
    CrcConfig,
    bit_reversal_permutation,
    crc_check,
    kron_transform,
    polar_transform,
    scatter,
)

DECODERS = ("sc", "scl", "scl-crc", "bp", "ml")
ML_MAX_ONES = 28
MIN_SUM_SCALE = 0.9375


@dataclass
class DecodeResult:
    u_hat: np.ndarray
    x_hat: np.ndarray
    message_hat: np.ndarray
    metric: float
    iterations_used: int = 0
    crc_pass: bool | None = None
    # SCL: every surviving path as (u_hat, metric), best first
    paths: list = field(default_factory=list)
    # BP: a-posteriori LLRs of u and x after the last iteration
    llr_u: np.ndarray | None = None
    llr_x: np.ndarray | None = None


def _llr_matrix(frame, N: int) -> np.ndarray:
    llr = frame.llr if isinstance(frame, LlrFrame) else frame
    llr = np.asarray(llr, dtype=np.float64)
    if llr.ndim == 1:
        llr = llr[None, :]
    if llr.shape[-1] != N:
        raise ValueError(f"frame length {llr.shape[-1]} does not match N={N}")
    return llr


def _natural_order(llr: np.ndarray) -> np.ndarray:
    n = llr.shape[-1].bit_length() - 1
    return llr[..., bit_reversal_permutation(n)]


def f_minsum(a, b):
    return np.copysign(np.minimum(np.abs(a), np.abs(b)), a * b)


def f_boxplus(a, b):
    """Exact ``2 atanh(tanh(a/2) tanh(b/2))`` in an overflow-free form."""
    m = np.copysign(np.minimum(np.abs(a), np.abs(b)), a * b)
    return m + np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b)))


class _Tree:
    """Per-A-vector bookkeeping: which subtrees carry no information bits."""

    def __init__(self, a: AVector):
        self.info = a.bits.astype(bool)
        self.csum = np.concatenate([[0], np.cumsum(a.bits)])

    def n_info(self, lo: int, hi: int) -> int:
        return int(self.csum[hi] - self.csum[lo])


# --------------------------------------------------------------------------- SC


def _sc_node(alpha, lo, hi, tree, u):
    size = hi - lo
    if tree.n_info(lo, hi) == 0:
        return np.zeros(alpha.shape, dtype=np.uint8)
    if size == 1:
        bit = (alpha < 0).astype(np.uint8)
        u[:, lo] = bit[:, 0]
        return bit
    h = size // 2
    a1, a2 = alpha[:, :h], alpha[:, h:]
    bl = _sc_node(f_minsum(a1, a2), lo, lo + h, tree, u)
    br = _sc_node(a2 + np.where(bl == 1, -a1, a1), lo + h, hi, tree, u)
    return np.concatenate([bl ^ br, br], axis=1)


def sc_batch(llr: np.ndarray, a: AVector) -> np.ndarray:
    """SC decisions ``u_hat`` for a batch of channel LLR frames."""
    llr = _llr_matrix(llr, a.N)
    u = np.zeros(llr.shape, dtype=np.uint8)
    _sc_node(_natural_order(llr), 0, a.N, _Tree(a), u)
    return u


# --------------------------------------------------------------------------- SCL


def _gather(x, perm):
    if perm is None:
        return x
    return np.take_along_axis(x, perm[:, :, None], axis=1)


def _compose(p_first, p_second):
    if p_first is None:
        return p_second
    if p_second is None:
        return p_first
    return np.take_along_axis(p_first, p_second, axis=1)


class _ListState:
    def __init__(self, frames: int, L: int, trace: bool):
        self.L = L
        self.pm = np.full((frames, L), np.inf)
        self.pm[:, 0] = 0.0
        self.trace = [] if trace else None


def _scl_node(alpha, lo, hi, tree, st):
    """Returns (partial sums, leaf decisions, path permutation or None)."""
    size = hi - lo
    if tree.n_info(lo, hi) == 0:
        # every leaf decides 0: the penalty is the mass of negative LLRs
        st.pm = st.pm + np.where(alpha < 0, -alpha, 0.0).sum(axis=2)
        z = np.zeros(alpha.shape, dtype=np.uint8)
        return z, z, None
    if size == 1:
        lam = alpha[:, :, 0]
        pen = np.abs(lam)
        neg = lam < 0
        pm0 = st.pm + np.where(neg, pen, 0.0)
        pm1 = st.pm + np.where(neg, 0.0, pen)
        frames, L = st.pm.shape
        # candidate 2l + b is path l extended by bit b
        cand = np.stack([pm0, pm1], axis=2).reshape(frames, 2 * L)
        keep = np.argsort(cand, axis=1, kind="stable")[:, :L]
        st.pm = np.take_along_axis(cand, keep, axis=1)
        if st.trace is not None:
            st.trace.append((lo, st.pm.copy(), keep // 2))
        bits = (keep & 1).astype(np.uint8)[:, :, None]
        return bits, bits, keep // 2
    h = size // 2
    a1, a2 = alpha[:, :, :h], alpha[:, :, h:]
    bl, ul, pl = _scl_node(f_minsum(a1, a2), lo, lo + h, tree, st)
    a1, a2 = _gather(a1, pl), _gather(a2, pl)
    br, ur, pr = _scl_node(a2 + np.where(bl == 1, -a1, a1), lo + h, hi, tree, st)
    bl, ul = _gather(bl, pr), _gather(ul, pr)
    return (
        np.concatenate([bl ^ br, br], axis=2),
        np.concatenate([ul, ur], axis=2),
        _compose(pl, pr),
    )


def scl_batch(llr: np.ndarray, a: AVector, L: int, trace: bool = False):
    """List decoding of a batch; returns ``(u, metrics)`` of shapes
    ``(frames, L, N)`` and ``(frames, L)``.  Paths that never became alive
    (fewer than ``L`` candidates) carry an infinite metric."""
    if L < 1:
        raise ValueError("list size must be >= 1")
    llr = _llr_matrix(llr, a.N)
    frames = llr.shape[0]
    st = _ListState(frames, L, trace)
    alpha = np.broadcast_to(_natural_order(llr)[:, None, :], (frames, L, a.N))
    _, u, _ = _scl_node(alpha, 0, a.N, _Tree(a), st)
    if trace:
        return u, st.pm, st.trace
    return u, st.pm


def scl_select(u: np.ndarray, pm: np.ndarray) -> np.ndarray:
    """Lowest-metric path per frame; ties go to the lower list index."""
    best = np.argmin(pm, axis=1)
    return u[np.arange(u.shape[0]), best]


def scl_crc_select(u: np.ndarray, pm: np.ndarray, a: AVector, crc: CrcConfig):
    """First path by ascending metric whose information bits pass the CRC.

    Falls back to the best-metric path where no path passes.  Returns
    ``(u_hat, crc_pass)``.
    """
    frames, L, _ = u.shape
    order = np.argsort(pm, axis=1, kind="stable")
    info = u[:, :, a.info_positions]
    ok = np.asarray(crc_check(info, crc)).reshape(frames, L) & np.isfinite(pm)
    ok_sorted = np.take_along_axis(ok, order, axis=1)
    any_ok = ok_sorted.any(axis=1)
    first = np.where(any_ok, np.argmax(ok_sorted, axis=1), 0)
    pick = order[np.arange(frames), first]
    return u[np.arange(frames), pick], any_ok


# --------------------------------------------------------------------------- BP


def bp_batch(
    llr: np.ndarray,
    a: AVector,
    max_iters: int,
    early_stop: bool = True,
    min_sum: bool = False,
    return_llrs: bool = False,
):
    """Flooding BP on the encoding graph with re-encoding early stop.

    One iteration is a full right-to-left sweep followed by a full
    left-to-right sweep.  Returns ``(u_hat, iterations)`` and, with
    ``return_llrs``, also the a-posteriori LLRs of u and x.
    """
    if max_iters < 1:
        raise ValueError("BP needs at least one iteration")
    llr = _llr_matrix(llr, a.N)
    B, N = llr.shape
    n = a.n
    f = (lambda p, q: MIN_SUM_SCALE * f_minsum(p, q)) if min_sum else f_boxplus
    M = LLR_SATURATION
    frozen = ~a.bits.astype(bool)

    # L[s]: right-to-left messages at stage s; R[s]: left-to-right
    Lm = np.zeros((n + 1, B, N))
    Rm = np.zeros((n + 1, B, N))
    Lm[n] = np.clip(_natural_order(llr), -M, M)
    Rm[0][:, frozen] = M

    u_out = np.zeros((B, N), dtype=np.uint8)
    iters = np.full(B, max_iters, dtype=np.int64)
    lu_out = np.zeros((B, N))
    lx_out = np.zeros((B, N))
    active = np.arange(B)

    def views(arr, s):
        h = 1 << s
        v = arr.reshape(arr.shape[0], N // (2 * h), 2, h)
        return v[:, :, 0, :], v[:, :, 1, :]

    for it in range(1, max_iters + 1):
        for s in range(n - 1, -1, -1):
            La, Lb = views(Lm[s + 1], s)
            Ra, Rb = views(Rm[s], s)
            oa, ob = views(Lm[s], s)
            oa[...] = np.clip(f(La, Lb + Rb), -M, M)
            ob[...] = np.clip(f(Ra, La) + Lb, -M, M)
        for s in range(n):
            La, Lb = views(Lm[s + 1], s)
            Ra, Rb = views(Rm[s], s)
            oa, ob = views(Rm[s + 1], s)
            oa[...] = np.clip(f(Ra, Lb + Rb), -M, M)
            ob[...] = np.clip(f(Ra, La) + Rb, -M, M)
        lu = Lm[0] + Rm[0]
        lx = Lm[n] + Rm[n]
        u_hat = ((lu < 0) & ~frozen).astype(np.uint8)
        if early_stop:
            done = np.all(kron_transform(u_hat) == (lx < 0), axis=1)
        else:
            done = np.zeros(len(active), dtype=bool)
        if it == max_iters:
            done[:] = True
        if done.any():
            idx = active[done]
            u_out[idx] = u_hat[done]
            iters[idx] = it
            lu_out[idx] = lu[done]
            lx_out[idx] = lx[done]
            keep = ~done
            active = active[keep]
            if active.size == 0:
                break
            Lm = Lm[:, keep]
            Rm = Rm[:, keep]

    if return_llrs:
        perm = bit_reversal_permutation(n)
        return u_out, iters, lu_out, lx_out[:, perm]
    return u_out, iters


# --------------------------------------------------------------------------- ML


def _enumerate_messages(k: int, start: int, stop: int) -> np.ndarray:
    """Messages ``start..stop-1`` in lexicographic order (first bit most significant)."""
    idx = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


def ml_batch(llr: np.ndarray, a: AVector, chunk: int = 1 << 14) -> np.ndarray:
    """Maximum-correlation codeword by enumerating all ``2**ones`` messages.

    Returns ``u_hat`` per frame; ties go to the lexicographically first message.
    """
    k = a.ones
    if k > ML_MAX_ONES:
        raise CapacityError(f"ML oracle enumerates 2**{k} codewords; limit is 2**{ML_MAX_ONES}")
    llr = _llr_matrix(llr, a.N)
    frames = llr.shape[0]
    best = np.full(frames, -np.inf)
    best_idx = np.zeros(frames, dtype=np.int64)
    for start in range(0, 1 << k, chunk):
        stop = min(start + chunk, 1 << k)
        msgs = _enumerate_messages(k, start, stop)
        x = polar_transform(scatter(msgs, a))
        corr = (1.0 - 2.0 * x) @ llr.T  # (chunk, frames)
        j = np.argmax(corr, axis=0)
        val = corr[j, np.arange(frames)]
        better = val > best
        best[better] = val[better]
        best_idx[better] = start + j[better]
    msgs = ((best_idx[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8)
    return scatter(msgs, a)


# --------------------------------------------------------------------------- configuration


@dataclass(frozen=True)
class DecoderConfig:
    kind: str = "sc"
    list_size: int = 8
    bp_iters: int = 200
    bp_min_sum: bool = False
    early_stop: bool = True

    def __post_init__(self):
        if self.kind not in DECODERS:
            raise ValueError(f"unknown decoder {self.kind!r}; choose from {DECODERS}")
        if self.kind in ("scl", "scl-crc") and self.list_size < 1:
            raise ValueError("list size must be >= 1")
        if self.kind == "bp" and self.bp_iters < 1:
            raise ValueError("BP needs at least one iteration")

    def validate(self, spec: CodeSpec) -> None:
        if self.kind == "scl-crc" and spec.crc is None:
            raise ValueError("scl-crc decoding needs a CRC in the code spec")
        if self.kind == "ml" and spec.ones > ML_MAX_ONES:
            raise CapacityError(
                f"ML oracle enumerates 2**{spec.ones} codewords; limit is 2**{ML_MAX_ONES}"
            )

    def label(self) -> str:
        if self.kind in ("scl", "scl-crc"):
            return f"{self.kind}(L={self.list_size})"
        if self.kind == "bp":
            return f"bp(it={self.bp_iters}{',minsum' if self.bp_min_sum else ''})"
        return self.kind

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "list_size": self.list_size,
            "bp_iters": self.bp_iters,
            "bp_min_sum": self.bp_min_sum,
            "early_stop": self.early_stop,
        }

    def frames_per_call(self, N: int) -> int:
        """Batch size that keeps the list decoder's working set moderate."""
        if self.kind in ("scl", "scl-crc"):
            return max(1, (1 << 19) // (self.list_size * N))
        if self.kind == "ml":
            return 256
        return 4096

    def decode_batch(self, llr: np.ndarray, a: AVector, spec: CodeSpec):
        """Decode a batch; returns ``(u_hat, iterations)`` with iterations
        zero for non-BP decoders."""
        llr = _llr_matrix(llr, a.N)
        step = self.frames_per_call(a.N)
        us, its = [], []
        for s in range(0, llr.shape[0], step):
            u, it = self._decode(llr[s : s + step], a, spec)
            us.append(u)
            its.append(it)
        if not us:
            return np.zeros((0, a.N), dtype=np.uint8), np.zeros(0, dtype=np.int64)
        return np.concatenate(us), np.concatenate(its)

    def _decode(self, llr, a, spec):
        zeros = np.zeros(llr.shape[0], dtype=np.int64)
        if self.kind == "sc":
            return sc_batch(llr, a), zeros
        if self.kind == "scl":
            return scl_select(*scl_batch(llr, a, self.list_size)), zeros
        if self.kind == "scl-crc":
            u, pm = scl_batch(llr, a, self.list_size)
            return scl_crc_select(u, pm, a, spec.crc)[0], zeros
        if self.kind == "bp":
            return bp_batch(llr, a, self.bp_iters, self.early_stop, self.bp_min_sum)
        return ml_batch(llr, a), zeros


# --------------------------------------------------------------------------- single-frame API


def _result(u: np.ndarray, a: AVector, metric: float, crc_width: int = 0, **kw) -> DecodeResult:
    info = u[a.info_positions]
    msg = info[: info.size - crc_width] if crc_width else info
    return DecodeResult(u_hat=u, x_hat=polar_transform(u), message_hat=msg, metric=float(metric), **kw)


def _correlation_metric(llr: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum(np.abs(llr) * ((llr < 0) != (x == 1))))


def decode_sc(frame, a: AVector) -> DecodeResult:
    llr = _llr_matrix(frame, a.N)[0]
    u = sc_batch(llr, a)[0]
    return _result(u, a, _correlation_metric(llr, polar_transform(u)))


def decode_scl(frame, a: AVector, L: int) -> DecodeResult:
    if L < 1:
        raise ValueError("list size must be >= 1")
    llr = _llr_matrix(frame, a.N)
    u, pm = scl_batch(llr, a, L)
    order = np.argsort(pm[0], kind="stable")
    paths = [(u[0, i], float(pm[0, i])) for i in order if np.isfinite(pm[0, i])]
    return _result(paths[0][0], a, paths[0][1], paths=paths)


def decode_scl_crc(frame, a: AVector, L: int, crc: CrcConfig | None) -> DecodeResult:
    if crc is None:
        raise RuntimeError("CRC is not configured for this code")
    if L < 1:
        raise ValueError("list size must be >= 1")
    llr = _llr_matrix(frame, a.N)
    u, pm = scl_batch(llr, a, L)
    picked, ok = scl_crc_select(u, pm, a, crc)
    order = np.argsort(pm[0], kind="stable")
    paths = [(u[0, i], float(pm[0, i])) for i in order if np.isfinite(pm[0, i])]
    metric = next(m for uu, m in paths if np.array_equal(uu, picked[0]))
    return _result(picked[0], a, metric, crc.width, crc_pass=bool(ok[0]), paths=paths)


def decode_bp(frame, a: AVector, n_it_max: int, early_stop: bool = True, min_sum: bool = False) -> DecodeResult:
    llr = _llr_matrix(frame, a.N)
    u, it, lu, lx = bp_batch(llr, a, n_it_max, early_stop, min_sum, return_llrs=True)
    res = _result(u[0], a, float(np.sum(np.abs(lx[0]))), iterations_used=int(it[0]))
    res.llr_u = lu[0]
    res.llr_x = lx[0]
    return res


def decode_ml_oracle(frame, a: AVector) -> DecodeResult:
    llr = _llr_matrix(frame, a.N)
    u = ml_batch(llr, a)[0]
    return _result(u, a, _correlation_metric(llr[0], polar_transform(u)))
