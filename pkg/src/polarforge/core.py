"""Polar code definition: code parameters, frozen-set masks, encoding and CRC.

Bit vectors are numpy ``uint8`` arrays holding 0/1.  Every transform works on
the last axis, so a ``(frames, N)`` batch is encoded in one call.  Positions
are 0-indexed internally; the 1-indexed sets used in the docs (e.g. the
``P(8,4)`` information set ``{4, 6, 7, 8}``) map to rows ``i - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

AVECTOR_MAGIC = "polar-avector v1"


class CapacityError(ValueError):
    """Raised when an exhaustive routine would need more than 2**28 words."""


def log2_exact(N: int) -> int:
    if N < 1 or N & (N - 1):
        raise ValueError("N must be a power of two")
    return N.bit_length() - 1


@lru_cache(maxsize=None)
def bit_reversal_permutation(n: int) -> np.ndarray:
    """Index map ``i -> bitrev_n(i)`` as an int array of length ``2**n``."""
    idx = np.arange(1 << n)
    rev = np.zeros_like(idx)
    for b in range(n):
        rev |= ((idx >> b) & 1) << (n - 1 - b)
    rev.setflags(write=False)
    return rev


@lru_cache(maxsize=None)
def row_weights(n: int) -> np.ndarray:
    """Hamming weight of each row of G_N, i.e. ``2**popcount(i)``."""
    idx = np.arange(1 << n)
    pop = np.zeros_like(idx)
    for b in range(n):
        pop += (idx >> b) & 1
    w = (1 << pop).astype(np.int64)
    w.setflags(write=False)
    return w


# --------------------------------------------------------------------------- CRC


@dataclass(frozen=True)
class CrcConfig:
    """Non-reflected, MSB-first CRC with no output xor."""

    width: int
    poly: int
    init: int = 0
    name: str = ""

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("CRC width must be >= 1")
        if self.poly >= (1 << self.width) or self.init >= (1 << self.width):
            raise ValueError("CRC polynomial/init wider than the register")

    def register(self, bits) -> int:
        """Bitwise reference computation; returns the register as an int."""
        reg = self.init
        top = 1 << (self.width - 1)
        mask = (1 << self.width) - 1
        for b in np.asarray(bits, dtype=np.uint8).ravel():
            fb = ((reg & top) != 0) ^ bool(b)
            reg = (reg << 1) & mask
            if fb:
                reg ^= self.poly
        return reg

    def parity_bits(self, bits) -> np.ndarray:
        reg = self.register(bits)
        return np.array([(reg >> (self.width - 1 - j)) & 1 for j in range(self.width)], dtype=np.uint8)

    def affine_map(self, length: int) -> tuple[np.ndarray, np.ndarray]:
        """CRC over ``length`` bits as ``parity = bits @ M ^ c`` over GF(2)."""
        return _crc_affine(self, length)


@lru_cache(maxsize=64)
def _crc_affine(cfg: CrcConfig, length: int) -> tuple[np.ndarray, np.ndarray]:
    const = cfg.parity_bits(np.zeros(length, dtype=np.uint8))
    M = np.zeros((length, cfg.width), dtype=np.uint8)
    for i in range(length):
        e = np.zeros(length, dtype=np.uint8)
        e[i] = 1
        M[i] = cfg.parity_bits(e) ^ const
    M.setflags(write=False)
    const.setflags(write=False)
    return M, const


CRC16 = CrcConfig(16, 0x1021, 0xFFFF, "crc16-ccitt-false")
CRC24 = CrcConfig(24, 0x864CFB, 0, "crc24a")
# small presets for short test codes
CRC4 = CrcConfig(4, 0x3, 0, "crc4-itu")
CRC8 = CrcConfig(8, 0x07, 0, "crc8")

CRC_PRESETS = {c.name: c for c in (CRC16, CRC24, CRC4, CRC8)}
CRC_PRESETS.update({"crc16": CRC16, "crc24": CRC24, "crc4": CRC4, "crc8": CRC8})


def crc_attach(payload, crc: CrcConfig | None) -> np.ndarray:
    """Append ``crc.width`` parity bits to each payload row."""
    if crc is None:
        raise RuntimeError("CRC is not configured for this code")
    p = np.asarray(payload, dtype=np.uint8)
    M, c = crc.affine_map(p.shape[-1])
    parity = ((p.astype(np.int64) @ M) & 1).astype(np.uint8) ^ c
    return np.concatenate([p, parity], axis=-1)


def crc_check(word, crc: CrcConfig | None):
    """True where the trailing ``crc.width`` bits match the payload's CRC."""
    if crc is None:
        raise RuntimeError("CRC is not configured for this code")
    w = np.asarray(word, dtype=np.uint8)
    payload, parity = w[..., : -crc.width], w[..., -crc.width :]
    M, c = crc.affine_map(payload.shape[-1])
    expect = ((payload.astype(np.int64) @ M) & 1).astype(np.uint8) ^ c
    ok = np.all(expect == parity, axis=-1)
    return bool(ok) if ok.ndim == 0 else ok


# --------------------------------------------------------------------------- code spec


@dataclass(frozen=True)
class CodeSpec:
    n: int
    k: int
    crc: CrcConfig | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 1 <= self.ones <= self.N:
            raise ValueError(f"need 1 <= k + crc width <= N, got {self.ones} for N={self.N}")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @classmethod
    def from_length(cls, N: int, k: int, crc: CrcConfig | None = None) -> "CodeSpec":
        return cls(log2_exact(N), k, crc)

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def crc_width(self) -> int:
        return 0 if self.crc is None else self.crc.width

    @property
    def ones(self) -> int:
        """Number of non-frozen positions (payload plus CRC bits)."""
        return self.k + self.crc_width

    @property
    def rate(self) -> float:
        return self.k / self.N


# --------------------------------------------------------------------------- A-vector


class AVector:
    """Frozen-set mask; ``bits[i] == 1`` marks position ``i`` as non-frozen.

    Instances are immutable and hashable so they can be deduplicated in sets.
    """

    __slots__ = ("_bits", "_key")

    def __init__(self, bits):
        b = np.array(bits, dtype=np.uint8).ravel()
        if b.size == 0 or np.any(b > 1):
            raise ValueError("A-vector must be a non-empty 0/1 vector")
        log2_exact(b.size)
        b.setflags(write=False)
        self._bits = b
        self._key = b.tobytes()

    @classmethod
    def from_positions(cls, N: int, positions, one_indexed: bool = True) -> "AVector":
        b = np.zeros(N, dtype=np.uint8)
        idx = np.asarray(list(positions), dtype=np.int64)
        if one_indexed:
            idx = idx - 1
        b[idx] = 1
        return cls(b)

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def N(self) -> int:
        return self._bits.size

    @property
    def n(self) -> int:
        return self.N.bit_length() - 1

    @property
    def ones(self) -> int:
        return int(self._bits.sum())

    @property
    def info_positions(self) -> np.ndarray:
        """0-indexed non-frozen positions in ascending order."""
        return np.flatnonzero(self._bits)

    def positions(self) -> list[int]:
        """1-indexed non-frozen positions."""
        return [int(i) + 1 for i in self.info_positions]

    def check(self, spec: CodeSpec) -> None:
        if self.N != spec.N or self.ones != spec.ones:
            raise ValueError(
                f"A-vector (N={self.N}, ones={self.ones}) does not fit code "
                f"(N={spec.N}, ones={spec.ones})"
            )

    def to_hex(self) -> str:
        pad = (-self.N) % 4
        b = np.concatenate([self._bits, np.zeros(pad, dtype=np.uint8)]).reshape(-1, 4)
        vals = b @ np.array([8, 4, 2, 1])
        return "".join("0123456789abcdef"[v] for v in vals)

    @classmethod
    def from_hex(cls, text: str, N: int) -> "AVector":
        text = text.strip().lower()
        if len(text) != (N + 3) // 4:
            raise ValueError(f"expected {(N + 3) // 4} hex digits, got {len(text)}")
        nib = np.array([int(c, 16) for c in text], dtype=np.uint8)
        b = ((nib[:, None] >> np.array([3, 2, 1, 0])) & 1).astype(np.uint8).ravel()
        if np.any(b[N:]):
            raise ValueError("non-zero padding bits in A-vector hex string")
        return cls(b[:N])

    def dumps(self) -> str:
        return f"{AVECTOR_MAGIC}\nN={self.N} ones={self.ones}\n{self.to_hex()}\n"

    @classmethod
    def loads(cls, text: str) -> "AVector":
        lines = [ln.strip() for ln in text.strip().splitlines()]
        if len(lines) != 3 or lines[0] != AVECTOR_MAGIC:
            raise ValueError("not a polar-avector v1 file")
        try:
            fields = dict(tok.split("=", 1) for tok in lines[1].split())
            N, ones = int(fields["N"]), int(fields["ones"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"malformed header line: {lines[1]!r}") from exc
        a = cls.from_hex(lines[2], N)
        if a.ones != ones:
            raise ValueError(f"header says ones={ones}, mask has {a.ones}")
        return a

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "AVector":
        return cls.loads(Path(path).read_text())

    def __eq__(self, other):
        return isinstance(other, AVector) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __len__(self):
        return self.N

    def __repr__(self):
        return f"AVector(N={self.N}, ones={self.ones}, hex={self.to_hex()})"


# --------------------------------------------------------------------------- transform


def kron_transform(u) -> np.ndarray:
    """``u @ F^{(x)n}`` over GF(2) by in-place butterflies, on the last axis."""
    x = np.array(u, dtype=np.uint8, copy=True)
    N = x.shape[-1]
    log2_exact(N)
    lead = x.shape[:-1]
    h = 1
    while h < N:
        v = x.reshape(*lead, N // (2 * h), 2, h)
        v[..., 0, :] ^= v[..., 1, :]
        h *= 2
    return x


def polar_transform(u, n: int | None = None) -> np.ndarray:
    """``x = u @ G_N`` with ``G_N = B_N F^{(x)n}``; batched over leading axes."""
    u = np.asarray(u, dtype=np.uint8)
    N = u.shape[-1]
    if N < 1 or N & (N - 1):
        raise ValueError("length must be a power of two")
    nn = N.bit_length() - 1
    if n is not None and n != nn:
        raise ValueError(f"length {N} does not match n={n}")
    # B_N and F^{(x)n} commute, so permute after the butterflies
    return kron_transform(u)[..., bit_reversal_permutation(nn)]


def generator_matrix(n: int) -> np.ndarray:
    """Explicit G_N = B_N F^{(x)n}; reference only, O(N^2) memory."""
    G = np.array([[1]], dtype=np.uint8)
    F = np.array([[1, 0], [1, 1]], dtype=np.uint8)
    for _ in range(n):
        G = np.kron(G, F)
    B = np.eye(1 << n, dtype=np.uint8)[bit_reversal_permutation(n)]
    return (B.astype(np.int64) @ G % 2).astype(np.uint8)


def scatter(payload, a: AVector) -> np.ndarray:
    """Place payload bits at the non-frozen positions, zeros elsewhere."""
    p = np.asarray(payload, dtype=np.uint8)
    pos = a.info_positions
    if p.shape[-1] != pos.size:
        raise ValueError(f"payload has {p.shape[-1]} bits, A-vector has {pos.size} ones")
    u = np.zeros(p.shape[:-1] + (a.N,), dtype=np.uint8)
    u[..., pos] = p
    return u


def encode(message, a: AVector, spec: CodeSpec | None = None) -> np.ndarray:
    """Non-systematic polar encoding of one message or a batch of messages.

    With a CRC configured in ``spec`` the message is the k-bit payload and the
    CRC is appended before the bits are scattered into the information set.
    """
    m = np.asarray(message, dtype=np.uint8)
    if spec is not None:
        a.check(spec)
        if m.shape[-1] != spec.k:
            raise ValueError(f"message has {m.shape[-1]} bits, code expects k={spec.k}")
        if spec.crc is not None:
            m = crc_attach(m, spec.crc)
    return polar_transform(scatter(m, a))


def min_distance(a: AVector) -> int:
    """Minimum distance as the smallest row weight over the information set."""
    if a.ones == 0:
        raise ValueError("all-frozen A-vector has no non-zero codewords")
    return int(row_weights(a.n)[a.info_positions].min())
