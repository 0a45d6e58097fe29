"""Analytic score models and the denoising score-matching objective.

A score model maps (x, sigma) to grad_x log p_sigma(x) for the prior smoothed
with N(0, sigma^2 I).  Gaussian and Gaussian-mixture priors admit closed
forms and serve as exact oracles for the samplers.
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.special import logsumexp

from .schedule import NoiseSchedule


@runtime_checkable
class ScoreModel(Protocol):
    def __call__(self, x: np.ndarray, sigma: float) -> np.ndarray: ...


def _check_sigma(sigma: float):
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")


@dataclass(frozen=True)
class GaussianPriorScore:
    """Score of N(mean, std^2 I) smoothed by sigma: -(x - mean) / (std^2 + sigma^2).

    std = 0 is the delta prior: the score then points exactly at the mean and
    Tweedie denoising recovers it exactly.
    """

    mean: float | np.ndarray = 0.0
    std: float = 0.0

    def __post_init__(self):
        if self.std < 0.0:
            raise ValueError(f"std must be >= 0, got {self.std}")

    def __call__(self, x: np.ndarray, sigma: float) -> np.ndarray:
        _check_sigma(sigma)
        if isinstance(self.mean, np.ndarray) and self.mean.shape != x.shape:
            raise ValueError(f"mean shape {self.mean.shape} != x shape {x.shape}")
        return -(x - self.mean) / (self.std**2 + sigma**2)


@dataclass(frozen=True)
class GmmComponent:
    weight: float
    mean: float | np.ndarray
    std: float


class GmmPriorScore:
    """Score of a mixture of image-level Gaussians under sigma-smoothing.

    Responsibilities are whole-image posteriors computed in the log domain,
    so well-separated components never underflow to 0/0.
    """

    def __init__(self, components: Sequence[GmmComponent]):
        if len(components) == 0:
            raise ValueError("need at least one mixture component")
        w = np.array([c.weight for c in components], dtype=np.float64)
        if np.any(w <= 0.0):
            raise ValueError("component weights must be positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"component weights must sum to 1, got {w.sum()}")
        if any(c.std < 0.0 for c in components):
            raise ValueError("component std must be >= 0")
        self.components = tuple(components)
        self._log_w = np.log(w)

    def responsibilities(self, x: np.ndarray, sigma: float) -> np.ndarray:
        """Posterior component probabilities given the whole image x."""
        _check_sigma(sigma)
        log_p = np.empty(len(self.components))
        for k, c in enumerate(self.components):
            var = c.std**2 + sigma**2
            sq = float(np.sum((x - c.mean) ** 2))
            log_p[k] = self._log_w[k] - 0.5 * sq / var - 0.5 * x.size * np.log(2.0 * np.pi * var)
        return np.exp(log_p - logsumexp(log_p))

    def __call__(self, x: np.ndarray, sigma: float) -> np.ndarray:
        r = self.responsibilities(x, sigma)
        out = np.zeros_like(x, dtype=np.float64)
        for k, c in enumerate(self.components):
            var = c.std**2 + sigma**2
            out += r[k] * (-(x - c.mean) / var)
        return out


def dsm_loss(model: ScoreModel, x0: np.ndarray, sched: NoiseSchedule, t: float, z: np.ndarray) -> float:
    """sigma(t)^2 * mean((s(x0 + sigma z, sigma) + z/sigma)^2).

    The target -z/sigma is the gradient of the Gaussian perturbation kernel,
    so the delta prior's exact score attains loss 0 and any constant offset
    delta costs sigma^2 * delta^2.
    """
    if z.shape != x0.shape:
        raise ValueError(f"z shape {z.shape} != x0 shape {x0.shape}")
    sigma = sched.sigma_continuous(t)
    x_t = x0 + sigma * z
    resid = model(x_t, sigma) + z / sigma
    return float(sigma**2 * np.mean(resid**2))


SCORE_MAGIC = b"SCR1"
TAG_REQUEST = 0x01
TAG_RESPONSE = 0x02
TAG_ERROR = 0xFF
ERR_SIGMA_RANGE = 3


class RemoteScoreError(Exception):
    """Transport-level failure talking to a remote score server."""


class RemoteProtocolError(RemoteScoreError):
    """Malformed frame or unexpected connection close."""


class RemoteServerError(RemoteScoreError):
    """Server answered with an error frame (tag 0xFF + u32 code)."""

    def __init__(self, code: int):
        super().__init__(f"score server returned error code {code}")
        self.code = code


def _recv_exact(sock, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            raise RemoteProtocolError(f"connection closed: expected {n} bytes, got {got}")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class RemoteScore:
    """Wire-protocol client for a remote score model on a local stream socket.

    Handshake fixes the grid shape and learns the advertised [sigma_min,
    sigma_max]; each call is one request/response exchange with float32
    little-endian payloads.  One request in flight per connection: calls are
    serialized by a lock, so concurrent pipeline workers should each own a
    session.
    """

    def __init__(self, address: str, shape: tuple[int, int]):
        rows, cols = shape
        if rows < 1 or cols < 1:
            raise ValueError(f"bad grid shape {shape}")
        self.shape = (rows, cols)
        self.address = address
        self._lock = threading.Lock()
        try:
            if ":" in address:
                host, port = address.rsplit(":", 1)
                self._sock = socket.create_connection((host, int(port)))
            else:
                self._sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
                self._sock.connect(address)
        except OSError as exc:
            raise RemoteScoreError(f"cannot connect to {address}: {exc}") from exc
        if self._sock.family != socket.AF_UNIX:
            self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        try:
            self._sock.sendall(SCORE_MAGIC + np.array([cols, rows], dtype="<u4").tobytes())
            reply = _recv_exact(self._sock, 12)
        except RemoteScoreError:
            self._sock.close()
            raise
        if reply[:4] != SCORE_MAGIC:
            self._sock.close()
            raise RemoteProtocolError(f"bad handshake magic {reply[:4]!r}")
        lo, hi = np.frombuffer(reply, dtype="<f4", offset=4)
        self.sigma_bounds = (float(lo), float(hi))

    def __call__(self, x: np.ndarray, sigma: float) -> np.ndarray:
        if x.shape != self.shape:
            raise ValueError(f"x shape {x.shape} != negotiated {self.shape}")
        # Bounds are checked on the float32 value that actually goes on the
        # wire, before any network write.
        s32 = float(np.float32(sigma))
        lo, hi = self.sigma_bounds
        if not lo <= s32 <= hi:
            raise ValueError(f"sigma {sigma} outside advertised bounds [{lo}, {hi}]")
        payload = np.ascontiguousarray(x, dtype="<f4").tobytes()
        with self._lock:
            self._sock.sendall(
                bytes([TAG_REQUEST]) + np.float32(sigma).tobytes() + payload
            )
            tag = _recv_exact(self._sock, 1)[0]
            if tag == TAG_ERROR:
                code = int(np.frombuffer(_recv_exact(self._sock, 4), dtype="<u4")[0])
                raise RemoteServerError(code)
            if tag != TAG_RESPONSE:
                raise RemoteProtocolError(f"unexpected frame tag 0x{tag:02x}")
            raw = _recv_exact(self._sock, self.shape[0] * self.shape[1] * 4)
        field = np.frombuffer(raw, dtype="<f4").reshape(self.shape).astype(np.float64)
        if not np.all(np.isfinite(field)):
            raise RemoteProtocolError("server returned non-finite score values")
        return field

    def close(self):
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
