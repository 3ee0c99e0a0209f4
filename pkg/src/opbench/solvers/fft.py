"""Discrete Fourier transform along the last axis.

Forward is unscaled, ``X[k] = sum_n x[n] exp(-2j pi k n / N)``; the inverse
carries the ``1/N``. Power-of-two lengths use an iterative radix-2
decimation in time; other lengths go through Bluestein's chirp-z algorithm.
"""

from __future__ import annotations

import numpy as np

_BASE = 32  # direct DFT below this size


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    batch = x.shape[:-1]
    n = x.shape[-1]
    n_min = min(n, _BASE)
    k = np.arange(n_min)
    dft = np.exp(-2j * np.pi * k[:, None] * k[None, :] / n_min)
    # rows: subsequences x[j::cols]
    h = np.einsum("ki,bij->bkj", dft, x.reshape(-1, n_min, n // n_min))
    while h.shape[1] < n:
        half = h.shape[2] // 2
        even, odd = h[:, :, :half], h[:, :, half:]
        r = h.shape[1]
        twiddle = np.exp(-1j * np.pi * np.arange(r) / r)[None, :, None]
        h = np.concatenate([even + twiddle * odd, even - twiddle * odd], axis=1)
    return h.reshape(*batch, n)


def _bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    m = 1 << (2 * n - 1).bit_length()
    idx = np.arange(n)
    # n^2 mod 2n keeps the chirp phase exact for large n
    chirp = np.exp(-1j * np.pi * ((idx * idx) % (2 * n)) / n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=complex)
    a[..., :n] = x * chirp
    b = np.zeros(m, dtype=complex)
    b[:n] = np.conj(chirp)
    b[m - n + 1 :] = np.conj(chirp[1:])[::-1]
    conv = ifft(fft(a) * fft(b))
    return conv[..., :n] * chirp


def fft(v) -> np.ndarray:
    x = np.asarray(v, dtype=complex)
    n = x.shape[-1]
    if n == 0:
        return x.copy()
    if _is_pow2(n):
        return _fft_pow2(x)
    return _bluestein(x)


def ifft(v) -> np.ndarray:
    x = np.asarray(v, dtype=complex)
    n = x.shape[-1]
    if n == 0:
        return x.copy()
    return np.conj(fft(np.conj(x))) / n


def rfft(v) -> np.ndarray:
    x = np.asarray(v, dtype=np.float64)
    return fft(x)[..., : x.shape[-1] // 2 + 1]


def irfft(v, n: int) -> np.ndarray:
    half = np.asarray(v, dtype=complex)
    full = np.zeros(half.shape[:-1] + (n,), dtype=complex)
    full[..., : half.shape[-1]] = half
    tail = half[..., 1 : (n + 1) // 2]
    full[..., n - tail.shape[-1] :] = np.conj(tail[..., ::-1])
    return ifft(full).real


def naive_dft(v) -> np.ndarray:
    """O(n^2) reference transform, for tests."""
    x = np.asarray(v, dtype=complex)
    n = x.shape[-1]
    k = np.arange(n)
    return x @ np.exp(-2j * np.pi * np.outer(k, k) / n).T
