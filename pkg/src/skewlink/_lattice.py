"""Rank-1 lattice generating vectors by fast component-by-component search.

The construction minimizes the worst-case error in a weighted Korobov space
of smoothness 2 with product weights ``gamma_j = 0.8**j``.  The search over
candidates is a circular correlation evaluated with the FFT, made possible by
indexing points through powers of a primitive root of the (prime) lattice
size.
"""
from functools import lru_cache

import numpy as np


def largest_prime_at_most(n):
    n = int(n)
    if n < 2:
        raise ValueError("no prime below 2")
    sieve = np.ones(n + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, int(n**0.5) + 1):
        if sieve[p]:
            sieve[p * p :: p] = False
    return int(np.flatnonzero(sieve)[-1])


def _prime_factors(n):
    out, p = [], 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def primitive_root(p):
    factors = _prime_factors(p - 1)
    for g in range(2, p):
        if all(pow(g, (p - 1) // q, p) != 1 for q in factors):
            return g
    raise ValueError(f"{p} has no primitive root")


@lru_cache(maxsize=64)
def generating_vector(dim, n):
    """Return the integer generating vector (length ``dim``) for prime ``n``."""
    z = np.ones(dim, dtype=np.int64)
    if dim <= 1 or n <= 3:
        return z
    m = (n - 1) // 2
    g = primitive_root(n)
    powers = np.empty(m, dtype=np.int64)
    powers[0] = 1
    for k in range(1, m):
        powers[k] = (powers[k - 1] * g) % n
    folded = np.minimum(powers, n - powers)
    x = folded / n
    omega = 2 * np.pi**2 * (x * x - x + 1.0 / 6.0)
    fft_omega = np.fft.rfft(omega)

    # product term for the first coordinate (z_1 = 1), in root-power order
    gamma = 0.8
    prod = 1.0 + gamma * omega
    for s in range(1, dim):
        w = 0.8 ** (s + 1)
        corr = np.fft.irfft(np.conj(np.fft.rfft(prod)) * fft_omega, n=m)
        a = int(np.argmin(corr))
        z[s] = folded[a]
        prod = prod * (1.0 + w * np.roll(omega, -a))
    return z


@lru_cache(maxsize=8)
def _base_points(dim, n):
    z = generating_vector(dim, n)
    i = np.arange(n, dtype=np.int64)
    pts = ((z[:, None] * i[None, :]) % n) / n
    pts.flags.writeable = False
    return pts


def lattice_points(dim, n, shift):
    """Shifted lattice points ``frac(i z / n + shift)``, shape ``(dim, n)``."""
    pts = _base_points(dim, n) + np.asarray(shift, dtype=float)[:, None]
    pts -= np.floor(pts)
    return pts
