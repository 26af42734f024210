"""Zipfian rank generator using the rejection-free quantile method.

P(rank i) = i^-theta / zeta(n, theta) for i in [1, n]. Draws invert the
CDF through three precomputed constants instead of sampling-and-rejecting:

    zeta_n = sum_{i=1..n} i^-theta
    alpha  = 1 / (1 - theta)
    eta    = (1 - (2/n)^(1-theta)) / (1 - zeta(2)/zeta_n)

A uniform u lands on rank 1 or 2 through direct CDF comparison and on the
tail through the closed-form quantile 1 + n*(eta*u - eta + 1)^alpha.
theta=0 degenerates to uniform. theta=1 is excluded (alpha blows up).
"""
import random
from functools import lru_cache


@lru_cache(maxsize=64)
def zeta(n: int, theta: float) -> float:
    # direct summation; cached because the benchmark default n is 10M
    return sum(i ** -theta for i in range(1, n + 1))


class ZipfianGen:
    __slots__ = ("n", "theta", "zeta_n", "alpha", "eta", "rng", "_cut2")

    def __init__(self, n: int, theta: float, seed=0):
        if n < 1:
            raise ValueError("population must be at least 1")
        if not 0.0 <= theta < 1.0:
            raise ValueError("theta must be in [0, 1)")
        self.n = n
        self.theta = theta
        self.zeta_n = zeta(n, theta)
        self.alpha = 1.0 / (1.0 - theta)
        self._cut2 = 1.0 + 0.5 ** theta
        denom = 1.0 - zeta(2, theta) / self.zeta_n
        # n <= 2 is fully handled by the head branches; eta is never used
        self.eta = ((1.0 - (2.0 / n) ** (1.0 - theta)) / denom
                    if denom != 0.0 else 0.0)
        self.rng = random.Random(seed)

    def next(self) -> int:
        u = self.rng.random()
        uz = u * self.zeta_n
        if uz < 1.0:
            return 1
        if uz < self._cut2:
            return 2
        rank = 1 + int(self.n * (self.eta * u - self.eta + 1.0) ** self.alpha)
        return rank if rank <= self.n else self.n


def zipf_next(gen: ZipfianGen) -> int:
    return gen.next()
