"""Samplers for symmetric noise with an inlier mass near zero, plus adversarial entry corruption."""

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


def rng_from_seed(seed):
    # Philox is counter-based: distinct seeds give independent streams,
    # which is what the parallel trial workers rely on.
    return np.random.Generator(np.random.Philox(key=np.uint64(int(seed) & (2 ** 64 - 1))))


@dataclass(frozen=True)
class BoundedUniform:
    zeta: float

    def __post_init__(self):
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")

    def _sample(self, rng, count):
        return rng.uniform(-self.zeta, self.zeta, count)

    def _mass_within(self, z):
        return min(1.0, z / self.zeta)


@dataclass(frozen=True)
class Cauchy:
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def _sample(self, rng, count):
        return self.scale * rng.standard_cauchy(count)

    def _mass_within(self, z):
        return (2.0 / math.pi) * math.atan(z / self.scale)


@dataclass(frozen=True)
class HeavyMixture:
    """With probability alpha a uniform draw from [-zeta, zeta], otherwise N(0, heavy_sigma^2)."""

    alpha: float
    zeta: float
    heavy_sigma: float

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if self.zeta <= 0 or self.heavy_sigma <= 0:
            raise ValueError("zeta and heavy_sigma must be positive")

    def _sample(self, rng, count):
        # Draw both branches in full so the stream layout is fixed per count.
        pick = rng.random(count) < self.alpha
        inlier = rng.uniform(-self.zeta, self.zeta, count)
        heavy = self.heavy_sigma * rng.standard_normal(count)
        return np.where(pick, inlier, heavy)

    def _mass_within(self, z):
        inlier = min(1.0, z / self.zeta)
        heavy = math.erf(z / (self.heavy_sigma * math.sqrt(2.0)))
        return self.alpha * inlier + (1.0 - self.alpha) * heavy


@dataclass(frozen=True)
class RademacherScaled:
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def _sample(self, rng, count):
        return self.scale * (2.0 * rng.integers(0, 2, count) - 1.0)

    def _mass_within(self, z):
        return 1.0 if z >= self.scale else 0.0


@dataclass(frozen=True)
class ZeroOnSet:
    """Inner spec's noise with the given flat positions forced to zero."""

    indices: tuple
    inner: object

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    def _sample(self, rng, count):
        out = self.inner._sample(rng, count)
        idx = [i for i in self.indices if 0 <= i < count]
        out[idx] = 0.0
        return out

    def _mass_within(self, z):
        # Worst case over entries; the zeroed positions have mass 1.
        return self.inner._mass_within(z)


_KINDS = {
    "bounded_uniform": BoundedUniform,
    "cauchy": Cauchy,
    "heavy_mixture": HeavyMixture,
    "rademacher_scaled": RademacherScaled,
}


def noise_from_dict(d):
    """Build a NoiseSpec from config-file fields ({"kind": ..., params...})."""
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "zero_on_set":
        inner = noise_from_dict(d.pop("inner"))
        return ZeroOnSet(indices=tuple(d.pop("indices")), inner=inner)
    if kind not in _KINDS:
        raise ValueError(f"unknown noise kind: {kind!r}")
    try:
        return _KINDS[kind](**d)
    except TypeError as exc:
        raise ValueError(f"bad parameters for noise kind {kind!r}: {exc}") from None


def noise_to_dict(spec):
    if isinstance(spec, ZeroOnSet):
        return {"kind": "zero_on_set", "indices": list(spec.indices), "inner": noise_to_dict(spec.inner)}
    for name, cls in _KINDS.items():
        if isinstance(spec, cls):
            out = {"kind": name}
            for field in cls.__dataclass_fields__:
                out[field] = getattr(spec, field)
            return out
    raise ValueError(f"not a noise spec: {spec!r}")


def sample_noise(spec, count, seed):
    """Deterministic draw of `count` independent entries from the spec."""
    count = int(count)
    if count <= 0:
        raise ValueError("count must be positive")
    return spec._sample(rng_from_seed(seed), count)


def alpha_at(spec, zeta):
    """Exact probability mass of [-zeta, zeta] under the spec."""
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    return float(spec._mass_within(float(zeta)))


@dataclass(frozen=True)
class CorruptionSpec:
    """Replace floor(epsilon * m) entries: random positions at +-magnitude, or
    sign-flips at the largest-|signal| positions."""

    epsilon: float
    strategy: str
    magnitude: float

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.strategy not in ("random_extreme", "targeted_sign_flip"):
            raise ValueError(f"unknown corruption strategy: {self.strategy!r}")
        if self.magnitude <= 0:
            raise ValueError("magnitude must be positive")


def corruption_from_dict(d):
    d = dict(d)
    try:
        return CorruptionSpec(**d)
    except TypeError as exc:
        raise ValueError(f"bad corruption parameters: {exc}") from None


def corruption_to_dict(spec):
    return {"epsilon": spec.epsilon, "strategy": spec.strategy, "magnitude": spec.magnitude}


def corrupt(Y, spec, signal, seed):
    """Apply the corruption plan to Y. Returns (Z, mask of replaced flat positions)."""
    if signal.order != Y.order or signal.dim != Y.dim:
        raise ValueError("signal shape must match observation")
    m = Y.values.size
    count = int(math.floor(spec.epsilon * m))
    Z = Y.copy()
    if count == 0:
        return Z, np.zeros(0, dtype=np.intp)
    rng = rng_from_seed(seed)
    if spec.strategy == "random_extreme":
        pos = rng.choice(m, size=count, replace=False)
        signs = 2.0 * rng.integers(0, 2, count) - 1.0
        Z.values[pos] = signs * spec.magnitude
    else:
        order = np.argsort(-np.abs(signal.values), kind="stable")
        pos = order[:count]
        Z.values[pos] = -np.sign(signal.values[pos]) * spec.magnitude
    mask = np.sort(pos.astype(np.intp))
    return Z, mask
