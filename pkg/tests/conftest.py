import numpy as np
import pytest

from magtorus.field_gauge import build_field

PI = np.pi
TWO_PI = 2 * np.pi


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cos_field():
    """B = 2 pi + 2 pi cos(2 pi x1): average vanishes on the line x1 = 1/2."""
    return build_field([((0, 0), TWO_PI), ((1, 0), PI), ((-1, 0), PI)])


@pytest.fixture
def half_cos_field():
    """B = 2 pi + pi cos(2 pi x1): minimum pi."""
    return build_field([((0, 0), TWO_PI), ((1, 0), PI / 2)])


def random_field(rng, phi=1, bandlimit=2, scale=1.0):
    entries = [((0, 0), TWO_PI * phi)]
    for k1 in range(0, bandlimit + 1):
        for k2 in range(-bandlimit, bandlimit + 1):
            if (k1, k2) > (0, 0):
                entries.append(((k1, k2), scale * (rng.standard_normal() + 1j * rng.standard_normal()) / (1 + k1 * k1 + k2 * k2)))
    return build_field(entries)
