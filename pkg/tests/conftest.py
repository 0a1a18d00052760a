import math

import numpy as np
import pytest

from helixforms import exprlang as el
from helixforms.forms import FormOnM, make_B
from helixforms.geometry import Circle, DomainM, QuadratureSettings, annulus, disk

THREE_PI = 3 * math.pi


@pytest.fixture(scope="session")
def ann():
    return annulus(1.0, 2.0)


@pytest.fixture(scope="session")
def unit_disk():
    return disk(1.0)


@pytest.fixture(scope="session")
def two_holes():
    return DomainM(Circle((0.0, 0.0), 2.0),
                   (Circle((-0.9, 0.0), 0.6), Circle((0.9, 0.1), 0.6)))


@pytest.fixture(scope="session")
def quad3():
    return QuadratureSettings(level=3)


@pytest.fixture(scope="session")
def H_basic():
    return el.parse("(4 - x^2 - y^2)/3")


@pytest.fixture(scope="session")
def B_basic(ann, H_basic):
    return make_B(FormOnM.area_form(1.0), H_basic, ann)


def random_admissible(rng):
    """Random (omega, H) on the annulus 1 <= r <= 2.

    H = (4 - r^2) (q(t) + (r^2 - 1) s(x, y, t)) vanishes on r = 2 and equals
    3 q(t) on r = 1.
    """
    r2 = el.X ** 2 + el.Y ** 2
    a, b, c = (float(v) for v in rng.uniform(-0.15, 0.15, 3))
    f = 1.0 + a * el.X + b * el.Y + abs(c) * el.X * el.Y * el.X
    q0, q1 = (float(v) for v in rng.uniform(-1, 1, 2))
    q = q0 + 0.3 * q1 * el.sin(2 * math.pi * el.T)
    k1, k2, ph = (float(v) for v in rng.uniform(-1, 1, 3))
    s = k1 * el.sin(el.X + k2 * el.Y + 2 * math.pi * (el.T + ph)) * 0.2
    H = (4.0 - r2) * (q + (r2 - 1.0) * s)
    return FormOnM.area_form(f), H
