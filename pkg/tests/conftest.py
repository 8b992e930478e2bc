import pathlib

import pytest

from famsynth import parse_family

REPO = pathlib.Path(__file__).resolve().parent.parent
EXAMPLE1 = REPO / "models" / "example1.fmc"

# The worked four-state family; realisations in enumeration order are
# (k0, k1, k2) = (0,0,2), (0,0,3), (0,1,2), (0,1,3).
R1 = (0, 0, 2)
R4 = (0, 0, 3)
R2 = (0, 1, 2)
R3 = (0, 1, 3)


@pytest.fixture(scope="session")
def example1():
    model, specs = parse_family(EXAMPLE1.read_text())
    return model, specs


@pytest.fixture(scope="session")
def example1_rewards():
    """The worked family with rewards that only realisation (0,1,2) keeps
    finite for reaching state 2 (its expected reward is exactly 4)."""
    text = EXAMPLE1.read_text().replace(
        "labels",
        "rewards\n0 : 1\n1 : 1\n2 : 0\n3 : 5\n\nlabels", 1)
    model, specs = parse_family(text)
    return model, specs
