import pytest

from bilayer_kpm.geometry import LatticeBasis
from bilayer_kpm.model import Orbital, OrbitalSet, SpectralWindow, TBModel, bilayer_hopping, builtin_model, spectral_bound


@pytest.fixture(scope="session")
def tbg6():
    """Twisted bilayer graphene at 6 degrees."""
    return builtin_model("tbg", {"twist_degrees": 6.0})


@pytest.fixture(scope="session")
def tbg6_window(tbg6):
    return spectral_bound(tbg6)


@pytest.fixture(scope="session")
def decoupled():
    """Two identical graphene sheets with the interlayer hopping switched off."""
    return builtin_model("tbg", {"twist_degrees": 0.0, "interlayer_scale": 0.0})


@pytest.fixture(scope="session")
def monolayer():
    return builtin_model("monolayer_graphene")


@pytest.fixture(scope="session")
def onsite_model():
    """One orbital per cell with onsite energy 0.5 eV and no hopping: H = 0.5 I."""
    basis = LatticeBasis.hexagonal()
    orbitals = OrbitalSet(1, (Orbital("A1", (0.0, 0.0), 0.5),))
    hopping = bilayer_hopping(
        sheet_of={"A1": 1},
        onsite={"A1": 0.5},
        t_intra=0.0,
        nn_distance=1.42,
        t_perp=0.0,
        interlayer_distance=3.35,
        decay_length=0.32,
        cutoff=3.0,
    )
    return TBModel(basis, basis, orbitals, OrbitalSet(2), hopping, label="onsite")


@pytest.fixture
def wide_window():
    return SpectralWindow(2.0)
