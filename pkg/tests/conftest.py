import pytest

from models import ProblemParams
from services.moment import build_family
from services.spectral import build_basis

# (alpha, beta, mu) covering the three regimes
PARAM_SETS = {
    "classical": (0.0, 0.0, 0.0),
    "sub_one": (0.5, 0.2, -0.1),
    "super_one": (1.0, 1.0, -1.0),
    "equal_one": (1.0, 0.0, -0.25),
}


def make_params(name: str, T: float = 1.0, r: int = 0) -> ProblemParams:
    alpha, beta, mu = PARAM_SETS[name]
    return ProblemParams(alpha=alpha, beta=beta, mu=mu, r=r, T=T)


@pytest.fixture(params=list(PARAM_SETS))
def any_params(request) -> ProblemParams:
    return make_params(request.param)


@pytest.fixture(scope="session")
def bases():
    return {name: build_basis(make_params(name), K=20) for name in PARAM_SETS}


@pytest.fixture(scope="session")
def classical_basis():
    return build_basis(make_params("classical"), K=8)


@pytest.fixture(scope="session")
def short_family(classical_basis):
    """Classical case at T=0.05, where the uncontrolled state is still O(1e-2)."""
    return build_family(classical_basis, T=0.05, K=3, time_samples=2048)


@pytest.fixture(scope="session")
def long_family(classical_basis):
    return build_family(classical_basis, T=0.5, K=3, time_samples=2048)


@pytest.fixture(scope="session")
def equal_one_setup():
    basis = build_basis(make_params("equal_one", T=0.5), K=8)
    return basis, build_family(basis, T=0.5, K=2, time_samples=2048)


@pytest.fixture(scope="session")
def sub_one_setup():
    basis = build_basis(make_params("sub_one", T=0.2), K=8)
    return basis, build_family(basis, T=0.2, K=2, time_samples=2048)
