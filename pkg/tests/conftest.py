import numpy as np
import pytest

from wmswitch.experiments import lane_keeping_gains, lane_keeping_preset
from wmswitch.plant import PlantModel, design_or_validate_gains


@pytest.fixture(scope="session")
def lane_model():
    return lane_keeping_preset()


@pytest.fixture(scope="session")
def lane_ctl():
    return lane_keeping_gains()


@pytest.fixture(scope="session")
def small_model():
    """p=2 system with full observation, used by the statistical suites."""
    return PlantModel(
        A=[[0.6, 0.2], [0.0, 0.5]],
        B=[[1.0], [0.5]],
        C1=np.eye(2),
        C2=np.eye(2),
        w_support=[0.02, 0.02],
        zeta_support=[0.02, 0.02],
        eta_support=[0.03, 0.03],
    )


@pytest.fixture(scope="session")
def small_ctl(small_model):
    return design_or_validate_gains(small_model, e_support=[1.0])


def random_stable_system(rng: np.random.Generator, p: int, q: int, m: int) -> PlantModel:
    """Random detectable/stabilizable system with bounded uniform noise."""
    for _ in range(50):
        A = rng.uniform(-1.0, 1.0, size=(p, p))
        radius = np.max(np.abs(np.linalg.eigvals(A)))
        A = A * (rng.uniform(0.3, 0.95) / max(radius, 1e-6))
        B = rng.uniform(-1.0, 1.0, size=(p, q))
        C = rng.uniform(-1.0, 1.0, size=(m, p))
        zeta = rng.uniform(0.005, 0.02, size=m)
        model = PlantModel(
            A=A, B=B, C1=C, C2=C.copy(),
            w_support=rng.uniform(0.005, 0.02, size=p),
            zeta_support=zeta,
            eta_support=zeta * rng.uniform(1.0, 2.0),
        )
        try:
            design_or_validate_gains(model, e_support=np.full(q, 1.0))
        except Exception:
            continue
        return model
    raise RuntimeError("failed to draw a usable random system")
