import pytest

from gatekeeper import (
    EconomicParams,
    GeneratorConfig,
    ProblemInstance,
    ResolutionProfile,
    TrafficParams,
    generate_instance,
    rules_table,
)
from gatekeeper.model import rng_stream


@pytest.fixture
def saturated_two_attempt():
    """S=2 instance at full saturation (q = a = 1) with known closed forms."""
    return ProblemInstance(
        profile=ResolutionProfile((6, 15), (0.7, 1.0)),
        econ=EconomicParams(r=20.0, c_w=2.0, c_c=5.0, tau_w=3),
        traffic=TrafficParams(q=1.0, a=1.0),
    )


@pytest.fixture
def single_attempt():
    """S=1 instance: renewal cycle = one service period plus geometric idle."""
    return ProblemInstance(
        profile=ResolutionProfile((1,), (1.0,)),
        econ=EconomicParams(r=20.0, c_w=1.0, c_c=2.0, tau_w=1),
        traffic=TrafficParams(q=0.5, a=0.5),
    )


def random_instance(seed: int, S: int) -> ProblemInstance:
    return generate_instance(GeneratorConfig(seed=seed, S=S))


def random_policy(seed: int, S: int, labels=None):
    """Uniformly random per-attempt rules drawn from the admissible table."""
    rng = rng_stream(seed, stream=17)
    table = list(rules_table().values())
    if labels is not None:
        table = [r for r in table if r.label in labels]
    idx = rng.integers(0, len(table), size=S - 1)
    from gatekeeper import StationaryPolicy

    return StationaryPolicy(tuple(table[i] for i in idx))
