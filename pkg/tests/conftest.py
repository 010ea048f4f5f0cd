import numpy as np
import pytest

from skidsteer.dataset import (
    SimScenario,
    driving_profile,
    excitation_profile,
    simulate,
    synchronize,
)
from skidsteer.models import ChassisGeometry, ExtendedDDSymmetric

# trained snow-terrain values for the symmetric extended model
SNOW_ALPHA, SNOW_B_HAT = 0.86, 3.08
SLIPPERY_NOISE = (0.05, 0.02, 0.05)


@pytest.fixture(scope="session")
def geometry():
    return ChassisGeometry(r=0.3, b=1.2)


@pytest.fixture(scope="session")
def rich_profile():
    return excitation_profile(600.0, 5.0, seed=1)


def make_traj(model, profile, noise=(0.0, 0.0, 0.0), seed=0, **kw):
    cmds, poses = simulate(SimScenario(model, profile, noise, rng_seed=seed, **kw))
    return synchronize(cmds, poses)


@pytest.fixture(scope="session")
def slippery(geometry):
    """Noisy snow-like trajectories: rich excitation for training, forward driving for evaluation."""
    truth = ExtendedDDSymmetric(geometry, SNOW_ALPHA, SNOW_B_HAT)
    train = make_traj(truth, excitation_profile(300.0, 5.0, seed=11), SLIPPERY_NOISE, seed=101)
    evaluation = make_traj(truth, driving_profile(300.0, 5.0, seed=12), SLIPPERY_NOISE, seed=202)
    return truth, train, evaluation


def random_commands(n, seed, limit=5.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-limit, limit, size=(n, 2))


# acceptance verdicts, printed as one line per criterion at the end of the run
VERDICTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[number])
