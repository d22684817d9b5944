import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from apcalc.network import Dataset, EstimatorConfig  # noqa: E402
from apcalc.synth import net_a, net_d  # noqa: E402


@pytest.fixture
def neta():
    return net_a()


@pytest.fixture
def netd():
    return net_d()


@pytest.fixture
def origin():
    return Dataset(np.zeros((1, 2)))


@pytest.fixture
def cfg():
    return EstimatorConfig(samples_per_point=2000, seed=11)
