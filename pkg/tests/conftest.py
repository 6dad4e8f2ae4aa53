import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def crtt_states():
    """Eight states along a CRTT chain on a 1.5 x 1.5 square."""
    from oracles import chain_states
    from ttessel.models import ExponentialModel

    return chain_states(ExponentialModel.crtt(0.64), 1.5, 8, 500, seed=11)
