import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from fjq.netlist import load_netlist  # noqa: E402

CIRCUITS = Path(__file__).resolve().parent.parent / "circuits"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def circuit(name):
    return load_netlist(CIRCUITS / f"{name}.net")


@pytest.fixture
def circuits_dir():
    return CIRCUITS
