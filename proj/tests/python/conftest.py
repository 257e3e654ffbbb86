import os
import shutil

import pytest

import ikk


@pytest.fixture(scope="session")
def bases():
    return ikk.identify_session(ikk.synthesize_calibration(seed=42))


@pytest.fixture(scope="session")
def volume(bases):
    return ikk.build_volume(bases)


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("IKK_CLI") or shutil.which("ikk")
    if not path:
        pytest.skip("ikk executable not available")
    return path
