import os
import pathlib
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture(scope="session")
def reference_map():
    import regseg

    return pathlib.Path(regseg.__file__).parent / "maps" / "torch_reference.map"


@pytest.fixture(scope="session")
def engine_cli():
    path = os.environ.get("REGSEG_CLI")
    if not path or not os.path.exists(path):
        pytest.skip("REGSEG_CLI not set")
    return path
