"""
Configuration for pytest - this file is automatically executed on startup.
"""

from pathlib import Path

import pytest

CONFIG_DIR = Path(__file__).parent / "configs"


# Hooks

def pytest_addoption(parser):
    """
    Register custom command-line arguments that can be passed to `pytest`
    """
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Also run tests marked slow (full crystal relaxations of several thousand rf periods)",
    )
    parser.addoption(
        "--configdir",
        default=CONFIG_DIR,
        type=Path,
        help="Directory holding the example run configurations",
    )


def pytest_report_header(config):
    """
    Add extra information to the report header
    """
    return f"--configdir: {config.getoption('configdir').absolute()}, --run-slow: {config.getoption('run_slow')}"


def pytest_collection_modifyitems(config, items):
    if config.getoption("run_slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# Fixtures

@pytest.fixture(scope="session")
def configdir(pytestconfig):
    """
    Fixture to conveniently access the example configuration directory
    """
    return pytestconfig.getoption("configdir")
