import importlib.resources as resources

import pytest

from concbound.loop_model import parse_loop_spec
from concbound.prr_model import parse_prr_spec


def bench_bytes(name: str) -> bytes:
    return (resources.files("concbound") / "benchmarks" / f"{name}.toml").read_bytes()


def prr(name: str):
    return parse_prr_spec(bench_bytes(name))


def loop(name: str):
    return parse_loop_spec(bench_bytes(name))


@pytest.fixture
def quickselect():
    return prr("quickselect")


@pytest.fixture
def rdwalk1():
    return loop("rdwalk1")
