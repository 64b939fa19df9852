import dataclasses

import pytest

from sar_atr.harness.config import DataSpec, ExperimentConfig
from sar_atr.harness.dataset import generate_dataset, load_dataset


# criterion number -> (status, detail), filled by the acceptance suite
CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        status, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")


@pytest.fixture
def criterion():
    """``criterion(n, passed, detail, soft=False)`` records and prints one result line."""
    def record(number: int, passed: bool, detail: str, soft: bool = False):
        status = "PASS" if passed else ("WARN" if soft else "FAIL")
        CRITERIA[number] = (status, detail)
        print(f"criterion {number}: {status}  {detail}")
    return record


def small_config(num_targets=8, images_per_target=6, seed=0) -> ExperimentConfig:
    data = DataSpec(num_targets=num_targets, images_per_target=images_per_target, seed=seed)
    return dataclasses.replace(ExperimentConfig(), data=data)


@pytest.fixture(scope="session")
def small_dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("small") / "data"
    generate_dataset(small_config(), out)
    return out


@pytest.fixture(scope="session")
def small_dataset(small_dataset_dir):
    return load_dataset(small_dataset_dir)
