import sys

import pytest

from safegen.config import ToolchainConfig, data_path
from safegen.llm_handler import extract_code
from safegen.spec_model import parse_behavior_spec, parse_design_spec
from safegen.static_validation import TestSuite


@pytest.fixture(scope="session")
def design():
    return parse_design_spec(data_path("design_acc.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def behavior():
    return parse_behavior_spec(
        data_path("behavior_acc.yaml").read_text(encoding="utf-8")
    )


@pytest.fixture(scope="session")
def toolchain():
    return ToolchainConfig()


@pytest.fixture(scope="session")
def suite():
    return TestSuite.load(data_path("acc_suite", "manifest.json"))


def _staged_code(index: int) -> str:
    response = (data_path("replay_staged") / f"{index:03d}.txt").read_text(
        encoding="utf-8"
    )
    return extract_code(response).code


@pytest.fixture(scope="session")
def staged_codes():
    """Candidate sources from the staged replay script, in stage order."""
    return {
        "structure": _staged_code(0),
        "compile": _staged_code(1),
        "style": _staged_code(2),
        "unit_test": _staged_code(3),
        "clean": _staged_code(4),
    }


@pytest.fixture(scope="session")
def clean_code(staged_codes):
    return staged_codes["clean"]


@pytest.fixture(scope="session")
def reference_controller_cmd():
    return [sys.executable, "-m", "safegen.reference_controller"]
