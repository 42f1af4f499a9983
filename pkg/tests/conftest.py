import json
from pathlib import Path

import pytest

from tabsem import RawTable, SemanticJson, sanitize, whitespace_tokenizer

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def ws():
    return whitespace_tokenizer()


@pytest.fixture(scope="session")
def gum_raw():
    return RawTable(id="gum_use", html=(FIXTURES / "gum_use.html").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def gum_clean(gum_raw):
    return sanitize(gum_raw)


@pytest.fixture(scope="session")
def gum_gt():
    return SemanticJson.from_text((FIXTURES / "gum_use.gt.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def gum_pred():
    return SemanticJson.from_text((FIXTURES / "gum_use.pred.json").read_text(encoding="utf-8"))


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def load_json(name: str):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))
