import pathlib

import pytest

from pgfkit import lang

PROGRAMS = pathlib.Path(__file__).parent / "programs"


def load(name: str) -> lang.Program:
    return lang.parse((PROGRAMS / name).read_text())


@pytest.fixture
def programs_dir():
    return PROGRAMS
