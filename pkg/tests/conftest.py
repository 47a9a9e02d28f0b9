from __future__ import annotations

from pathlib import Path

import pytest

from ealgebra import parse_program_file, load_state

PROGRAMS = Path(__file__).resolve().parent.parent / "programs"


def load_program(name: str):
    return parse_program_file(PROGRAMS / name)


def load_initial(state_name: str, target):
    return load_state(PROGRAMS / state_name, target.vocabulary, constants=target.constants)


@pytest.fixture(scope="session")
def tree_program():
    return load_program("tree.ea")


@pytest.fixture(scope="session")
def tree_state(tree_program):
    return load_initial("tree3.east", tree_program)


@pytest.fixture(scope="session")
def philosophers():
    return load_program("philosophers.ea")


@pytest.fixture(scope="session")
def ring3(philosophers):
    return load_initial("ring3.east", philosophers)


@pytest.fixture(scope="session")
def philosophers4():
    return load_program("philosophers4.ea")


@pytest.fixture(scope="session")
def ring4(philosophers4):
    return load_initial("ring4.east", philosophers4)


@pytest.fixture(scope="session")
def sendrecv():
    return load_program("sendrecv.ea")


@pytest.fixture(scope="session")
def sendrecv_state(sendrecv):
    return load_initial("sendrecv.east", sendrecv)


@pytest.fixture(scope="session")
def choosedemo():
    return load_program("choosedemo.ea")


@pytest.fixture(scope="session")
def choosedemo_state(choosedemo):
    return load_initial("choosedemo.east", choosedemo)
