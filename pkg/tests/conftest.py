# Файл: tests/conftest.py
"""Общие фикстуры: двухэлементное множество действий, таблица из 10 периодов, правила."""
import pytest

from src.calibeat_engine.procedures import replay_example_1
from src.calibeat_engine.scoring import make_quadratic, make_spherical, make_step_rule
from src.calibeat_engine.simplex import ActionSet


@pytest.fixture
def binary():
    return ActionSet.binary()


@pytest.fixture
def example1():
    return replay_example_1()


@pytest.fixture
def quadratic(binary):
    return make_quadratic(binary)


@pytest.fixture
def spherical2(binary):
    return make_spherical(binary, 2)


@pytest.fixture
def step(binary):
    return make_step_rule(binary)
