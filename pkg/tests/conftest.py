from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from asp.affordance import SimAffordanceBackend
from asp.semantics import MockEmbeddingProvider, MockRelevanceClassifier
from asp.sim import SimWorld, generate_scene
from asp.skills import MockGraspProposer, SimMotionChecker
from asp.tools import Backends, ToolConfig, ToolLayer

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def sim_backends(**aff) -> Backends:
    return Backends(MockEmbeddingProvider(), MockRelevanceClassifier(),
                    SimAffordanceBackend(**aff), MockGraspProposer(), SimMotionChecker())


def make_layer(template: str, seed: int = 0, no_aff: bool = False, checker=None):
    spec = generate_scene(template, seed)
    world = SimWorld(spec, seed=seed)
    backends = sim_backends()
    if checker is not None:
        backends.checker = checker
    layer = ToolLayer(world, backends, ToolConfig(mode=spec.mode, no_aff=no_aff))
    return spec, world, layer


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def embedder():
    return MockEmbeddingProvider()


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    report = getattr(mod, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for n in sorted(report):
            terminalreporter.write_line(report[n])
