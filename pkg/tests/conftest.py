import numpy as np
import pytest

from tna import SeededRng, make_synth_a
from tna.core import LastLayer


@pytest.fixture(scope="session")
def synth_a():
    """The canonical fixture; session-scoped because generation fits a temperature."""
    return make_synth_a()


@pytest.fixture(scope="session")
def small_bundle():
    """A cheap bundle for search/CLI tests (same generator, smaller everything)."""
    return make_synth_a(n=64, m=2_000, num_classes=10)


@pytest.fixture()
def random_layer():
    gen = SeededRng(99).generator
    return LastLayer(weights=gen.standard_normal((48, 6)), bias=gen.standard_normal(6))
