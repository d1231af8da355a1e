import numpy as np
import pytest

from advstego import cnn
from advstego.adversarial import generate_plain_stego, random_message
from advstego.harness import _rng, synth_cover

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_model():
    return cnn.init_model((16, 16), (4, 6, 8), seed=3)


@pytest.fixture(scope="session")
def trained_model_64():
    """Quick 64x64 steganalyzer trained on a few HILL alpha=0.4 pairs."""
    covers = [synth_cover(_rng(77, i), 64) for i in range(40)]
    stegos = [generate_plain_stego(c, random_message(c.size, 0.4, _rng(78, i)), "hill", direction_seed=i)[0]
              for i, c in enumerate(covers)]
    return cnn.train(cnn.TrainConfig(epochs=3, batch_size=16, seed=5), covers, stegos)
