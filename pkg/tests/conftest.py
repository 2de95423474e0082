import hypothesis
import numpy as np
import pytest

from chaotrack.model import ModelConfig, init_params

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def tiny_config():
    return ModelConfig(
        n_locations=2,
        window=3,
        dlc_hidden=(6, 5),
        itc_encoder_hidden=(5,),
        latent_dim=3,
        itc_decoder_hidden=(4,),
        seed=7,
    )


def jittered_params(config, seed, scale=0.1):
    """Init params plus random bias/weight noise, so no gradient is structurally zero."""
    params = init_params(config)
    rng = np.random.default_rng(seed)
    vec = params.flat()
    return params.with_flat(config, vec + scale * rng.standard_normal(vec.size))


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records a PASS/FAIL line, then asserts ``ok``."""

    def check(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
