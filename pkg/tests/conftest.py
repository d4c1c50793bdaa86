"""Shared fixtures: a toy-scale task and watermarked models on it.

Everything here runs small (4 labels in 16 dimensions, 20 triggers) so the
unit suite stays fast. The desk-scale configuration is exercised by the
acceptance tests, which also print one summary line per criterion at the
end of the run.
"""

from __future__ import annotations

from types import SimpleNamespace

import pytest

from wmark.data import generate_synthetic
from wmark.nn import TrainConfig
from wmark.watermark import FROM_SCRATCH, KeyParams, VerifyPolicy, mmodel

ACCEPTANCE_LINES: list[str] = []

TINY = SimpleNamespace(
    num_labels=4,
    d=16,
    train_n=240,
    test_n=80,
    noise_sigma=0.1,
    data_seed=7,
    ell=20,
)


def tiny_train_config(seed: int = 3) -> TrainConfig:
    return TrainConfig(
        learning_rate=0.5,
        epochs=40,
        batch_size=12,
        k_trigger_per_batch=4,
        lr_halving_period_epochs=20,
        seed=seed,
    )


@pytest.fixture(scope="session")
def tiny_bundle():
    return generate_synthetic(
        TINY.num_labels, TINY.d, TINY.train_n, TINY.test_n, TINY.noise_sigma, TINY.data_seed
    )


@pytest.fixture(scope="session")
def tiny_policy():
    return VerifyPolicy(epsilon=0.25)


@pytest.fixture(scope="session")
def tiny_marked(tiny_bundle):
    """Unmarked model, FromScratch-marked twin, and the key pair."""
    cfg = tiny_train_config()
    unmarked, marked, mk, vk = mmodel(
        tiny_bundle, cfg, KeyParams(ell=TINY.ell, strategy=FROM_SCRATCH)
    )
    return SimpleNamespace(unmarked=unmarked, marked=marked, mk=mk, vk=vk, cfg=cfg)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
