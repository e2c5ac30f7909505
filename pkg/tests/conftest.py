from importlib import resources

import pytest

from naseval import oracle
from naseval.supernet import TaskSpec, TrainConfig


@pytest.fixture(scope="session")
def bundled_path():
    return resources.files("naseval") / "data" / "rnn2_ground_truth.jsonl"


@pytest.fixture(scope="session")
def bundled_table(bundled_path):
    return oracle.load(bundled_path)


@pytest.fixture(scope="session")
def small_task():
    return TaskSpec(vocab_size=6, sequence_length=8, train_size=64, valid_size=32, test_size=32, seed=3)


@pytest.fixture(scope="session")
def small_config():
    return TrainConfig(hidden_size=6, embedding_size=4, epochs=3, ws_epochs=3, batch_size=16, eval_every=1)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
