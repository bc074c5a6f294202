from dataclasses import replace

import pytest
from acceptance_log import LINES as ACCEPTANCE_LINES

from exoemg.device import ExotendonDevice
from exoemg.forest import ForestHyperparams, train_forest
from exoemg.subject import SyntheticSubject, default_profiles
from exoemg.trainer import default_schedule, run_protocol, training_pairs



@pytest.fixture(scope="session")
def profiles():
    return default_profiles()


@pytest.fixture(scope="session")
def separable_training(profiles):
    subject = SyntheticSubject(replace(profiles["separable"], rng_seed=11))
    return run_protocol(subject, ExotendonDevice(), default_schedule())


@pytest.fixture(scope="session")
def separable_model(separable_training):
    return train_forest(training_pairs(separable_training), ForestHyperparams(rng_seed=5))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[0][2:])):
            terminalreporter.write_line(line)
