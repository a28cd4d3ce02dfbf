import numpy as np
import pytest

from dualview_tkg.data import SnapshotSequence, TKGDataset, Vocabulary, dedupe


def random_facts(rng, num_entities, num_relations, num_timestamps, per_step):
    rows = [
        (int(rng.integers(num_entities)), int(rng.integers(num_relations)), int(rng.integers(num_entities)), t)
        for t in range(num_timestamps)
        for _ in range(per_step)
    ]
    return dedupe(np.array(rows, dtype=np.int64).reshape(-1, 4))


def split_dataset(facts, num_entities, num_relations, train_end, valid_end):
    t = facts[:, 3]
    return TKGDataset(
        Vocabulary.anonymous(num_entities, num_relations),
        SnapshotSequence.from_facts(facts[t < train_end]),
        SnapshotSequence.from_facts(facts[(t >= train_end) & (t < valid_end)]),
        SnapshotSequence.from_facts(facts[t >= valid_end]),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_facts():
    """5 entities, 3 relations, 6 timestamps."""
    return random_facts(np.random.default_rng(3), 5, 3, 6, 4)


@pytest.fixture
def toy_dataset(toy_facts):
    return split_dataset(toy_facts, 5, 3, 4, 5)


CRITERIA: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    status = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
    CRITERIA.setdefault(number, (title, []))[1].append(status)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        title, statuses = CRITERIA[number]
        if "FAIL" in statuses:
            verdict = "FAIL"
        elif "PASS" in statuses:
            verdict = "PASS"
        else:
            verdict = "SKIP"
        terminalreporter.write_line(f"criterion {number} [{title}]: {verdict}")
