"""Shared fixtures: phantom corpora at two scales plus trained checkpoints.

Session-scoped fixtures are read-only for the tests that consume them; any
test that mutates corpus files must build its own copy.
"""

from __future__ import annotations

import re

import pytest

from retinalizer.config import CorpusConfig, EvalConfig, ModelConfig, TaskParams, TrainConfig
from retinalizer.corpus import DatasetPool, build_phantom_corpus, load_corpus
from retinalizer.network import init_model, save_checkpoint
from retinalizer.taskgen import enumerate_tasks

SMALL_SEED = 11
FULL_SEED = 0


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    """32x32 corpus, 20 samples per dataset: cheap enough for unit tests."""
    out = tmp_path_factory.mktemp("corpus32")
    cfg = CorpusConfig(image_size=32, samples_per_dataset=20)
    build_phantom_corpus(cfg, SMALL_SEED, out)
    return out


@pytest.fixture(scope="session")
def small_pool(small_corpus_dir):
    return DatasetPool(load_corpus(small_corpus_dir))


@pytest.fixture(scope="session")
def small_tasks(small_pool):
    return enumerate_tasks(small_pool)


@pytest.fixture(scope="session")
def small_model_cfg():
    return ModelConfig(levels=2, base_channels=8, image_size=32)


@pytest.fixture(scope="session")
def small_ckpt(tmp_path_factory, small_model_cfg):
    """An untrained (but loadable) checkpoint for contract-level tests."""
    path = tmp_path_factory.mktemp("ckpt") / "untrained.ckpt"
    model = init_model(small_model_cfg, seed=3)
    save_checkpoint(model, path, extra={"run_name": "untrained", "step": 0})
    return path


@pytest.fixture(scope="session")
def full_corpus_dir(tmp_path_factory):
    """Default-scale corpus (64x64, 48 samples per dataset) for acceptance."""
    out = tmp_path_factory.mktemp("corpus64")
    build_phantom_corpus(CorpusConfig(), FULL_SEED, out)
    return out


@pytest.fixture(scope="session")
def full_pool(full_corpus_dir):
    return DatasetPool(load_corpus(full_corpus_dir))


@pytest.fixture(scope="session")
def full_tasks(full_pool):
    return enumerate_tasks(full_pool)


@pytest.fixture()
def default_params():
    return TaskParams()


@pytest.fixture()
def default_train_cfg():
    return TrainConfig()


@pytest.fixture()
def default_eval_cfg():
    return EvalConfig()


# ---------------------------------------------------------------------------
# acceptance-criteria terminal summary: one PASS/FAIL line per criterion

_CRITERION_RE = re.compile(r"test_criterion_(\d+)_(\w+)")


_VERDICT_RANK = {"PASS": 0, "SKIP": 1, "FAIL": 2}


def pytest_terminal_summary(terminalreporter):
    results: dict[int, tuple[str, str]] = {}
    for status, verdict in (("passed", "PASS"), ("skipped", "SKIP"),
                            ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            match = _CRITERION_RE.search(getattr(report, "nodeid", ""))
            if not match:
                continue
            num, name = int(match.group(1)), match.group(2)
            # a criterion spread over several tests fails if any part fails
            prev = results.get(num)
            if prev is None or _VERDICT_RANK[verdict] > _VERDICT_RANK[prev[1]]:
                results[num] = (name, verdict)
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(results):
        name, verdict = results[num]
        terminalreporter.write_line(f"criterion {num:2d} {name:<28s} {verdict}")
