from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from rankmatch import _backend

# one row per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_RESULTS: list[dict] = []


def record_acceptance(number: int, name: str, passed: bool, detail: str,
                      measured: dict | None = None) -> str:
    entry = {"criterion": number, "name": name, "passed": bool(passed), "detail": detail}
    if measured is not None:
        entry["measured"] = measured
    ACCEPTANCE_RESULTS.append(entry)
    line = f"ACCEPTANCE {number}: {name}: {'PASS' if passed else 'FAIL'} ({detail})"
    print(line)
    return line


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance verdicts where output capture cannot hide them and
    archive the measurements next to the test log."""
    if not ACCEPTANCE_RESULTS:
        return
    rows = sorted(ACCEPTANCE_RESULTS, key=lambda e: e["criterion"])
    terminalreporter.section("acceptance criteria")
    for entry in rows:
        status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(
            f"ACCEPTANCE {entry['criterion']}: {entry['name']}: {status} ({entry['detail']})"
        )
    report_path = Path(config.rootpath) / "acceptance_report.json"
    report_path.write_text(json.dumps({"criteria": rows}, indent=2) + "\n")
    terminalreporter.write_line(f"archived -> {report_path}")


@pytest.fixture(params=_backend.available_backends())
def backend(request):
    """Run the test once per loadable kernel backend, restoring the default."""
    previous = _backend.backend_name()
    _backend.activate(request.param)
    yield request.param
    _backend.activate(previous)


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(scope="session")
def small_training_file(tmp_path_factory):
    """60 separable examples per class; enough for a confident tiny model."""
    from synthdata import write_training_file

    path = tmp_path_factory.mktemp("trainfile") / "seed_train.txt"
    return write_training_file(path, n_per_class=60, seed=303)


@pytest.fixture(scope="session")
def small_model(small_training_file):
    """A tiny trained model (dim 16, small bucket table) shared read-only."""
    from rankmatch.classifier import Hyperparams, train, zero_eos

    hp = Hyperparams(dim=16, buckets=4096, epochs=15, lr=0.5, seed=17)
    model = train(small_training_file, hp)
    zero_eos(model)
    return model


@pytest.fixture(scope="session")
def small_model_path(small_model, tmp_path_factory):
    from rankmatch.model_io import save_model

    path = tmp_path_factory.mktemp("model") / "model.bin"
    save_model(small_model, path)
    return path


@pytest.fixture(scope="session")
def filter_shards(tmp_path_factory):
    """600 mixed docs over 3 shards (one gzipped) for filtering tests."""
    from synthdata import make_records, write_shards

    records = make_records(random.Random(404), 600, id_prefix="pool")
    directory = tmp_path_factory.mktemp("filter_corpus")
    return write_shards(directory, records, n_shards=3, compress_last=True)


@pytest.fixture(scope="session")
def demo_corpus(tmp_path_factory):
    """Shards for end-to-end runs: seed pool, filter pool, ladder text."""
    from synthdata import clean_text, make_records, write_shards

    base = tmp_path_factory.mktemp("demo_corpus")
    seed_paths = write_shards(
        base / "seedpool", make_records(random.Random(101), 240, id_prefix="seed"), 2
    )
    pool_paths = write_shards(
        base / "pool",
        make_records(random.Random(202), 400, id_prefix="pool"),
        3,
        compress_last=True,
    )
    rng = random.Random(303)
    ladder_records = [
        {"id": f"ladder-{i}", "text": clean_text(rng, 1500), "url": None}
        for i in range(10)
    ]
    ladder_paths = write_shards(base / "ladder", ladder_records, 1, stem="ladder")
    return {"seed": seed_paths, "pool": pool_paths, "ladder": ladder_paths}


def make_run_config(corpus, run_dir, **overrides):
    """A fast, fully offline end-to-end run config over the demo corpus."""
    config = {
        "run": {"output_dir": str(run_dir), "rng_seed": 7, "workers": 1},
        "seed": {
            "shards": [str(p) for p in corpus["seed"]],
            "top_k_domains": 5,
            "per_domain": 40,
        },
        "ladder": {
            "shards": [str(p) for p in corpus["ladder"]],
            "sizes": [800, 3200, 12800],
            "order": 3,
            "alpha": 0.1,
        },
        "strength": {"bins": 10},
        "seedset": {"pos": 30, "neg": 30},
        "train": {
            "dim": 16,
            "buckets": 4096,
            "epochs": 15,
            "lr": 0.5,
            "threads": 1,
        },
        "filter": {
            "shards": [str(p) for p in corpus["pool"]],
            "fraction": 0.25,
            "report_bins": 8,
        },
    }
    for key, value in overrides.items():
        section, _, name = key.partition(".")
        if name:
            config[section][name] = value
        else:
            config[section] = value
    return config
