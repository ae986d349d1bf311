import csv
import json

import numpy as np
import pytest

from latpaint import bench
from latpaint.bench import BenchConfig, drifting_sequence, run_benchmark
from latpaint.generators import BlobGenerator, BlobGeneratorSpec
from latpaint.optim import OptimConfig

TINY = BenchConfig(
    n_images=3, n_sequences=2, sequence_length=6, n_pseudo=3, pseudo_length=3, pool_size=20,
    blob=BlobGeneratorSpec(n_blobs=1, height=12, width=12, sigma_min=2.0, sigma_max=5.0, amp_max=1.5),
    optim=OptimConfig(max_iters=60),
)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_planted_case_pool_not_slower():
    cfg = BenchConfig(**{**TINY.__dict__, "n_images": 1, "planted": True, "families": ("image",)})
    (row,) = run_benchmark(cfg)["rows"]["image"]
    assert row["pool_index"] == cfg.pool_size
    assert row["iters_pool"] <= row["iters_random"]


def test_reports_and_medians(tmp_path):
    summary = run_benchmark(TINY, tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["image.csv", "pseudo.csv", "summary.json", "video.csv"]
    rows = read_csv(tmp_path / "image.csv")
    assert len(rows) == 3
    speedups = [float(r["speedup"]) for r in rows]
    assert summary["image"]["speedup"]["median"] == float(np.median(speedups))
    for r in rows:
        assert float(r["speedup"]) == int(r["iters_random"]) / max(int(r["iters_pool"]), 1)
    vid = read_csv(tmp_path / "video.csv")
    assert len(vid) == 2 * 6 * 3
    indep = [int(r["iterations"]) for r in vid if r["mode"] == "independent"]
    assert summary["video"]["independent_iters"]["median"] == float(np.median(indep))
    ps = read_csv(tmp_path / "pseudo.csv")
    etas = [float(r["eta"]) for r in ps if r["mode"] == "reuse+group"]
    assert summary["pseudo"]["eta_reuse+group"]["median"] == float(np.median(etas))
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["config"] == TINY.to_dict()
    assert on_disk["failures"] == []


def test_identical_seed_identical_bytes(tmp_path):
    cfg = BenchConfig(**{**TINY.__dict__, "families": ("image", "pseudo")})
    run_benchmark(cfg, tmp_path / "a")
    run_benchmark(cfg, tmp_path / "b")
    for name in ("image.csv", "pseudo.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_worker_count_does_not_change_report(tmp_path):
    cfg = BenchConfig(**{**TINY.__dict__, "families": ("image",)})
    run_benchmark(cfg, tmp_path / "one")
    run_benchmark(BenchConfig(**{**cfg.__dict__, "workers": 2}), tmp_path / "two")
    assert (tmp_path / "one" / "image.csv").read_bytes() == (tmp_path / "two" / "image.csv").read_bytes()


def test_failed_case_is_isolated(monkeypatch):
    original = bench.image_case

    def flaky(setup, i):
        if i == 1:
            raise RuntimeError("boom")
        return original(setup, i)

    monkeypatch.setitem(bench._FAMILIES, "image", flaky)
    summary = run_benchmark(BenchConfig(**{**TINY.__dict__, "families": ("image",)}))
    assert [r["case"] for r in summary["rows"]["image"]] == [0, 2]
    assert summary["failures"] == [{"family": "image", "case": 1, "error": "RuntimeError: boom"}]


def test_config_round_trip_and_strictness():
    assert BenchConfig.from_dict(TINY.to_dict()) == TINY
    with pytest.raises(ValueError, match="unknown"):
        BenchConfig.from_dict({"seeds": 3})
    with pytest.raises(ValueError, match="optim"):
        BenchConfig.from_dict({"optim": {"learning_rate": 0.1}})
    with pytest.raises(ValueError):
        run_benchmark(BenchConfig(families=("audio",)))


def test_drifting_sequence_steps_are_bounded():
    G = BlobGenerator(TINY.blob)
    frames = drifting_sequence(G, 8, 0.02, 0.25, np.random.default_rng(0))
    assert len(frames) == 8
    diffs = [np.abs(a[0] - b[0]).max() for a, b in zip(frames, frames[1:])]
    assert max(diffs) < 0.5
