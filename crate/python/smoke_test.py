#!/usr/bin/env python3
"""End-to-end smoke test for the gmixer Python bindings.

Build the extension module first:

    cargo build --release -p gmixer-py

then run this script from anywhere:

    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_gmixer():
    """Stage the built cdylib under the importable name `gmixer`."""
    candidates = [
        REPO / "target" / "release" / "libgmixer.so",
        REPO / "target" / "debug" / "libgmixer.so",
        REPO / "target" / "release" / "libgmixer.dylib",
        REPO / "target" / "debug" / "libgmixer.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("error: build the module first: cargo build --release -p gmixer-py")
    stage = Path(tempfile.mkdtemp(prefix="gmixer_py_"))
    # CPython loads extension modules from .so on both Linux and macOS
    shutil.copy2(built, stage / "gmixer.so")
    sys.path.insert(0, str(stage))
    import gmixer  # noqa: E402

    return gmixer


def main():
    gmixer = import_gmixer()
    tmp = Path(tempfile.mkdtemp(prefix="gmixer_smoke_"))
    print(f"staging under {tmp}")

    # -- graphs and dataset round trip ------------------------------------
    graphs = gmixer.generate_dataset(160, seed=42)
    assert len(graphs) == 160
    assert all(9 <= g.node_count() <= 37 for g in graphs)
    raw = tmp / "subset.jsonl"
    gmixer.write_jsonl(raw, graphs)
    back = gmixer.load_jsonl(raw)
    assert [g.atoms for g in back] == [g.atoms for g in graphs]
    print(f"dataset round trip ok ({len(back)} graphs)")

    g = gmixer.Graph(atoms=[0, 1, 2], bonds=[(0, 1, 0), (1, 2, 1)], y=-1.5)
    assert g.degrees() == [1, 2, 1]
    try:
        gmixer.Graph(atoms=[0, 1], bonds=[(0, 5, 0)], y=0.0)
    except ValueError as e:
        assert "out of range" in str(e)
    else:
        sys.exit("invalid bond was accepted")

    # -- degree statistics and the scaler ----------------------------------
    stats = gmixer.degree_stats([g])
    expected_delta = (math.log(2) + math.log(3) + math.log(2)) / 3
    assert abs(stats["delta"] - expected_delta) < 1e-12
    s_up = gmixer.degree_scaler(2, 1, stats["delta"])
    s_down = gmixer.degree_scaler(2, -1, stats["delta"])
    assert abs(s_up * s_down - 1.0) < 1e-12
    assert gmixer.degree_scaler(5, 0, stats["delta"]) == 1.0
    print(f"degree scaler ok (delta={stats['delta']:.4f}, S+ = {s_up:.4f})")

    # -- prep / train / eval ------------------------------------------------
    data_dir = tmp / "data"
    side = gmixer.prep(raw, data_dir, seed=7)
    assert side["counts"] == [128, 16, 16]
    summary = gmixer.train(
        data_dir,
        tmp / "run",
        options={"max_epochs": 4, "k_layers": 2, "d": 16, "d_e": 8,
                 "token_hidden": 8, "channel_hidden": 16, "readout_hidden": 8},
    )
    print(
        f"trained {summary['epochs_run']} epochs: "
        f"train_mae={summary['train_mae']:.4f} best_val={summary['best_val_mae']:.4f}"
    )
    losses = summary["train_loss_history"]
    assert losses[-1] < losses[0], "loss should move"

    mae = gmixer.evaluate_checkpoint(tmp / "run" / "best.ckpt", data_dir / "test.jsonl")
    assert math.isfinite(mae)
    assert (tmp / "run" / "metrics.csv").exists()
    print(f"checkpoint eval ok (test mae {mae:.4f})")

    model = gmixer.Model.load(tmp / "run" / "best.ckpt")
    prepared = gmixer.load_jsonl(data_dir / "test.jsonl")
    preds = model.predict(prepared)
    assert len(preds) == len(prepared)
    direct = sum(abs(p - g.y) for p, g in zip(preds, prepared)) / len(preds)
    assert abs(direct - mae) < 1e-12
    print(f"model {model!r} predictions consistent with evaluate")

    # -- gradient check -----------------------------------------------------
    report = gmixer.check_gradients(seed=3, nodes=5, probes=60)
    assert report["max_relative_error"] < 1e-4, report
    print(f"gradient check ok (max rel err {report['max_relative_error']:.2e})")

    print("smoke test passed")


if __name__ == "__main__":
    main()
