"""
The experiment runner
=====================

Every experiment is also a ``rplif`` command. Each run writes CSV or JSON
artifacts plus a manifest with their SHA-256 hashes, so repeated runs can be
compared byte for byte. This script drives the commands in-process on the
synthetic Poisson task.
"""
import json
import tempfile
from pathlib import Path

from rplif.cli import main

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    config = tmp / "poisson.json"
    config.write_text(json.dumps({
        "data": {"kind": "poisson"},
        "model": {"layer_sizes": [20, 16, 2]},
        "train": {"epochs": 2},
    }))

    main(["trace", "--currents", "1.2,1.2,1.2", "--out", str(tmp / "trace")])
    print((tmp / "trace" / "trace.csv").read_text())

    main(["ablate-alpha", "--config", str(config), "--out", str(tmp / "alpha")])
    print((tmp / "alpha" / "ablate_alpha.csv").read_text())

    manifest = json.loads((tmp / "alpha" / "manifest.json").read_text())
    print("manifest artifacts:", manifest["artifacts"])
