"""Small eps sweep for the equilateral wells, printing the convergence table.

Runs the full pipeline at n=128 on eps = 0.2, 0.1 (a couple of minutes on one
core) and writes every artifact to ``./sweep-demo``.  Use the CLI with the
default config for the n=256 ladder.
"""
import json
import sys
from pathlib import Path

from tripoint.pipeline import Pipeline, RunConfig

out = Path(sys.argv[1] if len(sys.argv) > 1 else "sweep-demo")
cfg = RunConfig(n=128, eps=[0.2, 0.1], out=str(out))
p = Pipeline(cfg)
report = p.report()
p.write_manifest()

print((out / "convergence.csv").read_text())
print(json.dumps(report, indent=2))
