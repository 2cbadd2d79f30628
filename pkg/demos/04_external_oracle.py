"""
Driving an external simulator
=============================

Any program that reads one JSON request per line on stdin and answers
``{"id": ..., "y": ...}`` can serve as the oracle. Here the package's own
salt oracle plays the simulator, launched as a subprocess.
"""
import sys

import numpy as np

from gpactive import loop, sampling
from gpactive.chemistry.external import ExternalOracle
from gpactive.chemistry.oracles import salt_oracle_2d

command = [sys.executable, "-m", "gpactive", "oracle", "salt_2d", "--serve"]
grid = sampling.regular_grid(2, 60)

with ExternalOracle(command, timeout=30) as remote:
    _, trace = loop.run(remote, grid, loop.LoopConfig(max_iterations=30, seed=1))
    print(f"{remote.round_trips} requests sent for {len(trace.records)} evaluations")

# The subprocess answers must match the in-process oracle exactly.
worst = max(abs(rec.y - salt_oracle_2d(rec.x)) for rec in trace.records)
print(f"largest difference from the in-process oracle: {worst:.1e}")
print("final V:", f"{trace.records[-1].V:.3e}")
print("last five points:", np.round([rec.x for rec in trace.records[-5:]], 3).tolist())
