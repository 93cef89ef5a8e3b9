"""Recurrent TD3 variants on a disturbed pendulum swing-up task.

The package is organised around six parts: a float64 network substrate with
exact BPTT (`nn`), the pendulum dynamics (`pendulum`), observation
disturbance generators (`disturbances`), a history-aware replay buffer
(`replay`), the five agent variants (`agents`), and the training /
evaluation / benchmarking harness (`harness`) with a CLI front end (`cli`).
"""

import os

# Small-matrix BLAS calls are badly hurt by thread fan-out on this class of
# workload; pin to one thread unless the user already chose otherwise.  Must
# happen before numpy first loads its BLAS, so keep this at the top of the
# package and import numpy only afterwards.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
del _var

__version__ = "0.1.0"
