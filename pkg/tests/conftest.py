import os

# Pin BLAS threads before numpy is first imported by any test module, both
# for speed on small matrices and so results are stable across runs.
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
