import os

# single-core numerics: keep BLAS thread pools from oversubscribing the box
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
