import os
import sys

# Pin BLAS threading before numpy loads so deterministic-mode runs are
# reproducible regardless of host core count.
os.environ.setdefault("OMP_NUM_THREADS", "4")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "4")
os.environ.setdefault("MKL_NUM_THREADS", "4")

sys.path.insert(0, os.path.dirname(__file__))
