import os
import sys

# thread count for the BLAS backends; must be set before numpy is imported
_threads = os.environ.get("ALPHALAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from alphalab.cli import main  # noqa: E402

sys.exit(main())
