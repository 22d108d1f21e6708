"""Pin numeric libraries to one thread before numpy is first imported.

The determinism guarantees (bitwise-identical checkpoints and reports
for a fixed seed) are stated for single-threaded execution, so the test
suite runs that way end to end.
"""

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
