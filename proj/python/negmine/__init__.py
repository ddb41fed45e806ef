"""Two-phase nodule detection with pseudo-negative mining.

Thin bindings over the C++ core. Training and full experiments run through
``run_cli``, which accepts the same arguments as the ``negmine`` tool.
"""

from ._core import (
    Model,
    connected_components,
    count_macs,
    equalize_histogram,
    froc_point,
    generate_dataset,
    operating_point,
    run_cli,
    version,
)

__version__ = version()

__all__ = [
    "Model",
    "connected_components",
    "count_macs",
    "equalize_histogram",
    "froc_point",
    "generate_dataset",
    "operating_point",
    "run_cli",
    "version",
]
