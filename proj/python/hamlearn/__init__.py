"""Hamiltonian learning from single-qubit observation time series.

Thin bindings over the C++ core: dataset simulation, multi-stage training,
prediction, decoupled estimation of larger systems and diagnostics.
"""

from ._hamlearn import (
    Dataset,
    Predictor,
    __version__,
    family,
    fidelity,
    generate,
    load_dataset,
    load_predictor,
    mutual_information,
    pcc,
    simulate,
    split,
    train,
    dd_estimate,
)

try:
    from ._hamlearn import run_cli
except ImportError:  # built without the command-line layer
    pass

__all__ = [
    "Dataset",
    "Predictor",
    "family",
    "fidelity",
    "generate",
    "load_dataset",
    "load_predictor",
    "mutual_information",
    "pcc",
    "simulate",
    "split",
    "train",
    "dd_estimate",
    "run_cli",
]
