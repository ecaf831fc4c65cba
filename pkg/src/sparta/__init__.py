"""Mini-compiler and execution engine for mixed sparse/dense tensor algebra.

Pipeline: a small Einstein-notation language parses to an AST (:mod:`.dsl`),
lowers to a tensor-algebra module (:mod:`.ir`), compiles each product to a
loop nest driven by per-dimension storage attributes (:mod:`.codegen`), and
executes sequentially or task-parallel (:mod:`.engine`). Storage formats
(COO/CSR/DCSR/CSF/Mode-Generic) live in :mod:`.storage`, file ingestion in
:mod:`.ingest`, and locality reordering in :mod:`.reorder`.
"""

from .storage import CooTensor, FormatAttr, SpTensor, compress, decompress, preset_attrs
from .engine import Binding, ExecConfig, dense_oracle, run, run_program

__version__ = "0.1.0"

__all__ = [
    "CooTensor", "FormatAttr", "SpTensor", "compress", "decompress", "preset_attrs",
    "Binding", "ExecConfig", "dense_oracle", "run", "run_program",
    "__version__",
]
