"""Exception taxonomy shared across the package.

The CLI maps these onto its exit codes: DataError -> 3, NumericError -> 4.
Plain ValueError from contract checks is treated as a data error as well.
"""


class DataError(Exception):
    """Bad or inconsistent on-disk data: missing files, checksum or version
    mismatch, incompatible shapes between a checkpoint and a config."""


class NumericError(Exception):
    """Numerical failure at runtime: non-finite loss, failed gradient check."""


class DegenerateBatchError(NumericError):
    """A loss reduction was requested over an empty set of voxels/cells."""


class GenerationError(DataError):
    """Scene generation got infeasible parameters (e.g. object cannot fit)."""
