import numpy as np
import pytest

from sparta.storage import CooTensor


@pytest.fixture
def m4() -> CooTensor:
    """4x4 matrix with nonzeros (0,0)=1, (0,3)=2, (2,0)=3, (2,2)=4."""
    return CooTensor.from_entries(
        (4, 4), [(0, 0), (0, 3), (2, 0), (2, 2)], [1.0, 2.0, 3.0, 4.0])


def random_coo(rng: np.random.Generator, shape, density: float) -> CooTensor:
    """Random tensor with nonzero values drawn away from 0 so round trips are exact."""
    total = int(np.prod(shape))
    nnz = int(round(density * total))
    flat = rng.choice(total, size=nnz, replace=False) if nnz else np.zeros(0, dtype=np.int64)
    coords = np.column_stack(np.unravel_index(flat, shape)) if nnz else np.zeros((0, len(shape)), dtype=np.int64)
    vals = rng.uniform(0.5, 2.0, size=nnz)
    return CooTensor.from_entries(shape, coords, vals)
