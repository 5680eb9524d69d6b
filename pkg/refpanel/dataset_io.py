"""Binary dataset files.

Layout: a little-endian header ``<5s B I I I I Q`` holding the magic ``AMPR1``, the covariance kind code,
p, n_x, n_w, n_s and the seed, followed by float64 arrays in a fixed order. Spectrum covariances append their p
eigenvalues and dense ones their p x p matrix.
"""

import logging
import struct
from pathlib import Path

import numpy as np

from refpanel.covariance import CovarianceKind, CovarianceModel
from refpanel.errors import DatasetFormatError
from refpanel.lab import SyntheticDataset

logger = logging.getLogger(__name__)

MAGIC = b"AMPR1"
HEADER = struct.Struct("<5sBIIIIQ")
KIND_CODES = {CovarianceKind.IDENTITY: 0, CovarianceKind.SPECTRUM: 1, CovarianceKind.DENSE: 2}


def _layout(p: int, n_x: int, n_w: int, n_s: int) -> list[tuple[str, tuple[int, ...]]]:
    return [
        ("beta0", (p,)),
        ("X", (n_x, p)),
        ("W", (n_w, p)),
        ("S", (n_s, p)),
        ("y_x", (n_x,)),
        ("y_s", (n_s,)),
        ("eps_x", (n_x,)),
        ("eps_s", (n_s,)),
    ]


def save_dataset(path: str | Path, dataset: SyntheticDataset) -> Path:
    path = Path(path)
    sigma = dataset.sigma
    header = HEADER.pack(MAGIC, KIND_CODES[sigma.kind], dataset.p, dataset.n_x, dataset.n_w, dataset.n_s, dataset.seed)
    with path.open("wb") as fh:
        fh.write(header)
        for name, shape in _layout(dataset.p, dataset.n_x, dataset.n_w, dataset.n_s):
            array = np.ascontiguousarray(getattr(dataset, name), dtype="<f8")
            if array.shape != shape:
                raise DatasetFormatError(f"{name} has shape {array.shape}, expected {shape}")
            fh.write(array.tobytes())
        if sigma.kind is CovarianceKind.SPECTRUM:
            fh.write(np.ascontiguousarray(sigma.spectrum_at(dataset.p), dtype="<f8").tobytes())
        elif sigma.kind is CovarianceKind.DENSE:
            fh.write(np.ascontiguousarray(sigma.matrix, dtype="<f8").tobytes())
    logger.debug(f"wrote dataset p={dataset.p} seed={dataset.seed} to {path}")
    return path


def load_dataset(path: str | Path) -> SyntheticDataset:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise DatasetFormatError(f"{path}: file is shorter than the header")
    magic, kind_code, p, n_x, n_w, n_s, seed = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    kinds = {code: kind for kind, code in KIND_CODES.items()}
    if kind_code not in kinds:
        raise DatasetFormatError(f"{path}: unknown covariance code {kind_code}")
    kind = kinds[kind_code]

    layout = _layout(p, n_x, n_w, n_s)
    if kind is CovarianceKind.SPECTRUM:
        layout.append(("sigma", (p,)))
    elif kind is CovarianceKind.DENSE:
        layout.append(("sigma", (p, p)))
    expected = HEADER.size + 8 * sum(int(np.prod(shape)) for _, shape in layout)
    if len(data) != expected:
        raise DatasetFormatError(f"{path}: expected {expected} bytes, found {len(data)}")

    arrays = {}
    offset = HEADER.size
    for name, shape in layout:
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float)
        offset += 8 * count

    match kind:
        case CovarianceKind.IDENTITY:
            sigma = CovarianceModel.identity(p)
        case CovarianceKind.SPECTRUM:
            sigma = CovarianceModel.spectrum(arrays.pop("sigma"))
        case CovarianceKind.DENSE:
            sigma = CovarianceModel.dense(arrays.pop("sigma"))
    return SyntheticDataset(sigma=sigma, seed=seed, **arrays)
