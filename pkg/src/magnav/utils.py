"""Numerical helpers shared across the navigation modules."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.stats import chi2


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    # Removes the antisymmetric round-off that accumulates in covariance updates
    return 0.5 * (matrix + matrix.T)


def is_psd(matrix: np.ndarray, tol: float = 1e-9) -> bool:
    # Checks symmetry and non-negative spectrum relative to the matrix scale
    matrix = np.asarray(matrix, dtype=float)
    if not np.allclose(matrix, matrix.T, rtol=1e-9, atol=tol):
        return False
    eigenvalues = np.linalg.eigvalsh(symmetrize(matrix))
    scale = max(1.0, float(np.max(np.abs(eigenvalues)))) if eigenvalues.size else 1.0
    return bool(np.all(eigenvalues >= -tol * scale))


def psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root that tolerates singular covariances."""
    eigenvalues, vectors = np.linalg.eigh(symmetrize(matrix))
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    return (vectors * np.sqrt(eigenvalues)) @ vectors.T


def wrap_angle(angle: float) -> float:
    # Maps an angle onto (-pi, pi]
    wrapped = math.remainder(angle, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


def wrap_attitude(roll: float, pitch: float, yaw: float) -> tuple:
    # Keeps roll and yaw in (-pi, pi] and pitch in [-pi/2, pi/2]
    roll, pitch, yaw = wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw)
    if pitch > math.pi / 2:
        pitch, roll, yaw = math.pi - pitch, wrap_angle(roll + math.pi), wrap_angle(yaw + math.pi)
    elif pitch < -math.pi / 2:
        pitch, roll, yaw = -math.pi - pitch, wrap_angle(roll + math.pi), wrap_angle(yaw + math.pi)
    return roll, pitch, yaw


def chi2_threshold(probability: float, dof: int = 2) -> float:
    # Converts a gate probability into the chi-square threshold
    return float(chi2.ppf(probability, df=dof))


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent, reproducible generator for a (seed, stream...) key."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(s) for s in stream)]))


def derive_seed(seed: int, index: int) -> int:
    # Hashes (master seed, counter) into a 63-bit run seed
    state = np.random.SeedSequence([int(seed), int(index)]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def rms(values: Sequence[float]) -> float:
    # Root mean square of a sequence
    array = np.asarray(values, dtype=float)
    if array.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(array ** 2)))
