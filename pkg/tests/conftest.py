"""Shared fixtures and dataset builders."""

from __future__ import annotations

import numpy as np
import pytest

from cateshrink.data import (
    ExternalManifest,
    ManifestEntry,
    MarginalSubgroup,
    TrialDataset,
    enumerate_lattice,
    make_schema,
)

TWO_BINARY = make_schema([("x1", ["0", "1"]), ("x2", ["0", "1"])])


def two_binary_dataset(
    n: int,
    seed: int,
    het: bool = True,
    min_cell_arm: int = 2,
    tau=(2.0, 3.0, 3.0, 4.5),
) -> TrialDataset:
    """Random two-binary-covariate dataset with every subgroup-arm cell
    populated (patched deterministically when a random draw leaves one empty).
    """
    rng = np.random.default_rng(seed)
    x1 = (rng.random(n) < 0.5).astype(int)
    x2 = (rng.random(n) < 0.5).astype(int)
    a = (rng.random(n) < 0.5).astype(int)
    # Overwrite the first rows so each (subgroup, arm) cell has at least
    # min_cell_arm records regardless of the random draw.
    i = 0
    for v1 in (0, 1):
        for v2 in (0, 1):
            for arm in (0, 1):
                for _ in range(min_cell_arm):
                    x1[i], x2[i], a[i] = v1, v2, arm
                    i += 1
    g = 2 * x1 + x2
    sigma = 2.0 if het else 1.0
    y = (
        1.0
        + 0.5 * x1
        - 0.3 * x2
        + np.asarray(tau)[g] * a
        + rng.standard_normal(n) * np.where(a == 1, sigma, 1.0)
    )
    return TrialDataset(
        schema=TWO_BINARY,
        outcome=y,
        treatment=a,
        covariates=np.column_stack([x1, x2]),
    )


def q3_manifest(gamma=(2.5, 3.75, 2.5), variance: float = 1e-4) -> ExternalManifest:
    subgroups = (
        MarginalSubgroup(constrained=((0, 0),), label="x1=0"),
        MarginalSubgroup(constrained=((0, 1),), label="x1=1"),
        MarginalSubgroup(constrained=((1, 0),), label="x2=0"),
    )
    return ExternalManifest(
        entries=tuple(
            ManifestEntry(subgroup=sg, estimate=float(g), variance=variance)
            for sg, g in zip(subgroups, gamma)
        ),
        source_label="test",
    )


@pytest.fixture
def two_binary_lattice():
    return enumerate_lattice(TWO_BINARY)
