"""Domain types and file ingestion for trial data and external estimate manifests.

Two file formats are handled here:

* Trial file: delimiter-separated text with a header row containing
  ``outcome``, ``treatment``, and one column per covariate (string levels).
* Manifest file: key/value text listing external marginal-subgroup entries,
  each of the form::

      subgroup: <covar>=<level>[,<covar>=<level>]
      estimate: <real>
      ci95: <low>,<high>        # or: variance: <real> (exactly one required)

  An optional ``source:`` line labels the manifest. The keyword ``ATE`` in
  place of a covariate list denotes the overall (unconditional) effect.

Covariate levels are mapped to 0-based indices in schema order; all
downstream matrices use this ordering. Records with any missing field are
rejected, not imputed.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# Fixed quantile used for converting published 95% CIs to variances and back.
Z_975 = 1.959964


@dataclass(frozen=True)
class Covariate:
    """A categorical baseline covariate with an ordered set of level labels."""

    name: str
    levels: tuple[str, ...]

    def level_index(self, label: str) -> int:
        try:
            return self.levels.index(label)
        except ValueError:
            raise ValidationError(
                f"unknown level {label!r} for covariate {self.name!r}"
            ) from None


Schema = tuple[Covariate, ...]


def make_schema(spec: list[tuple[str, list[str]]]) -> Schema:
    """Build a schema from (name, levels) pairs, validating uniqueness."""
    covs = tuple(Covariate(name, tuple(levels)) for name, levels in spec)
    names = [c.name for c in covs]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate covariate names in schema")
    for c in covs:
        if len(set(c.levels)) != len(c.levels):
            raise ValidationError(f"duplicate levels for covariate {c.name!r}")
        if len(c.levels) == 0:
            raise ValidationError(f"covariate {c.name!r} has no levels")
    return covs


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Individual-level internal trial records.

    Stored column-wise: ``outcome`` (n,), ``treatment`` (n,) in {0,1}, and
    ``covariates`` (n, m) of 0-based level indices. Immutable after
    construction and safe to share across threads.
    """

    schema: Schema
    outcome: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        out = np.asarray(self.outcome, dtype=float)
        trt = np.asarray(self.treatment, dtype=int)
        cov = np.asarray(self.covariates, dtype=int)
        if out.ndim != 1 or out.size < 1:
            raise ValidationError("dataset must contain at least one record")
        n = out.size
        if cov.ndim != 2 or cov.shape != (n, len(self.schema)):
            raise ValidationError(
                f"covariate matrix shape {cov.shape} does not match "
                f"{n} records x {len(self.schema)} covariates"
            )
        if trt.shape != (n,):
            raise ValidationError("treatment length does not match records")
        if not np.all(np.isfinite(out)):
            raise ValidationError("non-finite outcome value")
        if not np.all((trt == 0) | (trt == 1)):
            raise ValidationError("non-binary treatment")
        for j, c in enumerate(self.schema):
            col = cov[:, j]
            if col.size and (col.min() < 0 or col.max() >= len(c.levels)):
                raise ValidationError(
                    f"covariate {c.name!r} contains an out-of-range level index"
                )
        object.__setattr__(self, "outcome", _readonly(out))
        object.__setattr__(self, "treatment", _readonly(trt))
        object.__setattr__(self, "covariates", _readonly(cov))

    @property
    def n(self) -> int:
        return self.outcome.size

    @property
    def records(self) -> list[tuple[float, tuple[int, ...], int]]:
        """Row-order view as (outcome, covariate level indices, treatment)."""
        return [
            (float(y), tuple(int(v) for v in x), int(a))
            for y, x, a in zip(self.outcome, self.covariates, self.treatment)
        ]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SubgroupLattice:
    """All fine subgroups: the full cross-classification of the covariates.

    Profiles are ordered lexicographically over covariate positions with the
    last covariate varying fastest; this ordering is a pure function of the
    schema.
    """

    schema: Schema
    fine_subgroups: tuple[tuple[int, ...], ...]

    @property
    def size(self) -> int:
        return len(self.fine_subgroups)

    def label(self, profile: tuple[int, ...]) -> str:
        return "|".join(
            f"{c.name}={c.levels[v]}" for c, v in zip(self.schema, profile)
        )

    def labels(self) -> list[str]:
        return [self.label(p) for p in self.fine_subgroups]

    def index(self, profile: tuple[int, ...]) -> int:
        return self.fine_subgroups.index(profile)

    def counts(self, data: TrialDataset) -> np.ndarray:
        """Record count per fine subgroup, in lattice order."""
        idx = self.assign(data)
        return np.bincount(idx, minlength=self.size)

    def assign(self, data: TrialDataset) -> np.ndarray:
        """Map each record to its fine-subgroup index."""
        sizes = [len(c.levels) for c in data.schema]
        idx = np.zeros(data.n, dtype=int)
        for j, size in enumerate(sizes):
            idx = idx * size + data.covariates[:, j]
        return idx


def enumerate_lattice(schema: Schema) -> SubgroupLattice:
    """Enumerate every covariate profile in canonical order."""
    for c in schema:
        if len(c.levels) < 2:
            raise ValidationError(
                f"covariate {c.name!r} has fewer than 2 levels"
            )
    profiles = tuple(
        itertools.product(*[range(len(c.levels)) for c in schema])
    )
    return SubgroupLattice(schema=schema, fine_subgroups=profiles)


@dataclass(frozen=True)
class MarginalSubgroup:
    """A coarsened subgroup fixing a proper subset of the covariates.

    ``constrained`` holds (covariate index, level index) pairs sorted by
    covariate index. An empty tuple denotes the overall (ATE) entry, which is
    representable here but rejected later by the shrinkage tuning rule.
    """

    constrained: tuple[tuple[int, int], ...]
    label: str

    def key(self) -> tuple[tuple[int, int], ...]:
        return self.constrained


@dataclass(frozen=True)
class ManifestEntry:
    subgroup: MarginalSubgroup
    estimate: float
    variance: float


@dataclass(frozen=True)
class ExternalManifest:
    """Coarsened external marginal-subgroup estimates and their variances."""

    entries: tuple[ManifestEntry, ...]
    source_label: str = ""

    def __post_init__(self):
        if len(self.entries) < 1:
            raise ValidationError("manifest must contain at least one entry")
        seen = set()
        for e in self.entries:
            if not math.isfinite(e.variance) or e.variance < 0:
                raise ValidationError(
                    f"entry {e.subgroup.label!r}: variance must be finite and >= 0"
                )
            if not math.isfinite(e.estimate):
                raise ValidationError(
                    f"entry {e.subgroup.label!r}: estimate must be finite"
                )
            k = e.subgroup.key()
            if k in seen:
                raise ValidationError(f"duplicate subgroup {e.subgroup.label!r}")
            seen.add(k)

    @property
    def q(self) -> int:
        return len(self.entries)

    def gamma(self) -> np.ndarray:
        return np.array([e.estimate for e in self.entries])

    def variances(self) -> np.ndarray:
        return np.array([e.variance for e in self.entries])


@dataclass(frozen=True, eq=False)
class InternalTargets:
    """True effects, known only in simulation: fine-grained CATEs and the
    internal marginal CATEs matching a manifest's subgroups."""

    tau_fine: np.ndarray
    gamma_marginal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau_fine", _readonly(np.asarray(self.tau_fine, float)))
        object.__setattr__(
            self, "gamma_marginal", _readonly(np.asarray(self.gamma_marginal, float))
        )


def ci_to_variance(lower: float, upper: float) -> float:
    """Invert a published 95% CI to a variance: ((upper-lower)/(2*z_.975))^2."""
    if upper < lower:
        raise ValidationError(f"ci95 has upper < lower: ({lower}, {upper})")
    half = (upper - lower) / 2.0
    return (half / Z_975) ** 2


def variance_to_ci(estimate: float, variance: float) -> tuple[float, float]:
    """95% CI from an estimate and variance using the same fixed quantile."""
    if variance < 0:
        raise ValidationError("variance must be >= 0")
    half = Z_975 * math.sqrt(variance)
    return estimate - half, estimate + half


# ---------------------------------------------------------------------------
# File ingestion


def load_schema(path: str) -> Schema:
    """Read a schema file: one ``name: level0,level1,...`` line per covariate."""
    spec: list[tuple[str, list[str]]] = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise ValidationError(f"malformed schema line: {line!r}")
            name, _, rest = line.partition(":")
            levels = [tok.strip() for tok in rest.split(",") if tok.strip()]
            spec.append((name.strip(), levels))
    if not spec:
        raise ValidationError(f"schema file {path!r} is empty")
    return make_schema(spec)


def infer_schema(path: str) -> Schema:
    """Infer a schema from a trial file: covariates are the non-reserved
    header columns in order; levels are the sorted unique values."""
    with open(path, encoding="utf-8", newline="") as fh:
        return _infer_schema(fh, origin=path)


def infer_schema_from_text(text: str) -> Schema:
    return _infer_schema(io.StringIO(text), origin="<content>")


def _infer_schema(fh, origin: str) -> Schema:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError(f"trial file {origin!r} is empty") from None
    header = [h.strip() for h in header]
    names = [h for h in header if h not in ("outcome", "treatment")]
    values: dict[str, set] = {nm: set() for nm in names}
    pos = {nm: header.index(nm) for nm in names}
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        for nm in names:
            if pos[nm] < len(row):
                values[nm].add(row[pos[nm]].strip())
    return make_schema([(nm, sorted(values[nm])) for nm in names])


def load_trial(path: str, schema: Schema) -> TrialDataset:
    """Parse and validate a trial file against a covariate schema.

    Rejects missing columns, non-binary treatment, unmapped levels, and
    non-numeric outcomes, naming the offending row and column. Row order is
    preserved.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        return _parse_trial(fh, schema, origin=path)


def loads_trial(text: str, schema: Schema) -> TrialDataset:
    """Parse trial file content from a string (service entry point)."""
    return _parse_trial(io.StringIO(text), schema, origin="<content>")


def _parse_trial(fh, schema: Schema, origin: str) -> TrialDataset:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValidationError(f"trial file {origin!r} is empty") from None
    required = ["outcome", "treatment"] + [c.name for c in schema]
    for col in required:
        if col not in header:
            raise ValidationError(f"missing column {col!r} in trial file")
    pos = {col: header.index(col) for col in required}

    outcomes: list[float] = []
    treatments: list[int] = []
    cov_rows: list[list[int]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise ValidationError(f"row {lineno}: expected {len(header)} fields")
        raw_y = row[pos["outcome"]].strip()
        try:
            y = float(raw_y)
        except ValueError:
            raise ValidationError(
                f"row {lineno}: non-numeric outcome {raw_y!r}"
            ) from None
        if not math.isfinite(y):
            raise ValidationError(f"row {lineno}: non-finite outcome")
        raw_a = row[pos["treatment"]].strip()
        if raw_a not in ("0", "1"):
            raise ValidationError(
                f"row {lineno}: non-binary treatment {raw_a!r}"
            )
        x_row = []
        for c in schema:
            label = row[pos[c.name]].strip()
            if label not in c.levels:
                raise ValidationError(
                    f"row {lineno}: unknown level {label!r} for covariate {c.name!r}"
                )
            x_row.append(c.levels.index(label))
        outcomes.append(y)
        treatments.append(int(raw_a))
        cov_rows.append(x_row)

    if not outcomes:
        raise ValidationError(f"trial file {origin!r} has no data rows")
    return TrialDataset(
        schema=schema,
        outcome=np.array(outcomes),
        treatment=np.array(treatments),
        covariates=np.array(cov_rows).reshape(len(outcomes), len(schema)),
    )


def save_trial(data: TrialDataset, path: str) -> None:
    """Write a dataset back to the trial file format (round-trip exact)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outcome", "treatment"] + [c.name for c in data.schema])
        for y, x, a in zip(data.outcome, data.covariates, data.treatment):
            writer.writerow(
                [repr(float(y)), int(a)]
                + [c.levels[v] for c, v in zip(data.schema, x)]
            )


def parse_marginal_subgroup(text: str, schema: Schema) -> MarginalSubgroup:
    """Parse ``covar=level[,covar=level]`` (or ``ATE``) into a subgroup."""
    text = text.strip()
    if text == "ATE":
        return MarginalSubgroup(constrained=(), label="ATE")
    pairs: list[tuple[int, int]] = []
    seen_names = set()
    for tok in text.split(","):
        tok = tok.strip()
        if "=" not in tok:
            raise ValidationError(f"malformed subgroup term {tok!r}")
        name, _, level = tok.partition("=")
        name, level = name.strip(), level.strip()
        match = [j for j, c in enumerate(schema) if c.name == name]
        if not match:
            raise ValidationError(f"subgroup references unknown covariate {name!r}")
        if name in seen_names:
            raise ValidationError(f"subgroup constrains covariate {name!r} twice")
        seen_names.add(name)
        j = match[0]
        pairs.append((j, schema[j].level_index(level)))
    if len(pairs) == len(schema):
        raise ValidationError(
            f"subgroup {text!r} constrains all covariates; external entries "
            "must be coarser than the fine-grained target subgroups"
        )
    pairs.sort()
    label = ",".join(
        f"{schema[j].name}={schema[j].levels[v]}" for j, v in pairs
    )
    return MarginalSubgroup(constrained=tuple(pairs), label=label)


def load_manifest(path: str, schema: Schema) -> ExternalManifest:
    """Parse and validate an external-estimate manifest file."""
    with open(path, encoding="utf-8") as fh:
        return _parse_manifest(fh.read(), schema)


def loads_manifest(text: str, schema: Schema) -> ExternalManifest:
    return _parse_manifest(text, schema)


def _parse_manifest(text: str, schema: Schema) -> ExternalManifest:
    source_label = ""
    blocks: list[dict[str, str]] = []
    current: dict[str, str] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ValidationError(f"manifest line {lineno}: expected 'key: value'")
        key, _, value = line.partition(":")
        key, value = key.strip().lower(), value.strip()
        if key in ("source", "source_label"):
            source_label = value
        elif key == "subgroup":
            current = {"subgroup": value}
            blocks.append(current)
        elif key in ("estimate", "ci95", "variance"):
            if current is None:
                raise ValidationError(
                    f"manifest line {lineno}: {key!r} before any 'subgroup:' line"
                )
            if key in current:
                raise ValidationError(
                    f"manifest entry {current['subgroup']!r}: repeated key {key!r}"
                )
            current[key] = value
        else:
            raise ValidationError(f"manifest line {lineno}: unknown key {key!r}")

    if not blocks:
        raise ValidationError("manifest contains no entries")

    entries = []
    for block in blocks:
        subgroup = parse_marginal_subgroup(block["subgroup"], schema)
        if "estimate" not in block:
            raise ValidationError(f"entry {subgroup.label!r}: missing estimate")
        estimate = _parse_real(block["estimate"], subgroup.label, "estimate")
        has_ci = "ci95" in block
        has_var = "variance" in block
        if has_ci == has_var:
            raise ValidationError(
                f"entry {subgroup.label!r}: exactly one of ci95/variance required"
            )
        if has_var:
            variance = _parse_real(block["variance"], subgroup.label, "variance")
        else:
            parts = [p.strip() for p in block["ci95"].split(",")]
            if len(parts) != 2:
                raise ValidationError(
                    f"entry {subgroup.label!r}: ci95 must be '<low>,<high>'"
                )
            lo = _parse_real(parts[0], subgroup.label, "ci95 lower")
            hi = _parse_real(parts[1], subgroup.label, "ci95 upper")
            variance = ci_to_variance(lo, hi)
        entries.append(
            ManifestEntry(subgroup=subgroup, estimate=estimate, variance=variance)
        )
    return ExternalManifest(entries=tuple(entries), source_label=source_label)


def _parse_real(token: str, label: str, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ValidationError(
            f"entry {label!r}: non-numeric {what} {token!r}"
        ) from None


def save_manifest(manifest: ExternalManifest, schema: Schema, path: str) -> None:
    """Write a manifest using variance entries (round-trip safe)."""
    lines = []
    if manifest.source_label:
        lines.append(f"source: {manifest.source_label}")
    for e in manifest.entries:
        lines.append("")
        lines.append(f"subgroup: {e.subgroup.label}")
        lines.append(f"estimate: {e.estimate!r}")
        lines.append(f"variance: {e.variance!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
