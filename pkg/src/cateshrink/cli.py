"""Command-line front end: a thin client over the estimation service.

Commands:

* ``estimate``: trial file + manifest -> per-estimator subgroup CATEs,
  Wald CIs, pairwise contrasts, shrinkage diagnostics (three output files).
* ``simulate``: Monte Carlo incompatibility sweep -> results fileplus a run
  manifest recording every configuration value and the seed.
* ``report``: render either output file kind as aligned text tables.
* ``serve``: run the HTTP service.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 partial
simulation failure. Errors print one JSON line to stderr with a
machine-readable category.
"""

from __future__ import annotations

import json
import pathlib
import sys

import click

from . import __version__
from .client import ServiceClient
from .data import load_schema
from .errors import CateShrinkError, ValidationError


def _fail(exc: CateShrinkError) -> None:
    line = json.dumps({"error": {"category": exc.category, "message": str(exc)}})
    click.echo(line, err=True)
    sys.exit(exc.exit_code)


def _read(path: str) -> str:
    p = pathlib.Path(path)
    if not p.is_file():
        raise ValidationError(f"file not found: {path}")
    return p.read_text(encoding="utf-8")


def _parse_weights(spec: str) -> tuple[str, list[float] | None]:
    if spec in ("prevalence", "uniform"):
        return spec, None
    if spec.startswith("custom:"):
        path = spec.split(":", 1)[1]
        tokens = _read(path).replace(",", "\n").split()
        try:
            return "custom", [float(t) for t in tokens]
        except ValueError:
            raise ValidationError(f"non-numeric weight in {path}") from None
    raise ValidationError(
        f"invalid --weights {spec!r}; use prevalence, uniform, or custom:<path>"
    )


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Subgroup CATE estimation with James-Stein borrowing of external
    coarsened estimates."""


@main.command()
@click.option("--trial", required=True, help="Trial data file (CSV).")
@click.option("--manifest", required=True, help="External estimate manifest file.")
@click.option("--schema", "schema_path", default=None, help="Covariate schema file; inferred from the trial file when omitted.")
@click.option("--weights", default="prevalence", show_default=True, help="prevalence | uniform | custom:<path>.")
@click.option("--alpha", default=0.05, show_default=True, type=float)
@click.option("--estimators", default="all", show_default=True, help="Comma-separated estimator list or 'all'.")
@click.option("--out", "out_dir", required=True, help="Output directory.")
@click.option("--seed", default=0, show_default=True, type=int, help="Accepted for interface uniformity; estimation is deterministic.")
@click.option("--server", default=None, help="Remote service URL (default: in-process).")
def estimate(trial, manifest, schema_path, weights, alpha, estimators, out_dir, seed, server) -> None:
    """Estimate subgroup CATEs from a trial file and an external manifest."""
    try:
        scheme, custom = _parse_weights(weights)
        payload = {
            "trial_csv": _read(trial),
            "manifest_text": _read(manifest),
            "weights": scheme,
            "custom_weights": custom,
            "alpha": alpha,
        }
        if estimators != "all":
            payload["estimators"] = [t.strip() for t in estimators.split(",") if t.strip()]
        if schema_path:
            schema = load_schema(schema_path)
            payload["covariates"] = [
                {"name": c.name, "levels": list(c.levels)} for c in schema
            ]
        with ServiceClient(server) as client:
            body = client.post("/estimate", payload)
        out = pathlib.Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "estimates.csv").write_text(body["estimates_csv"], encoding="utf-8")
        (out / "contrasts.csv").write_text(body["contrasts_csv"], encoding="utf-8")
        (out / "run_info.json").write_text(body["run_info_json"], encoding="utf-8")
        for warning in body["warnings"]:
            click.echo(f"warning: {warning}", err=True)
        click.echo(f"wrote estimates for {len(body['subgroups'])} subgroups to {out}")
    except CateShrinkError as exc:
        _fail(exc)


@main.command()
@click.option("--e-grid", default="0,0.02,0.05,0.1", show_default=True, help="Comma-separated incompatibility indices.")
@click.option("--reps", default=500, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--weights", default="prevalence", show_default=True, help="prevalence | uniform | custom:<path> (risk weighting).")
@click.option("--alpha", default=0.05, show_default=True, type=float)
@click.option("--external-variance", default=1e-4, show_default=True, type=float)
@click.option("--dgp", "dgp_path", default=None, help="JSON file overriding DGP fields (n, p1, p2, eta, zeta, sigma0, sigma1, treat_prob).")
@click.option("--out", "out_dir", required=True, help="Output directory.")
@click.option("--server", default=None, help="Remote service URL (default: in-process).")
def simulate(e_grid, reps, seed, workers, weights, alpha, external_variance, dgp_path, out_dir, server) -> None:
    """Run the Monte Carlo incompatibility sweep."""
    try:
        try:
            grid = [float(t) for t in e_grid.split(",") if t.strip()]
        except ValueError:
            raise ValidationError(f"invalid --e-grid {e_grid!r}") from None
        scheme, custom = _parse_weights(weights)
        payload = {
            "e_grid": grid,
            "replications": reps,
            "base_seed": seed,
            "weight_scheme": scheme,
            "custom_weights": custom,
            "alpha": alpha,
            "external_variance": external_variance,
            "workers": workers,
        }
        if dgp_path:
            try:
                payload["dgp"] = json.loads(_read(dgp_path))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"invalid DGP JSON: {exc}") from None
        with ServiceClient(server) as client:
            body = client.post("/simulate", payload)
        out = pathlib.Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep_results.csv").write_text(body["results_csv"], encoding="utf-8")
        (out / "run_manifest.txt").write_text(body["run_manifest"], encoding="utf-8")
        click.echo(
            f"wrote sweep over {len(grid)} incompatibility levels x {reps} "
            f"replications to {out} ({body['failed_total']} failed)"
        )
    except CateShrinkError as exc:
        _fail(exc)


@main.command()
@click.option("--input", "input_path", required=True, help="Results file (sweep or estimates).")
@click.option("--kind", default="auto", show_default=True, type=click.Choice(["auto", "sweep", "estimates"]))
@click.option("--server", default=None, help="Remote service URL (default: in-process).")
def report(input_path, kind, server) -> None:
    """Print aligned text tables for a results file."""
    try:
        payload = {"content": _read(input_path), "kind": kind}
        with ServiceClient(server) as client:
            body = client.post("/report", payload)
        click.echo(body["table"], nl=False)
    except CateShrinkError as exc:
        _fail(exc)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port) -> None:
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("cateshrink.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
