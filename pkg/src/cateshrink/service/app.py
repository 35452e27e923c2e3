"""HTTP service wrapping the estimation library.

Every domain error maps to a 422 response with a machine-readable category
(`validation`, `numerical`, `simulation`) that clients translate into exit
codes. Estimation and simulation run synchronously; heavy sweeps should use
a generous client timeout or the in-process client.
"""

from __future__ import annotations

import math

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..analysis import contrasts_csv, estimates_csv, run_estimate, run_info_json
from ..data import infer_schema_from_text, loads_manifest, loads_trial, make_schema
from ..errors import CateShrinkError
from ..reporting import render_report
from ..simulation import DgpConfig, SweepConfig, render_run_manifest, run_sweep
from .schemas import (
    ContrastModel,
    EstimateRequest,
    EstimateResponse,
    EstimateRow,
    HealthResponse,
    ReportRequest,
    ReportResponse,
    ShrinkageInfo,
    SimulateRequest,
    SimulateResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="cateshrink",
        description=(
            "Fine-grained subgroup treatment-effect estimation with "
            "James-Stein borrowing of coarsened external trial estimates"
        ),
        version=__version__,
    )

    @app.exception_handler(CateShrinkError)
    async def _domain_error(request: Request, exc: CateShrinkError):
        return JSONResponse(
            status_code=422,
            content={"error": {"category": exc.category, "message": str(exc)}},
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/estimate", response_model=EstimateResponse)
    def estimate(req: EstimateRequest) -> EstimateResponse:
        if req.covariates is None:
            schema = infer_schema_from_text(req.trial_csv)
        else:
            schema = make_schema([(c.name, c.levels) for c in req.covariates])
        data = loads_trial(req.trial_csv, schema)
        manifest = loads_manifest(req.manifest_text, schema)
        report = run_estimate(
            data,
            manifest,
            weights=req.weights,
            alpha=req.alpha,
            estimators=tuple(req.estimators) if req.estimators else None,
            custom_weights=req.custom_weights,
        )

        rows = []
        for out in report.outputs:
            for g, label in enumerate(report.subgroups):
                lo, hi = out.ci[g]
                rows.append(
                    EstimateRow(
                        subgroup=label,
                        estimator=out.name,
                        estimate=float(out.tau[g]),
                        variance=float(out.variance[g]),
                        ci_low=lo,
                        ci_high=hi,
                        n_g=report.subgroup_n[g],
                    )
                )
        shrinkage = None
        if report.omega_plus is not None:
            raw = report.omega_raw
            shrinkage = ShrinkageInfo(
                omega_raw=None if raw is None or not math.isfinite(raw) else raw,
                omega_plus=report.omega_plus,
                nu=report.nu,
                quad_form=report.quad_form,
                feasible=report.feasible,
                warning=report.warnings[0] if report.warnings else None,
            )
        return EstimateResponse(
            subgroups=list(report.subgroups),
            rows=rows,
            contrasts=[
                ContrastModel(
                    estimator=c.estimator,
                    subgroup_a=c.subgroup_a,
                    subgroup_b=c.subgroup_b,
                    estimate=c.estimate,
                    variance=c.variance,
                    p_value=c.p_value,
                )
                for c in report.contrasts
            ],
            shrinkage=shrinkage,
            n=report.n,
            q=report.q,
            alpha=report.alpha,
            weights=report.weights,
            source_label=report.source_label,
            warnings=list(report.warnings),
            estimates_csv=estimates_csv(report),
            contrasts_csv=contrasts_csv(report),
            run_info_json=run_info_json(report),
        )

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest) -> SimulateResponse:
        dgp = DgpConfig(
            n=req.dgp.n,
            p1=req.dgp.p1,
            p2=req.dgp.p2,
            eta=tuple(req.dgp.eta),
            zeta=tuple(req.dgp.zeta),
            sigma0=req.dgp.sigma0,
            sigma1=req.dgp.sigma1,
            treat_prob=req.dgp.treat_prob,
        )
        sweep = SweepConfig(
            e_grid=tuple(req.e_grid),
            replications=req.replications,
            base_seed=req.base_seed,
            weight_scheme=req.weight_scheme,
            alpha=req.alpha,
            external_variance=req.external_variance,
            custom_weights=(
                tuple(req.custom_weights) if req.custom_weights else None
            ),
        )
        result = run_sweep(dgp, sweep, workers=req.workers)
        return SimulateResponse(
            results_csv=result.to_csv(),
            run_manifest=render_run_manifest(dgp, sweep, req.workers),
            failed_total=int(result.failed.sum()),
        )

    @app.post("/report", response_model=ReportResponse)
    def report(req: ReportRequest) -> ReportResponse:
        return ReportResponse(table=render_report(req.content, kind=req.kind))

    return app


app = create_app()
