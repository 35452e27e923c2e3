"""Request/response models for the estimation service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class CovariateModel(BaseModel):
    name: str
    levels: list[str]


class EstimateRequest(BaseModel):
    trial_csv: str
    manifest_text: str
    covariates: list[CovariateModel] | None = None  # None -> infer from trial
    weights: str = "prevalence"
    custom_weights: list[float] | None = None
    alpha: float = 0.05
    estimators: list[str] | None = None  # None -> all five


class EstimateRow(BaseModel):
    subgroup: str
    estimator: str
    estimate: float
    variance: float
    ci_low: float
    ci_high: float
    n_g: int


class ContrastModel(BaseModel):
    estimator: str
    subgroup_a: str
    subgroup_b: str
    estimate: float
    variance: float
    p_value: float


class ShrinkageInfo(BaseModel):
    omega_raw: float | None
    omega_plus: float
    nu: float
    quad_form: float
    feasible: bool
    warning: str | None = None


class EstimateResponse(BaseModel):
    subgroups: list[str]
    rows: list[EstimateRow]
    contrasts: list[ContrastModel]
    shrinkage: ShrinkageInfo | None
    n: int
    q: int
    alpha: float
    weights: str
    source_label: str
    warnings: list[str]
    estimates_csv: str
    contrasts_csv: str
    run_info_json: str


class DgpModel(BaseModel):
    n: int = 500
    p1: float = 0.5
    p2: float = 0.5
    eta: tuple[float, float, float, float] = (-2.0, 1.0, 1.0, 0.5)
    zeta: tuple[float, float, float, float] = (1.0, 2.5, 2.5, 1.25)
    sigma0: float = 1.0
    sigma1: float = 2.0
    treat_prob: float = 0.5


class SimulateRequest(BaseModel):
    dgp: DgpModel = Field(default_factory=DgpModel)
    e_grid: list[float] = [0.0, 0.02, 0.05, 0.1]
    replications: int = 500
    base_seed: int = 0
    weight_scheme: str = "prevalence"
    custom_weights: list[float] | None = None
    alpha: float = 0.05
    external_variance: float = 1e-4
    workers: int = 1


class SimulateResponse(BaseModel):
    results_csv: str
    run_manifest: str
    failed_total: int


class ReportRequest(BaseModel):
    content: str
    kind: str = "auto"


class ReportResponse(BaseModel):
    table: str


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorBody(BaseModel):
    category: str
    message: str
