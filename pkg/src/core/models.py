# src/core/models.py

from typing import Annotated, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.core.config import MMD_REFERENCE_SIZE
from src.core.target_models import (
    BananaTMixture,
    BananaTMixtureSpec,
    GaussianMixture,
    GaussianMixtureSpec,
    TargetModel,
    banana_mixture_spec,
    example_mixture_spec,
    four_mode_spec,
    ring_spec,
    weighted_four_mode_spec,
)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ── samples ─────────────────────────────────────────────────────────────────

class ChainConfig(StrictModel):
    n_steps: int = Field(ge=1, description="Nombre d'itérations MALA (rejets inclus)")
    step_size: float = Field(gt=0, description="Pas epsilon de la proposition de Langevin")
    init: Optional[List[float]] = Field(default=None, description="Point de départ (origine si absent)")
    seed: int = 0


class SampleMeta(StrictModel):
    """
    Provenance d'un échantillon (sidecar JSON du CSV).
    """
    sampler: Literal["exact", "mala", "file"]
    seed: Optional[int] = None
    n: int
    dim: int
    step_size: Optional[float] = None
    acceptance_rate: Optional[float] = Field(default=None, ge=0, le=1)
    n_chains: int = 1
    target: Optional[dict] = None
    config: Optional[dict] = None
    config_digest: Optional[str] = None
    version: Optional[str] = None


# ── targets (discriminated on `kind`) ───────────────────────────────────────

class GaussianMixtureTarget(StrictModel):
    kind: Literal["gaussian_mixture"] = "gaussian_mixture"
    means: List[List[float]]
    variances: List[Union[float, List[float]]]
    weights: List[float]

    def spec(self) -> GaussianMixtureSpec:
        return GaussianMixtureSpec(means=self.means, variances=self.variances, weights=self.weights)


class ExampleMixtureTarget(StrictModel):
    kind: Literal["example_mixture"] = "example_mixture"
    mu: float = Field(default=3.0, gt=0)
    sigma: float = Field(default=1.0, gt=0)
    w: float = Field(default=0.5, ge=0, le=1, description="Poids du mode gauche")
    dim: int = Field(default=2, ge=1)

    def spec(self) -> GaussianMixtureSpec:
        return example_mixture_spec(self.mu, self.sigma, self.w, self.dim)


class FourModeTarget(StrictModel):
    kind: Literal["four_mode"] = "four_mode"
    dim: int = Field(default=2, ge=2)

    def spec(self) -> GaussianMixtureSpec:
        return four_mode_spec(self.dim)


class WeightedFourModeTarget(StrictModel):
    kind: Literal["weighted_four_mode"] = "weighted_four_mode"
    reading: Literal["corrected", "literal"] = "corrected"

    def spec(self) -> GaussianMixtureSpec:
        return weighted_four_mode_spec(self.reading)


class RingTarget(StrictModel):
    kind: Literal["ring"] = "ring"
    n_modes: int = Field(default=6, ge=1)
    radius: float = Field(default=3.0, gt=0)

    def spec(self) -> GaussianMixtureSpec:
        return ring_spec(self.n_modes, self.radius)


class BananaTarget(StrictModel):
    kind: Literal["banana"] = "banana"
    dim: int = Field(default=2, ge=2)
    b: float = 0.1
    dof: float = Field(default=7.0, gt=2)
    scale: Optional[List[float]] = None
    centers: Optional[List[List[float]]] = None
    weights: Optional[List[float]] = None

    def spec(self) -> BananaTMixtureSpec:
        base = banana_mixture_spec(self.dim, self.b, self.dof, self.scale)
        if self.centers is None and self.weights is None:
            return base
        return BananaTMixtureSpec(
            dim=self.dim, b=self.b, dof=self.dof, scale=self.scale,
            centers=self.centers if self.centers is not None else base.centers,
            weights=self.weights if self.weights is not None else base.weights,
        )


TargetConfig = Annotated[
    Union[GaussianMixtureTarget, ExampleMixtureTarget, FourModeTarget,
          WeightedFourModeTarget, RingTarget, BananaTarget],
    Field(discriminator="kind"),
]

DIMENSIONED_TARGETS = ("example_mixture", "four_mode", "banana")


def build_target(target) -> TargetModel:
    spec = target.spec()
    if isinstance(spec, BananaTMixtureSpec):
        return BananaTMixture(spec)
    return GaussianMixture(spec)


# ── experiment sections ─────────────────────────────────────────────────────

class SamplerConfig(StrictModel):
    type: Literal["exact", "mala"] = "exact"
    n: int = Field(default=3000, ge=1, description="Tirages exacts, ou itérations par chaîne pour MALA")
    step_size: float = Field(default=0.5, gt=0)
    n_chains: int = Field(default=1, ge=1)
    init: Optional[List[float]] = None
    seed: int = 0


LambdaRuleName = Literal["inverse_m", "inverse_log_m", "inverse_m_squared", "fixed"]


class ThinningConfig(StrictModel):
    method: Literal["st", "rst", "laplacian"] = "st"
    m: int = Field(default=300, ge=1)
    lambda_rule: LambdaRuleName = "inverse_m"
    lam: Optional[float] = Field(default=None, ge=0, description="Valeur de lambda pour la règle 'fixed'")
    beta: float = Field(default=0.5, gt=0, lt=1)
    ell_mode: Literal["median", "fixed"] = "median"
    ell: Optional[float] = Field(default=None, gt=0)
    ell_scale: float = Field(default=1.0, gt=0, description="Facteur appliqué à l'heuristique de la médiane")

    @model_validator(mode="after")
    def _check(self):
        if self.ell_mode == "fixed" and self.ell is None:
            raise ValueError("ell_mode 'fixed' requires ell")
        if self.lambda_rule == "fixed" and self.lam is None:
            raise ValueError("lambda_rule 'fixed' requires lam")
        return self


class MethodConfig(StrictModel):
    """Une variante comparée dans une expérience (nom libre utilisé dans les métriques)."""
    name: str
    method: Literal["st", "rst", "laplacian"]
    lambda_rule: LambdaRuleName = "inverse_m"
    lam: Optional[float] = Field(default=None, ge=0)


def default_methods() -> List[MethodConfig]:
    return [MethodConfig(name="st", method="st"), MethodConfig(name="rst", method="rst")]


class SweepConfig(StrictModel):
    ms: Optional[List[int]] = None
    step_sizes: Optional[List[float]] = None
    dims: Optional[List[int]] = None


class EvaluationConfig(StrictModel):
    repeats: int = Field(default=1, ge=1)
    mmd: bool = False
    mmd_reference_size: int = Field(default=MMD_REFERENCE_SIZE, ge=1)
    mmd_unbiased: bool = False
    mode_centers: Optional[List[List[float]]] = Field(default=None, description="Centres utilisés pour les proportions (moyennes de la cible si absent)")
    mode_labels: Optional[List[str]] = None
    band_halfwidth: Optional[Union[float, Literal["z_max"]]] = None
    band_axis: int = 0
    mc_n: int = Field(default=10000, ge=2, description="Tirages Monte Carlo pour les espérances")
    s0: float = Field(default=0.0, ge=0)
    concentration_point: Optional[List[float]] = None
    concentration_ms: Optional[List[int]] = None


class WeightSweepConfig(StrictModel):
    grid_start: float = Field(default=0.1, ge=0, le=1)
    grid_stop: float = Field(default=0.9, ge=0, le=1)
    grid_step: float = Field(default=0.05, gt=0)
    radius_sd: float = Field(default=2.0, gt=0, description="Rayon de troncature des modes, en écarts-types")
    lam: float = Field(default=0.0, ge=0)
    lambda_search: bool = False
    lambda_min: float = Field(default=1e-4, gt=0)
    lambda_max: float = Field(default=1.0, gt=0)
    lambda_num: int = Field(default=41, ge=2)


class LogisticConfig(StrictModel):
    dataset_path: str
    label_column: str
    standardize: bool = True
    a: float = Field(default=1.0, gt=0)
    b: float = Field(default=1.0, gt=0)
    intercept_prior: Literal["student_t", "flat"] = "student_t"
    n_folds: int = Field(default=10, ge=2)
    n_repeats: int = Field(default=10, ge=1)
    n_chains: int = Field(default=4, ge=1)
    n_steps: int = Field(default=10000, ge=1)
    step_sizes: List[float] = Field(default_factory=lambda: [0.01, 0.02, 0.05, 0.1])
    ms: List[int] = Field(default_factory=lambda: [300])


ExperimentKind = Literal["thinning", "weight_sweep", "pathology_bounds", "logistic", "laplacian_operator"]


class ExperimentConfig(StrictModel):
    name: str
    kind: ExperimentKind = "thinning"
    target: Optional[TargetConfig] = None
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    thinning: ThinningConfig = Field(default_factory=ThinningConfig)
    methods: List[MethodConfig] = Field(default_factory=default_methods)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    weight_sweep: Optional[WeightSweepConfig] = None
    logistic: Optional[LogisticConfig] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "logistic":
            if self.logistic is None:
                raise ValueError("kind 'logistic' requires a logistic section")
        elif self.target is None:
            raise ValueError(f"kind '{self.kind}' requires a target")
        if self.sweep.dims and self.target is not None and self.target.kind not in DIMENSIONED_TARGETS:
            raise ValueError(f"dimension sweeps need one of {DIMENSIONED_TARGETS}")
        return self


class ExperimentSuite(StrictModel):
    name: str
    runs: List[ExperimentConfig] = Field(min_length=1)


# ── reports ─────────────────────────────────────────────────────────────────

class MetricRecord(StrictModel):
    """Une ligne du CSV long (method, d, m, eps, seed, metric, value)."""
    method: str
    d: int
    m: Optional[int] = None
    eps: Optional[float] = None
    seed: Optional[int] = None
    metric: str
    value: float


class MetricReport(StrictModel):
    name: str
    kind: str
    version: str
    config: dict
    summary: Dict[str, Optional[float]] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)
    records: List[MetricRecord] = Field(default_factory=list)
