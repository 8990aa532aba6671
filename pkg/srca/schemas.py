from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

RotationKind = Literal["pca", "identity", "varimax", "quartimax", "equamax", "parsimax", "orthomax"]
Strategy = Literal["exhaustive", "l1_relaxed", "auto"]
StandardizeMode = Literal["none", "center", "zscore"]
Method = Literal["srca", "spca", "pca"]
GeneratorKind = Literal["plane", "torus", "sphere", "gem", "orthogonal_loops"]


def parse_document(model_cls, text: str):
    """Validate a JSON document, turning pydantic failures into ConfigError."""
    try:
        return model_cls.model_validate_json(text)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigError(f"invalid {model_cls.__name__}: {where}: {first['msg']}")


def build(model_cls, **fields):
    try:
        return model_cls(**fields)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigError(f"invalid {model_cls.__name__}: {where}: {first['msg']}")


# ---------------------------
# Fit schemas
# ---------------------------

class RotationSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: RotationKind = "pca"
    gamma: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def check_gamma(self):
        if self.kind == "orthomax" and self.gamma is None:
            raise ValueError("orthomax rotation needs an explicit gamma")
        if self.kind in ("pca", "identity") and self.gamma is not None:
            raise ValueError(f"{self.kind} rotation takes no gamma")
        return self


class FitConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    retained_dim: int = Field(ge=1)
    rotation: RotationSpec = RotationSpec()
    strategy: Strategy = "auto"
    weight: Union[Literal["identity"], list[list[float]]] = "identity"
    penalty_lambda: float = Field(default=0.0, ge=0)
    step_size: float = Field(default=0.5, gt=0)
    max_outer_iters: int = Field(default=200, ge=1)
    max_gd_iters: int = Field(default=500, ge=1)
    tol: float = Field(default=1e-8, gt=0)
    seed: int = 0
    restarts: int = Field(default=1, ge=1)
    center_bound: Optional[float] = Field(default=None, gt=0)
    radius_bounds: Optional[tuple[float, float]] = None
    max_subsets: Optional[int] = Field(default=None, ge=1)
    jobs: int = Field(default=1, ge=1)
    refine_spca: bool = False

    @model_validator(mode="after")
    def check_bounds(self):
        if self.radius_bounds is not None:
            low, high = self.radius_bounds
            if not 0 <= low < high:
                raise ValueError("radius_bounds must satisfy 0 <= low < high")
        return self


# ---------------------------
# Generator schemas
# ---------------------------

class GeneratorSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: GeneratorKind
    n: int = Field(default=400, ge=1)
    noise_var: float = Field(default=0.0, ge=0)
    seed: int = 0
    R1: float = 0.5
    R2: float = 1.0 / 3.0


# ---------------------------
# Benchmark schemas
# ---------------------------

class DatasetEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    generator: Optional[GeneratorSpec] = None
    csv: Optional[str] = None
    has_header: bool = False
    label_column: Optional[int] = None
    standardize: StandardizeMode = "none"

    @model_validator(mode="after")
    def check_source(self):
        if (self.generator is None) == (self.csv is None):
            raise ValueError("a dataset needs exactly one of 'generator' or 'csv'")
        return self


class BenchmarkPlan(BaseModel):
    model_config = ConfigDict(extra="forbid")

    datasets: list[DatasetEntry] = Field(min_length=1)
    methods: list[Method] = Field(min_length=1)
    d_prime_list: list[int] = Field(min_length=1)
    rotations: list[RotationSpec] = Field(default_factory=lambda: [RotationSpec()], min_length=1)
    strategy: Strategy = "auto"
    restarts: int = Field(default=1, ge=1)
    holdout: bool = False
    test_fraction: float = Field(default=0.2, gt=0, lt=1)
    seed: int = 0
    output_dir: str = "benchmark_out"


# ---------------------------
# Report schemas
# ---------------------------

REPORT_COLUMNS = ("mse", "oos_mse", "sc", "chi", "dbi", "cc", "auc", "wauc")


class EvaluationReport(BaseModel):
    mse: float = Field(ge=0)
    oos_mse: Optional[float] = None
    sc: Optional[float] = Field(default=None, ge=-1, le=1)
    chi: Optional[float] = Field(default=None, ge=0)
    dbi: Optional[float] = Field(default=None, ge=0)
    cc: float = Field(ge=-1, le=1)
    auc: float
    wauc: float
    conventions: dict[str, str] = Field(
        default_factory=lambda: {
            "auc": "unweighted mean of R_NX(K), K = 1..n-2",
            "wauc": "1/K-weighted mean of R_NX(K), K = 1..n-2",
            "ranks": "distance ties broken by smaller index, self excluded",
        }
    )

    def csv_row(self) -> dict:
        return {column: getattr(self, column) for column in REPORT_COLUMNS}


# ---------------------------
# Model documents
# ---------------------------

class SphereModelDocument(BaseModel):
    kind: Literal["srca"] = "srca"
    strategy: Literal["exhaustive", "l1_relaxed"] = "exhaustive"
    mean: list[float]
    rotation: list[float]
    dim: int
    index_set: list[int]
    center: list[float]
    # null radius with a normal marks a flat
    radius: Optional[float]
    normal: Optional[list[float]] = None
    weight: Union[Literal["identity"], list[list[float]]] = "identity"
    final_loss: float
    converged: bool = True
    config: dict = Field(default_factory=dict)
    config_digest: str = ""


class BaselineModelDocument(BaseModel):
    kind: Literal["pca", "spca"]
    mean: list[float]
    basis: list[list[float]]
    center: Optional[list[float]] = None
    radius: Optional[float] = None
