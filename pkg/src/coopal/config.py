"""Run configuration: strict JSON parsing with defaults."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticError, field_validator, model_validator

from .classifiers import KINDS, ClassifierKind
from .core import Mode, ValidationError
from .integration import Method, WaWeights, WmvVariant

POLICY_NAMES = ("qds", "rs", "mvqs")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticConfig(_Strict):
    classes: int = Field(4, ge=2)
    features: int = Field(18, ge=1)
    per_class: int = Field(200, ge=1)
    spread: float = Field(1.5, gt=0)
    # None: use the run seed, so every seed draws its own dataset
    seed: Optional[int] = None


class DatasetConfig(_Strict):
    path: Optional[str] = None
    label_column: Union[int, str] = -1
    header: bool = False
    synthetic: Optional[SyntheticConfig] = None
    scale: bool = False

    @model_validator(mode="after")
    def _one_source(self):
        if (self.path is None) == (self.synthetic is None):
            raise ValueError("exactly one of 'path' or 'synthetic' must be given")
        return self


class ProfileConfig(_Strict):
    kind: Literal[KINDS]  # type: ignore[valid-type]
    max_depth: Optional[int] = Field(None, ge=1)
    min_leaf: int = Field(1, ge=1)
    reg: float = Field(1e-3, ge=0)
    epochs: Optional[int] = Field(None, ge=1)
    learning_rate: float = Field(0.5, gt=0)
    kernel_width: Optional[float] = Field(None, gt=0)
    k: int = Field(10, ge=1)
    noise: float = Field(0.0, ge=0)

    def classifier_kind(self) -> ClassifierKind:
        depth = self.max_depth
        if self.kind == "tree_medium" and depth is None:
            depth = 4
        if self.kind == "tree_fine":
            depth = None
        epochs = self.epochs or (30 if self.kind == "kernel_ovr" else 200)
        return ClassifierKind(
            self.kind,
            max_depth=depth,
            min_leaf=self.min_leaf,
            reg=self.reg,
            epochs=epochs,
            learning_rate=self.learning_rate,
            kernel_width=self.kernel_width,
            k=self.k,
        )


def default_profiles() -> list[ProfileConfig]:
    return [
        ProfileConfig(kind="tree_fine", noise=0.5),
        ProfileConfig(kind="tree_medium", noise=0.5),
        ProfileConfig(kind="linear_ovr", noise=0.25),
        ProfileConfig(kind="kernel_ovr", noise=0.25),
        ProfileConfig(kind="weighted_knn", noise=0.25),
    ]


class IntegrationConfig(_Strict):
    method: Method = Method.WA
    a: float = Field(0.5, ge=0)
    b: float = Field(0.5, ge=0)
    decay: float = Field(1.0, gt=0)
    wmv_variant: WmvVariant = WmvVariant.PRODUCT

    def resolved_method(self) -> Method:
        if self.method is Method.WMV and self.wmv_variant is WmvVariant.LIKELIHOOD:
            return Method.WMV_LIKELIHOOD
        return self.method

    def weights(self) -> WaWeights:
        return WaWeights(self.a, self.b)


class LoadModel(_Strict):
    label_bytes: int = Field(8, gt=0)
    feature_bytes_per_dim: int = Field(8, gt=0)
    header_bytes: int = Field(16, ge=0)


class GridConfig(_Strict):
    modes: list[Mode] = Field(default_factory=lambda: [Mode.SAMPLES])
    methods: list[Method] = Field(default_factory=lambda: [Method.WA])
    policies: list[Literal["qds", "rs", "mvqs"]] = Field(default_factory=lambda: ["qds"])


class RunConfig(_Strict):
    dataset: DatasetConfig
    seeds: list[int] = Field(min_length=1)
    offline_size: int = Field(100, ge=1)
    test_size: Optional[int] = Field(None, ge=1)
    holdout: float = Field(0.25, gt=0, lt=1)
    profiles: list[ProfileConfig] = Field(default_factory=default_profiles, min_length=1)
    ego: Union[Literal["lq", "hq"], int] = "lq"
    neighbors: int = Field(4, ge=0)
    mode: Mode = Mode.SAMPLES
    integration: IntegrationConfig = IntegrationConfig()
    policy: Literal["qds", "rs", "mvqs"] = "qds"
    alpha: float = 0.95
    max_steps: Optional[int] = Field(None, ge=1)
    events: Optional[int] = Field(None, ge=0)
    delta_max: float = Field(2.0, ge=0)
    load: LoadModel = LoadModel()
    grid: Optional[GridConfig] = None
    output: str = "results"

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError("alpha ∈ (0, 1]")
        return v

    @model_validator(mode="after")
    def _fleet_size(self):
        if self.neighbors > len(self.profiles) - 1:
            raise ValueError(f"neighbors={self.neighbors} needs at least {self.neighbors + 1} profiles")
        if isinstance(self.ego, int) and not 0 <= self.ego < len(self.profiles):
            raise ValueError(f"ego index {self.ego} outside the profile list")
        return self

    def cell(self, mode: Mode, method: Method, policy: str) -> "RunConfig":
        """Copy of this config fixed to one (mode, method, policy) grid cell."""
        method = Method(method)
        if method is Method.WMV_LIKELIHOOD:
            integ = self.integration.model_copy(update={"method": Method.WMV, "wmv_variant": WmvVariant.LIKELIHOOD})
        elif method is Method.WMV:
            integ = self.integration.model_copy(update={"method": Method.WMV, "wmv_variant": WmvVariant.PRODUCT})
        else:
            integ = self.integration.model_copy(update={"method": method})
        return self.model_copy(update={"mode": Mode(mode), "integration": integ, "policy": policy, "grid": None})


def _format_errors(exc: PydanticError) -> str:
    parts = []
    for err in exc.errors():
        field = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        if err["type"] == "extra_forbidden":
            msg = "unknown field"
        parts.append(f"{field}: {msg}")
    return "; ".join(parts)


def config_from_dict(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except PydanticError as exc:
        raise ValidationError(_format_errors(exc)) from None


def parse_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON run configuration. Raises OSError if unreadable."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be a JSON object")
    return config_from_dict(data)
