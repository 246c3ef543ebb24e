"""Plain-text ``key = value`` configuration with strict key checking.

Every knob mirrors a module-level default, so an empty config runs the
reference benchmark unchanged. Command-line flags override file values.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .metrics import DEFAULT_KNN_K
from .loop import DEFAULT_LOOP_K, DEFAULT_LOOP_LAMBDA
from .pca import DEFAULT_VARIANCE_THRESHOLD
from .pipeline import PCA_FIT_CORE, PCA_FIT_POOLED, PipelineParams
from .scoring import STRATEGY_BPS, STRATEGY_MPS, Coefficients
from .synthetic import NovelClusterSpec, SyntheticSpec, default_spec


class ConfigError(ValueError):
    """Bad configuration file or option value."""


@dataclass(frozen=True)
class Config:
    core_embeddings: str = ""
    finetune_embeddings: str = ""
    out_dir: str = "."
    pca_components: int = 0          # 0 selects the variance-threshold rule
    pca_variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD
    pca_fit: str = PCA_FIT_POOLED
    knn_k: int = DEFAULT_KNN_K
    cluster_k: int = 0               # 0 selects the sqrt(N/2) rule
    cluster_k_err: int = 0
    cluster_k_ft: int = 0
    cluster_iou_weight: float = 1.0
    loop_k_nn: int = DEFAULT_LOOP_K
    loop_lambda: float = DEFAULT_LOOP_LAMBDA
    loop_pool_core: bool = False
    bps_a: float = 0.75
    bps_b: float = 0.25
    mps_a: float = 0.50
    mps_b: float = 0.25
    mps_c: float = 0.20
    mps_d: float = 0.05
    strategy: str = STRATEGY_BPS
    seed: int = 42
    sim_dims: int = 8
    sim_core_n: int = 2000
    sim_ft_n: int = 2200
    sim_outlier_fraction: float = 0.02
    sim_novel_sizes: tuple[int, ...] = (60, 140)
    sim_novel_stddev: float = 3.0
    sim_n_seeds: int = 20
    sim_budgets: tuple[int, ...] = tuple(range(250, 2151, 100))

    def __post_init__(self) -> None:
        if self.pca_components < 0:
            raise ConfigError("pca.components must be >= 0")
        if not 0.0 < self.pca_variance_threshold <= 1.0:
            raise ConfigError("pca.variance_threshold must lie in (0, 1]")
        if self.pca_fit not in (PCA_FIT_POOLED, PCA_FIT_CORE):
            raise ConfigError(f"pca.fit must be '{PCA_FIT_POOLED}' or '{PCA_FIT_CORE}'")
        if self.knn_k < 1:
            raise ConfigError("knn.k must be >= 1")
        for name in ("cluster_k", "cluster_k_err", "cluster_k_ft"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{_KEY_OF[name]} must be >= 0")
        if self.cluster_iou_weight <= 0:
            raise ConfigError("cluster.iou_weight must be positive")
        if self.loop_k_nn < 1:
            raise ConfigError("loop.k_nn must be >= 1")
        if self.loop_lambda <= 0:
            raise ConfigError("loop.lambda must be positive")
        if self.strategy not in (STRATEGY_BPS, STRATEGY_MPS):
            raise ConfigError(f"strategy must be '{STRATEGY_BPS}' or '{STRATEGY_MPS}'")
        try:
            self.coefficients()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.sim_dims < 1 or self.sim_core_n < 1 or self.sim_ft_n < 1:
            raise ConfigError("sim dimensions and sample counts must be positive")
        if not 0.0 <= self.sim_outlier_fraction <= 0.2:
            raise ConfigError("sim.outlier_fraction must lie in [0, 0.2]")
        if self.sim_n_seeds < 1:
            raise ConfigError("sim.n_seeds must be >= 1")
        if not self.sim_budgets or any(b < 1 for b in self.sim_budgets):
            raise ConfigError("sim.budgets must be positive")

    def coefficients(self) -> Coefficients:
        return Coefficients(
            bps_a=self.bps_a, bps_b=self.bps_b,
            mps_a=self.mps_a, mps_b=self.mps_b, mps_c=self.mps_c, mps_d=self.mps_d,
        )

    def pipeline_params(self) -> PipelineParams:
        return PipelineParams(
            pca_components=self.pca_components or None,
            pca_variance_threshold=self.pca_variance_threshold,
            pca_fit=self.pca_fit,
            knn_k=self.knn_k,
            cluster_k=self.cluster_k or None,
            error_cluster_k=self.cluster_k_err or None,
            finetune_cluster_k=self.cluster_k_ft or None,
            iou_weight=self.cluster_iou_weight,
            loop_k_nn=self.loop_k_nn,
            loop_lambda=self.loop_lambda,
            loop_pool_core=self.loop_pool_core,
            coefficients=self.coefficients(),
        )

    def synthetic_spec(self) -> SyntheticSpec:
        base = default_spec(seed=self.seed, dims=self.sim_dims)
        novel = tuple(NovelClusterSpec(size=s, stddev=self.sim_novel_stddev) for s in self.sim_novel_sizes)
        return replace(
            base,
            novel_clusters=novel,
            outlier_fraction=self.sim_outlier_fraction,
            core_n=self.sim_core_n,
            ft_n=self.sim_ft_n,
        )


# config-file key <-> Config field
_KEYS: dict[str, str] = {
    "core_embeddings": "core_embeddings",
    "finetune_embeddings": "finetune_embeddings",
    "out_dir": "out_dir",
    "pca.components": "pca_components",
    "pca.variance_threshold": "pca_variance_threshold",
    "pca.fit": "pca_fit",
    "knn.k": "knn_k",
    "cluster.k": "cluster_k",
    "cluster.k_err": "cluster_k_err",
    "cluster.k_ft": "cluster_k_ft",
    "cluster.iou_weight": "cluster_iou_weight",
    "loop.k_nn": "loop_k_nn",
    "loop.lambda": "loop_lambda",
    "loop.pool_core": "loop_pool_core",
    "coeff.bps_a": "bps_a",
    "coeff.bps_b": "bps_b",
    "coeff.mps_a": "mps_a",
    "coeff.mps_b": "mps_b",
    "coeff.mps_c": "mps_c",
    "coeff.mps_d": "mps_d",
    "strategy": "strategy",
    "seed": "seed",
    "sim.dims": "sim_dims",
    "sim.core_n": "sim_core_n",
    "sim.ft_n": "sim_ft_n",
    "sim.outlier_fraction": "sim_outlier_fraction",
    "sim.novel_sizes": "sim_novel_sizes",
    "sim.novel_stddev": "sim_novel_stddev",
    "sim.n_seeds": "sim_n_seeds",
    "sim.budgets": "sim_budgets",
}
_KEY_OF = {field_name: key for key, field_name in _KEYS.items()}


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    """Comma list (``250,350``) or start:stop:step range (``250:2150:100``, inclusive)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range syntax is start:stop:step, got {text!r}")
        start, stop, step = (int(p) for p in parts)
        if step < 1:
            raise ValueError("range step must be positive")
        return tuple(range(start, stop + 1, step))
    return tuple(int(p) for p in text.split(",") if p.strip())


def _coerce(field_name: str, text: str):
    kind = Config.__dataclass_fields__[field_name].type
    text = text.strip()
    try:
        if field_name in ("sim_novel_sizes", "sim_budgets"):
            return _parse_int_tuple(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            lowered = text.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"expected a boolean, got {text!r}")
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {_KEY_OF[field_name]}: {exc}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    """Parse ``key = value`` lines into Config field assignments."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[_KEYS[key]] = _coerce(_KEYS[key], value)
    return values


def load_config(path: str | None, overrides: dict[str, object] | None = None) -> Config:
    """Build a Config from an optional file plus flag overrides (flags win)."""
    values: dict[str, object] = {}
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        values.update(parse_config_text(text, source=str(path)))
    if overrides:
        values.update(overrides)
    return Config(**values)


def dump_config(config: Config) -> str:
    """Round-trippable textual form of the effective configuration."""
    lines = []
    for f in fields(Config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{_KEY_OF[f.name]} = {value}")
    return "\n".join(lines) + "\n"
