"""Run configuration: one flat dataclass read from and written to ``key = value`` text."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .background import LINEAR, PAIRWISE, MrfWeights
from .motion import FlowParams
from .regression import ANCHOR_CENTER, OMEGA_EXTEND, RegressionConfig

DEFAULT_CONFIG_PATH = Path(__file__).parent / "data" / "default.cfg"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # background / support
    alpha: float = 0.5
    beta_scale: float = 0.5
    gamma_scale: float = 1.0
    w_s: float = 20.0
    w_t: float = 20.0
    support_prior: str = PAIRWISE
    outer_iters: int = 10
    mc_iters: int = 500
    mc_tol: float = 1e-6
    # imaging
    z_th: int = 0  # 0 selects round(0.05 * z_max)
    gamma: float = 2.2
    # kernel regression
    block_size: int = 7
    tikhonov: float = 0.1
    steering_reg: float = 0.01
    kappa: float = 10.0
    bfgs_iters: int = 10
    anchor: str = ANCHOR_CENTER
    omega_side: str = OMEGA_EXTEND
    # pyramid and flow
    levels: int = 3
    flow_smoothness: float = 0.02
    flow_sor_iters: int = 100
    flow_omega: float = 1.8
    flow_warps: int = 2
    # metrics and synthetic data
    luminance_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        checks = [
            (self.alpha > 0, "alpha must be positive"),
            (self.beta_scale >= 0 and self.gamma_scale >= 0, "beta_scale and gamma_scale must be >= 0"),
            (self.w_s >= 0 and self.w_t >= 0, "w_s and w_t must be >= 0"),
            (self.support_prior in (PAIRWISE, LINEAR), f"support_prior must be {PAIRWISE} or {LINEAR}"),
            (self.outer_iters >= 1 and self.mc_iters >= 1, "iteration caps must be >= 1"),
            (self.mc_tol > 0, "mc_tol must be positive"),
            (self.z_th >= 0, "z_th must be >= 0"),
            (self.gamma > 0, "gamma must be positive"),
            (self.levels >= 1, "levels must be >= 1"),
            (self.flow_sor_iters >= 0 and self.flow_warps >= 1, "flow iteration counts out of range"),
            (self.luminance_scale > 0, "luminance_scale must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            self.regression()
            self.flow()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def regression(self) -> RegressionConfig:
        return RegressionConfig(block_size=self.block_size, tikhonov=self.tikhonov,
                                steering_reg=self.steering_reg, kappa=self.kappa,
                                bfgs_iters=self.bfgs_iters, anchor=self.anchor,
                                omega_side=self.omega_side)

    def flow(self) -> FlowParams:
        return FlowParams(smoothness=self.flow_smoothness, sor_iters=self.flow_sor_iters,
                          omega=self.flow_omega, warps=self.flow_warps)

    def mrf(self, sigma: float) -> MrfWeights:
        beta = self.beta_scale * sigma ** 2
        return MrfWeights(self.w_s, self.w_t, beta, self.gamma_scale * beta)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _convert(name: str, kind, text: str):
    kind = kind if isinstance(kind, str) else kind.__name__
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r} as {kind}") from exc
    return text


def parse_items(items: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    """Apply string-valued overrides to ``base`` after checking every key."""
    types = {f.name: f.type for f in fields(RunConfig)}
    unknown = sorted(set(items) - set(types))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = {k: _convert(k, types[k], v) for k, v in items.items()}
    return dataclasses.replace(base or RunConfig(), **values)


def parse_text(text: str, base: RunConfig | None = None) -> RunConfig:
    items = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in items:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        items[key] = value
    return parse_items(items, base)


def load_config(path: str | Path | None = None) -> RunConfig:
    return parse_text(Path(path or DEFAULT_CONFIG_PATH).read_text())


def serialize(config: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.to_dict().items())


def parse_overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out
