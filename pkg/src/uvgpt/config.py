"""Runtime settings: selector weights, verification thresholds, retry policy.

Sources, lowest to highest precedence: built-in defaults, JSON config file
(UVGPT_CONFIG or explicit path), then UVGPT_* environment overrides. The
effective values are stamped into every execution trace.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .registry import SelectorWeights

CONFIG_ENV_VAR = "UVGPT_CONFIG"
REGISTRY_ENV_VAR = "UVGPT_REGISTRY"
WORKERS_ENV_VAR = "UVGPT_WORKERS"
PORT_ENV_VAR = "UVGPT_PORT"


@dataclass(frozen=True)
class Settings:
    weights: SelectorWeights = SelectorWeights()
    conf_threshold: float = 0.25
    mask_iou_threshold: float = 0.5
    max_attempts: int = 2
    integrate: bool = True
    max_workers: int = 1
    blend_alpha: float = 0.5
    box_stroke: int = 3

    def to_dict(self) -> dict:
        return {
            "selector": self.weights.to_dict(),
            "verification": {
                "conf_threshold": self.conf_threshold,
                "mask_iou_threshold": self.mask_iou_threshold,
            },
            "retry": {"max_attempts": self.max_attempts},
            "execution": {
                "integrate": self.integrate,
                "max_workers": self.max_workers,
                "blend_alpha": self.blend_alpha,
                "box_stroke": self.box_stroke,
            },
        }


def _from_file(path: Path) -> Settings:
    data = json.loads(path.read_text(encoding="utf-8"))
    selector = data.get("selector", {})
    verification = data.get("verification", {})
    retry = data.get("retry", {})
    execution = data.get("execution", {})
    defaults = Settings()
    return Settings(
        weights=SelectorWeights(
            lmbda=float(selector.get("lambda", defaults.weights.lmbda)),
            mu=float(selector.get("mu", defaults.weights.mu)),
            nu=float(selector.get("nu", defaults.weights.nu)),
        ),
        conf_threshold=float(
            verification.get("conf_threshold", defaults.conf_threshold)
        ),
        mask_iou_threshold=float(
            verification.get("mask_iou_threshold", defaults.mask_iou_threshold)
        ),
        max_attempts=int(retry.get("max_attempts", defaults.max_attempts)),
        integrate=bool(execution.get("integrate", defaults.integrate)),
        max_workers=int(execution.get("max_workers", defaults.max_workers)),
        blend_alpha=float(execution.get("blend_alpha", defaults.blend_alpha)),
        box_stroke=int(execution.get("box_stroke", defaults.box_stroke)),
    )


def load_settings(
    path: str | Path | None = None,
    environ: Mapping[str, str] | None = None,
) -> Settings:
    env = environ if environ is not None else os.environ
    if path is None:
        path = env.get(CONFIG_ENV_VAR)
    settings = _from_file(Path(path)) if path else Settings()

    weights = settings.weights
    overrides = {}
    if "UVGPT_LAMBDA" in env:
        overrides["lmbda"] = float(env["UVGPT_LAMBDA"])
    if "UVGPT_MU" in env:
        overrides["mu"] = float(env["UVGPT_MU"])
    if "UVGPT_NU" in env:
        overrides["nu"] = float(env["UVGPT_NU"])
    if overrides:
        settings = dataclasses.replace(
            settings, weights=dataclasses.replace(weights, **overrides)
        )
    return settings
