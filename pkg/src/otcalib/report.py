"""Verification reports: named check records, JSON serialization, per-check seeding."""

from __future__ import annotations

import hashlib
import json
import math
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__

# Anchor keys name the statement each check exercises (LaTeX-style labels).
ANCHORS = {
    "twist": "A1",
    "nondegenerate": "A2",
    "signature": "eq:h",
    "spacelike": "eq:graph is spacelike",
    "lagrangian": "eq:graph is Lagrangian",
    "pushforward": "eq:measure preserving",
    "calibration-equality": "prop:calibrated",
    "determinant-inequality": "prop:calibrated",
    "cyclical-monotonicity": "prop:calibrated",
    "chord-spacelike": "prop:nonnegative mass",
    "mean-curvature": "cor:mean curv",
    "comass": "cor:cal",
    "mass": "th:main",
    "mtw": "rmk:curvature",
    "conformal-identity": "rmk:curvature",
    "riemann": "rmk:curvature",
    "orientation": "Claim (orientation forms)",
    "assignment": "prop:calibrated",
    "convergence": "prop:calibrated",
    "mutation": "prop:calibrated",
    "runtime": "suite",
}


def anchor_for(name: str) -> str:
    for key in sorted(ANCHORS, key=len, reverse=True):
        if key in name:
            return ANCHORS[key]
    return "suite"


def check_seed(root: int, name: str) -> int:
    """Independent seed per check: hash of the check name mixed with the root seed."""
    digest = hashlib.sha256(f"{int(root)}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def check_rng(root: int, name: str) -> np.random.Generator:
    return np.random.default_rng(check_seed(root, name))


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


@dataclass
class Check:
    name: str
    value: float
    tolerance: Optional[float]
    passed: bool
    flagged: int = 0
    anchor: str = ""
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.anchor:
            self.anchor = anchor_for(self.name)
        self.passed = bool(self.passed)

    def to_dict(self) -> dict:
        return _clean({"name": self.name, "anchor": self.anchor, "value": self.value,
                       "tolerance": self.tolerance, "passed": self.passed,
                       "flagged": int(self.flagged), "detail": self.detail})


def failed_check(name: str, exc: BaseException) -> Check:
    return Check(name, float("nan"), None, False,
                 detail={"error": type(exc).__name__, "message": str(exc)})


@dataclass
class VerificationReport:
    command: str
    seed: int
    grid: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def verdict(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def run(self, name: str, fn: Callable[[], list | Check]) -> list:
        """Run ``fn`` and record its checks; any exception becomes a failed check named ``name``."""
        try:
            out = fn()
        except Exception as exc:  # error containment: a module failure is a failed check
            chk = failed_check(name, exc)
            chk.detail["where"] = traceback.extract_tb(exc.__traceback__)[-1].name
            return [self.add(chk)]
        out = [out] if isinstance(out, Check) else list(out)
        for c in out:
            self.add(c)
        return out

    def failing(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "environment": _clean({"version": __version__, "seed": self.seed, "grid": self.grid}),
            "checks": [c.to_dict() for c in self.checks],
            "verdict": "pass" if self.verdict else "fail",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def write(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "report.json"
        path.write_text(self.to_json(), encoding="utf-8")
        return path
