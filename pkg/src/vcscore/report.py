"""JSON test report and atomic file output."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .covparam import GammaPoint

__all__ = ["TestReport", "write_atomic"]


@dataclass(frozen=True)
class TestReport:
    family: str
    trials: int | None
    n: int
    N: int
    beta_hat: tuple[float, ...]
    phi_hat: float
    sigma2_hat: float | None
    grid: tuple[int, int, float]
    grid_points: int
    r0: int
    seed: int
    alpha: float
    s_o: float
    s_p: float
    s_s: float
    argmax_o: GammaPoint
    argmax_p: GammaPoint
    argmax_s: GammaPoint
    p_o: float
    p_p: float
    p_s: float
    n_degenerate: int
    warnings: tuple[str, ...] = field(default_factory=tuple)

    # keeps pytest from collecting this class
    __test__ = False

    @property
    def rejected(self) -> dict[str, bool]:
        return {"S_O": self.p_o <= self.alpha, "S_P": self.p_p <= self.alpha, "S_S": self.p_s <= self.alpha}

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("argmax_o", "argmax_p", "argmax_s"):
            g = getattr(self, k)
            d[k] = {"gamma1": g.gamma1, "gamma2": g.gamma2}
        d["beta_hat"] = list(self.beta_hat)
        d["grid"] = list(self.grid)
        d["warnings"] = list(self.warnings)
        d["rejected"] = self.rejected
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "TestReport":
        names = {f.name for f in fields(cls)}
        kw = {k: v for k, v in d.items() if k in names}
        for k in ("argmax_o", "argmax_p", "argmax_s"):
            kw[k] = GammaPoint(kw[k]["gamma1"], kw[k]["gamma2"])
        kw["beta_hat"] = tuple(kw["beta_hat"])
        kw["grid"] = tuple(kw["grid"])
        kw["warnings"] = tuple(kw.get("warnings", ()))
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "TestReport":
        return cls.from_dict(json.loads(text))


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
