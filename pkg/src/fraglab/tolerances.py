"""Central tolerance defaults; every threshold can be overridden per call or per scenario."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any, Mapping


@dataclass(frozen=True)
class Tolerances:
    # smallest singular value below rank_rtol * largest => singular design
    rank_rtol: float = 1e-10
    # weighted-average identity of the mixed estimator
    mixed_identity: float = 1e-10
    # Monte Carlo agreement, in units of the MC standard error
    mc_z: float = 5.0
    # symmetric treatment condition: a gap passes when below the practical
    # threshold or within stc_sigma standard errors of zero
    stc_rel_gap: float = 0.02
    stc_corr: float = 0.02
    stc_sigma: float = 4.0

    def updated(self, overrides: Mapping[str, Any] | None) -> "Tolerances":
        if not overrides:
            return self
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            from .errors import ConfigError

            raise ConfigError(f"unknown tolerance(s) {sorted(unknown)}", field="tolerances")
        return replace(self, **{k: float(v) for k, v in overrides.items()})


DEFAULT = Tolerances()
