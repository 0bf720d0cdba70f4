"""Monte Carlo and exact ground truth for emitted bounds."""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import UnknownReference
from .loop_model import DEFAULT_CAP, LoopSpec, simulate_loop
from .prr_model import PrrSpec, hits_at, simulate_costs

Z99 = 2.3263478740408408  # one-sided 99% normal quantile
PRR_TRIALS = 10**5
LOOP_TRIALS = 10**6

PASS = "PASS"
WARN = "WARN"
FAIL = "FAIL"


@dataclass(frozen=True)
class TailEstimate:
    kappa: float
    trials: int
    hits: int
    point: float
    wilson_upper_99: float
    capped: int = 0


def wilson_upper(hits: int, trials: int, z: float = Z99) -> float:
    """One-sided Wilson score upper limit for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = hits / trials
    z2 = z * z
    centre = p + z2 / (2 * trials)
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials))
    return min(1.0, (centre + half) / (1 + z2 / trials))


def _estimates(kappas, hits, trials, capped=0) -> list:
    return [TailEstimate(float(k), trials, int(h), h / trials, max(h / trials, wilson_upper(int(h), trials)), capped)
            for k, h in zip(kappas, hits)]


def estimate_tail(model, start, kappas: Sequence[float], trials: Optional[int] = None, seed: int = 0,
                  cap: int = DEFAULT_CAP) -> list:
    """Empirical Pr[cost >= kappa] for every kappa from one shared set of trials.

    ``start`` is n* for a PRR and an initial valuation (or None) for a loop.
    Loop trials still running at ``cap`` are counted in ``capped``, not in hits.
    """
    if isinstance(model, PrrSpec):
        trials = PRR_TRIALS if trials is None else trials
        if trials < 1:
            raise ValueError("trials must be at least 1")
        costs = simulate_costs(model, start, trials, seed)
        return _estimates(kappas, [hits_at(costs, k) for k in kappas], trials)
    if isinstance(model, LoopSpec):
        trials = LOOP_TRIALS if trials is None else trials
        if trials < 1:
            raise ValueError("trials must be at least 1")
        horizon = max([int(math.ceil(k)) for k in kappas] + [0])
        sample = simulate_loop(model, trials, seed, init=start, cap=cap, horizon=horizon)
        done = ~sample.capped
        hits = [int(((sample.iterations >= k) & done).sum()) for k in kappas]
        return _estimates(kappas, hits, trials, int(sample.capped.sum()))
    raise TypeError(f"unsupported model {type(model).__name__}")


def dominance_verdict(bound: float, est: TailEstimate) -> str:
    if est.point > bound:
        return FAIL
    if est.wilson_upper_99 > bound:
        return WARN
    return PASS


def check_dominance(bounds: Sequence[float], estimates: Sequence[TailEstimate]) -> list:
    """Per-kappa PASS / WARN / FAIL: the point estimate must not exceed the bound."""
    if len(bounds) != len(estimates):
        raise ValueError("bounds and estimates must share the kappa grid")
    return [dominance_verdict(b, e) for b, e in zip(bounds, estimates)]


def overall(verdicts: Sequence[str]) -> str:
    if FAIL in verdicts:
        return FAIL
    return WARN if WARN in verdicts else PASS


# Karp's cookbook bounds for the recurrence benchmarks, keyed by normalised tail id.
_KARP = {
    ("quickselect", "24n"): 0.75**20,
    ("quickselect", "17n"): 0.75**13,
    ("quickselect", "15n"): 0.75**11,
    ("quickselect", "11n"): 0.75**7,
    ("quickselect", "8n"): 0.75**4,
    ("quickselect", "6n"): 0.75**2,
    ("randomsearch", "11ln(n)"): 0.75 ** (11 - 1 / math.log(4 / 3)),
    ("randomsearch", "10ln(n)"): 0.75 ** (10 - 1 / math.log(4 / 3)),
    ("randomsearch", "8ln(n)"): 0.75 ** (8 - 1 / math.log(4 / 3)),
    ("randomsearch", "7ln(n)"): 0.75 ** (7 - 1 / math.log(4 / 3)),
    ("randomsearch", "5ln(n)"): 0.75 ** (5 - 1 / math.log(4 / 3)),
    ("l1diameter", "13n"): 0.5**11,
    ("l1diameter", "11n"): 0.5**9,
    ("l1diameter", "9n"): 0.5**7,
    ("l1diameter", "7n"): 0.5**5,
    ("l1diameter", "5n"): 0.5**3,
    ("l2diameter", "20nln(n)"): 0.5**18,
    ("l2diameter", "15nln(n)"): 0.5**13,
    ("l2diameter", "13.5nln(n)"): 0.5**11.5,
    ("l2diameter", "9nln(n)"): 0.5**7,
    ("l2diameter", "8nln(n)"): 0.5**6,
}


def _norm_tail(tail: str) -> str:
    t = re.sub(r"\s+|\*", "", tail.lower()).replace("n^", "n").replace("nstar", "n")
    return t.replace("n'", "n")


def karp_reference(name: str, tail: str) -> float:
    key = (name.strip().lower(), _norm_tail(tail))
    if key not in _KARP:
        raise UnknownReference(f"no reference value for {name!r} at {tail!r}")
    return _KARP[key]


CSV_COLUMNS = ("kappa", "bound", "empirical", "wilson_upper_99", "verdict")


def write_csv(rows: Sequence[dict], stream) -> None:
    w = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in r.items()})


def dominance_rows(bounds: Sequence[float], estimates: Sequence[TailEstimate]) -> list:
    return [{"kappa": e.kappa, "bound": b, "empirical": e.point, "wilson_upper_99": e.wilson_upper_99,
             "verdict": dominance_verdict(b, e)} for b, e in zip(bounds, estimates)]
