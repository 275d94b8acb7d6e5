"""Folding engine: choose per-layer (P, S, M) so every compute layer meets
the cycle budget implied by a target frame rate.

A layer with X neurons of Y synapses folds as Fn = X/P, Fs = Y/S; a
convolution additionally repeats the matrix-vector product once per output
pixel (Fm), reduced to ceil(Fm/M) when M vectors share one weight fetch.
The initiation interval II = Fn*Fs*ceil(Fm/M) cycles bounds the frame rate
at clock/II; rate balancing means every layer's II sits near the budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import ScheduleInfeasibleError, ValidationError
from .model import LayerGeometry, LayerKind, Topology
from .pipeline import count_ops
from .reportfmt import format_table


def _divisors(n: int) -> list[int]:
    small, large = [], []
    d = 1
    while d * d <= n:
        if n % d == 0:
            small.append(d)
            if d != n // d:
                large.append(n // d)
        d += 1
    return small + large[::-1]


def ii_of(geometry: LayerGeometry, p: int, s: int, m: int = 1) -> int:
    """Initiation interval (X/P)*(Y/S)*ceil(Fm/M) in cycles."""
    x, y = geometry.neurons, geometry.synapses_per_neuron
    if geometry.kind is LayerKind.MAXPOOL2X2:
        raise ValidationError("pooling layers are not folded")
    if p < 1 or s < 1 or m < 1:
        raise ValidationError("P, S and M must be positive")
    if x % p or y % s:
        raise ValidationError(f"P must divide X={x} and S must divide Y={y}")
    if geometry.kind is LayerKind.FULLY_CONNECTED and m != 1:
        raise ValidationError("fully-connected layers have Fm = 1; M must be 1")
    fm = geometry.ofm_pixels
    return (x // p) * (y // s) * math.ceil(fm / m)


@dataclass(frozen=True)
class FoldingEntry:
    """Chosen folding of one compute layer."""

    layer_index: int
    label: str
    x: int
    y: int
    fm: int
    p: int
    s: int
    m: int

    @property
    def fn(self) -> int:
        return self.x // self.p

    @property
    def fs(self) -> int:
        return self.y // self.s

    @property
    def fm_eff(self) -> int:
        return math.ceil(self.fm / self.m)

    @property
    def ii(self) -> int:
        return self.fn * self.fs * self.fm_eff

    @property
    def cost(self) -> int:
        """Hardware neurons times synapses: P*S."""
        return self.p * self.s

    def to_json(self) -> dict:
        return {
            "layer": self.label,
            "P": self.p,
            "S": self.s,
            "M": self.m,
            "Fn": self.fn,
            "Fs": self.fs,
            "Fm": self.fm,
            "II": self.ii,
        }


@dataclass(frozen=True)
class FoldingConfig:
    entries: tuple[FoldingEntry, ...]

    def by_index(self, layer_index: int) -> FoldingEntry:
        for e in self.entries:
            if e.layer_index == layer_index:
                return e
        raise KeyError(layer_index)

    @property
    def ii_max(self) -> int:
        return max(e.ii for e in self.entries)


@dataclass(frozen=True)
class ScheduleReport:
    """Folding summary. achieved_fps = clock/ii_max is the pipeline's
    capacity; gops is computed at the delivered rate min(target, achieved),
    since frames only enter at the offered frame rate."""

    network: str
    clock_hz: int
    target_fps: int
    budget: int
    ii_max: int
    total_ops: int

    @property
    def achieved_fps_exact(self) -> Fraction:
        return Fraction(self.clock_hz, self.ii_max)

    @property
    def achieved_fps(self) -> float:
        return float(self.achieved_fps_exact)

    @property
    def delivered_fps(self) -> float:
        return float(min(Fraction(self.target_fps), self.achieved_fps_exact))

    @property
    def gops(self) -> float:
        return self.total_ops * self.delivered_fps / 1e9

    def to_json(self) -> dict:
        return {
            "network": self.network,
            "clock_hz": self.clock_hz,
            "target_fps": self.target_fps,
            "cycle_budget": self.budget,
            "ii_max": self.ii_max,
            "achieved_fps": self.achieved_fps,
            "delivered_fps": self.delivered_fps,
            "total_ops": self.total_ops,
            "gops": self.gops,
        }


def schedule(
    topology: Topology,
    target_fps: int,
    clock_hz: int,
    mmv_allowed: bool = False,
    mmv_max: int = 1,
) -> tuple[FoldingConfig, ScheduleReport]:
    """Pick the cheapest (P, S, M) per compute layer with II within the
    budget floor(clock/target_fps).

    Cost is P*S; ties prefer larger S (wider weight memories per PE), then
    larger P, then larger M when multi-vector execution is allowed. Raises
    ScheduleInfeasibleError naming the layers that cannot meet the budget
    even fully parallel.
    """
    if target_fps <= 0:
        raise ValidationError("target_fps must be positive")
    if clock_hz <= 0:
        raise ValidationError("clock_hz must be positive")
    if mmv_allowed and mmv_max < 1:
        raise ValidationError("mmv_max must be >= 1")
    budget = clock_hz // target_fps
    labels = topology.labels()

    entries = []
    infeasible = []
    for i, g in topology.mvu_layers():
        x, y, fm = g.neurons, g.synapses_per_neuron, g.ofm_pixels
        conv = g.kind is LayerKind.CONV3X3
        # M beyond Fm adds lanes with no work left to share.
        m_choices = range(1, min(mmv_max, fm) + 1) if (mmv_allowed and conv) else (1,)
        best = None
        for p in _divisors(x):
            for s in _divisors(y):
                base = (x // p) * (y // s)
                for m in m_choices:
                    if base * math.ceil(fm / m) > budget:
                        continue
                    key = (p * s, -s, -p, -m)
                    if best is None or key < best[0]:
                        best = (key, p, s, m)
        if best is None:
            infeasible.append(labels[i])
            continue
        entries.append(FoldingEntry(i, labels[i], x, y, fm, best[1], best[2], best[3]))

    if infeasible:
        raise ScheduleInfeasibleError(
            f"no folding meets the {budget}-cycle budget for: {', '.join(infeasible)}",
            layers=tuple(infeasible),
        )
    config = FoldingConfig(tuple(entries))
    report = ScheduleReport(
        network=topology.name,
        clock_hz=clock_hz,
        target_fps=target_fps,
        budget=budget,
        ii_max=config.ii_max,
        total_ops=count_ops(topology).total_ops,
    )
    return config, report


@dataclass(frozen=True)
class RateBalanceReport:
    """How evenly the cycle counts are spread across layers."""

    ii_max: int
    ii_min: int
    over_provisioned: tuple[str, ...]  # layers with II < ii_max / 2

    @property
    def ratio(self) -> float:
        return self.ii_max / self.ii_min

    def to_json(self) -> dict:
        return {
            "ii_max": self.ii_max,
            "ii_min": self.ii_min,
            "ratio": self.ratio,
            "over_provisioned": list(self.over_provisioned),
        }


def rate_balance_check(config: FoldingConfig) -> RateBalanceReport:
    iis = [(e.label, e.ii) for e in config.entries]
    ii_max = max(ii for _, ii in iis)
    ii_min = min(ii for _, ii in iis)
    flagged = tuple(lbl for lbl, ii in iis if ii < ii_max / 2)
    return RateBalanceReport(ii_max, ii_min, flagged)


def render_schedule_text(config: FoldingConfig, report: ScheduleReport) -> str:
    rows = [
        (e.label, e.x, e.y, e.fm, e.p, e.s, e.m, e.fn, e.fs, e.ii)
        for e in config.entries
    ]
    table = format_table(
        ("layer", "X", "Y", "Fm", "P", "S", "M", "Fn", "Fs", "II"), rows
    )
    summary = (
        f"budget {report.budget} cycles @ {report.clock_hz/1e6:.0f} MHz, "
        f"ii_max {report.ii_max}, capacity {report.achieved_fps:.1f} fps, "
        f"delivered {report.delivered_fps:.1f} fps, {report.gops:.1f} GOps/s"
    )
    return f"{report.network} schedule\n{table}\n{summary}"


def schedule_json(config: FoldingConfig, report: ScheduleReport) -> dict:
    return {"layers": [e.to_json() for e in config.entries], "summary": report.to_json()}
