"""Usability cost model.

Scores an interface by replaying the query log against it: every query
transition is a set of manipulations (widgets changed, gestures redrawn),
each manipulation has an intrinsic cost that grows with the control's
option count, and moving the pointer between consecutive targets is
charged by a movement-time law over the layout geometry.  Oversized
layouts and extra charts pay fixed penalties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

#: widgets whose manipulation cost scales with the number of options
ENUMERATING_WIDGETS = frozenset({"radio", "dropdown", "checkbox"})

#: in-visualization gestures; manipulation cost is a flat constant
GESTURES = frozenset({"click", "multi_click", "brush_x", "brush_y", "brush_xy", "pan_zoom"})

GESTURE_COST = 20.0


@dataclass(frozen=True)
class CostParams:
    manip_base: float = 50.0
    manip_linear: float = 2.0
    manip_quadratic: float = 0.1
    #: free-text entry pays a keyboard-homing-and-typing base instead of
    #: manip_base; enumerating controls stay cheaper below ten options
    text_entry_base: float = 80.0
    fitts_intercept: float = 1.0
    fitts_slope: float = 25.0
    overflow_penalty: float = 10.0
    #: charged per visualization: splitting every query onto its own
    #: static chart must not read as free, but a second chart has to be
    #: able to pay for itself when it replaces a stack of widgets
    vis_base_cost: float = 100.0
    max_width: float | None = None
    max_height: float | None = None


DEFAULTS = CostParams()


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


def centroid_distance(a: Box, b: Box) -> float:
    (ax, ay), (bx, by) = a.centroid, b.centroid
    return math.hypot(bx - ax, by - ay)


def manipulation_cost(kind: str, options: int = 0, params: CostParams = DEFAULTS) -> float:
    """Intrinsic cost of operating one control once."""
    if kind in GESTURES:
        return GESTURE_COST
    if kind == "textbox":
        return params.text_entry_base
    d = options if kind in ENUMERATING_WIDGETS else 0
    return params.manip_base + params.manip_linear * d + params.manip_quadratic * d * d


def fitts_time(distance: float, width: float, params: CostParams = DEFAULTS) -> float:
    """Movement time to a target of effective width ``width`` at ``distance``."""
    if distance <= 0 or width <= 0:
        return params.fitts_intercept
    return params.fitts_intercept + params.fitts_slope * math.log2(2.0 * distance / width)


@dataclass(frozen=True)
class Touchpoint:
    """One physically manipulable control, for costing.

    ``order`` fixes the within-transition manipulation order (document
    order of the covered tree nodes); ``covered`` lists the choice nodes
    the control drives, across all trees it reaches.
    """

    ident: str
    kind: str
    options: int = 0
    order: tuple = ()
    covered: tuple[int, ...] = ()


@dataclass
class CostReport:
    manipulation: float = 0.0
    navigation: float = 0.0
    layout_penalty: float = 0.0
    vis_base: float = 0.0
    manipulations: int = 0

    @property
    def total(self) -> float:
        return self.manipulation + self.navigation + self.layout_penalty + self.vis_base


def layout_penalty(bounds: Box | None, params: CostParams = DEFAULTS) -> float:
    if bounds is None:
        return 0.0
    over_w = max(0.0, bounds.w - params.max_width) if params.max_width is not None else 0.0
    over_h = max(0.0, bounds.h - params.max_height) if params.max_height is not None else 0.0
    return params.overflow_penalty * (over_w + over_h)


def replay_sequence(touchpoints: list[Touchpoint], projections: list[dict]) -> list[Touchpoint]:
    """The manipulations a user performs to walk the log, in order.

    ``projections[q]`` maps a touchpoint ident to the view of query ``q``'s
    binding through that control's covered nodes (absent ident = control
    untouched by that query).  The first query charges every control it
    binds; later queries charge controls whose view changed.
    """

    ordered = sorted(touchpoints, key=lambda t: t.order)
    sequence: list[Touchpoint] = []
    previous: dict = {}
    for qi, proj in enumerate(projections):
        for t in ordered:
            now = proj.get(t.ident)
            if qi == 0:
                if now is not None:
                    sequence.append(t)
            elif now != previous.get(t.ident):
                sequence.append(t)
        previous = proj
    return sequence


def interface_cost(
    touchpoints: list[Touchpoint],
    projections: list[dict],
    boxes: dict[str, Box] | None = None,
    n_vis: int = 0,
    bounds: Box | None = None,
    params: CostParams = DEFAULTS,
) -> CostReport:
    """Total cost of an interface over a query log replay.

    Without ``boxes`` (no layout yet) only manipulation and chart costs
    are counted — the pre-layout ranking the mapping search uses.
    """

    report = CostReport(vis_base=params.vis_base_cost * n_vis)
    sequence = replay_sequence(touchpoints, projections)
    report.manipulations = len(sequence)
    for t in sequence:
        report.manipulation += manipulation_cost(t.kind, t.options, params)
    if boxes is not None:
        for prev, nxt in zip(sequence, sequence[1:]):
            a, b = boxes.get(prev.ident), boxes.get(nxt.ident)
            if a is None or b is None:
                continue
            width = min(b.w, b.h)
            report.navigation += fitts_time(centroid_distance(a, b), width, params)
        report.layout_penalty = layout_penalty(bounds, params)
    return report
