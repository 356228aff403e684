"""Structure search: single-player Monte Carlo tree search over rule
applications.

Each tree node is a forest state; children are the canonical rule
applications.  Selection uses the UCT rule with the single-player
variance bonus, leaves expand all their children at once, and rollouts
walk random rules to a stopping state whose value is estimated by
sampling a handful of complete random interfaces and costing them.

Several workers run independent searches and exchange their best states
at a fixed cadence; the search stops once every worker has gone a full
early-stop window without improving on what it knows.
"""

from __future__ import annotations

import logging
import math
import random
import time
from dataclasses import dataclass

from .cost import DEFAULTS, CostParams, interface_cost
from .layout import evaluate, groups_of, realize
from .mapping import MappingContext, MappingResult, random_mapping
from .rules import Context, RuleNotApplicable, SearchState, applicable_rules, apply_rule

log = logging.getLogger(__name__)

#: rollouts force a stop after this many rule applications
ROLLOUT_CAP = 25

#: stand-in for unmappable-state rewards in node statistics, so running
#: sums stay finite; reported rewards keep the true -inf
STAT_FLOOR = -1e9


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the structure search.

    ``es``     iterations a worker may go without improvement before it
               signals done;
    ``workers`` independent searches run side by side;
    ``sync``   iterations between best-state exchanges;
    ``samples`` random interfaces drawn per rollout value estimate;
    ``c``/``d`` exploration and variance constants of the selection rule.
    """

    es: int = 30
    workers: int = 3
    sync: int = 10
    samples: int = 5
    #: selection constants are scaled to the cost units the rewards are
    #: measured in, where meaningful gaps between states run 50-400
    c: float = 100.0
    d: float = 10_000.0
    seed: int = 0
    max_iterations: int | None = None
    max_seconds: float | None = None

    def __post_init__(self):
        for name in ("es", "workers", "sync", "samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.c < 0 or self.d < 0:
            raise ValueError("selection constants must be non-negative")


@dataclass(frozen=True)
class Outcome:
    """Best state a search encountered, with the interface sample that
    earned its reward (seed material for the final mapping search) and
    the rule path that reached it.

    ``path`` holds (rule name, index) pairs, the index taken in the
    canonical applicable-rule order of each state along the way; node
    ids differ between workers, so the path is positional rather than a
    list of concrete rules.
    """

    state: SearchState
    reward: float
    mapping: MappingResult | None
    path: tuple[tuple[str, int], ...] = ()


#: marks a child slot whose rule turned out not to apply; kept in place
#: so sibling indexes stay aligned with the canonical rule order
_DEAD = object()


class MctsNode:
    """One search-tree node: a state plus its visit statistics.

    ``children`` is None until the node is expanded; expanded nodes hold
    one slot per applicable rule, filled in lazily on first selection.
    """

    __slots__ = ("state", "rules", "children", "visits", "rewards", "sum_x", "sum_x2", "best")

    def __init__(self, state: SearchState):
        self.state = state
        self.rules = None
        self.children = None
        self.visits = 0
        self.rewards: list[float] = []
        self.sum_x = 0.0
        self.sum_x2 = 0.0
        self.best = -math.inf

    def record(self, value: float) -> None:
        self.visits += 1
        self.rewards.append(value)
        self.sum_x += value
        self.sum_x2 += value * value
        if value > self.best:
            self.best = value


def uct_score(parent: MctsNode, child: MctsNode, c: float = 1.0, d: float = 100.0) -> float:
    """Best backpropagated reward plus exploration and spread bonuses;
    unvisited children score +inf so each gets tried once.

    In this single-player setting the value estimate is the best reward
    seen below the child, not the mean: a rollout is a lower bound on
    what the subtree can reach, and averaging in the misses makes a
    strong line look weak next to a mediocre but low-variance one.
    """

    if child.visits == 0:
        return math.inf
    value = child.best
    if not math.isfinite(value):
        return value
    explore = c * math.sqrt(math.log(parent.visits) / child.visits)
    spread = math.sqrt(
        (max(0.0, child.sum_x2 - child.visits * value * value) + d) / child.visits
    )
    return value + explore + spread


def reward(
    state: SearchState,
    cat,
    rng: random.Random,
    samples: int = 5,
    params: CostParams = DEFAULTS,
) -> tuple[float, MappingResult | None]:
    """Negated cost of the cheapest of ``samples`` random complete
    interfaces for ``state``, measured above the one-chart baseline.

    Each sample draws a random valid mapping, lays it out with random
    container orientations, and takes the full replay cost.  A state
    admitting no valid mapping at all scores -inf.
    """

    ctx = MappingContext(state, cat, params)
    best: float | None = None
    payload: MappingResult | None = None
    for _ in range(samples):
        res = random_mapping(ctx, rng)
        if res is None:
            continue
        rz = realize(ctx, res)
        orient = {g.ident: ("h" if rng.random() < 0.5 else "v") for g in groups_of(rz.root)}
        boxes, bounds = evaluate(rz.root, orient)
        for ident, target in rz.aliases.items():
            boxes[ident] = boxes[target]
        report = interface_cost(rz.touchpoints, rz.projections, boxes, rz.n_vis, bounds, params)
        total = report.total - params.vis_base_cost
        if best is None or total < best:
            best, payload = total, res
    if best is None:
        return -math.inf, None
    return -best, payload


class _Worker:
    """One independent search: its own tree, random stream, and best-so-far."""

    def __init__(
        self,
        state: SearchState,
        ctx: Context,
        cfg: SearchConfig,
        rng: random.Random,
        params: CostParams,
    ):
        self.tree = MctsNode(state)
        self.ctx = ctx
        self.cfg = cfg
        self.rng = rng
        self.params = params
        self.best = Outcome(state, -math.inf, None)
        self.stale = 0
        self.iterations = 0

    def receive(self, out: Outcome) -> None:
        """Adopt a better state from the exchange.

        Beyond bookkeeping, the received state's rule path is walked
        into this worker's own tree and credited with the received
        reward, so selection on every worker concentrates around the
        best line known anywhere while all its siblings stay open.
        """
        if out.reward <= self.best.reward:
            return
        self.best = out
        self.stale = 0
        node = self.tree
        node.record(max(out.reward, STAT_FLOOR))
        for name, idx in out.path:
            if node.state.terminal:
                break
            if node.children is None:
                self._expand(node)
            if idx >= len(node.rules) or node.rules[idx].name != name:
                break  # canonical orders diverged; stop seeding, keep stats
            child = node.children[idx]
            if child is None:
                child = self._materialize(node, idx)
            if child is None or child is _DEAD:
                break
            node = child
            node.record(max(out.reward, STAT_FLOOR))

    def step(self) -> None:
        path = [self.tree]
        edges: list[tuple[str, int]] = []
        node = self.tree
        while node.children:
            picked = self._select(node)
            if picked is None:
                break
            idx, child = picked
            edges.append((node.rules[idx].name, idx))
            node = child
            path.append(node)
        if node.children is None and not node.state.terminal:
            self._expand(node)
            picked = self._select(node)
            if picked is not None:
                idx, child = picked
                edges.append((node.rules[idx].name, idx))
                node = child
                path.append(node)
        value, state, payload, tail = self._rollout(node.state)
        stat = max(value, STAT_FLOOR)
        for n in path:
            n.record(stat)
        self.iterations += 1
        self.stale += 1
        if value > self.best.reward:
            self.best = Outcome(state, value, payload, tuple(edges) + tail)
            self.stale = 0

    def _expand(self, node: MctsNode) -> None:
        node.rules = tuple(applicable_rules(node.state, self.ctx))
        node.children = [None] * len(node.rules)

    def _select(self, node: MctsNode) -> tuple[int, MctsNode] | None:
        best = None
        best_score = -math.inf
        for i, child in enumerate(node.children):
            if child is _DEAD:
                continue
            if child is None:
                made = self._materialize(node, i)
                if made is None:
                    continue
                return i, made
            score = uct_score(node, child, self.cfg.c, self.cfg.d)
            if score > best_score:
                best, best_score = (i, child), score
        return best

    def _materialize(self, node: MctsNode, i: int) -> MctsNode | None:
        try:
            state = apply_rule(node.state, node.rules[i], self.ctx)
        except RuleNotApplicable:
            node.children[i] = _DEAD
            return None
        child = MctsNode(state)
        node.children[i] = child
        return child

    def _rollout(
        self, state: SearchState
    ) -> tuple[float, SearchState, MappingResult | None, tuple[tuple[str, int], ...]]:
        steps = 0
        tail: list[tuple[str, int]] = []
        while steps < ROLLOUT_CAP:
            rules = applicable_rules(state, self.ctx)
            if not rules:
                break
            open_idx = list(range(len(rules)))
            nxt = None
            while open_idx:
                i = open_idx.pop(self.rng.randrange(len(open_idx)))
                rule = rules[i]
                try:
                    nxt = apply_rule(state, rule, self.ctx)
                except RuleNotApplicable:
                    continue
                break
            if nxt is None:
                break
            state = nxt
            tail.append((rule.name, i))
            if rule.name == "terminate":
                break
            steps += 1
        # Estimates are fresh on every arrival: a state's value is a noisy
        # lower bound, and only repeat visits tighten it.
        value, payload = reward(
            state, self.ctx.catalogue, self.rng, self.cfg.samples, self.params
        )
        return value, state, payload, tuple(tail)


def mcts_search(
    state: SearchState,
    ctx: Context,
    cfg: SearchConfig = SearchConfig(),
    params: CostParams = DEFAULTS,
) -> Outcome:
    """Run the full structure search and return the best state found.

    Workers iterate round-robin in fixed order with seeds derived from
    ``cfg.seed``, so results are reproducible.  The search ends when
    every worker has exhausted its patience and a whole exchange round
    brings no improvement, or when a budget runs out.
    """

    workers = [
        _Worker(state, ctx, cfg, random.Random(1_000_003 * cfg.seed + w), params)
        for w in range(cfg.workers)
    ]
    best = Outcome(state, -math.inf, None)
    deadline = time.monotonic() + cfg.max_seconds if cfg.max_seconds else None
    rounds = 0
    while True:
        for worker in workers:
            quota = cfg.sync
            if cfg.max_iterations is not None:
                quota = min(quota, cfg.max_iterations - worker.iterations)
            for _ in range(max(0, quota)):
                worker.step()
                if deadline is not None and time.monotonic() > deadline:
                    break
        rounds += 1
        round_best = max((w.best for w in workers), key=lambda o: o.reward)
        improved = round_best.reward > best.reward
        if improved:
            best = round_best
        for worker in workers:
            worker.receive(best)
        log.debug(
            "search round=%d best=%.6g stale=%s",
            rounds,
            best.reward,
            [w.stale for w in workers],
        )
        if all(w.stale >= cfg.es for w in workers) and not improved:
            break
        if cfg.max_iterations is not None and all(
            w.iterations >= cfg.max_iterations for w in workers
        ):
            break
        if deadline is not None and time.monotonic() > deadline:
            break
    return best
