"""Execution traces shared by the executors and the decision engine."""

from __future__ import annotations

from dataclasses import dataclass, field

from .callgraph import ZERO, ObjectiveVector, Placement, parse_token


@dataclass
class ExecutionTrace:
    """What one run of a plan cost.

    ``tokens`` are ``"<method>@L"`` / ``"<method>@R"`` in execution order.
    ``surcharges[i]`` is the communication cost paid on entering ``tokens[i]``
    (zero when the placement did not change), so the cost of the decision
    edge into ``tokens[i]`` is ``per_method_costs[method] + surcharges[i]``.
    """

    tokens: list[str] = field(default_factory=list)
    per_method_costs: dict[int, ObjectiveVector] = field(default_factory=dict)
    surcharges: list[ObjectiveVector] = field(default_factory=list)
    output: bytes | None = None
    degraded: bool = False
    requests: int = 0

    def __post_init__(self):
        if not self.surcharges:
            self.surcharges = [ZERO] * len(self.tokens)
        if len(self.surcharges) != len(self.tokens):
            raise ValueError("surcharges must align with tokens")

    @property
    def total(self) -> ObjectiveVector:
        t = c = 0.0
        for tok, extra in zip(self.tokens, self.surcharges):
            cost = self.per_method_costs[parse_token(tok).method]
            t += cost.time_ms + extra.time_ms
            c += cost.cpu_units + extra.cpu_units
        return ObjectiveVector(t, c)

    def step_costs(self) -> list[ObjectiveVector]:
        """Cost of each decision edge along the path, start edge first, end edge last."""
        out = [self.per_method_costs[parse_token(tok).method] + extra for tok, extra in zip(self.tokens, self.surcharges)]
        if self.tokens:
            out.append(ZERO)
        return out

    @property
    def token_string(self) -> str:
        return "-".join(self.tokens)

    def placements(self) -> list[Placement]:
        return [parse_token(t).placement for t in self.tokens]
