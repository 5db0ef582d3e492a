"""Contextual-integrity flow engine.

An information flow is the five-parameter tuple (subject, sender, recipient,
information type, transmission principle). Norm rules match flows with
exact-string-or-wildcard patterns and carry a verdict; the highest-priority
matching rule decides, and a flow no rule matches is Ambiguous, never
silently allowed. Matching is deliberately not semantic: vocabulary
normalization is the rule author's job, so verdicts stay auditable.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources

from .errors import DataError, FlowError, UsageError
from .records import GroupClass, GroupKind

WILDCARD = "*"
FLOW_PARAMS = ("subject", "sender", "recipient", "info_type", "principle")


class Outcome(enum.Enum):
    APPROPRIATE = "Appropriate"
    INAPPROPRIATE = "Inappropriate"
    AMBIGUOUS = "Ambiguous"


@dataclass(frozen=True, slots=True)
class InformationFlow:
    subject: str
    sender: str
    recipient: str
    info_type: str
    principle: str
    subject_class: GroupClass | None = None

    def __post_init__(self):
        for param in FLOW_PARAMS:
            value = getattr(self, param)
            if not isinstance(value, str) or not value.strip():
                raise FlowError(
                    f"flow parameter {param!r} is empty; flows must be fully specified"
                )

    def replace(self, param: str, value: str) -> "InformationFlow":
        if param not in FLOW_PARAMS:
            raise UsageError(f"unknown flow parameter {param!r}")
        kwargs = {p: getattr(self, p) for p in FLOW_PARAMS}
        kwargs[param] = value
        return InformationFlow(subject_class=self.subject_class, **kwargs)

    def to_json_obj(self) -> dict:
        obj = {p: getattr(self, p) for p in FLOW_PARAMS}
        if self.subject_class is not None:
            obj["subject_class"] = {
                "kind": self.subject_class.kind.value,
                "name": self.subject_class.name,
            }
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "InformationFlow":
        if not isinstance(obj, dict):
            raise DataError("flow document must be a JSON object")
        missing = [p for p in FLOW_PARAMS if p not in obj]
        if missing:
            raise FlowError(f"flow is missing parameter {missing[0]!r}")
        subject_class = None
        if "subject_class" in obj and obj["subject_class"] is not None:
            raw = obj["subject_class"]
            try:
                subject_class = GroupClass(GroupKind(raw["kind"]), raw["name"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"bad subject_class: {exc}") from None
        return cls(
            subject=obj["subject"],
            sender=obj["sender"],
            recipient=obj["recipient"],
            info_type=obj["info_type"],
            principle=obj["principle"],
            subject_class=subject_class,
        )


@dataclass(frozen=True, slots=True)
class NormRule:
    rule_id: str
    priority: int
    match: dict[str, str]  # five patterns, literal or "*"
    verdict: Outcome
    rationale: str

    def matches(self, flow: InformationFlow) -> bool:
        return all(
            self.match[p] == WILDCARD or self.match[p] == getattr(flow, p)
            for p in FLOW_PARAMS
        )


@dataclass(frozen=True, slots=True)
class Verdict:
    outcome: Outcome
    matched_rule_id: str | None
    rationale: str

    def to_json_obj(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "matched_rule_id": self.matched_rule_id,
            "rationale": self.rationale,
        }


class RuleSet:
    """Immutable, priority-validated collection of norm rules."""

    def __init__(self, rules: list[NormRule]):
        priorities = [r.priority for r in rules]
        if len(set(priorities)) != len(priorities):
            raise DataError("rule priorities must be unique within a rule set")
        ids = [r.rule_id for r in rules]
        if len(set(ids)) != len(ids):
            raise DataError("rule ids must be unique within a rule set")
        self._rules = tuple(sorted(rules, key=lambda r: -r.priority))

    def __iter__(self):
        return iter(self._rules)

    def __len__(self) -> int:
        return len(self._rules)

    @classmethod
    def from_doc(cls, doc: dict) -> "RuleSet":
        if not isinstance(doc, dict) or "rules" not in doc:
            raise DataError("norms document must be an object with a 'rules' list")
        rules = []
        for i, raw in enumerate(doc["rules"]):
            try:
                match = raw["match"]
                missing = [p for p in FLOW_PARAMS if p not in match]
                if missing:
                    raise DataError(
                        f"rule {i}: match is missing pattern {missing[0]!r}"
                    )
                rules.append(
                    NormRule(
                        rule_id=str(raw["id"]),
                        priority=int(raw["priority"]),
                        match={p: str(match[p]) for p in FLOW_PARAMS},
                        verdict=Outcome(raw["verdict"]),
                        rationale=str(raw.get("rationale", "")),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"bad rule at index {i}: {exc}") from None
        return cls(rules)


def evaluate(flow: InformationFlow, norms: RuleSet) -> Verdict:
    """Highest-priority matching rule decides; no match means Ambiguous."""
    for rule in norms:  # already sorted by descending priority
        if rule.matches(flow):
            return Verdict(rule.verdict, rule.rule_id, rule.rationale)
    return Verdict(
        Outcome.AMBIGUOUS,
        None,
        "no norm rule matches this flow; treat as ambiguous and review",
    )


def perturbations(
    flow: InformationFlow,
    domains: dict[str, list[str]],
    norms: RuleSet,
) -> list[tuple[str, InformationFlow, Verdict]]:
    """Evaluate every flow differing from ``flow`` in exactly one parameter.

    Yields sum(len(domain) - 1) variants as (parameter, flow', verdict).
    Each domain must contain the flow's current value.
    """
    unknown = set(domains) - set(FLOW_PARAMS)
    if unknown:
        raise UsageError(f"unknown flow parameters in domains: {sorted(unknown)}")
    results = []
    for param in FLOW_PARAMS:
        if param not in domains:
            continue
        values = domains[param]
        current = getattr(flow, param)
        if current not in values:
            raise UsageError(
                f"domain for {param!r} does not contain the flow's value {current!r}"
            )
        for value in values:
            if value == current:
                continue
            variant = flow.replace(param, value)
            results.append((param, variant, evaluate(variant, norms)))
    return results


@dataclass(frozen=True, slots=True)
class GateDecision:
    allowed: bool
    verdict: Verdict
    reason: str

    def to_json_obj(self) -> dict:
        return {
            "allowed": self.allowed,
            "verdict": self.verdict.to_json_obj(),
            "reason": self.reason,
        }


def gate_analysis(
    command: str,
    flow: InformationFlow | None,
    norms: RuleSet,
    acknowledge_ambiguous: bool = False,
) -> GateDecision:
    """Decide whether a pipeline analysis may run under its declared flow.

    Fail closed: a missing declaration is an error, Inappropriate blocks,
    and Ambiguous blocks unless explicitly acknowledged.
    """
    if flow is None:
        raise FlowError(
            f"analysis {command!r} has no declared information flow; "
            "declare one (fail-closed policy)"
        )
    verdict = evaluate(flow, norms)
    if verdict.outcome is Outcome.APPROPRIATE:
        return GateDecision(True, verdict, f"{command}: flow judged appropriate")
    if verdict.outcome is Outcome.AMBIGUOUS and acknowledge_ambiguous:
        return GateDecision(
            True, verdict, f"{command}: ambiguous flow explicitly acknowledged"
        )
    return GateDecision(
        False,
        verdict,
        f"{command}: blocked, flow judged {verdict.outcome.value.lower()}"
        + ("" if verdict.rationale == "" else f" ({verdict.rationale})"),
    )


def _load_data(name: str) -> dict:
    with resources.files("dsi_audit.data").joinpath(name).open("r") as handle:
        return json.load(handle)


def load_shipped_norms() -> RuleSet:
    """The rule corpus shipped with the package."""
    return RuleSet.from_doc(_load_data("norms.json"))


def load_shipped_flows() -> dict[str, InformationFlow]:
    """Named example flows shipped with the package."""
    doc = _load_data("flows.json")
    return {
        name: InformationFlow.from_json_obj(obj)
        for name, obj in doc["flows"].items()
    }


def load_shipped_domains() -> dict[str, list[str]]:
    """Single-parameter perturbation domains for the central example flow."""
    return {k: list(v) for k, v in _load_data("flows.json")["domains"].items()}


def load_norms(path) -> RuleSet:
    with open(path, "r", encoding="utf-8") as handle:
        return RuleSet.from_doc(json.load(handle))


def load_flow(path) -> InformationFlow:
    with open(path, "r", encoding="utf-8") as handle:
        return InformationFlow.from_json_obj(json.load(handle))
