"""Blinded pairwise judging of rationale pairs and win/tie/loss aggregation.

Each task pairs one client's baseline and web-search rationales. The pair
is shown as A/B in a per-task random order; verdicts are unblinded back to
``win`` (search preferred), ``tie`` or ``loss`` (baseline preferred).
"""

from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import httpx
import numpy as np

from .advisory.http import ChatClient, ChatEndpoint, message_content
from .advisory.prompts import render_profile
from .errors import AuditError, InsufficientSampleError, TransportError
from .sampling import ClientProfile
from .stats import cohen_kappa

log = logging.getLogger(__name__)

DIMENSIONS = ("market_grounding", "specificity", "profile_relevance", "depth")
DIMENSION_LABELS = {
    "market_grounding": "Market grounding",
    "specificity": "Specificity",
    "profile_relevance": "Profile relevance",
    "depth": "Depth",
}
DIMENSION_DEFINITIONS = {
    "market_grounding": "Does the rationale refer to present-day interest rates or the current economic backdrop?",
    "specificity": "Does the rationale back its choices with concrete figures, products by name, or explicitly stated client attributes?",
    "profile_relevance": "How closely is the reasoning fitted to this particular client's circumstances?",
    "depth": "How complete and thorough is the reasoning overall?",
}
PREFERENCES = ("A", "B", "tie")
WIN, TIE, LOSS, ABSTAIN = "win", "tie", "loss", "abstain"


class JudgeParseError(AuditError, ValueError):
    pass


@dataclass(frozen=True)
class JudgeTask:
    """One client's rationale pair; ``swapped`` puts the search rationale in slot A."""

    profile_id: int
    baseline_rationale: str
    search_rationale: str
    swapped: bool
    profile: ClientProfile | None = None

    def __post_init__(self):
        if not self.baseline_rationale.strip() or not self.search_rationale.strip():
            raise ValueError(f"profile {self.profile_id}: both rationales must be non-empty")

    @property
    def dimensions(self) -> tuple[str, ...]:
        return DIMENSIONS

    @property
    def rationale_a(self) -> str:
        return self.search_rationale if self.swapped else self.baseline_rationale

    @property
    def rationale_b(self) -> str:
        return self.baseline_rationale if self.swapped else self.search_rationale


def blinding_order(run_seed: int, profile_id: int) -> bool:
    """Stable per-task coin flip deciding whether the search rationale is shown first."""
    return bool(np.random.default_rng([run_seed, profile_id]).integers(2))


def make_task(profile_id: int, baseline: str, search: str, run_seed: int, profile: ClientProfile | None = None) -> JudgeTask:
    return JudgeTask(profile_id, baseline, search, blinding_order(run_seed, profile_id), profile)


def permute(label: str, swapped: bool) -> str:
    """Swap A and B when ``swapped``; applying it twice is the identity."""
    if swapped and label in ("A", "B"):
        return "B" if label == "A" else "A"
    return label


def unblind(label: str, swapped: bool) -> str:
    """Map a blinded preference to win/tie/loss from the search rationale's side."""
    canonical = permute(label, swapped)  # canonical order: A = baseline, B = search
    return {"A": LOSS, "B": WIN, "tie": TIE, ABSTAIN: ABSTAIN}[canonical]


def sample_clients(eligible_ids: Sequence[int], n: int, seed: int) -> list[int]:
    """Seeded draw of ``n`` distinct ids, returned sorted."""
    ids = sorted(set(int(i) for i in eligible_ids))
    if n > len(ids):
        raise InsufficientSampleError(f"requested {n} clients but only {len(ids)} have both conditions")
    picked = np.random.default_rng(seed).choice(len(ids), size=n, replace=False)
    return sorted(ids[i] for i in picked)


def judge_schema() -> dict:
    return {
        "type": "object",
        "properties": {d: {"type": "string", "enum": list(PREFERENCES)} for d in DIMENSIONS},
        "required": list(DIMENSIONS),
        "additionalProperties": False,
    }


def build_judge_prompt(task: JudgeTask) -> str:
    parts = [
        "You are reviewing two explanations written by financial advisors for the same client. "
        "Compare them on each dimension below and state which one is better, or 'tie' if neither is.",
    ]
    if task.profile is not None:
        parts.append("Client profile:\n" + render_profile(task.profile))
    parts.append("Rationale A:\n" + task.rationale_a)
    parts.append("Rationale B:\n" + task.rationale_b)
    parts.append("Dimensions:\n" + "\n".join(f"- {d}: {DIMENSION_DEFINITIONS[d]}" for d in DIMENSIONS))
    parts.append(
        'Answer with a JSON object mapping each dimension name to "A", "B" or "tie", for example '
        + json.dumps({d: "tie" for d in DIMENSIONS})
        + "."
    )
    return "\n\n".join(parts)


def parse_judge_response(text: str) -> dict[str, str]:
    body = text.strip()
    fenced = re.search(r"```(?:json)?\s*(.*?)```", body, re.S)
    if fenced:
        body = fenced.group(1)
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exc:
        raise JudgeParseError(f"judge response is not JSON: {exc}") from None
    if not isinstance(data, dict):
        raise JudgeParseError("judge response must be a JSON object")
    out = {}
    for dim in DIMENSIONS:
        value = data.get(dim)
        if isinstance(value, str) and value.strip().lower() == "tie":
            value = "tie"
        elif isinstance(value, str):
            value = value.strip().upper()
        if value not in PREFERENCES:
            raise JudgeParseError(f"dimension {dim!r}: expected one of {PREFERENCES}, got {data.get(dim)!r}")
        out[dim] = value
    return out


Respond = Callable[[str, JudgeTask], str]


def length_judge(prompt: str, task: JudgeTask) -> str:
    """Scripted judge preferring the longer rationale on every dimension, tie on equal length."""
    a, b = len(task.rationale_a), len(task.rationale_b)
    pick = "A" if a > b else "B" if b > a else "tie"
    return json.dumps({d: pick for d in DIMENSIONS})


class HttpJudge:
    def __init__(self, spec: ChatEndpoint, client: httpx.Client | None = None, sleep=time.sleep):
        self.chat = ChatClient(spec, client, sleep)

    def __call__(self, prompt: str, task: JudgeTask) -> str:
        return message_content(self.chat.chat(prompt, judge_schema(), "pairwise_judgment"))


@dataclass
class Verdict:
    judge: str
    profile_id: int
    swapped: bool
    raw: dict[str, str]
    outcome: dict[str, str] = field(default_factory=dict)
    error: str | None = None

    def __post_init__(self):
        if not self.outcome:
            self.outcome = {d: unblind(self.raw[d], self.swapped) for d in DIMENSIONS}

    def to_dict(self) -> dict:
        return {
            "judge": self.judge,
            "profile_id": self.profile_id,
            "swapped": self.swapped,
            "raw": self.raw,
            "outcome": self.outcome,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Verdict":
        return cls(data["judge"], data["profile_id"], data["swapped"], data["raw"], data["outcome"], data.get("error"))


def run_judge(name: str, respond: Respond, task: JudgeTask, attempts: int = 2) -> Verdict:
    """Ask one judge about one task; an unparseable answer is retried once, then abstains."""
    prompt = build_judge_prompt(task)
    error = None
    for _ in range(attempts):
        try:
            raw = parse_judge_response(respond(prompt, task))
            return Verdict(name, task.profile_id, task.swapped, raw)
        except (JudgeParseError, TransportError) as exc:
            error = str(exc)
            log.warning("judge %s, profile %d: %s", name, task.profile_id, error)
    return Verdict(name, task.profile_id, task.swapped, {d: ABSTAIN for d in DIMENSIONS}, error=error)


def judge_all(tasks: Sequence[JudgeTask], judges: Mapping[str, Respond], max_in_flight: int = 1) -> list[Verdict]:
    """Every judge on every task, ordered by judge name then profile_id."""
    jobs = [(name, judges[name], t) for name in sorted(judges) for t in sorted(tasks, key=lambda t: t.profile_id)]
    if max_in_flight <= 1:
        return [run_judge(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(lambda job: run_judge(*job), jobs))


def _rates(outcomes: list[str]) -> dict:
    used = [o for o in outcomes if o != ABSTAIN]
    n = len(used)
    out = {"n": n, "abstain": len(outcomes) - n}
    if n == 0:
        return {**out, WIN: None, TIE: None, LOSS: None}
    win, tie = used.count(WIN) / n, used.count(TIE) / n
    return {**out, WIN: win, TIE: tie, LOSS: used.count(LOSS) / n}


def aggregate(verdicts: Sequence[Verdict]) -> dict:
    """Win/tie/loss rates per judge and pooled, with per-dimension kappa for two judges."""
    by_judge: dict[str, dict[int, Verdict]] = {}
    for v in verdicts:
        by_judge.setdefault(v.judge, {})[v.profile_id] = v
    judges = sorted(by_judge)
    task_sets = {j: set(by_judge[j]) for j in judges}
    if len({frozenset(s) for s in task_sets.values()}) > 1:
        raise ValueError("judges were run on different task sets")
    ids = sorted(next(iter(task_sets.values()), set()))
    result = {"judges": judges, "n_tasks": len(ids), "per_judge": {}, "pooled": {}, "kappa": {}}
    for j in judges:
        result["per_judge"][j] = {d: _rates([by_judge[j][i].outcome[d] for i in ids]) for d in DIMENSIONS}
    for d in DIMENSIONS:
        result["pooled"][d] = _rates([by_judge[j][i].outcome[d] for j in judges for i in ids])
        win_rates = [result["per_judge"][j][d][WIN] for j in judges if result["per_judge"][j][d][WIN] is not None]
        result["pooled"][d]["win_sd_across_judges"] = float(np.std(win_rates, ddof=1)) if len(win_rates) > 1 else None
        if len(judges) == 2:
            pairs = [
                (by_judge[judges[0]][i].outcome[d], by_judge[judges[1]][i].outcome[d])
                for i in ids
                if ABSTAIN not in (by_judge[judges[0]][i].outcome[d], by_judge[judges[1]][i].outcome[d])
            ]
            result["kappa"][d] = cohen_kappa([a for a, _ in pairs], [b for _, b in pairs]) if pairs else None
    kappas = [k for k in result["kappa"].values() if k is not None]
    result["mean_kappa"] = float(np.mean(kappas)) if kappas else None
    return result


def _rate(v: float | None, bold: bool = False) -> str:
    if v is None:
        return "---"
    text = f"{v:.2f}"
    return f"**{text}**" if bold and v < 0.5 else text


def markdown_table(summary: dict) -> str:
    """Pooled win and tie rate per dimension; win rates below 0.5 in bold; loss = 1 - win - tie."""
    lines = ["| Dimension | Win | Tie | Loss | κ |", "|---|---:|---:|---:|---:|"]
    for d in DIMENSIONS:
        row = summary["pooled"][d]
        kappa = summary["kappa"].get(d)
        lines.append(
            f"| {DIMENSION_LABELS[d]} | {_rate(row[WIN], bold=True)} | {_rate(row[TIE])} | {_rate(row[LOSS])} | "
            + ("---" if kappa is None else f"{kappa:.2f}")
            + " |"
        )
    return "\n".join(lines) + "\n"
