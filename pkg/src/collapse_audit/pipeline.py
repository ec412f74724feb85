"""Pipeline stages over a run directory.

Layout::

    config.json                      validated config and its hash
    profiles.jsonl, sampling.json    sampled clients and the orthogonality check
    recommendations/<condition>.jsonl, recommendations/schema.json
    transcripts/<condition>/         raw HTTP exchanges (http advisors only)
    encoder.json
    surrogates/<condition>/<class>.json
    concentration/<condition>.json, concentration/table.md, fc_r2.csv
    portfolio_metrics/<condition>.json, portfolio_metrics/comparison.json, portfolio_metrics/table.md
    judge/verdicts.jsonl, judge/summary.json, judge/table.md
    report.json, report.md
    manifests/<stage>.json
"""

from __future__ import annotations

import csv
import io
import logging
import platform
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import __version__
from .advisory import (
    HttpAdvisor,
    RecommendationStore,
    class_slug,
    collect,
    make_mock,
    normalize_condition,
    recommendation_schema,
)
from .advisory.http import write_transcript_factory
from .advisory.prompts import BASELINE, WEB_SEARCH
from .advisory.recommendation import Recommendation
from .concentration import Thresholds, concentration_report
from .concentration import markdown_table as concentration_table
from .config import RunConfig, load_config_dict
from .errors import AuditError, ConfigError, ManifestMismatch
from .features import Encoder, derive, encoder_for_plan
from .judge import HttpJudge, Verdict, aggregate, judge_all, length_judge, make_task, sample_clients
from .judge import markdown_table as judge_table
from .portfolio import condition_metrics, is_multiple_of_5, stated_allocations, to_weights
from .portfolio import markdown_table as portfolio_table
from .sampling import ClientProfile, generate_profiles
from .stats import chi_square_proportions, cohen_d_paired, mann_whitney_u, stars, wilcoxon_signed_rank
from .store import RunStore, dumps_line
from .surrogate import fit_all

log = logging.getLogger(__name__)

Advise = Callable[[ClientProfile, str], Recommendation]

STAGES = ("plan", "sample", "collect", "fit", "metrics", "judge", "report")
# stages whose outputs are pure functions of config, recommendations and verdicts
DERIVED_STAGES = ("sample", "fit", "metrics", "judge", "report")


def recs_rel(condition: str) -> str:
    return f"recommendations/{condition}.jsonl"


def _versions() -> dict:
    import numba
    import scipy

    return {
        "collapse_audit": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


@dataclass
class ReplayResult:
    scratch: Path
    compared: dict[str, str] = field(default_factory=dict)
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


class Pipeline:
    """Runs stages against one run directory.

    ``advisors`` and ``judges`` override the callables the config would
    build; tests use them to inject HTTP clients or failing advisors.
    """

    def __init__(
        self,
        config: RunConfig,
        run_dir,
        advisors: Mapping[str, Advise] | None = None,
        judges: Mapping[str, Callable] | None = None,
        http_client=None,
    ):
        self.config = config
        self.store = RunStore(run_dir)
        self.catalog = config.catalog()
        self.plan_ = config.plan()
        self.advisors = {normalize_condition(k): v for k, v in (advisors or {}).items()}
        self.judges = dict(judges or {})
        self.http_client = http_client
        self.hash = config.config_hash()

    @classmethod
    def from_run_dir(cls, run_dir, **kw) -> "Pipeline":
        stored = RunStore(run_dir).read_json("config.json", "plan")
        return cls(load_config_dict(stored["config"]), run_dir, **kw)

    # plan / sample

    def plan(self) -> dict:
        """Validate the config and pin it to the run directory."""
        missing = self.config.check_credentials()
        if missing:
            raise ConfigError(f"credential environment variables not set: {', '.join(missing)}")
        if self.store.exists("config.json"):
            recorded = self.store.read_json("config.json")["config_hash"]
            if recorded != self.hash:
                raise ConfigError(
                    f"{self.store.path('config.json')} was written by config {recorded[:12]}, not {self.hash[:12]};"
                    " use a fresh --run-dir"
                )
        self.store.write_json(
            "config.json", {"config_hash": self.hash, "config": self.config.model_dump(mode="json", exclude={"run_dir"})}
        )
        self.store.write_manifest("plan", self.hash, [], ["config.json"])
        return {"config_hash": self.hash, "conditions": self.config.conditions()}

    def _require_plan(self, stage: str) -> None:
        self.store.require("config.json", "plan")
        recorded = self.store.read_json("config.json")["config_hash"]
        if recorded != self.hash:
            raise ConfigError(f"stage {stage}: run directory belongs to config {recorded[:12]}")

    def sample(self) -> dict:
        self._require_plan("sample")
        result = generate_profiles(self.plan_)
        body = "".join(p.to_json() + "\n" for p in result.profiles)
        info = {
            "n_samples": len(result.profiles),
            "seed_requested": self.plan_.seed,
            "seed_used": result.seed_used,
            "attempts": result.attempts,
            "orthogonality": result.check.to_dict(),
            "unique_values": {d.name: len({getattr(p, d.name) for p in result.profiles}) for d in self.plan_.dimensions},
        }
        unchanged = self.store.exists("profiles.jsonl") and self.store.path("profiles.jsonl").read_text() == body
        if not unchanged:
            self.store.write_text("profiles.jsonl", body)
        self.store.write_json("sampling.json", info)
        self.store.write_manifest("sample", self.hash, ["config.json"], ["profiles.jsonl", "sampling.json"])
        return {**info, "unchanged": unchanged}

    def profiles(self) -> list[ClientProfile]:
        return [ClientProfile.from_dict(d) for d in self.store.read_jsonl("profiles.jsonl", "sample")]

    # collect

    def advisor(self, condition: str) -> Advise:
        if condition in self.advisors:
            return self.advisors[condition]
        spec = self.config.advisors.get(condition)
        if spec is None:
            raise ConfigError(f"no advisor configured for condition {condition!r}")
        if spec.kind == "mock":
            return make_mock(spec.mock, self.catalog, spec.params, self.plan_)
        transcripts = write_transcript_factory(self.store.path("transcripts"))
        return HttpAdvisor(spec.endpoint_spec(), self.catalog, client=self.http_client, transcripts=transcripts)

    def collect(self, condition: str) -> dict:
        condition = normalize_condition(condition)
        self._require_plan("collect")
        profiles = self.profiles()
        self.store.write_json("recommendations/schema.json", recommendation_schema(self.catalog))
        rec_store = RecommendationStore(self.store.path(recs_rel(condition)))
        spec = self.config.advisors.get(condition)
        try:
            result = collect(
                profiles,
                self.advisor(condition),
                rec_store,
                condition,
                self.catalog,
                max_in_flight=spec.max_in_flight if spec else 1,
                max_failure_fraction=self.config.max_failure_fraction,
            )
        finally:
            if rec_store.path.exists():
                self.store.write_manifest(
                    f"collect_{condition}", self.hash, ["profiles.jsonl"], [recs_rel(condition), "recommendations/schema.json"]
                )
        return {
            "condition": condition,
            "requested": result.requested,
            "skipped": result.skipped,
            "collected": result.collected,
            "failures": len(result.failures),
        }

    def collected_conditions(self) -> list[str]:
        return [c for c in self.config.conditions() if self.store.exists(recs_rel(c))]

    def recommendations(self, condition: str) -> list[Recommendation]:
        rows = self.store.read_jsonl(recs_rel(condition), f"collect --condition {condition}")
        return [Recommendation.from_dict(r) for r in rows]

    def _need_conditions(self) -> list[str]:
        conds = self.collected_conditions()
        if not conds:
            first = self.config.conditions()[0]
            self.store.require(recs_rel(first), f"collect --condition {first}")
        return conds

    # fit

    def fit(self) -> dict:
        self._require_plan("fit")
        profiles = self.profiles()
        by_id = {p.profile_id: p for p in profiles}
        derived = self.config.features.derived()
        encoder = encoder_for_plan([derive(p, derived) for p in profiles], self.plan_, derived)
        self.store.write_json("encoder.json", encoder.to_dict())
        thresholds = Thresholds(self.config.thresholds.r2_min, self.config.thresholds.fc_high)
        grid = self.config.grid.grid(self.config.seeds.surrogate)
        inputs, outputs, reports = ["config.json", "profiles.jsonl"], ["encoder.json"], {}
        for cond in self._need_conditions():
            recs = sorted(self.recommendations(cond), key=lambda r: r.profile_id)
            inputs.append(recs_rel(cond))
            fm = encoder.transform([derive(by_id[r.profile_id], derived) for r in recs])
            pw = [to_weights(r, self.catalog) for r in recs]
            if self.config.surrogate_targets == "product":
                names, target_w = self.catalog.products, np.array([p.weights for p in pw]) * 100.0
            else:
                names, target_w = self.catalog.classes, np.array([p.class_weights for p in pw]) * 100.0
            targets = {name: target_w[:, j] for j, name in enumerate(names)}
            fits = fit_all(fm.values, targets, grid, fm.column_names, thresholds.r2_min, self.config.n_jobs)
            for cls, f in fits.items():
                rel = f"surrogates/{cond}/{class_slug(cls)}.json"
                self.store.write_json(rel, f.to_dict())
                outputs.append(rel)
            report = concentration_report(fits, fm.column_origin, thresholds)
            report["warnings"] = fm.warnings
            report["n_clients"] = len(recs)
            reports[cond] = report
            self.store.write_json(f"concentration/{cond}.json", report)
            outputs.append(f"concentration/{cond}.json")
        self.store.write_text("concentration/table.md", concentration_table(reports))
        self.store.write_text("fc_r2.csv", _fc_csv(reports))
        outputs += ["concentration/table.md", "fc_r2.csv"]
        self.store.write_manifest("fit", self.hash, inputs, outputs)
        return {c: [(r["asset_class"], r["diagnosis"]) for r in rep["classes"]] for c, rep in reports.items()}

    def encoder(self) -> Encoder:
        return Encoder.from_dict(self.store.read_json("encoder.json", "fit"))

    # metrics

    def metrics(self) -> dict:
        self._require_plan("metrics")
        conds = self._need_conditions()
        metrics, recs = {}, {}
        for cond in conds:
            recs[cond] = self.recommendations(cond)
            metrics[cond] = condition_metrics(recs[cond], self.catalog, cond)
            self.store.write_json(f"portfolio_metrics/{cond}.json", metrics[cond].to_dict())
        outputs = [f"portfolio_metrics/{c}.json" for c in conds]
        comparison = None
        if BASELINE in metrics and WEB_SEARCH in metrics:
            comparison = compare_conditions(metrics[BASELINE], metrics[WEB_SEARCH], recs[BASELINE], recs[WEB_SEARCH], self.config.thresholds.exact_max_n)
            self.store.write_json("portfolio_metrics/comparison.json", comparison)
            outputs.append("portfolio_metrics/comparison.json")
        base = metrics.get(BASELINE) or metrics[conds[0]]
        label = self._advisor_label(base.condition)
        self.store.write_text("portfolio_metrics/table.md", portfolio_table([(label, base.to_dict(), comparison)]))
        outputs.append("portfolio_metrics/table.md")
        self.store.write_manifest("metrics", self.hash, ["config.json"] + [recs_rel(c) for c in conds], outputs)
        return {c: {"hhi": m.to_dict()["hhi"], "jaccard": m.to_dict()["jaccard"]} for c, m in metrics.items()}

    def _advisor_label(self, condition: str) -> str:
        spec = self.config.advisors.get(condition)
        if spec is None:
            return condition
        return spec.mock if spec.kind == "mock" else spec.model

    # judge

    def _judge_callables(self) -> dict:
        if self.judges:
            return self.judges
        out = {}
        for j in self.config.judging.judges:
            out[j.name] = length_judge if j.kind == "mock" else HttpJudge(j.endpoint_spec(), client=self.http_client)
        return out

    def judge(self) -> dict:
        """Collect verdicts on a seeded client sample, then aggregate them."""
        self._require_plan("judge")
        for cond in (BASELINE, WEB_SEARCH):
            self.store.require(recs_rel(cond), f"collect --condition {cond}")
        base = {r.profile_id: r for r in self.recommendations(BASELINE)}
        search = {r.profile_id: r for r in self.recommendations(WEB_SEARCH)}
        eligible = [i for i in base if i in search and base[i].rationale.strip() and search[i].rationale.strip()]
        ids = sample_clients(eligible, self.config.judging.n_clients, self.config.seeds.judge)
        by_id = {p.profile_id: p for p in self.profiles()}
        tasks = [make_task(i, base[i].rationale, search[i].rationale, self.config.seeds.judge, by_id[i]) for i in ids]
        verdicts = judge_all(tasks, self._judge_callables(), self.config.judging.max_in_flight)
        self.store.write_text("judge/verdicts.jsonl", "".join(dumps_line(v.to_dict()) for v in verdicts))
        self.store.write_manifest(
            "judge_verdicts", self.hash, ["profiles.jsonl", recs_rel(BASELINE), recs_rel(WEB_SEARCH)], ["judge/verdicts.jsonl"]
        )
        return self.judge_aggregate()

    def judge_aggregate(self) -> dict:
        verdicts = [Verdict.from_dict(v) for v in self.store.read_jsonl("judge/verdicts.jsonl", "judge")]
        summary = aggregate(verdicts)
        summary["abstained_verdicts"] = sum(1 for v in verdicts if v.error)
        self.store.write_json("judge/summary.json", summary)
        self.store.write_text("judge/table.md", judge_table(summary))
        self.store.write_manifest("judge", self.hash, ["judge/verdicts.jsonl"], ["judge/summary.json", "judge/table.md"])
        return summary

    # report

    def report(self) -> dict:
        self._require_plan("report")
        conds = self._need_conditions()
        sources = ["config.json", "sampling.json"]
        per_condition = {}
        for cond in conds:
            pm_rel, cc_rel = f"portfolio_metrics/{cond}.json", f"concentration/{cond}.json"
            pm = self.store.read_json(pm_rel, "metrics")
            cc = self.store.read_json(cc_rel, "fit")
            sources += [pm_rel, cc_rel]
            per_condition[cond] = {
                "advisor": self._advisor_label(cond),
                "portfolio": {k: v for k, v in pm.items() if k not in ("per_client", "rounding_bias")},
                "rounding_bias": pm["rounding_bias"],
                "concentration": cc,
            }
        comparison = judge = None
        if self.store.exists("portfolio_metrics/comparison.json"):
            comparison = self.store.read_json("portfolio_metrics/comparison.json")
            sources.append("portfolio_metrics/comparison.json")
        if self.store.exists("judge/summary.json"):
            judge = self.store.read_json("judge/summary.json")
            sources.append("judge/summary.json")
        cfg = self.config
        report = {
            "provenance": {
                "config_hash": self.hash,
                "seeds": cfg.seeds.model_dump(),
                "tool_versions": _versions(),
                "advisors": {c: self._advisor_label(c) for c in conds},
                "thresholds": cfg.thresholds.model_dump(),
            },
            "sampling": self.store.read_json("sampling.json", "sample"),
            "conditions": per_condition,
            "comparison": comparison,
            "judge": judge,
            "sources": self.store.hashes(sources),
        }
        self.store.write_json("report.json", report)
        self.store.write_text("report.md", render_report(report, self.store))
        self.store.write_manifest("report", self.hash, sources, ["report.json", "report.md"])
        return report

    # all / replay

    def run_all(self) -> dict:
        self.plan()
        self.sample()
        for cond in self.config.conditions():
            self.collect(cond)
        self.fit()
        self.metrics()
        if BASELINE in self.config.conditions() and WEB_SEARCH in self.config.conditions():
            self.judge()
        return self.report()

    def replay(self, scratch: Path | None = None) -> ReplayResult:
        """Recompute every derived artifact from stored inputs and compare against the manifests.

        Stored inputs are ``config.json``, the recommendation stores and the
        judge verdicts. Regeneration happens in ``scratch`` (a temporary
        directory by default) so the run directory is never modified.
        """
        manifests = self.store.manifests()
        if not manifests:
            raise ManifestMismatch(f"no manifests under {self.store.root}; nothing to replay")
        for m in manifests.values():
            self.store.verify_manifest(m)
        scratch = Path(scratch) if scratch else Path(tempfile.mkdtemp(prefix="replay_"))
        keep = ["config.json"] + [recs_rel(c) for c in self.collected_conditions()]
        if self.store.exists("recommendations/schema.json"):
            keep.append("recommendations/schema.json")
        if "judge" in manifests:
            keep.append("judge/verdicts.jsonl")
        for rel in keep:
            (scratch / rel).parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(self.store.path(rel), scratch / rel)
        again = Pipeline(self.config, scratch, self.advisors, self.judges, self.http_client)
        again.sample()
        if "fit" in manifests:
            again.fit()
        if "metrics" in manifests:
            again.metrics()
        if "judge" in manifests:
            again.judge_aggregate()
        if "report" in manifests:
            again.report()
        result = ReplayResult(scratch)
        for stage in DERIVED_STAGES:
            if stage not in manifests:
                continue
            for rel, digest in manifests[stage]["outputs"].items():
                new = again.store.hashes([rel])[rel] if again.store.exists(rel) else None
                result.compared[rel] = digest
                if new != digest:
                    result.mismatches.append(rel)
        return result


def compare_conditions(base, search, base_recs, search_recs, exact_max_n: int = 20) -> dict:
    """Paired search-minus-baseline tests on the clients present in both conditions."""
    b_idx = {pid: i for i, pid in enumerate(base.profile_ids)}
    s_idx = {pid: i for i, pid in enumerate(search.profile_ids)}
    common = sorted(set(b_idx) & set(s_idx))
    bi = np.array([b_idx[p] for p in common], dtype=int)
    si = np.array([s_idx[p] for p in common], dtype=int)
    out = {"n_paired": len(common), "sided": "two-sided", "delta": "search - baseline"}

    def paired(name, b_vec, s_vec, delta):
        entry = {"delta": float(delta)}
        try:
            t = wilcoxon_signed_rank(b_vec, s_vec, exact_max_n)
            entry.update(wilcoxon=t.to_dict(), p_value=t.p_value, stars=stars(t.p_value))
        except AuditError as exc:
            entry.update(wilcoxon=None, p_value=None, stars="", note=str(exc))
        try:
            entry["cohen_d"] = cohen_d_paired(b_vec, s_vec).d
        except AuditError as exc:
            entry["cohen_d"] = None
            entry.setdefault("note", str(exc))
        out[name] = entry

    paired("hhi", base.hhi_product[bi], search.hhi_product[si], np.mean(search.hhi_product) - np.mean(base.hhi_product))
    paired("hhi_class", base.hhi_class[bi], search.hhi_class[si], np.mean(search.hhi_class) - np.mean(base.hhi_class))
    paired("jaccard", base.jaccard_client[bi], search.jaccard_client[si], search.jaccard_mean - base.jaccard_mean)

    a_vals, b_vals = stated_allocations(base_recs), stated_allocations(search_recs)
    chi = chi_square_proportions(sum(map(is_multiple_of_5, a_vals)), len(a_vals), sum(map(is_multiple_of_5, b_vals)), len(b_vals))
    mwu = mann_whitney_u(base.p5_client, search.p5_client, exact_max_n)
    out["rounding"] = {
        "delta_p5": search.rounding.p5_hat - base.rounding.p5_hat,
        "delta_b": search.rounding.b - base.rounding.b,
        "chi_square": chi.to_dict(),
        "mann_whitney_u": mwu.to_dict(),
    }
    return out


def _fc_csv(reports: Mapping[str, dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "asset_class", "fc_column", "fc_grouped", "cv_r2", "model_kind", "diagnosis"])
    for cond, rep in reports.items():
        for row in rep["classes"]:
            w.writerow([cond, row["asset_class"], _fmt(row["fc_column"]), _fmt(row["fc_grouped"]), _fmt(row["cv_r2"]), row["model_kind"] or "", row["diagnosis"]])
    return buf.getvalue()


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def render_report(report: dict, store: RunStore) -> str:
    prov = report["provenance"]
    samp = report["sampling"]
    lines = [
        "# Heuristic-collapse audit",
        "",
        f"- config hash: `{prov['config_hash']}`",
        f"- seeds: {', '.join(f'{k}={v}' for k, v in prov['seeds'].items())}",
        f"- advisors: {', '.join(f'{k}={v}' for k, v in prov['advisors'].items())}",
        f"- versions: {', '.join(f'{k} {v}' for k, v in prov['tool_versions'].items())}",
        "",
        "## Sampling",
        "",
        f"{samp['n_samples']} profiles, seed {samp['seed_used']} after {samp['attempts']} draw(s); "
        f"max off-diagonal |r| = {samp['orthogonality']['max_abs_offdiagonal']:.3f} "
        f"(threshold {samp['orthogonality']['threshold']}).",
        "",
        "## Diversification and personalization",
        "",
        "HHI is over the 20 products; ± is the sample sd across clients (HHI) or client pairs (Jaccard). "
        "Δ_search = search − baseline, bold when |d| > 0.2, stars from the paired Wilcoxon signed-rank test (*** p < 0.001).",
        "",
        store.path("portfolio_metrics/table.md").read_text().rstrip(),
        "",
        "## Feature concentration",
        "",
        store.path("concentration/table.md").read_text().rstrip(),
        "",
        "## Round-number bias",
        "",
        "| Condition | p̂₅ | b |",
        "|---|---:|---:|",
    ]
    for cond, body in report["conditions"].items():
        rb = body["rounding_bias"]
        lines.append(f"| {cond} | {rb['p5_hat']:.2f} | {rb['b']:.2f} |")
    comp = report.get("comparison")
    if comp:
        r = comp["rounding"]
        lines += [
            "",
            f"χ² p = {r['chi_square']['p_value']:.3g}{r['chi_square']['stars']}, "
            f"Mann–Whitney U p = {r['mann_whitney_u']['p_value']:.3g}{r['mann_whitney_u']['stars']}.",
        ]
    if report.get("judge"):
        lines += [
            "",
            "## Rationale judging",
            "",
            f"Pooled over {len(report['judge']['judges'])} judges on {report['judge']['n_tasks']} clients. "
            "Win = search rationale preferred; Loss = 1 − Win − Tie; bold marks win rates below 0.5.",
            "",
            store.path("judge/table.md").read_text().rstrip(),
        ]
    return "\n".join(lines) + "\n"
