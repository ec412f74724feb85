"""Resumable, bounded-concurrency collection of recommendations into JSONL stores."""

from __future__ import annotations

import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from ..errors import AuditError, CollectionAborted, RecommendationError, TransportError
from ..sampling import ClientProfile
from .catalog import ProductCatalog
from .recommendation import Recommendation

log = logging.getLogger(__name__)

Advise = Callable[[ClientProfile, str], Recommendation]


class RecommendationStore:
    """Append-only JSONL file keyed by ``profile_id`` plus a sidecar failure log.

    Appends are serialized by a lock. :meth:`finalize` rewrites the file in
    ``profile_id`` order so completion order never leaks into the artifact.
    """

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.failures_path = self.path.with_suffix(".failures.jsonl")
        self._lock = threading.Lock()

    def load(self) -> list[Recommendation]:
        if not self.path.exists():
            return []
        with self.path.open() as fh:
            return [Recommendation.from_dict(json.loads(line)) for line in fh if line.strip()]

    def ids(self) -> set[int]:
        return {r.profile_id for r in self.load()}

    def append(self, rec: Recommendation) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a") as fh:
                fh.write(rec.to_json() + "\n")

    def record_failure(self, profile_id: int, error: dict) -> None:
        with self._lock:
            self.failures_path.parent.mkdir(parents=True, exist_ok=True)
            with self.failures_path.open("a") as fh:
                fh.write(json.dumps({"profile_id": profile_id, "error": error}) + "\n")

    def finalize(self) -> None:
        recs = {r.profile_id: r for r in self.load()}
        body = "".join(recs[k].to_json() + "\n" for k in sorted(recs))
        with self._lock:
            tmp = self.path.with_suffix(".tmp")
            tmp.write_text(body)
            tmp.replace(self.path)
            if self.failures_path.exists():
                done = set(recs)
                lines = [ln for ln in self.failures_path.read_text().splitlines() if ln.strip()]
                keep = [ln for ln in lines if json.loads(ln)["profile_id"] not in done]
                if keep:
                    self.failures_path.write_text("\n".join(keep) + "\n")
                else:
                    self.failures_path.unlink()


@dataclass
class CollectResult:
    requested: int
    skipped: int
    collected: int
    failures: dict[int, dict] = field(default_factory=dict)

    @property
    def failure_fraction(self) -> float:
        return len(self.failures) / self.requested if self.requested else 0.0


def collect(
    profiles: Sequence[ClientProfile],
    advise: Advise,
    store: RecommendationStore,
    condition: str,
    catalog: ProductCatalog,
    max_in_flight: int = 1,
    max_failure_fraction: float = 0.05,
) -> CollectResult:
    """Query ``advise`` for every profile not yet in ``store``.

    Failures are logged per profile with their cause and left out of the
    store so a rerun retries them. Raises :class:`CollectionAborted` when
    the failure fraction over this call exceeds ``max_failure_fraction``.
    """
    done = store.ids()
    todo = [p for p in profiles if p.profile_id not in done]
    result = CollectResult(requested=len(todo), skipped=len(profiles) - len(todo), collected=0)

    def run(profile: ClientProfile):
        rec = advise(profile, condition)
        rec.profile_id = profile.profile_id
        rec.validate(catalog)
        return rec

    def handle(profile: ClientProfile, fut_result=None, exc: Exception | None = None):
        if exc is None:
            store.append(fut_result)
            result.collected += 1
            return
        if isinstance(exc, (RecommendationError, TransportError)):
            err = exc.to_record()
        else:
            err = {"kind": type(exc).__name__, "field": None, "value": None, "message": str(exc)}
        log.warning("profile %d failed: %s", profile.profile_id, err["message"])
        store.record_failure(profile.profile_id, err)
        result.failures[profile.profile_id] = err

    if max_in_flight <= 1:
        for p in todo:
            try:
                handle(p, run(p))
            except (AuditError, ValueError) as exc:
                handle(p, exc=exc)
    else:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            futures = {pool.submit(run, p): p for p in todo}
            for fut in as_completed(futures):
                p = futures[fut]
                try:
                    handle(p, fut.result())
                except (AuditError, ValueError) as exc:
                    handle(p, exc=exc)

    store.finalize()
    if result.failure_fraction > max_failure_fraction:
        raise CollectionAborted(
            f"{len(result.failures)}/{result.requested} profiles failed for condition {condition!r}"
            f" (limit {max_failure_fraction:.0%})"
        )
    return result
