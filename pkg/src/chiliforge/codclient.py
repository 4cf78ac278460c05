"""Crystallography Open Database fetcher and curation filters.

Ids come from a csv (first column); files are fetched with bounded
parallelism, retried with exponential backoff on transient failures, and
cached as raw bytes so cleaning-rule changes never force a refetch. Every
id ends up with exactly one terminal outcome in the job ledger.
"""

from __future__ import annotations

import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import cif as cifmod
from . import elements
from .errors import MalformedRow, NotFound, TransportError

DEFAULT_ENDPOINT = "https://www.crystallography.net/cod"

ACCEPT = "accept"
REASON_DISALLOWED = "DisallowedElement"
REASON_VOLUME = "VolumeTooLarge"
REASON_NO_METAL = "NoMetal"


@dataclass
class FetchJob:
    cache_dir: Path
    endpoint: str = DEFAULT_ENDPOINT
    max_attempts: int = 4
    backoff_base: float = 0.5  # seconds; doubles per retry
    politeness_delay: float = 0.05
    workers: int = 4
    ledger: dict = field(default_factory=dict)  # id -> outcome string

    def __post_init__(self):
        self.cache_dir = Path(self.cache_dir)

    def cache_path(self, cod_id) -> Path:
        return self.cache_dir / f"{cod_id}.cif"


def load_id_list(data: bytes):
    """Ordered, deduplicated ids from csv bytes (first column per row)."""
    ids = []
    seen = set()
    for row_number, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        first = line.split(",")[0].strip()
        try:
            cod_id = int(first)
        except ValueError:
            raise MalformedRow(row_number, first) from None
        if cod_id not in seen:
            seen.add(cod_id)
            ids.append(cod_id)
    return ids


def _http_get(url, timeout):
    request = urllib.request.Request(url, headers={"User-Agent": "chiliforge/0.1"})
    with urllib.request.urlopen(request, timeout=timeout) as response:
        return response.read()


def fetch(cod_id, job: FetchJob, timeout=30.0) -> bytes:
    """Cached GET of <endpoint>/<id>.cif with retry on transient failures."""
    path = job.cache_path(cod_id)
    if path.exists():
        job.ledger[cod_id] = "cached"
        return path.read_bytes()
    url = f"{job.endpoint}/{cod_id}.cif"
    last_error = None
    for attempt in range(job.max_attempts):
        if attempt:
            time.sleep(job.backoff_base * 2 ** (attempt - 1))
        try:
            data = _http_get(url, timeout)
        except urllib.error.HTTPError as err:
            if err.code == 404:
                job.ledger[cod_id] = "http-error 404"
                raise NotFound(url) from None
            if 500 <= err.code < 600:
                last_error = err
                continue
            job.ledger[cod_id] = f"http-error {err.code}"
            raise TransportError(f"{url}: HTTP {err.code}") from None
        except (urllib.error.URLError, TimeoutError, OSError) as err:
            last_error = err
            continue
        job.cache_dir.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(data)
        tmp.replace(path)
        job.ledger[cod_id] = "fetched"
        return data
    job.ledger[cod_id] = "transport-error"
    raise TransportError(f"{url}: {last_error}")


def fetch_all(ids, job: FetchJob, timeout=30.0) -> dict:
    """Bounded-parallel fetch of every id; returns the completed ledger."""
    results = {}

    def task(cod_id):
        time.sleep(job.politeness_delay)
        try:
            fetch(cod_id, job, timeout=timeout)
        except (NotFound, TransportError) as err:
            return cod_id, job.ledger.get(cod_id, f"error {err}")
        return cod_id, job.ledger[cod_id]

    with ThreadPoolExecutor(max_workers=job.workers) as pool:
        for cod_id, outcome in pool.map(task, ids):
            results[cod_id] = outcome
    job.ledger.update(results)  # single-writer consolidation
    return results


def curate(cell, policy) -> tuple[bool, str | None]:
    """Accept iff every element is on the policy list, the cell volume is
    under 1000 cubic Angstrom (strict), and at least one metal is present."""
    symbols = {site.element for site in cell.sites}
    disallowed = sorted(s for s in symbols if not elements.is_allowed(s, policy))
    if disallowed:
        return False, REASON_DISALLOWED
    if not cifmod.cell_volume(cell) < 1000.0:
        return False, REASON_VOLUME
    if not any(elements.lookup(s).is_metal for s in symbols):
        return False, REASON_NO_METAL
    return True, None


def write_ledger(ledger: dict, path):
    lines = [f"{cod_id}\t{outcome}" for cod_id, outcome in sorted(ledger.items())]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_ledger(path) -> dict:
    ledger = {}
    for line in Path(path).read_text().splitlines():
        if line:
            cod_id, outcome = line.split("\t", 1)
            ledger[int(cod_id)] = outcome
    return ledger
