"""PubMed abstract collection through NCBI E-utilities (esearch + efetch).

Rate limits follow NCBI policy: 3 requests/s anonymously, 10 with an API
key. ``NCBI_API_KEY``, ``NCBI_EMAIL`` and ``NCBI_MAX_RPS`` override the
defaults.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Callable, Iterable

import requests

from ..corpus import AnnotatedPassage

__all__ = ["FetchLog", "PubMedClient", "PubMedError", "fetch_pubmed"]

log = logging.getLogger(__name__)

EUTILS = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils"

# (url, params) -> (status code, body text)
Transport = Callable[[str, dict], tuple[int, str]]


class PubMedError(RuntimeError):
    pass


def _requests_transport(session: requests.Session, timeout: float) -> Transport:
    def get(url: str, params: dict) -> tuple[int, str]:
        resp = session.get(url, params=params, timeout=timeout)
        return resp.status_code, resp.text
    return get


class PubMedClient:
    def __init__(self, api_key: str | None = None, email: str | None = None,
                 tool: str = "conceptbench", max_rps: float | None = None,
                 transport: Transport | None = None, max_retries: int = 4,
                 backoff: float = 1.0, sleep: Callable[[float], None] = time.sleep,
                 timeout: float = 30.0):
        self.api_key = api_key if api_key is not None else os.environ.get("NCBI_API_KEY")
        self.email = email if email is not None else os.environ.get("NCBI_EMAIL")
        self.tool = tool
        if max_rps is None:
            env = os.environ.get("NCBI_MAX_RPS")
            max_rps = float(env) if env else (10.0 if self.api_key else 3.0)
        self.min_interval = 1.0 / max_rps
        self.transport = transport or _requests_transport(requests.Session(), timeout)
        self.max_retries = max_retries
        self.backoff = backoff
        self.sleep = sleep
        self._last = 0.0
        self._lock = threading.Lock()

    def _params(self, **extra) -> dict:
        params = {"db": "pubmed", "tool": self.tool, **extra}
        if self.api_key:
            params["api_key"] = self.api_key
        if self.email:
            params["email"] = self.email
        return params

    def _get(self, endpoint: str, params: dict) -> str:
        url = f"{EUTILS}/{endpoint}"
        for attempt in range(self.max_retries + 1):
            with self._lock:
                wait = self._last + self.min_interval - time.monotonic()
                if wait > 0:
                    self.sleep(wait)
                self._last = time.monotonic()
            try:
                status, body = self.transport(url, params)
            except requests.RequestException as exc:
                status, body = None, str(exc)
            if status == 200:
                return body
            if status is not None and status not in (429, 500, 502, 503, 504):
                raise PubMedError(f"{endpoint}: HTTP {status}")
            if attempt < self.max_retries:
                self.sleep(self.backoff * 2**attempt)
        raise PubMedError(f"{endpoint}: gave up after {self.max_retries + 1} attempts ({status})")

    def search(self, term: str, retmax: int = 10) -> list[str]:
        """PMIDs for ``term``, most recent first."""
        body = self._get("esearch.fcgi", self._params(
            term=term, retmax=retmax, sort="pub_date", retmode="json"))
        try:
            return list(json.loads(body)["esearchresult"]["idlist"])
        except (ValueError, KeyError) as exc:
            raise PubMedError(f"esearch: malformed response ({exc})") from None

    def fetch(self, pmids: Iterable[str]) -> list[tuple[str, str, str]]:
        """``(pmid, title, abstract)`` for each article that has an abstract."""
        pmids = list(pmids)
        if not pmids:
            return []
        body = self._get("efetch.fcgi", self._params(
            id=",".join(pmids), rettype="abstract", retmode="xml"))
        return parse_efetch(body)


def parse_efetch(xml_text: str) -> list[tuple[str, str, str]]:
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise PubMedError(f"efetch: malformed XML ({exc})") from None
    out = []
    for art in root.iter("PubmedArticle"):
        pmid = art.findtext(".//MedlineCitation/PMID", default="").strip()
        title_node = art.find(".//ArticleTitle")
        title = "".join(title_node.itertext()).strip() if title_node is not None else ""
        parts = []
        for node in art.findall(".//Abstract/AbstractText"):
            text = " ".join("".join(node.itertext()).split())
            if not text:
                continue
            label = node.get("Label")
            parts.append(f"{label}: {text}" if label else text)
        if pmid and parts:
            out.append((pmid, title, " ".join(parts)))
    return out


@dataclass
class FetchLog:
    hits: dict[str, int] = field(default_factory=dict)
    empty_terms: list[str] = field(default_factory=list)
    duplicate_ids: int = 0
    duplicate_texts: int = 0
    without_abstract: int = 0


def fetch_pubmed(terms: Iterable[str], per_term: int = 10,
                 client: PubMedClient | None = None) -> tuple[list[AnnotatedPassage], FetchLog]:
    """Collect up to ``per_term`` recent abstracts per term, deduplicated.

    Duplicates are removed by PMID and by a digest of the whitespace-folded
    abstract text. Terms without hits are recorded in the log.
    """
    client = client or PubMedClient()
    run = FetchLog()
    passages: list[AnnotatedPassage] = []
    seen_ids: set[str] = set()
    seen_text: set[str] = set()
    for term in terms:
        pmids = client.search(term, per_term)
        run.hits[term] = len(pmids)
        if not pmids:
            run.empty_terms.append(term)
            log.info("no PubMed hits for %r", term)
            continue
        fresh = [p for p in pmids if p not in seen_ids]
        run.duplicate_ids += len(pmids) - len(fresh)
        seen_ids.update(fresh)
        articles = client.fetch(fresh)
        run.without_abstract += len(fresh) - len(articles)
        for pmid, _title, abstract in articles:
            digest = hashlib.sha256(" ".join(abstract.split()).casefold().encode()).hexdigest()
            if digest in seen_text:
                run.duplicate_texts += 1
                continue
            seen_text.add(digest)
            passages.append(AnnotatedPassage(pmid, abstract))
    return passages, run
