import json
from pathlib import Path

import pytest

from conceptbench.autolabel.pubmed import PubMedClient, PubMedError, fetch_pubmed, parse_efetch
from conceptbench.corpus import read_corpus

FIXTURE = Path(__file__).parent / "fixtures" / "pubmed"


class Transcript:
    """Serves recorded E-utilities answers keyed by endpoint and term or id list."""

    def __init__(self, entries=None):
        if entries is None:
            entries = json.loads((FIXTURE / "transcript.json").read_text())["transcript"]
        self.entries = {(e["endpoint"], e.get("term") or e.get("id")): e for e in entries}
        self.requests = []

    def __call__(self, url, params):
        endpoint = url.rsplit("/", 1)[-1]
        self.requests.append((endpoint, params))
        e = self.entries[(endpoint, params.get("term") or params.get("id"))]
        return e["status"], e["body"]


def _client(transport, **kw):
    sleeps = []
    client = PubMedClient(api_key="", email="", transport=transport, sleep=sleeps.append,
                          max_rps=1e9, **kw)
    return client, sleeps


def test_fetch_matches_recorded_corpus():
    terms = (FIXTURE / "terms.txt").read_text().splitlines()
    client, _ = _client(Transcript())
    passages, log = fetch_pubmed(terms, 10, client)
    expected = read_corpus(FIXTURE / "expected_corpus.jsonl")
    assert [(p.id, p.text) for p in passages] == [(p.id, p.text) for p in expected]
    assert log.empty_terms == ["no such phenotype term"]
    assert (log.duplicate_ids, log.duplicate_texts, log.without_abstract) == (1, 1, 1)
    assert log.hits == {"hypercalcemia": 3, "renal tubular acidosis": 3, "no such phenotype term": 0}


def test_query_parameters():
    t = Transcript()
    client, _ = _client(t)
    client.search("hypercalcemia", 3)
    endpoint, params = t.requests[0]
    assert endpoint == "esearch.fcgi"
    assert params["sort"] == "pub_date" and params["retmax"] == 3 and params["db"] == "pubmed"
    assert "api_key" not in params


def test_retries_on_throttling_then_succeeds():
    ok = Transcript()
    calls = []

    def flaky(url, params):
        calls.append(url)
        return (429, "slow down") if len(calls) < 3 else ok(url, params)

    client, sleeps = _client(flaky, backoff=0.5)
    assert client.search("hypercalcemia") == ["90000001", "90000002", "90000003"]
    assert len(calls) == 3
    assert [s for s in sleeps if s in (0.5, 1.0)] == [0.5, 1.0]


def test_gives_up_and_rejects_client_errors():
    client, _ = _client(lambda u, p: (503, ""), max_retries=2)
    with pytest.raises(PubMedError, match="gave up"):
        client.search("x")
    client, _ = _client(lambda u, p: (404, "not found"))
    with pytest.raises(PubMedError, match="404"):
        client.search("x")
    client, _ = _client(lambda u, p: (200, "{not json"))
    with pytest.raises(PubMedError, match="malformed"):
        client.search("x")


def test_parse_efetch_edge_cases():
    xml = ("<PubmedArticleSet><PubmedArticle><MedlineCitation><PMID>7</PMID><Article>"
           "<ArticleTitle>T</ArticleTitle><Abstract><AbstractText Label='AIM'> a  <b>b</b> </AbstractText>"
           "<AbstractText></AbstractText></Abstract></Article></MedlineCitation></PubmedArticle>"
           "</PubmedArticleSet>")
    assert parse_efetch(xml) == [("7", "T", "AIM: a b")]
    with pytest.raises(PubMedError):
        parse_efetch("<broken")
