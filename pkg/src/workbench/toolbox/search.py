"""Search backends and contextual re-ranking.

The default scorer is a deterministic lexical one: cosine similarity of
term-frequency vectors with stopwords removed.  An embedding scorer can be
plugged in behind the same ``Scorer`` protocol without touching callers.
Backends: a fixture directory of canned JSON results for offline use, or a
metasearch HTTP endpoint.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol
from urllib.parse import urlparse

from ..errors import BackendUnreachable, EmptyQuery
from ..events import EventKind

STOPWORDS = frozenset("""
a an the and or but if then else of to in on at by for with from as is are
was were be been being it its this that these those i you he she we they
what which who whom not no nor so too very can will just do does did
""".split())

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN.findall(text.lower()) if t not in STOPWORDS]


def tf_cosine(a_tokens: list[str], b_tokens: list[str]) -> float:
    if not a_tokens or not b_tokens:
        return 0.0
    a, b = Counter(a_tokens), Counter(b_tokens)
    dot = sum(a[t] * b[t] for t in a.keys() & b.keys())
    if dot == 0:
        return 0.0
    norm = math.sqrt(sum(v * v for v in a.values())) * math.sqrt(sum(v * v for v in b.values()))
    return dot / norm


class Scorer(Protocol):
    def score(self, context: str, text: str) -> float: ...


class LexicalScorer:
    """TF-cosine over stopword-filtered tokens; deterministic, dependency-free."""

    def score(self, context: str, text: str) -> float:
        return tf_cosine(tokenize(context), tokenize(text))


@dataclass(frozen=True)
class BackendHit:
    url: str
    title: str
    snippet: str
    score: float = 0.0


@dataclass(frozen=True)
class SearchResult:
    url: str
    title: str
    snippet: str
    backend_score: float
    rerank_score: float
    rank: int

    def to_dict(self) -> dict:
        return {
            "url": self.url,
            "title": self.title,
            "snippet": self.snippet,
            "backend_score": self.backend_score,
            "rerank_score": self.rerank_score,
            "rank": self.rank,
        }


class SearchBackend(Protocol):
    def search(self, query: str) -> list[BackendHit]: ...
    def deepen(self, url: str) -> list[BackendHit]: ...


class FixtureSearchBackend:
    """Canned results from a directory of JSON files.

    Each ``*.json`` file holds ``{"query": str, "results": [{"url", "title",
    "snippet", "score"?}]}``; queries match case-insensitively.  A file named
    ``deepen.json`` may map a url to the one-hop pages "crawled" from it:
    ``{"<url>": [{"url", "title", "snippet"}, ...]}``.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def _iter_files(self):
        if not self.directory.is_dir():
            raise BackendUnreachable(f"search fixture dir missing: {self.directory}")
        return sorted(self.directory.glob("*.json"))

    def search(self, query: str) -> list[BackendHit]:
        wanted = query.strip().casefold()
        for path in self._iter_files():
            if path.name == "deepen.json":
                continue
            data = json.loads(path.read_text(encoding="utf-8"))
            if data.get("query", "").strip().casefold() == wanted:
                return [
                    BackendHit(
                        url=r["url"],
                        title=r.get("title", ""),
                        snippet=r.get("snippet", ""),
                        score=float(r.get("score", 0.0)),
                    )
                    for r in data.get("results", [])
                ]
        raise BackendUnreachable(f"no fixture for query: {query!r}")

    def deepen(self, url: str) -> list[BackendHit]:
        path = self.directory / "deepen.json"
        if not path.is_file():
            raise BackendUnreachable("no deepen fixture configured")
        mapping = json.loads(path.read_text(encoding="utf-8"))
        pages = mapping.get(url, [])
        return [
            BackendHit(url=p["url"], title=p.get("title", ""), snippet=p.get("snippet", ""))
            for p in pages
        ]


class HttpSearchBackend:
    """Metasearch endpoint speaking the common ``?q=...&format=json`` shape."""

    def __init__(self, base_url: str, timeout_s: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def search(self, query: str) -> list[BackendHit]:
        import httpx

        try:
            resp = httpx.get(
                f"{self.base_url}/search",
                params={"q": query, "format": "json"},
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            data = resp.json()
        except Exception as exc:
            raise BackendUnreachable(f"metasearch request failed: {exc}") from exc
        return [
            BackendHit(
                url=r.get("url", ""),
                title=r.get("title", ""),
                snippet=r.get("content", r.get("snippet", "")),
                score=float(r.get("score", 0.0)),
            )
            for r in data.get("results", [])
        ]

    def deepen(self, url: str) -> list[BackendHit]:
        import httpx

        host = urlparse(url).netloc
        try:
            page = httpx.get(url, timeout=self.timeout_s, follow_redirects=True).text
        except Exception as exc:
            raise BackendUnreachable(f"page fetch failed: {exc}") from exc
        links = re.findall(r'href="(https?://[^"]+)"', page)
        same_host = [l for l in links if urlparse(l).netloc == host][:5]
        hits = []
        for link in same_host:
            try:
                body = httpx.get(link, timeout=self.timeout_s, follow_redirects=True).text
            except Exception:
                continue
            text = re.sub(r"<[^>]+>", " ", body)
            hits.append(BackendHit(url=link, title=link, snippet=text[:500]))
        return hits


def search_and_rerank(
    backend: SearchBackend,
    query: str,
    context: str = "",
    k: int = 10,
    scorer: Scorer | None = None,
) -> list[SearchResult]:
    """Backend results re-scored by contextual similarity, top-k returned.

    Order: rerank score desc, then backend score desc, then url ascending.
    """
    if not query or not query.strip():
        raise EmptyQuery("search query must be non-empty")
    scorer = scorer or LexicalScorer()
    hits = backend.search(query)
    scored = []
    for hit in hits:
        raw = scorer.score(context or query, hit.snippet)
        scored.append((max(0.0, min(1.0, raw)), hit))
    scored.sort(key=lambda pair: (-pair[0], -pair[1].score, pair[1].url))
    return [
        SearchResult(
            url=hit.url,
            title=hit.title,
            snippet=hit.snippet,
            backend_score=hit.score,
            rerank_score=score,
            rank=i + 1,
        )
        for i, (score, hit) in enumerate(scored[:k])
    ]


def backend_from_config(config) -> SearchBackend:
    if config.search_fixture_dir:
        return FixtureSearchBackend(config.search_fixture_dir)
    if config.search_backend_url:
        return HttpSearchBackend(config.search_backend_url, config.search_timeout_s)
    raise BackendUnreachable("no search backend configured (fixture dir or url required)")


def search_tool(ctx, query: str, context: str = "", k: int = 5):
    from . import ToolOutput

    backend = backend_from_config(ctx.config)
    results = search_and_rerank(backend, query, context=context, k=k)
    for result in results:
        ctx.emit(EventKind.SEARCH_RESULT, {
            "query": query,
            "result": result.to_dict(),
            "vetting": ["accept", "reject", "deepen"],
        })
    return ToolOutput(payload={"query": query, "results": [r.to_dict() for r in results]})


def deepen_tool(ctx, url: str):
    from . import ToolOutput

    backend = backend_from_config(ctx.config)
    pages = backend.deepen(url)
    return ToolOutput(payload={
        "url": url,
        "pages": [{"url": p.url, "title": p.title, "snippet": p.snippet} for p in pages],
    })
