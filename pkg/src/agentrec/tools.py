"""Agent tools: web search and page scraping, with a fixture-backed offline
mode, plus the ACTION/ARGS parser that turns model text into tool calls.

Fixture layout (all paths under one root):

    search/<sha256 of normalized query>.json   recorded search entries
    pages/<sha256 of url>.html                 recorded page bodies
    index.json                                 digest -> human-readable key

Offline mode never touches the network; live capture goes through an
injectable transport so tests can count (and forbid) network calls.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable, Mapping, Optional, Union

from .clock import SYSTEM_CLOCK

DEFAULT_MAX_CONTENT = 8000
TRUNCATION_MARKER = "[truncated]"
TOOL_NAME_RE = re.compile(r"^[a-z_]+$")
MAX_SEARCH_K = 20

ArgValue = Union[str, int]


class ToolError(Exception):
    pass


class DuplicateTool(ToolError):
    pass


class ToolNotFound(ToolError):
    pass


class UnknownTool(ToolError):
    """Action block names a tool that is not registered."""


class MalformedArgs(ToolError):
    """Action block args violate the tool's arg schema."""


class NoFixture(ToolError):
    """Offline mode has no recording for this query/url."""


class NonHtmlContent(ToolError):
    pass


@dataclass(frozen=True)
class ArgSpec:
    type: str  # string | int | url
    required: bool = True

    def __post_init__(self):
        if self.type not in ("string", "int", "url"):
            raise ValueError(f"bad arg type {self.type!r}")


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    arg_schema: Mapping[str, ArgSpec] = field(default_factory=dict)

    def __post_init__(self):
        if not TOOL_NAME_RE.match(self.name):
            raise ValueError(f"tool name must match [a-z_]+: {self.name!r}")


@dataclass(frozen=True)
class ToolCall:
    tool_name: str
    args: Mapping[str, ArgValue] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tool_name": self.tool_name, "args": dict(self.args)}


@dataclass(frozen=True)
class ToolResult:
    tool_name: str
    ok: bool
    content: str
    source_urls: tuple[str, ...] = ()
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        return {
            "tool_name": self.tool_name,
            "ok": self.ok,
            "content": self.content,
            "source_urls": list(self.source_urls),
            "elapsed": self.elapsed,
        }


@dataclass(frozen=True)
class SearchEntry:
    title: str
    url: str
    snippet: str


@dataclass(frozen=True)
class SearchResults:
    entries: tuple[SearchEntry, ...]
    query: str


Executor = Callable[[ToolCall], ToolResult]


class ToolRegistry:
    """Name -> (spec, executor). Frozen before agents start running."""

    def __init__(self):
        self._tools: dict[str, tuple[ToolSpec, Executor]] = {}
        self._frozen = False

    def register(self, spec: ToolSpec, executor: Executor) -> "ToolRegistry":
        if self._frozen:
            raise ToolError("registry is frozen")
        if spec.name in self._tools:
            raise DuplicateTool(spec.name)
        self._tools[spec.name] = (spec, executor)
        return self

    def freeze(self) -> "ToolRegistry":
        self._frozen = True
        return self

    def resolve(self, name: str) -> tuple[ToolSpec, Executor]:
        try:
            return self._tools[name]
        except KeyError:
            raise ToolNotFound(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def names(self) -> list[str]:
        return sorted(self._tools)

    def specs(self) -> list[ToolSpec]:
        return [self._tools[n][0] for n in self.names()]


def register_tool(registry: ToolRegistry, spec: ToolSpec, executor: Executor) -> ToolRegistry:
    return registry.register(spec, executor)


def normalize_query(query: str) -> str:
    """Fixture key normalization: lowercase, trim, collapse whitespace."""
    return re.sub(r"\s+", " ", query.strip()).lower()


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class FixtureStore:
    """Read/write store for recorded search results and page bodies."""

    def __init__(self, root: Path | str):
        self.root = Path(root)

    def _index_path(self) -> Path:
        return self.root / "index.json"

    def _load_index(self) -> dict:
        if self._index_path().exists():
            return json.loads(self._index_path().read_text(encoding="utf-8"))
        return {"search": {}, "pages": {}}

    def _save_index(self, index: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self._index_path().write_text(
            json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def search_path(self, query: str) -> Path:
        return self.root / "search" / f"{_digest(normalize_query(query))}.json"

    def page_path(self, url: str) -> Path:
        return self.root / "pages" / f"{_digest(url)}.html"

    def lookup_search(self, query: str) -> list[SearchEntry]:
        path = self.search_path(query)
        if not path.exists():
            raise NoFixture(f"no search fixture for {normalize_query(query)!r}")
        data = json.loads(path.read_text(encoding="utf-8"))
        return [SearchEntry(e["title"], e["url"], e["snippet"]) for e in data]

    def lookup_page(self, url: str) -> str:
        path = self.page_path(url)
        if not path.exists():
            raise NoFixture(f"no page fixture for {url!r}")
        return path.read_text(encoding="utf-8")

    def record_search(self, query: str, entries: list[SearchEntry]) -> Path:
        path = self.search_path(query)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(
                [{"title": e.title, "url": e.url, "snippet": e.snippet} for e in entries],
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
        index = self._load_index()
        index.setdefault("search", {})[path.stem] = normalize_query(query)
        self._save_index(index)
        return path

    def record_page(self, url: str, content: str) -> Path:
        path = self.page_path(url)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")
        index = self._load_index()
        index.setdefault("pages", {})[path.stem] = url
        self._save_index(index)
        return path

    def index(self) -> dict:
        return self._load_index()


class _VisibleText(HTMLParser):
    """Collects text from title, headings, paragraphs and list items only."""

    KEEP = {"title", "h1", "h2", "h3", "h4", "h5", "h6", "p", "li"}
    SKIP = {"script", "style"}

    def __init__(self):
        super().__init__()
        self._keep_depth = 0
        self._skip_depth = 0
        self._blocks: list[str] = []
        self._buf: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag in self.SKIP:
            self._skip_depth += 1
        elif tag in self.KEEP:
            self._keep_depth += 1

    def handle_endtag(self, tag):
        if tag in self.SKIP:
            self._skip_depth = max(0, self._skip_depth - 1)
        elif tag in self.KEEP:
            self._keep_depth = max(0, self._keep_depth - 1)
            self._flush()

    def handle_data(self, data):
        if self._keep_depth > 0 and self._skip_depth == 0:
            self._buf.append(data)

    def _flush(self):
        text = re.sub(r"\s+", " ", "".join(self._buf)).strip()
        if text:
            self._blocks.append(text)
        self._buf = []

    def text(self) -> str:
        self._flush()
        return "\n".join(self._blocks)


def extract_visible_text(html: str) -> str:
    parser = _VisibleText()
    parser.feed(html)
    return parser.text()


def truncate_content(content: str, max_chars: int = DEFAULT_MAX_CONTENT) -> str:
    """Bound content length; total including the marker stays <= max_chars."""
    if len(content) <= max_chars:
        return content
    return content[: max_chars - len(TRUNCATION_MARKER)] + TRUNCATION_MARKER


_HTML_HINT = re.compile(r"<\s*(!doctype|html|head|body|p|div|title)\b", re.IGNORECASE)


def looks_like_html(content: str) -> bool:
    return bool(_HTML_HINT.search(content[:2000]))


class WebTools:
    """web_search and scrape executors; offline (fixtures) or live (transport).

    Offline mode is the default and performs zero network operations. Live
    mode requires a transport plus a search endpoint; the search backend is
    pluggable and expected to return {"entries": [{title, url, snippet}]}.
    """

    def __init__(
        self,
        fixtures: Optional[FixtureStore] = None,
        transport=None,
        search_endpoint: Optional[str] = None,
        max_content: int = DEFAULT_MAX_CONTENT,
        clock=SYSTEM_CLOCK,
    ):
        self.fixtures = fixtures
        self.transport = transport
        self.search_endpoint = search_endpoint
        self.max_content = max_content
        self.clock = clock

    @property
    def offline(self) -> bool:
        return self.transport is None

    def web_search(self, query: str, k: int) -> SearchResults:
        if not (1 <= k <= MAX_SEARCH_K):
            raise ValueError(f"k must be in [1, {MAX_SEARCH_K}], got {k}")
        if self.offline:
            if self.fixtures is None:
                raise NoFixture("offline mode without a fixture store")
            entries = self.fixtures.lookup_search(query)
        else:
            entries = self._live_search(query)
        return SearchResults(entries=tuple(entries[:k]), query=query)

    def _live_search(self, query: str) -> list[SearchEntry]:
        from .gateway import TransportError

        if not self.search_endpoint:
            raise ToolError("live search requires a search endpoint")
        status, body = self.transport(
            "GET", f"{self.search_endpoint}?q={query}", {}, None, 30.0
        )
        if status >= 400:
            raise TransportError(f"search endpoint returned {status}")
        data = json.loads(body)
        return [SearchEntry(e["title"], e["url"], e["snippet"]) for e in data.get("entries", [])]

    def scrape(self, url: str) -> ToolResult:
        if not re.match(r"^https?://", url):
            raise ValueError(f"scrape needs an absolute http(s) url, got {url!r}")
        started = self.clock.monotonic()
        if self.offline:
            if self.fixtures is None:
                raise NoFixture("offline mode without a fixture store")
            body = self.fixtures.lookup_page(url)
        else:
            from .gateway import TransportError

            status, body = self.transport("GET", url, {}, None, 30.0)
            if status >= 400:
                raise TransportError(f"{url} returned {status}")
        if not looks_like_html(body):
            raise NonHtmlContent(f"{url} did not return html")
        text = truncate_content(extract_visible_text(body), self.max_content)
        # Offline reads are instantaneous by definition; keeping elapsed at 0
        # makes fixture-backed runs byte-reproducible.
        return ToolResult(
            tool_name="scrape",
            ok=True,
            content=text,
            source_urls=(url,),
            elapsed=0.0 if self.offline else self.clock.monotonic() - started,
        )

    def search_result(self, call_args: Mapping[str, ArgValue]) -> ToolResult:
        """web_search wrapped into the ToolResult shape agents consume."""
        started = self.clock.monotonic()
        k = int(call_args.get("k", 5))
        results = self.web_search(str(call_args["query"]), k)
        lines = [f"{e.title} <{e.url}>\n{e.snippet}" for e in results.entries]
        return ToolResult(
            tool_name="web_search",
            ok=True,
            content=truncate_content("\n\n".join(lines), self.max_content),
            source_urls=tuple(e.url for e in results.entries),
            elapsed=0.0 if self.offline else self.clock.monotonic() - started,
        )


def default_registry(webtools: WebTools) -> ToolRegistry:
    """Registry with the two standard tools wired to the given WebTools."""
    registry = ToolRegistry()
    registry.register(
        ToolSpec(
            name="web_search",
            description="Search the web. Args: query (string), k (int, optional, max 20).",
            arg_schema={"query": ArgSpec("string"), "k": ArgSpec("int", required=False)},
        ),
        lambda call: webtools.search_result(call.args),
    )
    registry.register(
        ToolSpec(
            name="scrape",
            description="Fetch a page and return its visible text. Args: url (absolute http/https).",
            arg_schema={"url": ArgSpec("url")},
        ),
        lambda call: webtools.scrape(str(call.args["url"])),
    )
    return registry


_ACTION_RE = re.compile(r"^ACTION:\s*([A-Za-z_][\w]*)\s*$", re.MULTILINE)


def parse_tool_call(model_text: str, registry: ToolRegistry) -> Optional[ToolCall]:
    """Extract the first well-formed ``ACTION: <tool>\\nARGS: <json>`` block.

    Returns None when the text has no well-formed block (the model answered
    in prose). Raises UnknownTool for an unregistered tool name and
    MalformedArgs when the JSON args violate the tool's schema.
    """
    for m in _ACTION_RE.finditer(model_text):
        rest = model_text[m.end():].lstrip("\r\n")
        if not rest.startswith("ARGS:"):
            continue
        payload = rest[len("ARGS:"):].lstrip()
        try:
            args, _ = json.JSONDecoder().raw_decode(payload)
        except ValueError:
            continue
        if not isinstance(args, dict):
            continue
        name = m.group(1)
        if name not in registry:
            raise UnknownTool(name)
        spec, _ = registry.resolve(name)
        _check_args(spec, args)
        return ToolCall(tool_name=name, args=args)
    return None


def _check_args(spec: ToolSpec, args: dict) -> None:
    for arg_name, arg_spec in spec.arg_schema.items():
        if arg_name not in args:
            if arg_spec.required:
                raise MalformedArgs(f"{spec.name}: missing required arg {arg_name!r}")
            continue
        value = args[arg_name]
        if arg_spec.type == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise MalformedArgs(f"{spec.name}: arg {arg_name!r} must be an int")
        elif arg_spec.type == "url":
            if not isinstance(value, str) or not re.match(r"^https?://", value):
                raise MalformedArgs(f"{spec.name}: arg {arg_name!r} must be an absolute http(s) url")
        else:
            if not isinstance(value, str):
                raise MalformedArgs(f"{spec.name}: arg {arg_name!r} must be a string")
    extra = set(args) - set(spec.arg_schema)
    if extra:
        raise MalformedArgs(f"{spec.name}: unexpected args {sorted(extra)}")


def format_tool_call(call: ToolCall) -> str:
    """Inverse of parse_tool_call for valid calls (round-trip property)."""
    return f"ACTION: {call.tool_name}\nARGS: {json.dumps(dict(call.args), sort_keys=True)}"
