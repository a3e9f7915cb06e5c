"""Rule-based caption verification checklist.

Four per-caption checks plus a clip-level constraint:

  1. mentions of background sound, environment, or audio quality
  2. explicit declarations that something is absent
  3. a long quoted span with no style description near it
  4. a human-annotated tag not surfaced anywhere in the caption
  clip. wording that implies multiple speakers or multiple roles

A caption is filtered iff at least one enabled item is violated.  An
optional external judge can be consulted for captions that survive the
rule checks; the default configuration never calls it.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

RULES_VERSION = 1

ITEMS = ("1", "2", "3", "4", "clip")


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class Decision:
    verdict: str  # "retain" | "filter"
    violated_items: tuple[str, ...]
    evidence: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if (self.verdict == "filter") != bool(self.violated_items):
            raise RuleError("verdict must be filter iff violations are nonempty")

    @staticmethod
    def from_evidence(evidence: list[tuple[str, str]]) -> "Decision":
        items = tuple(dict.fromkeys(item for item, _ in evidence))
        return Decision(
            verdict="filter" if items else "retain",
            violated_items=items,
            evidence=tuple(evidence),
        )

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "violated_items": list(self.violated_items),
            "evidence": [{"item": i, "span": s} for i, s in self.evidence],
        }


@dataclass(frozen=True)
class Item3Cfg:
    min_quoted_words: int
    style_window_words: int
    style_vocabulary: tuple[str, ...]


@dataclass(frozen=True)
class RuleSet:
    item1: tuple[re.Pattern, ...]
    item2: tuple[re.Pattern, ...]
    item3: Item3Cfg
    item4_synonyms: dict[str, dict[str, tuple[str, ...]]]
    clip_patterns: tuple[re.Pattern, ...]
    enabled: frozenset[str] = field(default_factory=lambda: frozenset(ITEMS))
    raw: dict = field(default_factory=dict, compare=False)

    def without_items(self, *items: str) -> "RuleSet":
        return replace(self, enabled=self.enabled - set(items))

    def serialize(self) -> dict:
        return self.raw


def _compile(patterns: list[str], section: str) -> tuple[re.Pattern, ...]:
    out = []
    for pat in patterns:
        try:
            out.append(re.compile(pat, re.IGNORECASE))
        except re.error as e:
            raise RuleError(f"{section}: cannot compile pattern {pat!r}: {e}") from e
    return tuple(out)


def compile_rules(config: dict | str | Path) -> RuleSet:
    """Compile a rule config (dict or JSON file path) into a RuleSet."""
    if not isinstance(config, dict):
        path = Path(config)
        if not path.exists():
            raise RuleError(f"rule config not found: {path}")
        config = json.loads(path.read_text())
    if config.get("version") != RULES_VERSION:
        raise RuleError(f"unsupported rules version {config.get('version')!r}")
    for section in ("item1_patterns", "item2_patterns", "item3", "clip_patterns"):
        if section not in config:
            raise RuleError(f"rule config missing section {section!r}")
    i3 = config["item3"]
    synonyms = {
        key: {val: tuple(forms) for val, forms in table.items()}
        for key, table in config.get("item4_synonyms", {}).items()
    }
    for key, table in synonyms.items():
        for val, forms in table.items():
            if not forms:
                raise RuleError(f"item4 synonyms for {key}={val} must be nonempty")
    return RuleSet(
        item1=_compile(config["item1_patterns"], "item1_patterns"),
        item2=_compile(config["item2_patterns"], "item2_patterns"),
        item3=Item3Cfg(
            min_quoted_words=int(i3.get("min_quoted_words", 6)),
            style_window_words=int(i3.get("style_window_words", 12)),
            style_vocabulary=tuple(w.lower() for w in i3.get("style_vocabulary", [])),
        ),
        item4_synonyms=synonyms,
        clip_patterns=_compile(config["clip_patterns"], "clip_patterns"),
        raw=config,
    )


def default_rules() -> RuleSet:
    text = resources.files("stylealign.rules").joinpath("default_rules.json").read_text()
    return compile_rules(json.loads(text))


_QUOTE_RE = re.compile(r'["“‘«]([^"”’»]+)["”’»]')
_WORD_RE = re.compile(r"[A-Za-z']+")


def _words(text: str) -> list[str]:
    return [w.lower() for w in _WORD_RE.findall(text)]


def _check_item3(caption: str, cfg: Item3Cfg) -> list[tuple[str, str]]:
    evidence = []
    for m in _QUOTE_RE.finditer(caption):
        quoted = m.group(1)
        if len(_words(quoted)) < cfg.min_quoted_words:
            continue
        before = _words(caption[: m.start()])[-cfg.style_window_words :]
        after = _words(caption[m.end() :])[: cfg.style_window_words]
        if not any(w in cfg.style_vocabulary for w in before + after):
            evidence.append(("3", quoted))
    return evidence


def _surface_match(caption: str, surface: str) -> bool:
    return re.search(rf"\b{re.escape(surface)}\b", caption, re.IGNORECASE) is not None


def check_caption(
    caption: str,
    rules: RuleSet,
    tags: dict[str, str] | None = None,
    transcript: str | None = None,
) -> Decision:
    """Evaluate the four checklist items on one caption.

    Item 3 runs only when a transcript is available; item 4 only when
    tags are provided.
    """
    if not caption:
        raise RuleError("caption must be nonempty")
    evidence: list[tuple[str, str]] = []
    if "1" in rules.enabled:
        for pat in rules.item1:
            m = pat.search(caption)
            if m:
                evidence.append(("1", m.group(0)))
    if "2" in rules.enabled:
        for pat in rules.item2:
            m = pat.search(caption)
            if m:
                evidence.append(("2", m.group(0)))
    if "3" in rules.enabled and transcript is not None:
        evidence.extend(_check_item3(caption, rules.item3))
    if "4" in rules.enabled and tags:
        for key, value in tags.items():
            table = rules.item4_synonyms.get(key, {})
            surfaces = table.get(value, (value,))
            if not any(_surface_match(caption, s) for s in surfaces):
                evidence.append(("4", f"{key}={value}"))
    return Decision.from_evidence(evidence)


def check_clip(captions: list[str], rules: RuleSet) -> Decision:
    """Filter the whole clip if any caption implies multiple speakers/roles."""
    if not captions:
        raise RuleError("clip must have at least one caption")
    evidence: list[tuple[str, str]] = []
    if "clip" in rules.enabled:
        for i, caption in enumerate(captions):
            for pat in rules.clip_patterns:
                m = pat.search(caption)
                if m:
                    evidence.append(("clip", f"caption {i}: {m.group(0)}"))
    return Decision.from_evidence(evidence)


class HttpJudge:
    """External retain-or-filter judge over a simple HTTP JSON contract.

    Request:  POST {"caption": str, "checklist": [str, ...]}
    Response: {"verdict": "retain"|"filter", "rationale": str}
    """

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def __call__(self, caption: str, checklist: list[str]) -> tuple[str, str]:
        import requests

        resp = requests.post(
            self.url,
            json={"caption": caption, "checklist": checklist},
            timeout=self.timeout,
        )
        resp.raise_for_status()
        body = resp.json()
        verdict = body.get("verdict")
        if verdict not in ("retain", "filter"):
            raise RuleError(f"judge returned invalid verdict {verdict!r}")
        return verdict, body.get("rationale", "")


def verify_records(records, rules: RuleSet, judge=None):
    """Apply check_caption to JSONL-style records, yielding result dicts.

    A caption that survives the rule checks may be forwarded to `judge`,
    whose reply is final.
    """
    for rec in records:
        decision = check_caption(
            rec["caption"],
            rules,
            tags=rec.get("tags"),
            transcript=rec.get("transcript"),
        )
        out = {"clip_id": rec.get("clip_id"), **decision.to_dict()}
        if judge is not None and decision.verdict == "retain":
            verdict, rationale = judge(rec["caption"], list(ITEMS))
            out["verdict"] = verdict
            out["judge_rationale"] = rationale
        yield out
