"""Deterministic instruction parsing into target/anchor/distractor concept sets.

The grammar is declared data: a list of {verb, preposition} pairs. An
instruction matches when its first token is a known verb; the anchor
phrase starts after the last token equal to one of that verb's
prepositions. Leading articles are stripped from both phrases; attribute
phrases ("spoon with green handle") are kept whole. No model calls, ever.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import EmptyPhrase, InvalidConfig, UnknownDomain, UnsupportedTemplate

_ARTICLES = {"the", "a", "an"}


@dataclass(frozen=True)
class GrammarRule:
    verb: str
    preposition: str


@dataclass(frozen=True)
class ConceptDecomposition:
    """Instruction-derived safe and distractor concept sets."""

    target: str
    anchor: str | None
    distractors: tuple[str, ...]
    robot_concept: str = "robot"

    def safe_set(self) -> tuple[str, ...]:
        if self.anchor is None:
            return (self.target, self.robot_concept)
        return (self.target, self.anchor, self.robot_concept)

    def all_concepts(self) -> tuple[str, ...]:
        return self.safe_set() + self.distractors


def default_grammar() -> list[GrammarRule]:
    return _parse_grammar(json.loads(_read_data("grammar.json")))


def default_lexicon() -> dict[str, list[str]]:
    return _validate_lexicon(json.loads(_read_data("lexicons.json")))


def load_grammar(path: str | Path) -> list[GrammarRule]:
    return _parse_grammar(json.loads(Path(path).read_text(encoding="utf-8")))


def load_lexicon(path: str | Path) -> dict[str, list[str]]:
    return _validate_lexicon(json.loads(Path(path).read_text(encoding="utf-8")))


def _read_data(name: str) -> str:
    return resources.files("scenegate.data").joinpath(name).read_text(encoding="utf-8")


def _parse_grammar(raw) -> list[GrammarRule]:
    if not isinstance(raw, list) or not raw:
        raise InvalidConfig("grammar must be a non-empty list of {verb, preposition} pairs")
    rules = []
    for entry in raw:
        try:
            rules.append(GrammarRule(entry["verb"].lower(), entry["preposition"].lower()))
        except (KeyError, TypeError, AttributeError) as exc:
            raise InvalidConfig(f"bad grammar entry {entry!r}") from exc
    return rules


def _validate_lexicon(raw) -> dict[str, list[str]]:
    if not isinstance(raw, dict):
        raise InvalidConfig("lexicon must be a JSON object of domain -> concept list")
    for key, entries in raw.items():
        if not isinstance(entries, list) or not entries or not all(
            isinstance(e, str) and e.strip() for e in entries
        ):
            raise InvalidConfig(f"lexicon domain {key!r} must map to a non-empty list of concepts")
    return {k: [e.strip() for e in v] for k, v in raw.items()}


def _strip_articles(tokens: list[str]) -> list[str]:
    i = 0
    while i < len(tokens) and tokens[i].lower() in _ARTICLES:
        i += 1
    return tokens[i:]


def _match(text: str, grammar: list[GrammarRule]) -> tuple[str, str | None, str, str | None]:
    """Return (verb, preposition, target, anchor); preposition/anchor may be None."""
    tokens = text.split()
    if not tokens:
        raise UnsupportedTemplate("blank instruction")
    verb = tokens[0].lower()
    preps = [r.preposition for r in grammar if r.verb == verb]
    if not preps:
        raise UnsupportedTemplate(f"no grammar rule for verb {tokens[0]!r}")
    split_at = None
    for i in range(len(tokens) - 1, 0, -1):
        if tokens[i].lower() in preps:
            split_at = i
            break
    if split_at is None:
        target_tokens = _strip_articles(tokens[1:])
        if not target_tokens:
            raise EmptyPhrase("instruction names no target")
        return verb, None, " ".join(target_tokens), None
    target_tokens = _strip_articles(tokens[1:split_at])
    anchor_tokens = _strip_articles(tokens[split_at + 1 :])
    if not target_tokens:
        raise EmptyPhrase("empty target phrase")
    if not anchor_tokens:
        raise EmptyPhrase("empty anchor phrase")
    return verb, tokens[split_at].lower(), " ".join(target_tokens), " ".join(anchor_tokens)


def parse_instruction(
    text: str, grammar: list[GrammarRule] | None = None
) -> tuple[str, str | None]:
    """Extract (target phrase, anchor phrase) from an instruction.

    Phrases are returned verbatim apart from whitespace normalization and
    leading-article removal; multi-word attribute phrases stay intact.
    """
    _, _, target, anchor = _match(text, grammar or default_grammar())
    return target, anchor


def render_instruction(
    target: str, anchor: str | None, verb: str = "put", preposition: str = "on"
) -> str:
    if anchor is None:
        return f"{verb} {target}".lower()
    return f"{verb} {target} {preposition} {anchor}".lower()


def normalize_instruction(text: str, grammar: list[GrammarRule] | None = None) -> str:
    """Canonical lowercase rendering of the matched template."""
    verb, prep, target, anchor = _match(text, grammar or default_grammar())
    return render_instruction(target, anchor, verb=verb, preposition=prep or "on")


def decompose(
    text: str,
    lexicon: dict[str, list[str]],
    domain_key: str,
    grammar: list[GrammarRule] | None = None,
) -> ConceptDecomposition:
    """Parse an instruction and gate the domain lexicon against its safe set.

    Lexicon entries string-equal (case-insensitively) to the target or
    anchor are excluded from the distractor set; duplicates are dropped
    keeping first occurrence.
    """
    target, anchor = parse_instruction(text, grammar)
    if domain_key not in lexicon:
        raise UnknownDomain(f"domain {domain_key!r} not present in lexicon")
    safe_lower = {target.lower()}
    if anchor is not None:
        safe_lower.add(anchor.lower())
    distractors: list[str] = []
    seen: set[str] = set()
    for entry in lexicon[domain_key]:
        low = entry.lower()
        if low in safe_lower or low in seen:
            continue
        seen.add(low)
        distractors.append(entry)
    return ConceptDecomposition(target=target, anchor=anchor, distractors=tuple(distractors))
