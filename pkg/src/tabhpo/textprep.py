"""Rule-based review normalisation.

Stages run in a fixed order, each can be switched off::

    repair-encoding -> nfkc -> mask-entities -> demojize -> idiom-map
    -> lowercase -> stopword-filter

Mask tokens (``<url>``, ``<email>``, ``<html_tag>``) and emoji tokens such as
``:thumbs_up:`` pass every later stage verbatim.  Words produced by the idiom
map are protected from stopword removal alongside the negation whitelist,
and :func:`run_pipeline` repeats the stage sequence until its token output
is stable, so feeding the output back in is always the identity.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

STAGES = ("repair-encoding", "nfkc", "mask-entities", "demojize", "idiom-map", "lowercase", "stopword-filter")
MASKS = {"url": "<url>", "email": "<email>", "html": "<html_tag>"}
MAX_PASSES = 8

_MASK_RE = r"<(?:url|email|html_tag)>"
_EMOJI_TOKEN_RE = r":[a-z0-9][a-z0-9_+\-]*:"
PROTECTED_RE = re.compile(rf"^(?:{_MASK_RE}|{_EMOJI_TOKEN_RE})$")
TOKEN_RE = re.compile(rf"{_MASK_RE}|{_EMOJI_TOKEN_RE}|\w+")

URL_RE = re.compile(r"(?:\b[A-Za-z][A-Za-z0-9+.\-]*://|\bwww\.)\S+")
EMAIL_RE = re.compile(r"(?<!\S)[^\s@]+@[^\s@.]+(?:\.[^\s@.]+)+\.?(?!\S)")
HTML_RE = re.compile(rf"(?!{_MASK_RE})</?[A-Za-z][^<>]*>")

# Pictographic ranges plus emoji combining marks (ZWJ, variation selectors, skin tones, keycaps, tags).
_PICTO = (
    "\U0001F000-\U0001FAFF"
    "☀-➿"
    "⬀-⯿"
    "⌀-⏿"
    "←-⇿"
    "‼⁉™ℹⓂ〰〽㊗㊙"
    "‍︎️⃣"
    "\U000E0020-\U000E007F"
)
PICTO_RE = re.compile(f"[{_PICTO}]+")

_MOJIBAKE_RUN = re.compile("[\u0080-ÿŒœŠšŸŽžƒˆ˜–-™]{2,}")
_MOJIBAKE_SIG = re.compile("[Â-ô][\u0080-¿ŒœŠšŸŽžƒˆ˜–-™]")


# resource loading ----------------------------------------------------------

def _read_lines(path_or_name) -> list[str]:
    if isinstance(path_or_name, Path) or (isinstance(path_or_name, str) and ("/" in path_or_name or "\\" in path_or_name)):
        text = Path(path_or_name).read_text(encoding="utf-8")
    else:
        text = resources.files("tabhpo.data").joinpath(path_or_name).read_text(encoding="utf-8")
    return [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def _parse_codepoints(key: str) -> str:
    parts = key.split()
    if parts and all(re.fullmatch(r"(?:U\+)?[0-9A-Fa-f]{4,6}", p) for p in parts):
        return "".join(chr(int(p.removeprefix("U+"), 16)) for p in parts)
    return key


def load_mapping(source, codepoints: bool = False) -> dict[str, str]:
    """Tab-separated ``key<TAB>value`` lines; ``#`` starts a comment line."""
    out = {}
    for n, ln in enumerate(_read_lines(source), 1):
        if "\t" not in ln:
            raise ValueError(f"{source}: line {n} lacks a tab separator")
        k, v = ln.split("\t", 1)
        k = _parse_codepoints(k.strip()) if codepoints else k.strip()
        out[k] = v.strip()
    return out


def load_wordlist(source) -> frozenset:
    return frozenset(ln.strip() for ln in _read_lines(source))


def builtin_emoji_map() -> dict[str, str]:
    return load_mapping("emoji.tsv", codepoints=True)


# config ----------------------------------------------------------------------

@dataclass(frozen=True)
class NormalizationConfig:
    emoji_map: Mapping[str, str] = field(default_factory=builtin_emoji_map)
    idiom_map: Mapping[str, str] = field(default_factory=lambda: load_mapping("idioms.tsv"))
    stopwords: frozenset = field(default_factory=lambda: load_wordlist("stopwords_es.txt"))
    negation_whitelist: frozenset = field(default_factory=lambda: load_wordlist("negations.txt"))
    skip: frozenset = frozenset()

    def __post_init__(self):
        unknown = set(self.skip) - set(STAGES)
        if unknown:
            raise ValueError(f"unknown stage(s) to skip: {sorted(unknown)}")
        object.__setattr__(self, "skip", frozenset(self.skip))
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))
        object.__setattr__(self, "negation_whitelist", frozenset(self.negation_whitelist))

    def with_(self, **kw) -> "NormalizationConfig":
        return replace(self, **kw)

    @cached_property
    def protected_words(self) -> frozenset:
        """Whitelist plus every word an idiom replacement can emit."""
        made = {w for v in self.idiom_map.values() for w in TOKEN_RE.findall(v.lower())}
        return self.negation_whitelist | made

    @cached_property
    def _emoji_re(self):
        keys = sorted(self.emoji_map, key=len, reverse=True)
        return re.compile("|".join(re.escape(k) for k in keys)) if keys else None

    @cached_property
    def _idiom_re(self):
        phrases = sorted(self.idiom_map, key=lambda p: (-len(p.split()), -len(p), p))
        if not phrases:
            return None
        alts = [r"\s+".join(re.escape(w) for w in p.split()) for p in phrases]
        return re.compile(r"(?<!\w)(?:" + "|".join(alts) + r")(?!\w)", re.IGNORECASE)

    @cached_property
    def _idiom_lookup(self):
        return {" ".join(k.casefold().split()): v for k, v in self.idiom_map.items()}


# stages ----------------------------------------------------------------------

def decode_bytes(data: bytes) -> tuple[str, int]:
    """UTF-8 decode with U+FFFD replacement; returns (text, n_replaced)."""
    text = data.decode("utf-8", errors="replace")
    return text, text.count("�") - data.decode("utf-8", errors="ignore").count("�")


def repair_encoding(text: str) -> tuple[str, int]:
    """Undo one layer of UTF-8-read-as-Latin-1/CP1252 damage in suspicious runs."""
    count = 0

    def fix(m):
        nonlocal count
        run = m.group(0)
        if not _MOJIBAKE_SIG.search(run):
            return run
        for codec in ("cp1252", "latin-1"):
            try:
                out = run.encode(codec).decode("utf-8")
            except (UnicodeEncodeError, UnicodeDecodeError):
                continue
            count += 1
            return out
        return run

    return _MOJIBAKE_RUN.sub(fix, text), count


def nfkc_normalize(text: str) -> str:
    return unicodedata.normalize("NFKC", text)


def mask_entities(text: str, cfg: NormalizationConfig | None = None) -> tuple[str, dict]:
    counts = {}
    text, counts["url"] = URL_RE.subn(f" {MASKS['url']} ", text)
    text, counts["email"] = EMAIL_RE.subn(f" {MASKS['email']} ", text)
    text, counts["html"] = HTML_RE.subn(MASKS["html"], text)
    if counts["url"] or counts["email"]:
        text = re.sub(r"[ ]{2,}", " ", text).strip()
    return text, counts


def demojize(text: str, emoji_map: Mapping[str, str] | NormalizationConfig | None = None) -> tuple[str, dict]:
    cfg = emoji_map if isinstance(emoji_map, NormalizationConfig) else \
        NormalizationConfig(emoji_map=builtin_emoji_map() if emoji_map is None else dict(emoji_map),
                            idiom_map={}, stopwords=frozenset(), negation_whitelist=frozenset())
    counts = {"mapped": 0, "dropped": 0}
    rx = cfg._emoji_re
    if rx is not None:
        def sub(m):
            counts["mapped"] += 1
            return f" {cfg.emoji_map[m.group(0)]} "
        text = rx.sub(sub, text)

    def drop(m):
        # leftover combining marks alone (e.g. a stray FE0F) are not counted as pictographs
        if any(unicodedata.category(ch) == "So" for ch in m.group(0)):
            counts["dropped"] += 1
        return " "

    text = PICTO_RE.sub(drop, text)
    return text, counts


def map_idioms(text: str, idiom_map: Mapping[str, str] | NormalizationConfig) -> tuple[str, int]:
    """Whole-word, case-insensitive, longest-phrase-first replacement in one pass."""
    cfg = idiom_map if isinstance(idiom_map, NormalizationConfig) else \
        NormalizationConfig(emoji_map={}, idiom_map=dict(idiom_map), stopwords=frozenset(),
                            negation_whitelist=frozenset())
    rx = cfg._idiom_re
    if rx is None:
        return text, 0
    lookup = cfg._idiom_lookup
    return rx.subn(lambda m: lookup[" ".join(m.group(0).casefold().split())], text)


def lowercase(text: str) -> str:
    # protected tokens are already lower case by construction; lowering keeps them verbatim
    return text.lower()


def tokenize(text: str) -> list[str]:
    return TOKEN_RE.findall(text)


def filter_stopwords(tokens: Sequence[str], stopwords: Iterable[str], whitelist: Iterable[str] = ()) -> list[str]:
    stop, keep = set(stopwords), set(whitelist)
    return [t for t in tokens if t not in stop or t in keep]


# full pipeline -----------------------------------------------------------------

@dataclass
class PipelineResult:
    tokens: list
    trace: list  # one dict per executed stage of the first pass
    passes: int = 1
    replaced_bytes: int = 0


def _one_pass(text: str, cfg: NormalizationConfig) -> tuple[list, list]:
    trace = []

    def rec(stage, out, **counts):
        trace.append({"stage": stage, "length": len(out), **counts})

    if "repair-encoding" not in cfg.skip:
        text, n = repair_encoding(text)
        rec("repair-encoding", text, repaired=n)
    if "nfkc" not in cfg.skip:
        text = nfkc_normalize(text)
        rec("nfkc", text)
    if "mask-entities" not in cfg.skip:
        text, c = mask_entities(text, cfg)
        rec("mask-entities", text, **c)
    if "demojize" not in cfg.skip:
        text, c = demojize(text, cfg)
        rec("demojize", text, **c)
    if "idiom-map" not in cfg.skip:
        text, n = map_idioms(text, cfg)
        rec("idiom-map", text, replaced=n)
    if "lowercase" not in cfg.skip:
        text = lowercase(text)
        rec("lowercase", text)
    tokens = tokenize(text)
    if "stopword-filter" not in cfg.skip:
        before = len(tokens)
        tokens = filter_stopwords(tokens, cfg.stopwords, cfg.protected_words)
        trace.append({"stage": "stopword-filter", "length": len(tokens), "removed": before - len(tokens)})
    return tokens, trace


def run_pipeline(text: str | bytes, cfg: NormalizationConfig | None = None) -> PipelineResult:
    cfg = cfg or default_config()
    replaced = 0
    if isinstance(text, bytes):
        text, replaced = decode_bytes(text)
    tokens, trace = _one_pass(text, cfg)
    passes = 1
    while passes < MAX_PASSES:
        again, _ = _one_pass(" ".join(tokens), cfg)
        if again == tokens:
            break
        tokens = again
        passes += 1
    return PipelineResult(tokens, trace, passes, replaced)


def normalize(text: str | bytes, cfg: NormalizationConfig | None = None) -> list[str]:
    return run_pipeline(text, cfg).tokens


_DEFAULT: NormalizationConfig | None = None


def default_config() -> NormalizationConfig:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = NormalizationConfig()
    return _DEFAULT


def load_config(emoji: str | None = None, idioms: str | None = None, stopwords: str | None = None,
                whitelist: str | None = None, extend_emoji: bool = True,
                skip: Iterable[str] = ()) -> NormalizationConfig:
    """Build a config from optional user files; emoji files extend the built-in table by default."""
    base = default_config()
    emap = dict(base.emoji_map) if extend_emoji else {}
    if emoji:
        emap.update(load_mapping(emoji, codepoints=True))
    return NormalizationConfig(
        emoji_map=emap if (emoji or not extend_emoji) else base.emoji_map,
        idiom_map=load_mapping(idioms) if idioms else base.idiom_map,
        stopwords=load_wordlist(stopwords) if stopwords else base.stopwords,
        negation_whitelist=load_wordlist(whitelist) if whitelist else base.negation_whitelist,
        skip=frozenset(skip),
    )
