"""
Intent template banks: every intent renders to one of several paraphrase templates, with
optional lexical noise (filler openers and synonym swaps). Rendering is invertible through
`resolve`, which maps a noisy utterance back to its intent and slot values.
"""

from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import regex

from intentpool.core.errors import UnknownIntentError, ValidationError

FILLERS = ("Okay,", "Hmm,", "Alright,", "Well,", "So,")

SYNONYMS: Dict[str, Tuple[str, ...]] = {
    "propose": ("suggest",),
    "think": ("believe", "reckon"),
    "accept": ("take",),
    "ready": ("prepared",),
    "exactly": ("precisely",),
}

_SLOT = regex.compile(r"\{(\w+)\}")


class IntentTemplateBank:
    def __init__(
        self,
        templates: Mapping[str, Sequence[str]],
        noise: float = 0.0,
        fillers: Sequence[str] = FILLERS,
        synonyms: Mapping[str, Sequence[str]] = SYNONYMS,
    ):
        if not 0.0 <= noise <= 1.0:
            raise ValidationError(f"noise must lie in [0, 1], got {noise}")
        self.templates: Dict[str, Tuple[str, ...]] = {intent: tuple(ts) for intent, ts in templates.items()}
        self.noise = noise
        self.fillers = tuple(fillers)
        self.synonyms = {word: tuple(alts) for word, alts in synonyms.items()}
        self._validate()
        self._exact: Dict[str, str] = {}
        self._patterns: List[Tuple[regex.Pattern, str]] = []
        for intent, ts in self.templates.items():
            for template in ts:
                if _SLOT.search(template):
                    self._patterns.append((self._compile(template), intent))
                else:
                    self._exact[template] = intent
        self._synonym_patterns = [
            (regex.compile(rf"\b{regex.escape(alt)}\b"), word) for word, alts in self.synonyms.items() for alt in alts
        ]

    def _validate(self) -> None:
        owner: Dict[str, str] = {}
        alternatives = {alt for alts in self.synonyms.values() for alt in alts}
        for intent, ts in self.templates.items():
            if len(ts) < 2:
                raise ValidationError(f"intent {intent!r} needs at least 2 templates, has {len(ts)}")
            for template in ts:
                if template in owner and owner[template] != intent:
                    raise ValidationError(f"template {template!r} appears under {owner[template]!r} and {intent!r}")
                owner[template] = intent
                if not template[:1].isupper():
                    raise ValidationError(f"template {template!r} must start with an uppercase letter")
                for alt in alternatives:
                    if regex.search(rf"\b{regex.escape(alt)}\b", _SLOT.sub("", template)):
                        raise ValidationError(f"template {template!r} contains synonym alternative {alt!r}")

    @staticmethod
    def _compile(template: str) -> regex.Pattern:
        parts, last = [], 0
        for match in _SLOT.finditer(template):
            parts.append(regex.escape(template[last : match.start()]))
            parts.append(rf"(?P<{match.group(1)}>.+?)")
            last = match.end()
        parts.append(regex.escape(template[last:]))
        return regex.compile("".join(parts))

    @property
    def intents(self) -> List[str]:
        return list(self.templates)

    def __contains__(self, intent: str) -> bool:
        return intent in self.templates

    def merged(self, other: "IntentTemplateBank") -> "IntentTemplateBank":
        templates = dict(self.templates)
        templates.update(other.templates)
        return IntentTemplateBank(templates, self.noise, self.fillers, self.synonyms)

    def render(self, intent: str, rng: np.random.Generator, **slots) -> str:
        if intent not in self.templates:
            raise UnknownIntentError(f"intent {intent!r} is not in the template bank")
        options = self.templates[intent]
        text = options[int(rng.integers(len(options)))].format(**slots)
        if self.noise > 0:
            for word, alts in self.synonyms.items():
                if rng.random() < self.noise and regex.search(rf"\b{word}\b", text):
                    alt = alts[int(rng.integers(len(alts)))]
                    text = regex.sub(rf"\b{word}\b", alt, text, count=1)
            if rng.random() < self.noise:
                filler = self.fillers[int(rng.integers(len(self.fillers)))]
                text = f"{filler} {text[0].lower()}{text[1:]}"
        return text

    def canonicalize(self, text: str) -> str:
        text = text.strip()
        for filler in self.fillers:
            if text.startswith(filler + " "):
                rest = text[len(filler) + 1 :]
                text = rest[:1].upper() + rest[1:]
                break
        for pattern, word in self._synonym_patterns:
            text = pattern.sub(word, text)
        return text

    def resolve(self, text: str) -> Tuple[str, Dict[str, str]]:
        """Map a rendered utterance back to (intent, slot values)."""
        canonical = self.canonicalize(text)
        intent = self._exact.get(canonical)
        if intent is not None:
            return intent, {}
        for pattern, intent in self._patterns:
            match = pattern.fullmatch(canonical)
            if match is not None:
                return intent, match.groupdict()
        raise UnknownIntentError(f"utterance {text!r} does not match any template")

    def intent_of(self, text: str) -> str:
        return self.resolve(text)[0]
