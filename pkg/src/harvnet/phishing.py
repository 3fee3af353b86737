"""Subject-keyword phishing classification and per-harvester phishing levels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources

from .errors import ConfigError
from .ingest import EventWindow

PHISHER_THRESHOLD = Fraction(1, 2)


@dataclass(frozen=True)
class PhishingProfile:
    harvester: int
    phishing_emails: int
    total_emails: int

    @property
    def phishing_level(self) -> Fraction:
        return Fraction(self.phishing_emails, self.total_emails)

    @property
    def is_phisher(self) -> bool:
        # strict: exactly one half is not a phisher
        return self.phishing_level > PHISHER_THRESHOLD

    @property
    def label(self) -> str:
        return "phisher" if self.is_phisher else "non-phisher"


def parse_keywords(lines) -> list[str]:
    keywords = []
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if line:
            keywords.append(line.lower())
    return keywords


def load_keywords(path=None) -> list[str]:
    """Read a keyword file (one per line, ``#`` comments); the bundled list if no path."""
    if path is None:
        text = resources.files("harvnet").joinpath("data/phishing_keywords.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    keywords = parse_keywords(text.splitlines())
    if not keywords:
        raise ConfigError(f"keyword list {path or '<default>'} is empty")
    return keywords


def classify_email(subject: str, keywords) -> bool:
    if not keywords:
        raise ConfigError("phishing keyword list is empty")
    folded = subject.casefold()
    return any(kw in folded for kw in keywords)


def phishing_profiles(window: EventWindow, keywords) -> list[PhishingProfile]:
    if not keywords:
        raise ConfigError("phishing keyword list is empty")
    phish = [0] * window.M
    total = [0] * window.M
    for ev in window.events:
        i = window.harvesters[ev.harvester_ip]
        total[i] += 1
        if classify_email(ev.subject, keywords):
            phish[i] += 1
    return [PhishingProfile(i, phish[i], total[i]) for i in range(window.M)]


def phisher_labels(profiles) -> list[bool]:
    return [p.is_phisher for p in profiles]


def phishing_level_histogram(profiles, bin_width: float = 0.1) -> list[tuple[float, float, int]]:
    """Count harvesters per phishing-level bin.

    Returns ``(low, high, count)`` rows.  Bins are half-open ``[low, high)``
    except the last, which is closed so that a level of exactly 1 lands in it.
    """
    if not 0 < bin_width <= 1:
        raise ConfigError(f"bin width must be in (0, 1], got {bin_width}")
    if not profiles:
        raise ValueError("no phishing profiles to histogram")
    width = Fraction(bin_width).limit_denominator(10**6)
    n_bins = math.ceil(1 / width)
    counts = [0] * n_bins
    for p in profiles:
        idx = min(math.floor(p.phishing_level / width), n_bins - 1)
        counts[idx] += 1
    return [
        (float(b * width), float(min((b + 1) * width, 1)), counts[b])
        for b in range(n_bins)
    ]
