"""Privacy audit helpers: how much of a sanitised event set can be un-hashed."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .ni import sha256_hex


@dataclass(frozen=True)
class AttackResult:
    targets: int
    recovered: dict[str, str]  # digest -> clear value

    @property
    def rate(self) -> float:
        return len(self.recovered) / self.targets if self.targets else 0.0


def dictionary_attack(digests: Iterable[str], candidates: Iterable[str],
                      salts: Iterable[str] = ()) -> AttackResult:
    """Hash every candidate (and candidate+salt for each known salt) and
    report which target digests were matched."""
    targets = set(digests)
    salts = list(salts)
    table: dict[str, str] = {}
    for value in candidates:
        table[sha256_hex(value)] = value
        for salt in salts:
            table[sha256_hex(value + salt)] = value
    return AttackResult(len(targets), {d: table[d] for d in targets if d in table})
