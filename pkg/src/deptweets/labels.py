from __future__ import annotations

from enum import Enum


class DepressionClass(str, Enum):
    """The six target classes. Values are the stable serialized names."""

    BIPOLAR = "Bipolar"
    MAJOR = "Major"
    PSYCHOTIC = "Psychotic"
    ATYPICAL = "Atypical"
    POSTPARTUM = "Postpartum"
    NO_DEPRESSION = "NoDepression"

    @classmethod
    def parse(cls, name: str) -> "DepressionClass":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(
                f"unknown class {name!r}; expected one of {[c.value for c in cls]}"
            ) from None


LABEL_ORDER: tuple[DepressionClass, ...] = tuple(DepressionClass)
DEPRESSION_CLASSES: tuple[DepressionClass, ...] = LABEL_ORDER[:5]
