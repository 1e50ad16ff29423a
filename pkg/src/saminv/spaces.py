"""Latent space identifiers and their editability ordering."""

from __future__ import annotations

from enum import Enum


class LatentSpace(str, Enum):
    """A latent space an image region can be inverted into.

    W_PLUS / Z_PLUS are the native (most editable) code spaces; the F_k
    members name intermediate feature spaces, deeper k = closer to pixels.
    """

    W_PLUS = "w_plus"
    Z_PLUS = "z_plus"
    F2 = "f2"
    F4 = "f4"
    F6 = "f6"
    F8 = "f8"
    F10 = "f10"

    def __str__(self) -> str:  # keeps CLI/json output compact
        return self.value


# Editability order, most editable first. Element 0 is the native code
# space (no feature delta); the rest are feature spaces with masked deltas.
STYLEGAN_SPACES = (
    LatentSpace.W_PLUS,
    LatentSpace.F4,
    LatentSpace.F6,
    LatentSpace.F8,
    LatentSpace.F10,
)

BIGGAN_SPACES = (
    LatentSpace.Z_PLUS,
    LatentSpace.F2,
    LatentSpace.F4,
)

# Edit capability tables are defined over the five style-family spaces.
EDITABILITY_ORDER = STYLEGAN_SPACES


def space_index(space: LatentSpace, family: tuple = STYLEGAN_SPACES) -> int:
    """Position of `space` in the family's editability order (0 = most editable)."""
    return family.index(space)


def parse_space(name: str) -> LatentSpace:
    key = name.strip().lower()
    for sp in LatentSpace:
        if sp.value == key:
            return sp
    raise ValueError(f"unknown latent space {name!r}")
