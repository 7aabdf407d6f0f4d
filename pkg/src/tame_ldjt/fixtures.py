"""The researcher-reputation model shipped with the package.

Persons ``X`` and journals ``J``; boolean PRVs ``R`` (reputation), ``A``
(attends conference), ``D`` (does research) and ``Pub`` (publishes).  The
potentials are repository fixtures chosen strictly positive and asymmetric;
they are not taken from any published source.
"""

from __future__ import annotations

from importlib import resources

from tame_ldjt import modelfile
from tame_ldjt.pmodel import PDM


def gex_document() -> modelfile.Document:
    text = resources.files("tame_ldjt").joinpath("data/gex.json").read_text()
    return modelfile.loads(text)


def gex_pdm(persons: int | None = None, journals: int | None = None) -> PDM:
    """The two-slice model, optionally resized to ``persons`` x1..xn / ``journals``."""
    pdm = gex_document().pdm
    if persons is not None:
        pdm = pdm.with_domain("X", person_names(persons))
    if journals is not None:
        pdm = pdm.with_domain("J", [f"j{i + 1}" for i in range(journals)])
    return pdm


def person_names(n: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)]
