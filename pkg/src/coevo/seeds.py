"""Classic seed heuristics as standalone candidate programs.

Each seed exists twice: as a native function in ``heuristics`` and as a
self-contained candidate program speaking the stdin/stdout protocol. The
program text is composed here from the native cores' own source, so the
two can never drift apart.
"""

from __future__ import annotations

import inspect
import textwrap
from dataclasses import dataclass

from . import heuristics

_HARNESS = """\
def main():
    doc = json.loads(sys.stdin.read())
    {body}
    sys.stdout.write(json.dumps(solution))


main()
"""


@dataclass(frozen=True)
class SeedSpec:
    name: str
    problem: str  # "tsp" | "bpp"
    cores: tuple[str, ...]  # function names in heuristics to embed
    body: str  # harness statements producing `solution`


_SEEDS = (
    SeedSpec(
        "nearest-neighbor",
        "tsp",
        ("nearest_neighbor_core",),
        'solution = {"tour": nearest_neighbor_core(doc["matrix"], 0)}',
    ),
    SeedSpec(
        "nearest-insertion",
        "tsp",
        ("insertion_tour_core",),
        'solution = {"tour": insertion_tour_core(doc["matrix"], "nearest", None)}',
    ),
    SeedSpec(
        "farthest-insertion",
        "tsp",
        ("insertion_tour_core",),
        'solution = {"tour": insertion_tour_core(doc["matrix"], "farthest", None)}',
    ),
    SeedSpec(
        "random-insertion",
        "tsp",
        ("insertion_tour_core",),
        'solution = {"tour": insertion_tour_core(doc["matrix"], "random", random.Random(0))}',
    ),
    SeedSpec(
        "two-opt",
        "tsp",
        ("nearest_neighbor_core", "two_opt_core"),
        'solution = {"tour": two_opt_core(doc["matrix"], '
        'nearest_neighbor_core(doc["matrix"], 0))}',
    ),
    SeedSpec(
        "christofides",
        "tsp",
        ("christofides_core",),
        'solution = {"tour": christofides_core(doc["matrix"])}',
    ),
    SeedSpec(
        "first-fit",
        "bpp",
        ("fit_packing_core",),
        'solution = {"bins": fit_packing_core(doc["sizes"], doc["capacity"], "first")}',
    ),
    SeedSpec(
        "best-fit",
        "bpp",
        ("fit_packing_core",),
        'solution = {"bins": fit_packing_core(doc["sizes"], doc["capacity"], "best")}',
    ),
    SeedSpec(
        "next-fit",
        "bpp",
        ("fit_packing_core",),
        'solution = {"bins": fit_packing_core(doc["sizes"], doc["capacity"], "next")}',
    ),
    SeedSpec(
        "worst-fit",
        "bpp",
        ("fit_packing_core",),
        'solution = {"bins": fit_packing_core(doc["sizes"], doc["capacity"], "worst")}',
    ),
)

SEEDS = {spec.name: spec for spec in _SEEDS}
SEED_NAMES = tuple(spec.name for spec in _SEEDS)


def seed_names(problem: str | None = None) -> tuple[str, ...]:
    if problem is None:
        return SEED_NAMES
    return tuple(s.name for s in _SEEDS if s.problem == problem)


def seed_source(name: str) -> str:
    """Full candidate program text for a named seed heuristic."""
    if name not in SEEDS:
        raise KeyError(f"unknown seed heuristic {name!r}; known: {', '.join(SEED_NAMES)}")
    spec = SEEDS[name]
    parts = ["import json", "import math", "import random", "import sys", "", ""]
    for core in spec.cores:
        fn = getattr(heuristics, core)
        parts.append(textwrap.dedent(inspect.getsource(fn)).rstrip())
        parts.append("")
        parts.append("")
    parts.append(_HARNESS.format(body=spec.body))
    return "\n".join(parts)
