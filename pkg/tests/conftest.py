import json
import random

import pytest

from coevo.instances import BppInstance, InstanceSet, TspInstance, coords_to_matrix

UNIT_SQUARE = [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)]

# nearest-neighbor trap: greedy from 0 walks 0-1-2-3 for 13, optimum 6
TRAP4 = [
    [0, 1, 2, 10],
    [1, 0, 1, 2],
    [2, 1, 0, 1],
    [10, 2, 1, 0],
]


@pytest.fixture
def unit_square():
    return TspInstance("square", 4, coords_to_matrix(UNIT_SQUARE, "exact"))


@pytest.fixture
def trap4():
    return TspInstance("trap4", 4, [row[:] for row in TRAP4])


def random_tsp(rng: random.Random, n: int, rounding: str = "exact") -> TspInstance:
    pts = [(rng.uniform(0, 1000), rng.uniform(0, 1000)) for _ in range(n)]
    return TspInstance(f"rand{n}", n, coords_to_matrix(pts, rounding))


def random_bpp(rng: random.Random, n: int, capacity: int = 100) -> BppInstance:
    sizes = [rng.randint(15, 60) for _ in range(n)]
    return BppInstance(f"rand{n}", n, sizes, capacity)


def make_set(*instances, kind=None) -> InstanceSet:
    kind = kind or ("tsp" if isinstance(instances[0], TspInstance) else "bpp")
    return InstanceSet(list(instances), kind=kind, source="test")


def write_tsp_file(path, name, matrix):
    n = len(matrix)
    rows = "\n".join(" ".join(str(v) for v in row) for row in matrix)
    path.write_text(
        f"NAME : {name}\nTYPE : TSP\nDIMENSION : {n}\n"
        "EDGE_WEIGHT_TYPE : EXPLICIT\nEDGE_WEIGHT_FORMAT : FULL_MATRIX\n"
        f"EDGE_WEIGHT_SECTION\n{rows}\nEOF\n"
    )


def write_euc2d_file(path, name, coords):
    nodes = "\n".join(f"{i + 1} {x} {y}" for i, (x, y) in enumerate(coords))
    path.write_text(
        f"NAME : {name}\nTYPE : TSP\nDIMENSION : {len(coords)}\n"
        f"EDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n{nodes}\nEOF\n"
    )


def write_mock_script(path, generate=(), evolve=(), flat=()):
    lines = []
    for text in generate:
        lines.append({"key": "generate", "text": text})
    for text in evolve:
        lines.append({"key": "prompt-evolve", "text": text})
    for text in flat:
        lines.append({"text": text})
    path.write_text("\n".join(json.dumps(line) for line in lines) + "\n")
    return path
