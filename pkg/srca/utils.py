import hashlib
import json
import math

import numpy as np

# PCG64 is the named, portable 64-bit generator behind every seeded stream.
BIT_GENERATOR = np.random.PCG64


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    children = np.random.SeedSequence(seed).spawn(stream + 1)
    return np.random.Generator(BIT_GENERATOR(children[stream]))


def subset_count(d: int, size: int) -> int:
    return math.comb(d, size)


def digest(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
