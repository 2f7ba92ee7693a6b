"""Regenerate tests/fixtures/glove_tiny.100d.txt.

The vectors are not trained: each word gets a fixed pseudo-random unit-scale
vector derived from a hash of the word, so the file is reproducible and small.
"""

import hashlib
from importlib import resources
from pathlib import Path

import numpy as np

from deptweets.corpus import DEFAULT_NOISE_VOCAB
from deptweets.lexicon import load_lexicons
from deptweets.textprep import normalize

DIM = 100
OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "glove_tiny.100d.txt"


def main():
    words = set(DEFAULT_NOISE_VOCAB)
    for phrase in load_lexicons().all_phrases():
        words.update(phrase.split())
    ref = resources.files("deptweets.data").joinpath("english_reference.txt").read_text("utf-8")
    words.update(normalize(ref).split())
    lines = []
    for w in sorted(words):
        seed = int.from_bytes(hashlib.sha256(w.encode()).digest()[:8], "little")
        vec = np.random.default_rng(seed).standard_normal(DIM) / np.sqrt(DIM) * 3
        lines.append(w + " " + " ".join(f"{v:.5f}" for v in vec))
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(lines)} vectors to {OUT}")


if __name__ == "__main__":
    main()
