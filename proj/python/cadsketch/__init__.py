"""Raster CAD sketch parameterization.

Sketches cross the boundary as JSON lines (the corpus file format); the
helpers here accept and return plain dicts as well.
"""

import json

from ._cadsketch import (
    MAX_PRIMITIVES,
    TOKENS_PER_SLOT,
    VOCAB_SIZE,
    Error,
    Model,
    build_corpus,
    chamfer,
    dequantize,
    detokenize,
    generate,
    handdraw,
    hungarian,
    img_mse,
    quantize,
    rasterize,
    read_pgm,
    tokenize,
    version,
    write_pgm,
)

__all__ = [
    "MAX_PRIMITIVES",
    "TOKENS_PER_SLOT",
    "VOCAB_SIZE",
    "Error",
    "Model",
    "build_corpus",
    "chamfer",
    "dequantize",
    "detokenize",
    "dumps",
    "generate",
    "handdraw",
    "hungarian",
    "img_mse",
    "load_model",
    "loads",
    "quantize",
    "rasterize",
    "read_pgm",
    "tokenize",
    "version",
    "write_pgm",
]


def loads(line):
    """Sketch dict from a JSON line."""
    return json.loads(line)


def dumps(sketch):
    """JSON line from a sketch dict (strings pass through)."""
    return sketch if isinstance(sketch, str) else json.dumps(sketch, separators=(",", ":"))


def load_model(config_path, spn, srn=None):
    """Model from a run config file and checkpoint paths."""
    with open(config_path) as f:
        return Model(f.read(), spn, srn)
