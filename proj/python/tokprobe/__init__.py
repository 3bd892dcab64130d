"""Python access to the tokprobe core: rendering, oracles, BPE, parsing and the pipeline."""

import json
import os
from pathlib import Path

_share = Path(__file__).resolve().parent / "share"
if "TOKPROBE_DATA_DIR" not in os.environ and (_share / "templates").is_dir():
    os.environ["TOKPROBE_DATA_DIR"] = str(_share)

from . import _tokprobe  # noqa: E402
from ._tokprobe import (  # noqa: E402,F401
    ConfigError,
    IntegrityError,
    InvalidInput,
    ParseError,
    format_pct,
    oracle_count,
    oracle_reverse,
    oracle_sort,
    parse_rendered,
    pearson,
    render,
    spearman,
    train_bpe,
)

__version__ = "0.1.0"


def tokenize(merges, text, units=None):
    """Encode `text` with a merges file body; with `units`, include the alignment report."""
    return json.loads(_tokprobe.tokenize_json(merges, text, list(units or [])))


def generate(task, alphabet, lo, hi, n, format="a", seed=0):
    """Instances as dicts, same schema as the instances file."""
    return json.loads(_tokprobe.generate_json(task, alphabet, lo, hi, n, format, seed))


def render_prompt(instance, variant, templates_dir=""):
    return json.loads(_tokprobe.render_prompt_json(json.dumps(instance), variant, templates_dir))


def parse_answer(task, raw):
    """Parse a response for a task label such as "counting:a" or "sorting"."""
    return json.loads(_tokprobe.parse_json(task, raw))


def run_pipeline(config_path):
    return json.loads(_tokprobe.run_pipeline_json(str(config_path)))
