"""Instance files (JSON) and CSV output.

An instance file is one JSON object holding ``p``, ``depth`` and either the
explicit heap-order arrays ``alpha``, ``lambda``, ``phi`` or a generator
block, written flat or nested under ``"generator"``::

    {"p": 2, "depth": 3, "family": "uniform", "saturate_alpha": true, "seed": 7}

Generator keys: ``family`` (uniform | geometric | random), ``seed``, ``s``
(geometric exponent, default 2), ``saturate_alpha`` (default true),
``alpha_scale`` (default 1), ``phi`` (``"random"`` or ``"lambda"``, default
random).
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .probe import FAMILIES, family_lambda, saturating_alpha
from .tree import InstanceError, PExponent, TreeInstance, build_instance, lengths, node_count

ARRAY_FIELDS = ("alpha", "lambda", "phi")
GENERATOR_FIELDS = ("family", "seed", "s", "saturate_alpha", "alpha_scale", "phi")


class InstanceFileError(ValueError):
    """Unparseable or invalid instance file; carries the line or field when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.field = field


def _field(doc: dict, name: str, kind, required=True, default=None):
    if name not in doc:
        if required:
            raise InstanceFileError("missing required field", field=name)
        return default
    value = doc[name]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise InstanceFileError(f"expected an integer, got {value!r}", field=name)
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InstanceFileError(f"expected a number, got {value!r}", field=name)
        value = float(value)
    elif kind is bool:
        if not isinstance(value, bool):
            raise InstanceFileError(f"expected true/false, got {value!r}", field=name)
    elif kind is str:
        if not isinstance(value, str):
            raise InstanceFileError(f"expected a string, got {value!r}", field=name)
    return value


def _generate(depth: int, exp: PExponent, gen_doc: dict) -> TreeInstance:
    family = _field(gen_doc, "family", str)
    if family not in FAMILIES:
        raise InstanceFileError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}", field="family")
    seed = _field(gen_doc, "seed", int)
    s = _field(gen_doc, "s", float, required=False, default=2.0)
    saturate = _field(gen_doc, "saturate_alpha", bool, required=False, default=True)
    scale = _field(gen_doc, "alpha_scale", float, required=False, default=1.0)
    phi_mode = _field(gen_doc, "phi", str, required=False, default="random")
    if not scale > 0:
        raise InstanceFileError("must be positive", field="alpha_scale")
    n = node_count(depth)
    lam = family_lambda(family, depth, np.random.default_rng([seed, depth, 0]), s)
    if saturate:
        alpha = saturating_alpha(depth, lam, exp).alpha * scale
    else:
        alpha = 10.0 ** np.random.default_rng([seed, depth, 1]).uniform(-3.0, 0.0, n) * lengths(depth) * scale
    if phi_mode == "random":
        phi = np.random.default_rng([seed, depth, 2]).uniform(0.0, 1.0, n)
    elif phi_mode == "lambda":
        phi = lam ** (1.0 / exp.p)
    else:
        raise InstanceFileError(f"expected 'random' or 'lambda', got {phi_mode!r}", field="phi")
    return build_instance(depth, alpha, lam, phi)


def load_instance_doc(doc) -> tuple[TreeInstance, PExponent]:
    """Validate a decoded instance document."""
    if not isinstance(doc, dict):
        raise InstanceFileError("top level must be an object")
    p = _field(doc, "p", float)
    try:
        exp = PExponent(p)
    except ValueError as exc:
        raise InstanceFileError(str(exc), field="p") from None
    depth = _field(doc, "depth", int)
    if depth < 0:
        raise InstanceFileError("must be >= 0", field="depth")

    gen_doc = doc.get("generator")
    flat_gen = "family" in doc
    explicit = [k for k in ("alpha", "lambda") if k in doc] + (["phi"] if isinstance(doc.get("phi"), list) else [])
    if gen_doc is not None or flat_gen:
        if explicit:
            raise InstanceFileError("explicit arrays and a generator block are mutually exclusive", field=explicit[0])
        if gen_doc is not None and flat_gen:
            raise InstanceFileError("generator given both flat and nested", field="generator")
        block = gen_doc if gen_doc is not None else {k: doc[k] for k in GENERATOR_FIELDS if k in doc}
        if not isinstance(block, dict):
            raise InstanceFileError("must be an object", field="generator")
        return _generate(depth, exp, block), exp

    arrays = {}
    n = node_count(depth)
    for name in ARRAY_FIELDS:
        value = _field(doc, name, list)
        if len(value) != n:
            raise InstanceFileError(f"expected length {n} for depth {depth}, got {len(value)}", field=name)
        for i, x in enumerate(value):
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise InstanceFileError(f"entry for node {i + 1} is not a number: {x!r}", field=name)
        arrays[name] = value
    try:
        inst = build_instance(depth, arrays["alpha"], arrays["lambda"], arrays["phi"])
    except InstanceError as exc:
        raise InstanceFileError(str(exc), field=exc.field) from None
    return inst, exp


def _reject_constant(token: str):
    raise ValueError(f"non-finite number {token}")


def parse_instance(source: str | Path) -> tuple[TreeInstance, PExponent]:
    """Load an instance from a path, or from JSON text when ``source`` starts with ``{``."""
    if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise InstanceFileError(f"cannot read {source}: {exc.strerror}") from None
    else:
        text = str(source)
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise InstanceFileError(f"syntax error at column {exc.colno}: {exc.msg}", line=exc.lineno) from None
    except ValueError as exc:
        raise InstanceFileError(str(exc)) from None
    return load_instance_doc(doc)


def emit_instance(instance: TreeInstance, exp: PExponent) -> str:
    """Explicit-array JSON; floats use shortest round-trip repr so parsing is exact."""
    doc = {
        "p": exp.p,
        "depth": instance.depth,
        "alpha": [float(x) for x in instance.alpha],
        "lambda": [float(x) for x in instance.lam],
        "phi": [float(x) for x in instance.phi],
    }
    return json.dumps(doc, indent=1) + "\n"


def _format_cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    return str(x)


def format_csv(rows, header) -> str:
    width = len(header)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i, row in enumerate(rows):
        row = list(row)
        if len(row) != width:
            raise ValueError(f"row {i} has {len(row)} cells, header has {width}")
        writer.writerow([_format_cell(x) for x in row])
    return buf.getvalue()


def emit_csv(rows, header, path: str | Path) -> Path:
    """Header then rows, 17 significant digits, ``\\n`` line ends."""
    path = Path(path)
    text = format_csv(rows, header)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path
