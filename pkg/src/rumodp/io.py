"""JSON documents for specs and experiments, and CSV writers for reports.

Schemas live in ``rumodp/schemas``; both carry a version number in their
``$id``.  Validation errors name the offending field and the line it sits
on in the source document.
"""

from __future__ import annotations

import csv
import io
import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator
from referencing import Registry, Resource

from .errors import ValidationError
from .gev import Attribute, GevSpec

SCHEMA_VERSION = 1
PROB_FLOOR = 1e-300


# -- schemas --------------------------------------------------------------


def load_schema(name: str) -> dict:
    text = resources.files("rumodp").joinpath("schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


@lru_cache(maxsize=None)
def _validator(name: str) -> Draft202012Validator:
    registry = Registry()
    for other in ("gev_spec", "experiment"):
        schema = load_schema(other)
        registry = registry.with_resource(schema["$id"], Resource.from_contents(schema))
    return Draft202012Validator(load_schema(name), registry=registry)


def _skip_ws(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] in " \t\r\n":
        pos += 1
    return pos


def locate(text: str, path) -> int | None:
    """1-based line of the value at ``path`` (keys and indices) in ``text``."""
    dec = json.JSONDecoder()
    pos = _skip_ws(text, 0)
    try:
        for key in path:
            opener = text[pos]
            pos = _skip_ws(text, pos + 1)
            index = 0
            while text[pos] not in "}]":
                if opener == "{":
                    k, pos = dec.raw_decode(text, pos)
                    pos = _skip_ws(text, pos) + 1  # the colon
                    pos = _skip_ws(text, pos)
                    hit = k == key
                else:
                    hit = index == key
                if hit:
                    break
                _, pos = dec.raw_decode(text, pos)
                pos = _skip_ws(text, pos)
                if text[pos] == ",":
                    pos = _skip_ws(text, pos + 1)
                index += 1
            else:
                return None
    except (IndexError, ValueError):
        return None
    return text.count("\n", 0, pos) + 1


def _field(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def validate_document(doc, schema: str, text: str | None = None, source: str = "<config>") -> None:
    """Raise :class:`ValidationError` listing every schema violation."""
    errors = sorted(_validator(schema).iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if not errors:
        return
    lines = []
    for e in errors:
        path = list(e.absolute_path)
        where = source
        if text is not None:
            line = locate(text, path)
            if line is not None:
                where = f"{source}:{line}"
        lines.append(f"{where}: field {_field(path)}: {e.message}")
    raise ValidationError("\n".join(lines))


def parse_json(text: str, source: str = "<config>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


# -- GevSpec documents ----------------------------------------------------


def spec_to_dict(spec: GevSpec) -> dict:
    v = spec.variant
    if v == "MNL":
        return {"variant": v, "n": spec.n}
    if v == "NL":
        return {
            "variant": v,
            "nests": [{"members": list(m), "lambda": float(l)} for m, l in zip(spec.members, spec.lambdas)],
        }
    if v == "GNL":
        return {"variant": v, "alpha": spec.alpha.tolist(), "lambdas": spec.lambdas.tolist()}
    if v == "CNL":
        return {"variant": v, "alpha": spec.alpha.tolist(), "lambda": float(spec.lambdas[0])}
    if v == "PCL":
        lam = spec.lambdas
        return {"variant": v, "n": spec.n, "lambda": float(lam[0]) if np.all(lam == lam[0]) else lam.tolist()}
    if v == "OGEV":
        lam = spec.lambdas
        return {
            "variant": v,
            "n": spec.n,
            "width": spec.width,
            "lambda": float(lam[0]) if np.all(lam == lam[0]) else lam.tolist(),
            "alpha": spec.alpha.tolist(),
        }
    return {
        "variant": v,
        "n": spec.n,
        "attributes": [
            {"weight": a.weight, "lambda": a.lam, "nests": [list(nest) for nest in a.nests]}
            for a in spec.attributes
        ],
    }


def spec_from_dict(doc: dict, text: str | None = None, source: str = "<spec>") -> GevSpec:
    """Build a spec from its document; schema errors come back with field paths."""
    validate_document(doc, "gev_spec", text, source)
    v = doc["variant"]
    if v == "MNL":
        spec = GevSpec.mnl(doc["n"])
    elif v == "NL":
        spec = GevSpec.nl([n["members"] for n in doc["nests"]], [n["lambda"] for n in doc["nests"]])
    elif v == "GNL":
        spec = GevSpec.gnl(doc["alpha"], doc["lambdas"])
    elif v == "CNL":
        if isinstance(doc["lambda"], list):
            raise ValidationError(f"{source}: field lambda: CNL takes a single nest parameter")
        spec = GevSpec.cnl(doc["alpha"], doc["lambda"])
    elif v == "PCL":
        spec = GevSpec.pcl(doc["n"], doc["lambda"])
    elif v == "OGEV":
        spec = GevSpec.ogev(doc["n"], doc["width"], doc["lambda"], doc.get("alpha"))
    else:
        attrs = [Attribute(a["weight"], a["lambda"], tuple(tuple(n) for n in a["nests"])) for a in doc["attributes"]]
        spec = GevSpec.pdgev(doc["n"], attrs)
    if "n" in doc and doc["n"] != spec.n:
        raise ValidationError(f"{source}: field n: says {doc['n']} but the structure has {spec.n} alternatives")
    return spec


def load_spec(path) -> GevSpec:
    text = Path(path).read_text()
    return spec_from_dict(parse_json(text, str(path)), text, str(path))


# -- CSV ------------------------------------------------------------------


def fmt(v: float) -> str:
    return "%.12g" % v


def format_rows(header, rows, prob_cols=()) -> str:
    """CSV text with 12 significant digits.

    Columns listed in ``prob_cols`` report values below 1e-300 as 0; the
    numbers themselves are untouched.
    """
    prob = set(prob_cols)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        out = []
        for j, v in enumerate(row):
            if isinstance(v, str):
                out.append(v)
            elif isinstance(v, (int, np.integer)):
                out.append(str(int(v)))
            else:
                v = float(v)
                if j in prob and abs(v) < PROB_FLOOR:
                    v = 0.0
                out.append(fmt(v))
        w.writerow(out)
    return buf.getvalue()


def write_csv(path, header, rows, prob_cols=()) -> None:
    Path(path).write_text(format_rows(header, rows, prob_cols))


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")


def write_stream(path, payoffs) -> None:
    """Payoff stream as CSV (t, u_1..u_N) for replay."""
    U = np.asarray(payoffs, dtype=float)
    header = ["t"] + [f"u_{i + 1}" for i in range(U.shape[1])]
    rows = [[t + 1, *u] for t, u in enumerate(U)]
    write_csv(path, header, rows)


def read_stream(path) -> np.ndarray:
    """Inverse of :func:`write_stream`; the ``t`` column is optional."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty payoff file")
    header, body = rows[0], rows[1:]
    start = 1 if header and header[0] == "t" else 0
    try:
        U = np.array([[float(v) for v in r[start:]] for r in body if r], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    width = len(header) - start
    if U.size and U.shape[1] != width:
        raise ValidationError(f"{path}: rows do not match the header width {width}")
    return U.reshape(-1, width)
