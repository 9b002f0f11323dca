"""Text formats for graphs, vertex functions and result documents.

Graph files: a header line ``n m`` followed by ``m`` lines ``i j`` with
0-based vertex indices. Blank lines and ``#`` comments are ignored.
Vertex functions: ``const:c``, a bare number, an inline JSON array, or a
file holding either a JSON array or one decimal per line.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .graph import Graph, GraphError


class ParseError(ValueError):
    """Malformed input; ``line`` is the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.source = source


def _content_lines(text: str):
    for num, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield num, line


def _parse_int(token: str, num: int, what: str, source) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got {token!r}", num, source) from None


def parse_graph_text(text: str, source: str | None = None) -> Graph:
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError("empty graph file: expected header 'n m'", None, source)
    num, header = lines[0]
    parts = header.split()
    if len(parts) != 2:
        raise ParseError(f"header must be 'n m', got {header!r}", num, source)
    n = _parse_int(parts[0], num, "vertex count", source)
    m = _parse_int(parts[1], num, "edge count", source)
    if m < 0:
        raise ParseError("edge count must be nonnegative", num, source)
    body = lines[1:]
    if len(body) != m:
        where = body[m][0] if len(body) > m else None
        raise ParseError(f"header declares {m} edges, file has {len(body)}", where, source)
    edges = []
    seen = {}
    for num, line in body:
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"edge line must be 'i j', got {line!r}", num, source)
        i = _parse_int(parts[0], num, "vertex index", source)
        j = _parse_int(parts[1], num, "vertex index", source)
        if not (0 <= i < n and 0 <= j < n):
            raise ParseError(f"edge ({i}, {j}) out of range for n={n}", num, source)
        if i == j:
            raise ParseError(f"self-loop at vertex {i}", num, source)
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ParseError(f"duplicate edge ({i}, {j}), first given on line {seen[key]}", num, source)
        seen[key] = num
        edges.append((i, j))
    try:
        return Graph.from_edges(n, edges)
    except GraphError as exc:
        raise ParseError(str(exc), None, source) from exc


def parse_graph(path) -> Graph:
    path = Path(path)
    return parse_graph_text(path.read_text(), source=str(path))


def format_graph(g: Graph) -> str:
    """Normal form: header, then edges ``i < j`` in lexicographic order."""
    out = [f"{g.vertex_count} {g.edge_count}"]
    out += [f"{i} {j}" for i, j in g.edges]
    return "\n".join(out) + "\n"


def _finite(x: float, line, source) -> float:
    if not math.isfinite(x):
        raise ParseError(f"non-finite value {x!r}", line, source)
    return x


def _parse_float(token: str, line, source) -> float:
    try:
        return _finite(float(token), line, source)
    except ValueError:
        raise ParseError(f"expected a number, got {token!r}", line, source) from None


def _from_json_array(text: str, n: int, source) -> np.ndarray:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, source) from None
    if not isinstance(data, list) or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in data
    ):
        raise ParseError("JSON value must be a flat array of numbers", None, source)
    if len(data) != n:
        raise ParseError(f"expected {n} values, got {len(data)}", None, source)
    return np.array([_finite(float(x), None, source) for x in data])


def parse_function_text(text: str, n: int, source: str | None = None) -> np.ndarray:
    """Vertex function from file contents: a JSON array or one decimal per line."""
    if text.lstrip().startswith("["):
        return _from_json_array(text, n, source)
    lines = list(_content_lines(text))
    values = []
    for num, line in lines:
        if len(line.split()) != 1:
            raise ParseError(f"expected one value per line, got {line!r}", num, source)
        values.append(_parse_float(line, num, source))
    if len(values) != n:
        where = lines[n][0] if len(lines) > n else None
        raise ParseError(f"expected {n} values, got {len(values)}", where, source)
    return np.array(values)


def parse_function(spec: str, n: int) -> np.ndarray:
    """Vertex function from ``const:c``, a number, an inline JSON array or a file path."""
    spec = spec.strip()
    if spec.startswith("const:"):
        return np.full(n, _parse_float(spec[len("const:"):].strip(), None, "const"))
    if spec.startswith("["):
        return _from_json_array(spec, n, "inline")
    try:
        value = float(spec)
    except ValueError:
        pass
    else:
        return np.full(n, _finite(value, None, "inline"))
    path = Path(spec)
    return parse_function_text(path.read_text(), n, source=str(path))


def format_function(u) -> str:
    """One value per line, printed with round-trip precision."""
    return "".join(f"{float(x)!r}\n" for x in np.asarray(u, dtype=float))


# ----------------------------------------------------------- result output


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and tuples to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps_json(doc) -> str:
    """Deterministic JSON: sorted keys, fixed indentation, round-trip floats."""
    return json.dumps(jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def dumps_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                    for v in row])
    return buf.getvalue()


def trace_csv(trace) -> str:
    """Plot-ready ``iteration,residual,objective`` rows."""
    return dumps_csv(["iteration", "residual", "objective"], trace)
