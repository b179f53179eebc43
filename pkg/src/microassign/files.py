"""CSV/JSON readers and writers.

Loaders reject malformed data with the offending line number.  Lines
starting with ``#`` are provenance comments and are skipped.  Skill
columns are 1-indexed in files and 0-indexed in memory; the prerequisite
edge file is the exception and uses 0-indexed skills throughout.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import ContentItem, LearnerState, Level, PrereqGraph, QMatrix
from .feasibility import WindowPolicy
from .psychometrics import ItemParams3PL, ItemParamsDINA


class DataError(ValueError):
    def __init__(self, path, line: int | None, message: str):
        self.path, self.line = str(path), line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


def _rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Header and (line number, cells) pairs, skipping comments and blank lines."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [(n, s) for n, s in enumerate(text.splitlines(), 1) if s.strip() and not s.startswith("#")]
    if not lines:
        raise DataError(path, None, "missing header row")
    parsed = [(n, next(csv.reader([s]))) for n, s in lines]
    header = [h.strip() for h in parsed[0][1]]
    body = []
    for n, cells in parsed[1:]:
        if len(cells) != len(header):
            raise DataError(path, n, f"expected {len(header)} cells, got {len(cells)}")
        body.append((n, [c.strip() for c in cells]))
    return header, body


def _float(path, line, name, token) -> float:
    try:
        v = float(token)
    except ValueError:
        raise DataError(path, line, f"{name}: not a number: {token!r}") from None
    if not math.isfinite(v):
        raise DataError(path, line, f"{name}: not finite: {token!r}")
    return v


def _binary(path, line, name, token) -> int:
    if token not in ("0", "1"):
        raise DataError(path, line, f"{name}: expected 0 or 1, got {token!r}")
    return int(token)


def _numbered(header: list[str], prefix: str) -> list[int]:
    cols = [i for i, h in enumerate(header) if h.startswith(prefix)]
    expect = [f"{prefix}{k}" for k in range(1, len(cols) + 1)]
    if [header[i] for i in cols] != expect:
        raise ValueError(f"columns {prefix}1..{prefix}{len(cols)} must be numbered consecutively")
    return cols


def _write(path, rows: Iterable[Sequence], header: Sequence[str], provenance: dict | None) -> None:
    buf = io.StringIO()
    if provenance:
        buf.write("# " + " ".join(f"{k}={v}" for k, v in provenance.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _fmt(v: float) -> str:
    return repr(round(float(v), 10))


# content

CONTENT_HEAD = ("content_id", "duration_min", "level")


def load_content_csv(path) -> list[ContentItem]:
    header, body = _rows(path)
    if tuple(header[:3]) != CONTENT_HEAD:
        raise DataError(path, 1, f"header must start with {','.join(CONTENT_HEAD)}")
    try:
        skill_cols = _numbered(header, "skill_")
        rep_cols = _numbered(header, "rep_")
    except ValueError as e:
        raise DataError(path, 1, str(e)) from None
    if len(skill_cols) + len(rep_cols) + 3 != len(header):
        raise DataError(path, 1, "unexpected columns in header")
    items, seen = [], set()
    for n, cells in body:
        cid = cells[0]
        if not cid:
            raise DataError(path, n, "empty content_id")
        if cid in seen:
            raise DataError(path, n, f"duplicate content_id {cid!r}")
        seen.add(cid)
        dur = _float(path, n, "duration_min", cells[1])
        if dur <= 0:
            raise DataError(path, n, f"duration_min must be positive, got {cells[1]}")
        try:
            level = Level.parse(cells[2])
        except ValueError:
            raise DataError(path, n, f"bad level token {cells[2]!r}") from None
        cov = tuple(_binary(path, n, header[i], cells[i]) for i in skill_cols)
        reps = tuple(_binary(path, n, header[i], cells[i]) for i in rep_cols)
        try:
            items.append(ContentItem(id=cid, coverage=cov, duration_minutes=dur, difficulty_level=level,
                                     representation_tags=reps))
        except ValueError as e:
            raise DataError(path, n, str(e)) from None
    return items


def write_content_csv(path, items: Sequence[ContentItem], provenance: dict | None = None) -> None:
    K = len(items[0].coverage) if items else 0
    R = max((len(it.representation_tags) for it in items), default=0)
    header = [*CONTENT_HEAD, *(f"skill_{k}" for k in range(1, K + 1)), *(f"rep_{r}" for r in range(1, R + 1))]
    rows = [[it.id, _fmt(it.duration_minutes), it.difficulty_level.label, *map(int, it.coverage),
             *map(int, it.representation_tags or (0,) * R)] for it in items]
    _write(path, rows, header, provenance)


# responses and other binary matrices

def load_matrix_csv(path, id_column: str) -> tuple[np.ndarray, list[str], list[str]]:
    header, body = _rows(path)
    if not header or header[0] != id_column:
        raise DataError(path, 1, f"first column must be {id_column!r}")
    cols = header[1:]
    ids, rows = [], []
    for n, cells in body:
        ids.append(cells[0])
        row = []
        for name, tok in zip(cols, cells[1:]):
            if tok not in ("0", "1"):
                raise DataError(path, n, f"non-binary cell at row {cells[0]!r}, column {name!r}: {tok!r}")
            row.append(int(tok))
        rows.append(row)
    if len(set(ids)) != len(ids):
        raise DataError(path, None, f"duplicate ids in column {id_column!r}")
    return np.array(rows, dtype=np.int8).reshape(len(rows), len(cols)), ids, cols


def write_matrix_csv(path, matrix, row_ids: Sequence[str], col_ids: Sequence[str], id_column: str,
                     provenance: dict | None = None) -> None:
    M = np.asarray(matrix, dtype=int)
    _write(path, ([rid, *row.tolist()] for rid, row in zip(row_ids, M)), [id_column, *col_ids], provenance)


def load_responses_csv(path) -> tuple[np.ndarray, list[str], list[str]]:
    """Learner-by-item binary matrix with learner and item ids."""
    return load_matrix_csv(path, "learner_id")


def write_responses_csv(path, responses, learner_ids, item_ids, provenance=None) -> None:
    write_matrix_csv(path, responses, learner_ids, item_ids, "learner_id", provenance)


def load_qmatrix_csv(path) -> tuple[QMatrix, list[str]]:
    M, ids, cols = load_matrix_csv(path, "item_id")
    try:
        _numbered(cols, "skill_")
    except ValueError as e:
        raise DataError(path, 1, str(e)) from None
    return QMatrix(M), ids


# item parameters

def load_item_params_csv(path) -> tuple[list[ItemParams3PL], list[ItemParamsDINA] | None]:
    """Columns ``item_id,a,d`` plus optional ``c`` and the optional pair ``guess,slip``."""
    header, body = _rows(path)
    allowed = {"item_id", "a", "d", "c", "guess", "slip"}
    if header[:3] != ["item_id", "a", "d"] or set(header) - allowed:
        raise DataError(path, 1, "header must be item_id,a,d[,c][,guess,slip]")
    has_dina = "guess" in header
    if has_dina != ("slip" in header):
        raise DataError(path, 1, "guess and slip must appear together")
    col = {h: i for i, h in enumerate(header)}
    irt, dina = [], []
    for n, cells in body:
        a = _float(path, n, "a", cells[col["a"]])
        d = _float(path, n, "d", cells[col["d"]])
        c = _float(path, n, "c", cells[col["c"]]) if "c" in col else 0.0
        try:
            irt.append(ItemParams3PL.from_intercept(a, d, c, id=cells[0]))
            if has_dina:
                dina.append(ItemParamsDINA(slip=_float(path, n, "slip", cells[col["slip"]]),
                                           guess=_float(path, n, "guess", cells[col["guess"]])))
        except ValueError as e:
            raise DataError(path, n, str(e)) from None
    return irt, (dina if has_dina else None)


def write_item_params_csv(path, irt: Sequence[ItemParams3PL], dina: Sequence[ItemParamsDINA] | None = None,
                          provenance: dict | None = None) -> None:
    header = ["item_id", "a", "d", "c"] + (["guess", "slip"] if dina else [])
    rows = []
    for j, it in enumerate(irt):
        row = [it.id or str(j + 1), _fmt(it.discrimination), _fmt(-it.difficulty * it.discrimination),
               _fmt(it.guessing)]
        if dina:
            row += [_fmt(dina[j].guess), _fmt(dina[j].slip)]
        rows.append(row)
    _write(path, rows, header, provenance)


# prerequisites

def load_prereqs_csv(path) -> PrereqGraph:
    header, body = _rows(path)
    if header != ["from_skill", "to_skill"]:
        raise DataError(path, 1, "header must be from_skill,to_skill")
    edges = []
    for n, cells in body:
        try:
            k, k2 = int(cells[0]), int(cells[1])
        except ValueError:
            raise DataError(path, n, "skills must be integers") from None
        if k < 0 or k2 < 0:
            raise DataError(path, n, "skills are 0-indexed and nonnegative")
        edges.append((k, k2))
    try:
        return PrereqGraph(tuple(edges))
    except ValueError as e:
        raise DataError(path, None, str(e)) from None


# learners

def load_learners_csv(path, window: WindowPolicy | None = None, time_budget: float = 45.0,
                      slate_cap: int | None = None) -> list[LearnerState]:
    """``learner_id,theta,skill_1..K`` plus optional ``time_budget_min`` and ``slate_cap``.

    ``slate_cap`` left as None means "no cap" and must be resolved by the
    caller against the repository size.
    """
    window = window or WindowPolicy()
    header, body = _rows(path)
    if header[:2] != ["learner_id", "theta"]:
        raise DataError(path, 1, "header must start with learner_id,theta")
    try:
        skill_cols = _numbered(header, "skill_")
    except ValueError as e:
        raise DataError(path, 1, str(e)) from None
    col = {h: i for i, h in enumerate(header)}
    out, seen = [], set()
    for n, cells in body:
        lid = cells[0]
        if lid in seen:
            raise DataError(path, n, f"duplicate learner_id {lid!r}")
        seen.add(lid)
        theta = _float(path, n, "theta", cells[1])
        mastery = tuple(_binary(path, n, header[i], cells[i]) for i in skill_cols)
        T = _float(path, n, "time_budget_min", cells[col["time_budget_min"]]) \
            if "time_budget_min" in col else time_budget
        cap = int(cells[col["slate_cap"]]) if "slate_cap" in col else slate_cap
        try:
            out.append(LearnerState(lid, theta, mastery, T, cap if cap is not None else 10**9,
                                    window.window(theta), window.preferred(theta)))
        except ValueError as e:
            raise DataError(path, n, str(e)) from None
    return out


def write_learners_csv(path, learners: Sequence[LearnerState], provenance: dict | None = None) -> None:
    K = learners[0].n_skills if learners else 0
    header = ["learner_id", "theta", *(f"skill_{k}" for k in range(1, K + 1))]
    rows = [[lr.id, _fmt(lr.theta), *map(int, lr.mastery)] for lr in learners]
    _write(path, rows, header, provenance)


# JSON

def dump_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n",
                          encoding="utf-8")


def load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_table_csv(path, rows: Sequence[dict], columns: Sequence[str], provenance: dict | None = None) -> None:
    def cell(v):
        return _fmt(v) if isinstance(v, float) else v
    _write(path, ([cell(r[c]) for c in columns] for r in rows), columns, provenance)
