"""File formats: epidemic and network CSVs, chain JSON-lines, config and manifests.

Members are 1-based in every file and 0-based in memory.  All writes go
through a temporary file in the target directory followed by a rename.
"""

from __future__ import annotations

import ast
import csv
import hashlib
import io
import json
import math
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .data import ObservedData
from .epidemic import INDEX_CASE, NOT_INFECTED, UNKNOWN_INFECTOR, EpidemicParams, EpidemicRecord
from .mcmc import ChainDraw
from .model import ContactNetwork, MixtureState
from .observation import ObservationMask

__all__ = [
    "FORMAT_VERSION",
    "ParseError",
    "atomic_write",
    "write_epidemic_csv",
    "parse_epidemic_csv",
    "write_network_csv",
    "parse_network_csv",
    "read_observed",
    "write_observed",
    "draw_to_json",
    "draw_from_json",
    "write_draws",
    "read_draws",
    "parse_config",
    "config_hash",
    "write_manifest",
    "file_sha256",
]

FORMAT_VERSION = 1
NA = "NA"
EPIDEMIC_COLUMNS = ("member_id", "E", "I", "R", "assessed_infector")


class ParseError(ValueError):
    """Malformed input file; the message names the file and line."""


def atomic_write(path, content) -> None:
    """Write ``content`` (str or bytes) to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    data = content.encode("utf-8") if isinstance(content, str) else content
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _num(x: float) -> str:
    # repr gives the shortest decimal that round-trips
    return NA if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


# ---------------------------------------------------------------------------
# Epidemic CSV
# ---------------------------------------------------------------------------

def write_epidemic_csv(path, record: EpidemicRecord, mask: ObservationMask | None = None,
                       assessments: dict | None = None) -> None:
    """One row per infected member.  Unobserved entries are written as ``NA``.

    An ``infector`` column carries observed transmissions (``NA`` when
    unknown, empty for the index case).
    """
    n = record.n_members
    mask = mask or ObservationMask.full(n)
    assessments = assessments or {}
    buf = io.StringIO()
    buf.write(f"# format_version: {FORMAT_VERSION}\n# population_size: {n}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPIDEMIC_COLUMNS + ("infector",))
    for j in record.infected_members:
        src = record.infector[j]
        if src == INDEX_CASE:
            infector = ""
        elif src >= 0 and mask.obs_T[j]:
            infector = str(src + 1)
        else:
            infector = NA
        assessed = assessments.get(int(j))
        w.writerow([
            j + 1,
            _num(record.exposure[j]) if mask.obs_E[j] else NA,
            _num(record.infectious[j]) if mask.obs_I[j] else NA,
            _num(record.removal[j]) if mask.obs_R[j] else NA,
            NA if assessed is None else assessed + 1,
            infector,
        ])
    atomic_write(path, buf.getvalue())


def _read_rows(path):
    meta = {}
    lines = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                key, _, value = stripped[1:].partition(":")
                meta[key.strip()] = value.strip()
                continue
            lines.append((lineno, line))
    if not lines:
        raise ParseError(f"{path}: missing header row")
    rows = [(lineno, [c.strip() for c in next(csv.reader([line]))]) for lineno, line in lines]
    return meta, rows[0], rows[1:]


def _parse_time(tok: str, path, lineno: int, col: str):
    if tok == NA:
        return math.nan
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: column {col}: not a number: {tok!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"{path}:{lineno}: column {col}: non-finite time")
    return v


def _parse_member(tok: str, path, lineno: int, col: str, n: int | None = None):
    try:
        v = int(tok)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: column {col}: not a member id: {tok!r}") from None
    if v < 1 or (n is not None and v > n):
        raise ParseError(f"{path}:{lineno}: column {col}: member id {v} out of range")
    return v - 1


def parse_epidemic_csv(path, population_size: int | None = None):
    """Read an epidemic file.

    Returns ``(record, mask_fields, assessments)`` where ``record`` holds NaN
    for ``NA`` entries and ``mask_fields`` is a dict of observed flags for
    E, I, R and T.  Rows describe infected members; anyone not listed was
    never infected.
    """
    meta, header, rows = _read_rows(path)
    hdr_line, cols = header
    if tuple(cols[:5]) != EPIDEMIC_COLUMNS or len(cols) > 6 or (len(cols) == 6 and cols[5] != "infector"):
        raise ParseError(f"{path}:{hdr_line}: header must be {','.join(EPIDEMIC_COLUMNS)}[,infector]")
    if "format_version" in meta and meta["format_version"] != str(FORMAT_VERSION):
        raise ParseError(f"{path}: unsupported format_version {meta['format_version']}")
    n = population_size
    if n is None and "population_size" in meta:
        n = int(meta["population_size"])
    parsed = []
    seen = set()
    for lineno, cells in rows:
        if len(cells) != len(cols):
            raise ParseError(f"{path}:{lineno}: expected {len(cols)} fields, found {len(cells)}")
        j = _parse_member(cells[0], path, lineno, "member_id", n)
        if j in seen:
            raise ParseError(f"{path}:{lineno}: duplicate member_id {j + 1}")
        seen.add(j)
        e, i_, r = (_parse_time(cells[k], path, lineno, cols[k]) for k in (1, 2, 3))
        if not math.isnan(e) and not math.isnan(i_) and not e < i_:
            raise ParseError(f"{path}:{lineno}: E must be before I")
        if not math.isnan(i_) and not math.isnan(r) and not i_ < r:
            raise ParseError(f"{path}:{lineno}: R must be after I")
        if not math.isnan(e) and not math.isnan(r) and not e < r:
            raise ParseError(f"{path}:{lineno}: R must be after E")
        assessed = None if cells[4] == NA else _parse_member(cells[4], path, lineno, "assessed_infector", n)
        if assessed == j:
            raise ParseError(f"{path}:{lineno}: member cannot be its own assessed infector")
        infector = UNKNOWN_INFECTOR
        if len(cells) == 6:
            if cells[5] == "":
                infector = INDEX_CASE
            elif cells[5] != NA:
                infector = _parse_member(cells[5], path, lineno, "infector", n)
                if infector == j:
                    raise ParseError(f"{path}:{lineno}: member cannot infect itself")
        parsed.append((lineno, j, e, i_, r, assessed, infector))
    if n is None:
        n = max(seen) + 1 if seen else 0
    E = np.full(n, np.nan)
    I = np.full(n, np.nan)
    R = np.full(n, np.nan)
    T = np.full(n, NOT_INFECTED, dtype=np.int64)
    assessments = {}
    for lineno, j, e, i_, r, assessed, infector in parsed:
        E[j], I[j], R[j], T[j] = e, i_, r, infector
        if assessed is not None:
            if assessed not in seen:
                raise ParseError(f"{path}:{lineno}: assessed infector {assessed + 1} is not an infected member")
            assessments[j] = assessed
        if infector >= 0 and infector not in seen:
            raise ParseError(f"{path}:{lineno}: infector {infector + 1} is not an infected member")
    infected = T != NOT_INFECTED
    fields = {"E": infected & ~np.isnan(E), "I": infected & ~np.isnan(I), "R": infected & ~np.isnan(R),
              "T": infected & (T != UNKNOWN_INFECTOR)}
    return EpidemicRecord(E, I, R, T), fields, assessments


# ---------------------------------------------------------------------------
# Network CSV
# ---------------------------------------------------------------------------

def write_network_csv(path, network: ContactNetwork, observed=None) -> None:
    """Rows ``i,j,y`` for every observed dyad ``i < j`` (all dyads when ``observed`` is None)."""
    n = network.n_members
    adj = network.adjacency
    buf = io.StringIO()
    buf.write(f"# format_version: {FORMAT_VERSION}\n# population_size: {n}\n")
    buf.write("i,j,y\n")
    ii, jj = np.triu_indices(n, 1)
    if observed is not None:
        keep = np.asarray(observed)[ii, jj]
        ii, jj = ii[keep], jj[keep]
    for i, j in zip(ii.tolist(), jj.tolist()):
        buf.write(f"{i + 1},{j + 1},{int(adj[i, j])}\n")
    atomic_write(path, buf.getvalue())


def parse_network_csv(path, population_size: int | None = None):
    """Returns ``(network, observed)``; dyads without a row are unobserved."""
    meta, header, rows = _read_rows(path)
    if header[1] != ["i", "j", "y"]:
        raise ParseError(f"{path}:{header[0]}: header must be i,j,y")
    n = population_size
    if n is None and "population_size" in meta:
        n = int(meta["population_size"])
    entries = []
    for lineno, cells in rows:
        if len(cells) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 fields, found {len(cells)}")
        i = _parse_member(cells[0], path, lineno, "i", n)
        j = _parse_member(cells[1], path, lineno, "j", n)
        if not i < j:
            raise ParseError(f"{path}:{lineno}: need i < j")
        if cells[2] not in ("0", "1"):
            raise ParseError(f"{path}:{lineno}: y must be 0 or 1")
        entries.append((lineno, i, j, cells[2] == "1"))
    if n is None:
        n = max((j for _, _, j, _ in entries), default=-1) + 1
    adj = np.zeros((n, n), dtype=bool)
    observed = np.zeros((n, n), dtype=bool)
    for lineno, i, j, y in entries:
        if observed[i, j]:
            raise ParseError(f"{path}:{lineno}: duplicate dyad ({i + 1}, {j + 1})")
        observed[i, j] = observed[j, i] = True
        adj[i, j] = adj[j, i] = y
    return ContactNetwork(adj), observed


def read_observed(epidemic_path, network_path=None, population_size: int | None = None):
    """Assemble the observed-data bundle from an epidemic file and an optional network file.

    Returns ``(ObservedData, ObservationMask)``.
    """
    record, fields, assessments = parse_epidemic_csv(epidemic_path, population_size)
    n = record.n_members
    if network_path is not None:
        network, observed = parse_network_csv(network_path, n)
    else:
        network, observed = ContactNetwork.empty(n), np.zeros((n, n), dtype=bool)
    sampled = observed.sum(axis=1) == n - 1 if n > 1 else np.zeros(n, dtype=bool)
    mask = ObservationMask(fields["E"], fields["I"], fields["R"], fields["T"], observed, sampled)
    data = ObservedData.from_complete(record, network, mask, assessments)
    return data, mask


def write_observed(directory, data: ObservedData) -> None:
    directory = Path(directory)
    write_epidemic_csv(directory / "epidemic.csv", data.record, data.mask, data.assessments)
    write_network_csv(directory / "network.csv", data.network, data.mask.obs_Y)


# ---------------------------------------------------------------------------
# Chain JSON-lines
# ---------------------------------------------------------------------------

def _times(a) -> list:
    return [None if math.isnan(v) else v for v in np.asarray(a, dtype=float).tolist()]


def draw_to_json(draw: ChainDraw) -> str:
    m = draw.mixture
    obj = {
        "format_version": FORMAT_VERSION,
        "iteration": int(draw.iteration),
        "beta": float(draw.params.beta),
        "eta_E": list(draw.params.eta_E),
        "eta_I": list(draw.params.eta_I),
        "alpha": float(m.concentration),
        "mu": float(m.base_mean),
        "sigma2": float(m.base_var),
        "sticks": m.sticks.tolist(),
        "atoms": m.atoms.tolist(),
        "assignments": (m.assignments + 1).tolist(),
        "log_posterior": float(draw.log_posterior),
    }
    if draw.record is not None:
        rec = draw.record
        obj["record"] = {
            "E": _times(rec.exposure),
            "I": _times(rec.infectious),
            "R": _times(rec.removal),
            "infector": [int(t) + 1 if t >= 0 else int(t) for t in rec.infector.tolist()],
        }
    if draw.contacts is not None:
        obj["contacts"] = (np.asarray(draw.contacts) + 1).tolist()
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _arr(values) -> np.ndarray:
    return np.array([math.nan if v is None else v for v in values], dtype=float)


def draw_from_json(line: str) -> ChainDraw:
    obj = json.loads(line)
    if obj.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"unsupported draw format_version {obj.get('format_version')}")
    params = EpidemicParams(obj["beta"], tuple(obj["eta_E"]), tuple(obj["eta_I"]))
    mixture = MixtureState(np.array(obj["sticks"], dtype=float), np.array(obj["assignments"], dtype=np.int64) - 1,
                           np.array(obj["atoms"], dtype=float), obj["alpha"], obj["mu"], obj["sigma2"])
    draw = ChainDraw(obj["iteration"], params, mixture, obj["log_posterior"])
    if "record" in obj:
        r = obj["record"]
        infector = np.array([t - 1 if t > 0 else t for t in r["infector"]], dtype=np.int64)
        draw.record = EpidemicRecord(_arr(r["E"]), _arr(r["I"]), _arr(r["R"]), infector)
    if "contacts" in obj:
        draw.contacts = np.array(obj["contacts"], dtype=np.int64).reshape(-1, 2) - 1
    return draw


def write_draws(path, draws) -> None:
    atomic_write(path, "".join(draw_to_json(d) + "\n" for d in draws))


def read_draws(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(draw_from_json(line))
                except (KeyError, ValueError, TypeError) as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# Config and manifests
# ---------------------------------------------------------------------------

_INF_TOKEN = re.compile(r"(?<![\w.'\"])inf(?![\w'\"])")


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines with dotted keys; ``#`` starts a comment line.

    Values are Python literals when they parse as such (numbers, tuples,
    booleans, quoted strings; a bare ``inf`` counts as a float) and bare
    strings otherwise.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ParseError(f"config line {lineno}: expected 'key = value'")
        if key in out:
            raise ParseError(f"config line {lineno}: duplicate key {key!r}")
        try:
            out[key] = ast.literal_eval(_INF_TOKEN.sub("1e999", value))
        except (ValueError, SyntaxError):
            lowered = value.lower()
            out[key] = {"true": True, "false": False, "inf": math.inf}.get(lowered, value)
    return out


def config_hash(config: dict) -> str:
    canon = json.dumps({k: repr(v) for k, v in sorted(config.items())}, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def write_manifest(directory, command: str, config: dict, seed: int, version: str, extra: dict | None = None,
                   wall_clock: float | None = None) -> None:
    """Manifest of a run: command, config and its hash, seed, version and output checksums.

    ``wall_clock`` is included only when given, so default runs stay byte-identical.
    """
    directory = Path(directory)
    outputs = {p.name: file_sha256(p) for p in sorted(directory.iterdir())
               if p.is_file() and p.name != "manifest.json" and not p.name.startswith(".")}
    obj = {
        "format_version": FORMAT_VERSION,
        "command": command,
        "version": version,
        "seed": int(seed),
        "config": {k: repr(v) for k, v in sorted(config.items())},
        "config_hash": config_hash(config),
        "outputs": outputs,
    }
    if extra:
        obj.update(extra)
    if wall_clock is not None:
        obj["wall_clock_seconds"] = wall_clock
    atomic_write(directory / "manifest.json", json.dumps(obj, indent=2, sort_keys=True) + "\n")
