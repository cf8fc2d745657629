"""Config files, flat binary field dumps and CSV reports.

Config files are ``key = value`` lines (``#`` comments).  Recognized keys::

    d, eps, alpha | a_eps, prefactor, m, n, x0,
    hole.shape (ball | superellipse), hole.r, hole.semi_axes, hole.exponent,
    hole.delta1, hole.delta2, min_hole_cells

Binary dumps are row-major little-endian arrays (``float64`` fields,
``uint8`` masks) with a text sidecar ``<path>.hdr`` giving dtype, shape
and grid spacing.
"""
from __future__ import annotations

import configparser
import csv
import math
import os
from typing import Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError
from .geometry import Ball, HoleModel, PerforationConfig, Superellipse

_SECTION = "perfhom"
CONFIG_KEYS = _KNOWN = {
    "d", "eps", "alpha", "a_eps", "prefactor", "m", "n", "x0", "min_hole_cells",
    "hole.shape", "hole.r", "hole.semi_axes", "hole.exponent", "hole.delta1", "hole.delta2",
}


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def parse_config_text(text: str, known: Optional[Iterable[str]] = None) -> dict:
    """Parse ``key = value`` text into a dict of raw strings.

    ``known`` lists the accepted keys (perforation keys by default).
    """
    cp = configparser.ConfigParser(comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                   delimiters=("=", ":"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(f"[{_SECTION}]\n{text}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw = dict(cp[_SECTION])
    unknown = sorted(set(raw) - set(_KNOWN if known is None else known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return raw


def hole_from(raw: Mapping[str, str], d: int) -> HoleModel:
    shape = raw.get("hole.shape", "ball").strip().lower()
    if shape == "ball":
        r = float(raw.get("hole.r", 0.25))
        sh = Ball(r)
        r_in = r_out = r
    elif shape == "superellipse":
        if "hole.semi_axes" in raw:
            axes = _floats(raw["hole.semi_axes"])
        else:
            axes = (float(raw.get("hole.r", 0.25)),) * d
        sh = Superellipse(axes, float(raw.get("hole.exponent", 4.0)))
        r_in, r_out = sh.radii(d)
    else:
        raise ConfigError(f"unknown hole shape {shape!r}")
    # default margins sit halfway between the shape and its limits
    delta1 = float(raw["hole.delta1"]) if "hole.delta1" in raw else 0.5 * r_in
    delta2 = float(raw["hole.delta2"]) if "hole.delta2" in raw else 0.5 * (r_out + 0.5)
    return HoleModel(sh, delta1, delta2)


def config_from_mapping(raw: Mapping[str, str]) -> PerforationConfig:
    """Build a :class:`PerforationConfig` from raw key/value strings."""
    try:
        d = int(raw["d"])
        eps = float(raw["eps"])
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if ("alpha" in raw) == ("a_eps" in raw):
        raise ConfigError("give exactly one of alpha and a_eps")
    if "alpha" in raw:
        a_eps = float(raw.get("prefactor", 1.0)) * eps ** float(raw["alpha"])
    else:
        a_eps = float(raw["a_eps"])
    x0 = _floats(raw["x0"]) if "x0" in raw else None
    kw = {}
    if "min_hole_cells" in raw:
        kw["min_hole_cells"] = float(raw["min_hole_cells"])
    return PerforationConfig(d, eps, a_eps, hole_from(raw, d), m=int(raw.get("m", 4)),
                             n=int(raw.get("n", 16)), x0=x0, **kw)


def read_config(path: str) -> PerforationConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_mapping(parse_config_text(fh.read()))


# ---------------------------------------------------------------- binary dumps


def header_path(path: str) -> str:
    return path + ".hdr"


def dump_array(path: str, arr: np.ndarray, spacing: float) -> None:
    """Write ``arr`` row-major to ``path`` and its header to ``path.hdr``.

    Boolean arrays are stored one byte per cell (``uint8``).
    """
    a = np.asarray(arr)
    if a.dtype == bool:
        a = a.astype(np.uint8)
        dtype = "uint8"
    else:
        a = a.astype("<f8")
        dtype = "float64"
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(a).tobytes(order="C"))
    with open(header_path(path), "w", encoding="utf-8") as fh:
        fh.write(f"dtype = {dtype}\n")
        fh.write("shape = " + " ".join(str(s) for s in a.shape) + "\n")
        fh.write(f"spacing = {float(spacing)!r}\n")


def read_header(path: str) -> dict:
    raw = {}
    with open(header_path(path), "r", encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                raw[k.strip()] = v.strip()
    try:
        return {
            "dtype": raw["dtype"],
            "shape": tuple(int(s) for s in raw["shape"].split()),
            "spacing": float(raw["spacing"]),
        }
    except KeyError as exc:
        raise ConfigError(f"header {header_path(path)} lacks {exc.args[0]}") from None


def read_array(path: str) -> Tuple[np.ndarray, dict]:
    """Inverse of :func:`dump_array`; masks come back as ``bool``."""
    hdr = read_header(path)
    dt = {"uint8": np.uint8, "float64": np.dtype("<f8")}.get(hdr["dtype"])
    if dt is None:
        raise ConfigError(f"unsupported dump dtype {hdr['dtype']!r}")
    data = np.fromfile(path, dtype=dt)
    expected = int(np.prod(hdr["shape"]))
    if data.size != expected:
        raise ConfigError(f"{path}: {data.size} values, header promises {expected}")
    data = data.reshape(hdr["shape"])
    if hdr["dtype"] == "uint8":
        data = data.astype(bool)
    return data, hdr


# ------------------------------------------------------------------------ CSV


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path: str, rows: Iterable[Mapping], columns: Sequence[str], comments: Optional[Sequence[str]] = None) -> None:
    """Write ``rows`` with a fixed column order; ``comments`` become leading ``#`` lines."""
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        for c in comments or ():
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    os.replace(tmp, path)


def read_csv(path: str) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
