"""Sample-file and report-file formats.

Two sample formats, dispatched on extension:
  .bin  little-endian float32, interleaved re,im pairs, no header
  .csv  one "re,im" pair per line, 9 significant digits, no header

Simulated data gets a sidecar JSON ("<samples>.json") recording n, the seed,
the constellation order, and the true parameters. JSON schemas for every
emitted document are published under schemas/ at the repository root.
"""

import json
import os

import numpy as np

from .channel import ChannelParams
from .constellation import Constellation, SymbolDistribution, mb_distribution
from .estimation import EmResult
from .metrics import MetricReport

__all__ = [
    "sample_format",
    "write_samples",
    "read_samples",
    "sidecar_path",
    "write_sidecar",
    "read_json",
    "write_estimate_report",
    "write_metric_report",
    "params_from_dict",
]

CSV_DIGITS = 9


def sample_format(path: str, fmt: str | None = None) -> str:
    """Resolve the sample format: explicit override or file extension."""
    if fmt is not None:
        if fmt not in ("bin", "csv"):
            raise ValueError(f"unknown sample format {fmt!r}")
        return fmt
    ext = os.path.splitext(path)[1].lower()
    if ext == ".bin":
        return "bin"
    if ext == ".csv":
        return "csv"
    raise ValueError(f"cannot infer sample format from extension of {path!r}")


def write_samples(path: str, values, fmt: str | None = None) -> None:
    values = np.asarray(values, dtype=np.complex128).ravel()
    fmt = sample_format(path, fmt)
    if fmt == "bin":
        out = np.empty(2 * values.size, dtype="<f4")
        out[0::2] = values.real
        out[1::2] = values.imag
        with open(path, "wb") as fh:
            fh.write(out.tobytes())
    else:
        spec = f"%.{CSV_DIGITS}g"
        with open(path, "w") as fh:
            for v in values:
                fh.write(f"{spec % v.real},{spec % v.imag}\n")


def read_samples(path: str, fmt: str | None = None) -> np.ndarray:
    fmt = sample_format(path, fmt)
    if fmt == "bin":
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) == 0 or len(raw) % 8 != 0:
            raise ValueError(f"{path}: binary sample file size must be a positive multiple of 8 bytes")
        flat = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        return flat[0::2] + 1j * flat[1::2]
    values = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{line_no}: expected 're,im', got {line!r}")
            values.append(complex(float(parts[0]), float(parts[1])))
    if not values:
        raise ValueError(f"{path}: no samples found")
    return np.asarray(values, dtype=np.complex128)


def sidecar_path(samples_path: str) -> str:
    return samples_path + ".json"


def write_sidecar(path: str, n: int, seed: int, c: Constellation, params: ChannelParams) -> None:
    doc = {
        "n": int(n),
        "seed": int(seed),
        "constellation": {"m": c.m},
        "params": _params_dict(params),
    }
    _dump(path, doc)


def _params_dict(params: ChannelParams) -> dict:
    out = {"delta": float(params.delta), "sigma2": float(params.sigma2)}
    if params.dist.nu is not None:
        out["nu"] = float(params.dist.nu)
    else:
        out["pmf"] = [float(p) for p in params.dist.pmf]
    return out


def read_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_estimate_report(path: str, method: str, c: Constellation,
                          result: EmResult | None = None,
                          params: ChannelParams | None = None,
                          selection: str | None = None) -> dict:
    """Write the estimate report for an EM result or a DA parameter set."""
    if result is not None:
        doc = {"method": method, **result.to_json_dict()}
    elif params is not None:
        doc = {"method": method, **_params_dict(params)}
        doc.setdefault("pmf", [float(p) for p in params.dist.pmf])
    else:
        raise ValueError("either an EM result or a parameter set is required")
    if selection is not None:
        doc["selection"] = selection
    doc["constellation"] = c.to_json_dict()
    _dump(path, doc)
    return doc


def write_metric_report(path: str, report: MetricReport) -> dict:
    doc = report.to_json_dict()
    _dump(path, doc)
    return doc


def params_from_dict(doc: dict, c: Constellation) -> ChannelParams:
    """Build channel parameters from a sidecar or estimate-report document."""
    body = doc.get("params", doc)
    delta = float(body["delta"])
    sigma2 = float(body["sigma2"])
    if "nu" in body:
        dist = mb_distribution(c, float(body["nu"]))
    elif "pmf" in body:
        pmf = np.asarray(body["pmf"], dtype=np.float64)
        if pmf.size != c.size:
            raise ValueError(
                f"pmf length {pmf.size} does not match constellation size {c.size}"
            )
        dist = SymbolDistribution(pmf)
    else:
        raise ValueError("parameter document needs either 'nu' or 'pmf'")
    return ChannelParams(delta=delta, sigma2=sigma2, dist=dist)


def params_doc_m(doc: dict) -> int:
    """Constellation order recorded in a sidecar or estimate report."""
    const = doc.get("constellation")
    if not isinstance(const, dict) or "m" not in const:
        raise ValueError("document does not record the constellation order")
    return int(const["m"])


def _dump(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
