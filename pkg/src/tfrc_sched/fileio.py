"""Config files, CSV output and the plain-text debug instance format."""

from __future__ import annotations

import dataclasses
import io
import math

import numpy as np

from .model import MBIT, Algorithm, Request, SimConfig, validate_config

SCENARIO_KEYS = ("scenario_id", "runs", "sweep_param", "sweep_points", "algorithms",
                 "tfrc_modes")
CSV_HEADER = ("scenario,x_param,x_value,algorithm,tfrc,mean_reward,ci_reward,"
              "mean_ratio,ci_ratio,norm_reward,norm_ratio,runs")

_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}
_BITS_FIELDS = {"q_min_bits", "q_max_bits"}


class ConfigFileError(ValueError):
    pass


class UnknownKey(ConfigFileError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown_key({name})")


class MalformedValue(ConfigFileError):
    def __init__(self, line: int, detail: str = ""):
        self.line = line
        super().__init__(f"malformed_value(line {line}){': ' + detail if detail else ''}")


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _parse_bits(text: str) -> int:
    low = text.lower().replace(" ", "")
    for suffix in ("mbit", "mb"):
        if low.endswith(suffix):
            return int(round(float(low[: -len(suffix)]) * MBIT))
    value = float(low)
    if value != int(value):
        raise ValueError(text)
    return int(value)


def _parse_field(name: str, text: str):
    if name in _BITS_FIELDS:
        return _parse_bits(text)
    if name == "algorithm":
        return Algorithm.parse(text)
    if name == "tfrc_enabled":
        return _parse_bool(text)
    kind = _FIELDS[name].type
    if kind == "int":
        value = float(text)
        if value != int(value):
            raise ValueError(text)
        return int(value)
    return float(text)


def _parse_scenario(name: str, text: str):
    if name == "runs":
        return int(text)
    if name == "sweep_points":
        return [float(p) for p in text.split(",") if p.strip()]
    if name == "algorithms":
        return [Algorithm.parse(a) for a in text.split(",") if a.strip()]
    if name == "tfrc_modes":
        return [_parse_bool(m.strip()) for m in text.split(",") if m.strip()]
    return text


def parse_config(text: str) -> tuple[SimConfig, dict]:
    """Parse ``key=value`` lines over the default configuration.

    Returns the validated config and a dict of scenario overrides.
    """
    values = {}
    scenario = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MalformedValue(lineno, "expected key=value")
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in _FIELDS and key not in SCENARIO_KEYS:
            raise UnknownKey(key)
        try:
            if key in _FIELDS:
                values[key] = _parse_field(key, val)
            else:
                scenario[key] = _parse_scenario(key, val)
        except ValueError as exc:
            raise MalformedValue(lineno, str(exc)) from None
    cfg = SimConfig(**values)
    return validate_config(cfg), scenario


def dump_config(cfg: SimConfig) -> str:
    lines = []
    for name in _FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, Algorithm):
            value = value.value
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{name}={value}")
    return "\n".join(lines) + "\n"


def _num(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return f"{value:.6g}"


def csv_lines(table) -> list[str]:
    lines = [CSV_HEADER]
    for r in sorted(table.rows, key=lambda r: r.sort_key()):
        lines.append(",".join([
            r.scenario, r.x_param, _num(r.x_value), r.algorithm.value,
            "on" if r.tfrc else "off",
            _num(r.mean_reward), _num(r.ci_reward), _num(r.mean_ratio), _num(r.ci_ratio),
            _num(r.norm_reward), _num(r.norm_ratio), str(r.runs),
        ]))
    return lines


def emit_csv(table, destination) -> bytes:
    """Write the sweep table as CSV to a path or binary stream; returns the bytes."""
    data = ("\n".join(csv_lines(table)) + "\n").encode("ascii")
    if isinstance(destination, (str, bytes)) or hasattr(destination, "__fspath__"):
        with open(destination, "wb") as fh:
            fh.write(data)
    elif destination is not None:
        destination.write(data)
    return data


# -- debug instances ---------------------------------------------------------
#
#   channels <C>
#   blocks <B>
#   block_slots <G>                    (optional, default 1)
#   expected_block_rate <bits>         (optional, default mean positive rate)
#   request <id> <user> <arrival_slot> <deadline_slot> <size_bits> <unit_reward>
#   rate <request_id> <channel> <bits block 0> ... <bits block B-1>

def read_instance(text: str):
    from .offline import MilpInstance, PenaltyMode

    header = {}
    requests = []
    rate_lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        try:
            tag, args = line[0], line[1:]
            if tag in ("channels", "blocks", "block_slots"):
                header[tag] = int(args[0])
            elif tag == "expected_block_rate":
                header[tag] = float(args[0])
            elif tag == "request":
                rid, user, a, d, size = (int(v) for v in args[:5])
                requests.append(Request(rid, user, a, size, max(1, d - a), float(args[5]),
                                        view_start_slot=a, deadline_slot=d))
            elif tag == "rate":
                rate_lines.append((int(args[0]), int(args[1]), [float(v) for v in args[2:]]))
            else:
                raise ConfigFileError(f"unknown record {tag!r} on line {lineno}")
        except (IndexError, ValueError) as exc:
            raise MalformedValue(lineno, str(exc)) from None

    C, B = header["channels"], header["blocks"]
    G = header.get("block_slots", 1)
    requests.sort(key=lambda r: r.id)
    pos = {r.id: k for k, r in enumerate(requests)}
    rates = np.zeros((len(requests), C, B))
    for rid, c, row in rate_lines:
        if len(row) != B:
            raise ConfigFileError(f"rate row for request {rid} channel {c} needs {B} values")
        rates[pos[rid], c] = row
    starts = np.arange(B) * G
    window = np.array([(starts + G > r.arrival_slot) & (starts < r.deadline_slot)
                       for r in requests], dtype=bool).reshape(len(requests), B)
    rates *= window[:, None, :]
    positive = rates[rates > 0]
    expected = header.get("expected_block_rate", float(positive.mean()) if positive.size else 1.0)
    return MilpInstance(requests, rates, window, PenaltyMode.NEW, G, expected)


def write_instance(instance) -> str:
    out = io.StringIO()
    out.write(f"channels {instance.num_channels}\nblocks {instance.num_blocks}\n")
    out.write(f"block_slots {instance.block_slots}\n")
    out.write(f"expected_block_rate {instance.expected_block_rate:.17g}\n")
    for r in instance.requests:
        out.write(f"request {r.id} {r.user} {r.arrival_slot} {r.deadline_slot} "
                  f"{r.size_bits} {r.unit_reward:.17g}\n")
    for k, r in enumerate(instance.requests):
        for c in range(instance.num_channels):
            row = " ".join(f"{v:.17g}" for v in instance.rates[k, c])
            out.write(f"rate {r.id} {c} {row}\n")
    return out.getvalue()
