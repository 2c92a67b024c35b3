"""
Parameter grid syntax of the bench CLI.

  lo:hi:log10   decades lo, 10 lo, ..., hi
  lo:hi         the same as lo:hi:log10
  lo:hi:step    lo, lo+step, ..., hi (inclusive)
  a,b,c         an explicit list
  v             a single value
"""
import argparse
import math
from typing import List

from ..apps import Orthogonalizer
from ..models import Method


class UsageError(ValueError):
    """A flag value or combination the command cannot run with (exit 2)."""


def parse_grid(text: str) -> List[float]:
    text = text.strip()
    if "," in text:
        return [float(v) for v in text.split(",") if v.strip()]
    parts = text.split(":")
    if len(parts) == 1:
        return [float(parts[0])]
    if len(parts) not in (2, 3):
        raise ValueError(f"Invalid grid: {text}. Must be 'lo:hi:log10', 'lo:hi:step', a comma list or a value.")
    lo, hi = float(parts[0]), float(parts[1])
    if hi < lo:
        raise ValueError(f"Invalid grid: {text}. hi must not be below lo.")
    if len(parts) == 2 or parts[2].strip().lower() == "log10":
        if lo <= 0:
            raise ValueError(f"Invalid grid: {text}. A log10 grid needs lo > 0.")
        decades = round(math.log10(hi / lo))
        return [lo * 10**i for i in range(decades + 1)]
    step = float(parts[2])
    if not step > 0:
        raise ValueError(f"Invalid grid: {text}. step must be positive.")
    count = int(math.floor((hi - lo) / step + 1e-9))
    # rounding keeps 1.0 + 2*0.1 at 1.2
    return [round(lo + i * step, 12) for i in range(count + 1)]


def parse_count_grid(text: str) -> List[int]:
    values = parse_grid(text)
    counts = [int(round(v)) for v in values]
    if any(c < 1 for c in counts):
        raise ValueError(f"Invalid grid: {text}. Counts must be positive.")
    return counts


def parse_methods(text: str) -> List[Method]:
    text = text.strip().lower()
    if text == "all":
        return list(Method)
    try:
        return [Method(name.strip()) for name in text.split(",") if name.strip()]
    except ValueError:
        raise ValueError(f"Invalid method list: {text}. Must be 'all' or names from {[m.value for m in Method]}.")


def parse_orths(text: str) -> List[Orthogonalizer]:
    try:
        return [Orthogonalizer(name.strip().lower()) for name in text.split(",") if name.strip()]
    except ValueError:
        raise ValueError(f"Invalid orthogonalizer list: {text}. Must be names from {[o.value for o in Orthogonalizer]}.")


def count(text: str) -> int:
    """Integer flag that also accepts 1e5-style values."""
    value = float(text)
    if value != int(value) or value < 1:
        raise ValueError(f"Invalid count: {text}.")
    return int(value)


def argtype(parser):
    """Wrap a parser so argparse reports its ValueError as a usage error (exit 2)."""
    def convert(text):
        try:
            return parser(text)
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e))
    convert.__name__ = parser.__name__
    return convert
