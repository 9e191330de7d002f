#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Module docstring exercising a broad slice of the grammar."""
from __future__ import annotations

import os, sys as system
import collections.abc
from . import sibling
from .. import parent as p
from .pkg.mod import (
    alpha,
    beta as b,
)
from typing import *

CONSTANT: int = 10
x = y = z = 0
a, *rest = [1, 2, 3]
(c, d), e = (1, 2), 3
x += 1
x //= 2
x **= 2
x @= x
x >>= 1
n = 0xFF + 0o17 + 0b1010 + 1_000_000 + 1.5e-3 + 3j + .5 + 5.
s = "plain" 'single' r"raw\d" if True else b"bytes" b"more"
t = """triple
quoted""" + '''other
triple'''
u = f"value {x!r:>10} and {y + 1} and {{literal}}"
v = rf"raw {x} fmt"
nested = [[i * j for j in range(3) if j] for i in range(4)]
gen = (k for k in range(10))
sset = {1, 2, *rest}
dct = {"a": 1, **{"b": 2}, 3: [4]}
dcomp = {k: v for k, v in dct.items() if k}
scomp = {k for k in "abc"}
lam = lambda q, *args, r=1, **kw: q + r
lam2 = lambda: None
cond = x if y else z
chain = 1 < x <= 10 != y is not None
member = x not in [1, 2] and y in {3}
bits = ~x | y & z ^ 1 << 2
neg = -x + +y - (not x)
sl = rest[1:2], rest[::2], rest[:], rest[a:b:c]
idx = dct["a"], nested[0][1]
ell = ...
walrus = [w for v2 in range(3) if (w := v2 * 2)]
obj = system.path.join("a", "b").upper()
call = print(*rest, sep="", **dct)
star_call = max(*rest)
del x, dct["a"]
assert x, "message"
global_name = None


@decorator
@decorator.with_args(1, key="v")
class Example(Base, metaclass=Meta):
    """Class docstring."""

    attr: str = "value"
    other = attr

    def __init__(self, data: bytes, /, size: int = 0, *args: str, flag: bool = False, **kwargs) -> None:
        self.data = data
        self.size: int = size
        self.items = []
        super().__init__()

    @property
    def prop(self) -> collections.abc.Mapping[str, int]:
        return {}

    @staticmethod
    async def fetch(url: "str", *, timeout: float = 1.0) -> list[int] | None:
        async with session(url) as resp, other() as (o1, o2):
            async for chunk in resp:
                await process(chunk)
        return [await f() async for f in fns]

    def gen(self):
        yield
        yield 1
        yield from range(3)
        value = yield self
        return value


def outer():
    counter = 0

    def inner():
        nonlocal counter
        global global_name
        counter += 1
        return counter

    return inner


try:
    pass
except (ValueError, TypeError) as exc:
    raise RuntimeError("boom") from exc
except Exception:
    raise
else:
    pass
finally:
    pass

for i, (j, k) in enumerate([(1, 2)]):
    if i:
        continue
    elif j:
        break
    else:
        pass
else:
    pass

while x < 10:
    x += 1
else:
    x = 0

with open("f") as fh, open("g"):
    fh.read()

with (
    open("a") as fa,
    open("b") as fb,
):
    pass

match command.split():
    case [action]:
        pass
    case ["go", direction] | ["move", direction]:
        pass
    case Point(x=0, y=yy) if yy > 0:
        pass
    case {"key": value, **others}:
        pass
    case Color.RED:
        pass
    case [1, 2, *tail] as whole:
        pass
    case (1 | 2) as num:
        pass
    case -1 | 1.5 | "s" | b"b" | None | True:
        pass
    case _:
        pass

match = 5
match.bit_length()
case = match
print(match, case)

if (
    a
    and b
):
    pass

result = some_function(
    arg1,
    arg2,  # trailing comment
)
line_continued = 1 + \
    2
semi = 1; semi2 = 2
def one_liner(): return 1
class Empty: pass
type_ = type
