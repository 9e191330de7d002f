# comment-only line

    # indented comment
def f(a, b=lambda: 0, *, c):
    """doc"""
    return a


async def g():
    return await f(1, c=2)


class A:
    class B:
        def m(self): ...

    x = [
        1,
        2,
    ]


def h(*, kwonly): pass
def posonly(a, b, /): pass
def star(*args): pass
def kw(**kwargs): pass
print(f"{'nested quotes'}", f'{x["k"]}', F"{a!s}", f"{b:{width}.{prec}}")
print(f"""multi
{line}""")
values = [*range(3), *[4]]
first, second = second, first
for _ in range(2): pass
if x: pass
elif y: pass
else: pass
lst = [x
       for x in y]
value = (yield_value := 3)
chained = a.b.c.d(e)(f)[g]
s = 'it\'s' "say \"hi\"" '\\'
u = u"unicode"
br = br"raw\bytes" Rb"x"
