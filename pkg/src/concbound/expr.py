"""Restricted algebra for the two expression families used by the synthesiser.

``LinLogExpr`` is a linear combination over the basis {1, n, ln n, n*ln n}.
``PsiExpr`` is a finite sum of terms ``mu * c**nu * ln(c)**xi`` with xi in
{0, 1}; this family is closed under differentiation, which is what the
separability prover relies on.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Iterable, Union

from .errors import (
    DomainError,
    EmptyExpr,
    NonLinear,
    NonPositiveLeadingCoefficient,
    SpecSyntaxError,
    ZeroExpr,
)

Number = Union[Fraction, float, int]

MU_DROP = 1e-12  # |mu| below this is treated as zero after merging
NU_DIGITS = 12  # exponents are merged after rounding to this many decimals


class Basis(enum.IntEnum):
    """Basis elements, ordered by asymptotic growth."""

    CONST = 0
    LN_N = 1
    N = 2
    N_LN_N = 3

    @property
    def text(self) -> str:
        return _BASIS_TEXT[self]


_BASIS_TEXT = {Basis.CONST: "1", Basis.LN_N: "ln(n)", Basis.N: "n", Basis.N_LN_N: "n*ln(n)"}


def basis_value(b: Basis, n: float, zero_convention: bool = False) -> float:
    """Value of a single basis element at ``n``."""
    if b is Basis.CONST:
        return 1.0
    if b is Basis.N:
        return float(n)
    if n <= 0:
        if n == 0 and zero_convention and b is Basis.N_LN_N:
            return 0.0
        raise DomainError(f"{b.text} undefined at n={n}")
    if n < 1 and not zero_convention:
        raise DomainError(f"{b.text} requested at n={n} < 1")
    ln = math.log(n)
    return ln if b is Basis.LN_N else n * ln


def format_number(x: Number) -> str:
    """Shortest exact text for a coefficient (decimal when possible)."""
    if isinstance(x, int):
        return str(x)
    if isinstance(x, Fraction):
        if x.denominator == 1:
            return str(x.numerator)
        d = x.denominator
        for p in (2, 5):
            while d % p == 0:
                d //= p
        if d == 1:
            with localcontext() as ctx:
                ctx.prec = 200
                s = format(Decimal(x.numerator) / Decimal(x.denominator), "f")
            return s.rstrip("0").rstrip(".") if "." in s else s
        return f"{x.numerator}/{x.denominator}"
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


# ---------------------------------------------------------------------------
# LinLogExpr


@dataclass(frozen=True)
class LinLogExpr:
    """Canonical linear combination; ``terms`` is sorted by descending basis."""

    terms: tuple = ()

    @classmethod
    def of(cls, mapping) -> "LinLogExpr":
        acc: dict = {}
        items = mapping.items() if hasattr(mapping, "items") else mapping
        for b, v in items:
            b = Basis(b)
            acc[b] = acc.get(b, 0) + v
        return cls(tuple(sorted(((b, v) for b, v in acc.items() if v != 0), key=lambda t: -t[0])))

    def coeff(self, b: Basis):
        for bb, v in self.terms:
            if bb == b:
                return v
        return 0

    def as_dict(self) -> dict:
        return dict(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def bases(self):
        return [b for b, _ in self.terms]

    def __add__(self, other: "LinLogExpr") -> "LinLogExpr":
        return LinLogExpr.of(list(self.terms) + list(other.terms))

    def __neg__(self) -> "LinLogExpr":
        return LinLogExpr.of([(b, -v) for b, v in self.terms])

    def __sub__(self, other: "LinLogExpr") -> "LinLogExpr":
        return self + (-other)

    def __mul__(self, k: Number) -> "LinLogExpr":
        return LinLogExpr.of([(b, v * k) for b, v in self.terms])

    __rmul__ = __mul__

    def __call__(self, n: float, zero_convention: bool = False) -> float:
        return eval_linlog(self, n, zero_convention)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        out = []
        for i, (b, v) in enumerate(self.terms):
            neg = v < 0
            mag = -v if neg else v
            if b is Basis.CONST:
                body = format_number(mag)
            elif mag == 1:
                body = b.text
            else:
                body = f"{format_number(mag)}*{b.text}"
            if i == 0:
                out.append(("-" if neg else "") + body)
            else:
                out.append((" - " if neg else " + ") + body)
        return "".join(out)

    def to_json(self) -> str:
        return str(self)


def linlog(**kw) -> LinLogExpr:
    """Convenience constructor: ``linlog(N=5, CONST=-1)``."""
    return LinLogExpr.of({Basis[k]: v for k, v in kw.items()})


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_]+)|(?P<op>[-+*/()]))"
)


def _tokenize(text: str, allowed_ids: set) -> list:
    pos, toks = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise SpecSyntaxError(f"unexpected character at offset {pos} in {text!r}")
        if m.group("num") is not None:
            toks.append(("num", m.group("num")))
        elif m.group("id") is not None:
            ident = m.group("id")
            if ident not in allowed_ids:
                raise SpecSyntaxError(f"unknown identifier {ident!r} in {text!r}")
            toks.append(("id", ident))
        else:
            toks.append(("op", m.group("op")))
        pos = m.end()
    return toks


class _Cursor:
    def __init__(self, toks, text):
        self.toks, self.i, self.text = toks, 0, text

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            raise SpecSyntaxError(f"expected {value or kind} at token {self.i} of {self.text!r}")
        self.i += 1
        return tok

    def done(self):
        return self.i >= len(self.toks)


def _parse_number(cur: _Cursor) -> Fraction:
    v = Fraction(cur.take("num")[1])
    if cur.peek() == ("op", "/") and cur.i + 1 < len(cur.toks) and cur.toks[cur.i + 1][0] == "num":
        cur.take()
        den = Fraction(cur.take("num")[1])
        if den == 0:
            raise SpecSyntaxError("division by zero")
        v /= den
    return v


def parse_linlog(text: str) -> LinLogExpr:
    """Parse ``5*n``, ``9*n*ln(n)``, ``n - 1`` ... into canonical form."""
    cur = _Cursor(_tokenize(text, {"n", "ln"}), text)
    if cur.done():
        raise SpecSyntaxError("empty expression")
    acc: list = []
    sign = 1
    if cur.peek() in (("op", "-"), ("op", "+")):
        sign = -1 if cur.take()[1] == "-" else 1
    while True:
        coef, ndeg, ldeg = Fraction(1), 0, 0
        while True:
            kind, val = cur.peek()
            if kind == "num":
                coef *= _parse_number(cur)
            elif (kind, val) == ("id", "n"):
                cur.take()
                ndeg += 1
            elif (kind, val) == ("id", "ln"):
                cur.take()
                cur.take("op", "(")
                cur.take("id", "n")
                cur.take("op", ")")
                ldeg += 1
            else:
                raise SpecSyntaxError(f"expected a factor at token {cur.i} of {text!r}")
            if cur.peek() == ("op", "*"):
                cur.take()
                continue
            break
        if ndeg > 1 or ldeg > 1:
            raise NonLinear(f"term of degree n^{ndeg} ln^{ldeg} in {text!r}")
        basis = {(0, 0): Basis.CONST, (1, 0): Basis.N, (0, 1): Basis.LN_N, (1, 1): Basis.N_LN_N}[(ndeg, ldeg)]
        acc.append((basis, sign * coef))
        if cur.done():
            break
        op = cur.take("op")[1]
        if op not in "+-":
            raise SpecSyntaxError(f"unexpected {op!r} in {text!r}")
        sign = 1 if op == "+" else -1
    return LinLogExpr.of(acc)


def eval_linlog(e: LinLogExpr, n: float, zero_convention: bool = False) -> float:
    """Evaluate at ``n >= 1``; ``zero_convention`` allows n=0 with 0*ln 0 = 0."""
    if n < 1 and not zero_convention and any(b in (Basis.LN_N, Basis.N_LN_N) for b in e.bases()):
        raise DomainError(f"log basis evaluated at n={n} < 1")
    total = 0.0
    for b, v in e.terms:
        total += float(v) * basis_value(b, n, zero_convention=zero_convention or n >= 1)
    return total


def leading_term(e: LinLogExpr) -> Basis:
    """Fastest-growing basis element, which must carry a positive coefficient."""
    if e.is_zero():
        raise EmptyExpr("expression has no terms")
    b, v = e.terms[0]
    if v <= 0:
        raise NonPositiveLeadingCoefficient(f"leading coefficient of {e} is {v}")
    return b


# ---------------------------------------------------------------------------
# PsiExpr


@dataclass(frozen=True)
class PsiTerm:
    mu: float
    nu: float
    xi: int

    def value(self, c: float) -> float:
        v = self.mu * c ** self.nu
        return v * math.log(c) if self.xi else v


def _canon_nu(nu: float) -> float:
    return round(float(nu), NU_DIGITS) + 0.0


@dataclass(frozen=True)
class PsiExpr:
    """Canonical sum of ``PsiTerm``; ``terms`` ascend in (nu, xi)."""

    terms: tuple = ()

    @classmethod
    def of(cls, triples: Iterable) -> "PsiExpr":
        acc: dict = {}
        for t in triples:
            mu, nu, xi = (t.mu, t.nu, t.xi) if isinstance(t, PsiTerm) else t
            if xi not in (0, 1):
                raise ValueError("log power must be 0 or 1")
            key = (_canon_nu(nu), int(xi))
            acc[key] = acc.get(key, 0.0) + float(mu)
        terms = [PsiTerm(mu, nu, xi) for (nu, xi), mu in sorted(acc.items()) if abs(mu) >= MU_DROP]
        return cls(tuple(terms))

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "PsiExpr") -> "PsiExpr":
        return PsiExpr.of(self.terms + other.terms)

    def __neg__(self) -> "PsiExpr":
        return self.scale(-1.0)

    def __sub__(self, other: "PsiExpr") -> "PsiExpr":
        return self + (-other)

    def scale(self, k: float) -> "PsiExpr":
        return PsiExpr.of((t.mu * k, t.nu, t.xi) for t in self.terms)

    def shift(self, a: float) -> "PsiExpr":
        """Multiply by c**a."""
        return PsiExpr.of((t.mu, t.nu + a, t.xi) for t in self.terms)

    def __call__(self, c: float) -> float:
        return psi_eval(self, c)

    def count_terms(self) -> int:
        return len(self.terms)

    def count_log_terms(self) -> int:
        return sum(t.xi for t in self.terms)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for i, t in enumerate(reversed(self.terms)):
            neg = t.mu < 0
            mag = -t.mu if neg else t.mu
            factors = []
            if t.nu != 0:
                factors.append("c" if t.nu == 1 else (f"c^{_fmt_float(t.nu)}" if t.nu > 0 else f"c^({_fmt_float(t.nu)})"))
            if t.xi:
                factors.append("ln(c)")
            if not factors:
                body = _fmt_float(mag)
            elif mag == 1:
                body = "*".join(factors)
            else:
                body = "*".join([_fmt_float(mag)] + factors)
            if i == 0:
                parts.append(("-" if neg else "") + body)
            else:
                parts.append((" - " if neg else " + ") + body)
        return "".join(parts)


def _fmt_float(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def parse_psi(text: str) -> PsiExpr:
    """Inverse of ``str(PsiExpr)``; accepts e.g. ``5*c^1.5*ln(c) - 2*c^2.5 + 2``."""
    toks = []
    for m in re.finditer(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|(c|ln)|([-+*^()]))", text):
        if m.group(1):
            toks.append(("num", m.group(1)))
        elif m.group(2):
            toks.append(("id", m.group(2)))
        else:
            toks.append(("op", m.group(3)))
    if "".join(re.findall(r"\S", text)) != "".join(v for _, v in toks):
        raise SpecSyntaxError(f"unrecognised characters in {text!r}")
    cur = _Cursor(toks, text)
    if cur.done():
        raise SpecSyntaxError("empty expression")
    out = []
    sign = 1.0
    if cur.peek() in (("op", "-"), ("op", "+")):
        sign = -1.0 if cur.take()[1] == "-" else 1.0
    while True:
        mu, nu, xi = sign, 0.0, 0
        while True:
            kind, val = cur.peek()
            if kind == "num":
                mu *= float(cur.take()[1])
            elif (kind, val) == ("id", "c"):
                cur.take()
                if cur.peek() == ("op", "^"):
                    cur.take()
                    if cur.peek() == ("op", "("):
                        cur.take()
                        neg = cur.peek() == ("op", "-")
                        if neg:
                            cur.take()
                        e = float(cur.take("num")[1])
                        cur.take("op", ")")
                        nu += -e if neg else e
                    else:
                        neg = cur.peek() == ("op", "-")
                        if neg:
                            cur.take()
                        e = float(cur.take("num")[1])
                        nu += -e if neg else e
                else:
                    nu += 1.0
            elif (kind, val) == ("id", "ln"):
                cur.take()
                cur.take("op", "(")
                cur.take("id", "c")
                cur.take("op", ")")
                xi += 1
            else:
                raise SpecSyntaxError(f"expected a factor at token {cur.i} of {text!r}")
            if cur.peek() == ("op", "*"):
                cur.take()
                continue
            break
        if xi > 1:
            raise NonLinear("ln(c)^2 is outside the term family")
        out.append((mu, nu, xi))
        if cur.done():
            break
        op = cur.take("op")[1]
        if op not in "+-":
            raise SpecSyntaxError(f"unexpected {op!r} in {text!r}")
        sign = 1.0 if op == "+" else -1.0
    return PsiExpr.of(out)


def psi_eval(psi: PsiExpr, c: float) -> float:
    if c < 0 or (c == 0 and any(t.xi or t.nu <= 0 for t in psi.terms)):
        raise DomainError(f"psi undefined at c={c}")
    return math.fsum(t.value(c) for t in psi.terms)


def psi_sign(psi: PsiExpr, c: float) -> int:
    """Sign of psi(c), computed on the scaled form c**-max(nu) * psi to avoid overflow."""
    if not psi.terms:
        return 0
    top = max(t.nu for t in psi.terms)
    lc = math.log(c)
    v = math.fsum(t.mu * math.exp((t.nu - top) * lc) * (lc if t.xi else 1.0) for t in psi.terms)
    return (v > 0) - (v < 0)


def psi_derive(psi: PsiExpr) -> PsiExpr:
    out = []
    for t in psi.terms:
        if t.nu != 0:
            out.append((t.mu * t.nu, t.nu - 1, t.xi))
        if t.xi:
            out.append((t.mu, t.nu - 1, 0))
    return PsiExpr.of(out)


def psi_simplify_divide(psi: PsiExpr) -> PsiExpr:
    """Divide by c**min(nu) so the smallest exponent becomes zero."""
    if psi.is_zero():
        raise ZeroExpr("cannot normalise the zero expression")
    return psi.shift(-min(t.nu for t in psi.terms))


def psi_at_one(psi: PsiExpr) -> float:
    return math.fsum(t.mu for t in psi.terms if t.xi == 0)
