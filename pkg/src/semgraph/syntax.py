"""Parser and lowering for the lavaan-style model description language.

Grammar, one statement per line::

    statement := NAME OP term ('+' term)*
    OP        := '=~' | '~' | '~~'
    term      := [NUMBER '*'] NAME

``#`` starts a comment. A numeric multiplier fixes the slot at that value.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .model import FIXED, ModelMatrices, ParameterSpec, SlotMatrix

MEASURE, REGRESS, COVARY = "=~", "~", "~~"
OPERATORS = (MEASURE, REGRESS, COVARY)

_NAME = r"[A-Za-z_][A-Za-z0-9_.]*"
_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_HEAD = re.compile(rf"\s*({_NAME})\s*([^\sA-Za-z0-9_.+\-*]*)\s*(.*)$")
_TERM = re.compile(rf"\s*(?:({_NUMBER}|[^*+\s][^*+]*?)\s*\*\s*)?({_NAME})\s*(?:\+|$)")
_NUMBER_RE = re.compile(rf"{_NUMBER}$")


class ModelSyntaxError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ModelSpecError(ValueError):
    """The model parses but cannot be lowered to a parameter spec."""


@dataclass(frozen=True)
class Term:
    variable: str
    multiplier: float | None = None  # None: free by default


@dataclass(frozen=True)
class Statement:
    lhs: str
    op: str
    terms: tuple[Term, ...]
    lineno: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ModelAst:
    statements: tuple[Statement, ...]


def parse(text: str) -> ModelAst:
    statements = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        statements.append(_parse_line(line, lineno))
    return ModelAst(tuple(statements))


def _parse_line(line: str, lineno: int) -> Statement:
    m = _HEAD.match(line)
    if m is None:
        raise ModelSyntaxError(lineno, f"expected a variable name at the start of {line!r}")
    lhs, op, rest = m.groups()
    if not op:
        raise ModelSyntaxError(lineno, f"missing operator after {lhs!r}")
    if op not in OPERATORS:
        raise ModelSyntaxError(lineno, f"unknown operator {op!r}")
    if not rest.strip():
        raise ModelSyntaxError(lineno, "empty right-hand side")
    terms = []
    pos = 0
    rest = rest.strip()
    while pos < len(rest):
        tm = _TERM.match(rest, pos)
        if tm is None or tm.end() == pos:
            chunk = rest[pos:].split("+", 1)[0].strip()
            if not chunk:
                raise ModelSyntaxError(lineno, "empty term between '+' signs")
            if "*" in chunk:
                raise ModelSyntaxError(lineno, f"malformed multiplier in {chunk!r}")
            raise ModelSyntaxError(lineno, f"malformed term {chunk!r}")
        mult, name = tm.groups()
        value = None
        if mult is not None:
            if not _NUMBER_RE.match(mult) or not np.isfinite(float(mult)):
                raise ModelSyntaxError(lineno, f"malformed multiplier {mult!r}")
            value = float(mult)
        terms.append(Term(name, value))
        pos = tm.end()
        if rest[tm.end() - 1] == "+" and not rest[pos:].strip():
            raise ModelSyntaxError(lineno, "dangling '+' at end of line")
    return Statement(lhs, op, tuple(terms), lineno)


def render(ast: ModelAst) -> str:
    """Canonical text form; ``parse(render(ast)) == ast``."""
    lines = []
    for st in ast.statements:
        terms = " + ".join(
            t.variable if t.multiplier is None else f"{t.multiplier!r}*{t.variable}"
            for t in st.terms
        )
        lines.append(f"{st.lhs} {st.op} {terms}")
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class LoweredModel:
    observed: tuple[str, ...]
    latents: tuple[str, ...]
    spec: ParameterSpec

    @property
    def labels(self) -> tuple[str, ...]:
        return self.spec.labels


class _Slots:
    """Accumulates free/fixed decisions per matrix slot, rejecting conflicts."""

    def __init__(self):
        self.explicit: dict = {}

    def set(self, key, value, where):
        old = self.explicit.get(key)
        if old is not None and old[0] != value:
            raise ModelSpecError(f"{where}: conflicting specification for {key[0]}[{key[1]},{key[2]}]")
        self.explicit[key] = (value, where)


def lower(ast: ModelAst, observed_names) -> LoweredModel:
    """Resolve names and apply the default free/fixed rules.

    Defaults: the first indicator of each latent is the marker (loading fixed
    to 1) unless one of its loadings has an explicit multiplier or its
    variance is fixed explicitly; residual variances of indicators, all latent
    variances and disturbances, covariances among exogenous latents and among
    exogenous observed predictors are free; everything else is fixed at 0.
    Observed variables used in regressions become single-indicator latents
    with unit loading and zero residual variance.
    """
    observed_names = list(observed_names)
    data_names = set(observed_names)

    latents: list[str] = []
    for st in ast.statements:
        if st.op == MEASURE and st.lhs not in latents:
            if st.lhs in data_names:
                raise ModelSpecError(f"line {st.lineno}: {st.lhs!r} is both observed and a latent variable")
            latents.append(st.lhs)
    latent_set = set(latents)

    referenced = []
    for st in ast.statements:
        for name in [st.lhs] + [t.variable for t in st.terms]:
            if name not in latent_set and name not in data_names:
                raise ModelSpecError(
                    f"line {st.lineno}: variable {name!r} is neither observed nor defined as latent"
                )
            if name not in latent_set and name not in referenced:
                referenced.append(name)
    observed = [n for n in observed_names if n in set(referenced)]

    indicators = set()
    proxies = set()
    regress_lhs = set()
    for st in ast.statements:
        if st.op == MEASURE:
            for t in st.terms:
                if t.variable in latent_set:
                    raise ModelSpecError(f"line {st.lineno}: higher-order factor {st.lhs!r} =~ {t.variable!r} is not supported")
                indicators.add(t.variable)
        elif st.op == REGRESS:
            regress_lhs.add(st.lhs)
            for name in [st.lhs] + [t.variable for t in st.terms]:
                if name not in latent_set:
                    proxies.add(name)
    both = indicators & proxies
    if both:
        raise ModelSpecError(f"observed variable(s) {sorted(both)} used both as indicator and in a regression")

    proxy_list = [n for n in observed if n in proxies]
    nodes = latents + proxy_list  # latent-node order
    pos_obs = {n: i for i, n in enumerate(observed)}
    pos_lat = {n: i for i, n in enumerate(nodes)}
    p, m = len(observed), len(nodes)

    slots = _Slots()
    fixed_var = set()
    for st in ast.statements:
        if st.op == COVARY:
            for t in st.terms:
                if t.variable == st.lhs and t.multiplier is not None:
                    fixed_var.add(st.lhs)

    # loadings
    first_indicator = {}
    explicit_mult = set()
    for st in ast.statements:
        if st.op != MEASURE:
            continue
        for t in st.terms:
            first_indicator.setdefault(st.lhs, t.variable)
            if t.multiplier is not None:
                explicit_mult.add(st.lhs)
            key = ("lambda", pos_obs[t.variable], pos_lat[st.lhs])
            slots.set(key, t.multiplier, f"line {st.lineno}")
    for lat, ind in first_indicator.items():
        if lat in explicit_mult or lat in fixed_var:
            continue
        key = ("lambda", pos_obs[ind], pos_lat[lat])
        slots.explicit[key] = (1.0, "marker")
    for name in proxy_list:
        slots.explicit[("lambda", pos_obs[name], pos_lat[name])] = (1.0, "proxy")

    # regressions
    for st in ast.statements:
        if st.op != REGRESS:
            continue
        for t in st.terms:
            if t.variable == st.lhs:
                raise ModelSpecError(f"line {st.lineno}: {st.lhs!r} cannot regress on itself")
            key = ("b0", pos_lat[st.lhs], pos_lat[t.variable])
            slots.set(key, t.multiplier, f"line {st.lineno}")

    # explicit covariances
    for st in ast.statements:
        if st.op != COVARY:
            continue
        for t in st.terms:
            a, b = st.lhs, t.variable
            a_ind, b_ind = a in indicators, b in indicators
            if a_ind and b_ind:
                i, j = pos_obs[a], pos_obs[b]
                key = ("theta", max(i, j), min(i, j))
            elif a in pos_lat and b in pos_lat:
                i, j = pos_lat[a], pos_lat[b]
                key = ("psi", max(i, j), min(i, j))
            else:
                raise ModelSpecError(f"line {st.lineno}: cannot covary {a!r} with {b!r}")
            slots.set(key, t.multiplier, f"line {st.lineno}")

    # defaults
    defaults = set()
    for name in observed:
        if name in proxies:
            slots.explicit.setdefault(("theta", pos_obs[name], pos_obs[name]), (0.0, "proxy"))
        else:
            defaults.add(("theta", pos_obs[name], pos_obs[name]))
    for name in nodes:
        defaults.add(("psi", pos_lat[name], pos_lat[name]))
    exo_latents = [n for n in latents if n not in regress_lhs]
    exo_observed = [n for n in proxy_list if n not in regress_lhs]
    for group in (exo_latents, exo_observed):
        for x in range(len(group)):
            for y in range(x):
                i, j = pos_lat[group[x]], pos_lat[group[y]]
                defaults.add(("psi", max(i, j), min(i, j)))

    names = {"lambda": (observed, nodes), "psi": (nodes, nodes), "b0": (nodes, nodes), "theta": (observed, observed)}
    shapes = {"lambda": (p, m), "psi": (m, m), "b0": (m, m), "theta": (p, p)}
    index = {k: np.full(s, FIXED) for k, s in shapes.items()}
    fixed = {k: np.zeros(s) for k, s in shapes.items()}
    free_keys = set(defaults)
    for key, (value, _) in slots.explicit.items():
        if value is None:
            free_keys.add(key)
        else:
            free_keys.discard(key)
            fixed[key[0]][key[1], key[2]] = value

    labels = []
    ops = {"lambda": MEASURE, "psi": COVARY, "b0": REGRESS, "theta": COVARY}
    for name in ("lambda", "psi", "b0", "theta"):
        sm = SlotMatrix(index[name], fixed[name], name in ("psi", "theta"))
        for r, c in sm.slots():
            if (name, r, c) not in free_keys:
                continue
            index[name][r, c] = len(labels)
            rows, cols = names[name]
            if name == "lambda":
                labels.append(f"{cols[c]} =~ {rows[r]}")
            elif name == "b0":
                labels.append(f"{rows[r]} ~ {cols[c]}")
            elif name == "psi":
                # latent order depends on statement order; names do not
                a, b = sorted((rows[c], rows[r]))
                labels.append(f"{a} ~~ {b}")
            else:
                labels.append(f"{rows[c]} ~~ {rows[r]}")

    b0_fixed_diag = np.diag(fixed["b0"])
    if np.any(b0_fixed_diag != 0):
        raise ModelSpecError("self-regressions are not allowed")
    mats = ModelMatrices(
        SlotMatrix(index["lambda"], fixed["lambda"]),
        SlotMatrix(index["psi"], fixed["psi"], True),
        SlotMatrix(index["b0"], fixed["b0"]),
        SlotMatrix(index["theta"], fixed["theta"], True),
    )
    return LoweredModel(tuple(observed), tuple(nodes), ParameterSpec(mats, tuple(labels)))


def load_model(text: str, observed_names) -> LoweredModel:
    return lower(parse(text), observed_names)
