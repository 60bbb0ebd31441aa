"""
一阶逻辑模块 - 形式化语法的解析、表示与渲染

设计理念 (CleanRL哲学):
- 单文件自包含: 语法、AST、渲染、签名全部在此
- 透明的处理流程: 先解析为纯常量项, 再由量词绑定生成变量
- 最小化抽象: frozen dataclass 表示公式, 无访问者框架
- 便于调试: 语法错误携带字节偏移和列号

Accepted syntax (Unicode and ASCII spellings are interchangeable)::

    formula     := iff
    iff         := implies { ("↔" | "<->") implies }          left-assoc
    implies     := disj [ ("→" | "->") implies ]              right-assoc
    disj        := conj { ("∨" | "|") conj }                  n-ary
    conj        := unary { ("∧" | "&") unary }                n-ary
    unary       := ("¬" | "~" | "!") unary | primary
    primary     := quantified | "(" formula ")" | "[" formula "]" | atom
    quantified  := quant { quant } ( "(" formula ")" | "[" formula "]" | formula )
    quant       := ("∀" | "forall") ident [":" | "."] | ("∃" | "exists") ident [":" | "."]
    atom        := ident [ "(" [ ident { "," ident } ] ")" ]
    ident       := [A-Za-z_][A-Za-z0-9_]*   (except the keywords forall / exists)

Precedence from tightest: ¬, ∧, ∨, →, ↔. A quantifier chain directly followed
by a bracket group binds exactly that group; otherwise its body extends as far
right as possible. An argument is a Variable iff an enclosing quantifier binds
its name, otherwise a Constant. Function application inside an argument list
is rejected.
"""

import threading
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Set, Tuple, Union

import pyparsing as pp
from loguru import logger


# ============================================================================
# 异常定义
# ============================================================================

class FormulaError(ValueError):
    """fol模块错误基类"""


class FormulaSyntaxError(FormulaError):
    """
    语法错误

    Attributes:
        offset: UTF-8 byte offset of the failure in `text`
        column: character index of the failure in `text`
    """

    def __init__(self, message: str, text: str = "", column: int = 0):
        self.text = text
        self.column = column
        self.offset = len(text[:column].encode("utf-8"))
        self.reason = message
        super().__init__(f"{message} (byte offset {self.offset})")


class ArityError(FormulaError):
    """同一谓词出现两种元数"""


# ============================================================================
# 项与公式
# ============================================================================

@dataclass(frozen=True)
class Constant:
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("constant name must be nonempty")


@dataclass(frozen=True)
class Variable:
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("variable name must be nonempty")


Term = Union[Constant, Variable]


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: Tuple[Term, ...] = ()

    def __post_init__(self):
        if not self.predicate:
            raise ValueError("predicate name must be nonempty")
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class And:
    items: Tuple["Formula", ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if len(self.items) < 2:
            raise ValueError("And needs at least two conjuncts")


@dataclass(frozen=True)
class Or:
    items: Tuple["Formula", ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if len(self.items) < 2:
            raise ValueError("Or needs at least two disjuncts")


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Iff:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class ForAll:
    var: str
    body: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Formula"


Formula = Union[Atom, Not, And, Or, Implies, Iff, ForAll, Exists]

_BINARY = (And, Or, Implies, Iff)
_QUANTIFIERS = (ForAll, Exists)

# 符号 → 自然语言短语
SymbolKeys = Dict[str, str]


@dataclass(frozen=True)
class Signature:
    """Predicate arities and constants of a formula set."""
    predicates: Mapping[str, int] = field(default_factory=dict)
    constants: FrozenSet[str] = frozenset()

    @property
    def symbols(self) -> Set[str]:
        return set(self.predicates) | set(self.constants)


# ============================================================================
# 语法 (pyparsing)
# ============================================================================

pp.ParserElement.enable_packrat()

# pyparsing的packrat缓存是全局共享的
_PARSE_LOCK = threading.RLock()


def _reject_function(s, loc, toks):
    raise pp.ParseFatalException(s, loc, f"function symbols are not supported: {toks[0]}(...)")


def _make_atom(toks):
    args = tuple(toks[1]) if len(toks) > 1 else ()
    return Atom(toks[0], args)


def _make_nary(cls):
    def action(toks):
        items = list(toks)
        return items[0] if len(items) == 1 else cls(tuple(items))
    return action


def _make_implies(toks):
    return toks[0] if len(toks) == 1 else Implies(toks[0], toks[1])


def _make_iff(toks):
    result = toks[0]
    for right in toks[1:]:
        result = Iff(result, right)
    return result


def _make_quantified(toks):
    heads, body = toks[0], toks[1]
    for kind, var in reversed(list(heads)):
        body = ForAll(var, body) if kind == "forall" else Exists(var, body)
    return body


def _build_grammar() -> pp.ParserElement:
    LPAR, RPAR = map(pp.Suppress, "()")
    LBRACK, RBRACK = map(pp.Suppress, "[]")

    forall_kw = pp.Keyword("forall")
    exists_kw = pp.Keyword("exists")
    ident = ~(forall_kw | exists_kw) + pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*")
    ident.set_name("identifier")

    forall = (pp.Literal("∀") | forall_kw).set_parse_action(pp.replace_with("forall"))
    exists = (pp.Literal("∃") | exists_kw).set_parse_action(pp.replace_with("exists"))

    not_op = pp.Suppress(pp.one_of("¬ ~ !"))
    and_op = pp.Suppress(pp.one_of("∧ &"))
    or_op = pp.Suppress(pp.one_of("∨ |"))
    implies_op = pp.Suppress(pp.Literal("→") | pp.Literal("->"))
    iff_op = pp.Suppress(pp.Literal("↔") | pp.Literal("<->"))

    formula = pp.Forward()
    implies = pp.Forward()
    unary = pp.Forward()

    function_term = (ident + pp.FollowedBy("(")).set_parse_action(_reject_function)
    constant_term = ident.copy().set_parse_action(lambda toks: Constant(toks[0]))
    term = function_term | constant_term

    arg_list = pp.Group(LPAR + pp.Optional(pp.DelimitedList(term)) + RPAR)
    atom = (ident + pp.Optional(arg_list)).set_parse_action(_make_atom)

    bracketed = (LPAR + formula + RPAR) | (LBRACK + formula + RBRACK)

    quant = pp.Group((forall | exists) + ident + pp.Optional(pp.Suppress(pp.one_of(": ."))))
    quantified = (pp.Group(pp.OneOrMore(quant)) + (bracketed | formula)).set_parse_action(_make_quantified)

    primary = quantified | bracketed | atom
    unary <<= (not_op + unary).set_parse_action(lambda toks: Not(toks[0])) | primary

    conj = (unary + pp.ZeroOrMore(and_op + unary)).set_parse_action(_make_nary(And))
    disj = (conj + pp.ZeroOrMore(or_op + conj)).set_parse_action(_make_nary(Or))
    implies <<= (disj + pp.Optional(implies_op + implies)).set_parse_action(_make_implies)
    iff = (implies + pp.ZeroOrMore(iff_op + implies)).set_parse_action(_make_iff)
    formula <<= iff
    return formula


_GRAMMAR = _build_grammar()


# ============================================================================
# 解析
# ============================================================================

def _bind(f: Formula, bound: FrozenSet[str]) -> Formula:
    """Turn constants named by an enclosing quantifier into variables."""
    if isinstance(f, Atom):
        if not bound:
            return f
        return Atom(f.predicate, tuple(
            Variable(t.name) if isinstance(t, Constant) and t.name in bound else t
            for t in f.args
        ))
    if isinstance(f, Not):
        return Not(_bind(f.body, bound))
    if isinstance(f, And):
        return And(tuple(_bind(g, bound) for g in f.items))
    if isinstance(f, Or):
        return Or(tuple(_bind(g, bound) for g in f.items))
    if isinstance(f, Implies):
        return Implies(_bind(f.left, bound), _bind(f.right, bound))
    if isinstance(f, Iff):
        return Iff(_bind(f.left, bound), _bind(f.right, bound))
    if isinstance(f, ForAll):
        return ForAll(f.var, _bind(f.body, bound | {f.var}))
    if isinstance(f, Exists):
        return Exists(f.var, _bind(f.body, bound | {f.var}))
    raise TypeError(f"not a formula: {f!r}")


def parse_formula(text: Union[str, bytes]) -> Formula:
    """
    解析公式文本

    Raises:
        FormulaSyntaxError: unbalanced bracket, unknown token, function term,
            undecodable bytes or nesting beyond the recursion limit
        ArityError: one predicate used with two arities
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as e:
            err = FormulaSyntaxError("input is not valid UTF-8")
            err.offset = e.start
            raise err from None

    if not text or not text.strip():
        raise FormulaSyntaxError("empty formula", text, 0)

    try:
        with _PARSE_LOCK:
            raw = _GRAMMAR.parse_string(text, parse_all=True)[0]
    except pp.ParseBaseException as e:
        raise FormulaSyntaxError(e.msg, text, e.loc) from None
    except RecursionError:
        raise FormulaSyntaxError("formula nesting too deep", text, 0) from None

    formula = _bind(raw, frozenset())
    signature_of([formula])
    return formula


# ============================================================================
# 渲染
# ============================================================================

_STYLES = {
    "unicode": {
        "not": "¬", And: " ∧ ", Or: " ∨ ", Implies: " → ", Iff: " ↔ ",
        ForAll: "∀{}", Exists: "∃{}", "quant_sep": "",
    },
    "ascii": {
        "not": "~", And: " & ", Or: " | ", Implies: " -> ", Iff: " <-> ",
        ForAll: "forall {}", Exists: "exists {}", "quant_sep": " ",
    },
}


def _needs_parens(parent, child: Formula, side: str, minimal: bool) -> bool:
    if not isinstance(child, _BINARY):
        return False
    if not minimal:
        return True
    if parent is And:
        return True
    if parent is Or:
        return not isinstance(child, And)
    if parent is Implies:
        if side == "left":
            return isinstance(child, (Implies, Iff))
        return isinstance(child, Iff)
    # Iff is left-associative
    return side == "right" and isinstance(child, Iff)


def _render_term(t: Term) -> str:
    return t.name


def _render(f: Formula, sym: dict, minimal: bool) -> str:
    if isinstance(f, Atom):
        if not f.args:
            return f.predicate
        return f"{f.predicate}({', '.join(_render_term(t) for t in f.args)})"

    if isinstance(f, Not):
        inner = _render(f.body, sym, minimal)
        if isinstance(f.body, _BINARY):
            inner = f"({inner})"
        return sym["not"] + inner

    if isinstance(f, _QUANTIFIERS):
        heads = []
        node = f
        while isinstance(node, _QUANTIFIERS):
            heads.append(sym[type(node)].format(node.var))
            node = node.body
        return f"{sym['quant_sep'].join(heads)} [{_render(node, sym, minimal)}]"

    def wrap(child, side):
        text = _render(child, sym, minimal)
        return f"({text})" if _needs_parens(type(f), child, side, minimal) else text

    if isinstance(f, (And, Or)):
        return sym[type(f)].join(wrap(g, "item") for g in f.items)
    if isinstance(f, (Implies, Iff)):
        return wrap(f.left, "left") + sym[type(f)] + wrap(f.right, "right")
    raise TypeError(f"not a formula: {f!r}")


def render_formula(f: Formula, style: str = "unicode", minimal: bool = False) -> str:
    """
    渲染公式

    Quantifier bodies are always bracketed ("∀x [P(x) → M(x)]"). By default
    every binary connective nested in another binary connective is
    parenthesised; `minimal=True` keeps only the parentheses precedence needs.
    Negation is never simplified.
    """
    if style not in _STYLES:
        raise ValueError(f"unknown style: {style}")
    return _render(f, _STYLES[style], minimal)


# ============================================================================
# 结构查询
# ============================================================================

def iter_atoms(f: Formula) -> Iterator[Atom]:
    if isinstance(f, Atom):
        yield f
    elif isinstance(f, Not):
        yield from iter_atoms(f.body)
    elif isinstance(f, (And, Or)):
        for g in f.items:
            yield from iter_atoms(g)
    elif isinstance(f, (Implies, Iff)):
        yield from iter_atoms(f.left)
        yield from iter_atoms(f.right)
    elif isinstance(f, _QUANTIFIERS):
        yield from iter_atoms(f.body)


def free_variables(f: Formula) -> Set[str]:
    """标准自由变量集合; solver inputs must yield the empty set."""
    if isinstance(f, Atom):
        return {t.name for t in f.args if isinstance(t, Variable)}
    if isinstance(f, Not):
        return free_variables(f.body)
    if isinstance(f, (And, Or)):
        result: Set[str] = set()
        for g in f.items:
            result |= free_variables(g)
        return result
    if isinstance(f, (Implies, Iff)):
        return free_variables(f.left) | free_variables(f.right)
    if isinstance(f, _QUANTIFIERS):
        return free_variables(f.body) - {f.var}
    raise TypeError(f"not a formula: {f!r}")


def is_closed(f: Formula) -> bool:
    return not free_variables(f)


def signature_of(fs: Iterable[Formula]) -> Signature:
    """
    计算公式集合的签名

    Raises:
        ArityError: a predicate occurs with two different arities
    """
    predicates: Dict[str, int] = {}
    constants: Set[str] = set()
    for f in fs:
        for atom in iter_atoms(f):
            arity = len(atom.args)
            known = predicates.setdefault(atom.predicate, arity)
            if known != arity:
                raise ArityError(
                    f"predicate {atom.predicate} used with arities {known} and {arity}"
                )
            constants.update(t.name for t in atom.args if isinstance(t, Constant))
    return Signature(dict(sorted(predicates.items())), frozenset(constants))


def missing_keys(keys: Mapping[str, str], fs: Iterable[Formula]) -> List[str]:
    """Symbols of `fs` that have no nonempty key entry, sorted."""
    signature = signature_of(fs)
    return sorted(s for s in signature.symbols if not (keys.get(s) or "").strip())


# ============================================================================
# 模块测试
# ============================================================================

if __name__ == "__main__":
    for text in [
        "∀x [P(x) → M(x)]",
        "∀x∀y [(M(x) ∧ M(y) ∧ L(x)) → L(y)]",
        "(P(C) ∧ P(A)) → R(C, A)",
        "forall x (P(x) -> ~~M(x))",
    ]:
        f = parse_formula(text)
        print(f"{text}\n  unicode: {render_formula(f)}\n  ascii:   {render_formula(f, 'ascii')}")
    logger.info(signature_of([parse_formula("L(C)"), parse_formula("∀x [P(x) → M(x)]")]))
