"""
求解器模块 - 演绎有效性判定与最小前提集枚举

设计理念 (CleanRL哲学):
- 单文件自包含: NNF、Skolem化、Herbrand实例化、CNF、DPLL全部在此
- 透明的处理流程: 每一步都是独立的纯函数
- 最小化抽象: 子句就是整数列表
- 便于调试: 无效时返回反模型

Decision procedure for the function-free fragment:

1. negate the conclusion and conjoin it with the premises
2. push negations inward (NNF), eliminating → and ↔
3. replace each existential whose scope mentions no universal variable by a
   fresh constant; any other existential is rejected with FragmentError
4. instantiate universals over the problem's constants (plus "c0" when none)
5. lower to CNF with Plaisted-Greenbaum definitions and run DPLL

Valid iff the clause set is unsatisfiable.
"""

import itertools
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from loguru import logger

from fol import (
    And, Atom, Constant, Exists, ForAll, Formula, Iff, Implies, Not,
    Or, Variable, free_variables, render_formula, signature_of,
)


# ============================================================================
# 异常定义
# ============================================================================

class SolverError(Exception):
    """求解器错误基类"""


class FragmentError(SolverError):
    """公式超出支持的片段 (需要非零元Skolem函数, 或公式不封闭)"""


class NotValidError(SolverError):
    """前提集不蕴含结论, 最小集合枚举无定义"""


class CapExceededError(SolverError):
    """前提数超过精确枚举上限"""


# ============================================================================
# 数据结构
# ============================================================================

LabeledPremises = List[Tuple[str, Formula]]


class ValidityStatus:
    """有效性判定常量"""
    VALID = "Valid"
    INVALID = "Invalid"


@dataclass
class ValidityVerdict:
    """Countermodel maps rendered ground atoms to truth values; atoms not listed are false."""
    status: str
    countermodel: Optional[Dict[str, bool]] = None

    @property
    def valid(self) -> bool:
        return self.status == ValidityStatus.VALID

    def describe(self) -> str:
        if self.valid:
            return "valid"
        true_atoms = [a for a, v in (self.countermodel or {}).items() if v]
        false_atoms = [a for a, v in (self.countermodel or {}).items() if not v]
        return (
            "invalid; countermodel where all premises hold and the conclusion fails: "
            f"true = {{{', '.join(true_atoms)}}}, false = {{{', '.join(false_atoms)}}}"
        )

    def to_dict(self) -> dict:
        return {"status": self.status, "countermodel": self.countermodel}


@dataclass
class MinimalSetsResult:
    minimal_sets: List[FrozenSet[str]]
    union: List[str]  # premise order
    exact: bool = True

    def to_dict(self) -> dict:
        return {
            "minimal_sets": [sorted(s, key=self.union.index) for s in self.minimal_sets],
            "union": list(self.union),
            "exact": self.exact,
        }


@dataclass
class GroundClauseSet:
    """
    命题子句集

    Variables 1..len(atoms) are ground atoms; higher ones are definition
    variables introduced by the CNF lowering.
    """
    atoms: Dict[Atom, int] = field(default_factory=dict)
    clauses: List[List[int]] = field(default_factory=list)
    num_vars: int = 0

    def atom_of(self, var: int) -> Optional[Atom]:
        for atom, index in self.atoms.items():
            if index == var:
                return atom
        return None


@dataclass
class SatResult:
    satisfiable: bool
    model: Optional[Dict[int, bool]] = None


# ============================================================================
# NNF 与 Skolem化
# ============================================================================

def to_nnf(f: Formula, positive: bool = True) -> Formula:
    """Negation normal form without → and ↔."""
    if isinstance(f, Atom):
        return f if positive else Not(f)
    if isinstance(f, Not):
        return to_nnf(f.body, not positive)
    if isinstance(f, And):
        items = tuple(to_nnf(g, positive) for g in f.items)
        return And(items) if positive else Or(items)
    if isinstance(f, Or):
        items = tuple(to_nnf(g, positive) for g in f.items)
        return Or(items) if positive else And(items)
    if isinstance(f, Implies):
        if positive:
            return Or((to_nnf(f.left, False), to_nnf(f.right, True)))
        return And((to_nnf(f.left, True), to_nnf(f.right, False)))
    if isinstance(f, Iff):
        if positive:
            return And((
                Or((to_nnf(f.left, False), to_nnf(f.right, True))),
                Or((to_nnf(f.left, True), to_nnf(f.right, False))),
            ))
        return Or((
            And((to_nnf(f.left, True), to_nnf(f.right, False))),
            And((to_nnf(f.left, False), to_nnf(f.right, True))),
        ))
    if isinstance(f, ForAll):
        body = to_nnf(f.body, positive)
        return ForAll(f.var, body) if positive else Exists(f.var, body)
    if isinstance(f, Exists):
        body = to_nnf(f.body, positive)
        return Exists(f.var, body) if positive else ForAll(f.var, body)
    raise TypeError(f"not a formula: {f!r}")


def substitute(f: Formula, var: str, const: str) -> Formula:
    """Replace free occurrences of variable `var` by constant `const`."""
    if isinstance(f, Atom):
        return Atom(f.predicate, tuple(
            Constant(const) if isinstance(t, Variable) and t.name == var else t
            for t in f.args
        ))
    if isinstance(f, Not):
        return Not(substitute(f.body, var, const))
    if isinstance(f, (And, Or)):
        return type(f)(tuple(substitute(g, var, const) for g in f.items))
    if isinstance(f, (Implies, Iff)):
        return type(f)(substitute(f.left, var, const), substitute(f.right, var, const))
    if isinstance(f, (ForAll, Exists)):
        if f.var == var:
            return f
        return type(f)(f.var, substitute(f.body, var, const))
    raise TypeError(f"not a formula: {f!r}")


class _SkolemNamer:
    """Allocates sk1, sk2, ... avoiding names already in use."""

    def __init__(self, taken: Set[str]):
        self.taken = set(taken)
        self.counter = 0
        self.created: List[str] = []

    def fresh(self) -> str:
        while True:
            self.counter += 1
            name = f"sk{self.counter}"
            if name not in self.taken:
                self.taken.add(name)
                self.created.append(name)
                return name


def skolemize(f: Formula, namer: _SkolemNamer, universals: Tuple[str, ...] = ()) -> Formula:
    """
    Skolem化 (NNF输入)

    An existential becomes a fresh constant when none of the enclosing
    universal variables occurs free in its scope.

    Raises:
        FragmentError: a Skolem function of arity >= 1 would be needed
    """
    if isinstance(f, (Atom, Not)):
        return f
    if isinstance(f, (And, Or)):
        return type(f)(tuple(skolemize(g, namer, universals) for g in f.items))
    if isinstance(f, ForAll):
        return ForAll(f.var, skolemize(f.body, namer, universals + (f.var,)))
    if isinstance(f, Exists):
        dependencies = free_variables(f) & set(universals)
        if dependencies:
            raise FragmentError(
                f"existential {f.var} depends on universal variable(s) "
                f"{sorted(dependencies)}; a Skolem function would be required"
            )
        return skolemize(substitute(f.body, f.var, namer.fresh()), namer, universals)
    raise TypeError(f"expected NNF formula, got {f!r}")


# ============================================================================
# Herbrand实例化与CNF
# ============================================================================

class _Grounder:
    """Shared atom table and definition-variable counter for one problem."""

    def __init__(self, universe: Sequence[str]):
        self.universe = list(universe)
        self.atoms: Dict[Atom, int] = {}
        self.next_var = 0
        self._pending: List[List[int]] = []

    def _atom_var(self, atom: Atom) -> int:
        var = self.atoms.get(atom)
        if var is None:
            var = len(self.atoms) + 1
            self.atoms[atom] = var
        return var

    def _instantiate(self, f: Formula, env: Dict[str, str]):
        if isinstance(f, Atom):
            args = tuple(Constant(env[t.name]) if isinstance(t, Variable) else t for t in f.args)
            return ("lit", self._atom_var(Atom(f.predicate, args)))
        if isinstance(f, Not):
            _, var = self._instantiate(f.body, env)
            return ("lit", -var)
        if isinstance(f, And):
            return ("and", [self._instantiate(g, env) for g in f.items])
        if isinstance(f, Or):
            return ("or", [self._instantiate(g, env) for g in f.items])
        if isinstance(f, ForAll):
            return ("and", [self._instantiate(f.body, {**env, f.var: c}) for c in self.universe])
        raise FragmentError(f"unexpected node after Skolemization: {type(f).__name__}")

    def ground(self, f: Formula) -> tuple:
        """Instantiate one Skolemized NNF formula into a ("lit"|"and"|"or", payload) tree."""
        return self._instantiate(f, {})

    def lower(self, node: tuple) -> List[List[int]]:
        """
        CNF of a ground tree. Must run after every formula of the problem has
        been grounded: definition variables are numbered after the atom table.
        """
        if self.next_var == 0:
            self.next_var = len(self.atoms)
        self._pending = []
        clauses = self._cnf(node) + self._pending
        return [c for c in (_dedupe(c) for c in clauses) if c is not None]

    def _cnf(self, node: tuple) -> List[List[int]]:
        kind, payload = node
        if kind == "lit":
            return [[payload]]
        if kind == "and":
            result: List[List[int]] = []
            for child in payload:
                result.extend(self._cnf(child))
            return result
        # or: 多子句的析取项用定义变量替换 (aux → child)
        literals: List[int] = []
        for child in payload:
            child_clauses = self._cnf(child)
            if not child_clauses:
                return []
            if len(child_clauses) == 1:
                literals.extend(child_clauses[0])
                continue
            self.next_var += 1
            aux = self.next_var
            self._pending.extend([-aux] + clause for clause in child_clauses)
            literals.append(aux)
        return [literals]


def _dedupe(clause: List[int]) -> Optional[List[int]]:
    """Drop repeated literals; None for a tautological clause."""
    seen: List[int] = []
    for lit in clause:
        if -lit in seen:
            return None
        if lit not in seen:
            seen.append(lit)
    return seen


def _prepare(formulas: Sequence[Formula], fresh_constant: str, constants: Iterable[str] = ()) -> Tuple[_Grounder, List[List[List[int]]], int]:
    constants = list(constants)
    for f in formulas:
        free = free_variables(f)
        if free:
            raise FragmentError(f"formula is not closed (free: {sorted(free)}): {render_formula(f)}")
    signature = signature_of(formulas)

    namer = _SkolemNamer(set(signature.constants) | set(constants))
    skolemized = [skolemize(to_nnf(f), namer) for f in formulas]

    universe = sorted(set(signature.constants) | set(namer.created) | set(constants))
    if not universe:
        universe = [fresh_constant]

    grounder = _Grounder(universe)
    trees = [grounder.ground(f) for f in skolemized]
    groups = [grounder.lower(tree) for tree in trees]
    return grounder, groups, grounder.next_var


def ground(
    formulas: Sequence[Formula],
    fresh_constant: str = "c0",
    constants: Iterable[str] = (),
) -> GroundClauseSet:
    """
    Herbrand实例化

    `formulas` is the full problem, i.e. the premises followed by the negated
    conclusion. `constants` widens the universe beyond the constants that occur.
    """
    grounder, groups, num_vars = _prepare(formulas, fresh_constant, constants)
    clauses = [clause for group in groups for clause in group]
    return GroundClauseSet(atoms=dict(grounder.atoms), clauses=clauses, num_vars=num_vars)


# ============================================================================
# DPLL
# ============================================================================

def _solve(clauses: Sequence[Sequence[int]], num_vars: int) -> Optional[Dict[int, bool]]:
    """
    DPLL with unit propagation; branches on the smallest unassigned variable,
    trying False before True. Returns a total assignment or None.
    """
    if any(len(c) == 0 for c in clauses):
        return None

    assignment: Dict[int, bool] = {}
    trail: List[int] = []
    # (variable, trail length before the decision, True already tried)
    decisions: List[Tuple[int, int, bool]] = []

    def assign(var: int, value: bool):
        assignment[var] = value
        trail.append(var)

    def undo(mark: int):
        while len(trail) > mark:
            del assignment[trail.pop()]

    def propagate() -> Optional[bool]:
        """None on conflict, True if every clause is satisfied, False otherwise."""
        changed = True
        while changed:
            changed = False
            all_satisfied = True
            for clause in clauses:
                unassigned = 0
                last = 0
                satisfied = False
                for lit in clause:
                    value = assignment.get(abs(lit))
                    if value is None:
                        unassigned += 1
                        last = lit
                    elif value == (lit > 0):
                        satisfied = True
                        break
                if satisfied:
                    continue
                if unassigned == 0:
                    return None
                all_satisfied = False
                if unassigned == 1:
                    assign(abs(last), last > 0)
                    changed = True
        return all_satisfied

    while True:
        status = propagate()
        if status is not None:
            if status:
                for var in range(1, num_vars + 1):
                    assignment.setdefault(var, False)
                return dict(sorted(assignment.items()))
            var = next(v for v in range(1, num_vars + 1) if v not in assignment)
            decisions.append((var, len(trail), False))
            assign(var, False)
            continue

        # 冲突: 回溯到最近一个还未尝试True的决策
        while decisions:
            var, mark, tried_true = decisions.pop()
            undo(mark)
            if not tried_true:
                decisions.append((var, mark, True))
                assign(var, True)
                break
        else:
            return None


def sat(clause_set: GroundClauseSet) -> SatResult:
    """完整的命题可满足性判定"""
    model = _solve(clause_set.clauses, clause_set.num_vars)
    if model is None:
        return SatResult(False)
    return SatResult(True, model)


# ============================================================================
# 有效性判定
# ============================================================================

def _check_labels(premises: LabeledPremises):
    labels = [label for label, _ in premises]
    if len(set(labels)) != len(labels):
        raise SolverError(f"duplicate premise labels: {labels}")


def _countermodel(grounder: _Grounder, model: Dict[int, bool]) -> Dict[str, bool]:
    return {render_formula(atom): model.get(var, False) for atom, var in grounder.atoms.items()}


class _Problem:
    """Premises grounded once; subsets are decided by selecting clause groups."""

    def __init__(self, premises: LabeledPremises, conclusion: Formula, fresh_constant: str):
        _check_labels(premises)
        self.labels = [label for label, _ in premises]
        formulas = [f for _, f in premises] + [Not(conclusion)]
        self.grounder, groups, self.num_vars = _prepare(formulas, fresh_constant)
        self.premise_clauses = groups[:-1]
        self.goal_clauses = groups[-1]
        self.sat_calls = 0

    def solve(self, indices: Sequence[int]) -> Optional[Dict[int, bool]]:
        self.sat_calls += 1
        clauses = list(self.goal_clauses)
        for i in indices:
            clauses.extend(self.premise_clauses[i])
        return _solve(clauses, self.num_vars)

    def valid(self, indices: Sequence[int]) -> bool:
        return self.solve(indices) is None


def check_validity(
    premises: LabeledPremises,
    conclusion: Formula,
    fresh_constant: str = "c0",
) -> ValidityVerdict:
    """
    判定前提是否演绎蕴含结论

    Raises:
        FragmentError: open formula or non-nullary Skolem symbol needed
        ArityError: inconsistent predicate arity
    """
    problem = _Problem(premises, conclusion, fresh_constant)
    model = problem.solve(range(len(premises)))
    if model is None:
        logger.debug(f"有效性判定: Valid ({len(premises)} premises)")
        return ValidityVerdict(ValidityStatus.VALID)
    countermodel = _countermodel(problem.grounder, model)
    logger.debug(f"有效性判定: Invalid, countermodel={countermodel}")
    return ValidityVerdict(ValidityStatus.INVALID, countermodel)


# ============================================================================
# 最小前提集
# ============================================================================

def _deletion_minimal(problem: _Problem, n: int) -> List[int]:
    kept = list(range(n))
    for i in range(n):
        trial = [j for j in kept if j != i]
        if problem.valid(trial):
            kept = trial
    return kept


def minimal_premise_sets(
    premises: LabeledPremises,
    conclusion: Formula,
    cap: int = 16,
    strict: bool = False,
    fresh_constant: str = "c0",
) -> MinimalSetsResult:
    """
    枚举所有最小有效前提子集

    Subsets are visited by increasing size in lexicographic index order;
    supersets of an already found minimal set are skipped. Above `cap` a
    single minimal set is found by deletion and the result is marked
    inexact, unless `strict` is set.

    Raises:
        NotValidError: the full premise set does not entail the conclusion
        CapExceededError: more than `cap` premises with `strict=True`
    """
    problem = _Problem(premises, conclusion, fresh_constant)
    n = len(premises)
    if not problem.valid(range(n)):
        raise NotValidError("premises do not entail the conclusion")

    if n > cap:
        if strict:
            raise CapExceededError(f"{n} premises exceed the enumeration cap of {cap}")
        logger.warning(f"前提数 {n} 超过上限 {cap}, 使用删除法求单个最小集")
        kept = _deletion_minimal(problem, n)
        minimal = [frozenset(problem.labels[i] for i in kept)]
        union = [problem.labels[i] for i in kept]
        return MinimalSetsResult(minimal, union, exact=False)

    found: List[FrozenSet[int]] = []
    for size in range(n + 1):
        for combo in itertools.combinations(range(n), size):
            candidate = frozenset(combo)
            if any(m <= candidate for m in found):
                continue
            if problem.valid(combo):
                found.append(candidate)

    logger.debug(f"最小集枚举: {len(found)} sets, {problem.sat_calls} SAT calls")
    used = set().union(*found) if found else set()
    union = [problem.labels[i] for i in range(n) if i in used]
    minimal = [frozenset(problem.labels[i] for i in m) for m in found]
    return MinimalSetsResult(minimal, union, exact=True)


def prune(
    premises: LabeledPremises,
    conclusion: Formula,
    cap: int = 16,
    strict: bool = False,
    fresh_constant: str = "c0",
) -> LabeledPremises:
    """Keep the premises that occur in some minimal valid subset, in original order."""
    result = minimal_premise_sets(premises, conclusion, cap, strict, fresh_constant)
    keep = set(result.union)
    return [(label, f) for label, f in premises if label in keep]


# ============================================================================
# 模块测试
# ============================================================================

if __name__ == "__main__":
    from fol import parse_formula

    texts = ["L(C)", "P(C)", "P(A)", "∀x [P(x) → M(x)]",
             "∀x∀y [(M(x) ∧ M(y) ∧ L(x)) → L(y)]", "M(O)"]
    premises = [(f"P{i}", parse_formula(t)) for i, t in enumerate(texts, start=1)]
    goal = parse_formula("L(A)")
    print(check_validity(premises, goal).describe())
    print(minimal_premise_sets(premises, goal).to_dict())
