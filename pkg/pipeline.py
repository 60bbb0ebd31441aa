"""
重构引擎模块 - 六阶段论证重构循环

设计理念 (CleanRL哲学):
- 单文件自包含: 阶段调度、反馈路由与轨迹记录集中在一个文件
- 透明的处理流程: 每个阶段的输入哈希、原始输出、解析结果和反馈都写入轨迹
- 最小化抽象: 一个引擎类, 每个阶段一个方法
- 便于调试: 轨迹可序列化, 回放模式下逐字节可复现

Stages:
    1 fallacy detection (once, before the loop)
    2 reconstruction -> 3 formalization -> 4 validity + pruning (native solver)
    -> 5 streamlining -> 6 faithfulness judgment
    7 fallacy revision (after N consecutive failed iterations, at most twice)

A formal fallacy in the active fallacy report skips stage 4. Stage 4 never
calls the model; formulas are decided by solver.py.
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from loguru import logger

from config import LLMConfig, PipelineConfig, SolverConfig
from fol import FormulaError, render_formula
from llm_client import BackendError, CompletionRequest, LLMBackend
from logger_config import stage_context
from prompts import (
    ArgumentScheme,
    load_scheme_catalog,
    load_template,
    render_prompt,
    render_scheme_block,
)
from reconstruction import (
    ArgumentInput,
    FaithfulnessVerdict,
    FallacyReport,
    Feedback,
    FeedbackKind,
    Formalization,
    Reconstruction,
)
from response_parser import (
    ParseError,
    parse_faithfulness,
    parse_fallacy,
    parse_formalization,
    parse_reconstruction,
    parse_streamline,
)
from solver import SolverError, check_validity, minimal_premise_sets
from utils import compute_hash, hash_object


# ============================================================================
# 常量
# ============================================================================

class Stage:
    """阶段编号"""
    FALLACY_DETECTION = 1
    RECONSTRUCTION = 2
    FORMALIZATION = 3
    VALIDITY = 4
    STREAMLINING = 5
    FAITHFULNESS = 6
    FALLACY_REVISION = 7

    NAMES = {
        1: "fallacy_detection",
        2: "reconstruction",
        3: "formalization",
        4: "validity",
        5: "streamlining",
        6: "faithfulness",
        7: "fallacy_revision",
    }


class RunStatus:
    CONVERGED = "Converged"
    EXHAUSTED = "Exhausted"
    FAILED = "Failed"


CRITERION_BLOCKS = {
    "accuracy": "criterion_accuracy",
    "completeness": "criterion_completeness",
    "parsimony": "criterion_parsimony",
}


# ============================================================================
# 轨迹
# ============================================================================

@dataclass
class StageRecord:
    """一个阶段的执行记录"""
    stage: int
    prompt_hash: Optional[str] = None  # None for the native stage 4
    raw_response: Optional[str] = None
    parsed: Any = None
    verdicts: Dict[str, Any] = field(default_factory=dict)
    feedback: List[Feedback] = field(default_factory=list)
    reprompts: int = 0
    error: Optional[str] = None

    @property
    def name(self) -> str:
        return Stage.NAMES[self.stage]

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "name": self.name,
            "prompt_hash": self.prompt_hash,
            "raw_response": self.raw_response,
            "parsed": self.parsed,
            "verdicts": self.verdicts,
            "feedback": [f.to_dict() for f in self.feedback],
            "reprompts": self.reprompts,
            "error": self.error,
        }


@dataclass
class IterationRecord:
    index: int
    stages: List[StageRecord] = field(default_factory=list)
    converged: bool = False

    @property
    def stage_ids(self) -> List[int]:
        return [s.stage for s in self.stages]

    @property
    def feedback(self) -> List[Feedback]:
        return [f for s in self.stages for f in s.feedback]

    def record(self, stage: int) -> Optional[StageRecord]:
        for s in self.stages:
            if s.stage == stage:
                return s
        return None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "stages": [s.to_dict() for s in self.stages],
            "converged": self.converged,
        }


@dataclass
class PipelineTrace:
    """
    引擎审计日志 (append-only)

    preamble holds the stage-1 record; iterations hold stages 2-7.
    """
    input: ArgumentInput
    config: Dict[str, Any]
    preamble: List[StageRecord] = field(default_factory=list)
    iterations: List[IterationRecord] = field(default_factory=list)
    status: Optional[str] = None
    fallacy_report: Optional[FallacyReport] = None
    final_reconstruction: Optional[Reconstruction] = None
    final_formalization: Optional[Formalization] = None
    llm_calls: int = 0

    def begin_iteration(self) -> IterationRecord:
        iteration = IterationRecord(index=len(self.iterations) + 1)
        self.iterations.append(iteration)
        return iteration

    def records(self, stage: int) -> List[StageRecord]:
        found = [s for s in self.preamble if s.stage == stage]
        for it in self.iterations:
            found += [s for s in it.stages if s.stage == stage]
        return found

    @property
    def revisions(self) -> List[int]:
        """Iteration indices that ended with a fallacy revision."""
        return [it.index for it in self.iterations if it.record(Stage.FALLACY_REVISION)]

    def to_dict(self) -> dict:
        return {
            "input": self.input.to_dict(),
            "config": self.config,
            "preamble": [s.to_dict() for s in self.preamble],
            "iterations": [it.to_dict() for it in self.iterations],
            "status": self.status,
            "fallacy_report": self.fallacy_report.to_dict() if self.fallacy_report else None,
            "final_reconstruction": self.final_reconstruction.to_dict() if self.final_reconstruction else None,
            "final_formalization": self.final_formalization.to_dict() if self.final_formalization else None,
            "llm_calls": self.llm_calls,
        }

    def trace_hash(self) -> str:
        return hash_object(self.to_dict())


# ============================================================================
# 提示词绑定
# ============================================================================

def _background_block(inp: ArgumentInput) -> str:
    return f"# Background\n{inp.background.strip()}\n\n" if inp.background and inp.background.strip() else ""


def _feedback_block(feedback: List[Feedback]) -> str:
    if not feedback:
        return "None"
    return "\n".join(f"- {f.render()}" for f in feedback)


def _fallacy_note(report: Optional[FallacyReport]) -> str:
    if report is None:
        return "No fallacy analysis is available. Reconstruct the argument in a deductively valid form."
    if report.has_formal:
        return (
            f"{report.render()}\n\n"
            "The argument is formally fallacious. Reconstruct the inference as the author made it; "
            "do not turn it into a deductively valid argument."
        )
    if report.informal:
        return (
            f"{report.render()}\n\n"
            "The argument has informal fallacies but no formal one. Reconstruct it in a deductively valid "
            "form that still shows these weaknesses; add a connecting premise where the reasoning is not deductive."
        )
    return (
        "No fallacy was detected. Reconstruct the argument in a deductively valid form; "
        "add a connecting premise where the reasoning is not deductive."
    )


def _verdict_sections(criteria: Tuple[str, ...]) -> str:
    blocks = [
        f"# {c.capitalize()}\n[Yes or No, then what is wrong and how to fix it]\n\n"
        for c in criteria if c in CRITERION_BLOCKS
    ]
    return "".join(blocks)


def _criteria_block(criteria: Tuple[str, ...]) -> str:
    texts = [load_template(CRITERION_BLOCKS[c]).body.strip() for c in criteria if c in CRITERION_BLOCKS]
    if not texts:
        return ""
    return "Judge it against the following criteria:\n" + "\n".join(texts) + "\n"


# ============================================================================
# 引擎
# ============================================================================

class GAAREngine:
    """
    论证重构引擎

    使用方式:
        engine = GAAREngine(PipelineConfig(), backend)
        reconstruction, formalization, trace = engine.run(ArgumentInput(topic, argument))
    """

    def __init__(
        self,
        config: PipelineConfig,
        backend: LLMBackend,
        llm_config: Optional[LLMConfig] = None,
        solver_config: Optional[SolverConfig] = None,
        catalog: Optional[List[ArgumentScheme]] = None,
    ):
        self.config = config.check()
        self.backend = backend
        self.llm_config = llm_config or LLMConfig()
        self.solver_config = solver_config or SolverConfig()
        self.catalog = catalog if catalog is not None else load_scheme_catalog(config.scheme_theory)
        self._trace: Optional[PipelineTrace] = None

    # ------------------------------------------------------------------
    # LLM调用
    # ------------------------------------------------------------------

    def _complete(self, template: str, bindings: Dict[str, str], prompt: str) -> str:
        request = CompletionRequest(
            template=template,
            bindings=bindings,
            prompt=prompt,
            model=self.llm_config.model,
            temperature=self.llm_config.temperature,
            max_tokens=self.llm_config.max_tokens,
        )
        if self._trace is not None:
            self._trace.llm_calls += 1
        return self.backend.complete(request).text

    def _ask(self, record: StageRecord, template_name: str, bindings: Dict[str, str], parse: Callable[[str], Any]):
        """Render, complete, parse; on ParseError reprompt with a format reminder."""
        prompt = render_prompt(load_template(template_name), bindings)
        record.prompt_hash = compute_hash(prompt)
        record.raw_response = self._complete(template_name, bindings, prompt)
        try:
            return parse(record.raw_response)
        except ParseError as e:
            error = e

        for _ in range(self.config.reprompt_budget):
            logger.warning(f"阶段 {record.name} 输出格式错误, 重新提示: {error}")
            reminder = render_prompt(load_template("format_reminder"), {"ERROR": str(error)})
            record.reprompts += 1
            record.raw_response = self._complete(
                f"{template_name}+format_reminder", {**bindings, "ERROR": str(error)}, f"{prompt}\n\n{reminder}"
            )
            try:
                return parse(record.raw_response)
            except ParseError as e:
                error = e
        record.error = str(error)
        raise error

    def _ask_or_fail(self, record: StageRecord, template_name: str, bindings: Dict[str, str], parse):
        try:
            return self._ask(record, template_name, bindings, parse)
        except ParseError as e:
            raise BackendError(
                f"stage {record.stage} ({record.name}): unreadable response after "
                f"{record.reprompts} reprompt(s): {e}"
            ) from e

    # ------------------------------------------------------------------
    # 各阶段
    # ------------------------------------------------------------------

    def detect_fallacy(self, inp: ArgumentInput, record: Optional[StageRecord] = None) -> FallacyReport:
        record = record or StageRecord(Stage.FALLACY_DETECTION)
        bindings = {"TOPIC": inp.topic, "BACKGROUND": _background_block(inp), "ARGUMENT": inp.argument}
        report = self._ask_or_fail(record, "fallacy_detection", bindings, parse_fallacy)
        record.parsed = report.to_dict()
        record.verdicts = {"formal": report.has_formal, "none_detected": report.none_detected}
        return report

    def revise_fallacy(self, inp: ArgumentInput, report: FallacyReport, last: Reconstruction,
                       feedback: List[Feedback], record: Optional[StageRecord] = None) -> FallacyReport:
        record = record or StageRecord(Stage.FALLACY_REVISION)
        bindings = {
            "TOPIC": inp.topic,
            "BACKGROUND": _background_block(inp),
            "ARGUMENT": inp.argument,
            "FALLACY_REPORT": report.render(),
            "RECONSTRUCTION": last.render(),
            "FEEDBACK": _feedback_block(feedback),
        }
        revised = self._ask_or_fail(record, "fallacy_revision", bindings, parse_fallacy)
        record.parsed = revised.to_dict()
        record.verdicts = {"formal": revised.has_formal, "none_detected": revised.none_detected}
        record.feedback = [Feedback(
            FeedbackKind.FALLACY_REVISION,
            f"The fallacy analysis was revised; the argument is now treated as {revised.arg_type()}.",
        )]
        return revised

    def reconstruct(self, inp: ArgumentInput, report: Optional[FallacyReport], feedback: List[Feedback],
                    previous: Optional[Reconstruction] = None, record: Optional[StageRecord] = None) -> Reconstruction:
        record = record or StageRecord(Stage.RECONSTRUCTION)
        bindings = {
            "TOPIC": inp.topic,
            "BACKGROUND": _background_block(inp),
            "ARGUMENT": inp.argument,
            "SCHEMES": render_scheme_block(self.catalog) if self.config.scheme_instruction else "",
            "FALLACY_NOTE": _fallacy_note(report),
            "PREVIOUS_RECONSTRUCTION": previous.render() if previous else "None",
            "FEEDBACK": _feedback_block(feedback),
        }
        reconstruction = self._ask_or_fail(record, "reconstruction", bindings, parse_reconstruction)
        record.parsed = reconstruction.to_dict()
        return reconstruction

    def formalize(self, reconstruction: Reconstruction, record: Optional[StageRecord] = None) -> Formalization:
        """Raises ParseError (incl. FormalizationError / KeyCoverageError) after the reprompt budget."""
        record = record or StageRecord(Stage.FORMALIZATION)
        bindings = {
            "PREMISES": reconstruction.render_premises(mark_implicit=False),
            "CONCLUSION": reconstruction.conclusion,
        }
        labels = reconstruction.labels
        formalization = self._ask(record, "formalization", bindings, lambda t: parse_formalization(t, labels))
        record.parsed = formalization.to_dict()
        return formalization

    def judge_validity(self, formalization: Formalization, record: Optional[StageRecord] = None
                       ) -> Tuple[bool, Formalization, List[Feedback]]:
        """
        Stage 4: 有效性判定与前提剪枝 (本地求解器)

        Returns:
            (valid, formalization to continue with, feedback)
        """
        record = record or StageRecord(Stage.VALIDITY)
        fresh = self.solver_config.fresh_constant
        try:
            verdict = check_validity(formalization.premises, formalization.conclusion, fresh)
        except (SolverError, FormulaError) as e:
            record.error = str(e)
            record.verdicts = {"valid": False, "fragment_error": True}
            record.feedback = [Feedback(
                FeedbackKind.INVALIDITY,
                f"The formalization could not be checked: {e}. Restate the premises so that no "
                "existential claim depends on a universally quantified variable.",
            )]
            return False, formalization, record.feedback

        record.verdicts = {"valid": verdict.valid}
        if not verdict.valid:
            record.parsed = verdict.to_dict()
            record.feedback = [Feedback(
                FeedbackKind.INVALIDITY,
                f"The premises do not deductively imply the conclusion ({verdict.describe()}). "
                "Add the missing implicit premises or correct the inference.",
            )]
            record.feedback += self._solver_additions(formalization)
            return False, formalization, record.feedback

        if not self.config.pruning:
            record.parsed = {"kept": formalization.labels, "pruned": []}
            return True, formalization, []

        result = minimal_premise_sets(
            formalization.premises,
            formalization.conclusion,
            cap=self.config.premise_cap,
            strict=self.solver_config.strict_cap,
            fresh_constant=fresh,
        )
        if not result.union:
            # conclusion valid on its own: nothing to prune against
            kept = formalization
        else:
            kept = formalization.restricted(result.union)
        pruned = [l for l in formalization.labels if l not in kept.labels]
        record.parsed = {"kept": kept.labels, "pruned": pruned, "minimal_sets": result.to_dict()}
        record.verdicts["exact"] = result.exact
        if pruned:
            logger.info(f"剪枝移除前提: {pruned}")
        return True, kept, []

    def _solver_additions(self, formalization: Formalization) -> List[Feedback]:
        if not formalization.additions:
            return []
        rendered = "; ".join(f"{l}: {render_formula(f)}" for l, f in formalization.additions)
        try:
            extended = formalization.premises + formalization.additions
            valid = check_validity(extended, formalization.conclusion, self.solver_config.fresh_constant).valid
            outcome = "would make the argument valid" if valid else "would still leave the argument invalid"
        except (SolverError, FormulaError) as e:
            outcome = f"could not be checked ({e})"
        return [Feedback(
            FeedbackKind.SOLVER_ADDITION,
            f"The formalization proposed additional premises ({rendered}); adding them {outcome}. "
            "Add corresponding premises only if the argument implicitly relies on them.",
        )]

    def streamline(self, formalization: Formalization, template: Optional[Reconstruction] = None,
                   record: Optional[StageRecord] = None) -> Reconstruction:
        record = record or StageRecord(Stage.STREAMLINING)
        bindings = {
            "DEFINITION": formalization.render_keys(),
            "PREMISES": formalization.render_premises(),
            "CONCLUSION": render_formula(formalization.conclusion),
        }
        labels = formalization.labels
        streamlined = self._ask_or_fail(
            record, "streamlining", bindings, lambda t: parse_streamline(t, template, labels)
        )
        record.parsed = streamlined.to_dict()
        return streamlined

    def judge_faithfulness(self, inp: ArgumentInput, streamlined: Reconstruction, arg_type: str,
                           criteria: Tuple[str, ...], record: Optional[StageRecord] = None
                           ) -> Tuple[FaithfulnessVerdict, List[Feedback]]:
        if not criteria:
            raise ValueError("judge_faithfulness needs at least one criterion")
        record = record or StageRecord(Stage.FAITHFULNESS)
        bindings = {
            "TOPIC": inp.topic,
            "ARGUMENT": inp.argument,
            "PREMISES": streamlined.render_premises(mark_implicit=False),
            "CONCLUSION": streamlined.conclusion,
            "ARG_TYPE": arg_type,
            "CRITERIA": _criteria_block(criteria),
            "VERDICT_SECTIONS": _verdict_sections(criteria),
        }
        verdict = self._ask_or_fail(record, "faithfulness", bindings, lambda t: parse_faithfulness(t, criteria))
        feedback = [] if verdict.converged else verdict.feedback()
        record.parsed = verdict.to_dict()
        record.verdicts = dict(verdict.verdicts, overall=verdict.overall)
        record.feedback = feedback
        return verdict, feedback

    # ------------------------------------------------------------------
    # 主循环
    # ------------------------------------------------------------------

    def _arg_type(self, report: Optional[FallacyReport]) -> str:
        if report is None:
            return "an argument whose fallacies were not analysed"
        return report.arg_type()

    def run(self, inp: ArgumentInput) -> Tuple[Reconstruction, Optional[Formalization], PipelineTrace]:
        config = self.config
        criteria = config.active_criteria
        trace = PipelineTrace(input=inp, config=_config_snapshot(config))
        self._trace = trace

        try:
            with logger.contextualize(run=inp.topic[:24] or "-"):
                return self._run(inp, trace, criteria)
        except BackendError as e:
            trace.status = RunStatus.FAILED
            e.trace = trace
            logger.error(f"重构失败 ({inp.topic}): {e}")
            raise
        finally:
            self._trace = None

    def _run(self, inp: ArgumentInput, trace: PipelineTrace, criteria: Tuple[str, ...]):
        config = self.config
        report: Optional[FallacyReport] = None
        if config.fallacy_path:
            record = StageRecord(Stage.FALLACY_DETECTION)
            trace.preamble.append(record)
            with stage_context("fallacy detection"):
                report = self.detect_fallacy(inp, record)
            logger.info(f"谬误检测: {report.arg_type()}")
        trace.fallacy_report = report

        feedback: List[Feedback] = []
        since_revision: List[Feedback] = []
        previous: Optional[Reconstruction] = None
        failures = 0
        revisions = 0
        best: Optional[Tuple[int, Reconstruction, Optional[Formalization]]] = None

        for _ in range(config.max_iterations):
            iteration = trace.begin_iteration()
            k = iteration.index
            logger.info(f"迭代 {k}/{config.max_iterations} 开始")

            # Stage 2
            record = StageRecord(Stage.RECONSTRUCTION)
            iteration.stages.append(record)
            reconstruction = self.reconstruct(inp, report, feedback, previous, record)
            candidate: Tuple[Reconstruction, Optional[Formalization]] = (reconstruction, None)
            failed = len(criteria) + 1

            # Stage 3
            record = StageRecord(Stage.FORMALIZATION)
            iteration.stages.append(record)
            try:
                formalization: Optional[Formalization] = self.formalize(reconstruction, record)
            except ParseError as e:
                formalization = None
                line = getattr(e, "line", "")
                detail = f" Offending line: {line}" if line else ""
                record.feedback = [Feedback(
                    FeedbackKind.INVALIDITY,
                    f"The reconstruction could not be formalized: {e}.{detail}",
                )]
                logger.warning(f"迭代 {k}: 形式化失败: {e}")

            proceed = formalization is not None
            if proceed and not (report and report.has_formal):
                # Stage 4
                record = StageRecord(Stage.VALIDITY)
                iteration.stages.append(record)
                valid, formalization, _ = self.judge_validity(formalization, record)
                logger.info(f"迭代 {k}: 有效性 = {'Valid' if valid else 'Invalid'}")
                candidate = (reconstruction, formalization)
                proceed = valid

            if proceed:
                # Stage 5
                record = StageRecord(Stage.STREAMLINING)
                iteration.stages.append(record)
                streamlined = self.streamline(formalization, reconstruction, record)
                candidate = (streamlined, formalization)
                previous_for_next = streamlined

                # Stage 6
                if criteria:
                    record = StageRecord(Stage.FAITHFULNESS)
                    iteration.stages.append(record)
                    verdict, _ = self.judge_faithfulness(inp, streamlined, self._arg_type(report), criteria, record)
                    failed = len(verdict.failed) or (0 if verdict.overall else 1)
                    iteration.converged = verdict.converged
                    logger.info(f"迭代 {k}: 忠实度 {verdict.verdicts} (overall={verdict.overall})")
                else:
                    failed = 0
                    iteration.converged = True
            else:
                previous_for_next = reconstruction

            if best is None or failed <= best[0]:
                best = (failed, candidate[0], candidate[1])

            if iteration.converged:
                trace.status = RunStatus.CONVERGED
                trace.final_reconstruction, trace.final_formalization = candidate
                logger.success(f"收敛于第 {k} 次迭代")
                return candidate[0], candidate[1], trace

            feedback = iteration.feedback
            since_revision += feedback
            failures += 1

            if (config.fallacy_path and revisions < config.max_fallacy_revisions
                    and failures == config.fallacy_revision_threshold and k < config.max_iterations):
                record = StageRecord(Stage.FALLACY_REVISION)
                iteration.stages.append(record)
                with stage_context("fallacy revision", iteration=k):
                    report = self.revise_fallacy(inp, report or FallacyReport(), previous_for_next,
                                                 _dedupe(since_revision), record)
                trace.fallacy_report = report
                feedback = feedback + record.feedback
                revisions += 1
                failures = 0
                since_revision = []

            previous = previous_for_next

        trace.status = RunStatus.EXHAUSTED
        _, trace.final_reconstruction, trace.final_formalization = best
        logger.warning(f"达到最大迭代次数 {config.max_iterations}, 返回最佳结果")
        return trace.final_reconstruction, trace.final_formalization, trace


def _dedupe(feedback: List[Feedback]) -> List[Feedback]:
    seen, out = set(), []
    for f in feedback:
        key = (f.kind, f.message)
        if key not in seen:
            seen.add(key)
            out.append(f)
    return out


def _config_snapshot(config: PipelineConfig) -> Dict[str, Any]:
    data = asdict(config)
    data["criteria"] = list(config.criteria)
    return data


# ============================================================================
# 函数式接口
# ============================================================================

def run_gaar(inp: ArgumentInput, config: PipelineConfig, backend: LLMBackend,
             llm_config: Optional[LLMConfig] = None, solver_config: Optional[SolverConfig] = None
             ) -> Tuple[Reconstruction, Optional[Formalization], PipelineTrace]:
    """运行完整的重构循环"""
    return GAAREngine(config, backend, llm_config, solver_config).run(inp)


def detect_fallacy(inp: ArgumentInput, backend: LLMBackend, config: Optional[PipelineConfig] = None) -> FallacyReport:
    return GAAREngine(config or PipelineConfig(), backend).detect_fallacy(inp)


def reconstruct(inp: ArgumentInput, backend: LLMBackend, report: Optional[FallacyReport] = None,
                feedback: Optional[List[Feedback]] = None, config: Optional[PipelineConfig] = None,
                catalog: Optional[List[ArgumentScheme]] = None) -> Reconstruction:
    engine = GAAREngine(config or PipelineConfig(), backend, catalog=catalog)
    return engine.reconstruct(inp, report, feedback or [])


def formalize(reconstruction: Reconstruction, backend: LLMBackend,
              config: Optional[PipelineConfig] = None) -> Formalization:
    return GAAREngine(config or PipelineConfig(), backend).formalize(reconstruction)


def streamline(formalization: Formalization, backend: LLMBackend, template: Optional[Reconstruction] = None,
               config: Optional[PipelineConfig] = None) -> Reconstruction:
    return GAAREngine(config or PipelineConfig(), backend).streamline(formalization, template)


def judge_faithfulness(inp: ArgumentInput, streamlined: Reconstruction, report: Optional[FallacyReport],
                       backend: LLMBackend, criteria: Tuple[str, ...] = ("accuracy", "completeness", "parsimony"),
                       config: Optional[PipelineConfig] = None) -> Tuple[FaithfulnessVerdict, List[Feedback]]:
    engine = GAAREngine(config or PipelineConfig(), backend)
    return engine.judge_faithfulness(inp, streamlined, engine._arg_type(report), tuple(criteria))


# ============================================================================
# 基线: 单次提示重构
# ============================================================================

def run_baseline(inp: ArgumentInput, backend: LLMBackend, config: Optional[PipelineConfig] = None,
                 llm_config: Optional[LLMConfig] = None) -> Reconstruction:
    """One-prompt reconstruction used as an external method in evaluations."""
    engine = GAAREngine(config or PipelineConfig(), backend, llm_config)
    record = StageRecord(Stage.RECONSTRUCTION)
    bindings = {
        "TOPIC": inp.topic,
        "BACKGROUND": _background_block(inp),
        "ARGUMENT": inp.argument,
        "SCHEMES": render_scheme_block(engine.catalog) if engine.config.scheme_instruction else "",
    }
    return engine._ask_or_fail(record, "baseline_reconstruction", bindings, parse_reconstruction)


if __name__ == "__main__":
    from llm_client import ScriptedBackend

    backend = ScriptedBackend([
        "# Formal Fallacy\nNone\n\n# Informal Fallacies\nNone",
        "# Argument Reconstruction\n\n## Premises\nP1: It rains.\nP2: (Implicit) If it rains, the street is wet.\n\n"
        "## Conclusion\nThe street is wet.",
        "## Defined Variables/Predicates\nR = it rains\nW = the street is wet\n\n"
        "## Formalized Premises\nP1: R\nP2: R → W\n\n## Formalized Conclusion\nW",
        "### NL Premises\nP1: It rains.\nP2: If it rains, the street is wet.\n\n### NL Conclusion\nThe street is wet.",
        "# Reasoning\nFine.\n\n# Faithfulness\nYes",
    ])
    recon, formal, trace = run_gaar(ArgumentInput("weather", "It rains, so the street is wet."),
                                    PipelineConfig(), backend)
    print(trace.status, recon.render(), sep="\n")
