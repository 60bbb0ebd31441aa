"""
测试公共夹具

Shared inputs: the contraception/abortion walkthrough (argument, scripted
stage responses, problem files) and a minimal one-iteration script.
"""

from pathlib import Path

import pytest

from reconstruction import ArgumentInput

FIXTURES = Path(__file__).resolve().parent / "fixtures"

ANALOGY_ARGUMENT = (
    "We allow contraception. Abortion is, in effect, no different - the prevention of the "
    "development of a potential human being. In the case of the 'morning after pill', the "
    "analogy is even closer. If we allow these measures, then we should also allow abortion."
)

NO_FALLACY = "# Formal Fallacy\nNone\n\n# Informal Fallacies\nNone"
RAIN_RECONSTRUCTION = (
    "# Argument Reconstruction\n\n## Premises\nP1: It rains.\n"
    "P2: (Implicit) If it rains, the street is wet.\n\n## Conclusion\nThe street is wet."
)
RAIN_FORMALIZATION = (
    "## Defined Variables/Predicates\nR = it rains\nW = the street is wet\n\n"
    "## Formalized Premises\nP1: R\nP2: R → W\n\n## Formalized Conclusion\nW"
)
RAIN_STREAMLINED = (
    "### NL Premises\nP1: It rains.\nP2: If it rains, the street is wet.\n\n"
    "### NL Conclusion\nThe street is wet."
)
ALL_YES = "# Reasoning\nFaithful.\n\n# Accuracy\nYes\n\n# Completeness\nYes\n\n# Parsimony\nYes\n\n# Faithfulness\nYes"


@pytest.fixture
def analogy_input() -> ArgumentInput:
    return ArgumentInput(topic="Abortion on demand", argument=ANALOGY_ARGUMENT)


@pytest.fixture
def script_path() -> Path:
    return FIXTURES / "contraception_script.jsonl"


@pytest.fixture
def rain_script():
    """Stage 1, 2, 3, 5, 6 responses that converge in one iteration."""
    return [NO_FALLACY, RAIN_RECONSTRUCTION, RAIN_FORMALIZATION, RAIN_STREAMLINED, ALL_YES]
