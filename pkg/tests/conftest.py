import pytest

from chaform.amr_graph import parse_penman

ROW_A = "( a / alpha :arg0 ( b / beta ) :arg1 ( g / gamma :arg2 b ) )"
LIKE_TOUR = ("( l / like-01 :arg0 ( p / person :arg1-of ( e / employ-01 ) ) "
             ":arg1 ( t / tour-01 :arg0 p :arg1 ( c / city ) ) )")

SINGLE_TOKENS = "( alpha :arg0 ( beta ) :arg1 ( gamma :arg2 beta ) )".split()
DOUBLE_TOKENS = "( alpha :arg0 ( beta )₁ )₂ :arg1 ( gamma :arg2 beta )₁ )₂ )₁ )₂".split()
BOTTOMUP_TOKENS = "alpha :arg0 beta ■ :arg1 gamma :arg2 beta ■ ■".split()
SDFS_ROW = "( <R0> alpha :arg0 ( <R1> beta ) :arg1 ( <R2> gamma :arg2 <R1> ) )"

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def row_a():
    return parse_penman(ROW_A)


@pytest.fixture
def like_tour():
    return parse_penman(LIKE_TOUR)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
