import pytest

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}

TITLES = {
    1: "RP verdict, counterexample: Cantor diffusion Fails with exact zero-set measure 1/2",
    2: "RP verdict, positives: sticky BM, Feller-McKean and OU Hold",
    3: "RP verdict, absorbed start is TriviallyHolds",
    4: "Cantor construction: q' = d_G, strict increase, Lipschitz",
    5: "Exit probability: BM and Cantor diffusion within 3 stderr",
    6: "Exit time: BM and sticky BM within 3 stderr of the Green target",
    7: "Martingale: s(X stopped) at 4 checkpoints for BM, sticky BM, Cantor",
    8: "Sticky characteristics: QV vs time off zero <= 5%, zero drift",
    9: "Sticky occupation identity within 15%, monotone in rho",
    10: "Feller-McKean atom-set occupation >= 0.95, monotone under doubling",
    11: "Determinism: byte-identical reruns, worker-count independence",
}


@pytest.fixture
def acceptance():
    def record(criterion: int, passed: bool, detail: str = ""):
        ACCEPTANCE[criterion] = (bool(passed), detail)
        line = f"[criterion {criterion:2d}] {'PASS' if passed else 'FAIL'} {TITLES[criterion]} {detail}"
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(TITLES):
        if k in ACCEPTANCE:
            ok, detail = ACCEPTANCE[k]
            terminalreporter.write_line(f"[criterion {k:2d}] {'PASS' if ok else 'FAIL'} {TITLES[k]}  {detail}")
        else:
            terminalreporter.write_line(f"[criterion {k:2d}] NOT RUN {TITLES[k]}")
