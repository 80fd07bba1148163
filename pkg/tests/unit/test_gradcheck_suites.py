import pytest

from deskdet.gradcheck_suites import CASES, SUITES, GradCase, run_case, run_suites

ACCEPTANCE_SEEDS = 20


@pytest.mark.timeout(600)
@pytest.mark.parametrize("case", CASES, ids=lambda c: f"{c.suite}-{c.name}")
def test_case_passes_on_twenty_seeds(case: GradCase) -> None:
    result = run_case(case, seeds=ACCEPTANCE_SEEDS)
    assert result.seeds == ACCEPTANCE_SEEDS
    assert result.passed, f"{case.name}: {result.max_rel_err:.2e} > {case.tolerance:.0e}"


def test_attention_suite_covers_every_block() -> None:
    results = run_suites(["attention"], seeds=1)
    assert {r.name for r in results} == {"bra", "bra_sparse", "se", "eca", "cbam", "ca"}
    assert all(r.passed for r in results)


def test_results_are_sorted_worst_first() -> None:
    results = run_suites(["blocks"], seeds=1)
    ratios = [r.max_rel_err / r.tolerance for r in results]
    assert ratios == sorted(ratios, reverse=True)


def test_every_case_belongs_to_a_known_suite() -> None:
    assert {c.suite for c in CASES} == set(SUITES)
    assert len({c.name for c in CASES}) == len(CASES)


def test_unknown_suite_is_rejected() -> None:
    with pytest.raises(ValueError, match="unknown gradient suites"):
        run_suites(["heads"])
