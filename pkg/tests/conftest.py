import pytest

from causalcheck import Design, StratifiedStudy, Stratum, TwoByTwoTable


def table(a, b, c, d, design=Design.COHORT):
    return TwoByTwoTable(a=a, b=b, c=c, d=d, design=design)


def single_study(a, b, c, d, design=Design.COHORT, study_id="s1"):
    return StratifiedStudy(
        study_id=study_id, strata=(Stratum((), table(a, b, c, d, design)),)
    )


def stratified_study(cells, design=Design.COHORT, study_id="s1"):
    strata = tuple(
        Stratum((("level", f"g{i}"),), table(*cell, design))
        for i, cell in enumerate(cells)
    )
    return StratifiedStudy(study_id=study_id, strata=strata)


@pytest.fixture
def headline_table():
    # 25 and 5 cases per 1000: RR 5.0, PDE 0.8
    return table(25, 975, 5, 995)
