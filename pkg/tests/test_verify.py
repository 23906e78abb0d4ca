import pytest

from mixedap.verify import SUITES, run_suites, suite_identity


def test_identity_suite():
    res = suite_identity()
    assert res.passed and res.checks > 0
    assert res.line().startswith("identity: PASS")


@pytest.mark.parametrize("name", ["duality", "jensen", "sparsity", "maxnorm", "interp"])
def test_quick_suites_pass(name):
    (res,) = run_suites([name], seed=1, size=10)
    assert res.passed, res.detail


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suites(["nope"])


def test_suite_registry():
    assert {"identity", "duality", "jensen", "sparsity", "maxnorm", "corona", "testing", "theorems",
            "interp"} <= set(SUITES)
