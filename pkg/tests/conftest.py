import hypothesis
import numpy as np
import pytest

from mmodecomp.koper_model import KoperParams
from mmodecomp.map_fit import fit_piecewise
from mmodecomp.mmo_analysis import GlobalMapModel
from mmodecomp.singular_maps import (
    compute_m_a_plus,
    compute_m_b,
    compute_m_f,
    compute_m_j,
    strong_canard,
)

hypothesis.settings.register_profile(
    "ci", max_examples=100, deadline=None,
    suppress_health_check=[hypothesis.HealthCheck.too_slow])
hypothesis.settings.load_profile("ci")


@pytest.fixture(scope="session")
def params7():
    return KoperParams(lam=-7.0)


@pytest.fixture(scope="session")
def canard7(params7):
    return strong_canard(params7)


@pytest.fixture(scope="session")
def sample_m_j7(params7):
    return compute_m_j(params7)


@pytest.fixture(scope="session")
def sample_m_a7(params7):
    return compute_m_a_plus(params7)


@pytest.fixture(scope="session")
def sample_m_f7(params7, canard7):
    return compute_m_f(params7, canard7)


@pytest.fixture(scope="session")
def sample_m_b7(params7, canard7):
    return compute_m_b(params7, canard7)


@pytest.fixture(scope="session")
def fit_m_j7(sample_m_j7):
    return fit_piecewise(sample_m_j7, 1)


@pytest.fixture(scope="session")
def fit_m_a7(sample_m_a7):
    return fit_piecewise(sample_m_a7, 2)


@pytest.fixture(scope="session")
def fit_m_f7(sample_m_f7):
    return fit_piecewise(sample_m_f7, (1, 2))


@pytest.fixture(scope="session")
def fit_m_b7(sample_m_b7):
    return fit_piecewise(sample_m_b7, (2, 1))


@pytest.fixture(scope="session")
def model7(params7):
    return GlobalMapModel.build(params7)


FN_TABLE_M0 = (-0.015, -0.01, -0.005, -0.0025, -0.001, 0.0)
SH_TABLE_M0 = (0.0, 0.01, 0.025, 0.05, 0.075, 0.1)


@pytest.fixture(scope="session")
def fn_table_runs():
    from mmodecomp.hybrid import (FoldedNodeNF, GlobalReturnModel,
                                  SectionPair, run_hybrid)
    nf = FoldedNodeNF(eps=0.01, mu=0.006)
    return {
        m0: run_hybrid(nf, SectionPair(), GlobalReturnModel(m1=0.1, m0=m0),
                       (0.01, 0.15), n_returns=80)
        for m0 in FN_TABLE_M0
    }


@pytest.fixture(scope="session")
def sh_table_runs():
    from mmodecomp.hybrid import (GlobalReturnModel, SectionPair,
                                  SingularHopfNF, run_hybrid)
    nf = SingularHopfNF(eps=0.01, nu=0.01, a=0.5, b=-1.0, c=1.0)
    return {
        m0: run_hybrid(nf, SectionPair(), GlobalReturnModel(m1=0.1, m0=m0),
                       (0.01, 0.15), n_returns=80)
        for m0 in SH_TABLE_M0
    }


@pytest.fixture(scope="session")
def chaos_run():
    from mmodecomp.hybrid import (GlobalReturnModel, SectionPair,
                                  SingularHopfNF, run_hybrid)
    nf = SingularHopfNF(eps=0.01, nu=0.01, a=0.5, b=-1.0, c=1.0)
    model = GlobalReturnModel(m2=3.0, m1=0.2, m0=-0.8)
    return run_hybrid(nf, SectionPair(), model, (0.01, 0.15),
                      n_returns=500, max_period=20)
