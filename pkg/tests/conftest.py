import os

import pytest
from hypothesis import HealthCheck, settings

from mosqgame.model import Params

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# caption parameter sets
FIG2 = dict(r=0.5, nu_L=0.067, mu_L=0.62, mu_A=0.04, K_max=2e6, K_min=1e6, k=0.8)
FIG3 = dict(FIG2, K_min=1e5, m=0.3)
FIG4 = dict(r=0.5, nu_L=0.04, mu_L=0.03, mu_A=0.2, K_max=2e6, K_min=1e5, k=0.8, m=0.3)


@pytest.fixture
def fig2():
    return Params.from_flat("constant-payoff", b=10.0, r_c=1.5, r_d=1.0, **FIG2)


@pytest.fixture
def fig4():
    return Params.from_flat("prevalence-dependent", b=1.4, r_c=9000.0, r_d=1.0, **FIG4)


@pytest.fixture
def fig_s():
    return Params.from_flat("intervention", b=10.0, r_c=3.0, r_d=1.5, gamma=0.4, **FIG2)
