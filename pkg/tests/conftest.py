import pytest

from optomfb.params import FeedbackScheme, FeedbackSpec, SystemParams
from optomfb.spectra import FilterSpec, QuadratureConfig


@pytest.fixture(scope="session")
def fig2_params() -> SystemParams:
    return SystemParams(gamma_m=1.5e-5, n_th=833.0,
                        kappa_a=0.01, Delta_a=1.0, G_a=0.065,
                        kappa_b=0.01, Delta_b=-1.0, G_b=0.04)


@pytest.fixture(scope="session")
def fig5_params() -> SystemParams:
    return SystemParams(gamma_m=1.5e-5, n_th=833.0,
                        kappa_a=0.01, Delta_a=1.0, G_a=0.065,
                        kappa_b=0.01, Delta_b=-1.0, G_b=0.04,
                        kappa_c=0.01, Delta_c=-1.0, G_c=0.05)


@pytest.fixture(scope="session")
def vacuum_params() -> SystemParams:
    return SystemParams(gamma_m=1.5e-5, n_th=0.0,
                        kappa_a=0.01, Delta_a=1.0, G_a=0.0,
                        kappa_b=0.01, Delta_b=-1.0, G_b=0.0)


@pytest.fixture(scope="session")
def paper_filters() -> tuple[FilterSpec, FilterSpec]:
    return (FilterSpec(Omega=1.0, tau=2000.0), FilterSpec(Omega=-1.0, tau=2000.0))


@pytest.fixture(scope="session")
def fb_off() -> FeedbackSpec:
    return FeedbackSpec(FeedbackScheme.NONE)


@pytest.fixture(scope="session")
def fig3_feedback() -> FeedbackSpec:
    return FeedbackSpec(FeedbackScheme.MODE_B_HOMODYNE, g_cd=0.047, r=0.56, sigma=0.92)


@pytest.fixture(scope="session")
def quad() -> QuadratureConfig:
    return QuadratureConfig()


ETA_FIG3 = 0.8910448503742513  # 0.9 * exp(-0.005*20/10)
