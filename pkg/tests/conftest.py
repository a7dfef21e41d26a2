import pytest

from ends_splitter.ends import make_end_function
from ends_splitter.groups import Presentation, build_net, build_truncation
from ends_splitter.harmonic import solve_dirichlet


@pytest.fixture(scope="session")
def f2():
    return Presentation.free(2)


@pytest.fixture(scope="session")
def z23():
    return Presentation.free_product_of_cyclics([2, 3])


@pytest.fixture(scope="session")
def t_f2_r4(f2):
    return build_truncation(f2, 4)


@pytest.fixture(scope="session")
def t_f2_r6(f2):
    return build_truncation(f2, 6)


@pytest.fixture(scope="session")
def t_f2_r8(f2):
    return build_truncation(f2, 8)


@pytest.fixture(scope="session")
def t_z23_r8(z23):
    return build_truncation(z23, 8)


@pytest.fixture(scope="session")
def t_z23_r10(z23):
    return build_truncation(z23, 10)


@pytest.fixture(scope="session")
def chi_first_letter_r8(t_f2_r8):
    return make_end_function(t_f2_r8, 1, rule="first_letter:a")


@pytest.fixture(scope="session")
def h_first_letter_r8(t_f2_r8, chi_first_letter_r8):
    return solve_dirichlet(t_f2_r8, chi_first_letter_r8)


@pytest.fixture(scope="session")
def net1_f2_r8(t_f2_r8):
    return build_net(t_f2_r8, 1)


@pytest.fixture(scope="session")
def net2_f2_r8(t_f2_r8):
    return build_net(t_f2_r8, 2)
