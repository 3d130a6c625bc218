import numpy as np
import pytest
from hypothesis import given, strategies as st

from ptmoments.linalg import (Bipartition, DensityOperator, NonHermitianError, PureState,
                              hermitian_spectrum, kron_all, matrix_moments, partial_trace,
                              partial_trace_matrix, partial_transpose, power_traces,
                              random_state, random_unitary, read_qdm, reduced_density_pure,
                              write_qdm)

splits = st.tuples(st.integers(1, 3), st.integers(1, 3)).map(lambda t: Bipartition(*t))


def test_bipartition_limits():
    with pytest.raises(ValueError):
        Bipartition(0, 2)
    with pytest.raises(ValueError):
        Bipartition(8, 7)
    bp = Bipartition(2, 3)
    assert (bp.n, bp.dim, bp.dim_a, bp.dim_b) == (5, 32, 4, 8)


def test_density_rejects_non_hermitian():
    with pytest.raises(NonHermitianError):
        DensityOperator(np.triu(np.ones((4, 4))), Bipartition(1, 1))
    with pytest.raises(ValueError):
        DensityOperator(np.eye(3), Bipartition(1, 1))


def test_density_is_read_only():
    rho = DensityOperator(np.eye(4) / 4, Bipartition(1, 1))
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1


def test_partial_transpose_product_state(rng):
    a = random_state(Bipartition(1, 1), rng).matrix[:2, :2]
    a = a / np.trace(a)
    b = np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]])
    rho = DensityOperator(np.kron(a, b), Bipartition(1, 1))
    assert np.allclose(partial_transpose(rho).matrix, np.kron(a, b.T))


@given(splits, st.integers(0, 2**32 - 1))
def test_partial_transpose_involution_and_trace(bp, seed):
    rho = random_state(bp, np.random.default_rng(seed))
    pt = partial_transpose(rho)
    assert np.allclose(partial_transpose(pt).matrix, rho.matrix)
    assert np.isclose(pt.trace(), 1.0)
    # p2 is invariant under partial transposition
    assert np.isclose(np.sum(np.abs(pt.matrix) ** 2), np.sum(np.abs(rho.matrix) ** 2))


def test_partial_transpose_bell_spectrum():
    psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    rho = DensityOperator(np.outer(psi, psi), Bipartition(1, 1))
    assert np.allclose(hermitian_spectrum(partial_transpose(rho)), [0.5, 0.5, 0.5, -0.5])


def test_partial_trace_matches_kron(rng):
    mats = [random_state(Bipartition(1, 1), rng).matrix[:2, :2] for _ in range(3)]
    mats = [m / np.trace(m) for m in mats]
    full = kron_all(mats)
    assert np.allclose(partial_trace_matrix(full, 3, [0, 2]), np.kron(mats[0], mats[2]))
    assert np.allclose(partial_trace_matrix(full, 3, [1]), mats[1])
    red = partial_trace(DensityOperator(full, Bipartition(1, 2)), [0, 1])
    assert red.bipartition == Bipartition(1, 1)
    with pytest.raises(ValueError):
        partial_trace(DensityOperator(full, Bipartition(1, 2)), [1])


def test_reduced_density_pure_agrees(rng):
    psi = rng.normal(size=32) + 1j * rng.normal(size=32)
    psi /= np.linalg.norm(psi)
    full = np.outer(psi, psi.conj())
    for keep in ([0, 3], [1, 2, 4], [4]):
        assert np.allclose(reduced_density_pure(psi, 5, keep), partial_trace_matrix(full, 5, keep))


def test_power_traces_match_spectrum(rng):
    rho = partial_transpose(random_state(Bipartition(2, 2), rng))
    ev = hermitian_spectrum(rho)
    p = matrix_moments(rho, 5)
    assert np.allclose(p.values, [np.sum(ev**k) for k in range(1, 6)])
    assert np.allclose(power_traces(np.zeros((0, 0)), 3), 0)


def test_random_unitary_is_unitary(rng):
    u = random_unitary(8, rng)
    assert np.allclose(u @ u.conj().T, np.eye(8))


def test_pure_state_requires_normalization():
    with pytest.raises(ValueError):
        PureState(Bipartition(1, 1), np.ones(4))
    s = PureState(Bipartition(1, 1), np.ones(4) / 2)
    assert s.density().is_normalized()


@given(splits, st.integers(0, 2**32 - 1))
def test_qdm_roundtrip(tmp_path_factory, bp, seed):
    rho = random_state(bp, np.random.default_rng(seed))
    path = tmp_path_factory.mktemp("qdm") / "state.qdm"
    write_qdm(path, rho)
    back = read_qdm(path)
    assert back.bipartition == bp
    assert np.array_equal(back.matrix, rho.matrix)
    assert not path.with_name("state.qdm.tmp").exists()


def test_qdm_rejects_garbage(tmp_path):
    p = tmp_path / "bad.qdm"
    p.write_bytes(b"QDM1" + b"\x01\x00\x00\x00\x01\x00\x00\x00" + b"\x00" * 10)
    with pytest.raises(ValueError, match="expected"):
        read_qdm(p)
    p.write_bytes(b"nope")
    with pytest.raises(ValueError):
        read_qdm(p)
