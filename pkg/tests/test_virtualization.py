import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from sramimo.channel import ChannelRealization, draw_channel, generate_symbols, received_block
from sramimo.errors import DimensionError, InvalidParameterError
from sramimo.geometry import build_cpa, build_tlna, build_ula, virtual_half_extent
from sramimo.virtualization import (
    AugmentedManifold,
    SmoothedCovariance,
    VirtualSnapshot,
    augmented_manifold,
    augmented_steering,
    deduplicate_and_sort,
    exact_covariance,
    psd_sqrt,
    sample_covariance,
    spatial_smoothing,
    synthesize_augmented_snapshots,
    vectorize_covariance,
    virtual_design_covariance,
)

LAYOUTS = [build_tlna(4, 4), build_cpa(5, 2)]


def scenario(layout, K, seed, noise=0.1):
    rng = np.random.default_rng(seed)
    ch = draw_channel(rng, layout, K)
    p = rng.uniform(0.5, 2.0, K)
    return ch, p, noise


def oracle_matrix(ch, p, noise, J):
    # A diag(p |g|^2) A^H + noise I on a J-element half-wavelength ULA
    A = np.exp(-1j * np.pi * np.arange(J)[:, None] * np.sin(ch.angles)[None, :])
    return (A * (p * np.abs(ch.gains) ** 2)) @ A.conj().T + noise * np.eye(J)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.parametrize("layout", LAYOUTS, ids=lambda l: l.label)
def test_vectorization_matches_khatri_rao(layout):
    ch, p, s2 = scenario(layout, 5, 0)
    v = vectorize_covariance(exact_covariance(ch, p, s2))
    expected = sla.khatri_rao(ch.H.conj(), ch.H) @ p + s2 * np.eye(layout.size).reshape(-1, order="F")
    np.testing.assert_allclose(v, expected, atol=1e-12)


def test_dedup_two_sensor_example():
    R = np.array([[1.0, 2.0 + 1j], [3.0 - 1j, 5.0]])
    v = vectorize_covariance(R)
    avg = deduplicate_and_sort(v, build_ula(2))
    first = deduplicate_and_sort(v, build_ula(2), mode="first-occurrence")
    # lags -1, 0, 1 read R[0, 1], the zero-lag diagonal, R[1, 0]
    np.testing.assert_allclose(avg.v, [2.0 + 1j, 3.0, 3.0 - 1j])
    np.testing.assert_allclose(first.v, [2.0 + 1j, 1.0, 3.0 - 1j])
    assert avg.at(1) == 3.0 - 1j


def test_dedup_tlna_length_and_lags():
    layout = build_tlna(4, 4)
    ch, p, s2 = scenario(layout, 3, 1)
    R = exact_covariance(ch, p, s2)
    vs = deduplicate_and_sort(vectorize_covariance(R), layout, mode="first-occurrence")
    assert vs.v.shape == (39,)
    pos = layout.positions
    for i in range(8):
        for j in range(8):
            np.testing.assert_allclose(vs.at(pos[i] - pos[j]), R[i, j], atol=1e-12)


@pytest.mark.parametrize("layout", LAYOUTS, ids=lambda l: l.label)
def test_dedup_modes_agree_on_exact_covariance(layout):
    ch, p, s2 = scenario(layout, 4, 2)
    v = vectorize_covariance(exact_covariance(ch, p, s2))
    a = deduplicate_and_sort(v, layout, "average").v
    f = deduplicate_and_sort(v, layout, "first-occurrence").v
    np.testing.assert_allclose(a, f, atol=1e-12)


def test_dedup_errors():
    layout = build_tlna(4, 4)
    with pytest.raises(DimensionError):
        deduplicate_and_sort(np.zeros(10), layout)
    with pytest.raises(InvalidParameterError):
        deduplicate_and_sort(np.zeros(64), layout, mode="median")


def test_lag_vector_is_augmented_steering_sum():
    layout = build_tlna(4, 4)
    ch, p, s2 = scenario(layout, 6, 3)
    J = virtual_half_extent(layout)
    vs = deduplicate_and_sort(vectorize_covariance(exact_covariance(ch, p, s2)), layout)
    expected = sum(pk * augmented_steering(t, 1.0, J) * abs(g) ** 2 for pk, t, g in zip(p, ch.angles, ch.gains))
    expected[J - 1] += s2
    np.testing.assert_allclose(vs.v, expected, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.5, 1.5), st.complex_numbers(min_magnitude=0.1, max_magnitude=3), st.integers(1, 25))
def test_augmented_steering_hermitian_symmetry(theta, g, J):
    b = augmented_steering(theta, g, J)
    assert b.shape == (2 * J - 1,)
    np.testing.assert_allclose(b[::-1], b.conj(), rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(b[J - 1], abs(g) ** 2)


def test_spatial_smoothing_window_oracle():
    rng = np.random.default_rng(4)
    J = 5
    v = rng.standard_normal(2 * J - 1) + 1j * rng.standard_normal(2 * J - 1)
    sc = spatial_smoothing(VirtualSnapshot(v, J))
    H = np.array([v[J - i:2 * J - i] for i in range(1, J + 1)])
    np.testing.assert_allclose(sc.R_ss, H.T @ H.conj() / J, atol=1e-12)


def test_spatial_smoothing_shape_check():
    with pytest.raises(DimensionError):
        spatial_smoothing(VirtualSnapshot(np.zeros(7), 5))


@pytest.mark.parametrize("layout", LAYOUTS, ids=lambda l: l.label)
@pytest.mark.parametrize("K", [1, 4, 8])
def test_closed_form(layout, K):
    ch, p, s2 = scenario(layout, K, 10 + K, noise=0.3)
    J = virtual_half_extent(layout)
    sc, R_design = virtual_design_covariance(exact_covariance(ch, p, s2), layout, J=J)
    M = oracle_matrix(ch, p, s2, J)
    assert rel(sc.R_ss, M @ M / J) < 1e-8
    assert rel(sc.R_bar, M / np.sqrt(J)) < 1e-8
    assert rel(R_design, M) < 1e-8


@pytest.mark.parametrize("layout", LAYOUTS, ids=lambda l: l.label)
def test_manifold_covariance_matches_oracle(layout):
    ch, p, s2 = scenario(layout, 6, 5)
    J = virtual_half_extent(layout)
    man = augmented_manifold(ch, J)
    assert man.scale == J ** -0.25
    np.testing.assert_allclose(man.covariance(man.source_powers(p), s2), oracle_matrix(ch, p, s2, J), atol=1e-10)
    for k in range(6):
        np.testing.assert_allclose(man.B1[:, k], augmented_steering(ch.angles[k], ch.gains[k], J)[J - 1:])


def grid_channel(layout, K, J, seed):
    # sin(theta) spaced by 2/J makes the virtual steering vectors orthogonal
    rng = np.random.default_rng(seed)
    u = -0.9 + (2.0 / J) * np.arange(K)
    g = rng.standard_normal(K) + 1j * rng.standard_normal(K)
    return ChannelRealization.from_parts(layout, np.arcsin(u), g), rng.uniform(0.5, 2.0, K)


@pytest.mark.parametrize("K", [1, 5, 19])
def test_noiseless_rank_equals_users(K):
    layout = build_tlna(4, 4)
    ch, p = grid_channel(layout, K, 20, K)
    sc, _ = virtual_design_covariance(exact_covariance(ch, p, 0.0), layout)
    assert np.linalg.matrix_rank(sc.R_ss, tol=1e-8 * np.linalg.norm(sc.R_ss, 2)) == K


def test_nineteen_users_full_rank_with_noise():
    layout = build_tlna(4, 4)
    ch, p, _ = scenario(layout, 19, 30, noise=0.1)
    sc, _ = virtual_design_covariance(exact_covariance(ch, p, 0.1), layout)
    # noise floor of R_ss is noise^2 / J
    assert np.linalg.eigvalsh(sc.R_ss).min() > 0.5 * 0.1 ** 2 / 20


def test_nineteen_users_manifold_full_rank():
    layout = build_tlna(4, 4)
    ch, _, _ = scenario(layout, 19, 31)
    assert np.linalg.matrix_rank(augmented_manifold(ch, 20).B1) == 19


def test_psd_sqrt():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    R = X @ X.conj().T
    S = psd_sqrt(R)
    np.testing.assert_allclose(S @ S, R, atol=1e-10)
    np.testing.assert_allclose(S, S.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(S).min() > -1e-10


def test_synthesized_snapshots_covariance():
    layout = build_cpa(5, 2)
    ch, p, s2 = scenario(layout, 4, 7, noise=0.2)
    J = virtual_half_extent(layout)
    man = augmented_manifold(ch, J)
    omega = man.source_powers(p)
    rng = np.random.default_rng(8)
    S = generate_symbols(rng, 4, 20_000, powers=p)
    X = synthesize_augmented_snapshots(man, S * np.sqrt(omega / p)[:, None], s2, rng)
    sc, _ = virtual_design_covariance(exact_covariance(ch, p, s2), layout)
    assert rel(sample_covariance(X), sc.R_bar) < 0.1


def test_sample_mode_approaches_exact():
    layout = build_tlna(4, 4)
    ch, p, s2 = scenario(layout, 3, 9)
    rng = np.random.default_rng(10)
    S = generate_symbols(rng, 3, 20_000, powers=p)
    R_hat = sample_covariance(received_block(ch, S, s2, rng))
    _, D_hat = virtual_design_covariance(R_hat, layout)
    _, D = virtual_design_covariance(exact_covariance(ch, p, s2), layout)
    assert rel(D_hat, D) < 0.1


def test_manifold_rejects_wrong_J():
    ch, _, _ = scenario(build_tlna(4, 4), 2, 0)
    with pytest.raises(InvalidParameterError):
        augmented_manifold(ch, 15)


def test_json_roundtrips():
    layout = build_cpa(5, 2)
    ch, p, s2 = scenario(layout, 3, 12)
    sc, _ = virtual_design_covariance(exact_covariance(ch, p, s2), layout)
    back = SmoothedCovariance.from_dict(sc.to_dict())
    np.testing.assert_allclose(back.R_ss, sc.R_ss)
    np.testing.assert_allclose(back.R_bar, sc.R_bar)
    man = augmented_manifold(ch, 11)
    m2 = AugmentedManifold.from_dict(man.to_dict())
    np.testing.assert_allclose(m2.B1, man.B1)
    np.testing.assert_allclose(m2.angles, man.angles)
    assert m2.scale == man.scale


def test_exact_covariance_examples():
    layout = build_ula(4)
    empty = ChannelRealization.from_parts(layout, [], [])
    np.testing.assert_allclose(exact_covariance(empty, [], 0.7), 0.7 * np.eye(4))
    one = ChannelRealization.from_parts(layout, [0.0], [1.0])
    np.testing.assert_allclose(exact_covariance(one, [1.0], 0.0), np.ones((4, 4)))
    ch, p, s2 = scenario(build_cpa(5, 2), 3, 40)
    R = exact_covariance(ch, p, s2)
    assert np.trace(R).real == pytest.approx(8 * (np.sum(p * np.abs(ch.gains) ** 2) + s2))


def test_sample_covariance_examples():
    x = np.array([[1.0 + 1j], [2.0], [-1j]])
    np.testing.assert_allclose(sample_covariance(x), x @ x.conj().T)
    # orthogonal equal-norm columns give a scaled projector onto their span
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]) * 3.0
    np.testing.assert_allclose(sample_covariance(X), np.diag([4.5, 4.5, 0.0]))
    with pytest.raises(DimensionError):
        sample_covariance(np.zeros((3, 0)))


def test_vectorize_examples():
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    np.testing.assert_array_equal(vectorize_covariance(np.array([[a, c], [b, d]])), [a, b, c, d])
    np.testing.assert_array_equal(vectorize_covariance(np.eye(2)), [1, 0, 0, 1])
    with pytest.raises(DimensionError):
        vectorize_covariance(np.zeros((2, 3)))


def test_augmented_steering_examples():
    np.testing.assert_allclose(augmented_steering(0.0, 1.0, 6), np.ones(11))
    np.testing.assert_allclose(np.abs(augmented_steering(0.4, 2.0j, 6)), 4.0)
    # a (2J-1)-sensor ULA recentred on lag 0
    J, theta = 7, -0.6
    from sramimo.channel import steering_vector

    ula = steering_vector(build_ula(2 * J - 1), theta) * np.exp(1j * np.pi * (J - 1) * np.sin(theta))
    np.testing.assert_allclose(augmented_steering(theta, 1.5, J), 2.25 * ula, atol=1e-12)


def test_single_user_smoothed_eigenvalue():
    layout = build_tlna(4, 4)
    J = 20
    ch = ChannelRealization.from_parts(layout, [0.35], [1.0])
    sc, _ = virtual_design_covariance(exact_covariance(ch, [1.0], 0.0), layout)
    ev = np.linalg.eigvalsh(sc.R_ss)
    assert ev[-1] == pytest.approx(J, rel=1e-10)
    assert abs(ev[-2]) < 1e-9


def test_manifold_examples():
    layout = build_tlna(4, 4)
    man = augmented_manifold(ChannelRealization.from_parts(layout, [0.0], [1.0]), 20)
    np.testing.assert_allclose(man.B1, np.ones((20, 1)))
    ch, _, _ = scenario(layout, 5, 41)
    man = augmented_manifold(ch, 20)
    np.testing.assert_allclose(man.B1[0], np.abs(ch.gains) ** 2)
    # B1^H is Vandermonde in eta_k once |g_k|^2 is factored out
    eta = np.exp(-1j * np.pi * np.sin(ch.angles))
    np.testing.assert_allclose(man.B1 / np.abs(ch.gains) ** 2, eta[None, :] ** np.arange(20)[:, None], atol=1e-12)


def test_equivalent_long_ula():
    # the virtual model is a J-sensor physical ULA whose users have gains |g|^2
    layout = build_cpa(5, 2)
    ch, p, _ = scenario(layout, 4, 42)
    virt = augmented_manifold(ch, 11)
    long_ula = ChannelRealization.from_parts(build_ula(11), ch.angles, np.abs(ch.gains) ** 2)
    np.testing.assert_allclose(virt.B1, AugmentedManifold.physical(long_ula).B1, atol=1e-12)
    assert virt.scale == pytest.approx(11 ** -0.25)


def test_synthesis_examples():
    layout = build_cpa(5, 2)
    ch, _, _ = scenario(layout, 1, 43)
    man = augmented_manifold(ch, 11)
    X = synthesize_augmented_snapshots(man, np.ones((1, 1)), 0.0, np.random.default_rng(0))
    np.testing.assert_allclose(X[:, 0], 11 ** -0.25 * man.B1[:, 0])
    S = np.ones((1, 5))
    a = synthesize_augmented_snapshots(man, S, 0.3, np.random.default_rng(1))
    b = synthesize_augmented_snapshots(man, S, 0.3, np.random.default_rng(1))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(DimensionError):
        synthesize_augmented_snapshots(man, np.ones((2, 5)), 0.3, np.random.default_rng(1))


def test_sample_input_keeps_conjugate_symmetry():
    layout = build_tlna(4, 4)
    ch, p, s2 = scenario(layout, 4, 44)
    rng = np.random.default_rng(45)
    R_hat = sample_covariance(received_block(ch, generate_symbols(rng, 4, 50, powers=p), s2, rng))
    for mode in ("average", "first-occurrence"):
        v = deduplicate_and_sort(vectorize_covariance(R_hat), layout, mode).v
        np.testing.assert_allclose(v[::-1], v.conj(), atol=1e-12)
        sc = spatial_smoothing(VirtualSnapshot(v, 20))
        assert np.linalg.norm(sc.R_ss - sc.R_ss.conj().T) <= 1e-10 * np.linalg.norm(sc.R_ss)
        ev = np.linalg.eigvalsh(sc.R_ss)
        assert ev.min() >= -1e-10 * ev.max()
        assert np.linalg.norm(sc.R_bar @ sc.R_bar - sc.R_ss) < 1e-8 * np.linalg.norm(sc.R_ss)


@pytest.mark.parametrize("layout", LAYOUTS + [build_ula(5)], ids=lambda l: l.label)
def test_lag_map_pairs(layout):
    from sramimo.virtualization import lag_selection_map

    sel = lag_selection_map(layout)
    seen = set()
    pos = layout.positions
    for lag, pairs in sel.pairs.items():
        assert pairs
        for i, j in pairs:
            assert pos[i] - pos[j] == lag
            assert (i, j) not in seen
            seen.add((i, j))
