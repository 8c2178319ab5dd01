import math

import numpy as np
import pytest

from holoball import geometry, lattice
from holoball.measure import uniform_ball


@pytest.fixture(scope="module")
def lat2():
    return lattice.build_lattice(2, 0.6, 0.8, stream_seed=1)


def exhaustive_separation(pts):
    if len(pts) == 1:
        return 1.0
    rho = geometry.rho(pts[:, None, :], pts[None, :, :])
    np.fill_diagonal(rho, np.inf)
    return float(rho.min())


def test_small_lattice_example():
    lat = lattice.build_lattice(1, 0.9, 0.5)
    # every center lies in B_0.5, which is Delta(0, 0.5)
    L = lattice.count_in(lat, np.zeros(1), 0.5 + 1e-9)
    assert L == len(lat)
    assert L <= lattice.counting_bound(lat.separation, 0.5 + 1e-9, 1)
    assert len(lat) == 1  # rho(0, z) = |z| < 0.5 < r for every candidate
    assert lat.separation == exhaustive_separation(lat.centers) == 1.0


def test_singleton_separation():
    assert lattice.separation_of(np.zeros((1, 2))) == 1.0
    assert lattice.separation_of([[0.0], [0.5]]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        lattice.separation_of(np.zeros((0, 1)))


def test_exact_separation_and_order(lat2):
    assert exhaustive_separation(lat2.centers) >= lat2.r
    assert lat2.separation == exhaustive_separation(lat2.centers)
    norms = np.linalg.norm(lat2.centers, axis=1)
    assert np.all(np.diff(norms) >= 0)
    assert norms.max() < lat2.cutoff


def test_coverage(lat2):
    probes = uniform_ball(2, 10_000, 99, radius=0.8)
    assert np.count_nonzero(lattice.uncovered(lat2, probes)) == 0


def test_counting_bound_examples(lat2):
    assert lattice.counting_bound(0.5, 0.5, 1) == pytest.approx(25 / 0.75)
    assert math.floor(lattice.counting_bound(0.5, 0.5, 1)) == 33
    assert lattice.count_in(lat2, np.array([0.0, 0.99]), 0.01) == 0
    c = lat2.centers[len(lat2) // 2]
    assert lattice.count_in(lat2, c, 1e-6) == 1


def test_counting_bound_queries(lat2):
    rng = np.random.default_rng(0)
    zs = uniform_ball(2, 300, 5, radius=0.95)
    for z in zs:
        r = rng.uniform(0.05, 0.95)
        assert lattice.count_in(lat2, z, r) <= math.floor(lattice.counting_bound(lat2.separation, r, 2))


def test_deterministic():
    a = lattice.build_lattice(1, 0.5, 0.8, stream_seed=3)
    b = lattice.build_lattice(1, 0.5, 0.8, stream_seed=3)
    np.testing.assert_array_equal(a.centers, b.centers)
    c = lattice.build_lattice(1, 0.5, 0.8, stream_seed=4)
    assert not np.array_equal(a.centers, c.centers) or len(a) != len(c)


def test_invalid_arguments():
    with pytest.raises(ValueError, match="r must"):
        lattice.build_lattice(1, 1.0, 0.5)
    with pytest.raises(ValueError, match="R_max"):
        lattice.build_lattice(1, 0.5, 1.2)


def test_default_budget():
    assert lattice.default_budget(0.8) == 50_000
    assert lattice.default_budget(0.5) == 20_000
    assert lattice.default_budget(0.8, 2) == 500_000


def test_save_load_round_trip(tmp_path, lat2):
    path = tmp_path / "lat.csv"
    lat2.save(path)
    back = lattice.Lattice.load(path)
    np.testing.assert_array_equal(back.centers, lat2.centers)
    assert (back.n, back.r, back.separation, back.cutoff, back.stream_seed) == (
        lat2.n,
        lat2.r,
        lat2.separation,
        lat2.cutoff,
        lat2.stream_seed,
    )
    assert (tmp_path / "lat.csv.json").exists()
    rows = path.read_text().splitlines()[1:]
    assert all(row.endswith(",1") for row in rows)
