import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from striplyap.determinants import logdet_direct
from striplyap.model import (
    ConfigurationError,
    DisorderSample,
    DisorderSpec,
    Region,
    StripGeometry,
    assemble_hamiltonian,
    sample_disorder,
)
from striplyap.perturbation import (
    grid_partition,
    log_minus,
    log_plus,
    logdet_gap_bound,
    numerical_rank,
    partition_boundary,
    partition_defect,
    weyl_check,
)


def _sym(rng, dim):
    a = rng.normal(size=(dim, dim))
    return (a + a.T) / 2


def test_log_plus_minus():
    assert log_plus(math.e) == pytest.approx(1.0)
    assert log_plus(0.5) == 0.0
    assert log_minus(0.5) == pytest.approx(math.log(2.0))
    assert log_minus(2.0) == 0.0
    assert log_minus(0.0) == math.inf


def test_weyl_equal_matrices():
    rng = np.random.default_rng(0)
    h = _sym(rng, 8)
    assert weyl_check(h, h)


def test_weyl_rank_one_update():
    # oracle: rank-1 positive update shifts eigenvalues up within one position
    rng = np.random.default_rng(1)
    h1 = _sym(rng, 10)
    x = rng.normal(size=10)
    h2 = h1 + 1.3 * np.outer(x, x)
    assert weyl_check(h1, h2)
    e1 = np.linalg.eigvalsh(h1)
    e2 = np.linalg.eigvalsh(h2)
    assert np.all(e1 <= e2 + 1e-9)
    assert np.all(e1[:-1] <= e2[1:] + 1e-9)


@given(st.integers(0, 5000))
def test_weyl_random_low_rank(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(4, 21))
    h1 = _sym(rng, dim)
    r = int(rng.integers(1, 4))
    x = rng.normal(size=(dim, r))
    scales = rng.uniform(-2, 2, size=r)
    h2 = h1 + (x * scales) @ x.T
    assert weyl_check(h1, h2)


def test_gap_bound_equal_matrices():
    rng = np.random.default_rng(2)
    h = _sym(rng, 6)
    rep = logdet_gap_bound(h, h, 0.4)
    assert rep.rank == 0
    assert rep.lhs == pytest.approx(0.0, abs=1e-9)
    assert rep.rhs == 0.0
    assert rep.holds


def test_gap_bound_chain_partition_example():
    # oracle: scalar three-term recurrence determinants of the free 4-chain
    geo = StripGeometry(1, 1, 4)
    samp = DisorderSample(geometry=geo, u_law="zero", potentials=np.zeros((4, 1)))
    region = Region.rectangle(1, 4, 1, 1)
    h_full = assemble_hamiltonian(samp, region).matrix
    h_split = h_full.copy()
    h_split[1, 2] = h_split[2, 1] = 0.0
    energy = 0.5
    f4 = 0.3125  # f_k = -0.5 f_{k-1} - f_{k-2}, f_4 computed by hand
    f2 = -0.75
    lhs = abs(math.log(abs(f4)) - math.log(f2 * f2))
    rep = logdet_gap_bound(h_full, h_split, energy)
    assert rep.rank == 2
    assert abs(abs(rep.lhs) - lhs) < 1e-10
    assert abs(rep.lhs) <= rep.rhs


@given(st.integers(0, 5000))
def test_gap_bound_random_low_rank(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(4, 21))
    h1 = _sym(rng, dim)
    r = int(rng.integers(1, 4))
    x = rng.normal(size=(dim, r))
    h2 = h1 + (x * rng.uniform(-1, 1, size=r)) @ x.T
    rep = logdet_gap_bound(h1, h2, float(rng.uniform(-1, 1)))
    assert rep.holds


def test_grid_partition_single_cell():
    region = Region.rectangle(2, 4, 1, 3)
    cells = grid_partition(region, 10)
    assert len(cells) == 1 and cells[0] == region


def test_grid_partition_shapes_5x3():
    # oracle: direct enumeration of the anchored grid cells
    cells = grid_partition(Region.rectangle(1, 5, 1, 3), 2)
    shapes = Counter()
    for c in cells:
        n0, n1, w0, w1 = c.bounds()
        shapes[(n1 - n0 + 1, w1 - w0 + 1)] += 1
    assert shapes == Counter({(2, 2): 2, (2, 1): 2, (1, 2): 1, (1, 1): 1})
    assert sum(c.size for c in cells) == 15


def test_grid_partition_shapes_5x5():
    cells = grid_partition(Region.rectangle(1, 5, 1, 5), 2)
    shapes = Counter()
    for c in cells:
        n0, n1, w0, w1 = c.bounds()
        shapes[(n1 - n0 + 1, w1 - w0 + 1)] += 1
    assert shapes == Counter({(2, 2): 4, (2, 1): 2, (1, 2): 2, (1, 1): 1})
    assert len(shapes) <= 4


def test_grid_partition_boundary_scaling():
    # boundary site count stays under c d |region| / l with a small c
    geo = StripGeometry(4, 1, 24)
    region = Region.rectangle(1, 24, 1, 4)
    worst = 0.0
    for l in (2, 3, 4, 6):
        cells = grid_partition(region, l)
        bnd = partition_boundary(region, cells, geo)
        worst = max(worst, len(bnd) * l / (geo.bandwidth * region.size))
    assert worst <= 6.0


def test_partition_trivial():
    geo = StripGeometry(2, 1, 4)
    s = sample_disorder(geo, DisorderSpec.uniform(-1, 1, u_law="adjacency"), seed=3)
    region = Region.rectangle(1, 4, 1, 2)
    defect, bound = partition_defect(s, region, [region], 0.3)
    assert defect == pytest.approx(0.0, abs=1e-10)
    assert bound == 0.0


def test_partition_chain_split():
    geo = StripGeometry(1, 1, 4)
    samp = DisorderSample(geometry=geo, u_law="zero", potentials=np.zeros((4, 1)))
    region = Region.rectangle(1, 4, 1, 1)
    parts = [Region.rectangle(1, 2, 1, 1), Region.rectangle(3, 4, 1, 1)]
    defect, bound = partition_defect(samp, region, parts, 0.5)
    assert defect == pytest.approx(abs(math.log(0.3125) - math.log(0.5625)), rel=1e-10)
    assert defect <= bound


def test_partition_rejects_bad_cover():
    geo = StripGeometry(1, 1, 4)
    s = sample_disorder(geo, DisorderSpec.uniform(-1, 1), seed=1)
    region = Region.rectangle(1, 4, 1, 1)
    with pytest.raises(ConfigurationError):
        partition_defect(s, region, [Region.rectangle(1, 2, 1, 1)], 0.0)
    with pytest.raises(ConfigurationError):
        partition_defect(
            s, region, [Region.rectangle(1, 3, 1, 1), Region.rectangle(3, 4, 1, 1)], 0.0
        )


def test_partition_defect_random_grids():
    rng = np.random.default_rng(9)
    specs = [
        DisorderSpec.uniform(-1, 1, u_law="adjacency"),
        DisorderSpec.cauchy(0.8, u_law="random_band", coupling=0.5),
    ]
    for t in range(30):
        n = int(rng.integers(3, 10))
        w = int(rng.integers(1, 4))
        geo = StripGeometry(w, 1, n)
        s = sample_disorder(geo, specs[t % 2], seed=50 + t)
        region = Region.rectangle(1, n, 1, w)
        cells = grid_partition(region, int(rng.integers(1, 4)))
        defect, bound = partition_defect(s, region, cells, float(rng.uniform(-1, 1)))
        assert defect <= bound + 1e-8


def test_rank_bounded_by_boundary():
    rng = np.random.default_rng(19)
    spec = DisorderSpec.uniform(-1, 1, u_law="adjacency")
    for t in range(20):
        n = int(rng.integers(3, 9))
        w = int(rng.integers(1, 4))
        geo = StripGeometry(w, 1, n)
        s = sample_disorder(geo, spec, seed=80 + t)
        region = Region.rectangle(1, n, 1, w)
        cells = grid_partition(region, int(rng.integers(1, 4)))
        h_full = assemble_hamiltonian(s, region).matrix
        h_split = np.zeros_like(h_full)
        pos = {site: i for i, site in enumerate(region.sites)}
        for cell in cells:
            hc = assemble_hamiltonian(s, cell)
            ids = [pos[site] for site in hc.sites]
            h_split[np.ix_(ids, ids)] = hc.matrix
        bnd = partition_boundary(region, cells, geo)
        assert numerical_rank(h_full - h_split) <= len(bnd)
