"""Geometry tests: every derived quantity is checked against brute-force
enumeration over small boxes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arwsim.lattice import Box, box, boundary_sites, neighbors


def brute_boundary(N):
    """Oracle: enumerate all sites at L-inf distance <= N+1 and keep those
    outside the box having at least one neighbor inside."""
    out = []
    for x in range(-N - 1, N + 2):
        for y in range(-N - 1, N + 2):
            if max(abs(x), abs(y)) > N:
                if any(max(abs(nx), abs(ny)) <= N
                       for nx, ny in neighbors((x, y))):
                    out.append((x, y))
    return sorted(out)


def test_neighbors_origin_fixed_order():
    assert neighbors((0, 0)) == [(1, 0), (-1, 0), (0, 1), (0, -1)]


def test_neighbors_translation():
    N = 5
    assert neighbors((N, N)) == [(N + 1, N), (N - 1, N), (N, N + 1), (N, N - 1)]


@given(st.integers(-10**6, 10**6), st.integers(-10**6, 10**6))
def test_neighbors_l1_distance(x, y):
    for nx, ny in neighbors((x, y)):
        assert abs(nx - x) + abs(ny - y) == 1


def test_boundary_single_site_box():
    assert boundary_sites(box(0)) == [(-1, 0), (0, -1), (0, 1), (1, 0)]


def test_boundary_n1_excludes_corner():
    b = box(1)
    assert len(b.boundary_sites) == 12
    assert (2, 2) not in b.boundary_sites


@pytest.mark.parametrize("N", range(11))
def test_boundary_matches_enumeration(N):
    b = box(N)
    assert b.boundary_sites == brute_boundary(N)
    assert len(b.boundary_sites) == 4 * (2 * N + 1)


@pytest.mark.parametrize("N", range(11))
def test_interior_neighbor_unique(N):
    b = box(N)
    for s in b.boundary_sites:
        inside = [nb for nb in neighbors(s) if b.contains(nb)]
        assert len(inside) == 1
        assert b.interior_neighbor(s) == inside[0]


def test_interior_neighbor_examples():
    assert box(2).interior_neighbor((3, 1)) == (2, 1)
    assert box(0).interior_neighbor((0, 1)) == (0, 0)
    with pytest.raises(ValueError):
        box(2).interior_neighbor((0, 0))
    with pytest.raises(ValueError):
        box(2).interior_neighbor((4, 4))


def test_cycle_indices():
    b = box(3)
    for s in b.sites:
        assert b.cycle_index(s) == 3 - max(abs(s[0]), abs(s[1]))
    sizes = [len(c) for c in b.cycles()]
    assert sum(sizes) == b.n_sites
    # outermost ring has 8N sites for N >= 1, the origin cycle just 1
    assert sizes[0] == 24 and sizes[-1] == 1


def test_backward_neighbor_examples():
    b = box(3)
    assert b.backward_neighbor((3, 0)) == (4, 0)
    assert b.backward_neighbor((2, 2)) == (2, 3)
    with pytest.raises(ValueError):
        b.backward_neighbor((4, 0))


@pytest.mark.parametrize("N", range(11))
def test_backward_neighbor_properties(N):
    b = box(N)
    for n, cyc in enumerate(b.cycles()):
        images = [b.backward_neighbor(s) for s in cyc]
        # lands exactly one cycle further out (cycle -1 is the boundary)
        for img in images:
            assert b.cycle_index(img) == n - 1
        # injective on each cycle
        assert len(set(images)) == len(images)


@settings(max_examples=30)
@given(st.integers(0, 8))
def test_neigh_table_consistent(N):
    b = box(N)
    for i, s in enumerate(b.sites):
        for d, nb in enumerate(neighbors(s)):
            entry = int(b.neigh_table[i, d])
            if b.contains(nb):
                assert entry == b.site_index(nb)
                assert b.site_at(entry) == nb
            else:
                assert entry < 0
                assert b.boundary_sites[-1 - entry] == nb


def test_cycle_sweep_rank_outermost_first():
    b = box(4)
    ranked = sorted(range(b.n_sites), key=lambda i: b.cycle_order_pos[i])
    cycles = [b.cycle_index(b.sites[i]) for i in ranked]
    assert cycles == sorted(cycles)
    # lexicographic within each cycle
    for n in range(5):
        group = [b.sites[i] for i in ranked if b.cycle_index(b.sites[i]) == n]
        assert group == sorted(group)


def test_box_rejects_negative_radius():
    with pytest.raises(ValueError):
        Box(-1)


def test_immutability():
    b = box(2)
    with pytest.raises(ValueError):
        b.neigh_table[0, 0] = 7
