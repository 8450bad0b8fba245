"""Geometry of the finite box {-N,...,N}^2: boundary, cycles, neighbor tables.

Sites are (x, y) integer tuples. The neighbor order (+x, -x, +y, -y) is fixed
and is load-bearing: instruction direction decoding indexes into it.
"""

from functools import lru_cache

import numpy as np

#: Fixed neighbor offsets, order (+x, -x, +y, -y).
DIRECTIONS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def neighbors(site):
    """Return the 4 nearest neighbors of ``site`` in the fixed direction order."""
    x, y = site
    return [(x + dx, y + dy) for dx, dy in DIRECTIONS]


class Box:
    """The box B_N = {-N,...,N}^2 with its outer boundary and cycle partition.

    Precomputes flat-index neighbor tables used by the stabilization kernels:
    interior sites get indices 0..(2N+1)^2-1 in lexicographic (x, y) order,
    boundary sites get a dense index 0..4(2N+1)-1, also lexicographic.

    Instances are immutable after construction and safe to share across
    concurrent replicas.
    """

    def __init__(self, radius):
        if radius < 0:
            raise ValueError(f"box radius must be >= 0, got {radius}")
        self.N = int(radius)
        self.side = 2 * self.N + 1
        self.n_sites = self.side * self.side

        N, side = self.N, self.side
        self.sites = [(x, y) for x in range(-N, N + 1) for y in range(-N, N + 1)]

        # Outer boundary: sites outside the box with a neighbor inside.  On Z^2
        # these are the four faces at L-inf distance N+1, corners excluded.
        bset = set()
        for s in self.sites:
            for nb in neighbors(s):
                if not self.contains(nb):
                    bset.add(nb)
        self.boundary_sites = sorted(bset)
        self.n_boundary = len(self.boundary_sites)
        self.boundary_index = {s: i for i, s in enumerate(self.boundary_sites)}

        # neigh_table[i, d]: flat index of the d-th neighbor of interior site i,
        # or -1 - boundary_index when the neighbor lies on the boundary.
        table = np.empty((self.n_sites, 4), dtype=np.int64)
        for i, s in enumerate(self.sites):
            for d, nb in enumerate(neighbors(s)):
                if self.contains(nb):
                    table[i, d] = self.site_index(nb)
                else:
                    table[i, d] = -1 - self.boundary_index[nb]
        table.flags.writeable = False
        self.neigh_table = table

        cyc = np.array([self.cycle_index(s) for s in self.sites], dtype=np.int64)
        cyc.flags.writeable = False
        self.cycle_indices = cyc

        # Rank of each site in cycle-sweep order: outermost cycle C_0 first,
        # lexicographic within a cycle.
        order = sorted(range(self.n_sites), key=lambda i: (cyc[i], i))
        pos = np.empty(self.n_sites, dtype=np.int64)
        for rank, i in enumerate(order):
            pos[i] = rank
        pos.flags.writeable = False
        self.cycle_order_pos = pos

    def contains(self, site):
        x, y = site
        return max(abs(x), abs(y)) <= self.N

    def site_index(self, site):
        """Flat index of an interior site; lexicographic (x, y) order."""
        x, y = site
        return (x + self.N) * self.side + (y + self.N)

    def site_at(self, index):
        """Inverse of :meth:`site_index`."""
        x, rem = divmod(int(index), self.side)
        return (x - self.N, rem - self.N)

    def coords(self):
        """(n_sites, 2) array of interior coordinates in flat-index order."""
        return np.array(self.sites, dtype=np.int64)

    def cycle_index(self, site):
        """Cycle number of an interior site (0 = outermost ring, N = origin);
        -1 for boundary sites."""
        x, y = site
        r = max(abs(x), abs(y))
        if r <= self.N:
            return self.N - r
        if site in self.boundary_index:
            return -1
        raise ValueError(f"{site} is neither in B_{self.N} nor on its boundary")

    def interior_neighbor(self, site):
        """The unique neighbor inside the box of a boundary site."""
        if site not in self.boundary_index:
            raise ValueError(f"{site} is not a boundary site of B_{self.N}")
        inside = [nb for nb in neighbors(site) if self.contains(nb)]
        assert len(inside) == 1, "boundary site with non-unique interior neighbor"
        return inside[0]

    def backward_neighbor(self, site):
        """Neighbor of an interior site in the next-outer cycle.

        For a site in cycle n this lands in cycle n-1 (cycle -1 being the
        boundary).  Ties are broken lexicographically so the map is
        deterministic; restricted to any one cycle it is injective.
        """
        if not self.contains(site):
            raise ValueError(f"{site} is not in B_{self.N}")
        n = self.cycle_index(site)
        out = [nb for nb in neighbors(site) if self.cycle_index(nb) == n - 1]
        return min(out)

    def cycles(self):
        """List of cycles C_0..C_N, each a lexicographically sorted site list."""
        out = [[] for _ in range(self.N + 1)]
        for s in self.sites:
            out[self.cycle_index(s)].append(s)
        return out

    def __repr__(self):
        return f"Box(N={self.N})"


@lru_cache(maxsize=64)
def box(radius):
    """Cached Box factory; geometry construction is O(N^2)."""
    return Box(radius)


def boundary_sites(b):
    """Lexicographically sorted boundary ∂B_N of a box (4(2N+1) sites)."""
    return list(b.boundary_sites)
