import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lbsim.decomposition import (Box, BoxArray, DistributionMapping,
                                 build_box_array, morton_index, morton_order,
                                 rank_box_counts, round_robin_mapping,
                                 slab_mapping)
from lbsim.errors import ConfigError


def interleave_oracle(a: int, b: int) -> int:
    """Independent bit-interleaving reference: digits of a on even bits."""
    out = 0
    for i in range(max(a.bit_length(), b.bit_length())):
        out |= ((a >> i) & 1) << (2 * i)
        out |= ((b >> i) & 1) << (2 * i + 1)
    return out


class TestBuildBoxArray:
    def test_four_quadrants(self):
        ba = build_box_array((4, 4), 2)
        assert ba.n_boxes == 4
        assert all(box.shape == (2, 2) for box in ba.boxes)

    def test_single_box_identity(self):
        ba = build_box_array((2, 2), 2)
        assert ba.n_boxes == 1
        assert ba.boxes[0].lo == (0, 0)
        assert ba.boxes[0].hi == (1, 1)

    def test_production_scale_count(self):
        ba = build_box_array((1920, 1920), 64)
        assert ba.n_boxes == (1920 // 64) ** 2 == 900

    @pytest.mark.parametrize("extent,axis", [((5, 4), "z"), ((4, 7), "x")])
    def test_non_divisible_names_axis(self, extent, axis):
        with pytest.raises(ConfigError, match=f"{axis}-extent"):
            build_box_array(extent, 2)

    def test_bad_box_size(self):
        with pytest.raises(ConfigError):
            build_box_array((4, 4), 0)

    @pytest.mark.parametrize("extent,m", [((6, 4), 2), ((9, 3), 3), ((8, 8), 4)])
    def test_tiling_covers_every_cell_once(self, extent, m):
        ba = build_box_array(extent, m)
        hits = np.zeros(extent, dtype=int)
        for box in ba.boxes:
            hits[box.lo[0]:box.hi[0] + 1, box.lo[1]:box.hi[1] + 1] += 1
        assert (hits == 1).all()

    def test_row_major_ids_are_stable(self):
        ba = build_box_array((6, 4), 2)
        nbz, nbx = ba.grid_shape
        assert (nbz, nbx) == (3, 2)
        for box in ba.boxes:
            bz, bx = ba.box_coords(box.id)
            assert box.lo == (bz * 2, bx * 2)

    def test_box_invariant(self):
        with pytest.raises(ValueError):
            Box(id=0, lo=(2, 0), hi=(1, 3))


class TestMortonIndex:
    def test_zero(self):
        assert morton_index((0, 0)) == 0

    def test_unit_square(self):
        assert morton_index((1, 0)) == 1
        assert morton_index((0, 1)) == 2
        assert morton_index((1, 1)) == 3

    def test_interleaving_example(self):
        # 011 and 101 interleave to 100111b = 39
        assert morton_index((3, 5)) == 0b100111 == 39

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            morton_index((-1, 2))

    @given(st.integers(0, 2 ** 16), st.integers(0, 2 ** 16))
    def test_matches_bit_oracle(self, a, b):
        assert morton_index((a, b)) == interleave_oracle(a, b)

    @given(st.lists(st.tuples(st.integers(0, 2 ** 16), st.integers(0, 2 ** 16)),
                    min_size=2, max_size=50, unique=True))
    def test_injective(self, coords):
        codes = [morton_index(c) for c in coords]
        assert len(set(codes)) == len(codes)


def zorder_recursion_oracle(k: int) -> list[tuple[int, int]]:
    """Visit order of a 2^k x 2^k grid by quadrant recursion."""
    if k == 0:
        return [(0, 0)]
    sub = zorder_recursion_oracle(k - 1)
    half = 2 ** (k - 1)
    out = list(sub)
    out += [(a + half, b) for a, b in sub]
    out += [(a, b + half) for a, b in sub]
    out += [(a + half, b + half) for a, b in sub]
    return out


class TestMortonOrder:
    def test_two_by_two(self):
        ba = build_box_array((4, 4), 2)
        order = morton_order(ba)
        coords = [ba.box_coords(int(i)) for i in order]
        assert coords == [(0, 0), (1, 0), (0, 1), (1, 1)]

    def test_single_box(self):
        ba = build_box_array((2, 2), 2)
        assert list(morton_order(ba)) == [0]

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_matches_quadrant_recursion(self, k):
        side = 2 ** k
        ba = build_box_array((side, side), 1)
        coords = [ba.box_coords(int(i)) for i in morton_order(ba)]
        assert coords == zorder_recursion_oracle(k)

    @pytest.mark.parametrize("extent,m", [((6, 4), 2), ((10, 6), 2), ((12, 12), 4)])
    def test_permutation_on_any_grid(self, extent, m):
        ba = build_box_array(extent, m)
        order = morton_order(ba)
        assert sorted(order) == list(range(ba.n_boxes))

    @pytest.mark.parametrize("side", [8, 16])
    def test_locality_of_aligned_runs(self, side):
        # Quadrant property: a run of 2^j positions starting at a multiple
        # of 2^j covers exactly one 2^j-cell sub-quadrant, so its bounding
        # box area stays within 4x the run length. (Unaligned runs can
        # straddle a quadrant seam, where the raw Z-order curve jumps.)
        ba = build_box_array((side, side), 1)
        coords = np.array([ba.box_coords(int(i)) for i in morton_order(ba)])
        for length in (1, 2, 4):
            for start in range(0, side * side, length):
                run = coords[start:start + length]
                span = run.max(axis=0) - run.min(axis=0) + 1
                assert span[0] * span[1] <= 4 * length


class TestDistributionMapping:
    def test_counts_simple(self):
        dm = DistributionMapping(owner=[0, 1, 1, 0], n_ranks=2)
        assert list(rank_box_counts(dm)) == [2, 2]

    def test_counts_with_empty_rank(self):
        dm = DistributionMapping(owner=[0, 0, 0], n_ranks=2)
        assert list(rank_box_counts(dm)) == [3, 0]

    def test_figure_example_ownership(self):
        # 2x2 box grid: rank 0 owns upper-left and lower-right.
        ba = build_box_array((4, 4), 2)
        dm = DistributionMapping(owner=[0, 1, 1, 0], n_ranks=2)
        rank0 = [ba.box_coords(b) for b in range(4) if dm.owner[b] == 0]
        assert rank0 == [(0, 0), (1, 1)]
        assert list(rank_box_counts(dm)) == [2, 2]

    def test_counts_sum_to_total(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n, r = rng.integers(1, 40), int(rng.integers(1, 8))
            dm = DistributionMapping(owner=rng.integers(0, r, size=n),
                                     n_ranks=r)
            assert rank_box_counts(dm).sum() == n

    def test_out_of_range_owner_rejected(self):
        with pytest.raises(ValueError):
            DistributionMapping(owner=[0, 2], n_ranks=2)
        with pytest.raises(ValueError):
            DistributionMapping(owner=[-1], n_ranks=2)

    def test_immutable(self):
        dm = DistributionMapping(owner=[0, 1], n_ranks=2)
        with pytest.raises(ValueError):
            dm.owner[0] = 1


class TestInitialMappings:
    def test_slab_contiguous_and_even(self):
        ba = build_box_array((8, 8), 2)
        dm = slab_mapping(ba, 4)
        assert list(rank_box_counts(dm)) == [4, 4, 4, 4]
        assert (np.diff(dm.owner) >= 0).all()

    def test_round_robin(self):
        ba = build_box_array((4, 4), 2)
        dm = round_robin_mapping(ba, 3)
        assert list(dm.owner) == [0, 1, 2, 0]
