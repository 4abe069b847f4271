import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tapcore.errors import (ContractViolation, FootprintRangeError,
                            HeightOverflowError)
from tapcore.geometry import (N_STATES, ContainerSpec, Dims3, HeightMap,
                              grasp_axis, orient_dims)

from oracles import naive_max_under


class TestDims3:
    def test_volume(self):
        assert Dims3(2, 3, 4).volume == 24

    def test_rejects_non_positive(self):
        with pytest.raises(ContractViolation):
            Dims3(0, 1, 1)
        with pytest.raises(ContractViolation):
            Dims3(1, -2, 1)

    def test_rejects_non_integer(self):
        with pytest.raises(ContractViolation):
            Dims3(1.5, 1, 1)

    def test_ordering_and_tuple(self):
        assert Dims3(1, 2, 3).as_tuple() == (1, 2, 3)
        assert Dims3(1, 2, 3) < Dims3(2, 1, 1)


class TestOrientations:
    # state s = 2*d + r: d picks which local axis becomes vertical,
    # r swaps the two footprint axes
    EXPECTED = {
        0: (10, 20, 30),
        1: (20, 10, 30),
        2: (20, 30, 10),
        3: (30, 20, 10),
        4: (10, 30, 20),
        5: (30, 10, 20),
    }

    def test_orientation_table(self):
        d = Dims3(10, 20, 30)
        for s, want in self.EXPECTED.items():
            assert orient_dims(d, s).as_tuple() == want

    def test_all_states_are_permutations(self):
        d = Dims3(7, 11, 13)
        seen = {orient_dims(d, s).as_tuple() for s in range(N_STATES)}
        assert len(seen) == 6
        for t in seen:
            assert sorted(t) == [7, 11, 13]

    def test_grasp_axis(self):
        assert [grasp_axis(s) for s in range(6)] == ["z", "z", "x", "x", "y", "y"]

    def test_state_range_checked(self):
        with pytest.raises(ContractViolation):
            orient_dims(Dims3(1, 1, 1), 6)
        with pytest.raises(ContractViolation):
            grasp_axis(-1)

    def test_vertical_extent_is_grasp_axis(self):
        # the packed height is always the grasp-axis length
        d = Dims3(3, 5, 7)
        for s in range(6):
            axis = grasp_axis(s)
            want = {"x": 3, "y": 5, "z": 7}[axis]
            assert orient_dims(d, s).z == want


class TestContainerSpec:
    def test_volume(self):
        assert ContainerSpec(10, 20, 30).volume == 6000

    def test_rejects_degenerate(self):
        with pytest.raises(ContractViolation):
            ContainerSpec(0, 10, 10)


class TestHeightMap:
    def test_starts_flat(self):
        hm = HeightMap(ContainerSpec(4, 5, 6))
        assert hm.grid.shape == (4, 5)
        assert hm.integral == 0

    def test_raise_and_max_under(self):
        hm = HeightMap(ContainerSpec(8, 8, 10))
        hm.raise_footprint(1, 2, 3, 4, 5)
        assert hm.max_under(0, 0, 8, 8) == 5
        assert hm.max_under(4, 0, 4, 2) == 0

    def test_max_under_matches_oracle(self):
        rng = np.random.default_rng(0)
        spec = ContainerSpec(9, 7, 20)
        for _ in range(50):
            grid = rng.integers(0, 21, size=(9, 7))
            hm = HeightMap(spec, grid)
            x0 = int(rng.integers(0, 9))
            y0 = int(rng.integers(0, 7))
            w = int(rng.integers(1, 10 - x0))
            d = int(rng.integers(1, 8 - y0))
            assert hm.max_under(x0, y0, w, d) == naive_max_under(grid, x0, y0, w, d)

    def test_footprint_bounds_checked(self):
        hm = HeightMap(ContainerSpec(4, 4, 4))
        with pytest.raises(FootprintRangeError):
            hm.max_under(3, 3, 2, 1)
        with pytest.raises(FootprintRangeError):
            hm.raise_footprint(-1, 0, 1, 1, 1)

    def test_height_overflow(self):
        hm = HeightMap(ContainerSpec(4, 4, 4))
        with pytest.raises(HeightOverflowError):
            hm.raise_footprint(0, 0, 1, 1, 5)

    def test_cannot_lower_surface(self):
        hm = HeightMap(ContainerSpec(4, 4, 10))
        hm.raise_footprint(0, 0, 2, 2, 5)
        with pytest.raises(ContractViolation):
            hm.raise_footprint(0, 0, 2, 2, 3)

    def test_json_round_trip(self):
        hm = HeightMap(ContainerSpec(3, 2, 9))
        hm.raise_footprint(0, 0, 2, 1, 4)
        back = HeightMap.from_json(hm.to_json())
        assert back.spec == hm.spec
        assert np.array_equal(back.grid, hm.grid)
        # payload is plain row-major cells
        obj = json.loads(hm.to_json())
        assert obj["cells"] == hm.grid.reshape(-1).tolist()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6),
           st.integers(1, 9), st.data())
    def test_integral_growth_bound(self, w, d, h, top, data):
        """Raising a footprint adds at least footprint * (new_top - old_max)."""
        spec = ContainerSpec(8, 8, 10)
        grid = np.array(data.draw(st.lists(
            st.lists(st.integers(0, 9), min_size=8, max_size=8),
            min_size=8, max_size=8)))
        hm = HeightMap(spec, grid)
        x0 = data.draw(st.integers(0, 8 - w))
        y0 = data.draw(st.integers(0, 8 - d))
        old_max = hm.max_under(x0, y0, w, d)
        new_top = max(top, old_max)
        before = hm.integral
        hm.raise_footprint(x0, y0, w, d, new_top)
        gained = hm.integral - before
        assert gained >= w * d * (new_top - old_max)
