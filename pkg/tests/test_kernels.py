import math
from time import perf_counter_ns

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stencil_lab.kernels import (FD5, FD7, FE9, FE27, STENCILS, CostModel,
                                 NumericsError, ScalarCellKernel, residual_max,
                                 update_cell, update_cells_batch)
from stencil_lab.mesh import Mesh, init, make_mesh

ALL_KINDS = list(STENCILS.values())


# -- stencil shapes ----------------------------------------------------------

def test_stencil_shapes():
    assert len(FD5.offsets) == 4 and FD5.centre_weight == 4.0
    assert len(FE9.offsets) == 8 and FE9.centre_weight == 8.0 / 3.0
    assert len(FD7.offsets) == 6 and FD7.centre_weight == 6.0
    assert len(FE27.offsets) == 26 and FE27.centre_weight == 26.0
    assert all(w == -1.0 for w in FD5.weights + FD7.weights + FE27.weights)
    assert all(w == -1.0 / 3.0 for w in FE9.weights)


def test_row_sums_zero():
    for kind in ALL_KINDS:
        assert abs(kind.centre_weight + sum(kind.weights)) < 1e-12


def test_offsets_canonical_order():
    # outer axis slowest, x fastest
    assert FD5.offsets == ((0, -1), (-1, 0), (1, 0), (0, 1))
    assert FD7.offsets[0] == (0, 0, -1) and FD7.offsets[-1] == (0, 0, 1)
    assert len(set(FE27.offsets)) == 26
    assert all(max(map(abs, off)) == 1 for off in FE27.offsets)


def test_adjacency_predicate():
    assert FD5.is_adjacent((2, 2), (3, 2))
    assert not FD5.is_adjacent((2, 2), (3, 3))
    assert FE9.is_adjacent((2, 2), (3, 3))
    assert not FE9.is_adjacent((2, 2), (2, 2))
    assert FD7.is_adjacent((1, 1, 1), (1, 1, 2))
    assert not FD7.is_adjacent((1, 1, 1), (1, 2, 2))
    assert FE27.is_adjacent((1, 1, 1), (2, 2, 2))


# -- cost model --------------------------------------------------------------

def test_cost_const_always_k():
    model = CostModel("const", 100)
    assert all(model.k_for_rank(r, 1000) == 100 for r in (0, 1, 500, 999))


def test_cost_ramp_endpoints():
    model = CostModel("ramp")
    assert model.k_for_rank(0, 100) == 0
    assert model.k_for_rank(99, 100) == 99


def test_cost_rank_out_of_range():
    model = CostModel("ramp")
    with pytest.raises(ValueError):
        model.k_for_rank(100, 100)
    with pytest.raises(ValueError):
        model.k_for_rank(-1, 100)


@given(st.integers(1, 5000))
def test_cost_ramp_is_balanced_step_function(total):
    table = CostModel("ramp").k_table(total)
    assert (np.diff(table) >= 0).all()
    assert table[0] == 0 and table[-1] <= 99
    counts = np.bincount(table, minlength=100)
    lo, hi = total // 100, -(-total // 100)
    assert ((counts == lo) | (counts == hi)).all()


def test_cost_ramp_coverage_above_100_cells():
    table = CostModel("ramp").k_table(144)
    assert set(table.tolist()) == set(range(100))


def test_cost_describe_parse_forms():
    assert CostModel("const", 7).describe() == "const:7"
    assert CostModel("ramp").describe() == "ramp"
    with pytest.raises(ValueError):
        CostModel("linear")


# -- single-cell update ------------------------------------------------------

def test_update_fd5_all_neighbours_one():
    m = Mesh(2, 3)
    m.values.fill(1.0)
    assert update_cell(m, FD5, (2, 2)) == 1.0


def test_update_fe9_all_neighbours_two():
    m = Mesh(2, 3)
    m.values.fill(2.0)
    assert update_cell(m, FE9, (2, 2)) == 2.0


def test_update_fd5_single_neighbour():
    m = Mesh(2, 3)
    m.values[m.flat_index((2, 1))] = 1.0   # north neighbour of (2,2)
    assert update_cell(m, FD5, (2, 2)) == 0.25


def test_update_requires_interior():
    m = Mesh(2, 3)
    with pytest.raises(IndexError):
        update_cell(m, FD5, (0, 1))


@settings(max_examples=40)
@given(st.sampled_from(ALL_KINDS), st.floats(-1e6, 1e6))
def test_constant_mesh_is_fixed_point(kind, value):
    m = Mesh(kind.dim, 3)
    m.values.fill(value)
    centre = (2,) * kind.dim
    got = update_cell(m, kind, centre, k=0)
    assert got == pytest.approx(value, rel=1e-12, abs=1e-9)


def test_cost_work_is_bitwise_inert():
    for kind in ALL_KINDS:
        a = make_mesh(kind.dim, 4, seed=5)
        b = make_mesh(kind.dim, 4, seed=5)
        for coord in a.interior_coords():
            update_cell(a, kind, coord, k=0)
            update_cell(b, kind, coord, k=100)
        assert np.array_equal(a.values, b.values)


def test_cost_work_is_consumed():
    m = make_mesh(2, 4, seed=5)
    kernel = ScalarCellKernel(m, FD5)
    flat = m.flat_index((2, 2))
    nbrs = [flat + d for d in FD5.flat_offsets(m)]
    kernel.update(nbrs, flat, 10)
    assert kernel.work_sum != 0.0


def test_update_raises_on_nonfinite():
    m = make_mesh(2, 3, seed=1)
    m.values[m.flat_index((1, 2))] = math.inf
    with pytest.raises(NumericsError):
        update_cell(m, FD5, (2, 2))


# -- batch update vs scalar --------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.sampled_from(ALL_KINDS), st.integers(0, 2 ** 31), st.integers(0, 3))
def test_batch_matches_scalar_bitwise(kind, seed, k):
    # one colour class is mutually non-adjacent by construction
    from stencil_lab.strategies import SweepPlan

    n = 6 if kind.dim == 2 else 4
    a = make_mesh(kind.dim, n, seed=seed)
    b = make_mesh(kind.dim, n, seed=seed)
    plan = SweepPlan(a, kind, CostModel("const", k))
    cells = plan.colour_cells[0]
    update_cells_batch(a, kind, cells, k)
    kernel = ScalarCellKernel(b, kind)
    deltas = kind.flat_offsets(b)
    for flat in cells.tolist():
        kernel.update([flat + d for d in deltas], flat, k)
    assert np.array_equal(a.values, b.values)


def test_batch_raises_on_nonfinite():
    m = make_mesh(2, 4, seed=1)
    m.values[m.flat_index((0, 1))] = math.nan
    with pytest.raises(NumericsError):
        update_cells_batch(m, FD5, np.array([m.flat_index((1, 1))]), 0)


# -- residual ----------------------------------------------------------------

def test_residual_zero_on_constant_mesh():
    for kind in ALL_KINDS:
        m = Mesh(kind.dim, 3)
        m.values.fill(4.25)
        if kind is FE9:
            # 1/3 is not representable: the row sum cancels only to epsilon
            assert residual_max(m, kind) < 16 * np.finfo(np.float64).eps * 4.25
        else:
            assert residual_max(m, kind) == 0.0


def test_residual_of_unit_perturbation_is_centre_weight():
    m = Mesh(2, 5)
    m.values.fill(1.0)
    m.values[m.flat_index((3, 3))] += 1.0
    assert residual_max(m, FD5) == pytest.approx(4.0)


def test_residual_reaches_tolerance_under_serial_sweeps():
    from stencil_lab.strategies import SweepPlan, sweep_serial

    m = make_mesh(2, 9, seed=3)
    plan = SweepPlan(m, FD5, CostModel("const", 0))
    for _ in range(400):
        sweep_serial(m, FD5, plan.cost, plan=plan)
        if residual_max(m, FD5) < 1e-10:
            break
    assert residual_max(m, FD5) < 1e-10


# -- work monotonicity -------------------------------------------------------

def _median_update_ns(kernel, nbrs, flat, k, calls):
    times = []
    for _ in range(calls):
        t0 = perf_counter_ns()
        kernel.update(nbrs, flat, k)
        times.append(perf_counter_ns() - t0)
    times.sort()
    return times[len(times) // 2]


def test_update_walltime_monotone_in_k():
    m = make_mesh(2, 4, seed=2)
    kernel = ScalarCellKernel(m, FD5)
    flat = m.flat_index((2, 2))
    nbrs = [flat + d for d in FD5.flat_offsets(m)]
    t0 = _median_update_ns(kernel, nbrs, flat, 0, 1000)
    t40 = _median_update_ns(kernel, nbrs, flat, 40, 1000)
    t100 = _median_update_ns(kernel, nbrs, flat, 100, 1000)
    assert t0 < t40 < t100
