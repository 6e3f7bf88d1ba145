"""Smoke test for the magicpipe Python bindings.

Build and install first:  pip install --no-build-isolation -e crates/python
"""

import math

import magicpipe as mp


def main():
    table1 = mp.PhysicalParams.preset("table1")
    levels = mp.build_levels([3, 9, 15], table1)
    assert [f.physical_qubits for f in levels] == [255, 2415, 6735]
    assert [f.duration_rounds for f in levels] == [33, 99, 165]
    assert math.isclose(levels[0].eps_out, 2.1e-3, rel_tol=0.05)
    assert math.isclose(levels[2].duration_seconds(table1) * 1e6, 66.0)

    q, t, copies = mp.sequential_baseline(levels)
    assert (q, t, copies) == (65280, 297, [256, 16, 1])
    _, _, copies = mp.parallel_baseline(levels[:2])
    assert copies[0] == 6

    assert mp.launch_threshold(15, 4, (1, 5), (1, 5), 15) == 4
    assert mp.launch_threshold(15, 4, (1, 5), (1, 10), 15) == 10
    assert mp.min_time_fill([(255, 33, 1)], 1020, 8) == (66, [4])
    assert mp.max_rate_alloc([(255, 33, 1)], 1000) == ((1, 11), [3])

    sup = mp.PhysicalParams.preset("supercond")
    corner = mp.simulate(3, 5, sup)
    corner.check_invariants()
    assert corner.stall_count == 0
    trace = mp.simulate(3, 5, sup, q_budget=4000, n_buf=6)
    trace.check_invariants()
    assert trace.total_rounds < corner.total_rounds
    assert trace.expected_delay() >= 0.0
    assert trace.to_csv().startswith("round,")

    front = mp.compose_pareto([5, 17], sup, budget_points=8)
    assert front and all(a.q < b.q and a.t > b.t for a, b in zip(front, front[1:]))
    best = min(front, key=lambda p: p.volume())

    row = mp.bench_pair(5, 7, sup, budget_points=8)
    assert row["dynamic_volume"] <= row["corner_volume"]

    try:
        mp.build_15to1(4, 1e-3, table1)
    except mp.MagicpipeError:
        pass
    else:
        raise AssertionError("even distance accepted")

    print(f"front of {len(front)} points, best q={best.q} t={best.t:.1f} buffer={best.buffer_size}")
    print(f"(5,7) reduction vs sequential {row['reduction_vs_sequential']:.1%}, "
          f"vs parallel {row['reduction_vs_parallel']:.1%}")
    print("smoke test ok")


if __name__ == "__main__":
    main()
