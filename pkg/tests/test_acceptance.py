"""Release gate: one test per tracked acceptance criterion.

Each test prints a single PASS/FAIL line with the measured values so a run
log doubles as the scorecard. Batches are shared across criteria through
module-scoped fixtures to keep total runtime in budget.
"""

import time

import numpy as np
import pytest

from tapcore.benchmark import gen_ppsg, gen_rand, replay_solution
from tapcore.ems import extract_all, extract_constrained, seed_corners
from tapcore.env import EpisodeConfig, PackEnv, replay_record, run_episode
from tapcore.geometry import ContainerSpec, HeightMap
from tapcore.policies import GreedyEmsPolicy, RandomValidPolicy, make_policy
from tapcore.runner import run_batch
from tapcore.scene import extract_ab, extract_mb, generate_scene

from oracles import (anchored_rect_oracle, box_footprint,
                     convex_intersection_area, enumerate_maximal_empty_boxes)


def report(name: str, ok: bool, detail: str):
    print(f"\n{'PASS' if ok else 'FAIL'}: {name} -- {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def rand_single():
    cfg = EpisodeConfig(source="rand", mode="single", n_boxes=20)
    t0 = time.time()
    records = run_batch(cfg, "greedy", 200, seed0=0)
    return records, time.time() - t0


@pytest.fixture(scope="module")
def ppsg_single():
    cfg = EpisodeConfig(source="ppsg", mode="single", n_boxes=10)
    t0 = time.time()
    records = run_batch(cfg, "greedy", 200, seed0=0)
    return records, time.time() - t0


@pytest.fixture(scope="module")
def rand_multi_last():
    cfg = EpisodeConfig(source="rand", mode="multi_last", n_boxes=20)
    return run_batch(cfg, "greedy", 200, seed0=0)


@pytest.fixture(scope="module")
def rand_multi_all():
    cfg = EpisodeConfig(source="rand", mode="multi_all", n_boxes=20)
    return run_batch(cfg, "greedy", 200, seed0=0)


def mean_c(records):
    return float(np.mean([r.metrics["C"] for r in records]))


class TestPpsgPerfectReplay:
    def test_thousand_instances(self):
        t0 = time.time()
        spec = ContainerSpec(100, 100, 100)
        bad = 0
        for seed in range(1000):
            inst = gen_ppsg(10, spec, np.random.default_rng(seed))
            cells = np.zeros((100, 100), dtype=np.int64)  # overlap via columns
            session = replay_solution(inst)
            c = session.containers[0]
            if c.compactness != 1.0 or not all(p.stable for p in c.placements):
                bad += 1
                continue
            for p in c.placements:
                x, y, _ = p.corner
                cells[x:x + p.dims[0], y:y + p.dims[1]] += p.dims[2]
            if cells.min() != 100 or cells.max() != 100:
                bad += 1
        elapsed = time.time() - t0
        report("PPSG perfect replay",
               bad == 0 and elapsed < 30.0,
               f"1000 instances, {bad} imperfect, {elapsed:.1f}s (budget 30s)")


class TestEmsOracleEquivalence:
    def test_500_random_maps(self):
        rng = np.random.default_rng(12345)
        spec = ContainerSpec(8, 8, 8)
        mismatches = 0
        for _ in range(500):
            grid = rng.integers(0, 9, size=(8, 8))
            hm = HeightMap(spec, grid)
            got = {(e.corner, e.dims) for e in extract_all(hm, constrained=False)}
            want = enumerate_maximal_empty_boxes(grid, 8)
            if got != want:
                mismatches += 1
                continue
            for seed in seed_corners(hm):
                e = extract_constrained(hm, seed)
                ref = (anchored_rect_oracle(grid, seed[0], seed[1], seed[2])
                       if seed[2] < 8 else None)
                if (e is None) != (ref is None):
                    mismatches += 1
                elif e is not None and (e.dims[0], e.dims[1]) != ref:
                    mismatches += 1
        report("EMS oracle equivalence", mismatches == 0,
               f"500 random 8x8 maps, {mismatches} mismatches")


class TestValidityMaskOracle:
    def test_200_small_instances(self):
        spec = (8, 8, 8)
        mismatches = 0
        for seed in range(200):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(1, 5))
            boxes = [[int(v) for v in rng.integers(1, 7, size=3)]
                     for _ in range(n)]
            cfg = EpisodeConfig(boxes=boxes, n_boxes=n, container=spec,
                                p_occl=0.0, seed=seed)
            env = PackEnv(cfg)
            obs = env.reset()
            graph = env.graph
            for view in obs.box_states:
                # access re-derived straight from the edge sets
                i, s = view.box, view.s
                mb_blocked = any(t == i for (_, t) in graph.mb)
                axis = {0: "z", 1: "z", 2: "x", 3: "x", 4: "y", 5: "y"}[s]
                sides = {"+": False, "-": False}
                for (jj, t, side) in graph.ab[axis]:
                    if t == i:
                        sides[side] = True
                access = (not mb_blocked) and not (sides["+"] and sides["-"])
                for k, (_, e) in enumerate(obs.ems):
                    fit = all(view.dims[a] <= e.dims[a] for a in range(3))
                    if bool(obs.validity[view.j, k]) != bool(fit and access):
                        mismatches += 1
        report("Validity-mask oracle", mismatches == 0,
               f"200 instances (<=4 boxes, 8^3), {mismatches} mismatches")


class TestPrecedenceOracle:
    def test_200_scenes(self):
        import math
        mismatches = 0
        cyclic = 0
        for seed in range(200):
            rng = np.random.default_rng(seed + 999)
            n = int(rng.integers(3, 11))
            dims = gen_rand(n, (0.1, 0.3), ContainerSpec(100, 100, 100), 1, rng)
            it = iter(dims)
            scene = generate_scene(n, lambda r: next(it), seed,
                                   workspace=(140.0, 140.0))
            mb = extract_mb(scene)
            # MB oracle
            want_mb = set()
            fps = [box_footprint(b.position[0], b.position[1],
                                 b.dims.x, b.dims.y, b.yaw)
                   for b in scene.boxes]
            for i, bi in enumerate(scene.boxes):
                for j, bj in enumerate(scene.boxes):
                    if i == j or convex_intersection_area(fps[i], fps[j]) <= 1e-9:
                        continue
                    if bj.z_bottom >= bi.z_top - 0.5 and bj.z_bottom > bi.z_bottom:
                        want_mb.add((j, i))
            if mb != want_mb:
                mismatches += 1
            # AB oracle for side grasps
            sweep = 2.0 * math.hypot(*scene.workspace)
            for axis in ("x", "y"):
                want = set()
                for i, bi in enumerate(scene.boxes):
                    c, s = math.cos(bi.yaw), math.sin(bi.yaw)
                    nx, ny = (c, s) if axis == "x" else (-s, c)
                    ox, oy = (-s, c) if axis == "x" else (c, s)
                    half_n = (bi.dims.x if axis == "x" else bi.dims.y) / 2.0
                    half_o = (bi.dims.y if axis == "x" else bi.dims.x) / 2.0
                    for side, sgn in (("+", 1.0), ("-", -1.0)):
                        fx, fy = sgn * nx, sgn * ny
                        p1 = (bi.position[0] + half_n * fx - half_o * ox,
                              bi.position[1] + half_n * fy - half_o * oy)
                        p2 = (bi.position[0] + half_n * fx + half_o * ox,
                              bi.position[1] + half_n * fy + half_o * oy)
                        corr = [p1, p2, (p2[0] + sweep * fx, p2[1] + sweep * fy),
                                (p1[0] + sweep * fx, p1[1] + sweep * fy)]
                        for j, bj in enumerate(scene.boxes):
                            if i == j:
                                continue
                            z_ov = (min(bi.z_top, bj.z_top)
                                    - max(bi.z_bottom, bj.z_bottom))
                            if z_ov <= 1e-9:
                                continue
                            if convex_intersection_area(corr, fps[j]) > 1e-9:
                                want.add((j, i, side))
                if extract_ab(scene, axis) != want:
                    mismatches += 1
            # MB acyclicity (Kahn)
            indeg = {i: 0 for i in range(n)}
            succ = {i: set() for i in range(n)}
            for j, i in mb:
                if i not in succ[j]:
                    succ[j].add(i)
                    indeg[i] += 1
            queue = [v for v in range(n) if indeg[v] == 0]
            seen = 0
            while queue:
                v = queue.pop()
                seen += 1
                for w in succ[v]:
                    indeg[w] -= 1
                    if indeg[w] == 0:
                        queue.append(w)
            if seen != n:
                cyclic += 1
        report("Precedence oracle", mismatches == 0 and cyclic == 0,
               f"200 scenes, {mismatches} edge-set mismatches, {cyclic} cyclic")


class TestGreedySingleVsReference:
    def test_rand_and_ppsg_cells(self, rand_single, ppsg_single):
        rand_records, t_rand = rand_single
        ppsg_records, t_ppsg = ppsg_single
        c_rand = mean_c(rand_records)
        c_ppsg = mean_c(ppsg_records)
        ok = (0.43 <= c_rand <= 0.60 and 0.68 <= c_ppsg <= 0.84
              and t_rand + t_ppsg < 300.0)
        report("Greedy Single vs reference", ok,
               f"RAND C={c_rand:.3f} (want 0.43..0.60, ref 0.514), "
               f"PPSG C={c_ppsg:.3f} (want 0.68..0.84, ref 0.764), "
               f"{t_rand + t_ppsg:.0f}s (budget 300s)")


class TestGreedyMultiLast:
    def test_rand_cell(self, rand_multi_last):
        c = mean_c(rand_multi_last)
        dnt = float(np.mean([r.metrics["dN_t"] for r in rand_multi_last]))
        ok = 0.30 <= c <= 0.46 and abs(dnt - 2.97) <= 1.0
        report("Greedy Multi-Last RAND", ok,
               f"C={c:.3f} (want 0.30..0.46, ref 0.377), "
               f"dN_t={dnt:.2f} (want 2.97 +/- 1.0)")


class TestModeOrdering:
    def test_multi_all_not_worse(self, rand_multi_all, rand_multi_last):
        c_all = mean_c(rand_multi_all)
        c_last = mean_c(rand_multi_last)
        report("Mode ordering", c_all >= c_last,
               f"Multi-All C={c_all:.3f} >= Multi-Last C={c_last:.3f} "
               f"over 200 shared-seed instances")


class TestQuantizationDirection:
    def test_strictly_decreasing(self):
        means = {}
        for u in (1, 5, 10):
            cfg = EpisodeConfig(source="rand", mode="single", n_boxes=20, u=u)
            means[u] = mean_c(run_batch(cfg, "greedy", 50, seed0=0))
        ok = means[1] > means[5] > means[10]
        report("Quantization direction", ok,
               f"C(u=1)={means[1]:.3f} > C(u=5)={means[5]:.3f} "
               f"> C(u=10)={means[10]:.3f}")


class TestDeterminism:
    def test_replay_and_protocol(self, rand_single, ppsg_single,
                                 rand_multi_last, rand_multi_all):
        from tapcore import protocol

        failures = 0
        pools = [rand_single[0], ppsg_single[0], rand_multi_last,
                 rand_multi_all]
        total = 0
        for pool in pools:
            for rec in pool:
                total += 1
                try:
                    metrics, _ = replay_record(rec)
                except Exception:
                    failures += 1
                    continue
                if metrics != rec.metrics:
                    failures += 1
        # a random-policy record replays too (revise path exercised)
        rnd = run_episode(EpisodeConfig(n_boxes=10, container=(40, 40, 40),
                                        seed=77, p_occl=1.0),
                          RandomValidPolicy(7))
        replay_record(rnd)
        total += 1

        # protocol-hosted greedy must replicate in-process trajectories
        proto_fail = 0
        srv = protocol.serve_policy(GreedyEmsPolicy(), "127.0.0.1", 0)
        try:
            host, port = srv.server_address
            for seed in range(10):
                cfg = EpisodeConfig(source="rand", mode="multi_all",
                                    n_boxes=10, container=(50, 50, 50),
                                    seed=seed)
                local = run_episode(cfg, GreedyEmsPolicy())
                remote = run_episode(cfg, make_policy(f"external:{host}:{port}"))
                if remote.steps != local.steps or remote.metrics != local.metrics:
                    proto_fail += 1
        finally:
            srv.shutdown()
        ok = failures == 0 and proto_fail == 0
        report("Determinism", ok,
               f"{total} records replayed ({failures} diverged); "
               f"10 protocol episodes ({proto_fail} trajectory mismatches)")
