"""Episode loop: observations, actions, rewards, dimension re-estimation.

The environment owns a scene (or conveyor queue), its precedence graph, and a
packing session. Policies see observed dimensions; the true dimensions are
revealed only when a box is picked, which may trigger a revise event that
re-selects the EMS for the already-grasped box state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import benchmark, scene as scene_mod
from .benchmark import quantize_dims
from .container import Mode, PackingSession, validity_mask
from .ems import Ems
from .errors import (ContractViolation, InvalidActionError, ReplayError,
                     SceneGenerationError)
from .geometry import ContainerSpec, Dims3, N_STATES, orient_dims
from .scene import Scene, accessibility_table, extract_graph, generate_scene

PROTO_VERSION = 1


@dataclass
class EpisodeConfig:
    source: str = benchmark.SOURCE_RAND
    mode: str = "single"
    n_boxes: int = 20
    n_fix: int = 5
    dist: tuple[float, float] = benchmark.DEFAULT_DIST
    container: tuple[int, int, int] = (100, 100, 100)
    u: int = 1
    p_occl: float = 0.1
    occl_delta: tuple[int, ...] = (1, 2)
    sigma: float = 0.3
    constrained_ems: bool = True
    corner_rule: str = "dbl"
    unstable_penalty: bool = False
    dense_reward: bool = False
    conveyor: int | None = None  # boxes visible at once; disables precedence
    # None: sized per source at reset (bigger pieces need more floor space)
    workspace: tuple[float, float] | None = None
    seed: int = 0
    boxes: list | None = None  # explicit unit-length dims; overrides the generator

    def to_payload(self) -> dict:
        d = asdict(self)
        d["dist"] = list(self.dist)
        d["container"] = list(self.container)
        d["occl_delta"] = list(self.occl_delta)
        if self.workspace is not None:
            d["workspace"] = list(self.workspace)
        return d

    def resolved_workspace(self) -> tuple[float, float]:
        if self.workspace is not None:
            return self.workspace
        edge = float(max(self.container))
        # PPSG pieces are container-scale, so the pile needs more floor area
        factor = 4.0 if self.source == benchmark.SOURCE_PPSG else 2.3
        return (factor * edge, factor * edge)

    @classmethod
    def from_payload(cls, payload: dict) -> "EpisodeConfig":
        d = dict(payload)
        for key in ("dist", "container", "occl_delta", "workspace"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class BoxStateView:
    j: int
    box: int
    s: int
    dims: tuple[int, int, int]
    prec: np.ndarray  # 2 x n_remaining


@dataclass
class Observation:
    step: int
    box_states: list[BoxStateView]
    ems: list[tuple[int, Ems]]
    validity: np.ndarray  # N x M int8
    containers: list[dict]
    remaining: list[int]
    spec: tuple[int, int, int]
    heightmaps: dict[int, np.ndarray] = field(default_factory=dict)

    def drop_height(self, k: int, dims: tuple[int, int, int]) -> int:
        """Rest height of ``dims`` dropped at EMS k's DBL corner."""
        ci, e = self.ems[k]
        grid = self.heightmaps[ci]
        x, y, _ = e.corner
        return int(grid[x:x + dims[0], y:y + dims[1]].max())

    def to_payload(self) -> dict:
        return {
            "step": self.step,
            "box_states": [{
                "j": b.j, "box": b.box, "s": b.s, "dims": list(b.dims),
                "prec": b.prec.tolist(),
            } for b in self.box_states],
            "ems": [{"k": k, "corner": list(e.corner), "dims": list(e.dims),
                     "kind": e.kind, "container": ci}
                    for k, (ci, e) in enumerate(self.ems)],
            "validity": self.validity.tolist(),
            "containers": self.containers,
            "remaining": self.remaining,
            "spec": list(self.spec),
            "heightmaps": {str(ci): g.reshape(-1).tolist()
                           for ci, g in self.heightmaps.items()},
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "Observation":
        box_states = [BoxStateView(o["j"], o["box"], o["s"], tuple(o["dims"]),
                                   np.asarray(o["prec"], dtype=np.int8))
                      for o in payload["box_states"]]
        ems = [(o["container"], Ems(tuple(o["corner"]), tuple(o["dims"]),
                                    o.get("kind", "original")))
               for o in payload["ems"]]
        spec = tuple(payload["spec"])
        heightmaps = {int(ci): np.asarray(flat, dtype=np.int64).reshape(spec[0], spec[1])
                      for ci, flat in payload["heightmaps"].items()}
        return cls(payload["step"], box_states, ems,
                   np.asarray(payload["validity"], dtype=np.int8),
                   payload["containers"], list(payload["remaining"]),
                   spec, heightmaps)


@dataclass
class StepResult:
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


class PackEnv:
    """One sequential packing episode driven through reset/step."""

    def __init__(self, config: EpisodeConfig):
        self.config = config
        self.spec = ContainerSpec(*config.container)
        self._obs: Observation | None = None

    # -- episode setup -----------------------------------------------------

    def reset(self) -> Observation:
        cfg = self.config
        if cfg.boxes is not None:
            self.true_dims_raw = [Dims3(*b) for b in cfg.boxes]
        else:
            data = benchmark.generate_dataset(
                cfg.source, cfg.n_boxes, cfg.seed, self.spec,
                n_fix=cfg.n_fix, dist=cfg.dist, u=1)
            self.true_dims_raw = list(data["boxes"])  # unit-length dims
        # engine-side geometry uses measurement-grid (quantized) dims
        self.true_dims = [quantize_dims(d, cfg.u) for d in self.true_dims_raw]
        self.step_index = 0
        self.session = PackingSession(
            self.spec, Mode(cfg.mode), sigma=cfg.sigma,
            unstable_penalty=cfg.unstable_penalty,
            constrained_ems=cfg.constrained_ems, corner_rule=cfg.corner_rule)
        self.consumed: set[int] = set()
        self._last_reward = 0.0
        self._prev_mean_c = 0.0
        self._done = False
        if cfg.conveyor is not None:
            self.scene = None
            self.graph = None
            self.queue = list(range(cfg.n_boxes))
            self.observed = {i: self.true_dims[i] for i in range(cfg.n_boxes)}
        else:
            sampler_dims = list(self.true_dims)
            counter = {"i": 0}

            def sampler(rng):
                d = sampler_dims[counter["i"]]
                counter["i"] += 1
                return d

            # a crowded workspace can defeat the drop sampler; enlarge and retry
            workspace = cfg.resolved_workspace()
            for attempt in range(6):
                counter["i"] = 0
                try:
                    self.scene = generate_scene(
                        cfg.n_boxes, sampler, cfg.seed, workspace=workspace,
                        sigma=cfg.sigma, p_occl=cfg.p_occl,
                        occl_delta=cfg.occl_delta, random_orientation=False)
                    break
                except SceneGenerationError:
                    if attempt == 5:
                        raise
                    workspace = (workspace[0] * 1.25, workspace[1] * 1.25)
            self.graph = extract_graph(self.scene)
            self.observed = {b.id: b.observed_dims for b in self.scene.boxes}
        self._obs = self._build_observation()
        return self._obs

    # -- observation plumbing ----------------------------------------------

    def _remaining(self) -> list[int]:
        if self.config.conveyor is not None:
            left = [i for i in self.queue if i not in self.consumed]
            return left[:self.config.conveyor]
        return [i for i in range(self.config.n_boxes) if i not in self.consumed]

    def _access_row(self, remaining: list[int]) -> np.ndarray:
        n = len(remaining)
        acc = np.zeros(n * N_STATES, dtype=bool)
        if self.config.conveyor is not None:
            for r in range(n):
                acc[r * N_STATES] = True      # top pick only: s in {0, 1}
                acc[r * N_STATES + 1] = True
            return acc
        table = accessibility_table(self.graph, frozenset(self.consumed))
        for r, i in enumerate(remaining):
            acc[r * N_STATES:(r + 1) * N_STATES] = table[i]
        return acc

    def _build_observation(self) -> Observation:
        remaining = self._remaining()
        ems_entries = self.session.candidate_ems()
        n = len(remaining)
        box_states: list[BoxStateView] = []
        dims_arr = np.zeros((n * N_STATES, 3), dtype=np.int64)
        for r, i in enumerate(remaining):
            obs_dims = self.observed[i]
            for s in range(N_STATES):
                j = r * N_STATES + s
                od = orient_dims(obs_dims, s)
                dims_arr[j] = od.as_tuple()
                if self.config.conveyor is not None:
                    prec = np.zeros((2, n), dtype=np.int8)
                else:
                    full = scene_mod.state_precedence(self.graph, i, s)
                    prec = full[:, remaining]
                box_states.append(BoxStateView(j, i, s, od.as_tuple(), prec))
        access = self._access_row(remaining)
        validity = validity_mask(dims_arr, access, ems_entries)
        containers = [{"index": ci, "packed_volume": c.packed_volume,
                       "volume": c.spec.volume, "terminated": c.terminated}
                      for ci, c in enumerate(self.session.containers)]
        heightmaps = {ci: self.session.containers[ci].hm.grid.copy()
                      for ci in self.session.exposed_containers()}
        return Observation(self.step_index, box_states, ems_entries, validity,
                           containers, remaining, self.config.container,
                           heightmaps)

    @property
    def observation(self) -> Observation:
        return self._obs

    @property
    def done(self) -> bool:
        return self._done

    # -- stepping ----------------------------------------------------------

    def _row_validity(self, dims: Dims3, s: int, accessible: bool,
                      ems_entries: list[tuple[int, Ems]]) -> np.ndarray:
        od = np.asarray(orient_dims(dims, s).as_tuple(), dtype=np.int64)[None, :]
        return validity_mask(od, np.array([accessible]), ems_entries)[0]

    def _finish(self, info: dict) -> StepResult:
        self._done = True
        reward = self.session.reward()
        if self.config.dense_reward:
            # per-step deltas already paid; terminal tops up to session reward
            reward -= self._prev_mean_c
        self._obs = None
        return StepResult(reward, True, info)

    def step(self, j: int, k: int, reviser=None) -> tuple[StepResult, Observation | None]:
        """Execute one placement decision.

        ``reviser(valid_row, context)`` is consulted when the revealed true
        dims differ from the observed ones; it must return a new EMS index
        into the refreshed row, or None to accept the engine default (lowest
        rest height, then smallest index)."""
        if self._done:
            raise InvalidActionError("episode already finished")
        obs = self._obs
        if not (0 <= j < len(obs.box_states)) or not (0 <= k < len(obs.ems)):
            raise InvalidActionError(f"action ({j}, {k}) out of range")
        if obs.validity[j, k] != 1:
            raise InvalidActionError(f"action ({j}, {k}) is masked invalid")
        view = obs.box_states[j]
        box_id, s = view.box, view.s
        true_dims = self.true_dims[box_id]
        observed = self.observed[box_id]
        revised = true_dims != observed
        info = {"box": box_id, "s": s, "revised": bool(revised),
                "unstable": False, "containers": self.session.n_containers}
        ems_entries = obs.ems
        if revised:
            accessible_flag = True  # already validated against the mask
            row = self._row_validity(true_dims, s, accessible_flag, ems_entries)
            k = self._choose_revised(row, ems_entries, true_dims, s, reviser)
            if k is None and self.session.mode is not Mode.SINGLE:
                self.session.open_new_container()
                ems_entries = self.session.candidate_ems()
                row = self._row_validity(true_dims, s, accessible_flag, ems_entries)
                k = self._choose_revised(row, ems_entries, true_dims, s, reviser)
            if k is None:
                # the grasped box cannot be packed in this state at all
                self.consumed.add(box_id)
                if self.session.mode is Mode.SINGLE:
                    return self._finish(info), None
                return self._advance(info)
        ci, e = ems_entries[k]
        od = orient_dims(true_dims, s)
        placement = self.session.place(
            ci, e, od.as_tuple(), box_id, s,
            counted_volume=self.true_dims_raw[box_id].volume)
        self.consumed.add(box_id)
        info["k_final"] = k
        if not placement.stable:
            info["unstable"] = True
            if self.session.mode is Mode.SINGLE:
                return self._finish(info), None
            self.session.open_new_container()
        return self._advance(info)

    def _choose_revised(self, row: np.ndarray, ems_entries, true_dims, s,
                        reviser) -> int | None:
        valid = np.nonzero(row)[0]
        if len(valid) == 0:
            return None
        if reviser is not None:
            heightmaps = {ci: self.session.containers[ci].hm.grid
                          for ci in self.session.exposed_containers()}
            k = reviser(row, {"ems": ems_entries, "dims": orient_dims(true_dims, s),
                              "heightmaps": heightmaps, "env": self,
                              "spec": self.config.container})
            if k is None or not (0 <= k < len(row)) or row[k] != 1:
                raise InvalidActionError(f"revise returned invalid EMS index {k}")
            return int(k)
        od = orient_dims(true_dims, s).as_tuple()
        best = min(valid, key=lambda kk: (
            self.session.drop_height(ems_entries[kk][0], ems_entries[kk][1], od), kk))
        return int(best)

    def _advance(self, info: dict) -> tuple[StepResult, Observation | None]:
        self.step_index += 1
        self._obs = self._build_observation()
        info["containers"] = self.session.n_containers
        if not self._obs.remaining:
            return self._finish(info), None
        if not self._obs.validity.any():
            if self.session.mode is Mode.SINGLE:
                return self._finish(info), None
            self.session.open_new_container()
            self._obs = self._build_observation()
            info["containers"] = self.session.n_containers
            if not self._obs.validity.any():
                return self._finish(info), None
        reward = 0.0
        if self.config.dense_reward:
            mean_c = float(np.mean([c.compactness for c in self.session.containers]))
            reward = mean_c - self._prev_mean_c
            self._prev_mean_c = mean_c
        return StepResult(reward, False, info), self._obs

    def source_volumes(self) -> list[int]:
        return [d.volume for d in self.true_dims_raw]

    def metrics(self) -> dict:
        return self.session.metrics(self.source_volumes())


@dataclass
class EpisodeRecord:
    config: dict
    steps: list[dict]
    metrics: dict
    reward: float

    def to_json(self) -> str:
        return json.dumps({"proto": PROTO_VERSION, "config": self.config,
                           "steps": self.steps, "metrics": self.metrics,
                           "reward": self.reward}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EpisodeRecord":
        obj = json.loads(text)
        return cls(obj["config"], obj["steps"], obj["metrics"], obj["reward"])


def run_episode(config: EpisodeConfig, policy) -> EpisodeRecord:
    """Drive one episode to completion with an in-process policy."""
    env = PackEnv(config)
    obs = env.reset()
    steps: list[dict] = []
    reward = 0.0
    while True:
        decision = policy.choose(obs)
        if decision is None:
            raise InvalidActionError("policy returned no decision on a valid mask")
        j, k = decision

        def reviser(row, ctx):
            return policy.revise(obs, j, row, ctx)

        result, obs = env.step(j, k, reviser=reviser)
        entry = {"j": j, "k": k, "k_final": result.info.get("k_final"),
                 "revised": result.info["revised"],
                 "unstable": result.info["unstable"]}
        steps.append(entry)
        reward += result.reward
        if result.done:
            break
    metrics = env.metrics()
    if hasattr(policy, "finish"):
        policy.finish(reward, metrics)
    return EpisodeRecord(config.to_payload(), steps, metrics, reward)


def replay_record(record: EpisodeRecord) -> tuple[dict, "PackEnv"]:
    """Re-execute a recorded trajectory; returns (metrics, finished env).

    Raises ReplayError with the first divergent step on mismatch."""
    config = EpisodeConfig.from_payload(record.config)
    env = PackEnv(config)
    env.reset()
    for t, entry in enumerate(record.steps):
        if env.done:
            raise ReplayError(f"step {t}: episode ended early on replay")

        def reviser(row, ctx, entry=entry, t=t):
            kf = entry.get("k_final")
            if kf is None or row[kf] != 1:
                raise ReplayError(f"step {t}: recorded revise target invalid")
            return kf

        try:
            result, _ = env.step(entry["j"], entry["k"], reviser=reviser)
        except (InvalidActionError, ContractViolation) as exc:
            raise ReplayError(f"step {t}: {exc}") from exc
        if bool(result.info["revised"]) != bool(entry["revised"]) \
                or bool(result.info["unstable"]) != bool(entry["unstable"]):
            raise ReplayError(f"step {t}: step outcome diverged")
    if not env.done:
        raise ReplayError("record ended before the episode finished")
    metrics = env.metrics()
    if any(abs(metrics[k] - record.metrics[k]) > 1e-12 for k in ("C",)) \
            or metrics["N_t"] != record.metrics["N_t"]:
        raise ReplayError("replayed metrics differ from recorded metrics")
    return metrics, env
