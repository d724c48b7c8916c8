"""Scenario files: a YAML schema tying together arm, obstacles, noise,
query, planner parameters, and validation settings.

The loader validates every field with its path in error messages, fills
documented defaults, and can serialize the effective configuration back
out so reports echo exactly what was used.  See docs/scenario-schema.md
for the field-by-field reference.
"""

import math
import os
from dataclasses import dataclass

import numpy as np
import yaml

from riskplan.collision import (
    CircleObstacle,
    Environment,
    HalfPlaneObstacle,
    PolygonObstacle,
)
from riskplan.dynamics import ProcessNoiseModel
from riskplan.kinematics import ArmSpec, ObservationModel
from riskplan.lqg import NoiseModel
from riskplan.planner import PlannerParams

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Scenario file failed to parse or validate."""


@dataclass(frozen=True)
class Scenario:
    """Fully validated experiment definition."""

    name: str
    arm: ArmSpec
    environment: Environment
    noise: NoiseModel
    start: np.ndarray
    goal: np.ndarray
    planner_params: PlannerParams
    validation_runs: int
    validation_seed: int

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))
        n = self.arm.n_joints
        if self.start.shape != (n,) or self.goal.shape != (n,):
            raise ScenarioError("query start/goal must match the joint count")
        if self.validation_runs < 1:
            raise ScenarioError("validation.runs must be >= 1")


def _require(mapping, key, path):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ScenarioError(f"{path}.{key}: required field is missing")
    return mapping[key]


def _floats(value, path, length=None):
    if not isinstance(value, (list, tuple)):
        raise ScenarioError(f"{path}: expected a list of numbers")
    try:
        arr = np.array([float(v) for v in value])
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}: entries must be numbers") from None
    if length is not None and arr.size != length:
        raise ScenarioError(f"{path}: expected {length} entries, got {arr.size}")
    return arr


def _scalar(value, path, kind=float):
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}: expected a {kind.__name__}") from None


def _parse_arm(data) -> ArmSpec:
    lengths = _floats(_require(data, "link_lengths", "arm"), "arm.link_lengths")
    for i, value in enumerate(lengths):
        if value <= 0:
            raise ScenarioError(f"arm.link_lengths[{i}]: must be > 0, got {value}")
    n = lengths.size
    radii = data.get("link_radii", [0.0] * n)
    radii = _floats(radii, "arm.link_radii", n)
    for i, value in enumerate(radii):
        if value < 0:
            raise ScenarioError(f"arm.link_radii[{i}]: must be >= 0, got {value}")
    base = _floats(data.get("base_position", [0.0, 0.0]), "arm.base_position", 2)
    limits_raw = data.get("joint_limits")
    if limits_raw is None:
        limits = np.tile([-math.pi, math.pi], (n, 1))
    else:
        if not isinstance(limits_raw, (list, tuple)) or len(limits_raw) != n:
            raise ScenarioError(f"arm.joint_limits: expected {n} [low, high] pairs")
        limits = np.stack(
            [_floats(pair, f"arm.joint_limits[{i}]", 2) for i, pair in enumerate(limits_raw)]
        )
        for i, (low, high) in enumerate(limits):
            if low >= high:
                raise ScenarioError(f"arm.joint_limits[{i}]: low must be < high")
    try:
        return ArmSpec(lengths, radii, base, limits)
    except ValueError as error:
        raise ScenarioError(f"arm: {error}") from None


def _parse_obstacle(data, path):
    kind = _require(data, "type", path)
    try:
        if kind == "circle":
            return CircleObstacle(
                _floats(_require(data, "center", path), f"{path}.center", 2),
                _scalar(_require(data, "radius", path), f"{path}.radius"),
            )
        if kind == "halfplane":
            return HalfPlaneObstacle(
                _floats(_require(data, "normal", path), f"{path}.normal", 2),
                _scalar(_require(data, "offset", path), f"{path}.offset"),
            )
        if kind == "polygon":
            vertices = _require(data, "vertices", path)
            if not isinstance(vertices, (list, tuple)):
                raise ScenarioError(f"{path}.vertices: expected a list of points")
            points = np.stack(
                [_floats(v, f"{path}.vertices[{i}]", 2) for i, v in enumerate(vertices)]
            )
            return PolygonObstacle(points)
    except ValueError as error:
        raise ScenarioError(f"{path}: {error}") from None
    raise ScenarioError(f"{path}.type: unknown obstacle type {kind!r}")


def _parse_noise(data, n_joints) -> NoiseModel:
    data = data or {}
    blocks = data.get("process_blocks")
    if blocks is not None:
        if not isinstance(blocks, (list, tuple)) or len(blocks) != n_joints:
            raise ScenarioError(f"noise.process_blocks: expected {n_joints} 2x2 blocks")
        stacked = np.stack(
            [
                np.stack(
                    [_floats(row, f"noise.process_blocks[{j}][{r}]", 2) for r, row in enumerate(block)]
                )
                for j, block in enumerate(blocks)
            ]
        )
        try:
            process = ProcessNoiseModel(stacked)
        except ValueError as error:
            raise ScenarioError(f"noise.process_blocks: {error}") from None
    else:
        process = ProcessNoiseModel.from_stds(
            _scalar(data.get("process_position_std", 0.0), "noise.process_position_std"),
            _scalar(data.get("process_velocity_std", 0.0), "noise.process_velocity_std"),
            n_joints,
        )

    cov = data.get("observation_covariance")
    if cov is not None:
        matrix = np.stack(
            [_floats(row, f"noise.observation_covariance[{r}]", 2) for r, row in enumerate(cov)]
        )
    else:
        std = _scalar(data.get("observation_std", 0.0), "noise.observation_std")
        matrix = std * std * np.eye(2)
    scaling_raw = data.get("observation_scaling")
    scaling = None
    if scaling_raw is not None:
        scaling = np.stack(
            [_floats(row, f"noise.observation_scaling[{r}]", 2) for r, row in enumerate(scaling_raw)]
        )
    try:
        observation = ObservationModel(matrix, scaling)
    except ValueError as error:
        raise ScenarioError(f"noise.observation: {error}") from None

    initial_raw = data.get("initial_covariance")
    if initial_raw is not None:
        initial = np.stack(
            [
                _floats(row, f"noise.initial_covariance[{r}]", 2 * n_joints)
                for r, row in enumerate(initial_raw)
            ]
        )
    else:
        pos_std = _scalar(data.get("initial_position_std", 0.0), "noise.initial_position_std")
        vel_std = _scalar(data.get("initial_velocity_std", 0.0), "noise.initial_velocity_std")
        initial = np.diag([pos_std**2] * n_joints + [vel_std**2] * n_joints)
    try:
        return NoiseModel(process, observation, initial)
    except ValueError as error:
        raise ScenarioError(f"noise.initial_covariance: {error}") from None


def _parse_planner(data) -> PlannerParams:
    data = data or {}
    known = {
        "horizon",
        "dt",
        "chance_constraint",
        "d_step",
        "d_safe",
        "max_iterations",
        "convergence_tolerance",
        "time_budget",
        "alpha",
        "eta",
        "nodes_per_dim",
        "nodes_per_dim_final",
        "penalized_radius",
    }
    unknown = set(data) - known
    if unknown:
        raise ScenarioError(f"planner: unknown fields {sorted(unknown)}")
    kwargs = {}
    for key in known & set(data):
        if data[key] is None:
            continue
        kind = int if key in {"horizon", "max_iterations", "nodes_per_dim", "nodes_per_dim_final"} else float
        kwargs[key] = _scalar(data[key], f"planner.{key}", kind)
    try:
        return PlannerParams(**kwargs)
    except ValueError as error:
        raise ScenarioError(f"planner: {error}") from None


def parse_scenario(data: dict, name: str = "scenario") -> Scenario:
    """Build a validated Scenario from parsed YAML data."""
    if not isinstance(data, dict):
        raise ScenarioError("top level: expected a mapping")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"schema_version: unsupported version {version}")
    arm = _parse_arm(_require(data, "arm", "top level"))
    obstacles = []
    for i, entry in enumerate(data.get("obstacles", []) or []):
        obstacles.append(_parse_obstacle(entry, f"obstacles[{i}]"))
    environment = Environment(arm, tuple(obstacles))
    noise = _parse_noise(data.get("noise"), arm.n_joints)
    query = _require(data, "query", "top level")
    start = _floats(_require(query, "start", "query"), "query.start", arm.n_joints)
    goal = _floats(_require(query, "goal", "query"), "query.goal", arm.n_joints)
    planner_params = _parse_planner(data.get("planner"))
    validation = data.get("validation") or {}
    runs = _scalar(validation.get("runs", 100), "validation.runs", int)
    seed = _scalar(validation.get("base_seed", 0), "validation.base_seed", int)
    if runs < 1:
        raise ScenarioError(f"validation.runs: must be >= 1, got {runs}")
    return Scenario(
        name=str(data.get("name", name)),
        arm=arm,
        environment=environment,
        noise=noise,
        start=start,
        goal=goal,
        planner_params=planner_params,
        validation_runs=runs,
        validation_seed=seed,
    )


def load_scenario(path) -> Scenario:
    """Load and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = yaml.safe_load(handle)
    except OSError as error:
        raise ScenarioError(f"cannot read {path}: {error}") from None
    except yaml.YAMLError as error:
        mark = getattr(error, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioError(f"{path}: YAML parse error{where}: {error}") from None
    import os

    stem = os.path.splitext(os.path.basename(str(path)))[0]
    return parse_scenario(data, name=stem)


def _matrix_list(matrix) -> list:
    return [[float(v) for v in row] for row in np.asarray(matrix)]


def scenario_to_dict(scenario: Scenario) -> dict:
    """Effective configuration as a plain dict (all defaults expanded)."""
    obstacles = []
    for obstacle in scenario.environment.obstacles:
        if isinstance(obstacle, CircleObstacle):
            obstacles.append(
                {
                    "type": "circle",
                    "center": [float(v) for v in obstacle.center],
                    "radius": obstacle.radius,
                }
            )
        elif isinstance(obstacle, HalfPlaneObstacle):
            obstacles.append(
                {
                    "type": "halfplane",
                    "normal": [float(v) for v in obstacle.normal],
                    "offset": obstacle.offset,
                }
            )
        else:
            obstacles.append(
                {"type": "polygon", "vertices": _matrix_list(obstacle.vertices)}
            )
    params = scenario.planner_params
    return {
        "schema_version": SCHEMA_VERSION,
        "name": scenario.name,
        "arm": {
            "link_lengths": [float(v) for v in scenario.arm.link_lengths],
            "link_radii": [float(v) for v in scenario.arm.link_radii],
            "base_position": [float(v) for v in scenario.arm.base_position],
            "joint_limits": _matrix_list(scenario.arm.joint_limits),
        },
        "obstacles": obstacles,
        "noise": {
            "process_blocks": [
                _matrix_list(block) for block in scenario.noise.process.per_joint_covariance
            ],
            "observation_covariance": _matrix_list(
                scenario.noise.observation.noise_covariance
            ),
            "observation_scaling": _matrix_list(scenario.noise.observation.noise_scaling),
            "initial_covariance": _matrix_list(scenario.noise.initial_covariance),
        },
        "query": {
            "start": [float(v) for v in scenario.start],
            "goal": [float(v) for v in scenario.goal],
        },
        "planner": {
            "horizon": params.horizon,
            "dt": params.dt,
            "chance_constraint": params.chance_constraint,
            "d_step": params.d_step,
            "d_safe": params.d_safe,
            "max_iterations": params.max_iterations,
            "convergence_tolerance": params.convergence_tolerance,
            "time_budget": params.time_budget,
            "alpha": params.alpha,
            "eta": params.eta,
            "nodes_per_dim": params.nodes_per_dim,
            "nodes_per_dim_final": params.nodes_per_dim_final,
            "penalized_radius": params.penalized_radius,
        },
        "validation": {
            "runs": scenario.validation_runs,
            "base_seed": scenario.validation_seed,
        },
    }


def serialize_scenario(scenario: Scenario) -> str:
    """YAML text of the effective configuration; load() round-trips it."""
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False)
