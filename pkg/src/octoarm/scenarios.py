"""Scenario ingestion and experiment orchestration.

Config grammar: flat ``key = value`` lines, ``#`` comments. Values are
numbers, strings, or (nested) array literals; physical quantities carry a
unit either inside a quoted string (``E = "10 kPa"``) or after an array
literal (``targets = [[12, 14]] cm``). All values are converted to SI at
load time.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import DynamicState, simulate, stretched_initial_state
from .muscles import ActivationSet, MuscleSet, MuscleSpec
from .rod import RodModel, make_grid
from .shaping import Circle, TaskSpec, solve_task

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Configuration parse or validation failure (CLI exit code 2)."""


# unit -> (dimension, SI scale)
UNITS = {
    "m": ("length", 1.0),
    "cm": ("length", 1e-2),
    "mm": ("length", 1e-3),
    "Pa": ("pressure", 1.0),
    "kPa": ("pressure", 1e3),
    "MPa": ("pressure", 1e6),
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    "kg/m^3": ("density", 1.0),
    "kg/s": ("damping", 1.0),
    "1/m": ("curvature", 1.0),
}

# key -> (dimension or python type, default); None default means optional
KEYS = {
    "rest_length": ("length", 0.20),
    "base_radius": ("length", 0.012),
    "tip_radius": ("length", 0.0012),
    "youngs_modulus": ("pressure", 10.0e3),
    "shear_modulus": ("pressure", 40.0e3 / 9.0),
    "density": ("density", 1050.0),
    "damping": ("damping", 0.02),
    "n_elements": (int, 100),
    "lm_max_stress": ("pressure", 19.89e3),
    "tm_max_stress": ("pressure", 13.26e3),
    "lm_area_fraction": (float, 1.0 / 9.0),
    "tm_area_fraction": (float, 1.0 / 12.0),
    "lm_offset_fraction": (float, 2.0 / 3.0),
    "targets": ("length_array", None),
    "tip_weight": (float, 1.0e5),
    "grasp_center": ("length_array", None),
    "grasp_radius": ("length", None),
    "grasp_weight": (float, 1.0e5),
    "grasp_window": (list, [0.4, 1.0]),  # fractions of rest_length
    "grasp_distance": (str, "surface"),
    "obstacle_weight": (float, 1.0e5),
    "learning_rate": (float, 1.0e-8),
    "max_iters": (int, 100_000),
    "grad_tol": (float, 1.0e-6),
    "dt": ("time", 1.0e-5),
    "segment_duration": ("time", 2.0),
    "sample_stride": (int, 1000),
    "tip_perturbation": ("length", 0.01),
    "activation_csv": (str, None),
    "seed": (int, 0),
}

_UNIT_RE = re.compile(r"^(.*?)\s+([A-Za-z][A-Za-z0-9/^]*)\s*$")


def _parse_value(key: str, raw: str, lineno: int):
    dim, _default = KEYS[key]
    raw = raw.strip()
    unit = None
    # Quoted string: either "<number> <unit>" or a plain string value.
    if raw and raw[0] in "'\"":
        try:
            inner = ast.literal_eval(raw)
        except (SyntaxError, ValueError) as exc:
            raise ConfigError(f"line {lineno}: bad string for {key}") from exc
        m = _UNIT_RE.match(str(inner))
        if m and m.group(2) in UNITS:
            raw, unit = m.group(1), m.group(2)
        else:
            if dim is not str:
                raise ConfigError(
                    f"line {lineno}: {key} expects a quantity, got string "
                    f"{inner!r}")
            return inner
    else:
        m = _UNIT_RE.match(raw)
        if m and m.group(2) in UNITS:
            raw, unit = m.group(1), m.group(2)
    try:
        value = ast.literal_eval(raw)
    except (SyntaxError, ValueError) as exc:
        raise ConfigError(f"line {lineno}: cannot parse value for {key}") \
            from exc

    if unit is not None:
        unit_dim, scale = UNITS[unit]
        expected = {"length_array": "length"}.get(dim, dim)
        if unit_dim != expected:
            raise ConfigError(
                f"line {lineno}: unit {unit} ({unit_dim}) does not match "
                f"{key} ({expected})")
        value = (np.asarray(value, dtype=float) * scale).tolist() \
            if isinstance(value, list) else float(value) * scale
    if dim in ("length", "pressure", "time", "density", "damping",
               "curvature"):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"line {lineno}: {key} must be a number")
        return float(value)
    if dim == "length_array":
        return np.asarray(value, dtype=float).tolist()
    if dim is int:
        if not isinstance(value, int):
            raise ConfigError(f"line {lineno}: {key} must be an integer")
        return value
    if dim is float:
        if not isinstance(value, (int, float)):
            raise ConfigError(f"line {lineno}: {key} must be a number")
        return float(value)
    if dim is list:
        if not isinstance(value, list):
            raise ConfigError(f"line {lineno}: {key} must be a list")
        return value
    return value


@dataclass
class ScenarioConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def rod_model(self) -> RodModel:
        v = self.values
        try:
            return RodModel(
                rest_length=v["rest_length"],
                base_radius=v["base_radius"],
                tip_radius=v["tip_radius"],
                youngs=v["youngs_modulus"],
                shear_mod=v["shear_modulus"],
                density=v["density"],
                damping=v["damping"],
                n_elements=v["n_elements"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def muscle_set(self) -> MuscleSet:
        v = self.values
        try:
            lm = dict(max_stress=v["lm_max_stress"],
                      area_fraction=v["lm_area_fraction"],
                      offset_fraction=v["lm_offset_fraction"])
            return MuscleSet(
                lm_top=MuscleSpec(kind="lm_top", **lm),
                lm_bottom=MuscleSpec(kind="lm_bottom", **lm),
                tm=MuscleSpec(kind="tm", max_stress=v["tm_max_stress"],
                              area_fraction=v["tm_area_fraction"],
                              offset_fraction=0.0),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def task_for_target(self, target) -> TaskSpec:
        v = self.values
        return TaskSpec(
            tip_target=tuple(target),
            tip_weight=v["tip_weight"],
            learning_rate=v["learning_rate"],
            max_iters=v["max_iters"],
            grad_tol=v["grad_tol"],
        )

    def grasp_task(self) -> TaskSpec:
        v = self.values
        obj = Circle(center=tuple(v["grasp_center"]),
                     radius=v["grasp_radius"])
        L0 = v["rest_length"]
        window = (v["grasp_window"][0] * L0, v["grasp_window"][1] * L0)
        return TaskSpec(
            tip_target=None,
            tip_weight=0.0,
            grasp_object=obj,
            grasp_weight=v["grasp_weight"],
            grasp_window=window,
            grasp_distance=v["grasp_distance"],
            obstacles=(obj,),
            obstacle_weights=(v["obstacle_weight"],),
            learning_rate=v["learning_rate"],
            max_iters=v["max_iters"],
            grad_tol=v["grad_tol"],
        )


def load_config(path) -> ScenarioConfig:
    """Parse and validate a scenario file; defaults fill missing keys."""
    text = Path(path).read_text()
    values = {k: d for k, (_, d) in KEYS.items()}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, lineno)

    cfg = ScenarioConfig(values=values)
    cfg.rod_model()  # validates physical bounds
    cfg.muscle_set()
    if values["dt"] <= 0 or values["segment_duration"] <= 0:
        raise ConfigError("dt and segment_duration must be positive")
    if values["sample_stride"] < 1:
        raise ConfigError("sample_stride must be >= 1")
    w = values["grasp_window"]
    if not (0.0 <= w[0] <= w[1] <= 1.0):
        raise ConfigError("grasp_window fractions must satisfy 0<=s1<=s2<=1")
    return cfg


def require_task(cfg: ScenarioConfig, kind: str) -> None:
    if kind == "reach" and not cfg.values.get("targets"):
        raise ConfigError("no reaching targets in config (empty task list)")
    if kind == "grasp" and (cfg.values.get("grasp_center") is None
                            or cfg.values.get("grasp_radius") is None):
        raise ConfigError("no grasp object in config")


@dataclass
class RunArtifacts:
    trajectory_csv: str | None
    activation_csvs: list
    optimizer_jsonl: str | None
    svg_paths: list
    summary_json: str


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def render_svg(path, model: RodModel, configurations, objects=(), targets=()):
    """Deterministic SVG snapshot of rod shapes, objects, and targets.

    World coordinates are meters; the canvas transform (documented in the
    header comment) maps x right and y up with 1000 px per meter.
    """
    grid = make_grid(model)
    node_radius = np.empty(model.n_elements + 1)
    node_radius[0] = model.base_radius
    node_radius[-1] = model.tip_radius
    node_radius[1:-1] = 0.5 * (grid.radius[:-1] + grid.radius[1:])

    lines = []
    lines.append('<?xml version="1.0" encoding="UTF-8"?>')
    lines.append(
        "<!-- world meters; transform: px = 1000*(x+0.05), "
        "py = 1000*(0.30-y) -->")
    lines.append(
        '<svg xmlns="http://www.w3.org/2000/svg" width="400" height="600" '
        'viewBox="0 0 400 600">')

    def X(x):
        return _fmt(1000.0 * (x + 0.05))

    def Y(y):
        return _fmt(1000.0 * (0.30 - y))

    for cx, cy, rad, color in [(o.center[0], o.center[1], o.radius, "#e8960c")
                               for o in objects] + \
                              [(t[0], t[1], 0.004, "#d84315")
                               for t in targets]:
        lines.append(
            f'<circle cx="{X(cx)}" cy="{Y(cy)}" r="{_fmt(1000.0 * rad)}" '
            f'fill="{color}" fill-opacity="0.8"/>')

    n_shapes = max(len(configurations), 1)
    for idx, config in enumerate(configurations):
        pos = config.positions
        d = np.diff(pos, axis=0)
        norm = np.linalg.norm(d, axis=1, keepdims=True)
        norm[norm == 0.0] = 1.0
        tang = d / norm
        normal = np.column_stack([-tang[:, 1], tang[:, 0]])
        node_normal = np.empty_like(pos)
        node_normal[0] = normal[0]
        node_normal[-1] = normal[-1]
        node_normal[1:-1] = normal[:-1] + normal[1:]
        nn = np.linalg.norm(node_normal, axis=1, keepdims=True)
        nn[nn == 0.0] = 1.0
        node_normal /= nn
        upper = pos + node_radius[:, None] * node_normal
        lower = pos - node_radius[:, None] * node_normal
        pts = np.vstack([upper, lower[::-1]])
        path_d = " ".join(f"{X(p[0])},{Y(p[1])}" for p in pts)
        opacity = 0.25 + 0.75 * (idx + 1) / n_shapes
        lines.append(
            f'<polygon points="{path_d}" fill="#7b5ea7" '
            f'fill-opacity="{_fmt(opacity)}" stroke="none"/>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n")
    return str(path)


def write_activation_csv(path, model: RodModel, activations: ActivationSet):
    grid = make_grid(model)
    with open(path, "w", newline="") as fh:
        fh.write("s,alpha_lm_top,alpha_lm_bottom,alpha_tm\n")
        for s, t, b, m in zip(grid.element_coords, activations.lm_top,
                              activations.lm_bottom, activations.tm):
            fh.write(f"{s:.12g},{t:.12g},{b:.12g},{m:.12g}\n")


def read_activation_csv(path, model: RodModel) -> ActivationSet:
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    if data.shape[0] != model.n_elements:
        raise ConfigError("activation CSV row count does not match grid")
    return ActivationSet(data[:, 1], data[:, 2], data[:, 3])


def _write_summary(path, payload: dict) -> None:
    payload = dict(payload, schema_version=SCHEMA_VERSION)
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def run_reaching(cfg: ScenarioConfig, out_dir, quiet: bool = False
                 ) -> RunArtifacts:
    """Solve each target (warm-started), then simulate each segment with the
    constant optimal activations."""
    require_task(cfg, "reach")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.rod_model()
    muscles = cfg.muscle_set()
    targets = cfg["targets"]

    activation_paths = []
    svg_paths = []
    jsonl_path = out / "optimizer.jsonl"
    summary_targets = []
    state = DynamicState.rest(model)
    traj_parts = []
    alpha = None

    with open(jsonl_path, "w") as log:
        for idx, target in enumerate(targets):
            task = cfg.task_for_target(target)
            failed = None
            try:
                alpha, report = solve_task(model, muscles, task,
                                           initial=alpha, log_stream=log,
                                           log_every=100)
            except Exception as exc:  # surface per target, keep going
                failed = str(exc)
                alpha = None
                summary_targets.append(
                    {"target": list(target), "error": failed})
                continue
            act_path = out / f"activations_target{idx}.csv"
            write_activation_csv(act_path, model, alpha)
            activation_paths.append(str(act_path))

            log_traj = simulate(model, muscles, state, alpha,
                                cfg["segment_duration"], cfg["dt"],
                                cfg["sample_stride"])
            state = DynamicState(
                config=type(state.config)(log_traj.positions[-1].copy(),
                                          log_traj.angles[-1].copy()),
                velocity=state.velocity * 0.0,
                angular_velocity=state.angular_velocity * 0.0,
                time=state.time + cfg["segment_duration"],
            )
            # Carry velocity continuity by re-simulating would be costly;
            # segments restart from the (nearly settled) end state.
            traj_parts.append(log_traj)
            summary_targets.append({
                "target": list(target),
                "static_tip_error": report.final_tip_error,
                "final_cost": report.final_cost,
                "iterations": report.iterations,
                "dynamic_tip": log_traj.positions[-1][-1].tolist(),
            })
            svg = out / f"reach_target{idx}.svg"
            from .equilibrium import solve_field
            sol = solve_field(model, muscles, alpha)
            render_svg(svg, model, [sol.configuration],
                       targets=[tuple(t) for t in targets])
            svg_paths.append(str(svg))
            if not quiet:
                print(f"target {idx}: static tip error "
                      f"{report.final_tip_error:.4g} m")

    traj_path = out / "trajectory.csv"
    _write_combined_trajectory(traj_path, traj_parts)
    summary_path = out / "summary.json"
    _write_summary(summary_path, {"scenario": "reaching",
                                  "targets": summary_targets})
    if any("error" in t for t in summary_targets):
        raise SolverFailure("one or more targets failed; see summary")
    return RunArtifacts(
        trajectory_csv=str(traj_path),
        activation_csvs=activation_paths,
        optimizer_jsonl=str(jsonl_path),
        svg_paths=svg_paths,
        summary_json=str(summary_path),
    )


class SolverFailure(RuntimeError):
    """Optimizer or equilibrium failure (CLI exit code 3)."""


def _write_combined_trajectory(path, parts) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,node,x,y,theta,T,V,H_total\n")
        offset = 0.0
        for part in parts:
            n_nodes = part.positions.shape[1]
            for k, t in enumerate(part.times):
                theta = np.append(part.angles[k], part.angles[k][-1])
                V = part.elastic[k] + part.muscle_potential[k]
                for i in range(n_nodes):
                    fh.write(
                        f"{t:.9g},{i},{part.positions[k, i, 0]:.12g},"
                        f"{part.positions[k, i, 1]:.12g},{theta[i]:.12g},"
                        f"{part.kinetic[k]:.12g},{V:.12g},"
                        f"{part.hamiltonian[k]:.12g}\n")


def run_grasping(cfg: ScenarioConfig, out_dir, quiet: bool = False
                 ) -> RunArtifacts:
    """Solve the grasp task (object doubles as an obstacle), simulate, and
    report penetration and wrap metrics."""
    require_task(cfg, "grasp")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.rod_model()
    muscles = cfg.muscle_set()
    grid = make_grid(model)
    task = cfg.grasp_task()

    # Two-phase penalty continuation: converge with the configured obstacle
    # weight, then polish from the warm start with a much stiffer weight so
    # residual penetration is driven to numerical zero without stalling the
    # early iterations.
    jsonl_path = out / "optimizer.jsonl"
    with open(jsonl_path, "w") as log:
        alpha, report = solve_task(model, muscles, task, log_stream=log,
                                   log_every=100)
        stiff = replace(task, obstacle_weights=tuple(
            1.0e4 * xi for xi in task.obstacle_weights))
        alpha, report = solve_task(model, muscles, stiff, initial=alpha,
                                   log_stream=log, log_every=100)
    act_path = out / "activations_grasp.csv"
    write_activation_csv(act_path, model, alpha)

    from .equilibrium import solve_field
    from .shaping import grasp_cost, obstacle_violation

    sol = solve_field(model, muscles, alpha)
    r_mid = 0.5 * (sol.configuration.positions[:-1]
                   + sol.configuration.positions[1:])
    violation = obstacle_violation(r_mid, task.grasp_object, grid.radius)
    gaps = grasp_cost(r_mid, task.grasp_object, grid.radius,
                      task.grasp_distance)
    window = (grid.element_coords >= task.grasp_window[0]) \
        & (grid.element_coords <= task.grasp_window[1])
    mean_gap = float(np.mean(gaps[window]))
    reach = model.rest_length * model.rest_strains[0] * 1.6  # max stretch
    unreachable = bool(np.linalg.norm(task.grasp_object.center) >
                       reach + task.grasp_object.radius)

    state = DynamicState.rest(model)
    log_traj = simulate(model, muscles, state, alpha,
                        cfg["segment_duration"], cfg["dt"],
                        cfg["sample_stride"])
    traj_path = out / "trajectory.csv"
    _write_combined_trajectory(traj_path, [log_traj])
    svg = out / "grasp.svg"
    render_svg(svg, model, [sol.configuration], objects=[task.grasp_object])

    summary_path = out / "summary.json"
    _write_summary(summary_path, {
        "scenario": "grasping",
        "object": {"center": list(task.grasp_object.center),
                   "radius": task.grasp_object.radius},
        "max_penetration": float(np.max(violation)),
        "mean_distal_gap": mean_gap,
        "final_cost": report.final_cost,
        "iterations": report.iterations,
        "unreachable": unreachable,
    })
    if not quiet:
        print(f"grasp: max penetration {float(np.max(violation)):.3e}, "
              f"mean distal gap {mean_gap:.4g} m")
    return RunArtifacts(
        trajectory_csv=str(traj_path),
        activation_csvs=[str(act_path)],
        optimizer_jsonl=str(jsonl_path),
        svg_paths=[str(svg)],
        summary_json=str(summary_path),
    )


def run_simulate(cfg: ScenarioConfig, out_dir, quiet: bool = False
                 ) -> RunArtifacts:
    """Plain dynamic run: constant activations (from CSV if configured,
    zero otherwise) applied to a rod bent by the configured perturbation."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = cfg.rod_model()
    muscles = cfg.muscle_set()
    if cfg["activation_csv"]:
        alpha = read_activation_csv(cfg["activation_csv"], model)
        state = DynamicState.rest(model)
    else:
        alpha = ActivationSet.zeros(model.n_elements)
        state = stretched_initial_state(model, cfg["tip_perturbation"])
    log_traj = simulate(model, muscles, state, alpha,
                        cfg["segment_duration"], cfg["dt"],
                        cfg["sample_stride"])
    traj_path = out / "trajectory.csv"
    _write_combined_trajectory(traj_path, [log_traj])
    svg = out / "simulate.svg"
    final = type(state.config)(log_traj.positions[-1], log_traj.angles[-1])
    render_svg(svg, model, [final])
    summary_path = out / "summary.json"
    _write_summary(summary_path, {
        "scenario": "simulate",
        "final_tip": log_traj.positions[-1][-1].tolist(),
        "final_kinetic": float(log_traj.kinetic[-1]),
        "final_hamiltonian": float(log_traj.hamiltonian[-1]),
    })
    if not quiet:
        print(f"simulate: final tip {log_traj.positions[-1][-1]}")
    return RunArtifacts(
        trajectory_csv=str(traj_path),
        activation_csvs=[],
        optimizer_jsonl=None,
        svg_paths=[str(svg)],
        summary_json=str(summary_path),
    )


def run_check(cfg: ScenarioConfig, quiet: bool = False) -> None:
    """Quick invariant suite on the configured model (gradient consistency,
    rest equilibrium, rest fixed point). Raises SolverFailure on violation."""
    from .dynamics import step
    from .equilibrium import solve_field
    from .muscles import total_energy_density_W, total_gradient_P

    model = cfg.rod_model()
    muscles = cfg.muscle_set()
    rng = np.random.default_rng(cfg["seed"])

    for _ in range(10):
        s = float(rng.uniform(0.0, model.rest_length))
        w = (rng.uniform(0.8, 1.3), rng.uniform(-0.1, 0.1),
             rng.uniform(-10.0, 10.0))
        alpha = rng.uniform(0.0, 1.0, size=3)
        P = total_gradient_P(model, muscles, w, alpha, s)
        h = 1e-7
        for i in range(3):
            wp = list(w)
            wm = list(w)
            wp[i] += h
            wm[i] -= h
            fd = (total_energy_density_W(model, muscles, tuple(wp), alpha, s)
                  - total_energy_density_W(model, muscles, tuple(wm), alpha,
                                           s)) / (2 * h)
            scale = max(abs(fd), model.youngs * np.pi * model.tip_radius**2
                        * 1e-3)
            if abs(P[i] - fd) > 1e-4 * scale:
                raise SolverFailure(
                    f"gradient consistency violated at s={s:.3f}")

    sol = solve_field(model, muscles, ActivationSet.zeros(model.n_elements))
    if np.max(np.abs(sol.stretch - model.rest_strains[0])) > 1e-10 \
            or np.max(np.abs(sol.curvature)) > 1e-10:
        raise SolverFailure("passive equilibrium is not the rest shape")

    state = DynamicState.rest(model)
    nxt = step(model, muscles, state, ActivationSet.zeros(model.n_elements),
               cfg["dt"])
    if np.max(np.abs(nxt.config.positions - state.config.positions)) > 1e-14:
        raise SolverFailure("rest state is not a fixed point")
    if not quiet:
        print("check: all invariants hold")
