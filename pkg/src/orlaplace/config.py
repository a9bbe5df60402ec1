"""Experiment configuration: a single TOML file, fully validated upfront.

Every referenced family spec, grid, expression and ball pair is
constructed and validated before any compute starts; invalid configs
raise :class:`ConfigError` carrying a best-effort line number into the
source text.  The schema is documented in the README.
"""

from __future__ import annotations

from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ConfigError, OrlaplaceError
from .expressions import compile_expression
from .fields import Grid2D, ScalarField
from .orlicz import make_family
from .solver import DirichletProblem, SolverConfig, boundary_nodes
from .verify import BallPair

__all__ = ["ExperimentConfig", "ProblemSpec", "load_config"]


@dataclass(frozen=True)
class ProblemSpec:
    """Grid box, regularisation and data expressions for the solve."""

    box: tuple
    nx: int
    ny: int
    epsilon: float
    f_expr: str
    g_expr: str

    @property
    def h(self):
        x0, x1, _, _ = self.box
        return (x1 - x0) / (self.nx - 1)

    def grid(self, refinements: int = 0) -> Grid2D:
        x0, _, y0, _ = self.box
        factor = 2**refinements
        return Grid2D(
            (self.nx - 1) * factor + 1,
            (self.ny - 1) * factor + 1,
            self.h / factor,
            x0,
            y0,
        )

    def problem(self, phi, refinements: int = 0) -> DirichletProblem:
        grid = self.grid(refinements)
        f_fn = compile_expression(self.f_expr)
        g_fn = compile_expression(self.g_expr)
        try:
            f = ScalarField.from_function(grid, f_fn)
            jj, ii = boundary_nodes(grid)
            g = np.asarray(
                g_fn(grid.x0 + grid.h * ii, grid.y0 + grid.h * jj), dtype=float
            ) + np.zeros(ii.shape)
            return DirichletProblem(grid, phi, f, g, self.epsilon)
        except ValueError as exc:
            raise ConfigError(f"problem data invalid on the grid: {exc}") from exc

    def source_is_zero(self) -> bool:
        fn = compile_expression(self.f_expr)
        xs = np.linspace(self.box[0], self.box[1], 7)
        ys = np.linspace(self.box[2], self.box[3], 7)
        X, Y = np.meshgrid(xs, ys)
        return bool(np.all(fn(X, Y) == 0.0))


@dataclass
class ExperimentConfig:
    name: str
    pairs: list  # [(phi, psi), ...] as constructed OrliczFunction pairs
    pair_specs: list  # raw tagged records, for reporting
    dimension: int
    problem: ProblemSpec | None
    solver: SolverConfig
    verify: dict
    probe: dict
    out_dir: str
    seed: int = 0
    threads: int = 1


_VERIFY_DEFAULTS = dict(
    levels=3,
    balls=[[0.0, 0.0, 0.35], [0.2, -0.1, 0.3], [-0.15, 0.2, 0.25]],
    delta_grid=[0.1, 0.2, 0.4],
    include_singular=True,
    include_threshold=True,
    singular_h0=0.125,
    singular_levels=4,
    singular_r=0.25,
    threshold_p=3.0,
    threshold_betas=[0.1, -0.1],
)

_PROBE_DEFAULTS = dict(
    fixtures=["saddle", "trig"],
    epsilons=[1e-2],
    kappa_steps=3,
    dimension=2,
    z="mean",
    grid_nx=65,
    dump_densities=False,
)


def _line_of(text: str, key: str):
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0]
        if key in stripped:
            return lineno
    return None


def _fail(text, key, msg):
    line = _line_of(text, key)
    where = f"line {line}: " if line else ""
    raise ConfigError(f"{where}{msg}")


def load_config(path: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw_bytes = fh.read()
    text = raw_bytes.decode("utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    name = data.get("experiment", {}).get("name", "experiment")
    out_dir = data.get("experiment", {}).get("out", "out")

    pair_specs = data.get("pairs", [])
    if not pair_specs:
        _fail(text, "pairs", "config must declare at least one [[pairs]] entry")
    pairs = []
    for idx, rec in enumerate(pair_specs):
        for side in ("phi", "psi"):
            if side not in rec:
                _fail(text, "pairs", f"pairs[{idx}] is missing {side!r}")
        try:
            pairs.append((make_family(rec["phi"]), make_family(rec["psi"])))
        except OrlaplaceError as exc:
            _fail(text, "pairs", f"pairs[{idx}]: {exc}")

    dimension = int(data.get("check", {}).get("dimension", 2))
    if dimension < 2:
        _fail(text, "dimension", "check.dimension must be >= 2")

    problem = None
    if "problem" in data:
        p = data["problem"]
        for key in ("box", "nx", "ny", "epsilon", "f", "g"):
            if key not in p:
                _fail(text, "[problem]", f"problem section is missing {key!r}")
        box = tuple(float(v) for v in p["box"])
        if len(box) != 4:
            _fail(text, "box", "problem.box must be [x0, x1, y0, y1]")
        nx, ny = int(p["nx"]), int(p["ny"])
        hx = (box[1] - box[0]) / (nx - 1)
        hy = (box[3] - box[2]) / (ny - 1)
        if abs(hx - hy) > 1e-12 * max(abs(hx), abs(hy)):
            _fail(text, "nx", f"grid spacing must be uniform, got hx={hx!r}, hy={hy!r}")
        if not (0.0 < float(p["epsilon"]) <= 1.0):
            _fail(text, "epsilon", "problem.epsilon must lie in (0, 1]")
        try:
            compile_expression(p["f"])
            compile_expression(p["g"])
        except ConfigError as exc:
            _fail(text, "f =", str(exc))
        problem = ProblemSpec(box, nx, ny, float(p["epsilon"]), p["f"], p["g"])

    s = data.get("solver", {})
    try:
        solver = SolverConfig(
            residual_tol=float(s.get("residual_tol", 1e-10)),
            max_newton_iters=int(s.get("max_newton_iters", 200)),
            epsilon_schedule=s.get("epsilon_schedule"),
            fallback_gd_iters=int(s.get("fallback_gd_iters", 20)),
            cg_tol=float(s.get("cg_tol", 1e-8)),
        )
    except ValueError as exc:
        _fail(text, "[solver]", str(exc))
    if solver.epsilon_schedule is not None:
        if problem is None:
            _fail(text, "epsilon_schedule", "epsilon schedule declared without a problem")
        if abs(solver.epsilon_schedule[-1] - problem.epsilon) > 0:
            _fail(
                text,
                "epsilon_schedule",
                "epsilon schedule must end at the problem's epsilon",
            )

    verify = dict(_VERIFY_DEFAULTS)
    verify.update(data.get("verify", {}))
    if problem is not None and "verify" in data:
        grid = problem.grid()
        for b in verify["balls"]:
            if len(b) != 3:
                _fail(text, "balls", "each ball must be [cx, cy, r]")
            try:
                BallPair((float(b[0]), float(b[1])), float(b[2])).validate(grid)
            except OrlaplaceError as exc:
                _fail(text, "balls", str(exc))

    probe = dict(_PROBE_DEFAULTS)
    probe.update(data.get("probe", {}))
    if probe["dimension"] < 2:
        _fail(text, "dimension", "probe.dimension must be >= 2")
    for fx_name in probe["fixtures"]:
        if fx_name not in ("saddle", "trig"):
            _fail(text, "fixtures", f"unknown probe fixture {fx_name!r}")
    for eps in probe["epsilons"]:
        if not (0.0 < float(eps) <= 1.0):
            _fail(text, "epsilons", "probe epsilons must lie in (0, 1]")
    if probe["z"] != "mean":
        z = probe["z"]
        if not (isinstance(z, (list, tuple)) and len(z) == 2):
            _fail(text, "z =", "probe.z must be \"mean\" or a [zx, zy] pair")

    return ExperimentConfig(
        name=name,
        pairs=pairs,
        pair_specs=pair_specs,
        dimension=dimension,
        problem=problem,
        solver=solver,
        verify=verify,
        probe=probe,
        out_dir=out_dir,
    )
