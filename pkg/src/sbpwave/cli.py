"""Configuration files, run orchestration, and output emission.

Configuration is TOML (flat typed keys grouped in sections); snapshots are a
self-describing text preamble followed by raw little-endian float64 data;
all CSV floats carry 17 significant digits so regression diffs are
meaningful.
"""

from __future__ import annotations

import argparse
import json
import os
import queue
import sys
import threading
try:
    import tomllib
except ImportError:                     # python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field

import numpy as np

__all__ = ["RunConfig", "parse_config", "parse_config_text",
           "serialize_config", "SnapshotHeader", "write_snapshot",
           "read_snapshot", "run", "main"]

SNAPSHOT_MAGIC = "sbpwave-snapshot"
SNAPSHOT_VERSION = 1

SCENARIOS = ("mms", "gaussian-source", "energy", "loh1-geometry")
SOLVERS = ("pcg", "cg", "jacobi", "dense")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    """Validated run description.

    Lateral fine-grid sizes are always derived from the coarse sizes by the
    1:2 nesting rule (n_fine = 2 n_coarse - 1); the vertical fine size is
    free.
    """
    scenario: str
    n1_coarse: int = 25
    n2_coarse: int = 25
    n3_coarse: int = 13
    n3_fine: int = 25
    method: str = "pcg"
    tol: float = 1e-7
    on_failure: str = "abort"
    cfl: float = 1.3
    t_end: float | None = None
    dt: float | None = None
    directory: str = "out"
    snapshot_stride: int = 0
    receivers: list = field(default_factory=list)

    @property
    def n1_fine(self) -> int:
        return 2 * self.n1_coarse - 1

    @property
    def n2_fine(self) -> int:
        return 2 * self.n2_coarse - 1


class ConfigError(ValueError):
    pass


# section -> key -> (python type, default or REQUIRED)
_REQUIRED = object()
_SCHEMA = {
    None: {"scenario": (str, _REQUIRED)},
    "grid": {
        "n1_coarse": (int, 25),
        "n2_coarse": (int, None),       # defaults to n1_coarse
        "n3_coarse": (int, None),       # defaults to (n1_coarse + 1) // 2
        "n3_fine": (int, None),         # defaults to 2 n3_coarse - 1
        "n1_fine": (int, None),         # derived; accepted only if consistent
        "n2_fine": (int, None),
    },
    "solver": {
        "method": (str, "pcg"),
        "tol": (float, 1e-7),
        "on_failure": (str, "abort"),
    },
    "time": {
        "cfl": (float, 1.3),
        "t_end": (float, None),
        "dt": (float, None),
    },
    "output": {
        "directory": (str, "out"),
        "snapshot_stride": (int, 0),
        "receivers": (list, None),
    },
}


def _coerce(path, value, typ):
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, typ) or isinstance(value, bool) and typ is not bool:
        raise ConfigError(f"{path}: expected {typ.__name__}, "
                          f"got {type(value).__name__} ({value!r})")
    return value


def parse_config_text(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None

    values = {}
    for key, val in raw.items():
        if key in _SCHEMA[None]:
            values[key] = _coerce(key, val, _SCHEMA[None][key][0])
        elif key in _SCHEMA and isinstance(val, dict):
            for sub, sv in val.items():
                path = f"{key}.{sub}"
                if sub not in _SCHEMA[key]:
                    raise ConfigError(f"unknown key '{path}'")
                values[sub] = _coerce(path, sv, _SCHEMA[key][sub][0])
        else:
            raise ConfigError(f"unknown key '{key}'")

    for section, keys in _SCHEMA.items():
        for key, (_, default) in keys.items():
            if key in values:
                continue
            if default is _REQUIRED:
                path = key if section is None else f"{section}.{key}"
                raise ConfigError(f"missing required key '{path}'")

    scenario = values["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: unknown scenario {scenario!r}; "
                          f"choose one of {', '.join(SCENARIOS)}")

    n1 = values.get("n1_coarse", 25)
    n2 = values.get("n2_coarse", n1)
    if n2 != n1:
        raise ConfigError(
            f"grid.n2_coarse = {n2}: built-in scenarios use square lateral "
            f"grids (n1_coarse = {n1})")
    n3c = values.get("n3_coarse", (n1 + 1) // 2)
    n3f = values.get("n3_fine", 2 * n3c - 1)
    for nm, n in (("n1_coarse", n1), ("n3_coarse", n3c), ("n3_fine", n3f)):
        if n < 2:
            raise ConfigError(f"grid.{nm} = {n}: must be >= 2")
    # lateral 1:2 nesting; fine counts in the file must agree
    for nm, nc in (("n1_fine", n1), ("n2_fine", n2)):
        if nm in values and values[nm] != 2 * nc - 1:
            raise ConfigError(
                f"grid.{nm} = {values[nm]} violates the 1:2 nesting "
                f"constraint: the fine lattice must have "
                f"2*{nm.replace('fine', 'coarse')} - 1 = {2 * nc - 1} points "
                f"(coarse lattice has {nc})")

    method = values.get("method", "pcg")
    if method not in SOLVERS:
        raise ConfigError(f"solver.method: unknown method {method!r}; "
                          f"choose one of {', '.join(SOLVERS)}")
    on_failure = values.get("on_failure", "abort")
    if on_failure not in ("abort", "warn"):
        raise ConfigError(f"solver.on_failure: expected 'abort' or 'warn', "
                          f"got {on_failure!r}")

    receivers = []
    for i, pt in enumerate(values.get("receivers") or []):
        if not (isinstance(pt, list) and len(pt) == 3
                and all(isinstance(c, (int, float)) for c in pt)):
            raise ConfigError(f"output.receivers[{i}]: expected [x, y, z]")
        receivers.append([float(c) for c in pt])

    return RunConfig(
        scenario=scenario, n1_coarse=n1, n2_coarse=n2, n3_coarse=n3c,
        n3_fine=n3f, method=method, tol=values.get("tol", 1e-7),
        on_failure=on_failure, cfl=values.get("cfl", 1.3),
        t_end=values.get("t_end"), dt=values.get("dt"),
        directory=values.get("directory", "out"),
        snapshot_stride=values.get("snapshot_stride", 0),
        receivers=receivers)


def parse_config(path) -> RunConfig:
    with open(path, "r") as fh:
        return parse_config_text(fh.read())


def serialize_config(cfg: RunConfig) -> str:
    lines = [f'scenario = "{cfg.scenario}"', "", "[grid]",
             f"n1_coarse = {cfg.n1_coarse}",
             f"n2_coarse = {cfg.n2_coarse}",
             f"n3_coarse = {cfg.n3_coarse}",
             f"n3_fine = {cfg.n3_fine}",
             "", "[solver]",
             f'method = "{cfg.method}"',
             f"tol = {_fmt(cfg.tol)}",
             f'on_failure = "{cfg.on_failure}"',
             "", "[time]",
             f"cfl = {_fmt(cfg.cfl)}"]
    if cfg.t_end is not None:
        lines.append(f"t_end = {_fmt(cfg.t_end)}")
    if cfg.dt is not None:
        lines.append(f"dt = {_fmt(cfg.dt)}")
    lines += ["", "[output]",
              f'directory = "{cfg.directory}"',
              f"snapshot_stride = {cfg.snapshot_stride}"]
    if cfg.receivers:
        pts = ", ".join("[" + ", ".join(_fmt(c) for c in pt) + "]"
                        for pt in cfg.receivers)
        lines.append(f"receivers = [{pts}]")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# snapshots

@dataclass
class SnapshotHeader:
    block: str                  # "coarse" | "fine" | "block"
    shape: tuple                # lattice sizes (n1, n2, n3)
    spacing: tuple              # reference spacings (h1, h2, h3)
    time: float
    components: int = 3
    byteorder: str = "little"


def write_snapshot(path, header: SnapshotHeader, data: np.ndarray):
    """Text preamble + raw little-endian float64 payload, component fastest."""
    if data.shape != tuple(header.shape) + (header.components,):
        raise ValueError(f"data shape {data.shape} does not match header "
                         f"{tuple(header.shape) + (header.components,)}")
    text = "\n".join([
        f"{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}",
        f"block {header.block}",
        "shape " + " ".join(str(n) for n in header.shape),
        "spacing " + " ".join(_fmt(h) for h in header.spacing),
        f"time {_fmt(header.time)}",
        f"components {header.components}",
        f"byteorder {header.byteorder}",
        "end",
    ]) + "\n"
    with open(path, "wb") as fh:
        fh.write(text.encode("ascii"))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_snapshot(path):
    with open(path, "rb") as fh:
        fields = {}
        magic, version = fh.readline().split()
        if magic.decode() != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a snapshot file")
        if int(version) != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version "
                             f"{int(version)}")
        while True:
            line = fh.readline().decode("ascii").strip()
            if line == "end":
                break
            if not line:
                raise ValueError(f"{path}: truncated snapshot header")
            key, _, rest = line.partition(" ")
            fields[key] = rest
        header = SnapshotHeader(
            block=fields["block"],
            shape=tuple(int(s) for s in fields["shape"].split()),
            spacing=tuple(float(s) for s in fields["spacing"].split()),
            time=float(fields["time"]),
            components=int(fields["components"]),
            byteorder=fields["byteorder"])
        count = int(np.prod(header.shape)) * header.components
        data = np.frombuffer(fh.read(count * 8), dtype="<f8", count=count)
    return header, data.reshape(tuple(header.shape) + (header.components,))


class _SnapshotWriter:
    """Writer thread with a one-frame buffer: the stepping loop blocks only
    when a previous frame is still being flushed."""

    def __init__(self):
        self.q = queue.Queue(maxsize=1)
        self.thread = threading.Thread(target=self._loop, daemon=True)
        self.thread.start()

    def _loop(self):
        while True:
            item = self.q.get()
            if item is None:
                return
            path, header, data = item
            write_snapshot(path, header, data)

    def submit(self, path, header, data):
        self.q.put((path, header, np.array(data, copy=True)))

    def close(self):
        self.q.put(None)
        self.thread.join()


# ---------------------------------------------------------------------------
# CSV helpers

def _write_csv(path, columns, rows):
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v)
                              for v in row) + "\n")


# ---------------------------------------------------------------------------
# orchestration

def _build_problem(cfg: RunConfig):
    from . import scenarios as sc
    if cfg.scenario == "mms":
        expect = (cfg.n1_coarse + 1) // 2
        if cfg.n3_coarse != expect or cfg.n3_fine != 2 * expect - 1:
            raise ConfigError(
                f"grid.n3_coarse/n3_fine: scenario 'mms' derives the "
                f"vertical sizes from the lateral size (expected "
                f"{expect}/{2 * expect - 1}, got "
                f"{cfg.n3_coarse}/{cfg.n3_fine})")
        kw = {} if cfg.t_end is None else {"t_end": cfg.t_end}
        return sc.mms_problem(nc=cfg.n1_coarse, **kw)
    if cfg.scenario == "energy":
        expect = (cfg.n1_coarse + 1) // 2
        if cfg.n3_coarse != expect or cfg.n3_fine != 2 * expect - 1:
            raise ConfigError(
                f"grid.n3_coarse/n3_fine: scenario 'energy' derives the "
                f"vertical sizes from the lateral size (expected "
                f"{expect}/{2 * expect - 1}, got "
                f"{cfg.n3_coarse}/{cfg.n3_fine})")
        kw = {} if cfg.t_end is None else {"t_end": cfg.t_end}
        return sc.energy_problem(nc=cfg.n1_coarse, **kw)
    if cfg.scenario == "gaussian-source":
        kw = {} if cfg.t_end is None else {"t_end": cfg.t_end}
        if cfg.receivers:
            kw["receivers"] = [tuple(p) for p in cfg.receivers]
        return sc.gaussian_source_problem(nc=cfg.n1_coarse,
                                          n3c=cfg.n3_coarse,
                                          n3f=cfg.n3_fine, **kw)
    raise ConfigError(
        "scenario 'loh1-geometry' defines geometry and material only and "
        "cannot be time stepped; use 'sbpwave run' with another scenario")


def _aggregate_solver_stats(history):
    if not history:
        return {"solves": 0}
    iters = [info["iterations"] for info in history]
    return {
        "solves": len(history),
        "iterations_total": int(np.sum(iters)),
        "iterations_mean": float(np.mean(iters)),
        "iterations_max": int(np.max(iters)),
        "residual_max": float(max(info["residual"] for info in history)),
        "all_converged": bool(all(info["converged"] for info in history)),
    }


def run(cfg: RunConfig, output_dir=None, progress=None):
    """Execute a configured run; returns the manifest dictionary."""
    from . import diagnostics as diag
    from .geometry import cfl_kappa

    out = output_dir if output_dir is not None else cfg.directory
    os.makedirs(out, exist_ok=True)
    prob = _build_problem(cfg)
    stepper, nsteps = prob.make_stepper(cfl=cfg.cfl, t_end=cfg.t_end,
                                        dt=cfg.dt, ghost_solver=cfg.method,
                                        ghost_tol=cfg.tol)
    stepper.strict = cfg.on_failure == "abort"
    kappa_max = max(cfl_kappa(op.N, op.rho, op.J) for op in prob.ops)
    samplers = prob.make_samplers(cfg.receivers or None)

    writer = _SnapshotWriter() if cfg.snapshot_stride > 0 else None

    def fields():
        return {"coarse": (prob.op_c, stepper.c.curr),
                "fine": (prob.op_f, stepper.f.curr)}

    def snap(step):
        for tag, (op, u) in fields().items():
            header = SnapshotHeader(block=tag, shape=op.shape, spacing=op.h,
                                    time=stepper.t)
            writer.submit(os.path.join(out, f"snapshot_{tag}_{step:06d}.dat"),
                          header, u)

    def sample():
        for (tag, sampler), series in zip(samplers, receiver_rows):
            u = stepper.c.curr if tag == "coarse" else stepper.f.curr
            series.append((stepper.t, *sampler(u)))

    energy_rows = []
    receiver_rows = [[] for _ in samplers]
    e0 = None
    sample()
    if writer is not None:
        snap(0)
    for step in range(1, nsteps + 1):
        stepper.step()
        e = diag.two_block_energy(stepper)
        if e0 is None:
            e0 = e
        drift = (e - e0) / e0 if e0 != 0 else 0.0
        energy_rows.append((step, stepper.t, e, drift))
        sample()
        if writer is not None and step % cfg.snapshot_stride == 0:
            snap(step)
        if progress is not None:
            progress(step, nsteps)
    if writer is not None:
        writer.close()

    _write_csv(os.path.join(out, "energy.csv"),
               ("step", "t", "E", "rel_drift"),
               ((str(s), t, e, d) for s, t, e, d in energy_rows))
    for i, series in enumerate(receiver_rows):
        _write_csv(os.path.join(out, f"receiver_{i:02d}.csv"),
                   ("t", "u1", "u2", "u3"), series)

    manifest = {
        "scenario": cfg.scenario,
        "grid": {"coarse": list(prob.op_c.shape),
                 "fine": list(prob.op_f.shape)},
        "dt": stepper.dt,
        "steps": nsteps,
        "t_final": stepper.t,
        "kappa_max": kappa_max,
        "solver": {"method": cfg.method, "tol": cfg.tol,
                   "on_failure": cfg.on_failure,
                   "stats": _aggregate_solver_stats(stepper.solve_history)},
        "energy": ({} if not energy_rows else
                   {"initial": energy_rows[0][2],
                    "final": energy_rows[-1][2],
                    "max_rel_drift": max(abs(r[3]) for r in energy_rows)}),
        "receivers": [list(map(float, p))
                      for p in (cfg.receivers or prob.receivers)],
        "outputs": sorted(os.listdir(out)),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


# ---------------------------------------------------------------------------
# subcommands

def _progress_printer(label):
    def progress(step, nsteps):
        if step == nsteps or step % max(1, nsteps // 20) == 0:
            print(f"{label}: step {step}/{nsteps}", flush=True)
    return progress


def cmd_run(args):
    cfg = parse_config(args.config)
    manifest = run(cfg, output_dir=args.output_dir,
                   progress=_progress_printer(cfg.scenario)
                   if args.verbose else None)
    stats = manifest["solver"]["stats"]
    print(f"{cfg.scenario}: {manifest['steps']} steps, dt = "
          f"{_fmt(manifest['dt'])}, ghost solves: {stats.get('solves', 0)}")
    if manifest["energy"]:
        print(f"max |relative energy drift| = "
              f"{_fmt(manifest['energy']['max_rel_drift'])}")
    return 0


def _mms_errors(nc, t_end, cfl, tol, method):
    from . import diagnostics as diag, scenarios as sc
    prob = sc.mms_problem(nc=nc, t_end=t_end)
    stepper, nsteps = prob.make_stepper(cfl=cfl, ghost_solver=method,
                                        ghost_tol=tol)
    for _ in range(nsteps):
        stepper.step()
    ec = diag.l2_error(prob.op_c, stepper.c.curr,
                       sc.mms_exact(prob.met_c, stepper.t))
    ef = diag.l2_error(prob.op_f, stepper.f.curr,
                       sc.mms_exact(prob.met_f, stepper.t))
    return ec, ef, float(np.hypot(ec, ef))


def cmd_convergence(args):
    grids = [int(s) for s in args.grids.split(",")]
    out = args.output_dir
    os.makedirs(out, exist_ok=True)
    rows = []
    prev = None         # (spacing, error) of the previous grid
    for nc in grids:
        spacing = 2.0 * np.pi / (nc - 1)
        ec, ef, e = _mms_errors(nc, args.t_end, args.cfl, args.tol, "pcg")
        if prev is None:
            rate, rate_txt = "", ""
        else:
            rate = np.log(prev[1] / e) / np.log(prev[0] / spacing)
            rate_txt = f"  rate = {rate:.2f}"
        rows.append((str(nc), spacing, e, ef, ec, rate))
        print(f"nc = {nc:4d}  2h = {spacing:.6f}  L2 = {e:.6e}  "
              f"L2f = {ef:.6e}  L2c = {ec:.6e}{rate_txt}")
        prev = (spacing, e)
    _write_csv(os.path.join(out, "convergence.csv"),
               ("n_coarse", "spacing", "l2_total", "l2_fine", "l2_coarse",
                "rate"), rows)
    print(f"wrote {os.path.join(out, 'convergence.csv')}")
    return 0


def cmd_energy(args):
    from . import diagnostics as diag, scenarios as sc
    prob = sc.energy_problem(nc=args.nc)
    stepper, _ = prob.make_stepper(cfl=args.cfl, ghost_solver="pcg",
                                   ghost_tol=args.tol)
    os.makedirs(args.output_dir, exist_ok=True)
    rows = []
    e0 = None
    for step in range(1, args.steps + 1):
        stepper.step()
        e = diag.two_block_energy(stepper)
        if e0 is None:
            e0 = e
        rows.append((str(step), stepper.t, e, (e - e0) / e0))
        if step % max(1, args.steps // 10) == 0:
            print(f"step {step}/{args.steps}  E = {e:.12e}  "
                  f"drift = {rows[-1][3]:.3e}", flush=True)
    _write_csv(os.path.join(args.output_dir, "energy.csv"),
               ("step", "t", "E", "rel_drift"), rows)
    drift = max(abs(r[3]) for r in rows)
    print(f"max |relative energy drift| over {args.steps} steps: "
          f"{_fmt(drift)}")
    return 0


def _ghost_system(nc):
    """Interface system of the manufactured-solution geometry plus the
    right-hand side built from the exact fields at t = 0."""
    from . import scenarios as sc
    prob = sc.mms_problem(nc=nc)
    c0 = sc.mms_exact(prob.met_c, 0.0)
    f0 = sc.mms_exact(prob.met_f, 0.0)
    f0[:, :, 0] = prob.system.scaling.prolong(c0[:, :, -1])
    b = -prob.system.residual0(*prob.system.interface_fields(c0, f0))
    return prob.system, b


def _block_cond(D):
    s = np.linalg.svd(D, compute_uv=False)
    return float(s[..., 0].max() / s[..., -1].min())


def cmd_solve_bench(args):
    from . import krylov
    grids = [int(s) for s in args.grids.split(",")]
    os.makedirs(args.output_dir, exist_ok=True)
    rows = []
    for nc in grids:
        system, b = _ghost_system(nc)
        D = krylov.extract_diagonal_blocks(system.apply_K, b.shape)
        Dinv = krylov.invert_blocks(D)
        apply_M = lambda r: np.einsum("...pq,...q->...p", Dinv, r)
        _, icg = krylov.cg(system.apply_K, b, tol=args.tol)
        _, ibj = krylov.block_jacobi(system.apply_K, b, Dinv, tol=args.tol)
        _, ipcg = krylov.cg(system.apply_K, b, tol=args.tol, apply_M=apply_M)
        n = b.size
        if n <= args.max_dense:
            K = krylov.assemble_dense(system.apply_K, b.shape)
            MK = (Dinv.reshape(-1, 3, 3) @ K.reshape(n // 3, 3, n)).reshape(
                n, n)
            conds = (krylov.condition_number(K), _block_cond(D),
                     krylov.condition_number(MK))
        else:
            conds = ("", "", "")
        spacing = 2.0 * np.pi / (nc - 1)
        rows.append((str(nc), spacing, conds[0], conds[1], conds[2],
                     str(icg["iterations"]), str(ibj["iterations"]),
                     str(ipcg["iterations"])))
        print(f"nc = {nc:4d}  2h = {spacing:.6f}  "
              f"cond: CG = {conds[0]}, block Jacobi = {conds[1]}, "
              f"PCG = {conds[2]}  iterations: CG = {icg['iterations']}, "
              f"block Jacobi = {ibj['iterations']}, "
              f"PCG = {ipcg['iterations']}")
    _write_csv(os.path.join(args.output_dir, "solve_bench.csv"),
               ("n_coarse", "spacing", "cond_cg", "cond_block_jacobi",
                "cond_pcg", "iters_cg", "iters_block_jacobi", "iters_pcg"),
               rows)
    print(f"wrote {os.path.join(args.output_dir, 'solve_bench.csv')}")
    return 0


def cmd_sbp_check(args):
    from . import sbp1d
    rng = np.random.default_rng(args.seed)
    sizes = [int(s) for s in args.sizes.split(",")]
    worst = 0.0
    for n in sizes:
        h = 1.0 / (n - 1)
        H = h * sbp1d.norm_weights(n)
        r_d1 = r_sym = r_psd = 0.0
        for _ in range(args.trials):
            gamma = rng.random(n) + 0.5
            u, v = rng.standard_normal((2, n))
            ug, vg = rng.standard_normal((2, 2))
            scale = np.linalg.norm(u) * np.linalg.norm(v)
            # first-derivative identity (u, Dv) + (Du, v) = uv|_0^1
            lhs = (np.sum(H * u * sbp1d.apply_d1(v, h))
                   + np.sum(H * sbp1d.apply_d1(u, h) * v))
            r_d1 = max(r_d1, abs(lhs - (u[-1] * v[-1] - u[0] * v[0])) / scale)

            def s_form(a, ag, b, bg):
                Gb = sbp1d.apply_d2_var(gamma, b, h, low="ghost",
                                        high="ghost", vg_low=bg[0],
                                        vg_high=bg[1])
                d_lo = sbp1d.boundary_derivative(b, h, "low", "ghost",
                                                 vg=bg[0])
                d_hi = sbp1d.boundary_derivative(b, h, "high", "ghost",
                                                 vg=bg[1])
                return (-np.sum(H * a * Gb) - a[0] * gamma[0] * d_lo
                        + a[-1] * gamma[-1] * d_hi)

            s_uv = s_form(u, (ug[0], ug[1]), v, (vg[0], vg[1]))
            s_vu = s_form(v, (vg[0], vg[1]), u, (ug[0], ug[1]))
            r_sym = max(r_sym, abs(s_uv - s_vu) / (scale + 1.0))
            s_uu = s_form(u, (ug[0], ug[1]), u, (ug[0], ug[1]))
            r_psd = max(r_psd, max(0.0, -s_uu) / np.sum(u * u))
        print(f"n = {n:3d}  first-derivative identity: {r_d1:.3e}  "
              f"S symmetry: {r_sym:.3e}  S positivity defect: {r_psd:.3e}")
        worst = max(worst, r_d1, r_sym, r_psd)
    ok = worst < 1e-12
    print(f"worst relative residual: {worst:.3e}  "
          f"[{'PASS' if ok else 'FAIL'}]")
    return 0 if ok else 1


def cmd_dump_interface_matrix(args):
    from . import krylov
    system, b = _ghost_system(args.nc)
    K = krylov.assemble_dense(system.apply_K, b.shape,
                              max_unknowns=args.max_dense)
    os.makedirs(args.output_dir, exist_ok=True)
    path = os.path.join(args.output_dir, f"interface_matrix_nc{args.nc}.npy")
    np.save(path, K)
    print(f"wrote {path}  shape = {K.shape}  "
          f"cond = {krylov.condition_number(K):.4f}")
    return 0


# ---------------------------------------------------------------------------
# entry point

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sbpwave",
        description="Fourth-order SBP solver for the 3D elastic wave "
                    "equation on two-block curvilinear grids with a 1:2 "
                    "refinement interface.")
    parser.add_argument("--threads", type=int, default=None,
                        help="limit BLAS/OpenMP thread pools")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for randomized checks")
    parser.add_argument("--output-dir", default=None,
                        help="override the output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a configured simulation")
    p.add_argument("config", help="TOML configuration file")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("convergence",
                       help="manufactured-solution error table")
    p.add_argument("--grids", default="25,49",
                   help="comma-separated coarse lateral point counts")
    p.add_argument("--t-end", type=float, default=0.5)
    p.add_argument("--cfl", type=float, default=1.3)
    p.add_argument("--tol", type=float, default=1e-7)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("energy", help="long-time energy conservation run")
    p.add_argument("--nc", type=int, default=25)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--cfl", type=float, default=1.3)
    p.add_argument("--tol", type=float, default=1e-7)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("solve-bench",
                       help="interface-system solver comparison")
    p.add_argument("--grids", default="25")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-dense", type=int, default=20000,
                   help="skip condition numbers above this many unknowns")
    p.set_defaults(func=cmd_solve_bench)

    p = sub.add_parser("sbp-check",
                       help="randomized operator identity checks")
    p.add_argument("--sizes", default="8,12,16,24,48")
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(func=cmd_sbp_check)

    p = sub.add_parser("dump-interface-matrix",
                       help="assemble and save the dense ghost system")
    p.add_argument("--nc", type=int, default=25)
    p.add_argument("--max-dense", type=int, default=20000)
    p.set_defaults(func=cmd_dump_interface_matrix)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.output_dir is None and args.func is not cmd_run:
        args.output_dir = "out"     # cmd_run defers to the config file
    try:
        if args.threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
