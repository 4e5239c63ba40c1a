"""Command-line interface.

    raftsim run <config-or-preset>        time-stepped simulation
    raftsim benchmark <which> [config]    convergence | ode | ok-compare
    raftsim mesh-info <spec>              sphere:L | bumpy:L:amp:wav | file
    raftsim preset <name>                 print a scenario preset config

Exit codes: 0 success, 1 usage/config error, 2 numerical failure,
3 benchmark acceptance bracket violated.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import benchmarks, presets, raft_model, surface_fem, time_stepper
from .config import parse_config, serialize_config
from .errors import ConfigError, MeshError, NoConvergenceError, NumericalError, RaftsimError
from .output import write_convergence_csv, write_diagnostics_csv, write_vtk
from .surface_mesh import build_bumpy_sphere, build_refined_sphere, load_mesh, mesh_stats

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_BRACKET = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_mesh(geometry):
    if geometry.generator == "sphere":
        return build_refined_sphere(geometry.level)
    if geometry.generator == "bumpy":
        return build_bumpy_sphere(geometry.level, geometry.bump_amplitude,
                                  geometry.wavenumber)
    return load_mesh(geometry.path)


def _resolve_config(arg):
    if arg is None:
        return presets.preset_config("basic")
    if os.path.exists(arg):
        return parse_config(arg)
    try:
        return presets.preset_config(arg)
    except KeyError:
        raise ConfigError(f"{arg}: neither a config file nor a preset "
                          f"(presets: {', '.join(presets.preset_names())})")


def _output_dir(config):
    directory = os.environ.get("RAFTSIM_OUTPUT_DIR", config.output.directory)
    os.makedirs(directory, exist_ok=True)
    return directory


def cmd_run(config):
    mesh = build_mesh(config.geometry)
    state = raft_model.initial_state(
        mesh, config.model, phi_hat=config.initial.phi_hat,
        v0=config.initial.v0, amplitude=config.initial.amplitude,
        seed=config.initial.seed)
    result = time_stepper.run(state, config.model, mesh, config.stepper,
                              T_end=config.t_end,
                              snapshot_times=config.output.snapshot_times)
    directory = _output_dir(config)
    write_diagnostics_csv(result.records, os.path.join(directory, "diagnostics.csv"))
    for time_point, snap in result.snapshots:
        name = f"snapshot_t{time_point:.6f}.vtk".replace("-", "m")
        write_vtk(mesh, {"phi": snap.phi, "v": snap.v, "mu": snap.mu},
                  os.path.join(directory, name))
    if config.output.write_final_vtk:
        write_vtk(mesh, {"phi": result.state.phi, "v": result.state.v,
                         "mu": result.state.mu},
                  os.path.join(directory, "final.vtk"))
    comps = time_stepper.connected_components(result.state.phi, 0.0, mesh=mesh)
    if result.records:
        energy = result.records[-1].energy_total
    else:
        energy = raft_model.free_energy(result.state, config.model, mesh)[2]
    print(f"scenario {config.scenario}: {len(result.records)} steps, "
          f"t = {result.state.t:.6g} ({result.reason})")
    print(f"  components(phi>0) = {len(comps)}, energy = {energy:.6g}, "
          f"u = {result.state.u:.6g}")
    if result.reason == "aborted":
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_benchmark(which, config_arg):
    if which == "convergence":
        return _benchmark_convergence(config_arg)
    if which == "ode":
        return _benchmark_ode(config_arg)
    if which == "ok-compare":
        return _benchmark_ok(config_arg)
    raise ConfigError(f"unknown benchmark {which!r}")


def _benchmark_convergence(config_arg):
    config = _resolve_config(config_arg) if config_arg else None
    directory = _output_dir(config) if config else _env_dir()
    levels = (4, 5, 6)
    prob = benchmarks.ManufacturedProblem()
    rows = benchmarks.run_convergence(levels, prob, progress=print)
    write_convergence_csv(rows, os.path.join(directory, "convergence.csv"))
    by_nv = {r.n_vertices: r for r in rows}
    ok = True
    for a, b in zip(rows, rows[1:]):
        if not (math.isfinite(a.e_1) and math.isfinite(b.e_1)):
            ok = False
            continue
        ratio = a.e_1 / b.e_1
        print(f"e_1 ratio level {a.level}->{b.level}: {ratio:.3f}")
        ok &= 1.5 <= ratio <= 2.7
    if 24578 in by_nv:
        ok &= 0.03 <= by_nv[24578].e_1 <= 0.15
    if 6146 in by_nv:
        ok &= 0.08 <= by_nv[6146].e_inf <= 0.75
    print(f"convergence brackets {'satisfied' if ok else 'VIOLATED'}")
    return EXIT_OK if ok else EXIT_BRACKET


def _benchmark_ode(config_arg):
    config = _resolve_config(config_arg) if config_arg else None
    directory = _output_dir(config) if config else _env_dir()
    params = config.model if config else raft_model.ModelParams()
    level = config.geometry.level if config else 5
    check = benchmarks.validate_int_v(level, params, T=0.5)
    with open(os.path.join(directory, "ode_validation.csv"), "w") as fh:
        fh.write("t,z_fem,z_ode\n")
        for t, zf, zo in zip(check.times, check.z_fem, check.z_ode):
            fh.write(f"{t!r},{zf!r},{zo!r}\n")
    print(f"max relative deviation of int(v) vs ODE: {check.max_deviation:.5f}")
    return EXIT_OK if check.max_deviation < 0.02 else EXIT_BRACKET


def _benchmark_ok(config_arg):
    config = _resolve_config(config_arg) if config_arg else None
    directory = _output_dir(config) if config else _env_dir()
    base = config.model if config else raft_model.ModelParams()
    params = base.with_(delta=1e-4)
    level = config.geometry.level if config else 4
    comp = benchmarks.compare_ok_stationary(level, params, progress=print)
    with open(os.path.join(directory, "ok_compare.txt"), "w") as fh:
        fh.write(f"l2_rel_diff = {comp.l2_rel_diff!r}\n"
                 f"linf_diff = {comp.linf_diff!r}\n"
                 f"components_reduced = {comp.components_reduced}\n"
                 f"components_ok = {comp.components_ok}\n")
    print(f"relative L2 difference reduced vs OK stationary: {comp.l2_rel_diff:.5f} "
          f"(components {comp.components_reduced} vs {comp.components_ok})")
    return EXIT_OK if comp.l2_rel_diff < 0.05 else EXIT_BRACKET


def _env_dir():
    directory = os.environ.get("RAFTSIM_OUTPUT_DIR", "raftsim-out")
    os.makedirs(directory, exist_ok=True)
    return directory


def cmd_mesh_info(spec):
    mesh = _mesh_from_spec(spec)
    nv, nt, ne, area, h_max = mesh_stats(mesh)
    print(f"vertices  {nv}")
    print(f"triangles {nt}")
    print(f"edges     {ne}")
    print(f"area      {area:.12g}")
    print(f"h_max     {h_max:.12g}")
    print(f"euler     {nv - ne + nt}")
    return EXIT_OK


def _mesh_from_spec(spec):
    if os.path.exists(spec):
        return load_mesh(spec)
    parts = spec.split(":")
    if parts[0] == "sphere" and len(parts) == 2:
        return build_refined_sphere(int(parts[1]))
    if parts[0] == "bumpy" and len(parts) == 4:
        return build_bumpy_sphere(int(parts[1]), float(parts[2]), int(parts[3]))
    raise ConfigError(
        f"{spec}: expected an OFF file path, sphere:<level> or bumpy:<level>:<amp>:<wav>")


def main(argv=None):
    parser = _Parser(prog="raftsim", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a simulation")
    p_run.add_argument("config", nargs="?", help="config file or preset name")
    p_bench = sub.add_parser("benchmark", help="run a validation benchmark")
    p_bench.add_argument("which", choices=("convergence", "ode", "ok-compare"))
    p_bench.add_argument("config", nargs="?")
    p_info = sub.add_parser("mesh-info", help="print mesh statistics")
    p_info.add_argument("spec")
    p_preset = sub.add_parser("preset", help="print a scenario preset config")
    p_preset.add_argument("name", nargs="?")

    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return cmd_run(_resolve_config(args.config))
        if args.command == "benchmark":
            return cmd_benchmark(args.which, args.config)
        if args.command == "mesh-info":
            return cmd_mesh_info(args.spec)
        if args.command == "preset":
            if args.name is None:
                print("\n".join(presets.preset_names()))
                return EXIT_OK
            print(serialize_config(presets.preset_config(args.name)), end="")
            return EXIT_OK
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, MeshError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NoConvergenceError, NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RaftsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
