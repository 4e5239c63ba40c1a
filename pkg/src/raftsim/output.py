"""File output: legacy-ASCII VTK polydata and diagnostics CSV.

Both writers format floats with 17 significant digits and fixed column
order, so identical inputs produce byte-identical files.
"""

import numpy as np

from .time_stepper import DiagnosticsRecord


def _fmt(x):
    return format(float(x), ".17g")


def write_vtk(mesh, fields, path):
    """Write a triangle mesh plus named vertex scalars as legacy VTK.

    `fields` maps names to length-N_V arrays; iteration order becomes the
    SCALARS block order.
    """
    lines = ["# vtk DataFile Version 3.0", "raftsim surface fields", "ASCII",
             "DATASET POLYDATA", f"POINTS {mesh.n_vertices} double"]
    for p in mesh.vertices:
        lines.append(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    nt = mesh.n_triangles
    lines.append(f"POLYGONS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    if fields:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in fields.items():
            values = np.asarray(values)
            if values.shape != (mesh.n_vertices,):
                raise ValueError(f"field {name!r} has wrong length")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in values)
    text = "\n".join(lines) + "\n"
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc


def read_vtk_points(path):
    """Vertex coordinates of a file written by write_vtk (round-trip checks)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    for k, line in enumerate(lines):
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            pts = [tuple(map(float, lines[k + 1 + i].split())) for i in range(n)]
            return np.array(pts)
    raise ValueError(f"{path}: no POINTS block")


def write_diagnostics_csv(records, path):
    """One header row plus one row per DiagnosticsRecord, full precision."""
    header = ",".join(DiagnosticsRecord.CSV_FIELDS)
    lines = [header]
    for r in records:
        lines.append(",".join(
            str(getattr(r, name)) if name == "solver_iterations"
            else _fmt(getattr(r, name))
            for name in DiagnosticsRecord.CSV_FIELDS))
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from exc


def write_convergence_csv(rows, path):
    lines = ["level,n_vertices,e_inf,e_1"]
    for r in rows:
        lines.append(f"{r.level},{r.n_vertices},{_fmt(r.e_inf)},{_fmt(r.e_1)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
