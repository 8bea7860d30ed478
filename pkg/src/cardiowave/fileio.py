"""File formats: custom text meshes, legacy ASCII VTK, CSV field dumps.

Custom text mesh format::

    dim nv nc
    <nv coordinate lines>
    <nc cell lines of 0-based vertex indices>

Legacy VTK unstructured grids are supported for cell types line (3),
triangle (5) and tetrahedron (10), with optional POINT_DATA scalars.
"""

import numpy as np

from .mesh import MeshError, SimplicialMesh

__all__ = [
    "ParseError",
    "load_mesh",
    "save_mesh_text",
    "read_vtk",
    "write_vtk",
    "write_field_csv",
]

_VTK_CELL_TYPE = {1: 3, 2: 5, 3: 10}
_VTK_DIM = {v: k for k, v in _VTK_CELL_TYPE.items()}


class ParseError(ValueError):
    """Malformed input file; message carries the file path and line."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def load_mesh(path, format="custom-text"):
    """Load and validate a mesh in the given format."""
    if format == "custom-text":
        return _load_mesh_text(path)
    if format == "legacy-vtk-ascii":
        mesh, _ = read_vtk(path)
        return mesh
    raise ValueError(f"unknown mesh format {format!r}")


def _load_mesh_text(path):
    with open(path) as fh:
        lines = fh.readlines()
    rows = [
        (k + 1, ln.split())
        for k, ln in enumerate(lines)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not rows:
        raise ParseError(path, 1, "empty mesh file")
    lineno, header = rows[0]
    if len(header) != 3:
        raise ParseError(path, lineno, "header must be 'dim nv nc'")
    try:
        dim, nv, nc = (int(t) for t in header)
    except ValueError:
        raise ParseError(path, lineno, "non-integer header field") from None
    if len(rows) != 1 + nv + nc:
        raise ParseError(
            path, lineno, f"expected {nv} coordinate and {nc} cell lines"
        )
    vertices = np.empty((nv, 0))
    coords = []
    for lineno, toks in rows[1 : 1 + nv]:
        try:
            coords.append([float(t) for t in toks])
        except ValueError:
            raise ParseError(path, lineno, "bad coordinate") from None
    widths = {len(c) for c in coords}
    if len(widths) != 1:
        raise ParseError(path, rows[1][0], "inconsistent coordinate width")
    vertices = np.asarray(coords)
    cells = []
    for lineno, toks in rows[1 + nv :]:
        try:
            cell = [int(t) for t in toks]
        except ValueError:
            raise ParseError(path, lineno, "bad cell index") from None
        if len(cell) != dim + 1:
            raise ParseError(path, lineno, f"cell must have {dim + 1} vertices")
        cells.append(cell)
    try:
        return SimplicialMesh(dim=dim, vertices=vertices, cells=np.asarray(cells))
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from exc


def save_mesh_text(mesh, path):
    with open(path, "w") as fh:
        fh.write(f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells}\n")
        for v in mesh.vertices:
            fh.write(" ".join(f"{x:.17g}" for x in v) + "\n")
        for c in mesh.cells:
            fh.write(" ".join(str(i) for i in c) + "\n")


def _vtk_tokens(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            for tok in line.split():
                yield lineno, tok


def read_vtk(path):
    """Read a legacy ASCII VTK unstructured grid.

    Returns (mesh, point_data) where point_data maps scalar names to
    arrays of length nv.
    """
    it = _vtk_tokens(path)

    def take(n):
        out = []
        lineno = 1
        for _ in range(n):
            try:
                lineno, tok = next(it)
            except StopIteration:
                raise ParseError(path, lineno, "unexpected end of file") from None
            out.append(tok)
        return lineno, out

    def expect(keyword):
        lineno, (tok,) = take(1)
        if tok.upper() != keyword:
            raise ParseError(path, lineno, f"expected {keyword}, found {tok}")
        return lineno

    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# vtk DataFile"):
        raise ParseError(path, 1, "missing VTK header")
    # header comment line tokens are consumed implicitly by keyword scan
    tokens = []
    for lineno, tok in it:
        tokens.append((lineno, tok))
        if tok.upper() == "DATASET":
            break
    else:
        raise ParseError(path, 1, "missing DATASET keyword")
    lineno, (kind,) = take(1)
    if kind.upper() != "UNSTRUCTURED_GRID":
        raise ParseError(path, lineno, f"unsupported dataset {kind}")
    expect("POINTS")
    lineno, (nv_tok, _dtype) = take(2)
    nv = int(nv_tok)
    lineno, coord_toks = take(3 * nv)
    points = np.array([float(t) for t in coord_toks]).reshape(nv, 3)
    expect("CELLS")
    lineno, (nc_tok, sz_tok) = take(2)
    nc, total = int(nc_tok), int(sz_tok)
    lineno, cell_toks = take(total)
    raw = [int(t) for t in cell_toks]
    cells = []
    pos = 0
    for _ in range(nc):
        n = raw[pos]
        cells.append(raw[pos + 1 : pos + 1 + n])
        pos += 1 + n
    expect("CELL_TYPES")
    lineno, (nt_tok,) = take(1)
    lineno, type_toks = take(int(nt_tok))
    types = {int(t) for t in type_toks}
    if len(types) != 1:
        raise ParseError(path, lineno, "mixed cell types are not supported")
    ctype = types.pop()
    if ctype not in _VTK_DIM:
        raise ParseError(path, lineno, f"unsupported VTK cell type {ctype}")
    dim = _VTK_DIM[ctype]
    try:
        mesh = SimplicialMesh(dim=dim, vertices=points, cells=np.asarray(cells))
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from exc
    point_data = {}
    rest = [tok for _, tok in it]
    k = 0
    while k < len(rest):
        if rest[k].upper() == "SCALARS":
            name = rest[k + 1]
            ncomp = 1
            if k + 3 < len(rest) and rest[k + 3].isdigit():
                ncomp = int(rest[k + 3])
                k += 4
            else:
                k += 3
            if rest[k].upper() == "LOOKUP_TABLE":
                k += 2
            vals = [float(t) for t in rest[k : k + nv * ncomp]]
            point_data[name] = np.asarray(vals)
            k += nv * ncomp
        else:
            k += 1
    return mesh, point_data


def write_vtk(mesh, path, point_data=None, title="cardiowave output"):
    """Write a mesh (and optional nodal scalars) as legacy ASCII VTK."""
    ctype = _VTK_CELL_TYPE[mesh.dim]
    nl = mesh.dim + 1
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for v in mesh.vertices3:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        fh.write(f"CELLS {mesh.n_cells} {mesh.n_cells * (nl + 1)}\n")
        for c in mesh.cells:
            fh.write(f"{nl} " + " ".join(str(i) for i in c) + "\n")
        fh.write(f"CELL_TYPES {mesh.n_cells}\n")
        for _ in range(mesh.n_cells):
            fh.write(f"{ctype}\n")
        if point_data:
            fh.write(f"POINT_DATA {mesh.n_vertices}\n")
            for name, values in point_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for x in values:
                    fh.write(f"{x:.9g}\n")


def write_field_csv(mesh, values_ms, path):
    """Write per-vertex times (already in ms) as `vertex,x,y,z,u_ms`."""
    with open(path, "w") as fh:
        fh.write("vertex,x,y,z,u_ms\n")
        for k, (v, u) in enumerate(zip(mesh.vertices3, values_ms)):
            fh.write(f"{k},{v[0]:.17g},{v[1]:.17g},{v[2]:.17g},{u:.9g}\n")
