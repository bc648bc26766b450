import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fatlas.meshio import MeshFormatError, read_mesh, read_obj, read_off, write_obj, write_off
from fatlas.simplex import SimplicialComplex
from fatlas.triangulate import PipelineConfig, fat_triangulation_pipeline
from fatlas.surfaces import flat_torus
from oracles import octahedron, tetrahedron_boundary


@pytest.mark.parametrize("writer,reader,suffix", [(write_off, read_off, ".off"),
                                                  (write_obj, read_obj, ".obj")])
@pytest.mark.parametrize("shape", [octahedron, tetrahedron_boundary])
def test_roundtrip(tmp_path, writer, reader, suffix, shape):
    cx = SimplicialComplex.from_faces(*shape())
    path = tmp_path / f"m{suffix}"
    writer(path, cx)
    back = reader(path)
    assert np.array_equal(back.vertices, cx.vertices)
    assert back.simplices == cx.simplices
    assert read_mesh(path).simplices == cx.simplices


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=18, max_size=18))
def test_coordinates_are_lossless(tmp_path_factory, coords):
    verts = np.asarray(coords).reshape(6, 3)
    cx = SimplicialComplex.from_faces(verts, octahedron()[1])
    path = tmp_path_factory.mktemp("h") / "m.off"
    write_off(path, cx)
    assert np.array_equal(read_off(path).vertices, verts)


def test_two_dimensional_vertices_are_padded(tmp_path):
    cx = SimplicialComplex.from_faces(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [[0, 1, 2]])
    write_off(tmp_path / "t.off", cx)
    assert np.array_equal(read_off(tmp_path / "t.off").vertices[:, 2], np.zeros(3))


def test_periodic_seams_flagged(tmp_path):
    r = fat_triangulation_pipeline(flat_torus(), PipelineConfig(eps=0.25, seed=0))
    write_off(tmp_path / "t.off", r.thickened)
    text = (tmp_path / "t.off").read_text()
    seams = [tuple(map(int, l.split()[2:])) for l in text.splitlines()
             if l.startswith("# seam_duplicate")]
    back = read_off(tmp_path / "t.off")
    assert seams and len(back) == len(r.thickened)
    assert len(back.vertices) == len(r.thickened.vertices) + len(seams)
    for copy, orig in seams:
        d = np.mod(back.vertices[copy, :2] - back.vertices[orig, :2], 1.0)
        assert np.allclose(np.minimum(d, 1 - d), 0, atol=1e-9)
    # every exported triangle is a single unwrapped piece, so edges stay short
    cells = back.cells()
    assert np.linalg.norm(cells[:, 1] - cells[:, 0], axis=1).max() < 0.5


@pytest.mark.parametrize("text", [
    "",
    "PLY\n",
    "OFF\n3 1 0\n0 0 0\n1 0 0\n",
    "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n",
    "OFF\n3 1 0\n0 0 0\n1 0 x\n0 1 0\n3 0 1 2\n",
    "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 0 1\n",
])
def test_malformed_off(tmp_path, text):
    p = tmp_path / "bad.off"
    p.write_text(text)
    with pytest.raises(MeshFormatError):
        read_off(p)


def test_malformed_obj(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nf 1 2 3\n")
    with pytest.raises(MeshFormatError):
        read_obj(p)
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 3 4\n")
    with pytest.raises(MeshFormatError):
        read_obj(p)


def test_obj_slashes_and_header_on_one_line(tmp_path):
    p = tmp_path / "m.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n")
    assert read_obj(p).simplices == ((0, 1, 2),)
    q = tmp_path / "m.off"
    q.write_text("OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    assert len(read_off(q)) == 1


def test_missing_file(tmp_path):
    with pytest.raises(MeshFormatError):
        read_mesh(tmp_path / "absent.off")
