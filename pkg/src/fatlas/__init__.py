"""Uniformly thick triangulations of surfaces and their Alexander maps."""

from .simplex import SimplicialComplex, thickness, thickness_report
from .surfaces import flat_torus, from_spec, paraboloid, sphere, torus
from .triangulate import PipelineConfig, fat_triangulation_pipeline
from .alexander import assemble_qm_map, dilatation_report

__all__ = [
    "SimplicialComplex",
    "thickness",
    "thickness_report",
    "sphere",
    "torus",
    "flat_torus",
    "paraboloid",
    "from_spec",
    "PipelineConfig",
    "fat_triangulation_pipeline",
    "assemble_qm_map",
    "dilatation_report",
]
