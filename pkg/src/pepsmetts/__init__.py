"""PEPS-METTS and purification thermal-state toolkit for 2D spin models."""

__version__ = "0.1.0"

from .evolution import NtuOpts, TwoSiteGate, evolve, make_gate, make_schedule
from .lattice import PepsState, apply_projector, product_state, transfer_tensor
from .models import ModelSpec, tfim
from .observables import correlator_row, expect_site, norm_sq
from .purification import evolve_purification, init_infinite_temperature
from .sampler import ReplayableRng, Sampler, metts_step, sample_configuration
from .zipper import BoundaryMps, boundaries_all_rows, trivial_boundary, zip_row

__all__ = [
    "BoundaryMps",
    "ModelSpec",
    "NtuOpts",
    "PepsState",
    "ReplayableRng",
    "Sampler",
    "TwoSiteGate",
    "apply_projector",
    "boundaries_all_rows",
    "correlator_row",
    "evolve",
    "evolve_purification",
    "expect_site",
    "init_infinite_temperature",
    "make_gate",
    "make_schedule",
    "metts_step",
    "norm_sq",
    "product_state",
    "sample_configuration",
    "tfim",
    "transfer_tensor",
    "trivial_boundary",
    "zip_row",
]
