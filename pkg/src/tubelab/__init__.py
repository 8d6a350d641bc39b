"""Desk-scale experiments with intrinsic volumes, tubes, GH collapse and Euler calculus."""

from .euclid import (IntrinsicVolumeVector, TubePolynomial, TubeSamplePlan, mc_volume,
                     neighborhood_predicate, steiner_fit, unit_ball_volume)
from .polytope import Polytope, face_lattice, external_angle, intrinsic_volumes_polytope, embed
from .mesh import TriMesh, euler_char, angle_defects, surface_intrinsic_volumes
from .metric import FiniteMetricSpace, gh_exact, gh_lower, gh_upper, sample_space

__version__ = "0.1.0"
