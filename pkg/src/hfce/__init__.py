"""Hybrid near/far-field channel estimation for extremely large linear arrays."""

from .geometry import ArrayConfig, SteeringVector, far_field_steering, near_field_steering, steering
from .dictionary import AtomParams, JointDictionary, build_angular, build_joint, build_polar_rings
from .scene import PathComponent, PilotObservation, Scene, sample_scene, synthesize_channel
from .coherence import DiffusionParams, diffusion_integral, diffusion_params, exact_coherence
from .estimators import (Estimate, PdOmpConfig, SupportSet, a_omp, hf_npd_omp, hf_omp, mmse_estimate,
                         p_omp, pd_omp)

__version__ = "0.1.0"
