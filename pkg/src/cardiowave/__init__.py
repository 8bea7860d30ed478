"""Coupled conduction-network / myocardium activation solver.

Subpackages:

* ``mesh``, ``assembly``, ``fileio`` - simplicial meshes, P1 FEM assembly,
  file formats (custom text, legacy VTK, CSV).
* ``network`` - conduction-network graph activation (multi-source shortest
  paths with block support and source provenance).
* ``eikonal`` - anisotropic Eikonal-diffusion solver with active-stimulus
  pseudo-time stepping (novel) or permanent stimuli (classic).
* ``coupling`` - junction registry, classification and the bidirectional
  fixed-point loop capturing re-entrant activation.
* ``config``, ``runner``, ``cli`` - scenario-driven front end.
"""

from .coupling import PmjRegistry, PmjType, classify_pmjs, couple, match_pmjs
from .eikonal import (
    ConductivityModel,
    MuscleStimulusSet,
    SolverOptions,
    Stimulus,
    build_conductivity,
    solve,
)
from .mesh import FiberField, SimplicialMesh, axis_aligned_fibers, build_structured_slab
from .network import (
    ConductionNetwork,
    NetworkSourceSet,
    apply_blocks,
    build_synthetic_tree,
    solve_network,
)
from .runner import RunSummary, run_scenario, summarize

__version__ = "0.1.0"
