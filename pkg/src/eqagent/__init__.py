"""Physics-guided equation discovery toolkit.

Subpackages and modules:
    expressions  - symbolic expression trees (parse/render/evaluate)
    datasets     - benchmark ODE/PDE data generation, noise, storage
    sindy        - sparse dynamics regression with equivariant option
    symmetry     - neural-surrogate Lie generator discovery
    gpsr         - genetic-programming SR with template constraints
    evaluation   - NMSE/MAPE metrics, long-term simulation, judges
    agent        - LLM tool-orchestration loop with record/replay
    cli          - command-line entry points
"""

__version__ = "0.1.0"
