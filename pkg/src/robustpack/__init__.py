"""Online 3D bin packing under permutation attacks, plus tabular robust-MDP tools."""

from .attacker import AttackAction, Attacker, attack_episode
from .candidates import CandidateSet, EmptyMaximalSpace, candidates_for, intersection_points
from .geometry import (
    BinState,
    Container,
    FootprintOutOfBounds,
    InfeasiblePlacement,
    Item,
    Placement,
    apply_placement,
    drop_z,
    is_feasible,
)
from .harness import EvalReport, ModeMismatch, evaluate, report
from .instances import Dataset, Instance, InstanceSpec, InvalidSpec, generate, mixture
from .policies import EpisodeResult, Packer, PackingPolicy, run_episode

__version__ = "0.1.0"
