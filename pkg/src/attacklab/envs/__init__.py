from .trees import (
    InvalidIndices,
    TooLarge,
    TreeConstruction,
    TreeGame,
    TreeGameSpec,
    build_example1,
    build_example2,
    build_random_tree,
)
from .goalgather import GoalGather, GridTeamSpec

__all__ = [
    "InvalidIndices",
    "TooLarge",
    "TreeConstruction",
    "TreeGame",
    "TreeGameSpec",
    "build_example1",
    "build_example2",
    "build_random_tree",
    "GoalGather",
    "GridTeamSpec",
]
