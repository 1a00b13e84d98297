"""Online learning of diverse document rankings over tree metric spaces."""

from ._kernels import backend
from .tree import DocTree, build_balanced_tree, build_flat_tree
from .user_model import (MixtureUser, TableUser, TreeNetwork, ValidationError,
                         sample_user)

__all__ = [
    "DocTree",
    "MixtureUser",
    "TableUser",
    "TreeNetwork",
    "ValidationError",
    "backend",
    "build_balanced_tree",
    "build_flat_tree",
    "sample_user",
]
