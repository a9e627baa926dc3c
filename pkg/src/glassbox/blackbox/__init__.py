"""Tree-ensemble and polynomial-kernel black boxes with HDMR extraction."""

from .kernels import (
    AnovaKernelMachine,
    CapacityError,
    KernelError,
    KernelMachine,
    anova_kernel_machine,
    kernel_hdmr,
    train_kernel_machine,
)
from .smoothing import DomainError, fourier_smooth
from .tree_hdmr import RidgeCombination, combine_ensembles, tree_hdmr
from .trees import RegressionTree, TreeEnsemble, TreeError, TreeSum, train_gbr, train_rf

__all__ = [
    "AnovaKernelMachine",
    "CapacityError",
    "DomainError",
    "KernelError",
    "KernelMachine",
    "RegressionTree",
    "RidgeCombination",
    "TreeEnsemble",
    "TreeError",
    "TreeSum",
    "anova_kernel_machine",
    "combine_ensembles",
    "fourier_smooth",
    "kernel_hdmr",
    "train_gbr",
    "train_kernel_machine",
    "train_rf",
    "tree_hdmr",
]
