"""Monte Carlo engine: simulation, pathwise transformations, reconstruction
and statistical equivalence tests."""

from .ensemble import PathEnsemble, path_normals, simulate
from .io import read_binary, write_binary, write_csv
from .pathwise import reconstruct, transform_paths
from .stats import StatReport, bonferroni, ks_pvalue, ks_statistic, ks_test, moment_test

__all__ = [
    "PathEnsemble",
    "StatReport",
    "bonferroni",
    "ks_pvalue",
    "ks_statistic",
    "ks_test",
    "moment_test",
    "path_normals",
    "read_binary",
    "reconstruct",
    "simulate",
    "transform_paths",
    "write_binary",
    "write_csv",
]
