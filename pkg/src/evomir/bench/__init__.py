"""Benchmark kernels, reference oracles and test suites."""

from .grid import DiffusionRate, crop_grid, diffusion_reference, diffusion_step, pad_grid
from .kernels import (CORPUS_VERSION, FAMILY, KERNELS, corpus_dir, grid_diffusion_checked,
                      grid_diffusion_padded, kernel_path, load_kernel, sw_kernel_naive,
                      sw_kernel_tuned, tcell_walk)
from .suites import (CaseResult, Check, TestCase, TestSuite, Validator, build_suite,
                     compare_replicates, diffusion_case, gen_grid_suite, gen_sw_suite,
                     load_suite, run_case, sw_case, tcell_case, validate)
from .sw import Alignment, ScoringParams, encode, sw_reference

__all__ = [
    "DiffusionRate", "crop_grid", "diffusion_reference", "diffusion_step", "pad_grid",
    "CORPUS_VERSION", "FAMILY", "KERNELS", "corpus_dir", "grid_diffusion_checked",
    "grid_diffusion_padded", "kernel_path", "load_kernel", "sw_kernel_naive", "sw_kernel_tuned",
    "tcell_walk", "CaseResult", "Check", "TestCase", "TestSuite", "Validator", "build_suite",
    "compare_replicates", "diffusion_case", "gen_grid_suite", "gen_sw_suite", "load_suite",
    "run_case", "sw_case", "tcell_case", "validate", "Alignment", "ScoringParams", "encode",
    "sw_reference",
]
