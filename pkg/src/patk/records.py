"""Per-iteration run records shared by the variational and network solvers."""

from dataclasses import dataclass, field


@dataclass
class RunRecord:
    """History of one iterative reconstruction.

    ``iteration`` holds the solver-iteration index of each recorded entry;
    the remaining lists are parallel to it.  ``objective`` holds the
    solver's own objective value (TV-regularized least squares for the
    primal-dual solver, the training loss for the network engine).  Metric
    entries are ``nan`` at iterations where they were not evaluated.
    """

    iteration: list[int] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    rel_change: list[float] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)
    ergodic_objective: list[float] = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False
    selected_index: int | None = None
