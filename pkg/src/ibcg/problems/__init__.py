from .completion import (MatrixCompletionProblem, load_problem, mc_generate,
                         mc_normalized_error, mc_oracle, save_problem)
from .toy import (ToyCoresetProblem, face_enumeration_optimum, toy_inner_argmin, toy_make,
                  toy_true_hypergradient)

__all__ = [
    "MatrixCompletionProblem", "ToyCoresetProblem", "face_enumeration_optimum",
    "load_problem", "mc_generate", "mc_normalized_error", "mc_oracle", "save_problem",
    "toy_inner_argmin", "toy_make", "toy_true_hypergradient",
]
