import numpy as np
import pytest
import scipy.sparse as sp

from rasddp.model import Instance, StageData, StageRealization


def random_instance(seed, horizon=3, n_outcomes=3, n_core=3, n_rows=2, spread=0.3):
    """Random coupled chain with slack recourse: A [x; s] = b - B x_prev,
    slacks priced high so they act as soft feasibility, never binding the
    recourse assumption."""
    rng = np.random.default_rng(seed)
    n = n_core + n_rows

    def realization(first, j=0):
        a = rng.uniform(0.5, 1.5, size=(n_rows, n_core))
        b = rng.uniform(1.0, 3.0, size=n_rows) + spread * j
        c = rng.uniform(0.5, 2.0, size=n_core)
        a_full = sp.csr_matrix(np.hstack([a, np.eye(n_rows)]))
        b_full = None
        if not first:
            bmat = -rng.uniform(0.1, 0.5, size=(n_rows, n_core))
            b_full = sp.csr_matrix(np.hstack([bmat, np.zeros((n_rows, n_rows))]))
        return StageRealization(
            c=np.concatenate([c, np.full(n_rows, 5.0)]),
            a_mat=a_full,
            b=b,
            lb=np.zeros(n),
            ub=np.full(n, np.inf),
            b_mat=b_full,
        )

    first = realization(True)
    stages = [
        StageData(realizations=[realization(False, j) for j in range(n_outcomes)])
        for _ in range(horizon - 1)
    ]
    return Instance(horizon=horizon, first_stage=first, stages=stages)


def forced_chain_instance(stage_costs):
    """T-stage chain whose stage-t cost is the forced constant per outcome:
    single variable pinned to the outcome's value, no real coupling.

    stage_costs: list over stages t = 2..T of per-outcome cost vectors.
    """
    first = StageRealization(
        c=np.array([0.0]),
        a_mat=sp.csr_matrix(np.array([[1.0]])),
        b=np.array([1.0]),
        lb=np.array([0.0]),
        ub=np.array([np.inf]),
    )
    stages = []
    for costs in stage_costs:
        reals = []
        for v in costs:
            reals.append(
                StageRealization(
                    c=np.array([float(v)]),
                    a_mat=sp.csr_matrix(np.array([[1.0]])),
                    b=np.array([1.0]),
                    lb=np.array([0.0]),
                    ub=np.array([np.inf]),
                    b_mat=sp.csr_matrix(np.array([[0.0]])),
                )
            )
        stages.append(StageData(realizations=reals))
    return Instance(horizon=1 + len(stages), first_stage=first, stages=stages)


@pytest.fixture
def tiny_random_instance():
    return random_instance(seed=3)
