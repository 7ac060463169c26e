import numpy as np
import pytest

from eztc import CostParams, ModelParams, build_tables, solve_free_boundary


@pytest.fixture(scope="session")
def ex1():
    """First numerical example: R,S<1, Merton ratio inside (0,1), m_M < 0."""
    return ModelParams(r=0.0, mu=0.2, sigma=0.65, R=2 / 3, S=1 / 3, delta=0.045)


@pytest.fixture(scope="session")
def ex2():
    """Second numerical example: R,S>1, Merton ratio above 1, well-posed for all costs."""
    return ModelParams(r=0.0, mu=0.1, sigma=0.2, R=2.0, S=4.0, delta=0.1)


@pytest.fixture(scope="session")
def ex1_small_cost():
    """Example-1 market with delta raised so m_M > 0 (small costs well-posed)."""
    return ModelParams(r=0.0, mu=0.2, sigma=0.65, R=2 / 3, S=1 / 3, delta=0.05)


@pytest.fixture(scope="session")
def costs_set1():
    return CostParams(gamma_up=1.3, gamma_down=1.3)        # xi = 1.69


@pytest.fixture(scope="session")
def costs_set2():
    return CostParams(gamma_up=1.625, gamma_down=1.3)      # xi = 2.1125


@pytest.fixture(scope="session")
def costs_set3():
    return CostParams(gamma_up=1.625, gamma_down=1.04)     # xi = 1.69


@pytest.fixture(scope="session")
def ex1_sol(ex1, costs_set1):
    return solve_free_boundary(ex1, costs_set1)


@pytest.fixture(scope="session")
def ex1_tables(ex1_sol, costs_set1):
    return build_tables(ex1_sol, costs_set1)


@pytest.fixture(scope="session")
def ex2_sol(ex2, costs_set1):
    return solve_free_boundary(ex2, costs_set1)


@pytest.fixture(scope="session")
def ex2_tables(ex2_sol, costs_set1):
    return build_tables(ex2_sol, costs_set1)


def random_wellposed_sets(count: int, seed: int, max_crossing: int = 3):
    """Deterministic random well-posed (params, costs) pairs for property tests."""
    from eztc.wellposed import classify, threshold_xi_bar

    rng = np.random.default_rng(seed)
    out = []
    n_crossing = 0
    while len(out) < count:
        low = rng.random() < 0.6
        if low:
            R = rng.uniform(0.3, 0.95)
            S = rng.uniform(0.15, 0.9)
        else:
            R = rng.uniform(1.1, 3.0)
            S = rng.uniform(1.1, 4.5)
        sigma = rng.uniform(0.2, 0.7)
        lam = rng.uniform(0.12, 0.7) * (1 if rng.random() < 0.85 else -1)
        r = rng.uniform(0.0, 0.04)
        delta = rng.uniform(0.01, 0.12)
        try:
            params = ModelParams(r=r, mu=r + lam * sigma, sigma=sigma, R=R, S=S, delta=delta)
        except Exception:
            continue
        if abs(params.q_M) > 2.5 or min(abs(params.q_M), abs(params.q_M - 1.0)) < 0.05:
            continue
        xb = threshold_xi_bar(params)
        u = rng.uniform(0.1, 0.9)
        if params.R < 1.0:
            if not np.isfinite(xb):
                continue
            xi = xb * (1.1 + u)
        else:
            xi = 1.0 + u if not np.isfinite(xb) else 1.0 + (min(xb, 3.0) - 1.0) * u * 0.8
        if xi > 4.0 or xi <= 1.0:
            continue
        costs = CostParams.from_xi(xi)
        if not classify(params, costs).is_well_posed:
            continue
        crossing = params.q_M > 1.0
        if crossing:
            if n_crossing >= max_crossing:
                continue
            n_crossing += 1
        out.append((params, costs))
    return out
