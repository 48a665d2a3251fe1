"""Independent oracles and random scenario generators shared by the tests."""
import numpy as np

from fairdyn import dist
from fairdyn.dist import SubgroupDistribution as SD
from fairdyn.popmodel import GroupSpec, acceptance_rate, expected_loss, false_positive_rate

ORACLE_POINTS = 100_000


def random_supports(rng, lo=-10.0, width=(1.0, 15.0)):
    lo0 = rng.uniform(lo, lo + 15)
    lo1 = lo0 + rng.uniform(*width)
    hi0 = lo1 + rng.uniform(*width)
    hi1 = hi0 + rng.uniform(*width)
    return lo0, lo1, hi0, hi1


def random_uniform_group(rng, g0=None):
    lo0, lo1, hi0, hi1 = random_supports(rng)
    g0 = rng.uniform(0.1, 0.9) if g0 is None else g0
    return GroupSpec.from_label0(g0, SD.uniform(lo0, hi0), SD.uniform(lo1, hi1))


def random_truncnormal_group(rng, monotone=False):
    lo0, lo1, hi0, hi1 = random_supports(rng)
    if monotone:
        # f0 peaks left of the overlap and f1 right of it
        mu0, mu1 = rng.uniform(lo0 - 3, lo1), rng.uniform(hi0, hi1 + 3)
    else:
        mu0, mu1 = rng.uniform(lo0, hi0), rng.uniform(lo1, hi1)
    s0, s1 = rng.uniform(2, 8), rng.uniform(2, 8)
    return GroupSpec.from_label0(rng.uniform(0.1, 0.9), SD.truncated_normal(mu0, s0, lo0, hi0),
                                 SD.truncated_normal(mu1, s1, lo1, hi1))


def _rate(criterion, g, x):
    return false_positive_rate(g, x) if criterion == "EqOpt" else acceptance_rate(g, x)


def _rate_support(criterion, g):
    return (g.f0.support_lo, g.f0.support_hi) if criterion == "EqOpt" else g.support


def oracle_curve(criterion, ga, gb, theta_b):
    """theta_a on the constraint curve by inverting a tabulated rate of group a.

    The table only brackets each target; bisection inside the bracketing cell
    then makes the pair feasible to rounding, which matters where the rate
    has a kink between nodes.
    """
    theta_b = np.asarray(theta_b, float)
    if criterion == "Simple":
        return theta_b.copy()
    lo, hi = _rate_support(criterion, ga)
    grid = np.linspace(lo, hi, 2 * ORACLE_POINTS + 1)
    desc = _rate(criterion, ga, grid)
    target = _rate(criterion, gb, theta_b)
    # rate is nonincreasing: find the cell with desc[j] >= target >= desc[j+1]
    j = len(grid) - 1 - np.searchsorted(desc[::-1], target, side="left")
    j = np.clip(j, 0, len(grid) - 2)
    left, right = grid[j].copy(), grid[j + 1].copy()
    # cells are about 1e-4 wide; 45 halvings reach rounding
    for _ in range(45):
        mid = 0.5 * (left + right)
        above = _rate(criterion, ga, mid) > target
        left = np.where(above, mid, left)
        right = np.where(above, right, mid)
    return right


def oracle_minimum(criterion, ga, gb, alpha_a, alpha_b, box=None, points=ORACLE_POINTS):
    """(value, theta_a, theta_b) minimizing the weighted loss over a grid of feasible pairs.

    A second grid of the same size zooms into the two cells around the best
    point so kink minima between grid nodes are resolved.
    """
    if box is None:
        if criterion == "Simple":
            lo, hi = min(ga.support[0], gb.support[0]), max(ga.support[1], gb.support[1])
        else:
            lo, hi = gb.support
    else:
        lo, hi = box
    tb = np.linspace(lo, hi, points)
    for _ in range(2):
        ta = oracle_curve(criterion, ga, gb, tb)
        f = alpha_a * expected_loss(ga, ta) + alpha_b * expected_loss(gb, tb)
        k = int(np.argmin(f))
        best = (float(f[k]), float(ta[k]), float(tb[k]))
        tb = np.linspace(tb[max(k - 1, 0)], tb[min(k + 1, len(tb) - 1)], points)
    return best


def simpson_mass(d, panels=10_000):
    x = np.linspace(d.support_lo, d.support_hi, panels + 1)
    y = dist.pdf(d, x)
    h = (d.support_hi - d.support_lo) / panels
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def uniform_visit_case(rng, n, criteria=("Simple", "EqOpt", "StatPar")):
    """A random uniform scenario with a closed-form table and arrivals for visit checks.

    Every other case starts just beside a table threshold so that the run
    has a chance to cross cells.
    """
    from fairdyn.dynamics import DynamicsModel, RetentionFn
    from fairdyn.errors import CaseError
    from fairdyn.fairsolve import uniform_decision_table
    while True:
        ga, gb = random_uniform_group(rng), random_uniform_group(rng)
        crit = criteria[int(rng.integers(len(criteria)))]
        try:
            table = uniform_decision_table(crit, ga, gb)
        except CaseError:
            continue
        break
    r = float(np.exp(rng.uniform(-3, 3)))
    if table.thresholds and n % 2 == 0:
        t = table.thresholds[int(rng.integers(len(table.thresholds)))]
        r = t * rng.uniform(0.5, 0.95) if rng.random() < 0.5 else t * rng.uniform(1.05, 2.0)
    nu = RetentionFn("one_minus_x" if n % 3 else "one_minus_x_squared")
    model = DynamicsModel("accuracy", nu, 5000 * np.sqrt(r), 5000 / np.sqrt(r))
    return crit, ga, gb, table, model


def monotone_density_case(rng):
    """Random truncated-normal groups that both satisfy the monotone-density assumption."""
    from fairdyn.dist import check_assumption1
    from fairdyn.dynamics import DynamicsModel, RetentionFn
    while True:
        ga, gb = random_truncnormal_group(rng, True), random_truncnormal_group(rng, True)
        if check_assumption1(ga.f0, ga.f1).holds and check_assumption1(gb.f0, gb.f1).holds:
            break
    ba, bb = rng.uniform(1000, 10000, 2)
    return ga, gb, DynamicsModel("accuracy", RetentionFn("one_minus_x"), float(ba), float(bb))
