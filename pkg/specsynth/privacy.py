"""zCDP accounting and private pretraining

rounds select a marginal with the exponential mechanism, measure it with the
gaussian mechanism and refit the generator on every noisy measurement so far;
per round budgets are annealed by how much the selected marginal moved
"""
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from specsynth.app import get_config, get_logger
from specsynth.exceptions import InvalidBudget, BudgetExhausted
from specsynth.marginals import marginal, marginal_workload, MarginalVector, ALL_3WAY
from specsynth.pretrain import Pretrainer, PretrainConfig, measure_targets
from specsynth.utils import atomic_path

SQRT2 = math.sqrt(2.0)
EXPECTED_ABS = math.sqrt(2.0 / math.pi)
# share of a round's budget spent on selection, the rest on measurement
SELECT_SHARE = 0.1


def eps_delta_to_rho(epsilon, delta):
    """largest rho with rho + 2 sqrt(rho ln(1/delta)) <= epsilon, by bisection"""
    if not (epsilon > 0):
        raise InvalidBudget('epsilon must be positive, got {}'.format(epsilon))
    if not (0.0 < delta < 1.0):
        raise InvalidBudget('delta must be in (0, 1), got {}'.format(delta))
    if math.isinf(epsilon):
        return math.inf
    log_term = math.log(1.0 / delta)
    lo, hi = 0.0, float(epsilon)
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if mid + 2.0 * math.sqrt(mid * log_term) <= epsilon:
            lo = mid
        else:
            hi = mid
    return lo


def gaussian_cost(sigma):
    return 1.0 / (2.0 * sigma * sigma)


def exponential_cost(gamma):
    return gamma * gamma / 8.0


@dataclass
class LedgerRound:
    round: int
    gamma: float
    sigma: float
    spec: str
    rho_cost: float
    cumulative_rho: float


@dataclass
class PrivacyLedger:
    epsilon: float
    delta: float
    total_rho: float = None
    spent: float = 0.0
    rounds: list = field(default_factory=list)

    def __post_init__(self):
        if self.total_rho is None:
            self.total_rho = eps_delta_to_rho(self.epsilon, self.delta)

    @property
    def remaining(self):
        return self.total_rho - self.spent

    @property
    def unlimited(self):
        return math.isinf(self.total_rho)

    def charge(self, cost):
        if cost < 0:
            raise InvalidBudget('negative privacy cost {}'.format(cost))
        if self.spent + cost > self.total_rho:
            raise BudgetExhausted('cost {:.3e} exceeds remaining rho {:.3e}'.format(cost, self.remaining))
        self.spent += cost

    def record(self, gamma, sigma, spec_label, cost):
        self.rounds.append(LedgerRound(len(self.rounds), gamma, sigma, spec_label, cost, self.spent))

    def audit(self):
        """round costs recomputed from (gamma, sigma) must stay within the total budget"""
        total = sum(exponential_cost(r.gamma) + gaussian_cost(r.sigma) for r in self.rounds)
        if total > self.total_rho * (1.0 + 1e-9) or self.spent > self.total_rho:
            raise BudgetExhausted('ledger audit failed: spent {:.6e} of {:.6e}'.format(total, self.total_rho))
        return total

    def to_frame(self):
        return pd.DataFrame([r.__dict__ for r in self.rounds],
                            columns=['round', 'gamma', 'sigma', 'spec', 'rho_cost', 'cumulative_rho'])

    def to_csv(self, path):
        with atomic_path(path) as tmp:
            self.to_frame().to_csv(tmp, index=False)


def gaussian_measure(table, spec, sigma, rng, ledger=None):
    """counts of one marginal plus N(0, sigma^2) per cell, l2 sensitivity 1"""
    cost = gaussian_cost(sigma)
    if ledger is not None:
        ledger.charge(cost)
    counts = marginal(table, spec, normalize=False).values
    return MarginalVector(counts + rng.normal(0.0, sigma, size=counts.shape), False), cost


def exp_select(candidates, scores, gamma, rng, ledger=None):
    """candidate drawn with probability proportional to exp(gamma * score / 2)"""
    cost = exponential_cost(gamma)
    if ledger is not None:
        ledger.charge(cost)
    logits = 0.5 * gamma * np.asarray(scores, dtype=np.float64)
    logits -= logits.max()
    weights = np.exp(logits)
    index = rng.choice(len(candidates), p=weights / weights.sum())
    return candidates[index], cost


def anneal(current, previous, sigma, gamma, n_r):
    """next (sigma, gamma) from how far the selected marginal moved against the expected noise

    both marginals are in count units; the change per round is capped at sqrt(2)
    """
    xi = float(np.abs(np.asarray(current) - np.asarray(previous)).sum()) / (EXPECTED_ABS * sigma * n_r)
    if xi <= 1.0:
        factor = max(xi, 1.0 / SQRT2)
    else:
        factor = min(xi, SQRT2)
    return factor * sigma, gamma / factor


@dataclass
class Measurement:
    spec: object
    noisy: MarginalVector
    sigma: float

    def target(self):
        return self.spec, self.noisy.clamped()


class PrivateTrainer(object):
    """select, measure, refit and anneal until the budget is spent"""

    def __init__(self, generator, ledger, config, workload=None, max_rounds=None, spend_remainder=None):
        conf = get_config()
        self.generator = generator
        self.ledger = ledger
        self.config = config
        self.workload = workload
        self.max_rounds = conf.get('DP_MAX_ROUNDS', 1000) if max_rounds is None else max_rounds
        self.spend_remainder = conf.get('DP_SPEND_REMAINDER', True) if spend_remainder is None else spend_remainder
        self.logger = get_logger()
        self.measurements = []

    def model_counts(self, spec, n_rows, seed):
        """marginal of a fresh generated sample, scaled to the public row count"""
        sample = self.generator.sample(self.config.batch_size, seed)
        return marginal(sample, spec).values * n_rows

    def scores(self, table, sigma, seed):
        # N is treated as public
        n_rows = table.n_rows
        true_counts = [marginal(table, spec, normalize=False).values for spec in self.workload]
        sample = self.generator.sample(self.config.batch_size, seed)
        out = []
        for spec, truth in zip(self.workload, true_counts):
            model = marginal(sample, spec).values * n_rows
            err = np.abs(model - truth).sum() - EXPECTED_ABS * sigma * spec.domain_size
            out.append(max(err, 0.0))
        return out

    def refit(self, seed):
        config = PretrainConfig(batch_size=self.config.batch_size, epochs=self.config.epochs,
                                group_size=self.config.group_size, lr=self.config.lr,
                                betas=self.config.betas, eps=self.config.eps, seed=seed)
        Pretrainer(self.generator, config).fit([m.target() for m in self.measurements])

    def run(self, table):
        if self.workload is None:
            self.workload = marginal_workload(table.schema, ALL_3WAY, get_config().get('WORKLOAD_DEGRADE', False))
        if self.ledger.unlimited:
            return self.run_exact(table)
        rng = np.random.default_rng(self.config.seed)
        rho = self.ledger.total_rho
        planned = 16 * table.schema.n_features
        sigma = math.sqrt(planned / (2.0 * (1.0 - SELECT_SHARE) * rho))
        gamma = math.sqrt(8.0 * SELECT_SHARE * rho / planned)
        self.logger.info('privacy.py, rho {:.4e}, initial sigma {:.3f} gamma {:.4e}'.format(rho, sigma, gamma))
        final = False
        t = 0
        while t < self.max_rounds:
            cost = exponential_cost(gamma) + gaussian_cost(sigma)
            if self.ledger.remaining < cost:
                if not self.spend_remainder or self.ledger.remaining <= 0:
                    break
                budget = self.ledger.remaining * (1.0 - 1e-9)
                gamma = math.sqrt(8.0 * SELECT_SHARE * budget)
                sigma = math.sqrt(1.0 / (2.0 * (1.0 - SELECT_SHARE) * budget))
                final = True
            try:
                sigma, gamma = self.round(table, t, sigma, gamma, rng, final)
            except BudgetExhausted as e:
                self.logger.info('privacy.py, stopping after {} rounds: {}'.format(t, e))
                break
            self.ledger.audit()
            t += 1
            if final:
                break
        self.logger.info('privacy.py, {} rounds, spent rho {:.4e} of {:.4e}'.format(
            len(self.ledger.rounds), self.ledger.spent, self.ledger.total_rho))
        return self.generator, self.ledger, self.measurements

    def round(self, table, t, sigma, gamma, rng, final=False):
        seed = int(rng.integers(2 ** 31))
        scores = self.scores(table, sigma, seed)
        # both mechanisms are charged before anything is released
        self.ledger.charge(exponential_cost(gamma) + gaussian_cost(sigma))
        spec, select_cost = exp_select(self.workload, scores, gamma, rng)
        noisy, measure_cost = gaussian_measure(table, spec, sigma, rng)
        self.ledger.record(gamma, sigma, spec.label(table.schema), select_cost + measure_cost)
        self.measurements.append(Measurement(spec, noisy, sigma))
        previous = self.model_counts(spec, table.n_rows, seed + 1)
        self.refit(seed + 2)
        if final:
            return sigma, gamma
        current = self.model_counts(spec, table.n_rows, seed + 1)
        self.logger.debug('privacy.py, round {} selected {}'.format(t, spec.label(table.schema)))
        return anneal(current, previous, sigma, gamma, spec.domain_size)

    def run_exact(self, table):
        """infinite epsilon: every workload marginal measured exactly at no cost"""
        self.logger.info('privacy.py, epsilon is infinite, measuring the workload without noise')
        for spec, target in measure_targets(table, self.workload):
            self.measurements.append(Measurement(spec, MarginalVector(target.values * table.n_rows, False), 0.0))
        self.refit(self.config.seed)
        return self.generator, self.ledger, self.measurements


def dp_pretrain(generator, table, ledger, config, workload=None, max_rounds=None, spend_remainder=None):
    trainer = PrivateTrainer(generator, ledger, config, workload, max_rounds, spend_remainder)
    return trainer.run(table)
