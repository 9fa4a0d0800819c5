"""sampling with rejection of rows that violate row constraints or implications"""
import numpy as np

from specsynth.app import get_config, get_logger
from specsynth.exceptions import AcceptanceTooLow
from specsynth.schema import EncodedTable

# rounds before a low acceptance rate aborts sampling
WARMUP_ROUNDS = 3


def accepted_rows(table, regularizers):
    keep = np.ones(table.n_rows, dtype=bool)
    for reg in regularizers:
        keep &= np.asarray(reg.verify(table), dtype=bool)
    return keep


def rejection_sample(generator, regularizers, n, max_rounds=None, seed=0, min_batch=None, min_acceptance=None):
    """n rows passing every rejectable verifier

    batches of max(n, min_batch) rows are drawn with seeds seed, seed + 1, ...;
    statistical and downstream specifications do not take part
    """
    conf = get_config()
    logger = get_logger()
    max_rounds = conf.get('REJECTION_MAX_ROUNDS', 100) if max_rounds is None else max_rounds
    min_batch = conf.get('REJECTION_MIN_BATCH', 10000) if min_batch is None else min_batch
    min_acceptance = conf.get('REJECTION_MIN_ACCEPTANCE', 1e-4) if min_acceptance is None else min_acceptance
    hard = [r for r in regularizers if r.rejectable]
    if not hard:
        return generator.sample(n, seed)
    batch_size = max(int(n), int(min_batch))
    kept = []
    n_kept = 0
    drawn = 0
    for round_ in range(max_rounds):
        if n_kept >= n:
            break
        batch = generator.sample(batch_size, seed + round_)
        keep = accepted_rows(batch, hard)
        drawn += batch.n_rows
        kept.append(batch.data[keep])
        n_kept += int(keep.sum())
        rate = n_kept / float(drawn)
        logger.debug('sampler.py, round {} acceptance {:.4f}'.format(round_, rate))
        if round_ + 1 >= WARMUP_ROUNDS and rate < min_acceptance and n_kept < n:
            raise AcceptanceTooLow(rate)
    data = np.vstack(kept)[:n] if kept else np.zeros((0, generator.schema.width))
    if data.shape[0] < n:
        logger.warning('sampler.py, only {} of {} rows accepted after {} rounds'.format(data.shape[0], n, max_rounds))
    else:
        logger.info('sampler.py, {} rows accepted from {} drawn'.format(n, drawn))
    return EncodedTable(data, generator.schema)
