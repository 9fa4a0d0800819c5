

# possible values: WARN, INFO, DEBUG
LOGGING_LEVEL = 'INFO'

# where run directories are created, one per manifest hash
OUTPUT_PATH = './runs/'

# number of rows of a dataset csv to process
# set to a small number during testing to ingest just a little data quickly
# -1 means process all rows
MAX_ROWS = -1

SEED = 0

# ================= generator ========================= #
# ##################################################### #

NOISE_DIM = 100
HIDDEN_DIMS = (100, 200, 200, 200)
GUMBEL_TEMPERATURE = 1.0

# ================= non-private pretraining =========== #
# ##################################################### #

PRETRAIN_BATCH_SIZE = 15000
PRETRAIN_EPOCHS = 2000
# marginals per update, an epoch is one pass over the workload
MARGINAL_GROUP_SIZE = 16
LEARNING_RATE = 1e-3
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
# with fewer than 3 columns fall back to pairs instead of failing
WORKLOAD_DEGRADE = False

# ================= private pretraining =============== #
# ##################################################### #

DP_BATCH_SIZE = 1000
# refit epochs after every measurement
DP_EPOCHS = 1000
DP_MAX_ROUNDS = 1000
# spend leftover budget on one last measurement round
DP_SPEND_REMAINDER = True

# ================= fine tuning ======================= #
# ##################################################### #

FINETUNE_EPOCHS = 200
FINETUNE_BATCH_SIZE = 15000
# weight for specifications without PARAM or --lambda
DEFAULT_SPEC_WEIGHT = 1.0

STAT_MARGIN = 1e-6
STAT_EPSILON = 1e-12
# statistical verifier tolerance, relative to the magnitude of the compared values
STAT_TOLERANCE = 0.05

SURROGATE_LR = 0.1
SURROGATE_EPOCHS = 15
SURROGATE_BATCH_SIZE = 256
SURROGATE_EXCLUDE_PROTECTED = False

TUNE_FOLDS = 5
# default validates only on the first split
TUNE_ALL_FOLDS = False

# ================= sampling and evaluation =========== #
# ##################################################### #

N_SAMPLES = 10000
REJECTION_MIN_BATCH = 10000
REJECTION_MAX_ROUNDS = 100
REJECTION_MIN_ACCEPTANCE = 1e-4

EVAL_REG = 1e-3
EVAL_STEPS = 500
EVAL_LR = 0.5
# retrainings and samples per retraining in the repeat harness
REPEATS = 3
SAMPLES = 3
# held out share of the data when no test csv is given, 1 / TEST_FOLDS
TEST_FOLDS = 5
