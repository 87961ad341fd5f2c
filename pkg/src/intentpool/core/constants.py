DEFAULT_GAMMA = 0.9
DEFAULT_EPSILON = 0.01
DEFAULT_TAU = 10
DEFAULT_K_MAX = 512

EMBED_DIM = 64
EMBED_NGRAM_RANGE = (2, 4)
# number tokens carry this multiple of the n-gram norm, spread over EMBED_NUMBER_HASHES buckets
EMBED_NUMBER_WEIGHT = 2.0
EMBED_NUMBER_HASHES = 8
EMBED_BATCH_SIZE = 64
EMBED_MODEL = "text-embedding-3-small"
EMBED_RETRY_ATTEMPTS = 3
EMBED_RETRY_INITIAL_WAIT = 0.25  # seconds

# relative tolerance under which two linkage distances count as tied
LINKAGE_TIE_TOLERANCE = 1e-12

CONTEXT_WINDOW = 2
DEFAULT_GAME_COUNT = 1000
EVAL_GAMES_GUESS = 200
EVAL_GAMES_ADVERSARIAL = 25

TRAJECTORY_SUFFIX = ".traj.jsonl"
