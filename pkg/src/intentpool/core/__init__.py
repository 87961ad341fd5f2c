from .aggregate import (
    AdvantageMode,
    AdvantageSet,
    AggregationScope,
    IntentionKey,
    RewardTable,
    assign_advantages,
    build_reward_table,
    discount_rewards,
    project_trajectory,
)
from .embed import EmbedderConfig, EmbeddingMatrix, embed_corpus, embed_texts, load_matrix, save_matrix
from .errors import ArtifactError, ComputationError, IntentPoolError, ValidationError
from .granularity import select_k, split_score, split_score_upper_bound, sweep_split_scores
from .hac import ClusterAssignment, Dendrogram, build_dendrogram, cut_dendrogram, nearest_centroid_assign
from .metrics import calinski_harabasz, combined_score, davies_bouldin, silhouette_score
from .trajectory import Trajectory, TrajectorySet, parse_trajectories, validate_trajectory, write_trajectories
