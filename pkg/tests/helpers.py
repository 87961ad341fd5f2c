import numpy as np

from intentpool.core.embed import EmbeddingMatrix


def record(game_id, steps, reward, task="custom", player="solo"):
    """Log-format record; `steps` is a list of (action, observation-or-None)."""
    return {
        "game_id": game_id,
        "task": task,
        "player": player,
        "reward": reward,
        "steps": [
            {"t": t, "action": a, **({"observation": o} if o is not None else {})}
            for t, (a, o) in enumerate(steps, start=1)
        ],
    }


def matrix(rows, uids=None):
    data = np.asarray(rows, dtype=np.float32)
    if data.ndim == 1:
        data = data[:, None]
    return EmbeddingMatrix(data, tuple(range(len(data))) if uids is None else tuple(uids))


def assignment(labels, d=1):
    """ClusterAssignment from a uid -> label map, with placeholder centroids."""
    from intentpool.core.hac import ClusterAssignment

    k = len(set(labels.values()))
    sizes = tuple(sum(1 for v in labels.values() if v == c) for c in range(k))
    return ClusterAssignment(k, dict(labels), np.zeros((k, d)), sizes, tuple(sorted(labels)))


def guess_records(n_games, seed=0, n_items=16, noise=0.3):
    """Uniform-random guessing games rendered through the template bank."""
    from intentpool.envs import GuessGame
    from intentpool.core.trajectory import Player

    out = []
    rng = np.random.default_rng(seed)
    for i in range(n_games):
        game = GuessGame(seed=seed + i, n_items=n_items, max_turns=6, noise=noise)
        while not game.is_over:
            legal = game.legal_intents(Player.SOLO)
            game.act(Player.SOLO, legal[int(rng.integers(len(legal)))])
        out.extend(traj.to_record() for traj in game.trajectories(f"g{i:04d}"))
    return out


def small_pipeline(out, game="guess-16", games=24):
    """Configuration dict of a pipeline small enough to run end to end in seconds."""
    return {
        "paths": {"out": str(out)},
        "embedder": {"kind": "hash", "d": 16},
        "collect": {"game": game, "games": games},
        "selection": {"k_max": 40, "tau": 2},
        "training": {"epochs": 2, "batch_size": 8},
        "online": {"iterations": 1, "batch_size": 2},
        "eval": {"games": 4},
        "diagnostics": {"n_grid": [16, 64], "replicates": 3},
        "seeds": {"base": 7},
    }
