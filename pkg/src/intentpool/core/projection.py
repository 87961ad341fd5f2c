"""Semantic projection of utterances that may lie outside the clustered corpus."""

import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .aggregate import ProjectedTrajectory, project_with
from .embed import EmbedderConfig, embed_texts
from .hac import ClusterAssignment, nearest_centroid_assign
from .trajectory import Speaker, Trajectory, Utterance

logger = logging.getLogger(__name__)


class UtteranceLabeler:
    """
    Maps utterances to cluster labels of a fixed cut. Utterances of the clustered corpus keep
    their assigned label; any other text is embedded once (memoized) and labeled by its
    nearest centroid.
    """

    def __init__(
        self,
        ca: ClusterAssignment,
        corpus: Iterable[Utterance],
        embedder: EmbedderConfig,
        client=None,
    ):
        self.ca = ca
        self.embedder = embedder
        self.client = client
        self.known: Dict[Tuple[str, Speaker], int] = {
            (u.text, u.speaker): ca.labels[u.uid] for u in corpus if u.uid in ca.labels
        }
        self.memo: Dict[str, int] = {}

    @property
    def n_embedded(self) -> int:
        return len(self.memo)

    def _lookup(self, text: str, speaker: Speaker) -> Optional[int]:
        label = self.known.get((text, Speaker(speaker)))
        return self.memo.get(text) if label is None else label

    def label_many(self, items: Sequence[Tuple[str, Speaker]]) -> List[int]:
        items = [(text.strip(), speaker) for text, speaker in items]
        unseen = sorted({text for text, speaker in items if self._lookup(text, speaker) is None})
        if unseen:
            vectors = embed_texts(self.embedder, unseen, client=self.client)
            for text, vector in zip(unseen, vectors):
                self.memo[text] = nearest_centroid_assign(self.ca, vector)
            logger.debug(f"Projected {len(unseen)} new utterances onto k={self.ca.k} centroids")
        return [self._lookup(text, speaker) for text, speaker in items]

    def label(self, text: str, speaker: Speaker) -> int:
        return self.label_many([(text, speaker)])[0]

    def pairs(self, transcript: Sequence[Tuple[str, Optional[str]]]) -> List[Tuple[int, Optional[int]]]:
        """Label (action text, observation text) pairs seen from one seat."""
        items = []
        for action, observation in transcript:
            items.append((action, Speaker.AGENT))
            if observation is not None:
                items.append((observation, Speaker.ENVIRONMENT))
        labels = iter(self.label_many(items))
        return [(next(labels), None if observation is None else next(labels)) for _, observation in transcript]

    def project(self, traj: Trajectory) -> ProjectedTrajectory:
        utterances = [u for step in traj.steps for u in step.utterances()]
        labels = self.label_many([(u.text, u.speaker) for u in utterances])
        by_key = {(u.text, u.speaker): label for u, label in zip(utterances, labels)}
        return project_with(traj, lambda u: by_key[(u.text, u.speaker)])
